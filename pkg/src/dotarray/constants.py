"""Unit conventions and physical constants used throughout the package.

Every quantity in this package is expressed in a fixed unit system:
energies in meV, voltages in mV, lengths in nm, temperatures in K.
With these units the electron charge is numerically 1 (1 mV of
potential shifts an electron level by 1 meV), which keeps lever arms
dimensionless and gate algebra free of unit factors.
"""

# Boltzmann constant, meV / K
K_B = 0.0861733

# Planck constant expressed as the microwave conversion, ueV per GHz
UEV_PER_GHZ = 4.135667

# Point-charge Coulomb prefactor e^2 / (4 pi eps_r eps_0) in silicon, meV * nm
COULOMB_NM = 123.0

# Electron charge, C (only needed by the capacitance model, which works
# in SI internally and converts back to meV)
E_CHARGE = 1.602176634e-19

# aF * mV -> C
AF_MV_TO_COULOMB = 1e-21

# J -> meV
JOULE_TO_MEV = 1.0 / (E_CHARGE * 1e-3)


def kt_mev(temperature_k: float) -> float:
    """Thermal energy k_B * T in meV."""
    return K_B * temperature_k


def ghz_to_uev(f_ghz: float) -> float:
    """Convert a rate in GHz to an energy in ueV."""
    return f_ghz * UEV_PER_GHZ


def uev_to_ghz(e_uev: float) -> float:
    """Convert an energy in ueV to a rate in GHz."""
    return e_uev / UEV_PER_GHZ
