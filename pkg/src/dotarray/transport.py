"""Linear-response conductance through the array at temperature T.

Sequential tunneling in the weak-coupling limit: golden-rule rates
between N and N-1 eigenstates weighted with equilibrium occupations.
Energies enter grand-canonically (E - N E_F); with that convention the
single-dot limit reproduces the standard rate-equation lineshape
exactly. Only spin-up tunneling is summed and the result carries an
overall factor two from spin-inversion symmetry; the output is the
dimensionless G / g_T, so the bare lead rate never enters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .basis import UP, SectorLabel, creation_map
from .constants import kt_mev
from .errors import SectorError
from .solver import SpectrumSet

DEFAULT_CUTOFF_FLOOR_MEV = 10.0
DEFAULT_CUTOFF_KT = 20.0


def default_cutoff(temperature_k: float) -> float:
    """Thermal retention window above the grand ground state, meV."""
    return max(DEFAULT_CUTOFF_KT * kt_mev(temperature_k), DEFAULT_CUTOFF_FLOOR_MEV)


@dataclass(frozen=True)
class TransportConfig:
    """Temperature, lead attachment and truncation for conductance."""

    temperature: float  # K
    lead_sites_left: tuple
    lead_sites_right: tuple
    fermi_level: float = -80.0
    state_energy_cutoff: float | None = None  # meV; None -> default_cutoff(T)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        left, right = set(self.lead_sites_left), set(self.lead_sites_right)
        if not left or not right:
            raise ValueError("lead site sets must be non-empty")
        if left & right:
            raise ValueError("lead site sets must be disjoint")

    @property
    def cutoff(self) -> float:
        if self.state_energy_cutoff is not None:
            return self.state_energy_cutoff
        return default_cutoff(self.temperature)

    @staticmethod
    def for_params(params, temperature, **kw) -> "TransportConfig":
        """Default config: leads on the left and right lattice columns."""
        return TransportConfig(
            temperature=temperature,
            lead_sites_left=tuple(params.column_sites(0)),
            lead_sites_right=tuple(params.column_sites(params.cols - 1)),
            fermi_level=params.fermi_level,
            **kw,
        )


@dataclass(frozen=True)
class ConductanceValue:
    """Dimensionless linear-response conductance G / g_T."""

    g_over_gt: float

    def __post_init__(self):
        if self.g_over_gt < 0:
            raise ValueError("conductance must be >= 0")


def boltzmann_weights(spectra: SpectrumSet, temperature: float, cutoff: float) -> dict:
    """Equilibrium occupation of every retained state.

    Returns {(label, state_index): probability}; energies are measured
    grand-canonically before weighting and states above ``cutoff`` over
    the ground are dropped. Weights sum to one.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    kt = kt_mev(temperature)
    labels, idx, grand = spectra.grand_energies()
    if len(grand) == 0:
        return {}
    g0 = grand.min()
    kept = np.nonzero(grand - g0 <= cutoff)[0]
    w = np.exp(-(grand[kept] - g0) / kt)
    w /= w.sum()
    return {(labels[pos], idx[pos]): float(weight) for pos, weight in zip(kept, w)}


def tunneling_matrix_element(
    basis_n, psi_n, basis_nm1, psi_nm1, sites
) -> float:
    """Sum over ``sites`` of |<psi_n| c^dag_{site,up} |psi_nm1>|^2.

    The two bases must differ by one spin-up particle.
    """
    ln, lm = basis_n.label, basis_nm1.label
    if ln.n_particles != lm.n_particles + 1 or ln.sz2 != lm.sz2 + 1:
        raise SectorError(f"incompatible sectors {ln} <- {lm} for spin-up addition")
    total = 0.0
    for j in sites:
        rows, cols, signs = creation_map(basis_nm1, basis_n, j, UP)
        amp = float(np.dot(psi_n[rows] * signs, psi_nm1[cols]))
        total += amp * amp
    return total


class _EdgeOperators:
    """Cached sparse c^dag_{j,up} operators between sector bases."""

    def __init__(self):
        self._ops = {}

    def get(self, basis_from, basis_to, site) -> scipy.sparse.csr_matrix:
        key = (basis_from.n_sites, basis_from.label, basis_to.label, site)
        op = self._ops.get(key)
        if op is None:
            rows, cols, signs = creation_map(basis_from, basis_to, site, UP)
            op = scipy.sparse.csr_matrix(
                (signs, (rows, cols)), shape=(basis_to.dim, basis_from.dim)
            )
            self._ops[key] = op
        return op


_EDGE_OPS = _EdgeOperators()


def _pair_matrix(sol_n, sol_nm1, sites) -> np.ndarray:
    """M matrix (k_n x k_nm1): summed squared overlaps per site set."""
    m = np.zeros((sol_n.k, sol_nm1.k))
    for j in sites:
        op = _EDGE_OPS.get(sol_nm1.basis, sol_n.basis, j)
        amps = sol_n.vectors.T @ (op @ sol_nm1.vectors)
        m += amps**2
    return m


def conductance(spectra: SpectrumSet, cfg: TransportConfig) -> ConductanceValue:
    """G / g_T per the golden-rule sequential-tunneling sum.

    Every solved sector pair ((n, m) <- (n-1, m-1)) contributes
    M_L M_R / (M_L + M_R) * P_alpha * [1 - f((dE - E_F)/kT)], summed
    over retained states, times an overall factor two for spin. Raises
    SectorError when an interior sector pair is missing from
    ``spectra``.
    """
    kt = kt_mev(cfg.temperature)
    weights = boltzmann_weights(spectra, cfg.temperature, cfg.cutoff)
    if not weights:
        return ConductanceValue(0.0)
    present_n = [label.n_particles for label in spectra.solutions]
    n_min = min(present_n)
    total = 0.0
    for label, sol in spectra.solutions.items():
        if label.n_particles <= n_min:
            continue
        lower = SectorLabel(label.n_particles - 1, label.sz2 - 1)
        if abs(lower.sz2) > lower.n_particles:
            continue
        sol_lower = spectra.solutions.get(lower)
        if sol_lower is None:
            if any((label, i) in weights for i in range(sol.k)):
                raise SectorError(
                    f"spectra missing sector {lower} needed for transitions into {label}"
                )
            continue
        p_alpha = np.array([weights.get((label, i), 0.0) for i in range(sol.k)])
        if not p_alpha.any():
            continue
        m_left = _pair_matrix(sol, sol_lower, cfg.lead_sites_left)
        m_right = _pair_matrix(sol, sol_lower, cfg.lead_sites_right)
        msum = m_left + m_right
        series = np.zeros_like(msum)
        nz = msum > 0
        series[nz] = m_left[nz] * m_right[nz] / msum[nz]
        d_e = (
            sol.energies[:, None]
            - sol_lower.energies[None, :]
            - cfg.fermi_level
        )
        block = series * p_alpha[:, None] * _one_minus_fermi(d_e / kt)
        total += block.sum()
    return ConductanceValue(2.0 * total)


def _one_minus_fermi(x: np.ndarray) -> np.ndarray:
    # 1 - 1/(e^x + 1) = 1/(1 + e^-x), stable for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
