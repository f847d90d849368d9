"""Classical (zero-hopping) limit: exact ground energies by enumeration.

At t = 0 the Hamiltonian is diagonal and the energy of a Fock state
depends only on the site occupation numbers (0, 1 or 2), so the ground
energy per particle number follows from scanning all 3^n_sites
occupation vectors. This is cheap (19683 vectors for a 3x3 array) and
serves both as the sector-window pre-pass for sweeps and as an
independent oracle for the solvers.
"""

from __future__ import annotations

import functools

import numpy as np

from .device import GatePoint, HubbardParams


@functools.lru_cache(maxsize=8)
def occupation_table(n_sites: int) -> np.ndarray:
    """(3**n_sites, n_sites) int8 array of all site occupation vectors."""
    grids = np.meshgrid(*([np.arange(3, dtype=np.int8)] * n_sites), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def classical_energies(params: HubbardParams, gates: GatePoint):
    """Energies of all classical occupation vectors at one gate point.

    Returns (occ, energies) with occ the shared occupation table.
    """
    occ = occupation_table(params.n_sites)
    occf = occ.astype(np.float64)
    mu = params.mu(gates)
    e = occf @ mu
    e += (occ == 2) @ params.u_onsite
    e += 0.5 * np.einsum("wi,wi->w", occf @ params.u_long, occf)
    return occ, e


def ground_energy_by_n(params: HubbardParams, gates: GatePoint) -> np.ndarray:
    """Classical ground energy per particle number, shape (2*n_sites + 1,)."""
    occ, e = classical_energies(params, gates)
    n_tot = occ.sum(axis=1, dtype=np.int64)
    out = np.full(2 * params.n_sites + 1, np.inf)
    np.minimum.at(out, n_tot, e)
    return out


def ground_occupation_by_n(params: HubbardParams, gates: GatePoint) -> np.ndarray:
    """Classical ground occupation vector per particle number."""
    occ, e = classical_energies(params, gates)
    n_tot = occ.sum(axis=1, dtype=np.int64)
    n_max = 2 * params.n_sites
    order = np.lexsort((e, n_tot))
    first = np.searchsorted(n_tot[order], np.arange(n_max + 1), side="left")
    return occ[order[first]]


def classical_ground_n(params: HubbardParams, gates: GatePoint) -> int:
    """Particle number minimizing E_N - N * E_F in the classical limit.

    Ties break toward the smaller particle number.
    """
    e = ground_energy_by_n(params, gates)
    grand = e - np.arange(len(e)) * params.fermi_level
    return int(np.argmin(grand))
