"""Sector Hamiltonians: sparse hopping blocks plus interaction diagonals.

The hopping structure and the interaction part of the diagonal are
gate-independent, so they are assembled once per (device, sector) and
reused across gate points; a gate change only shifts the diagonal by a
per-site amount weighted with the site occupations of each basis state.
:class:`HamiltonianFactory` owns that cache.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .basis import DOWN, UP, SectorBasis, SectorLabel, enumerate_sector, mode_index
from .device import GatePoint, HubbardParams
from .errors import ModelError

# Sectors larger than this refuse to build; generous for 3x3 arrays
# (largest block is 15876) but guards against runaway lattice sizes.
DEFAULT_DIM_CAP = 5_000_000


@dataclass(eq=False)
class SparseSectorH:
    """Real-symmetric sector Hamiltonian: off-diagonal CSR + dense diagonal."""

    label: SectorLabel
    basis: SectorBasis
    hop: scipy.sparse.csr_matrix  # strictly off-diagonal, symmetric
    diag: np.ndarray  # meV

    @property
    def dim(self) -> int:
        return len(self.diag)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.hop @ x + self.diag * x

    def matmat(self, x: np.ndarray) -> np.ndarray:
        return self.hop @ x + self.diag[:, None] * x

    def to_dense(self) -> np.ndarray:
        m = self.hop.toarray()
        m[np.diag_indices_from(m)] += self.diag
        return m

    def dump_coo(self, fh):
        """Write 'row col value' lines (diagonal included) for debugging."""
        coo = self.hop.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
        for i, v in enumerate(self.diag):
            if v != 0.0:
                fh.write(f"{i} {i} {float(v)!r}\n")


def diagonal_energy(occupations, params: HubbardParams, mu) -> float:
    """Diagonal matrix element of one Fock configuration, meV.

    ``occupations`` has shape (n_sites, 2) with the spin-up and
    spin-down occupation numbers per site; ``mu`` is the per-site
    chemical potential at the gate point of interest.
    """
    occ = np.asarray(occupations)
    n_tot = occ.sum(axis=1)
    double = (occ[:, 0] * occ[:, 1]).astype(float)
    mu = np.asarray(mu, dtype=float)
    e = float(n_tot @ mu)
    e += float(double @ params.u_onsite)
    e += 0.5 * float(n_tot @ params.u_long @ n_tot)
    return e


class _SectorStructure:
    """Gate-independent pieces of one sector Hamiltonian."""

    def __init__(self, basis: SectorBasis, params: HubbardParams):
        self.basis = basis
        self.occ = basis.site_occupations().astype(np.float64)
        self.hop = _hopping_matrix(basis, params)
        static_mu = params.binding + params.v_ion.sum(axis=1)
        docc = basis.double_occupations().astype(np.float64)
        self.diag_static = (
            self.occ @ static_mu
            + docc @ params.u_onsite
            + 0.5 * np.einsum("wi,wi->w", self.occ @ params.u_long, self.occ)
        )

    def at_gates(self, label: SectorLabel, gate_shift: np.ndarray) -> SparseSectorH:
        diag = self.diag_static + self.occ @ gate_shift
        return SparseSectorH(label=label, basis=self.basis, hop=self.hop, diag=diag)


def _hopping_matrix(basis: SectorBasis, params: HubbardParams) -> scipy.sparse.csr_matrix:
    words = basis.states
    dim = len(words)
    one = np.uint64(1)
    rows, cols, vals = [], [], []
    for i, j, t in params.bond_hoppings():
        if t == 0.0:
            continue
        for spin in (UP, DOWN):
            for a, b in ((i, j), (j, i)):  # c^dagger_a c_b
                bit_a = np.uint64(1 << mode_index(a, spin))
                bit_b = np.uint64(1 << mode_index(b, spin))
                lo, hi = sorted((int(bit_a), int(bit_b)))
                between = np.uint64((hi - 1) & ~(2 * lo - 1))
                sel = ((words & bit_b) != 0) & ((words & bit_a) == 0)
                src = np.nonzero(sel)[0]
                if not len(src):
                    continue
                w = words[src]
                new_words = w ^ (bit_a | bit_b)
                parity = np.bitwise_count(w & between) & one
                sign = np.where(parity.astype(bool), 1.0, -1.0)  # value = -t * (+-1)
                dst = np.searchsorted(words, new_words)
                rows.append(dst)
                cols.append(src)
                vals.append(sign * t)
    if not rows:
        return scipy.sparse.csr_matrix((dim, dim))
    m = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return m.tocsr()


class HamiltonianFactory:
    """Builds sector Hamiltonians for one parameter set, caching the
    gate-independent structure of every sector it has seen."""

    def __init__(self, params: HubbardParams, dim_cap: int = DEFAULT_DIM_CAP):
        self.params = params
        self.dim_cap = dim_cap
        self._structures: dict[SectorLabel, _SectorStructure] = {}

    def structure(self, label: SectorLabel) -> _SectorStructure:
        st = self._structures.get(label)
        if st is None:
            basis = enumerate_sector(self.params.n_sites, label)
            if basis.dim > self.dim_cap:
                raise ModelError(
                    f"sector {label} dimension {basis.dim} exceeds cap {self.dim_cap}"
                )
            st = _SectorStructure(basis, self.params)
            self._structures[label] = st
        return st

    def sector(self, label: SectorLabel, gates: GatePoint) -> SparseSectorH:
        return self.structure(label).at_gates(label, self.params.gate_shift(gates))


def build_sector(
    basis: SectorBasis,
    params: HubbardParams,
    gates: GatePoint,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> SparseSectorH:
    """Assemble the sector Hamiltonian at one gate point.

    One-shot variant of :class:`HamiltonianFactory`; prefer the factory
    when sweeping gates.
    """
    if basis.n_sites != params.n_sites:
        raise ModelError("basis and params disagree on n_sites")
    if basis.dim > dim_cap:
        raise ModelError(f"sector dimension {basis.dim} exceeds cap {dim_cap}")
    return _SectorStructure(basis, params).at_gates(basis.label, params.gate_shift(gates))
