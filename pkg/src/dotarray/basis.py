"""Symmetry-resolved Fock bases for spinful fermions on a small lattice.

States are bit-packed integers with a fixed mode ordering: mode
``2*site`` is spin-up and mode ``2*site + 1`` is spin-down at that
site, sites numbered row-major over the lattice. All fermionic signs
follow from this ordering (occupied modes below the acted-on mode
contribute a factor -1 each). 18 modes for a 3x3 array fit comfortably
in a 64-bit word.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .errors import SectorError

UP = 0
DOWN = 1


def mode_index(site: int, spin: int) -> int:
    """Bit position of (site, spin) in the packed word."""
    return 2 * site + spin


@dataclass(frozen=True)
class SectorLabel:
    """(N, 2*Sz) label of a particle-number / spin-projection block."""

    n_particles: int
    sz2: int

    def counts(self, n_sites: int) -> tuple[int, int]:
        """Return (n_up, n_down), validating against ``n_sites``."""
        twice_up = self.n_particles + self.sz2
        twice_dn = self.n_particles - self.sz2
        if twice_up % 2 or twice_dn % 2:
            raise SectorError(f"inconsistent sector {self}: N and 2Sz must have equal parity")
        n_up, n_dn = twice_up // 2, twice_dn // 2
        if not (0 <= n_up <= n_sites and 0 <= n_dn <= n_sites):
            raise SectorError(f"sector {self} does not fit on {n_sites} sites")
        return n_up, n_dn

    def mirror(self) -> "SectorLabel":
        """The spin-flipped sector (N, -2Sz)."""
        return SectorLabel(self.n_particles, -self.sz2)


def valid_sector_labels(n_sites: int, n_values=None):
    """Yield every (N, 2Sz) label for the given particle-number range."""
    if n_values is None:
        n_values = range(2 * n_sites + 1)
    for n in n_values:
        sz2_max = min(n, 2 * n_sites - n)
        for sz2 in range(-sz2_max, sz2_max + 1, 2):
            yield SectorLabel(n, sz2)


@dataclass(eq=False)
class SectorBasis:
    """All Fock states of one sector, sorted ascending by packed word."""

    label: SectorLabel
    n_sites: int
    states: np.ndarray  # uint64, strictly increasing

    _occ: np.ndarray = field(default=None, repr=False)
    _docc: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index_of(self, words):
        """Ordinal position(s) of packed word(s) in this basis.

        Raises KeyError if any word is not a member.
        """
        words = np.asarray(words, dtype=np.uint64)
        idx = np.searchsorted(self.states, words)
        idx_c = np.minimum(idx, self.dim - 1)
        if not np.all(self.states[idx_c] == words):
            raise KeyError("word not in sector basis")
        return int(idx) if np.isscalar(idx) or idx.ndim == 0 else idx

    def site_occupations(self) -> np.ndarray:
        """(dim, n_sites) int8 matrix of total occupation per site."""
        if self._occ is None:
            masks = np.array([np.uint64(0b11) << np.uint64(2 * i) for i in range(self.n_sites)])
            self._occ = np.bitwise_count(self.states[:, None] & masks[None, :]).astype(np.int8)
        return self._occ

    def double_occupations(self) -> np.ndarray:
        """(dim, n_sites) int8 matrix, 1 where a site holds both spins."""
        if self._docc is None:
            up = (self.states[:, None] >> (np.uint64(2) * np.arange(self.n_sites, dtype=np.uint64))) & np.uint64(1)
            dn = (self.states[:, None] >> (np.uint64(2) * np.arange(self.n_sites, dtype=np.uint64) + np.uint64(1))) & np.uint64(1)
            self._docc = (up & dn).astype(np.int8)
        return self._docc


@functools.lru_cache(maxsize=None)
def enumerate_sector(n_sites: int, label: SectorLabel) -> SectorBasis:
    """Build the complete sorted basis of one (N, 2Sz) sector.

    The basis holds C(n_sites, n_up) * C(n_sites, n_down) states. Bases
    are cached per (n_sites, label); they are immutable, so sharing the
    cached instance across threads/processes is safe.
    """
    n_up, n_dn = label.counts(n_sites)
    up_words = _spin_words(n_sites, n_up, UP)
    dn_words = _spin_words(n_sites, n_dn, DOWN)
    words = (up_words[:, None] | dn_words[None, :]).ravel()
    words.sort()
    basis = SectorBasis(label=label, n_sites=n_sites, states=words)
    assert basis.dim == comb(n_sites, n_up) * comb(n_sites, n_dn)
    return basis


def _spin_words(n_sites: int, n_occ: int, spin: int) -> np.ndarray:
    """All words with ``n_occ`` occupied modes of one spin species."""
    out = np.empty(comb(n_sites, n_occ), dtype=np.uint64)
    for k, sites in enumerate(combinations(range(n_sites), n_occ)):
        w = 0
        for s in sites:
            w |= 1 << mode_index(s, spin)
        out[k] = w
    return out


def apply_creation(state: int, site: int, spin: int, n_sites: int | None = None):
    """Act with c^dagger_{site,spin} on a packed word.

    Returns (new_state, sign) or None when the mode is already occupied
    (Pauli blocked). The sign is the parity of occupied modes below the
    target mode.
    """
    state = int(state)
    bit = 1 << mode_index(site, spin)
    if state & bit:
        return None
    sign = -1 if (state & (bit - 1)).bit_count() & 1 else 1
    return state | bit, sign


def apply_annihilation(state: int, site: int, spin: int, n_sites: int | None = None):
    """Act with c_{site,spin}; adjoint of :func:`apply_creation`.

    Returns (new_state, sign) or None when the mode is empty.
    """
    state = int(state)
    bit = 1 << mode_index(site, spin)
    if not state & bit:
        return None
    sign = -1 if (state & (bit - 1)).bit_count() & 1 else 1
    return state & ~bit, sign


def creation_map(basis_from: SectorBasis, basis_to: SectorBasis, site: int, spin: int):
    """Vectorized c^dagger_{site,spin}: basis_from -> basis_to.

    Returns (rows, cols, signs): for each surviving source state
    ``cols[k]`` in ``basis_from``, the image is ``rows[k]`` in
    ``basis_to`` with amplitude ``signs[k]``.
    """
    bit = np.uint64(1 << mode_index(site, spin))
    src = basis_from.states
    keep = (src & bit) == 0
    cols = np.nonzero(keep)[0]
    new_words = src[keep] | bit
    below = np.bitwise_count(src[keep] & (bit - np.uint64(1)))
    signs = np.where(below & np.uint64(1), -1.0, 1.0)
    rows = basis_to.index_of(new_words)
    return rows, cols, signs
