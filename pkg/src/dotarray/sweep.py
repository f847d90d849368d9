"""Gate sweeps: stability diagrams, conductance maps, Coulomb
oscillations, addition spectra, hopping sweeps, disorder.

Execution model: gate points are grouped into fixed-size chunks;
within a chunk points run sequentially so that every sector solve can
warm-start from the previous point's eigenvectors (the gate term only
shifts the diagonal, so neighbouring points share their low-energy
subspaces). Chunk boundaries depend only on the grid, never on the
worker count, which keeps outputs bit-identical for any ``jobs``.

A cheap classical (t = 0) pre-pass picks the particle-number window
solved at each point; windows are widened automatically when the
targeted quantity turns out to live on the window edge.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .basis import SectorLabel, valid_sector_labels
from .device import GatePoint, HubbardParams
from .errors import ModelError
from .hamiltonian import HamiltonianFactory
from .solver import block_solve_sector, solve_sector
from .solver import SpectrumSet
from .transport import TransportConfig, conductance

CHUNK_POINTS = 24
TRANSPORT_TOL = 5e-5
TRANSPORT_BLOCK = 40
TRANSPORT_MAX_COLS = 4000
GROUND_MAX_ITER = 2000


@dataclass(frozen=True)
class GateGrid:
    """Rectangular grid over (V_G1, V_G2); both axes strictly monotone."""

    v_g1: np.ndarray
    v_g2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_g1", np.asarray(self.v_g1, dtype=float))
        object.__setattr__(self, "v_g2", np.asarray(self.v_g2, dtype=float))
        for axis in (self.v_g1, self.v_g2):
            if axis.ndim != 1 or len(axis) < 1:
                raise ModelError("grid axes must be 1D and non-empty")
            if len(axis) > 1 and not (np.all(np.diff(axis) > 0) or np.all(np.diff(axis) < 0)):
                raise ModelError("grid axes must be strictly monotone")

    @property
    def shape(self) -> tuple:
        return (len(self.v_g1), len(self.v_g2))

    def points(self):
        """Row-major (v_g1 outer, v_g2 inner) flattened gate points."""
        return [GatePoint(v1, v2) for v1 in self.v_g1 for v2 in self.v_g2]

    @staticmethod
    def square(lo: float, hi: float, num: int) -> "GateGrid":
        ax = np.linspace(lo, hi, num)
        return GateGrid(ax, ax.copy())


@dataclass(frozen=True)
class GateLine:
    """Straight parametric path between two gate points."""

    start: tuple
    stop: tuple
    num: int

    def __post_init__(self):
        if self.num < 2:
            raise ModelError("line needs at least 2 samples")

    @property
    def s(self) -> np.ndarray:
        """Path parameter in mV (signed distance along the line)."""
        length = float(np.hypot(self.stop[0] - self.start[0], self.stop[1] - self.start[1]))
        return np.linspace(0.0, length, self.num)

    def points(self):
        v1 = np.linspace(self.start[0], self.stop[0], self.num)
        v2 = np.linspace(self.start[1], self.stop[1], self.num)
        return [GatePoint(a, b) for a, b in zip(v1, v2)]

    def reversed(self) -> "GateLine":
        return GateLine(self.stop, self.start, self.num)


@dataclass(eq=False)
class GateMap:
    """Per-point scalار over a gate grid."""

    grid: GateGrid
    values: np.ndarray
    kind: str  # ground_N | conductance | custom

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ModelError("values shape must match grid")


@dataclass(eq=False)
class AdditionSpectrum:
    """Ground-state addition energies along a gate line, relative E_F.

    ``e_add[n - 1, i]`` is E^0_add(n) - E_F at path sample i;
    ``occupations[n, i]`` the ground charge distribution of n electrons.
    """

    line: GateLine
    e_add: np.ndarray  # (n_levels, num)
    occupations: np.ndarray  # (n_levels + 1, num, n_sites)
    fermi_level: float


@dataclass(eq=False)
class OscillationTraces:
    """Conductance along a gate path for a list of temperatures."""

    line: GateLine
    temperatures: tuple
    values: np.ndarray  # (len(temperatures), num)


@dataclass(frozen=True)
class DisorderSpec:
    """Gaussian binding-energy disorder, applied once per seed."""

    seed: int
    eb_sigma: float
    enabled: bool = True

    def __post_init__(self):
        if self.eb_sigma < 0:
            raise ModelError("eb_sigma must be >= 0")


def apply_disorder(params: HubbardParams, spec: DisorderSpec) -> HubbardParams:
    """Perturb binding energies with zero-mean Gaussian noise."""
    if not spec.enabled:
        return params
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.eb_sigma, params.n_sites) if spec.eb_sigma > 0 else 0.0
    return params.replace(binding=params.binding + noise)


def _chunks(n_points: int, chunk: int = CHUNK_POINTS):
    return [(lo, min(lo + chunk, n_points)) for lo in range(0, n_points, chunk)]


def _run_chunked(worker, args_common, points, jobs, chunk=CHUNK_POINTS):
    """Evaluate ``worker(args_common, chunk_points)`` over fixed chunks,
    sequentially or in a process pool; results keep point order."""
    spans = _chunks(len(points), chunk)
    results = [None] * len(spans)
    if jobs <= 1 or len(spans) == 1:
        for c, (lo, hi) in enumerate(spans):
            results[c] = worker(args_common, points[lo:hi])
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(spans))) as pool:
            futures = {
                pool.submit(worker, args_common, points[lo:hi]): c
                for c, (lo, hi) in enumerate(spans)
            }
            for fut in futures:
                results[futures[fut]] = fut.result()
    out = []
    for r in results:
        out.extend(r)
    return out


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# ground-state engines


class _GroundChain:
    """Per-chunk solver state: warm-start vectors per sector label."""

    def __init__(self, params: HubbardParams, seed: int, k_states: int = 1):
        self.params = params
        self.factory = HamiltonianFactory(params)
        self.seed = seed
        self.k = k_states
        self.warm: dict[SectorLabel, np.ndarray] = {}

    def ground(self, label: SectorLabel, gates: GatePoint):
        """(energies, solution) for one sector, warm-started if possible."""
        h = self.factory.sector(label, gates)
        start_vec = None
        prev = self.warm.get(label)
        if prev is not None and h.dim > 2000:
            start_vec = prev[:, 0]
        sol = solve_sector(
            h,
            self.k,
            seed=_chain_seed(self.seed, label),
            max_iter=GROUND_MAX_ITER,
            start_vector=start_vec,
        )
        self.warm[label] = sol.vectors
        return sol

    def ground_energy_by_n(self, gates: GatePoint, n_values) -> dict:
        out = {}
        for n in n_values:
            label = SectorLabel(n, n % 2)
            out[n] = float(self.ground(label, gates).energies[0])
        return out


def _chain_seed(root: int, label: SectorLabel):
    return np.random.SeedSequence((int(root), label.n_particles, label.sz2 + 64))


def _ground_n_worker(common, chunk_points):
    params, k_states, margin, seed = common
    chain = _GroundChain(params, seed)
    out = []
    n_max = 2 * params.n_sites
    for gates in chunk_points:
        n_star = classical.classical_ground_n(params, gates)
        lo, hi = max(0, n_star - margin), min(n_max, n_star + margin)
        energies = chain.ground_energy_by_n(gates, range(lo, hi + 1))
        while True:
            best = _argmin_grand(energies, params.fermi_level)
            if (best > lo or lo == 0) and (best < hi or hi == n_max):
                break
            if best == lo and lo > 0:
                lo -= 1
                energies[lo] = chain.ground_energy_by_n(gates, [lo])[lo]
            if best == hi and hi < n_max:
                hi += 1
                energies[hi] = chain.ground_energy_by_n(gates, [hi])[hi]
        out.append(best)
    return out


def _argmin_grand(energies: dict, fermi: float) -> int:
    best_n, best_e = None, np.inf
    for n in sorted(energies):
        grand = energies[n] - n * fermi
        if grand < best_e - 1e-12:
            best_e = grand
            best_n = n
    return best_n


def stability_map(
    params: HubbardParams,
    grid: GateGrid,
    k_states: int = 1,
    n_margin: int = 2,
    *,
    jobs: int = 1,
    seed: int = 0,
) -> GateMap:
    """Ground-state particle number over a gate grid.

    N*(V) = argmin_N (E_N^0 - N E_F), ties toward smaller N. The
    classical pre-pass limits the solved window to N* +- n_margin and
    the window widens automatically whenever the winner sits on its
    edge.
    """
    points = grid.points()
    values = _run_chunked(_ground_n_worker, (params, k_states, n_margin, seed), points, jobs)
    return GateMap(grid=grid, values=np.array(values, dtype=float).reshape(grid.shape), kind="ground_N")


def _addition_spectrum_worker(common, chunk_points):
    params, n_max, seed = common
    chain = _GroundChain(params, seed)
    out = []
    for gates in chunk_points:
        energies = np.empty(n_max + 1)
        occ = np.empty((n_max + 1, params.n_sites))
        for n in range(n_max + 1):
            sol = chain.ground(SectorLabel(n, n % 2), gates)
            energies[n] = sol.energies[0]
            weights = sol.vectors[:, 0] ** 2
            occ[n] = weights @ sol.basis.site_occupations()
        out.append((energies, occ))
    return out


def addition_spectrum_line(
    params: HubbardParams,
    line: GateLine,
    n_max: int | None = None,
    *,
    jobs: int = 1,
    seed: int = 0,
) -> AdditionSpectrum:
    """E_add^0(N) = E_N^0 - E_{N-1}^0 along a gate path, minus E_F.

    Also records the ground-state charge distribution of every particle
    number for downstream charge-addition analysis.
    """
    n_max = 2 * params.n_sites if n_max is None else n_max
    if n_max > 2 * params.n_sites:
        raise ModelError("n_max exceeds the orbital capacity of the array")
    results = _run_chunked(_addition_spectrum_worker, (params, n_max, seed), line.points(), jobs)
    num = line.num
    e_add = np.empty((n_max, num))
    occupations = np.empty((n_max + 1, num, params.n_sites))
    for i, (energies, occ) in enumerate(results):
        e_add[:, i] = np.diff(energies) - params.fermi_level
        occupations[:, i, :] = occ
    return AdditionSpectrum(line=line, e_add=e_add, occupations=occupations, fermi_level=params.fermi_level)


def hopping_sweep(
    params: HubbardParams,
    t_values,
    *,
    include_u_long: bool = True,
    include_v_ion: bool = True,
    gates: GatePoint = GatePoint(0.0, 0.0),
    seed: int = 0,
) -> dict:
    """Addition-energy spectrum (raw, not E_F-referenced) vs hopping.

    Long-range electron repulsion and/or ion attraction can be switched
    off to reproduce the four interaction configurations studied on the
    addition spectrum. Returns {t: array of 2*n_sites addition energies}.
    """
    base = params
    if not include_u_long:
        base = base.replace(u_long=np.zeros_like(base.u_long))
    if not include_v_ion:
        base = base.replace(v_ion=np.zeros_like(base.v_ion))
    out = {}
    n_max = 2 * base.n_sites
    for t in t_values:
        p_t = base.replace(hopping=float(t))
        if t == 0:
            energies = classical.ground_energy_by_n(p_t, gates)
        else:
            chain = _GroundChain(p_t, seed)
            by_n = chain.ground_energy_by_n(gates, range(n_max + 1))
            energies = np.array([by_n[n] for n in range(n_max + 1)])
        out[float(t)] = np.diff(energies)
    return out


# ---------------------------------------------------------------------------
# transport engines


class _TransportChain:
    """Warm-started block solves of every sector needed for conductance."""

    def __init__(self, params: HubbardParams, k_states: int, seed: int):
        self.params = params
        self.factory = HamiltonianFactory(params)
        self.k = k_states
        self.seed = seed
        self.warm: dict[SectorLabel, np.ndarray] = {}

    def spectra(self, gates: GatePoint, n_values, cutoff: float) -> SpectrumSet:
        cls_grand = None
        solutions = {}
        cls_by_n = classical.ground_energy_by_n(self.params, gates)
        grand_by_n = cls_by_n - np.arange(len(cls_by_n)) * self.params.fermi_level
        cls_floor = min(grand_by_n[n] for n in n_values)
        for label in valid_sector_labels(self.params.n_sites, n_values):
            h = self.factory.sector(label, gates)
            sector_excess = grand_by_n[label.n_particles] - cls_floor
            window = cutoff - sector_excess + 3.0 * max(self.params.hopping, 1.0) + 3.0
            if window <= 0:
                continue
            sol = block_solve_sector(
                h,
                self.k,
                block_size=TRANSPORT_BLOCK,
                start_block=self.warm.get(label),
                seed=_chain_seed(self.seed, label),
                tol=TRANSPORT_TOL,
                energy_window=window,
                max_cols=TRANSPORT_MAX_COLS,
            )
            self.warm[label] = sol.vectors
            solutions[label] = sol
        return SpectrumSet(gate=gates, solutions=solutions, fermi_level=self.params.fermi_level)


def _transport_worker(common, chunk_points):
    params, cfg_list, k_states, margin, seed = common
    chain = _TransportChain(params, k_states, seed)
    cutoff = max(cfg.cutoff for cfg in cfg_list)
    n_max = 2 * params.n_sites
    out = []
    for gates in chunk_points:
        n_star = classical.classical_ground_n(params, gates)
        lo = max(0, n_star - margin)
        hi = min(n_max, n_star + margin)
        spectra = chain.spectra(gates, range(lo, hi + 1), cutoff)
        out.append(tuple(conductance(spectra, cfg).g_over_gt for cfg in cfg_list))
    return out


def conductance_map(
    params: HubbardParams,
    grid: GateGrid,
    cfg: TransportConfig,
    k_states: int = 30,
    *,
    n_margin: int = 2,
    jobs: int = 1,
    seed: int = 0,
) -> GateMap:
    """Linear-response G/g_T over a gate grid at cfg.temperature."""
    points = grid.points()
    rows = _run_chunked(
        _transport_worker, (params, (cfg,), k_states, n_margin, seed), points, jobs
    )
    values = np.array([r[0] for r in rows]).reshape(grid.shape)
    return GateMap(grid=grid, values=values, kind="conductance")


def coulomb_oscillations(
    params: HubbardParams,
    line: GateLine,
    cfg: TransportConfig,
    temperatures,
    k_states: int = 30,
    *,
    n_margin: int = 2,
    jobs: int = 1,
    seed: int = 0,
) -> OscillationTraces:
    """Conductance traces along a gate path for several temperatures.

    Eigen-solutions are shared across temperatures at each point; the
    retention cutoff is taken for the hottest temperature.
    """
    temperatures = tuple(float(t) for t in temperatures)
    cfgs = tuple(
        TransportConfig(
            temperature=t,
            lead_sites_left=cfg.lead_sites_left,
            lead_sites_right=cfg.lead_sites_right,
            fermi_level=cfg.fermi_level,
            state_energy_cutoff=cfg.state_energy_cutoff,
        )
        for t in temperatures
    )
    rows = _run_chunked(
        _transport_worker, (params, cfgs, k_states, n_margin, seed), line.points(), jobs
    )
    values = np.array(rows, dtype=float).T.copy()
    return OscillationTraces(line=line, temperatures=temperatures, values=values)
