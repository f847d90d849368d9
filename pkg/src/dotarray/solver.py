"""Low-lying eigenpairs per sector: Lanczos above a size threshold,
exact dense diagonalization below it.

The Lanczos routine keeps the whole Krylov basis and re-orthogonalizes
the new direction against all of it after every iteration (twice, which
keeps the basis orthonormal to ~1e-14). Ritz residuals are estimated
from the tridiagonal eigenvectors and verified exactly on the returned
pairs. An exact invariant-subspace breakdown restarts with a fresh
random direction; the accumulated projected matrix stays block-
tridiagonal with a zero coupling, which eigh_tridiagonal handles as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import SectorLabel, valid_sector_labels
from .device import GatePoint, HubbardParams
from .errors import ConvergenceError
from .hamiltonian import HamiltonianFactory, SparseSectorH

DENSE_DIM_MAX = 2000
DEFAULT_K_STATES = 30
RESIDUAL_TOL = 1e-8
BREAKDOWN_TOL = 1e-13
CHECK_INTERVAL = 10
BIAS_SCALE_MEV = 2.0


@dataclass(eq=False)
class EigenSolution:
    """Converged low-lying eigenpairs of one sector."""

    label: SectorLabel
    energies: np.ndarray  # ascending, meV
    vectors: np.ndarray  # (dim, k), orthonormal columns
    converged: int
    method: str  # "lanczos" | "dense"
    basis: object = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.energies)


def degeneracy_groups(energies, tol: float = 1e-7):
    """Group an ascending energy list into clusters closer than ``tol``.

    Returns a list of (start_index, count) pairs; used when bundling
    near-degenerate levels into minibands.
    """
    groups = []
    i = 0
    energies = np.asarray(energies)
    while i < len(energies):
        j = i + 1
        while j < len(energies) and energies[j] - energies[j - 1] <= tol:
            j += 1
        groups.append((i, j - i))
        i = j
    return groups


def solve_sector(
    h: SparseSectorH,
    k_states: int = DEFAULT_K_STATES,
    *,
    method: str = "auto",
    seed: int = 0,
    max_iter: int | None = None,
    tol: float = RESIDUAL_TOL,
    start: str = "biased",
    start_vector: np.ndarray | None = None,
    energy_window: float | None = None,
    diagnostics: list | None = None,
) -> EigenSolution:
    """Lowest ``k_states`` eigenpairs of a sector Hamiltonian.

    ``method`` "auto" picks dense diagonalization for dim <= 2000 and
    Lanczos with full re-orthogonalization above; "dense"/"lanczos"
    force a path. k is clamped to the sector dimension.

    ``start`` "biased" seeds the Krylov space with a deterministic
    low-diagonal-weighted vector plus a seeded random admixture, which
    converges far faster in the nearly diagonal (t << U) regime;
    "random" uses the seeded random vector alone. ``start_vector``
    overrides both (warm start from a nearby gate point).

    ``energy_window`` (meV) relaxes the Lanczos exit test: only states
    within the window above the sector ground must converge, and only
    those are returned. Callers that thermally truncate anyway (the
    transport stack) use this to avoid converging states they discard.

    A list passed as ``diagnostics`` collects per-check Lanczos state
    (Ritz values, worst Gram-matrix deviation) for inspection.
    """
    if k_states < 1:
        raise ValueError("k_states must be >= 1")
    k = min(k_states, h.dim)
    if method == "auto":
        method = "dense" if h.dim <= DENSE_DIM_MAX else "lanczos"
    if method == "dense":
        energies, vectors = _dense_lowest(h, k)
    elif method == "lanczos":
        energies, vectors = _lanczos_lowest(
            h,
            k,
            seed=seed,
            max_iter=max_iter,
            tol=tol,
            start=start,
            start_vector=start_vector,
            energy_window=energy_window,
            diagnostics=diagnostics,
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    _fix_gauge(vectors)
    return EigenSolution(
        label=h.label,
        energies=energies,
        vectors=vectors,
        converged=len(energies),
        method=method,
        basis=h.basis,
    )


def _dense_lowest(h: SparseSectorH, k: int):
    if h.dim == 1:
        return h.diag.copy(), np.ones((1, 1))
    dense = h.to_dense()
    energies, vectors = scipy.linalg.eigh(dense, subset_by_index=[0, k - 1])
    return energies, vectors


def _fix_gauge(vectors: np.ndarray):
    """Make the largest-magnitude component of each vector positive."""
    if vectors.size == 0:
        return
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs


def _start_vector(h: SparseSectorH, rng, start: str) -> np.ndarray:
    q = rng.standard_normal(h.dim)
    q /= np.linalg.norm(q)
    if start == "random":
        return q
    if start != "biased":
        raise ValueError(f"unknown start {start!r}")
    # Weight toward low-diagonal configurations; in the strongly
    # interacting regime the low-lying states live there, so the
    # Krylov space starts out in the right corner of the sector.
    bias = np.exp(-(h.diag - h.diag.min()) / BIAS_SCALE_MEV)
    nrm = np.linalg.norm(bias)
    if nrm == 0.0 or not np.isfinite(nrm):
        return q
    q = bias / nrm + 0.01 * q
    return q / np.linalg.norm(q)


def _lanczos_lowest(
    h: SparseSectorH,
    k: int,
    *,
    seed: int,
    max_iter: int | None,
    tol: float,
    start: str = "biased",
    start_vector: np.ndarray | None = None,
    energy_window: float | None = None,
    diagnostics: list | None = None,
):
    dim = h.dim
    if max_iter is None:
        max_iter = 5 * k + 100
    max_iter = min(max(max_iter, k + 2), dim)
    rng = np.random.default_rng(seed)

    q_mat = np.empty((dim, max_iter), order="F")
    alphas = np.empty(max_iter)
    betas = np.empty(max_iter)  # betas[i] couples vector i to i+1
    if start_vector is not None:
        q = np.asarray(start_vector, dtype=float).copy()
        q /= np.linalg.norm(q)
    else:
        q = _start_vector(h, rng, start)
    beta_prev = 0.0
    n_vec = 0
    theta_at_restart = None
    settled_restarts = 0

    while n_vec < max_iter:
        it = n_vec
        q_mat[:, it] = q
        n_vec += 1
        u = h.matvec(q)
        alpha = float(q @ u)
        alphas[it] = alpha
        r = u - alpha * q
        if it > 0 and beta_prev != 0.0:
            r -= beta_prev * q_mat[:, it - 1]
        # full re-orthogonalization; one pass normally suffices, the
        # second runs only when cancellation ate the first one
        basis = q_mat[:, :n_vec]
        norm_before = float(np.linalg.norm(r))
        r -= basis @ (basis.T @ r)
        beta = float(np.linalg.norm(r))
        if beta < 0.7 * norm_before:
            r -= basis @ (basis.T @ r)
            beta = float(np.linalg.norm(r))

        restarted = False
        done_space = False
        if beta < BREAKDOWN_TOL * max(1.0, abs(alpha)):
            # invariant subspace: restart with a fresh orthogonal direction
            beta = 0.0
            restarted = True
            q, ok = _fresh_direction(rng, q_mat[:, :n_vec], dim)
            if not ok:
                done_space = True
                if n_vec < k:
                    raise ConvergenceError(
                        f"Krylov space of sector {h.label} exhausted at {n_vec} < k={k}"
                    )
        else:
            q = r / beta
        betas[it] = beta
        beta_prev = beta

        last = done_space or n_vec == max_iter
        if n_vec >= k and (n_vec % CHECK_INTERVAL == 0 or last or restarted):
            theta, s_mat = scipy.linalg.eigh_tridiagonal(
                alphas[:n_vec], betas[: n_vec - 1], select="i", select_range=(0, k - 1)
            )
            if diagnostics is not None:
                gram = q_mat[:, :n_vec].T @ q_mat[:, :n_vec]
                diagnostics.append(
                    {
                        "iterations": n_vec,
                        "ritz": theta.copy(),
                        "gram_error": float(np.abs(gram - np.eye(n_vec)).max()),
                    }
                )
            k_needed = k
            if energy_window is not None:
                k_needed = int(np.searchsorted(theta, theta[0] + energy_window, side="right"))
                k_needed = max(1, min(k, k_needed))
            resid_est = np.abs(beta * s_mat[-1, :k_needed])
            estimates_pass = bool(
                np.all(resid_est <= tol * np.maximum(1.0, np.abs(theta[:k_needed])))
            )
            if restarted and estimates_pass:
                # an exactly invariant subspace reports zero residuals
                # even when degenerate partners are still missing; only
                # accept once one further restart brings no new state
                # into the wanted range
                if theta_at_restart is not None and len(theta_at_restart) == k_needed and np.allclose(
                    theta_at_restart, theta[:k_needed], rtol=0, atol=1e-12
                ):
                    settled_restarts += 1
                else:
                    settled_restarts = 0
                theta_at_restart = theta[:k_needed].copy()
                estimates_pass = settled_restarts >= 1
            if estimates_pass or last:
                vectors = q_mat[:, :n_vec] @ s_mat[:, :k_needed]
                theta_out = theta[:k_needed]
                resid = _true_residuals(h, theta_out, vectors)
                if np.all(resid <= tol * np.maximum(1.0, np.abs(theta_out))):
                    return theta_out, vectors
                if last:
                    raise ConvergenceError(
                        f"Lanczos did not converge {k_needed} states in sector {h.label} "
                        f"after {n_vec} iterations (worst residual {resid.max():.3e})",
                        residuals=resid,
                    )
    raise ConvergenceError(f"Lanczos exhausted iterations in sector {h.label}")


def _fresh_direction(rng, basis, dim):
    for _ in range(5):
        q = rng.standard_normal(dim)
        q -= basis @ (basis.T @ q)
        q -= basis @ (basis.T @ q)
        nrm = np.linalg.norm(q)
        if nrm > 1e-8:
            return q / nrm, True
    return None, False


def _true_residuals(h: SparseSectorH, energies, vectors):
    resid = h.matmat(vectors) - vectors * energies[None, :]
    return np.linalg.norm(resid, axis=0)


def block_solve_sector(
    h: SparseSectorH,
    k_states: int,
    *,
    block_size: int | None = None,
    start_block: np.ndarray | None = None,
    seed: int = 0,
    tol: float = RESIDUAL_TOL,
    energy_window: float | None = None,
    max_cols: int | None = None,
) -> EigenSolution:
    """Block-Krylov variant of the Lanczos solve with full
    re-orthogonalization and Rayleigh-Ritz extraction.

    The block version advances through quasi-degenerate multiplets
    (spin forests split by ~t^2/U) in one step each instead of one
    member per resolved gap, which makes it the workhorse behind the
    transport sweeps. ``start_block`` warm-starts from the eigenvectors
    of a nearby gate point. Falls back to dense diagonalization below
    the dense threshold like :func:`solve_sector`.
    """
    if k_states < 1:
        raise ValueError("k_states must be >= 1")
    k = min(k_states, h.dim)
    if h.dim <= DENSE_DIM_MAX:
        energies, vectors = _dense_lowest(h, k)
        _fix_gauge(vectors)
        return EigenSolution(h.label, energies, vectors, len(energies), "dense", h.basis)
    dim = h.dim
    b = block_size or min(max(8, k // 2), 24)
    if max_cols is None:
        max_cols = max(12 * k + 200, 60 * b)
    max_cols = min(max_cols, dim)
    rng = np.random.default_rng(seed)

    q_mat = np.empty((dim, max_cols), order="F")
    h_proj = np.zeros((max_cols, max_cols))
    m = 0

    # initial block: warm-start vectors, then low-diagonal unit vectors
    cols = []
    if start_block is not None:
        cols.append(np.asarray(start_block, dtype=float))
    n_fill = b if start_block is None else max(b - start_block.shape[1], 2)
    if n_fill > 0:
        lowest = np.argsort(h.diag, kind="stable")[:n_fill]
        fill = np.zeros((dim, n_fill))
        fill[lowest, np.arange(n_fill)] = 1.0
        fill += 0.01 * rng.standard_normal((dim, n_fill))
        cols.append(fill)
    x_blk = _orthonormalize_block(np.concatenate(cols, axis=1), q_mat[:, :0], rng)

    last_checked = 0
    while m < max_cols:
        take = min(x_blk.shape[1], max_cols - m)
        x_blk = x_blk[:, :take]
        q_mat[:, m : m + take] = x_blk
        hx = h.matmat(x_blk)
        h_proj[: m + take, m : m + take] = q_mat[:, : m + take].T @ hx
        h_proj[m : m + take, :m] = h_proj[:m, m : m + take].T
        m += take

        exhausted = m >= max_cols
        if m >= k and (m - last_checked >= 2 * b or exhausted):
            last_checked = m
            theta, s_mat = scipy.linalg.eigh(
                h_proj[:m, :m], subset_by_index=[0, min(k, m) - 1]
            )
            k_needed = len(theta)
            if energy_window is not None:
                k_needed = int(np.searchsorted(theta, theta[0] + energy_window, side="right"))
                k_needed = max(1, min(len(theta), k_needed))
            vectors = q_mat[:, :m] @ s_mat[:, :k_needed]
            resid = _true_residuals(h, theta[:k_needed], vectors)
            if np.all(resid <= tol * np.maximum(1.0, np.abs(theta[:k_needed]))):
                _fix_gauge(vectors)
                return EigenSolution(
                    h.label, theta[:k_needed], vectors, k_needed, "lanczos", h.basis
                )
            if exhausted:
                raise ConvergenceError(
                    f"block solve did not converge {k_needed} states in sector "
                    f"{h.label} with {m} Krylov columns (worst residual {resid.max():.3e})",
                    residuals=resid,
                )
        # expand: H times the newest block, orthogonalized against everything
        x_blk = _orthonormalize_block(hx, q_mat[:, :m], rng)
        if x_blk.shape[1] == 0:
            # invariant subspace; restart with fresh random directions
            fresh = rng.standard_normal((dim, b))
            x_blk = _orthonormalize_block(fresh, q_mat[:, :m], rng)
            if x_blk.shape[1] == 0:
                raise ConvergenceError(f"block solve exhausted space in sector {h.label}")
    raise ConvergenceError(f"block solve exceeded column budget in sector {h.label}")


def _orthonormalize_block(x, against, rng, drop_tol=1e-10):
    """Orthonormalize columns of x against ``against`` and each other,
    dropping directions that vanish."""
    x = np.asarray(x, dtype=float).copy()
    for _ in range(2):
        if against.shape[1]:
            x -= against @ (against.T @ x)
    q, r = np.linalg.qr(x)
    keep = np.abs(np.diag(r)) > drop_tol * max(1.0, np.abs(r).max())
    q = q[:, keep]
    # one more pass against the outer basis for safety
    if against.shape[1] and q.shape[1]:
        q -= against @ (against.T @ q)
        q, r = np.linalg.qr(q)
        keep = np.abs(np.diag(r)) > 0.5
        q = q[:, keep]
    return q


@dataclass(eq=False)
class SpectrumSet:
    """Eigen-solutions of all solved sectors at one gate point."""

    gate: GatePoint
    solutions: dict
    fermi_level: float

    @property
    def ground_energy_by_n(self) -> dict:
        """Lowest energy per particle number over the solved Sz sectors."""
        out: dict[int, float] = {}
        for label, sol in self.solutions.items():
            e0 = float(sol.energies[0])
            n = label.n_particles
            if n not in out or e0 < out[n]:
                out[n] = e0
        return out

    def grand_energies(self):
        """(labels, state indices, E - N*E_F) flattened over all states."""
        labels, idx, en = [], [], []
        for label, sol in self.solutions.items():
            for i, e in enumerate(sol.energies):
                labels.append(label)
                idx.append(i)
                en.append(e - label.n_particles * self.fermi_level)
        return labels, idx, np.array(en)


def solve_all_sectors(
    params: HubbardParams,
    gates: GatePoint,
    k_states: int = DEFAULT_K_STATES,
    *,
    n_values=None,
    sz2_policy: str = "all",
    seed: int = 0,
    factory: HamiltonianFactory | None = None,
    keep_vectors: bool = True,
) -> SpectrumSet:
    """Solve every requested (N, 2Sz) sector at one gate point.

    ``sz2_policy`` "all" solves each spin projection (both signs);
    "minimal" solves only 2Sz = N mod 2. The Hamiltonian is SU(2)
    symmetric, so every multiplet has a member in the minimal sector
    and the per-N ground energies are identical under either policy;
    "minimal" is the cheap choice for ground-state maps, "all" is
    required when transport needs the full thermal ensemble.
    """
    if sz2_policy not in ("minimal", "all"):
        raise ValueError(f"unknown sz2_policy {sz2_policy!r}")
    if factory is None:
        factory = HamiltonianFactory(params)
    n_sites = params.n_sites
    if n_values is None:
        n_values = range(0, 2 * n_sites + 1)
    solutions = {}
    for label in valid_sector_labels(n_sites, n_values):
        if sz2_policy == "minimal" and label.sz2 != label.n_particles % 2:
            continue
        h = factory.sector(label, gates)
        sol = solve_sector(h, k_states, seed=_sector_seed(seed, label, n_sites))
        if not keep_vectors:
            sol.vectors = None
        solutions[label] = sol
    return SpectrumSet(gate=gates, solutions=solutions, fermi_level=params.fermi_level)


def _sector_seed(root: int, label: SectorLabel, n_sites: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        (int(root), label.n_particles, label.sz2 + 2 * n_sites)
    )
