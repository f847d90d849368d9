import numpy as np
import pytest

from dotarray.basis import SectorLabel, enumerate_sector
from dotarray.classical import ground_energy_by_n
from dotarray.device import GatePoint, bundled_device_path, load_params
from dotarray.hamiltonian import HamiltonianFactory, build_sector
from dotarray.solver import (
    EigenSolution,
    degeneracy_groups,
    solve_all_sectors,
    solve_sector,
)

from test_hamiltonian import random_params, two_site_params


@pytest.fixture(scope="module")
def array1():
    return load_params(bundled_device_path("array1"))


class TestSolveSector:
    def test_one_dimensional_sector(self):
        params = two_site_params(t=0.4)
        basis = enumerate_sector(2, SectorLabel(0, 0))
        sol = solve_sector(build_sector(basis, params, GatePoint(0, 0)), 5)
        assert sol.method == "dense"
        assert sol.energies == pytest.approx([0.0])
        assert sol.k == 1

    def test_two_site_analytic(self):
        params = two_site_params(binding=(-50.0, -40.0), t=0.7)
        basis = enumerate_sector(2, SectorLabel(1, 1))
        sol = solve_sector(build_sector(basis, params, GatePoint(0, 0)), 2)
        mu = params.mu(GatePoint(0, 0))
        avg, half = (mu[0] + mu[1]) / 2, (mu[0] - mu[1]) / 2
        assert sol.energies == pytest.approx(
            [avg - np.hypot(half, 0.7), avg + np.hypot(half, 0.7)]
        )

    def test_lanczos_matches_dense_on_medium_sector(self, array1):
        basis = enumerate_sector(9, SectorLabel(3, 1))  # dim 756
        h = build_sector(basis, array1, GatePoint(37.0, -12.0))
        dense = solve_sector(h, 25, method="dense")
        lanc = solve_sector(h, 25, method="lanczos", seed=4)
        rel = np.abs(lanc.energies - dense.energies) / np.maximum(1, np.abs(dense.energies))
        assert rel.max() < 1e-8

    def test_reported_pairs_satisfy_residual_bound(self, array1):
        basis = enumerate_sector(9, SectorLabel(4, 0))  # dim 3024 -> lanczos
        h = build_sector(basis, array1, GatePoint(25.0, 60.0))
        sol = solve_sector(h, 12, seed=1)
        assert sol.method == "lanczos"
        for e, v in zip(sol.energies, sol.vectors.T):
            assert np.linalg.norm(h.matvec(v) - e * v) <= 1e-8 * max(1.0, abs(e))
        gram = sol.vectors.T @ sol.vectors
        assert np.abs(gram - np.eye(sol.k)).max() < 1e-8
        assert np.all(np.diff(sol.energies) >= -1e-12)

    def test_ritz_values_monotone_and_krylov_orthogonal(self, array1):
        basis = enumerate_sector(9, SectorLabel(4, 0))
        h = build_sector(basis, array1, GatePoint(0, 0))
        diag = []
        solve_sector(h, 8, method="lanczos", seed=2, diagnostics=diag)
        assert len(diag) >= 2
        for prev, cur in zip(diag, diag[1:]):
            assert np.all(cur["ritz"] <= prev["ritz"] + 1e-10)
        for entry in diag:
            assert entry["gram_error"] < 1e-10

    def test_breakdown_restart_on_degenerate_spectrum(self):
        # zero hopping + uniform sites: massively degenerate diagonal,
        # forcing invariant-subspace restarts
        rng = np.random.default_rng(0)
        params = random_params(rng, 2, 2, t=0.0)
        params = params.replace(
            binding=np.full(4, -60.0),
            u_onsite=np.full(4, 45.0),
            u_long=np.zeros((4, 4)),
            v_ion=np.zeros((4, 4)),
        )
        basis = enumerate_sector(4, SectorLabel(4, 0))  # dim 36
        h = build_sector(basis, params, GatePoint(0, 0))
        sol = solve_sector(h, 10, method="lanczos", seed=3)
        dense = solve_sector(h, 10, method="dense")
        assert sol.energies == pytest.approx(dense.energies, abs=1e-9)

    def test_k_clamped_to_dim(self):
        params = two_site_params()
        basis = enumerate_sector(2, SectorLabel(1, 1))
        sol = solve_sector(build_sector(basis, params, GatePoint(0, 0)), 50)
        assert sol.k == 2


class TestSolveAllSectors:
    def test_zero_hopping_matches_classical_enumeration(self):
        rng = np.random.default_rng(42)
        params = random_params(rng, 2, 2, t=0.0)
        gates = GatePoint(12.0, -7.0)
        spectra = solve_all_sectors(params, gates, k_states=1)
        classical = ground_energy_by_n(params, gates)
        ground = spectra.ground_energy_by_n
        for n in range(0, 9):
            assert ground[n] == pytest.approx(classical[n], abs=1e-9)

    def test_spin_symmetric_ground_energies(self):
        rng = np.random.default_rng(17)
        params = random_params(rng, 2, 2, t=1.1)
        spectra = solve_all_sectors(params, GatePoint(5.0, 5.0), k_states=1)
        for label, sol in spectra.solutions.items():
            mirror = spectra.solutions[label.mirror()]
            assert sol.energies[0] == pytest.approx(mirror.energies[0], abs=1e-9)

    def test_minimal_policy_reproduces_ground_energies(self):
        rng = np.random.default_rng(23)
        params = random_params(rng, 2, 2, t=0.9)
        gates = GatePoint(-14.0, 3.0)
        full = solve_all_sectors(params, gates, k_states=1, sz2_policy="all")
        minimal = solve_all_sectors(params, gates, k_states=1, sz2_policy="minimal")
        for n, e in full.ground_energy_by_n.items():
            assert minimal.ground_energy_by_n[n] == pytest.approx(e, abs=1e-9)

    def test_window_restriction_consistent(self, array1):
        gates = GatePoint(0.0, 0.0)
        factory = HamiltonianFactory(array1)
        full = solve_all_sectors(
            array1, gates, k_states=1, sz2_policy="minimal",
            n_values=range(0, 6), factory=factory,
        )
        window = solve_all_sectors(
            array1, gates, k_states=1, sz2_policy="minimal",
            n_values=range(2, 5), factory=factory,
        )
        for n in range(2, 5):
            assert window.ground_energy_by_n[n] == pytest.approx(
                full.ground_energy_by_n[n], abs=1e-10
            )


class TestDegeneracyGroups:
    def test_grouping(self):
        groups = degeneracy_groups([1.0, 1.0 + 5e-8, 2.0, 3.0, 3.0 + 9e-8, 3.0 + 1.8e-7])
        assert groups == [(0, 2), (2, 1), (3, 3)]

    def test_empty(self):
        assert degeneracy_groups([]) == []
