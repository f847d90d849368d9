"""Device electrostatics: from a device description to Hubbard coefficients.

Two input modes are supported. Direct-parameter mode takes the on-site
and long-range interaction energies and the gate lever arms verbatim
(the bundled array files work this way). Capacitance-matrix mode takes
dot-dot and lead-dot capacitances and derives the same quantities from
the classical charging energy of the array.

Sign conventions: lever arms are positive numbers; a positive voltage
V_l on electrode l lowers the chemical potential at site i by
alpha_{l,i} * V_l (in meV per mV). Ion-core attraction V_{i,j} is
negative; long-range electron repulsion U_{i,j} is positive.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import _toml
from .constants import AF_MV_TO_COULOMB, COULOMB_NM, E_CHARGE, JOULE_TO_MEV
from .errors import ConfigError, ModelError

LEADS = ("D", "S", "G1", "G2")

# Table of (binding energy, on-site charging energy) in meV per dopant
# count for few-P cluster dots near the Fermi level.
DEFAULT_DOPANT_TABLE = {1: (-47.0, 44.0), 2: (-70.0, 45.0), 3: (-81.0, 46.0)}


@dataclass(frozen=True)
class DopantTable:
    """Map dopant count -> (binding_energy, onsite_U) in meV."""

    entries: dict = field(default_factory=lambda: dict(DEFAULT_DOPANT_TABLE))

    def lookup(self, dopant_count: int) -> tuple[float, float]:
        try:
            return self.entries[dopant_count]
        except KeyError:
            raise ConfigError(
                f"no table entry for {dopant_count} dopants; supply binding_meV explicitly"
            ) from None


@dataclass(frozen=True)
class SiteSpec:
    """One lattice site: position in nm, dopant count, binding energy."""

    id: int
    position: tuple[float, float]
    dopant_count: int
    binding_energy: float  # meV, negative w.r.t. conduction band


@dataclass(frozen=True)
class GatePoint:
    """Voltages on the four electrodes, mV. Source/drain default to 0."""

    v_g1: float
    v_g2: float
    v_d: float = 0.0
    v_s: float = 0.0

    def __post_init__(self):
        for v in (self.v_g1, self.v_g2, self.v_d, self.v_s):
            if not np.isfinite(v):
                raise ModelError("gate voltages must be finite")

    def lead_vector(self) -> np.ndarray:
        """Voltages ordered as LEADS = (D, S, G1, G2)."""
        return np.array([self.v_d, self.v_s, self.v_g1, self.v_g2])


@dataclass(eq=False)
class CapacitanceModel:
    """Dot-dot and lead-dot capacitances in aF.

    ``c_dot_dot`` is symmetric with zero diagonal; ``c_lead_dot`` has one
    row per electrode in LEADS order.
    """

    c_dot_dot: np.ndarray
    c_lead_dot: np.ndarray

    def __post_init__(self):
        self.c_dot_dot = np.asarray(self.c_dot_dot, dtype=float)
        self.c_lead_dot = np.asarray(self.c_lead_dot, dtype=float)
        n = self.c_dot_dot.shape[0]
        if self.c_dot_dot.shape != (n, n):
            raise ModelError("c_dot_dot must be square")
        if self.c_lead_dot.shape != (len(LEADS), n):
            raise ModelError(f"c_lead_dot must be {len(LEADS)} x n_sites")
        if not np.allclose(self.c_dot_dot, self.c_dot_dot.T):
            raise ModelError("c_dot_dot must be symmetric")
        if np.any(np.diag(self.c_dot_dot) != 0):
            raise ModelError("c_dot_dot diagonal must be zero")
        if np.any(self.c_dot_dot < 0) or np.any(self.c_lead_dot < 0):
            raise ModelError("capacitances must be non-negative")
        if np.any(self.total_capacitance() <= 0):
            raise ModelError("every site needs positive total capacitance")

    @property
    def n_sites(self) -> int:
        return self.c_dot_dot.shape[0]

    def total_capacitance(self) -> np.ndarray:
        """C_Sigma per site, aF."""
        return self.c_lead_dot.sum(axis=0) + self.c_dot_dot.sum(axis=1)

    def matrix(self) -> np.ndarray:
        """The assembled capacitance matrix (aF): C_Sigma on the
        diagonal, -C_{i,j} off it."""
        c = -self.c_dot_dot.copy()
        np.fill_diagonal(c, self.total_capacitance())
        return c

    def _cho(self):
        try:
            return scipy.linalg.cho_factor(self.matrix())
        except scipy.linalg.LinAlgError as exc:
            raise ModelError(f"capacitance matrix not positive definite: {exc}") from exc


def electrostatic_energy(cap: CapacitanceModel, occupations, gates: GatePoint) -> float:
    """Total electrostatic energy P of the array in meV.

    Charges are q_i = -n_i e + sum_l C_{l,i} V_l; the potential follows
    from the capacitance matrix and P = V.Q / 2.
    """
    n = np.asarray(occupations)
    if n.shape != (cap.n_sites,) or np.any((n < 0) | (n > 2)):
        raise ModelError("occupations must be one of 0,1,2 per site")
    q = -n * E_CHARGE + cap.c_lead_dot.T @ gates.lead_vector() * AF_MV_TO_COULOMB
    v = scipy.linalg.cho_solve(cap._cho(), q)  # aF cancels the 1e-18 below
    return 0.5 * float(v @ q) * 1e18 * JOULE_TO_MEV


def derive_electrostatics(cap: CapacitanceModel, gates: GatePoint):
    """Electrostatic chemical potentials and charging energies, meV.

    Returns (p, u_onsite, u_long):
      p[i]        energy to place the first electron at site i,
      u_onsite[i] extra cost of the second electron at site i,
      u_long[i,j] mutual charging energy of single electrons at i and j.
    u_onsite and u_long are independent of the gate voltages; p is not.
    """
    n = cap.n_sites
    zero = np.zeros(n, dtype=int)
    p0 = electrostatic_energy(cap, zero, gates)

    def energy(occ):
        return electrostatic_energy(cap, occ, gates)

    p = np.empty(n)
    u_onsite = np.empty(n)
    for i in range(n):
        occ1 = zero.copy()
        occ1[i] = 1
        occ2 = zero.copy()
        occ2[i] = 2
        e1, e2 = energy(occ1), energy(occ2)
        p[i] = e1 - p0
        u_onsite[i] = (e2 - e1) - p[i]
    u_long = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            occ = zero.copy()
            occ[i] = 1
            occ[j] = 1
            u_long[i, j] = u_long[j, i] = (energy(occ) - p0) - p[i] - p[j]
    return p, u_onsite, u_long


def lever_arms_from_capacitance(cap: CapacitanceModel) -> np.ndarray:
    """Lever arms alpha_{l,i} (LEADS x n_sites), dimensionless.

    alpha_{l,i} is minus the shift of p_i per mV on electrode l; for the
    assembled capacitance matrix this is (C^-1 C_lead)_{i,l}.
    """
    alpha = scipy.linalg.cho_solve(cap._cho(), cap.c_lead_dot.T)
    alpha = alpha.T
    if np.any(alpha < -1e-12) or np.any(alpha > 1 + 1e-12):
        raise ModelError("lever arms out of [0, 1]; capacitance model inconsistent")
    return np.clip(alpha, 0.0, 1.0)


def point_charge_attraction(positions) -> np.ndarray:
    """Ion-core attraction matrix V_{i,j} = -123 meV nm / |R_i - R_j|."""
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    off = ~np.eye(len(pos), dtype=bool)
    if np.any(dist[off] < 1e-9):
        raise ModelError("coincident site positions")
    v = np.zeros_like(dist)
    v[off] = -COULOMB_NM / dist[off]
    return v


@dataclass(eq=False)
class HubbardParams:
    """The assembled coefficient set of the array Hamiltonian.

    All energies in meV. ``lever`` rows follow LEADS order. ``hopping``
    is the uniform nearest-neighbor amplitude; ``hopping_overrides`` may
    replace it on individual bonds.
    """

    n_sites: int
    rows: int
    cols: int
    positions: np.ndarray  # (n_sites, 2), nm
    binding: np.ndarray  # (n_sites,)
    v_ion: np.ndarray  # (n_sites, n_sites), <= 0 off-diagonal
    u_onsite: np.ndarray  # (n_sites,)
    u_long: np.ndarray  # (n_sites, n_sites), >= 0 off-diagonal
    hopping: float
    lever: np.ndarray  # (4, n_sites)
    fermi_level: float = -80.0
    hopping_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.binding = np.asarray(self.binding, dtype=float)
        self.v_ion = np.asarray(self.v_ion, dtype=float)
        self.u_onsite = np.asarray(self.u_onsite, dtype=float)
        self.u_long = np.asarray(self.u_long, dtype=float)
        self.lever = np.asarray(self.lever, dtype=float)
        n = self.n_sites
        if self.rows * self.cols != n:
            raise ModelError("rows * cols must equal n_sites")
        for name, mat in (("v_ion", self.v_ion), ("u_long", self.u_long)):
            if mat.shape != (n, n):
                raise ModelError(f"{name} must be n_sites x n_sites")
            if not np.allclose(mat, mat.T):
                raise ModelError(f"{name} must be symmetric")
            if np.any(np.diag(mat) != 0):
                raise ModelError(f"{name} must have zero diagonal")
        if np.any(self.u_long < 0):
            raise ModelError("u_long entries must be >= 0")
        if np.any(self.v_ion > 0):
            raise ModelError("v_ion entries must be <= 0")
        if self.lever.shape != (len(LEADS), n):
            raise ModelError("lever must be 4 x n_sites (D, S, G1, G2)")
        if np.any(self.lever < 0) or np.any(self.lever > 1):
            raise ModelError("lever arms must lie in [0, 1]")
        bonds = set(self.bonds())
        for b in self.hopping_overrides:
            if tuple(sorted(b)) not in bonds:
                raise ModelError(f"hopping override on non-bond {b}")

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbor bonds (i < j) of the rows x cols lattice."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                i = r * self.cols + c
                if c + 1 < self.cols:
                    out.append((i, i + 1))
                if r + 1 < self.rows:
                    out.append((i, i + self.cols))
        return out

    def bond_hoppings(self) -> list[tuple[int, int, float]]:
        return [
            (i, j, self.hopping_overrides.get((i, j), self.hopping))
            for i, j in self.bonds()
        ]

    def gate_shift(self, gates: GatePoint) -> np.ndarray:
        """Electrostatic shift of each site potential, meV (lever-arm form)."""
        return -(self.lever.T @ gates.lead_vector())

    def mu(self, gates: GatePoint) -> np.ndarray:
        """Site chemical potentials at the given gate point."""
        return site_chemical_potential(self, gates)

    def column_sites(self, col: int) -> list[int]:
        return [r * self.cols + col for r in range(self.rows)]

    def replace(self, **changes) -> "HubbardParams":
        """A modified copy (re-validated)."""
        return dataclasses.replace(self, **changes)


def site_chemical_potential(
    params: HubbardParams, gates: GatePoint, electrostatic_p=None
) -> np.ndarray:
    """mu_i = p_i(gates) + E_b,i + sum_j V_{i,j}, meV.

    When ``electrostatic_p`` is omitted it is taken from the lever arms,
    p_i = -sum_l alpha_{l,i} V_l. A caller holding a full capacitance
    model should pass the gate-dependent part of its p_i here; the
    static self-charging part is already carried by the binding and
    charging energies.
    """
    if electrostatic_p is None:
        electrostatic_p = params.gate_shift(gates)
    return electrostatic_p + params.binding + params.v_ion.sum(axis=1)


def square_lattice_positions(rows: int, cols: int, constant_nm: float) -> np.ndarray:
    xy = [(c * constant_nm, -r * constant_nm) for r in range(rows) for c in range(cols)]
    return np.array(xy)


@dataclass(eq=False)
class DeviceSpec:
    """Parsed device file: geometry, sites, couplings, model settings."""

    rows: int
    cols: int
    constant_nm: float
    sites: list
    u_onsite: np.ndarray
    u_long: np.ndarray
    v_ion: np.ndarray
    lever: np.ndarray
    hopping: float
    fermi_level: float
    left_sites: tuple
    right_sites: tuple
    capacitance: CapacitanceModel | None = None

    def to_params(self) -> HubbardParams:
        n = self.rows * self.cols
        return HubbardParams(
            n_sites=n,
            rows=self.rows,
            cols=self.cols,
            positions=square_lattice_positions(self.rows, self.cols, self.constant_nm),
            binding=np.array([s.binding_energy for s in self.sites]),
            v_ion=self.v_ion,
            u_onsite=self.u_onsite,
            u_long=self.u_long,
            hopping=self.hopping,
            lever=self.lever,
            fermi_level=self.fermi_level,
        )


def load_device(path) -> DeviceSpec:
    """Parse and validate a device file."""
    path = Path(path)
    try:
        raw = _toml.parse(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read device file {path}: {exc}") from exc
    try:
        return _build_device(raw, path)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed device file {path}: {exc}") from exc


def load_params(path) -> HubbardParams:
    """Parse a device file and assemble its Hamiltonian coefficients."""
    return load_device(path).to_params()


def bundled_device_path(name: str) -> Path:
    """Path of a device file shipped with the package (e.g. 'array1')."""
    here = Path(__file__).parent / "devices" / f"{name}.toml"
    if not here.exists():
        raise ConfigError(f"no bundled device named {name!r}")
    return here


def _require(section: dict, key: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r}")
    return section[key]


def _build_device(raw: dict, path: Path) -> DeviceSpec:
    lattice = _require(raw, "lattice")
    rows, cols = int(_require(lattice, "rows")), int(_require(lattice, "cols"))
    constant = float(_require(lattice, "constant_nm"))
    n = rows * cols
    positions = square_lattice_positions(rows, cols, constant)

    model = _require(raw, "model")
    hopping = float(_require(model, "t_meV"))
    fermi = float(model.get("fermi_level_meV", -80.0))

    table = DopantTable(
        {int(k): (float(v[0]), float(v[1])) for k, v in raw.get("dopant_table", {}).items()}
    ) if "dopant_table" in raw else DopantTable()

    sites_sec = _require(raw, "sites")
    dopants = sites_sec.get("dopants")
    binding = sites_sec.get("binding_meV")
    if dopants is None and binding is None:
        raise ConfigError("[sites] needs dopants and/or binding_meV")
    if dopants is None:
        dopants = [0] * n
    if len(dopants) != n:
        raise ConfigError(f"dopants must list {n} entries")
    table_u = np.full(n, np.nan)
    site_list = []
    for i, d in enumerate(dopants):
        d = int(d)
        if binding is not None:
            eb = float(binding[i])
            if d in table.entries:
                table_u[i] = table.lookup(d)[1]
        else:
            eb, table_u[i] = table.lookup(d)
        site_list.append(SiteSpec(id=i, position=tuple(positions[i]), dopant_count=d, binding_energy=eb))

    inter = _require(raw, "interactions")
    mode = _require(inter, "mode")
    cap = None
    if mode == "capacitance":
        cap = CapacitanceModel(
            c_dot_dot=_matrix(inter, "c_dot_dot_aF", (n, n), path),
            c_lead_dot=_matrix(inter, "c_lead_dot_aF", (len(LEADS), n), path),
        )
        _, u_onsite, u_long = derive_electrostatics(cap, GatePoint(0.0, 0.0))
        lever = lever_arms_from_capacitance(cap)
    elif mode == "direct":
        u_long = _matrix(inter, "u_long_meV", (n, n), path)
        u_onsite = table_u.copy()
        lever = _lever_matrix(raw.get("leads", {}), rows, cols)
    else:
        raise ConfigError(f"unknown interactions mode {mode!r}")

    if "u_onsite_meV" in sites_sec:
        u_onsite = np.asarray(sites_sec["u_onsite_meV"], dtype=float)
    if u_onsite.shape != (n,):
        raise ConfigError(f"u_onsite_meV must list {n} entries")
    if np.any(~np.isfinite(u_onsite)):
        raise ConfigError("u_onsite_meV required (not all sites resolve from the dopant table)")

    if "v_ion_meV" in inter:
        v_ion = _matrix(inter, "v_ion_meV", (n, n), path)
    else:
        v_ion = point_charge_attraction(positions)

    if mode == "capacitance" and "leads" in raw and (
        "alpha_g1" in raw["leads"] or "alpha_g1_rows" in raw["leads"]
    ):
        lever = _lever_matrix(raw["leads"], rows, cols)

    leads_sec = raw.get("leads", {})
    left = tuple(leads_sec.get("left_sites", [r * cols for r in range(rows)]))
    right = tuple(leads_sec.get("right_sites", [r * cols + cols - 1 for r in range(rows)]))

    return DeviceSpec(
        rows=rows,
        cols=cols,
        constant_nm=constant,
        sites=site_list,
        u_onsite=u_onsite,
        u_long=u_long,
        v_ion=v_ion,
        lever=lever,
        hopping=hopping,
        fermi_level=fermi,
        left_sites=left,
        right_sites=right,
        capacitance=cap,
    )


def _matrix(section: dict, key: str, shape, path: Path) -> np.ndarray:
    val = section.get(key)
    if val is None and f"{key}_file" in section:
        val = np.loadtxt(path.parent / section[f"{key}_file"], delimiter=",")
    if val is None:
        raise ConfigError(f"missing matrix {key!r}")
    mat = np.asarray(val, dtype=float)
    if mat.shape != shape:
        raise ConfigError(f"{key} must have shape {shape}, got {mat.shape}")
    return mat


def _lever_matrix(leads: dict, rows: int, cols: int) -> np.ndarray:
    n = rows * cols
    lever = np.zeros((len(LEADS), n))
    for li, name in enumerate(LEADS):
        key = f"alpha_{name.lower()}"
        if key in leads:
            vals = np.asarray(leads[key], dtype=float)
            if vals.shape != (n,):
                raise ConfigError(f"{key} must list {n} entries")
            lever[li] = vals
        elif f"{key}_rows" in leads:
            per_row = np.asarray(leads[f"{key}_rows"], dtype=float)
            if per_row.shape != (rows,):
                raise ConfigError(f"{key}_rows must list {rows} entries")
            lever[li] = np.repeat(per_row, cols)
    return lever
