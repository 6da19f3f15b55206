"""Timoshenko beam model of a monopile-supported tower on a Winkler foundation.

A single bending plane is modelled. Each node carries a lateral displacement
and a rotation. The foundation is a set of lateral springs on the embedded
nodes; seawater is included as added mass over the submerged length.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

BASE_CONDITIONS = ("axial_pin", "pinned", "clamped")
SCOUR_MODES = ("delete", "rescale")
ADDED_MASS_AREAS = ("annulus", "enclosed")
SPRING_MODELS = ("consistent", "lumped")

_STATION_TOL = 1e-9


class ModelError(ValueError):
    """Invalid geometry, foundation or solver input."""


@dataclass(frozen=True)
class BeamSegment:
    """Tubular segment with a linear taper of diameter and wall thickness.

    A solid circular section is expressed as ``wall_thickness == diameter / 2``.
    """

    length: float
    outer_diameter_base: float
    outer_diameter_top: float
    wall_thickness_base: float
    wall_thickness_top: float
    density: float
    youngs_modulus: float
    poisson_ratio: float = 0.3
    shear_correction_factor: float = 0.53

    def __post_init__(self):
        if not self.length > 0:
            raise ModelError(f"segment length must be positive, got {self.length}")
        for d, t in ((self.outer_diameter_base, self.wall_thickness_base),
                     (self.outer_diameter_top, self.wall_thickness_top)):
            if not (t > 0 and d >= 2 * t * (1 - 1e-12)):
                raise ModelError(f"invalid section: diameter {d}, wall thickness {t}")
        if not (self.density > 0 and self.youngs_modulus > 0):
            raise ModelError("density and Young's modulus must be positive")
        if not 0 < self.shear_correction_factor <= 1:
            raise ModelError("shear correction factor must lie in (0, 1]")
        if not -1 < self.poisson_ratio < 0.5:
            raise ModelError("Poisson ratio must lie in (-1, 0.5)")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def section(self, xi: float) -> tuple[float, float, float]:
        """Return (outer diameter, area, second moment) at fraction ``xi`` of the length."""
        d = self.outer_diameter_base + (self.outer_diameter_top - self.outer_diameter_base) * xi
        t = self.wall_thickness_base + (self.wall_thickness_top - self.wall_thickness_base) * xi
        di = max(d - 2.0 * t, 0.0)
        area = math.pi / 4.0 * (d**2 - di**2)
        inertia = math.pi / 64.0 * (d**4 - di**4)
        return d, area, inertia

    @property
    def mass(self) -> float:
        # area is quadratic in the taper fraction, so Simpson's rule is exact
        a0, am, a1 = (self.section(x)[1] for x in (0.0, 0.5, 1.0))
        return self.density * self.length * (a0 + 4.0 * am + a1) / 6.0


@dataclass(frozen=True)
class StructureTemplate:
    """Geometry and materials from the pile toe (z = 0) to the tip.

    ``embedded_length`` is measured up from the toe; the submerged length sits
    directly above the mudline.
    """

    segments: tuple[BeamSegment, ...]
    top_mass: float = 0.0
    embedded_length: float = 0.0
    submerged_length: float = 0.0
    name: str = "custom"
    fluid_density: float = 1025.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ModelError("template needs at least one segment")
        if self.top_mass < 0:
            raise ModelError("top mass must be non-negative")
        if self.embedded_length < 0 or self.submerged_length < 0:
            raise ModelError("embedded and submerged lengths must be non-negative")
        if not self.total_length > self.embedded_length + self.submerged_length:
            raise ModelError("embedded + submerged length must be shorter than the structure")
        if self.fluid_density < 0:
            raise ModelError("fluid density must be non-negative")

    @property
    def total_length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def segment_bounds(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])])

    @property
    def mudline(self) -> float:
        return self.embedded_length

    @property
    def waterline(self) -> float:
        return self.embedded_length + self.submerged_length

    def segment_at(self, z: float) -> tuple[BeamSegment, float]:
        """Segment containing height ``z`` and the local taper fraction."""
        bounds = self.segment_bounds
        i = int(np.clip(np.searchsorted(bounds, z, side="right") - 1, 0, len(self.segments) - 1))
        seg = self.segments[i]
        return seg, (z - bounds[i]) / seg.length

    def above_mudline(self) -> "StructureTemplate":
        """Copy with the embedded portion removed (for fixed-at-mudline models)."""
        cut = self.embedded_length
        if cut == 0:
            return self
        segs = []
        z0 = 0.0
        for seg in self.segments:
            z1 = z0 + seg.length
            if z1 <= cut + _STATION_TOL:
                z0 = z1
                continue
            if z0 < cut:
                xi = (cut - z0) / seg.length
                d, _, _ = seg.section(xi)
                t = seg.wall_thickness_base + (seg.wall_thickness_top - seg.wall_thickness_base) * xi
                seg = replace(seg, length=z1 - cut, outer_diameter_base=d, wall_thickness_base=t)
            segs.append(seg)
            z0 = z1
        return replace(self, segments=tuple(segs), embedded_length=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments"] = [asdict(s) for s in self.segments]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StructureTemplate":
        d = dict(d)
        d["segments"] = tuple(BeamSegment(**s) for s in d["segments"])
        return cls(**d)


@dataclass(frozen=True)
class FoundationModel:
    """Uniform Winkler foundation over the embedded length.

    ``base_condition`` selects the restraint at the pile toe:

    - ``"axial_pin"``: the pin restrains axial motion only, so no bending DOF
      is fixed and the springs carry all lateral load (default)
    - ``"pinned"``: lateral translation fixed, rotation free
    - ``"clamped"``: translation and rotation fixed

    ``scour_mode="delete"`` removes the springs above the scour line and leaves
    the rest unchanged; ``"rescale"`` also scales the surviving springs by the
    remaining fraction of embedded depth.
    """

    stiffness_per_length: float = 0.0
    scour_depth: float = 0.0
    base_condition: str = "axial_pin"
    scour_mode: str = "delete"

    def __post_init__(self):
        if not self.stiffness_per_length >= 0:
            raise ModelError("stiffness per length must be non-negative")
        if self.scour_depth < 0:
            raise ModelError("scour depth must be non-negative")
        if self.base_condition not in BASE_CONDITIONS:
            raise ModelError(f"base_condition must be one of {BASE_CONDITIONS}")
        if self.scour_mode not in SCOUR_MODES:
            raise ModelError(f"scour_mode must be one of {SCOUR_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FoundationModel":
        return cls(**d)


@dataclass
class AssembledSystem:
    stiffness: np.ndarray
    mass: np.ndarray
    z: np.ndarray
    free_dofs: np.ndarray
    spring_nodes: np.ndarray
    spring_stiffness: np.ndarray  # tributary (lumped-equivalent) value per spring node
    template: StructureTemplate = field(repr=False)
    foundation: FoundationModel = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    @staticmethod
    def dof(node: int, kind: str = "w") -> int:
        """Global index of lateral (``"w"``) or rotational (``"theta"``) DOF."""
        return 2 * node + (0 if kind == "w" else 1)

    def reduced(self) -> tuple[np.ndarray, np.ndarray]:
        ix = np.ix_(self.free_dofs, self.free_dofs)
        return self.stiffness[ix], self.mass[ix]


@dataclass
class ModalResult:
    frequencies: np.ndarray
    mode_shapes: np.ndarray
    free_dofs: np.ndarray

    def lateral_shape(self, mode: int, n_dofs: int) -> np.ndarray:
        full = np.zeros(n_dofs)
        full[self.free_dofs] = self.mode_shapes[:, mode]
        return full[0::2]


def timoshenko_element(E, G, kappa, rho, area, inertia, length, added_mass=0.0):
    """Stiffness and consistent mass matrices for a 2-node Timoshenko element.

    DOF order is (w1, theta1, w2, theta2). The mass matrix includes rotary
    inertia; ``added_mass`` (kg/m) contributes translational inertia only.
    """
    L = length
    phi = 12.0 * E * inertia / (kappa * G * area * L**2)
    c = E * inertia / ((1.0 + phi) * L**3)
    k = c * np.array([
        [12.0, 6 * L, -12.0, 6 * L],
        [6 * L, (4 + phi) * L**2, -6 * L, (2 - phi) * L**2],
        [-12.0, -6 * L, 12.0, -6 * L],
        [6 * L, (2 - phi) * L**2, -6 * L, (4 + phi) * L**2],
    ])

    p = phi
    a = 13 / 35 + 7 * p / 10 + p * p / 3
    b = (11 / 210 + 11 * p / 120 + p * p / 24) * L
    cc = 9 / 70 + 3 * p / 10 + p * p / 6
    d = (13 / 420 + 3 * p / 40 + p * p / 24) * L
    e = (1 / 105 + p / 60 + p * p / 120) * L**2
    g = (1 / 140 + p / 60 + p * p / 120) * L**2
    mt = np.array([
        [a, b, cc, -d],
        [b, e, d, -g],
        [cc, d, a, -b],
        [-d, -g, -b, e],
    ]) * (L / (1 + p) ** 2)

    a = 6 / 5
    b = (1 / 10 - p / 2) * L
    e = (2 / 15 + p / 6 + p * p / 3) * L**2
    g = (-1 / 30 - p / 6 + p * p / 6) * L**2
    mr = np.array([
        [a, b, -a, b],
        [b, e, -b, g],
        [-a, -b, a, -b],
        [b, g, -b, e],
    ]) / ((1 + p) ** 2 * L)

    m = (rho * area + added_mass) * mt + rho * inertia * mr
    return k, m


def winkler_element(stiffness_per_length, length):
    """Consistent stiffness of a uniform Winkler foundation under one element."""
    L = length
    return stiffness_per_length * L / 420.0 * np.array([
        [156.0, 22 * L, 54.0, -13 * L],
        [22 * L, 4 * L**2, 13 * L, -3 * L**2],
        [54.0, 13 * L, 156.0, -22 * L],
        [-13 * L, -3 * L**2, -22 * L, 4 * L**2],
    ])


def _stations(template: StructureTemplate, foundation: FoundationModel, n_elements: int) -> np.ndarray:
    total = template.total_length
    keys = [*template.segment_bounds, template.mudline, template.waterline,
            template.mudline - foundation.scour_depth]
    z = np.concatenate([np.linspace(0.0, total, n_elements + 1), keys])
    z = np.sort(z[(z >= 0) & (z <= total)])
    keep = np.concatenate([[True], np.diff(z) > _STATION_TOL * max(total, 1.0)])
    z = z[keep]
    z[-1] = total
    # snap key stations that merged with a grid point
    for k in keys:
        i = int(np.argmin(np.abs(z - k)))
        if abs(z[i] - k) <= _STATION_TOL * max(total, 1.0):
            z[i] = k
    return z


def build_system(template: StructureTemplate, foundation: FoundationModel,
                 n_elements: int = 100, seawater_density: float | None = None,
                 added_mass_area: str = "annulus",
                 spring_model: str = "consistent") -> AssembledSystem:
    """Assemble global stiffness and mass matrices.

    Nodes are placed on a uniform grid with extra stations at segment joints,
    the mudline, the waterline and the scour line.

    ``spring_model="consistent"`` integrates the distributed foundation over
    each in-soil element with the cubic Hermite shape functions.
    ``"lumped"`` puts a spring on each in-soil node instead, of stiffness
    ``stiffness_per_length`` times the in-soil part of its tributary length
    (half of each adjacent element); it converges more slowly under mesh
    refinement.

    ``added_mass_area="annulus"`` adds ``seawater_density * A_wall`` per unit
    length over the submerged elements; ``"enclosed"`` uses the full
    outer-diameter disc instead.
    """
    if n_elements < 10:
        raise ModelError("n_elements must be at least 10")
    if added_mass_area not in ADDED_MASS_AREAS:
        raise ModelError(f"added_mass_area must be one of {ADDED_MASS_AREAS}")
    if spring_model not in SPRING_MODELS:
        raise ModelError(f"spring_model must be one of {SPRING_MODELS}")
    if foundation.scour_depth >= template.embedded_length and foundation.scour_depth > 0:
        raise ModelError("scour depth must be smaller than the embedded length")
    rho_w = template.fluid_density if seawater_density is None else seawater_density
    if rho_w < 0:
        raise ModelError("seawater density must be non-negative")

    z = _stations(template, foundation, n_elements)
    n_nodes = len(z)
    n = 2 * n_nodes
    K = np.zeros((n, n))
    M = np.zeros((n, n))

    for e in range(n_nodes - 1):
        z0, z1 = z[e], z[e + 1]
        zm = 0.5 * (z0 + z1)
        seg, xi = template.segment_at(zm)
        d, area, inertia = seg.section(xi)
        if not (area > 0 and inertia > 0):
            raise ModelError(f"non-positive section properties at z={zm:.3f}")
        added = 0.0
        if rho_w > 0 and template.mudline <= zm <= template.waterline:
            disc = area if added_mass_area == "annulus" else math.pi / 4.0 * d**2
            added = rho_w * disc
        ke, me = timoshenko_element(seg.youngs_modulus, seg.shear_modulus,
                                    seg.shear_correction_factor, seg.density,
                                    area, inertia, z1 - z0, added)
        idx = slice(2 * e, 2 * e + 4)
        K[idx, idx] += ke
        M[idx, idx] += me

    M[-2, -2] += template.top_mass

    top = template.mudline - foundation.scour_depth
    k_s = foundation.stiffness_per_length
    if foundation.scour_mode == "rescale" and template.embedded_length > 0:
        k_s *= top / template.embedded_length
    lo = np.concatenate([[z[0]], 0.5 * (z[:-1] + z[1:])])
    hi = np.concatenate([0.5 * (z[:-1] + z[1:]), [z[-1]]])
    trib = np.clip(np.minimum(hi, top) - lo, 0.0, None)
    nodes = np.flatnonzero(trib > 0)
    if spring_model == "lumped":
        K[2 * nodes, 2 * nodes] += k_s * trib[nodes]
    else:
        for e in np.flatnonzero(z[1:] <= top + _STATION_TOL * max(z[-1], 1.0)):
            idx = slice(2 * e, 2 * e + 4)
            K[idx, idx] += winkler_element(k_s, z[e + 1] - z[e])

    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)

    if foundation.base_condition == "clamped":
        fixed = {0, 1}
    elif foundation.base_condition == "pinned":
        fixed = {0}
    else:
        fixed = set()
    free = np.array([i for i in range(n) if i not in fixed])
    return AssembledSystem(K, M, z, free, nodes, k_s * trib[nodes], template, foundation)


def solve_modes(system: AssembledSystem, n_modes: int = 4) -> ModalResult:
    """Smallest ``n_modes`` eigenpairs of K phi = w^2 M phi on the free DOFs.

    Mode shapes are mass-normalised. A stiffness matrix with rigid-body modes
    (for example no springs and no base restraint) is rejected.
    """
    kr, mr = system.reduced()
    if not 1 <= n_modes <= kr.shape[0]:
        raise ModelError(f"n_modes must be in [1, {kr.shape[0]}]")
    try:
        lam, vec = scipy.linalg.eigh(kr, mr, subset_by_index=[0, n_modes - 1])
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"eigen-solve failed: {exc}") from exc
    scale = np.max(np.abs(np.diag(kr))) / np.max(np.abs(np.diag(mr)))
    if lam[0] <= 1e-10 * scale:
        raise ModelError("stiffness matrix is singular on the free DOFs (rigid-body mode); "
                         "add springs or restrain the base")
    return ModalResult(np.sqrt(lam) / (2.0 * math.pi), vec, system.free_dofs)


def first_frequency(template: StructureTemplate, foundation: FoundationModel,
                    n_elements: int = 100, seawater_density: float | None = None,
                    **kwargs) -> float:
    """First bending frequency in Hz."""
    system = build_system(template, foundation, n_elements, seawater_density, **kwargs)
    return float(solve_modes(system, 1).frequencies[0])


def cantilever_estimate(E: float, I: float, L: float, M: float, M_b: float) -> float:
    """Rayleigh estimate for a uniform cantilever with an end mass, in Hz.

    ``M`` is the end mass and ``M_b`` the beam mass; the beam contributes
    0.24 of its mass at the tip.
    """
    for name, v in (("E", E), ("I", I), ("L", L), ("M", M)):
        if not v > 0:
            raise ModelError(f"{name} must be positive")
    if M_b < 0:
        raise ModelError("M_b must be non-negative")
    return math.sqrt(3.0 * E * I / (L**3 * (M + 0.24 * M_b))) / (2.0 * math.pi)


def tube_inertia(outer_diameter: float, inner_diameter: float) -> float:
    return math.pi / 64.0 * (outer_diameter**4 - inner_diameter**4)


# --- built-in templates -----------------------------------------------------

STEEL_E = 210e9
STEEL_NU = 0.3
COPPER_E = 117e9
COPPER_NU = 0.34


def nrel5mw() -> StructureTemplate:
    """NREL 5 MW tower on a 6 m monopile.

    The rotor-nacelle assembly is a 4.8 m solid cylinder of 3.439 m diameter
    whose density gives 350 t; this carries its rotary inertia, which a point
    mass would miss.
    """
    rna_d, rna_l, rna_m = 3.439, 4.8, 350e3
    rna_rho = rna_m / (math.pi / 4.0 * rna_d**2 * rna_l)
    monopile = BeamSegment(75.0, 6.0, 6.0, 0.0351, 0.0351, 7850.0, STEEL_E, STEEL_NU)
    tower = BeamSegment(87.6, 6.0, 3.87, 0.0351, 0.0247, 8500.0, STEEL_E, STEEL_NU)
    rna = BeamSegment(rna_l, rna_d, rna_d, rna_d / 2, rna_d / 2, rna_rho, STEEL_E, STEEL_NU)
    return StructureTemplate((monopile, tower, rna), top_mass=0.0, embedded_length=45.0,
                             submerged_length=20.0, name="nrel5mw", fluid_density=1030.0)


def nrel5mw_tower() -> StructureTemplate:
    """Tower and rotor-nacelle assembly alone, for a clamped-base check."""
    full = nrel5mw()
    return replace(full, segments=full.segments[1:], embedded_length=0.0,
                   submerged_length=0.0, name="nrel5mw_tower")


def wavetank(top_mass: float = 1.28, submerged_length: float = 0.5) -> StructureTemplate:
    """Copper tube model tower: 1.5 m long, 15 mm OD, 13.6 mm ID, 0.3 m embedded.

    Tube density is set so the tube weighs 401 g including fittings. The
    submerged length above the foam is not documented; 0.5 m is assumed.
    """
    od, idia, length = 0.015, 0.0136, 1.5
    t = (od - idia) / 2
    area = math.pi / 4.0 * (od**2 - idia**2)
    rho = 0.401 / (area * length)
    tube = BeamSegment(length, od, od, t, t, rho, COPPER_E, COPPER_NU)
    return StructureTemplate((tube,), top_mass=top_mass, embedded_length=0.3,
                             submerged_length=submerged_length, name="wavetank",
                             fluid_density=1000.0)


TEMPLATES = {"nrel5mw": nrel5mw, "nrel5mw_tower": nrel5mw_tower, "wavetank": wavetank}


def get_template(name_or_path: str | Path) -> StructureTemplate:
    """Built-in template by name, otherwise a JSON file path."""
    if str(name_or_path) in TEMPLATES:
        return TEMPLATES[str(name_or_path)]()
    return load_template(name_or_path)


def save_template(template: StructureTemplate, path: str | Path) -> None:
    Path(path).write_text(json.dumps(template.to_dict(), indent=2, sort_keys=True))


def load_template(path: str | Path) -> StructureTemplate:
    return StructureTemplate.from_dict(json.loads(Path(path).read_text()))


def save_foundation(foundation: FoundationModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(foundation.to_dict(), indent=2, sort_keys=True))


def load_foundation(path: str | Path) -> FoundationModel:
    return FoundationModel.from_dict(json.loads(Path(path).read_text()))
