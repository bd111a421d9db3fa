"""The six benchmark load cases and the four experiment configurations.

Load naming: first letter X/Y/S is the deformation mode (extension along x,
extension along y, simple shear), second letter T/D selects traction- or
displacement-controlled boundary data.  Tractions act on the two opposite
edges for X/Y extension and as a self-equilibrated couple on all four edges
for shear; displacement control prescribes both components on the loaded
edges.  Load magnitudes are conventions (a 1e-2 nominal strain scale): with
the normalized penalty the computed designs are invariant to them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

from .element import RegularizationParams
from .material import BaseMaterial
from .mesh import BoundaryTag, GeometryKind, GeometrySpec
from .solver import SolverConfig

LOAD_IDS = ("XT", "YT", "ST", "XD", "YD", "SD")
COMBO_IDS = ("MT", "MD")


class UnknownLoadError(ValueError):
    pass


@dataclass(frozen=True)
class LoadCase:
    id: str
    weight: float
    neumann: dict  # BoundaryTag -> traction(x) -> (tx, ty)
    dirichlet: dict  # BoundaryTag -> displacement(x) -> (ux, uy)
    body_force: Callable | None = None
    pure_traction: bool = False


def _const(vec):
    def fn(_x, _vec=tuple(vec)):
        return _vec

    return fn


def make_load(
    load_id: str,
    magnitude: float | None = None,
    rect_a: float = 6.0,
    rect_b: float = 4.0,
    base: BaseMaterial = BaseMaterial(),
    weight: float = 1.0,
) -> LoadCase:
    """Build one of the six load cases at the default or given magnitude.

    For traction control, magnitude is the traction value (default 1e-2*mu0);
    for displacement control it is the nominal strain (default 1e-2).
    """
    load_id = load_id.upper()
    L, R = BoundaryTag.OUTER_LEFT, BoundaryTag.OUTER_RIGHT
    T, B = BoundaryTag.OUTER_TOP, BoundaryTag.OUTER_BOTTOM
    if load_id == "XT":
        s = magnitude if magnitude is not None else 1e-2 * base.mu0
        return LoadCase(load_id, weight, {L: _const((-s, 0.0)), R: _const((s, 0.0))}, {}, pure_traction=True)
    if load_id == "YT":
        s = magnitude if magnitude is not None else 1e-2 * base.mu0
        return LoadCase(load_id, weight, {B: _const((0.0, -s)), T: _const((0.0, s))}, {}, pure_traction=True)
    if load_id == "ST":
        s = magnitude if magnitude is not None else 1e-2 * base.mu0
        neumann = {
            L: _const((0.0, -s)),
            R: _const((0.0, s)),
            T: _const((s, 0.0)),
            B: _const((-s, 0.0)),
        }
        return LoadCase(load_id, weight, neumann, {}, pure_traction=True)
    if load_id == "XD":
        eps = magnitude if magnitude is not None else 1e-2
        ubar = eps * rect_a / 2.0
        return LoadCase(load_id, weight, {}, {L: _const((-ubar, 0.0)), R: _const((ubar, 0.0))})
    if load_id == "YD":
        eps = magnitude if magnitude is not None else 1e-2
        ubar = eps * rect_b / 2.0
        return LoadCase(load_id, weight, {}, {B: _const((0.0, -ubar)), T: _const((0.0, ubar))})
    if load_id == "SD":
        eps = magnitude if magnitude is not None else 1e-2

        def shear(x, _e=eps):
            return (_e * x[1], _e * x[0])

        return LoadCase(load_id, weight, {}, {L: shear, R: shear, T: shear, B: shear})
    raise UnknownLoadError(f"unknown load id {load_id!r}")


def scale_load(load: LoadCase, c: float) -> LoadCase:
    """Multiply all boundary data and body forces of a load case by c."""

    def wrap(fn):
        def scaled(x, _fn=fn, _c=c):
            v = _fn(x)
            return (_c * v[0], _c * v[1])

        return scaled

    return replace(
        load,
        neumann={k: wrap(v) for k, v in load.neumann.items()},
        dirichlet={k: wrap(v) for k, v in load.dirichlet.items()},
        body_force=None if load.body_force is None else wrap(load.body_force),
    )


def make_combo(load_ids, weights, rect_a=6.0, rect_b=4.0, base=BaseMaterial()):
    """Weighted multi-load combination; weights are normalized to sum to one."""
    weights = [float(w) for w in weights]
    total = sum(weights)
    if abs(total - 1.0) > 1e-12:
        warnings.warn(f"load weights sum to {total:g}; normalizing")
        weights = [w / total for w in weights]
    return tuple(
        make_load(lid, rect_a=rect_a, rect_b=rect_b, base=base, weight=w)
        for lid, w in zip(load_ids, weights)
        if w > 0.0
    )


@dataclass(frozen=True)
class Scenario:
    example: int
    design_load: str
    geometry: GeometrySpec
    loads: tuple
    config: SolverConfig
    reg: RegularizationParams
    base: BaseMaterial = BaseMaterial()
    stiffness_ratio: float = 1.0e3
    service_loads: tuple = LOAD_IDS


_EXAMPLE_GEOMETRY = {
    1: GeometrySpec(kind=GeometryKind.ELLIPTIC_HOLE, target_h=0.1),
    2: GeometrySpec(kind=GeometryKind.ELLIPTIC_CUT, target_h=0.1),
    3: GeometrySpec(kind=GeometryKind.RECT_INHOM, target_h=0.1),
    4: GeometrySpec(kind=GeometryKind.RANDOM_DISKS, target_h=0.1, seed=42),
}

_EXAMPLE_LOADS = {
    1: LOAD_IDS + COMBO_IDS,
    2: ("XT", "ST", "MT"),
    3: LOAD_IDS + COMBO_IDS,
    4: LOAD_IDS + COMBO_IDS,
}

_EXAMPLE_REG = {
    1: RegularizationParams(1.0, 1.0, 1.0, 1.0),
    2: RegularizationParams(2.0, 2.0, 3.0, 3.0),
    3: RegularizationParams(1.0, 1.0, 1.0, 1.0),
    4: RegularizationParams(1.0, 1.0, 1.0, 1.0),
}


def design_loads_for(example: int, design_load: str, base=BaseMaterial(), rect_a=6.0, rect_b=4.0):
    """Resolve a design-load id (single or MT/MD combo) into weighted load cases."""
    design_load = design_load.upper()
    if design_load not in _EXAMPLE_LOADS[example]:
        raise UnknownLoadError(
            f"load {design_load!r} is not used by example {example} "
            f"(available: {_EXAMPLE_LOADS[example]})"
        )
    if design_load == "MT":
        if example == 2:
            return make_combo(("XT", "ST"), (0.5, 0.5), rect_a, rect_b, base)
        return make_combo(("XT", "YT", "ST"), (1 / 3, 1 / 3, 1 / 3), rect_a, rect_b, base)
    if design_load == "MD":
        return make_combo(("XD", "YD", "SD"), (1 / 3, 1 / 3, 1 / 3), rect_a, rect_b, base)
    return (make_load(design_load, rect_a=rect_a, rect_b=rect_b, base=base, weight=1.0),)


def make_scenario(example: int, design_load: str = "MT", overrides: dict | None = None) -> Scenario:
    """Benchmark scenario for one of the four examples.

    overrides maps dotted keys ('geometry.target_h', 'solver.k_target',
    'reg.m1', 'material.mu0', 'scenario.stiffness_ratio') to values.
    """
    if example not in _EXAMPLE_GEOMETRY:
        raise ValueError(f"unknown example {example}")
    overrides = dict(overrides or {})
    geometry = _EXAMPLE_GEOMETRY[example]
    config = SolverConfig()
    reg = _EXAMPLE_REG[example]
    base = BaseMaterial()
    stiffness_ratio = 1.0e3

    def pop_section(prefix, obj):
        fields = {}
        for key in list(overrides):
            if key.startswith(prefix + "."):
                fields[key.split(".", 1)[1]] = overrides.pop(key)
        return replace(obj, **fields) if fields else obj

    base = pop_section("material", base)
    geometry = pop_section("geometry", geometry)
    config = pop_section("solver", config)
    reg = pop_section("reg", reg)
    if "scenario.stiffness_ratio" in overrides:
        stiffness_ratio = float(overrides.pop("scenario.stiffness_ratio"))
    if overrides:
        raise ValueError(f"unknown override keys: {sorted(overrides)}")
    loads = design_loads_for(example, design_load, base, geometry.rect_a, geometry.rect_b)
    service = _EXAMPLE_LOADS[example][:2] if example == 2 else LOAD_IDS
    return Scenario(
        example=example,
        design_load=design_load.upper(),
        geometry=geometry,
        loads=loads,
        config=config,
        reg=reg,
        base=base,
        stiffness_ratio=stiffness_ratio,
        service_loads=service,
    )
