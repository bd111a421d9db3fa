"""Batch command-line interface: meshes, solves, optimization runs, tables.

Every run directory contains a config snapshot, the mesh, the trace CSV, the
fields VTK and a manifest with content hashes, enough to re-run the case
bit-identically.  Exit codes: 0 ok, 2 config error, 3 solver failure,
4 I/O error; failures also emit a machine-readable error JSON on stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import axisym, mesh as meshmod, metrics, scenarios, solver, vtkio
from .assembly import Operators
from .solver import SolverFailure


class ConfigError(ValueError):
    pass


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def parse_config(path) -> dict:
    """Read `section.key = value` lines; '#' starts a comment."""
    overrides: dict[str, object] = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{path}:{ln}: key {key!r} missing a section prefix")
        overrides[key] = _parse_value(value)
    return overrides


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in text:
        return tuple(_parse_value(t.strip()) for t in text.split(","))
    try:
        iv = int(text)
        return iv
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _prepare_out(args) -> str:
    out = args.out or "runs/run"
    os.makedirs(out, exist_ok=True)
    return out


def _guard_overwrite(path, force: bool):
    if os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")


def _scenario_from_args(args, design_load=None):
    overrides = parse_config(args.config) if args.config else {}
    if args.mesh_h is not None:
        overrides["geometry.target_h"] = args.mesh_h
    if args.seed is not None:
        overrides["geometry.seed"] = args.seed
        overrides["solver.seed"] = args.seed
    try:
        return scenarios.make_scenario(
            args.example, design_load or args.load or "MT", overrides
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _write_config_snapshot(path, scenario):
    lines = []
    for section, obj in (
        ("material", scenario.base),
        ("geometry", scenario.geometry),
        ("solver", scenario.config),
        ("reg", scenario.reg),
    ):
        for key, value in asdict(obj).items():
            if isinstance(value, meshmod.GeometryKind):
                value = value.value
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{section}.{key} = {value}")
    lines.append(f"scenario.stiffness_ratio = {scenario.stiffness_ratio}")
    lines.append(f"scenario.example = {scenario.example}")
    lines.append(f"scenario.design_load = {scenario.design_load}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def save_design(path, cloak_nodes, xi, eta) -> None:
    lines = ["cloakdesign 1", f"nodes {len(cloak_nodes)}"]
    lines += [
        f"{int(n)} {x:.17g} {e:.17g}" for n, x, e in zip(cloak_nodes, xi, eta)
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_design(path):
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0] != "cloakdesign 1":
        raise ConfigError(f"{path}: not a design file")
    n = int(lines[1].split()[1])
    nodes, xi, eta = [], [], []
    for ln in lines[2 : 2 + n]:
        a, b, c = ln.split()
        nodes.append(int(a))
        xi.append(float(b))
        eta.append(float(c))
    return np.array(nodes), np.array(xi), np.array(eta)


def _manifest(out, files, extra=None) -> dict:
    man = {
        "files": {os.path.basename(p): _sha256(p) for p in files},
        **(extra or {}),
    }
    man_path = os.path.join(out, "manifest.json")
    with open(man_path, "w") as f:
        json.dump(man, f, indent=2, sort_keys=True)
    return man


def cmd_mesh(args) -> int:
    sc = _scenario_from_args(args, design_load="XT" if args.example == 2 else args.load)
    m = meshmod.build(sc.geometry)
    report = meshmod.validate(m)
    out = _prepare_out(args)
    path = os.path.join(out, "mesh.txt")
    _guard_overwrite(path, args.force)
    meshmod.save_mesh(m, path)
    print(json.dumps({
        "mesh": path,
        "nodes": m.n_nodes,
        "triangles": m.n_triangles,
        "h": m.h,
        "validation": report,
    }))
    return EXIT_OK


def cmd_virtual(args) -> int:
    sc = _scenario_from_args(args)
    m = meshmod.build(sc.geometry)
    load = scenarios.make_load(args.load or "XT", base=sc.base,
                               rect_a=sc.geometry.rect_a, rect_b=sc.geometry.rect_b)
    virt = solver.solve_virtual(m, load, sc.base, sc.config.virtual_h)
    out = _prepare_out(args)
    path = os.path.join(out, f"virtual_{load.id}.vtk")
    _guard_overwrite(path, args.force)
    vtkio.write_vtk(path, m, point_vectors={f"utilde_{load.id}": virt.utilde})
    norm = np.sqrt(Operators(m, sc.base).exterior_l2sq(virt.utilde))
    print(json.dumps({"virtual": path, "exterior_l2_norm": norm}))
    return EXIT_OK


def cmd_nocloak(args) -> int:
    sc = _scenario_from_args(args)
    m = meshmod.build(sc.geometry)
    lid = args.load or "XT"
    load = scenarios.make_load(lid, base=sc.base,
                               rect_a=sc.geometry.rect_a, rect_b=sc.geometry.rect_b)
    u = solver.solve_nocloak(m, load, sc.base, sc.stiffness_ratio)
    virt = solver.solve_virtual(m, load, sc.base, sc.config.virtual_h)
    g = metrics.g_hat(u, virt.utilde, m, mod_rigid=load.pure_traction)
    print(json.dumps({"load": lid, "g_hat": g, "g_hat_percent": 100.0 * g}))
    return EXIT_OK


def cmd_optimize(args) -> int:
    sc = _scenario_from_args(args)
    out = _prepare_out(args)
    trace_path = os.path.join(out, "trace.csv")
    _guard_overwrite(trace_path, args.force)
    m = meshmod.build(sc.geometry)
    meshmod.save_mesh(m, os.path.join(out, "mesh.txt"))
    _write_config_snapshot(os.path.join(out, "config.txt"), sc)
    log = sys.stderr if not args.quiet else None
    result = solver.newton_continuation(
        m, sc.loads, sc.config, sc.base, sc.reg, sc.stiffness_ratio, log=log
    )
    # partial results are still written when the continuation stops early
    with open(trace_path, "w") as f:
        f.write("\n".join(result.trace_rows()) + "\n")
    design_path = os.path.join(out, "design.txt")
    save_design(design_path, result.cloak_nodes, result.xi, result.eta)
    fields_path = os.path.join(out, "fields.vtk")
    vtkio.export_fields(
        fields_path, m, result, sc.base, sc.stiffness_ratio,
        load_ids=[ld.id for ld in sc.loads],
    )
    files = [trace_path, design_path, fields_path,
             os.path.join(out, "mesh.txt"), os.path.join(out, "config.txt")]
    _manifest(out, files, {
        "example": sc.example,
        "design_load": sc.design_load,
        "converged": result.converged,
        "failure_k": result.failure_k,
        "g_final": result.trace[-1].g_multi if result.trace else None,
        "step_seconds": result.step_seconds,
    })
    if not result.converged:
        raise SolverFailure(
            f"continuation stopped at k={result.failure_k:g}; partial results "
            f"written to {out} (reached "
            f"{result.trace[-1].k:g})" if result.trace else
            f"continuation failed at the first step k={result.failure_k:g}"
        )
    print(json.dumps({
        "out": out,
        "g_final": result.trace[-1].g_multi if result.trace else None,
        "steps": len(result.trace),
    }))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    sc = _scenario_from_args(args)
    if args.mesh:
        m = meshmod.load_mesh(args.mesh)
    else:
        m = meshmod.build(sc.geometry)
    ops = Operators(m, sc.base, sc.stiffness_ratio)
    if args.design:
        nodes, xi, eta = load_design(args.design)
        expect = np.unique(m.triangles[m.region == meshmod.Region.CLOAK])
        if len(nodes) != len(expect) or not np.array_equal(nodes, expect):
            raise ConfigError("design file does not match the mesh cloak nodes")
    else:
        xi = eta = None
    results = {}
    service = [args.load] if args.load else list(sc.service_loads)
    for lid in service:
        load = scenarios.make_load(lid, base=sc.base,
                                   rect_a=sc.geometry.rect_a, rect_b=sc.geometry.rect_b)
        u = solver.solve_linear(ops, load, xi, eta)
        virt = solver.solve_virtual(m, load, sc.base, sc.config.virtual_h)
        results[lid] = metrics.g_hat(u, virt.utilde, m, mod_rigid=load.pure_traction)
    print(json.dumps({"g_hat": results}))
    if args.out:
        out = _prepare_out(args)
        with open(os.path.join(out, "evaluate.json"), "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_table(args) -> int:
    sc = _scenario_from_args(args)
    m = meshmod.build(sc.geometry)
    designs: dict[str, object] = {}
    for name in (args.designs or "NC").split(","):
        name = name.strip().upper()
        if name == "NC":
            designs["NC"] = None
        else:
            path = os.path.join(args.design_dir or ".", f"design_{name}.txt")
            nodes, xi, eta = load_design(path)
            designs[name] = (xi, eta)
    rep = metrics.efficacy_table(
        m, designs, sc.service_loads, sc.base, sc.stiffness_ratio,
        sc.config.virtual_h, sc.geometry.rect_a, sc.geometry.rect_b,
    )
    csv = rep.csv()
    if args.out:
        out = _prepare_out(args)
        path = os.path.join(out, "table.csv")
        _guard_overwrite(path, args.force)
        with open(path, "w") as f:
            f.write(csv)
    sys.stdout.write(csv)
    return EXIT_OK


def cmd_axisym(args) -> int:
    spec = axisym.CylinderSpec()
    kind = {
        "uniform-p": axisym.ProfileKind.UNIFORM_P,
        "kappa-mu": axisym.ProfileKind.UNIFORM_KAPPA_MU,
        "linear-p": axisym.ProfileKind.LINEAR_P,
    }.get(args.kind)
    if kind is None:
        raise ConfigError(f"unknown landscape kind {args.kind!r}")
    n = args.grid
    if kind == axisym.ProfileKind.UNIFORM_P:
        lo, hi = axisym.mu_limits(spec)
        grid = np.linspace(max(lo / spec.mu0, 0.05), hi / spec.mu0, n)
    elif kind == axisym.ProfileKind.UNIFORM_KAPPA_MU:
        lo, hi = axisym.mu_limits(spec)
        grid = (np.linspace(0.1, 4.0, n), np.linspace(lo * 1.01, hi * 0.99, n))
    else:
        grid = (np.linspace(0.5, 3.0, n), np.linspace(0.5, 3.0, n))
    rows = axisym.objective_landscape(spec, kind, grid)
    csv = axisym.landscape_csv(rows)
    if args.out:
        out = _prepare_out(args)
        path = os.path.join(out, f"landscape_{args.kind}.csv")
        _guard_overwrite(path, args.force)
        with open(path, "w") as f:
            f.write(csv)
        print(json.dumps({"landscape": path, "rows": len(rows)}))
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def cmd_report(args) -> int:
    run = args.run or args.out
    if not run or not os.path.isdir(run):
        raise FileNotFoundError(f"run directory {run!r} not found")
    files = [
        os.path.join(run, name)
        for name in sorted(os.listdir(run))
        if name != "manifest.json" and os.path.isfile(os.path.join(run, name))
    ]
    config_path = os.path.join(run, "config.txt")
    extra = {}
    if os.path.isfile(config_path):
        extra["config_hash"] = _sha256(config_path)
    man = _manifest(run, files, extra)
    print(json.dumps(man, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloakopt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    commands = {
        "mesh": cmd_mesh,
        "virtual": cmd_virtual,
        "nocloak": cmd_nocloak,
        "optimize": cmd_optimize,
        "evaluate": cmd_evaluate,
        "table": cmd_table,
        "axisym": cmd_axisym,
        "report": cmd_report,
    }
    for name, fn in commands.items():
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--force", action="store_true")
        sp.add_argument("--example", type=int, default=1, choices=(1, 2, 3, 4))
        sp.add_argument("--load", default=None,
                        help="XT|YT|ST|XD|YD|SD|MT|MD")
        sp.add_argument("--mesh-h", type=float, default=None, dest="mesh_h")
        sp.add_argument("--quiet", action="store_true")
        if name == "evaluate":
            sp.add_argument("--design", default=None)
            sp.add_argument("--mesh", default=None)
        if name == "table":
            sp.add_argument("--designs", default="NC")
            sp.add_argument("--design-dir", default=None, dest="design_dir")
        if name == "axisym":
            sp.add_argument("--kind", default="uniform-p")
            sp.add_argument("--grid", type=int, default=101)
        if name == "report":
            sp.add_argument("--run", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_CONFIG}))
        return EXIT_CONFIG
    except (SolverFailure, solver.SingularSystemError) as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_SOLVER}))
        return EXIT_SOLVER
    except (OSError, FileExistsError, meshmod.MeshError) as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_IO}))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
