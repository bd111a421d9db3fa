"""Legacy ASCII VTK export of meshes and solution fields."""

from __future__ import annotations

import numpy as np

from .material import BaseMaterial
from .mesh import Mesh, Region


def write_vtk(
    path,
    mesh: Mesh,
    point_vectors: dict | None = None,
    point_scalars: dict | None = None,
    cell_scalars: dict | None = None,
    title: str = "cloakopt fields",
) -> None:
    """Write an unstructured triangle grid with nodal and cell data.

    point_vectors maps names to interleaved (2n,) or (n, 2) arrays;
    point_scalars to (n,) arrays; cell_scalars to (m,) arrays.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes]
    m = mesh.n_triangles
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {t[0]} {t[1]} {t[2]}" for t in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m

    if point_vectors or point_scalars:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, v in (point_vectors or {}).items():
            v = np.asarray(v, dtype=float).reshape(mesh.n_nodes, 2)
            lines.append(f"VECTORS {name} double")
            lines += [f"{a:.17g} {b:.17g} 0" for a, b in v]
        for name, v in (point_scalars or {}).items():
            v = np.asarray(v, dtype=float)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{a:.17g}" for a in v]
    if cell_scalars:
        lines.append(f"CELL_DATA {m}")
        for name, v in cell_scalars.items():
            v = np.asarray(v, dtype=float)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{a:.17g}" for a in v]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_vtk_counts(path) -> tuple[int, int]:
    """Node and cell counts of a legacy VTK file (for round-trip checks)."""
    n_points = n_cells = -1
    with open(path) as f:
        for line in f:
            if line.startswith("POINTS"):
                n_points = int(line.split()[1])
            elif line.startswith("CELLS"):
                n_cells = int(line.split()[1])
    return n_points, n_cells


def export_fields(
    path,
    mesh: Mesh,
    result,
    base: BaseMaterial = BaseMaterial(),
    stiffness_ratio: float = 1.0e3,
    load_ids=None,
) -> None:
    """Write the standard field bundle of an optimization result.

    Nodal data: per-load displacement and adjoint fields, the design fields
    and the moduli/Poisson ratio they induce.  Cell data: region tag,
    per-load stress Frobenius norm, auxetic flag.
    """
    from .metrics import stress_frobenius

    n = mesh.n_nodes
    xi_full = np.zeros(n)
    eta_full = np.zeros(n)
    if len(result.cloak_nodes):
        xi_full[result.cloak_nodes] = result.xi
        eta_full[result.cloak_nodes] = result.eta
    mu = base.mu0 * np.exp(-xi_full)
    kappa = base.kappa0 * np.exp(-eta_full)
    nu = (3.0 * kappa - 2.0 * mu) / (2.0 * (3.0 * kappa + mu))

    ids = load_ids or [f"load{i}" for i in range(len(result.u))]
    point_vectors = {}
    for i, lid in enumerate(ids):
        point_vectors[f"u_{lid}"] = result.u[i]
        point_vectors[f"gamma_{lid}"] = result.gamma[i]
        point_vectors[f"utilde_{lid}"] = result.utilde[i]
    point_scalars = {"xi": xi_full, "eta": eta_full, "mu": mu, "kappa": kappa, "nu": nu}

    cell_scalars = {"region": mesh.region.astype(float)}
    tri = mesh.triangles
    cloak_cell = mesh.region == Region.CLOAK
    mu_cell = np.full(mesh.n_triangles, base.mu0)
    kappa_cell = np.full(mesh.n_triangles, base.kappa0)
    mu_cell[cloak_cell] = base.mu0 * np.exp(-xi_full[tri[cloak_cell]].mean(axis=1))
    kappa_cell[cloak_cell] = base.kappa0 * np.exp(-eta_full[tri[cloak_cell]].mean(axis=1))
    nu_cell = (3.0 * kappa_cell - 2.0 * mu_cell) / (2.0 * (3.0 * kappa_cell + mu_cell))
    cell_scalars["auxetic"] = (nu_cell < 0.0).astype(float)
    for i, lid in enumerate(ids):
        cell_scalars[f"stress_frobenius_{lid}"] = stress_frobenius(
            mesh, result.u[i], result.xi, result.eta, base, stiffness_ratio
        )
    write_vtk(path, mesh, point_vectors, point_scalars, cell_scalars)
