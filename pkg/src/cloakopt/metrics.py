"""Efficacy measures, the design-space metric, and efficacy tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Operators
from .element import MASS6
from .material import BaseMaterial
from .mesh import Mesh, Region


def _exterior_quadratic(mesh: Mesh, v: np.ndarray, w: np.ndarray, mask=None) -> float:
    """Exact integral of v.w over the measured exterior triangles."""
    tris = mesh.triangles
    which = mesh.region == Region.EXTERIOR
    if mask is not None:
        which = which & mask
    p = mesh.nodes[tris[which]]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    udofs = np.empty((which.sum(), 6), dtype=int)
    udofs[:, 0::2] = 2 * tris[which]
    udofs[:, 1::2] = 2 * tris[which] + 1
    ve = v[udofs]
    we = w[udofs]
    return float(np.einsum("m,mi,ij,mj->", areas, ve, MASS6, we))


def rigid_basis(mesh: Mesh) -> list[np.ndarray]:
    """Nodal fields of the two translations and the in-plane rotation."""
    n = mesh.n_nodes
    rx = np.zeros(2 * n)
    rx[0::2] = 1.0
    ry = np.zeros(2 * n)
    ry[1::2] = 1.0
    rw = np.zeros(2 * n)
    rw[0::2] = -mesh.nodes[:, 1]
    rw[1::2] = mesh.nodes[:, 0]
    return [rx, ry, rw]


def remove_rigid(v: np.ndarray, mesh: Mesh, mask=None) -> np.ndarray:
    """Subtract the exterior-L2-best-fit rigid motion from a nodal field."""
    basis = rigid_basis(mesh)
    gram = np.array(
        [[_exterior_quadratic(mesh, a, b, mask) for b in basis] for a in basis]
    )
    rhs = np.array([_exterior_quadratic(mesh, a, v, mask) for a in basis])
    coef = np.linalg.solve(gram, rhs)
    return v - coef[0] * basis[0] - coef[1] * basis[1] - coef[2] * basis[2]


def g_hat(
    u: np.ndarray, utilde: np.ndarray, mesh: Mesh, mask=None, mod_rigid: bool = False
) -> float:
    """Normalized exterior L2 distance between physical and virtual responses.

    Zero means perfect cloaking; the value is invariant under a simultaneous
    rescaling of both fields.  mask optionally restricts the measurement to a
    subset of the exterior triangles.  With mod_rigid the best-fit rigid
    motion is removed from both the mismatch and the reference field, making
    the value independent of how rigid modes were pinned in the two solves;
    use it for pure-traction load cases, whose solutions are only defined
    modulo rigid motions.
    """
    diff = np.asarray(u, dtype=float) - np.asarray(utilde, dtype=float)
    utilde = np.asarray(utilde, dtype=float)
    if mod_rigid:
        diff = remove_rigid(diff, mesh, mask)
        utilde = remove_rigid(utilde, mesh, mask)
    num = _exterior_quadratic(mesh, diff, diff, mask)
    den = _exterior_quadratic(mesh, utilde, utilde, mask)
    return float(np.sqrt(num / den))


def g_hat_multi(states, weights, mod_rigid: bool = False) -> float:
    """Weighted sum of per-load normalized distances.

    states is a sequence of (u, utilde, mesh) triples aligned with weights.
    """
    total = 0.0
    for (u, ut, mesh), w in zip(states, weights):
        total += w * g_hat(u, ut, mesh, mod_rigid=mod_rigid)
    return float(total)


def design_metric(
    xi1, eta1, xi2, eta2, mesh: Mesh, m1=1.0, m2=1.0, a1=1.0, a2=1.0
) -> float:
    """H1-type distance between two designs over the cloak region.

    Fields are given on the cloak nodes in the deterministic cloak-node
    ordering (full-length nodal arrays are also accepted).
    """
    ops = Operators(mesh, BaseMaterial())

    def restrict(v):
        v = np.asarray(v, dtype=float)
        if len(v) == mesh.n_nodes:
            return v[ops.cloak_nodes]
        if len(v) != ops.n_xi:
            raise ValueError("design field has wrong length")
        return v

    dx = restrict(xi1) - restrict(xi2)
    de = restrict(eta1) - restrict(eta2)
    kx = ops.design_matrix(m1, a1)
    ke = ops.design_matrix(m2, a2)
    return float(np.sqrt(dx @ (kx @ dx) + de @ (ke @ de)))


def auxetic_area_fraction(mesh: Mesh, xi, eta, base: BaseMaterial = BaseMaterial()) -> float:
    """Fraction of the cloak area whose centroid Poisson ratio is negative."""
    ops = Operators(mesh, base)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if len(xi) == ops.n_xi:
        xi_full = np.zeros(mesh.n_nodes)
        xi_full[ops.cloak_nodes] = xi
        eta_full = np.zeros(mesh.n_nodes)
        eta_full[ops.cloak_nodes] = eta
    else:
        xi_full, eta_full = xi, eta
    cloak = mesh.region == Region.CLOAK
    areas = mesh.triangle_areas()[cloak]
    tri = mesh.triangles[cloak]
    mu = base.mu0 * np.exp(-xi_full[tri].mean(axis=1))
    ka = base.kappa0 * np.exp(-eta_full[tri].mean(axis=1))
    nu = (3.0 * ka - 2.0 * mu) / (2.0 * (3.0 * ka + mu))
    total = areas.sum()
    return float(areas[nu < 0.0].sum() / total) if total > 0 else 0.0


def stress_frobenius(
    mesh: Mesh,
    u: np.ndarray,
    xi=None,
    eta=None,
    base: BaseMaterial = BaseMaterial(),
    stiffness_ratio: float = 1.0,
) -> np.ndarray:
    """Frobenius norm of the stress at element centroids."""
    ops = Operators(mesh, base, stiffness_ratio)
    fac_mu = np.ones(mesh.n_triangles)
    fac_ka = np.ones(mesh.n_triangles)
    fac_mu[ops.is_inhom] = stiffness_ratio
    fac_ka[ops.is_inhom] = stiffness_ratio
    if ops.n_xi and xi is not None:
        xiv = np.asarray(xi, dtype=float)
        etav = np.asarray(eta, dtype=float)
        fac_mu[ops.cloak_els] = np.exp(-xiv[ops.xi_local].mean(axis=1))
        fac_ka[ops.cloak_els] = np.exp(-etav[ops.xi_local].mean(axis=1))
    ue = u[ops.udofs]  # (M, 6)
    ux = ue[:, 0::2]
    uy = ue[:, 1::2]
    gxx = np.einsum("mi,mi->m", ops.g[:, 0, :], ux)
    gxy = np.einsum("mi,mi->m", ops.g[:, 1, :], ux)
    gyx = np.einsum("mi,mi->m", ops.g[:, 0, :], uy)
    gyy = np.einsum("mi,mi->m", ops.g[:, 1, :], uy)
    mu = base.mu0 * fac_mu
    ka = base.kappa0 * fac_ka
    div = gxx + gyy
    lam = ka - 2.0 * mu / 3.0
    sxx = lam * div + 2.0 * mu * gxx
    syy = lam * div + 2.0 * mu * gyy
    sxy = mu * (gxy + gyx)
    return np.sqrt(sxx**2 + syy**2 + 2.0 * sxy**2)


@dataclass(frozen=True)
class EfficacyReport:
    design_names: tuple
    service_ids: tuple
    values: np.ndarray  # (designs, services) dimensionless ratios
    averages: np.ndarray

    def csv(self) -> str:
        lines = ["design," + ",".join(self.service_ids) + ",average"]
        for name, row, avg in zip(self.design_names, self.values, self.averages):
            cells = ",".join(f"{100.0 * v:.1f}" for v in row)
            lines.append(f"{name},{cells},{100.0 * avg:.1f}")
        return "\n".join(lines) + "\n"


def efficacy_table(
    mesh: Mesh,
    designs: dict,
    service_ids,
    base: BaseMaterial = BaseMaterial(),
    stiffness_ratio: float = 1.0e3,
    virtual_h: float | None = None,
    rect_a: float = 6.0,
    rect_b: float = 4.0,
) -> EfficacyReport:
    """Evaluate frozen designs under every service load.

    designs maps a row name to a (xi, eta) pair on the cloak nodes; None
    stands for the no-cloak baseline.  Each cell is one linear solve.
    """
    from . import scenarios as sc
    from . import solver as sv

    ops = Operators(mesh, base, stiffness_ratio)
    values = np.zeros((len(designs), len(service_ids)))
    for j, sid in enumerate(service_ids):
        load = sc.make_load(sid, rect_a=rect_a, rect_b=rect_b, base=base)
        virt = sv.solve_virtual(mesh, load, base, virtual_h)
        for i, (name, design) in enumerate(designs.items()):
            if design is None:
                u = sv.solve_linear(ops, load)
            else:
                xi, eta = design
                u = sv.solve_linear(ops, load, np.asarray(xi), np.asarray(eta))
            values[i, j] = g_hat(u, virt.utilde, mesh, mod_rigid=load.pure_traction)
    return EfficacyReport(
        design_names=tuple(designs),
        service_ids=tuple(service_ids),
        values=values,
        averages=values.mean(axis=1),
    )
