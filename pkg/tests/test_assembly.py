import numpy as np
import pytest
import scipy.sparse as sp

from cloakopt import mesh as M, scenarios as sc, solver as sv
from cloakopt.assembly import (
    ConstraintError,
    CoupledSystem,
    Operators,
    build_dofmap,
    dirichlet_single_field,
    dump_matrix,
    load_vector,
)
from cloakopt.element import RegularizationParams
from cloakopt.material import BaseMaterial

BASE = BaseMaterial(1.0, 2.0)


def make_system(mesh, load_ids=("XT",), normalize=False):
    loads = [sc.make_load(lid, base=BASE) for lid in load_ids]
    n = len(loads)
    loads = [sc.LoadCase(l.id, 1.0 / n, l.neumann, l.dirichlet, l.body_force, l.pure_traction) for l in loads]
    system = CoupledSystem(mesh, loads, BASE, RegularizationParams(), 1.0, normalize_k=normalize)
    virtuals = [sv.solve_virtual(mesh, ld, BASE) for ld in loads]
    system.set_virtual([v.utilde for v in virtuals])
    return system


# ------------------------------------------------------------------- dofmap
def test_dofmap_no_cloak(rect_mesh):
    dm = build_dofmap(rect_mesh, [sc.make_load("XT", base=BASE)])
    assert dm.n_xi == 0
    assert dm.total == 4 * rect_mesh.n_nodes


def test_dofmap_pure_traction_pins_only(rect_mesh):
    dm = build_dofmap(rect_mesh, [sc.make_load("XT", base=BASE)])
    # three pinned displacement DOFs and the mirrored adjoint set
    assert dm.fixed_mask.sum() == 6
    assert np.all(dm.fixed_vals[dm.fixed_mask] == 0.0)


def test_dofmap_ordering(tiny_hole_mesh):
    loads = [sc.make_load("XT", base=BASE), sc.make_load("YD", base=BASE)]
    dm = build_dofmap(tiny_hole_mesh, loads)
    assert dm.off_u(0) == 2 * dm.n_xi
    assert dm.off_u(1) == 2 * dm.n_xi + dm.n_field
    assert dm.off_g(0) == 2 * dm.n_xi + 2 * dm.n_field
    assert dm.total == 2 * dm.n_xi + 4 * dm.n_field


def test_dofmap_independent_partitions(rect_mesh):
    xd = sc.make_load("XD", base=BASE)
    yt = sc.make_load("YT", base=BASE)
    dm = build_dofmap(rect_mesh, [xd, yt])
    idx_xd, _ = dirichlet_single_field(rect_mesh, xd)
    idx_yt, _ = dirichlet_single_field(rect_mesh, yt)
    # XD constrains left/right edge nodes; YT only pins rigid modes
    left_right = np.unique(
        rect_mesh.boundary_edges[
            np.isin(
                rect_mesh.boundary_tags,
                [M.BoundaryTag.OUTER_LEFT, M.BoundaryTag.OUTER_RIGHT],
            )
        ]
    )
    assert set(idx_xd) == {2 * n + c for n in left_right for c in (0, 1)}
    assert len(idx_yt) == 3
    u0 = dm.off_u(0)
    u1 = dm.off_u(1)
    assert dm.fixed_mask[u0 + idx_xd].all()
    assert dm.fixed_mask[u1 + idx_yt].all()
    assert not dm.fixed_mask[u1 + idx_xd[~np.isin(idx_xd, idx_yt)]].any()


def test_extra_pin_must_be_on_boundary(rect_mesh):
    interior = int(
        np.argmin(np.hypot(rect_mesh.nodes[:, 0], rect_mesh.nodes[:, 1]))
    )
    assert interior not in set(np.unique(rect_mesh.boundary_edges))
    with pytest.raises(ConstraintError):
        build_dofmap(
            rect_mesh, [sc.make_load("XT", base=BASE)], extra_pins=[(0, interior, 0, 0.0)]
        )


# ----------------------------------------------------------------- residual
def test_residual_vanishes_at_no_cloak_state(rect_mesh):
    """On a homogeneous body the initial state [0, 0, U, 0] solves the system:
    u equals the virtual solution, so every residual row vanishes."""
    system = make_system(rect_mesh)
    system.set_penalty(2.0)
    u0 = sv.solve_linear(system.ops, system.loads[0])
    q = system.initial_state([u0])
    r = system.residual(q)
    assert np.abs(r[system.dofmap.free]).max() <= 1e-10


def test_residual_equilibrium_rows_vanish_with_hole(tiny_hole_mesh):
    """With a hole only the u-rows survive: they carry the k*(u - utilde)
    mismatch forcing, while equilibrium and design rows are satisfied."""
    system = make_system(tiny_hole_mesh)
    system.set_penalty(2.0)
    u0 = sv.solve_linear(system.ops, system.loads[0])
    q = system.initial_state([u0])
    r = system.residual(q)
    dm = system.dofmap
    free = dm.free
    urows = np.zeros(dm.total, dtype=bool)
    urows[dm.off_u(0) : dm.off_u(0) + dm.n_field] = True
    others = np.setdiff1d(free, np.flatnonzero(urows))
    assert np.abs(r[others]).max() <= 1e-10
    assert np.abs(r[np.intersect1d(free, np.flatnonzero(urows))]).max() > 1e-6


def test_residual_design_rows_reduce_to_regularization(tiny_hole_mesh):
    system = make_system(tiny_hole_mesh)
    system.set_penalty(0.0)
    rng = np.random.default_rng(0)
    q = np.zeros(system.dofmap.total)
    nxi = system.dofmap.n_xi
    q[:nxi] = rng.normal(size=nxi)
    q[nxi : 2 * nxi] = rng.normal(size=nxi)
    # gamma stays zero; displacement arbitrary
    q[system.dofmap.off_u(0) : system.dofmap.off_u(0) + system.dofmap.n_field] = rng.normal(
        size=system.dofmap.n_field
    )
    r = system.residual(q)
    np.testing.assert_allclose(r[:nxi], system.k_xi @ q[:nxi], rtol=1e-13)
    np.testing.assert_allclose(
        r[nxi : 2 * nxi], system.k_eta @ q[nxi : 2 * nxi], rtol=1e-13
    )


def test_residual_rescaling_rows(tiny_hole_mesh):
    """Scaling (u, gamma, k, loads) by (c, 1/c, 1/c^2, c) scales the residual
    rows blockwise by (1, 1, 1/c, c)."""
    c = 3.7
    system = make_system(tiny_hole_mesh)
    loads2 = [sc.scale_load(system.loads[0], c)]
    system2 = CoupledSystem(
        tiny_hole_mesh, loads2, BASE, RegularizationParams(), 1.0, normalize_k=False
    )
    system2.set_virtual([c * system.utilde[0]])
    system.set_penalty(5.0)
    system2.set_penalty(5.0 / c**2)
    rng = np.random.default_rng(1)
    q = rng.normal(0, 0.3, system.dofmap.total)
    q[system.dofmap.fixed_mask] = system.dofmap.fixed_vals[system.dofmap.fixed_mask]
    dm = system.dofmap
    q2 = q.copy()
    sl_u = slice(dm.off_u(0), dm.off_u(0) + dm.n_field)
    sl_g = slice(dm.off_g(0), dm.off_g(0) + dm.n_field)
    q2[sl_u] = c * q[sl_u]
    q2[sl_g] = q[sl_g] / c
    r1 = system.residual(q)
    r2 = system2.residual(q2)
    nxi = dm.n_xi
    np.testing.assert_allclose(r2[: 2 * nxi], r1[: 2 * nxi], rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(r2[sl_u], r1[sl_u] / c, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(r2[sl_g], c * r1[sl_g], rtol=1e-12, atol=1e-15)


# ----------------------------------------------------------------- jacobian
def test_jacobian_matches_finite_differences(tiny_hole_mesh):
    system = make_system(tiny_hole_mesh)
    system.set_penalty(1.0)
    rng = np.random.default_rng(3)
    q = rng.normal(0, 0.1, system.dofmap.total)
    q[system.dofmap.fixed_mask] = system.dofmap.fixed_vals[system.dofmap.fixed_mask]
    jac = system.jacobian(q).toarray()
    free = system.dofmap.free
    h = 1e-4
    for j in free[:: max(1, len(free) // 60)]:
        qp = q.copy()
        qp[j] += h
        qm = q.copy()
        qm[j] -= h
        col = (system.residual(qp) - system.residual(qm)) / (2 * h)
        ok = np.abs(jac[free, j] - col[free]) <= np.maximum(
            1e-6 * np.abs(col[free]), 1e-9
        )
        assert ok.all()


def test_jacobian_symmetry(tiny_hole_mesh):
    system = make_system(tiny_hole_mesh, load_ids=("XT", "YD"))
    system.set_penalty(4.0)
    rng = np.random.default_rng(5)
    q = rng.normal(0, 0.2, system.dofmap.total)
    jac = system.jacobian(q)
    defect = abs(jac - jac.T).max()
    assert defect <= 1e-12 * abs(jac).max()


def test_jacobian_structure_at_zero_adjoint(tiny_hole_mesh):
    system = make_system(tiny_hole_mesh)
    system.set_penalty(2.0)
    rng = np.random.default_rng(4)
    dm = system.dofmap
    q = np.zeros(dm.total)
    q[: dm.n_xi] = rng.normal(0, 0.3, dm.n_xi)
    q[dm.off_u(0) : dm.off_u(0) + dm.n_field] = rng.normal(size=dm.n_field)
    jac = system.jacobian(q).toarray()
    nxi = dm.n_xi
    # design diagonal reduces to the regularization (second variation vanishes)
    np.testing.assert_allclose(jac[:nxi, :nxi], system.k_xi.toarray(), atol=1e-14)
    # adjoint-adjoint block is identically zero
    gsl = slice(dm.off_g(0), dm.off_g(0) + dm.n_field)
    assert np.abs(jac[gsl, gsl]).max() == 0.0
    # design-displacement coupling vanishes with the adjoint
    usl = slice(dm.off_u(0), dm.off_u(0) + dm.n_field)
    assert np.abs(jac[:nxi, usl]).max() == 0.0
    # design-adjoint coupling is generally nonzero
    assert np.abs(jac[:nxi, gsl]).max() > 0.0


def test_assembled_design_coupling_identity(tiny_hole_mesh):
    """K_xi_u(Qxi, Qgamma) @ Qu equals K_xi_gamma(Qxi, Qu) @ Qgamma globally."""
    system = make_system(tiny_hole_mesh, load_ids=("XT", "YD"))
    system.set_penalty(3.0)
    rng = np.random.default_rng(6)
    dm = system.dofmap
    q = rng.normal(0, 0.3, dm.total)
    jac = system.jacobian(q).tocsr()
    nxi = dm.n_xi
    for i in range(dm.n_loads):
        usl = slice(dm.off_u(i), dm.off_u(i) + dm.n_field)
        gsl = slice(dm.off_g(i), dm.off_g(i) + dm.n_field)
        for row0 in (0, nxi):
            lhs = jac[row0 : row0 + nxi, usl] @ q[usl]
            rhs = jac[row0 : row0 + nxi, gsl] @ q[gsl]
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-15)


# ------------------------------------------------------------- constraints
def test_reduce_keeps_symmetry_and_shrinks(tiny_hole_mesh):
    system = make_system(tiny_hole_mesh, load_ids=("XD",))
    system.set_penalty(1.0)
    q = system.initial_state([sv.solve_linear(system.ops, system.loads[0])])
    jac = system.jacobian(q)
    jr, rr = system.reduce(jac, system.residual(q))
    n_fixed = int(system.dofmap.fixed_mask.sum())
    assert jr.shape[0] == system.dofmap.total - n_fixed
    assert n_fixed > 0
    assert abs(jr - jr.T).max() <= 1e-12 * abs(jr).max()


def test_all_dirichlet_zero_reconstructs_zeros(rect_mesh):
    load = sc.make_load("SD", magnitude=0.0, base=BASE)
    u = sv.solve_linear(Operators(rect_mesh, BASE), load)
    np.testing.assert_allclose(u, 0.0, atol=1e-12)


def test_affine_dirichlet_patch_test(rect_mesh):
    """Prescribed affine boundary displacement is recovered exactly inside."""
    a = np.array([[0.003, 0.001], [-0.002, 0.004]])

    def affine(x):
        return tuple(a @ x)

    tags = [M.BoundaryTag.OUTER_LEFT, M.BoundaryTag.OUTER_RIGHT,
            M.BoundaryTag.OUTER_TOP, M.BoundaryTag.OUTER_BOTTOM]
    load = sc.LoadCase("PATCH", 1.0, {}, {t: affine for t in tags})
    u = sv.solve_linear(Operators(rect_mesh, BASE), load)
    expected = (rect_mesh.nodes @ a.T).ravel()
    np.testing.assert_allclose(u, expected, atol=1e-12)


# ----------------------------------------------------- homogeneous reference
def textbook_global_stiffness(mesh, lam, mu):
    rows, cols, vals = [], [], []
    d = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
    for t in mesh.triangles:
        p = mesh.nodes[t]
        det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (
            p[1, 1] - p[0, 1]
        )
        g = np.array(
            [
                [p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]],
                [p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]],
            ]
        ) / det
        b = np.zeros((3, 6))
        b[0, 0::2] = g[0]
        b[1, 1::2] = g[1]
        b[2, 0::2] = g[1]
        b[2, 1::2] = g[0]
        ke = 0.5 * det * b.T @ d @ b
        dofs = np.empty(6, dtype=int)
        dofs[0::2] = 2 * t
        dofs[1::2] = 2 * t + 1
        rows.append(np.repeat(dofs, 6))
        cols.append(np.tile(dofs, 6))
        vals.append(ke.ravel())
    n = 2 * mesh.n_nodes
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsc()


def test_zero_design_matches_textbook_solver(coarse_hole_mesh):
    ops = Operators(coarse_hole_mesh, BASE, 1.0)
    a_mine = ops.stiffness_matrix()
    lam = BASE.kappa0 - 2.0 * BASE.mu0 / 3.0
    a_ref = textbook_global_stiffness(coarse_hole_mesh, lam, BASE.mu0)
    assert abs(a_mine - a_ref).max() <= 1e-12 * abs(a_ref).max()
    load = sc.make_load("XD", base=BASE)
    idx, vals = dirichlet_single_field(coarse_hole_mesh, load)
    rhs = load_vector(ops, load)
    n = 2 * coarse_hole_mesh.n_nodes
    fixed = np.zeros(n, dtype=bool)
    fixed[idx] = True
    free = np.flatnonzero(~fixed)
    u_ref = np.zeros(n)
    u_ref[idx] = vals
    u_ref[free] = sp.linalg.spsolve(
        a_ref[free][:, free], rhs[free] - a_ref[free][:, idx] @ vals
    )
    u_mine = sv.solve_linear(ops, load)
    assert np.abs(u_mine - u_ref).max() <= 1e-10


def test_matrixmarket_dump(tmp_path, tiny_hole_mesh):
    from scipy.io import mmread

    system = make_system(tiny_hole_mesh)
    system.set_penalty(1.0)
    q = np.zeros(system.dofmap.total)
    jac = system.jacobian(q)
    path = tmp_path / "jac.mtx"
    dump_matrix(path, jac)
    back = mmread(str(path)).tocsc()
    assert abs(back - jac).max() <= 1e-15 * max(abs(jac).max(), 1.0)
