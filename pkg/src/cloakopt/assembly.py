"""Global DOF management and assembly of the coupled optimization system.

The global unknown vector is laid out as [xi, eta, u_(1), ..., u_(N),
gamma_(1), ..., gamma_(N)]: design DOFs exist for every node incident to a
cloak triangle, displacement and adjoint DOFs are interleaved (x, y) per node
and replicated per load case.  All element blocks are assembled in batched
einsum form; deterministic element order and duplicate-summing COO
accumulation keep results bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .element import MASS3, MASS6, QUAD_BARY, QUAD_W, edge_traction
from .material import BaseMaterial
from .mesh import BoundaryTag, Mesh, Region


class ConstraintError(ValueError):
    pass


class Operators:
    """Per-mesh geometric factors shared by every assembly routine."""

    def __init__(self, mesh: Mesh, base: BaseMaterial, stiffness_ratio: float = 1.0):
        self.mesh = mesh
        self.base = base
        self.stiffness_ratio = float(stiffness_ratio)

        tris = mesh.triangles
        p = mesh.nodes[tris]  # (M, 3, 2)
        x, y = p[..., 0], p[..., 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
            y[:, 1] - y[:, 0]
        )
        if np.any(det <= 0.0):
            raise ValueError("mesh contains inverted or degenerate triangles")
        self.areas = 0.5 * det
        g = np.empty((len(tris), 2, 3))
        g[:, 0, 0] = y[:, 1] - y[:, 2]
        g[:, 0, 1] = y[:, 2] - y[:, 0]
        g[:, 0, 2] = y[:, 0] - y[:, 1]
        g[:, 1, 0] = x[:, 2] - x[:, 1]
        g[:, 1, 1] = x[:, 0] - x[:, 2]
        g[:, 1, 2] = x[:, 1] - x[:, 0]
        g /= det[:, None, None]
        self.g = g

        d = np.zeros((len(tris), 6))
        d[:, 0::2] = g[:, 0, :]
        d[:, 1::2] = g[:, 1, :]
        self.d = d
        s = np.zeros((len(tris), 4, 6))
        s[:, 0, 0::2] = g[:, 0, :]
        s[:, 1, 0::2] = 0.5 * g[:, 1, :]
        s[:, 1, 1::2] = 0.5 * g[:, 0, :]
        s[:, 2] = s[:, 1]
        s[:, 3, 1::2] = g[:, 1, :]
        self.s = s

        self.dtd = np.einsum("mj,mk->mjk", d, d)
        self.w1core = 2.0 * np.einsum("maj,mak->mjk", s, s) - (2.0 / 3.0) * self.dtd

        self.is_cloak = mesh.region == Region.CLOAK
        self.is_ext = mesh.region == Region.EXTERIOR
        self.is_inhom = mesh.region == Region.INHOMOGENEITY

        # element -> interleaved single-field DOF indices
        udofs = np.empty((len(tris), 6), dtype=int)
        udofs[:, 0::2] = 2 * tris
        udofs[:, 1::2] = 2 * tris + 1
        self.udofs = udofs

        self.cloak_nodes = np.unique(tris[self.is_cloak]) if self.is_cloak.any() else np.array([], dtype=int)
        xi_of_node = -np.ones(mesh.n_nodes, dtype=int)
        xi_of_node[self.cloak_nodes] = np.arange(len(self.cloak_nodes))
        self.xi_of_node = xi_of_node
        self.n_xi = len(self.cloak_nodes)
        self.cloak_els = np.flatnonzero(self.is_cloak)
        self.xi_local = xi_of_node[tris[self.cloak_els]]  # (Mc, 3)

    # ------------------------------------------------------------------
    def factors(self, qxi: np.ndarray | None, qeta: np.ndarray | None, uniform=False):
        """Quadrature-averaged moduli multipliers per element.

        Returns (favg_mu, favg_ka) over all elements plus the first and
        second scalar-shape moments (fb_mu, fb_ka, fbb_mu, fbb_ka) over cloak
        elements, used by the design blocks.
        """
        m = self.mesh.n_triangles
        favg_mu = np.ones(m)
        favg_ka = np.ones(m)
        if not uniform:
            favg_mu[self.is_inhom] = self.stiffness_ratio
            favg_ka[self.is_inhom] = self.stiffness_ratio
        mc = len(self.cloak_els)
        fb_mu = np.tile(QUAD_W @ QUAD_BARY, (mc, 1))
        fb_ka = fb_mu.copy()
        bb = np.einsum("q,qi,qj->ij", QUAD_W, QUAD_BARY, QUAD_BARY)
        fbb_mu = np.tile(bb, (mc, 1, 1))
        fbb_ka = fbb_mu.copy()
        # overflow in exp on a diverging Newton trial propagates as inf/nan
        # and is caught by the residual check, so silence the warnings
        if not uniform and mc and (qxi is not None or qeta is not None):
            with np.errstate(over="ignore", invalid="ignore"):
                if qxi is not None:
                    ex = np.exp(-QUAD_BARY @ qxi[self.xi_local].T)  # (3, Mc)
                    favg_mu[self.cloak_els] = QUAD_W @ ex
                    fb_mu = np.einsum("qm,q,qi->mi", ex, QUAD_W, QUAD_BARY)
                    fbb_mu = np.einsum(
                        "qm,q,qi,qj->mij", ex, QUAD_W, QUAD_BARY, QUAD_BARY
                    )
                if qeta is not None:
                    ee = np.exp(-QUAD_BARY @ qeta[self.xi_local].T)
                    favg_ka[self.cloak_els] = QUAD_W @ ee
                    fb_ka = np.einsum("qm,q,qi->mi", ee, QUAD_W, QUAD_BARY)
                    fbb_ka = np.einsum(
                        "qm,q,qi,qj->mij", ee, QUAD_W, QUAD_BARY, QUAD_BARY
                    )
        return favg_mu, favg_ka, fb_mu, fb_ka, fbb_mu, fbb_ka

    def element_stiffness(self, qxi=None, qeta=None, uniform=False) -> np.ndarray:
        """Per-element 6x6 elasticity stiffness (area folded in)."""
        favg_mu, favg_ka, *_ = self.factors(qxi, qeta, uniform=uniform)
        return self.areas[:, None, None] * (
            self.base.mu0 * favg_mu[:, None, None] * self.w1core
            + self.base.kappa0 * favg_ka[:, None, None] * self.dtd
        )

    def stiffness_matrix(self, qxi=None, qeta=None, uniform=False) -> sp.csc_matrix:
        """Assembled single-field elasticity stiffness (2*n_nodes square)."""
        ae = self.element_stiffness(qxi, qeta, uniform=uniform)
        rows = np.repeat(self.udofs, 6, axis=1).ravel()
        cols = np.tile(self.udofs, (1, 6)).ravel()
        n = 2 * self.mesh.n_nodes
        return sp.coo_matrix((ae.ravel(), (rows, cols)), shape=(n, n)).tocsc()

    def exterior_mass_action(self, v: np.ndarray) -> np.ndarray:
        """Apply the vector mass matrix restricted to exterior triangles."""
        ext = self.is_ext
        ve = v[self.udofs[ext]]
        me = self.areas[ext, None] * (ve @ MASS6.T)
        out = np.bincount(
            self.udofs[ext].ravel(), weights=me.ravel(), minlength=len(v)
        )
        return out

    def exterior_l2sq(self, v: np.ndarray, w: np.ndarray | None = None) -> float:
        """L2 inner product of two nodal vector fields over the exterior."""
        w = v if w is None else w
        ext = self.is_ext
        ve = v[self.udofs[ext]]
        we = w[self.udofs[ext]]
        return float(np.einsum("m,mi,ij,mj->", self.areas[ext], ve, MASS6, we))

    def design_matrix(self, m_coef: float, alpha_coef: float) -> sp.csc_matrix:
        """Regularization/metric matrix int(m*b^T b + alpha*G^T G) on cloak DOFs."""
        mc = self.cloak_els
        gtg = np.einsum("mai,maj->mij", self.g[mc], self.g[mc])
        ke = self.areas[mc, None, None] * (m_coef * MASS3 + alpha_coef * gtg)
        rows = np.repeat(self.xi_local, 3, axis=1).ravel()
        cols = np.tile(self.xi_local, (1, 3)).ravel()
        return sp.coo_matrix(
            (ke.ravel(), (rows, cols)), shape=(self.n_xi, self.n_xi)
        ).tocsc()


def load_vector(ops: Operators, load) -> np.ndarray:
    """Consistent nodal load vector (tractions plus body force) of one load case."""
    mesh = ops.mesh
    n = 2 * mesh.n_nodes
    out = np.zeros(n)
    neumann = getattr(load, "neumann", {})
    if neumann:
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fn = neumann.get(BoundaryTag(tag))
            if fn is None:
                continue
            f = edge_traction(mesh.nodes[i], mesh.nodes[j], fn)
            out[2 * i : 2 * i + 2] += f[0:2]
            out[2 * j : 2 * j + 2] += f[2:4]
    body = getattr(load, "body_force", None)
    if body is not None:
        for q, wq in enumerate(QUAD_W):
            pts = QUAD_BARY[q] @ mesh.nodes[mesh.triangles]  # (M, 2)
            bv = np.array([body(x) for x in pts])
            vals = ops.areas[:, None] * wq * QUAD_BARY[q][None, :]  # (M, 3)
            for c in range(2):
                out += np.bincount(
                    (2 * mesh.triangles + c).ravel(),
                    weights=(vals * bv[:, c : c + 1]).ravel(),
                    minlength=n,
                )
    return out


def _pinning_nodes(mesh: Mesh) -> tuple[int, int]:
    """Corner node plus its neighbour up the same vertical edge."""
    bnodes = np.unique(mesh.boundary_edges)
    pts = mesh.nodes[bnodes]
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    corner = bnodes[order[0]]
    cx, cy = mesh.nodes[corner]
    on_left = bnodes[np.abs(pts[:, 0] - cx) < 1e-9]
    ys = mesh.nodes[on_left][:, 1]
    above = on_left[ys > cy + 1e-12]
    if not len(above):
        raise ConstraintError("no boundary node available for rotation pinning")
    adjacent = above[np.argmin(mesh.nodes[above][:, 1])]
    return int(corner), int(adjacent)


def dirichlet_single_field(mesh: Mesh, load) -> tuple[np.ndarray, np.ndarray]:
    """Constrained interleaved DOFs and prescribed values for one load case."""
    values: dict[int, float] = {}
    dirichlet = getattr(load, "dirichlet", {})
    if dirichlet:
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fn = dirichlet.get(BoundaryTag(tag))
            if fn is None:
                continue
            for n in (i, j):
                ux, uy = fn(mesh.nodes[n])
                values[2 * n] = float(ux)
                values[2 * n + 1] = float(uy)
    if getattr(load, "pure_traction", False):
        corner, adjacent = _pinning_nodes(mesh)
        values[2 * corner] = 0.0
        values[2 * corner + 1] = 0.0
        values[2 * adjacent] = 0.0
    idx = np.array(sorted(values), dtype=int)
    vals = np.array([values[i] for i in idx])
    return idx, vals


@dataclass
class DofMap:
    """Global DOF layout [xi | eta | u_(i)... | gamma_(i)...] plus constraints."""

    mesh: Mesh
    n_loads: int
    n_xi: int
    cloak_nodes: np.ndarray
    xi_of_node: np.ndarray
    fixed_mask: np.ndarray
    fixed_vals: np.ndarray

    @property
    def n_field(self) -> int:
        return 2 * self.mesh.n_nodes

    @property
    def total(self) -> int:
        return 2 * self.n_xi + 2 * self.n_loads * self.n_field

    def off_u(self, i: int) -> int:
        return 2 * self.n_xi + i * self.n_field

    def off_g(self, i: int) -> int:
        return 2 * self.n_xi + (self.n_loads + i) * self.n_field

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_mask)

    def full_xi(self, qxi: np.ndarray) -> np.ndarray:
        out = np.zeros(self.mesh.n_nodes)
        out[self.cloak_nodes] = qxi
        return out


def build_dofmap(mesh: Mesh, loads, extra_pins=None) -> DofMap:
    """Deterministic DOF numbering and per-load constraint sets.

    extra_pins is a list of (load_index, node, component, value) tuples; every
    pinned node must lie on the mesh boundary, mirroring the requirement that
    displacement data live on the Dirichlet part of the boundary.
    """
    ops_region = mesh.region == Region.CLOAK
    cloak_nodes = (
        np.unique(mesh.triangles[ops_region]) if ops_region.any() else np.array([], dtype=int)
    )
    xi_of_node = -np.ones(mesh.n_nodes, dtype=int)
    xi_of_node[cloak_nodes] = np.arange(len(cloak_nodes))
    n_xi = len(cloak_nodes)
    n_field = 2 * mesh.n_nodes
    total = 2 * n_xi + 2 * len(loads) * n_field
    fixed = np.zeros(total, dtype=bool)
    vals = np.zeros(total)
    bnodes = set(np.unique(mesh.boundary_edges).tolist())
    for i, load in enumerate(loads):
        idx, v = dirichlet_single_field(mesh, load)
        off_u = 2 * n_xi + i * n_field
        off_g = 2 * n_xi + (len(loads) + i) * n_field
        fixed[off_u + idx] = True
        vals[off_u + idx] = v
        fixed[off_g + idx] = True  # adjoint fixed to zero on the same DOFs
    if extra_pins:
        for (i, node, comp, value) in extra_pins:
            if node not in bnodes:
                raise ConstraintError(
                    f"node {node} is not on the boundary; cannot constrain it"
                )
            dof = 2 * n_xi + i * n_field + 2 * node + comp
            fixed[dof] = True
            vals[dof] = value
    return DofMap(
        mesh=mesh,
        n_loads=len(loads),
        n_xi=n_xi,
        cloak_nodes=cloak_nodes,
        xi_of_node=xi_of_node,
        fixed_mask=fixed,
        fixed_vals=vals,
    )


class CoupledSystem:
    """Residual and symmetric Jacobian of the coupled optimality system.

    The per-load penalty factors k_i are set via set_penalty; by default each
    one is the current continuation value divided by the exterior L2 norm
    squared of the corresponding virtual solution.
    """

    def __init__(self, mesh, loads, base, reg, stiffness_ratio=1.0, normalize_k=True):
        self.ops = Operators(mesh, base, stiffness_ratio)
        self.dofmap = build_dofmap(mesh, loads)
        self.loads = list(loads)
        self.reg = reg
        self.base = base
        self.normalize_k = normalize_k
        self.weights = np.array([load.weight for load in self.loads])
        self.k_xi = self.ops.design_matrix(reg.m1, reg.alpha1)
        self.k_eta = self.ops.design_matrix(reg.m2, reg.alpha2)
        self.load_vectors = [load_vector(self.ops, load) for load in self.loads]
        self.utilde: list[np.ndarray] | None = None
        self.utilde_norm2: np.ndarray | None = None
        self.k_i = np.zeros(len(self.loads))

    def set_virtual(self, utilde: list[np.ndarray]):
        self.utilde = [np.asarray(u, dtype=float) for u in utilde]
        self.utilde_norm2 = np.array(
            [self.ops.exterior_l2sq(u) for u in self.utilde]
        )
        if self.normalize_k and np.any(self.utilde_norm2 <= 0.0):
            raise ValueError("virtual solution has zero exterior norm")

    def set_penalty(self, k: float):
        if self.normalize_k:
            self.k_i = k / self.utilde_norm2
        else:
            self.k_i = np.full(len(self.loads), float(k))

    def force_scale(self) -> float:
        """Max-norm of the assembled force vector at the current penalty.

        Used as the natural residual scale: a state is converged once its
        residual is a small fraction of either the initial residual or the
        applied forcing, whichever is larger.
        """
        scale = 0.0
        for i, w in enumerate(self.weights):
            scale = max(scale, w * np.abs(self.load_vectors[i]).max())
            if self.utilde is not None:
                fu = self.k_i[i] * self.ops.exterior_mass_action(self.utilde[i])
                scale = max(scale, w * np.abs(fu).max())
        return scale

    # ------------------------------------------------------------------
    def initial_state(self, u_init: list[np.ndarray]) -> np.ndarray:
        q = np.zeros(self.dofmap.total)
        for i, u in enumerate(u_init):
            q[self.dofmap.off_u(i) : self.dofmap.off_u(i) + self.dofmap.n_field] = u
        q[self.dofmap.fixed_mask] = self.dofmap.fixed_vals[self.dofmap.fixed_mask]
        return q

    def split(self, q: np.ndarray):
        dm = self.dofmap
        qxi = q[: dm.n_xi]
        qeta = q[dm.n_xi : 2 * dm.n_xi]
        qu = [q[dm.off_u(i) : dm.off_u(i) + dm.n_field] for i in range(dm.n_loads)]
        qg = [q[dm.off_g(i) : dm.off_g(i) + dm.n_field] for i in range(dm.n_loads)]
        return qxi, qeta, qu, qg

    def residual(self, q: np.ndarray) -> np.ndarray:
        ops, dm = self.ops, self.dofmap
        qxi, qeta, qu, qg = self.split(q)
        favg_mu, favg_ka, fb_mu, fb_ka, _, _ = ops.factors(qxi, qeta)
        ae = ops.areas[:, None, None] * (
            self.base.mu0 * favg_mu[:, None, None] * ops.w1core
            + self.base.kappa0 * favg_ka[:, None, None] * ops.dtd
        )
        r = np.zeros(dm.total)
        r[: dm.n_xi] = self.k_xi @ qxi
        r[dm.n_xi : 2 * dm.n_xi] = self.k_eta @ qeta
        mc = ops.cloak_els
        for i in range(dm.n_loads):
            w = self.weights[i]
            ue = qu[i][ops.udofs]
            ge = qg[i][ops.udofs]
            # standard equilibrium rows
            aqu = np.einsum("mjk,mk->mj", ae, ue)
            rg = self.weights[i] * (
                self.load_vectors[i]
                - np.bincount(ops.udofs.ravel(), weights=aqu.ravel(), minlength=dm.n_field)
            )
            r[dm.off_g(i) : dm.off_g(i) + dm.n_field] += rg
            # adjoint rows with the mismatch body force
            aqg = np.einsum("mjk,mk->mj", ae, ge)
            ru = -np.bincount(ops.udofs.ravel(), weights=aqg.ravel(), minlength=dm.n_field)
            ru += self.k_i[i] * ops.exterior_mass_action(qu[i] - self.utilde[i])
            r[dm.off_u(i) : dm.off_u(i) + dm.n_field] += w * ru
            # design rows
            if dm.n_xi:
                uc = ue[mc]
                gc = ge[mc]
                s1 = self.base.mu0 * np.einsum("mj,mjk,mk->m", gc, ops.w1core[mc], uc)
                s2 = self.base.kappa0 * np.einsum("mj,mj->m", gc, ops.d[mc]) * np.einsum(
                    "mj,mj->m", uc, ops.d[mc]
                )
                contrib_xi = (ops.areas[mc] * s1)[:, None] * fb_mu
                contrib_eta = (ops.areas[mc] * s2)[:, None] * fb_ka
                r[: dm.n_xi] += w * np.bincount(
                    ops.xi_local.ravel(), weights=contrib_xi.ravel(), minlength=dm.n_xi
                )
                r[dm.n_xi : 2 * dm.n_xi] += w * np.bincount(
                    ops.xi_local.ravel(), weights=contrib_eta.ravel(), minlength=dm.n_xi
                )
        return r

    def jacobian(self, q: np.ndarray) -> sp.csc_matrix:
        ops, dm = self.ops, self.dofmap
        qxi, qeta, qu, qg = self.split(q)
        favg_mu, favg_ka, fb_mu, fb_ka, fbb_mu, fbb_ka = ops.factors(qxi, qeta)
        ae = ops.areas[:, None, None] * (
            self.base.mu0 * favg_mu[:, None, None] * ops.w1core
            + self.base.kappa0 * favg_ka[:, None, None] * ops.dtd
        )
        mc = ops.cloak_els
        rows, cols, vals = [], [], []

        def emit(r, c, v):
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())

        # design regularization blocks
        kxi = self.k_xi.tocoo()
        emit(kxi.row, kxi.col, kxi.data)
        keta = self.k_eta.tocoo()
        emit(keta.row + dm.n_xi, keta.col + dm.n_xi, keta.data)

        xi_r = np.repeat(ops.xi_local, 3, axis=1)
        xi_c = np.tile(ops.xi_local, (1, 3))
        blk_ru = np.repeat(ops.xi_local, 6, axis=1)  # (Mc, 18) design rows
        blk_cu = np.tile(ops.udofs[mc], (1, 3)) if dm.n_xi else None

        uu_r = np.repeat(ops.udofs, 6, axis=1)
        uu_c = np.tile(ops.udofs, (1, 6))
        ext = ops.is_ext
        mass_ext = ops.areas[ext, None, None] * MASS6[None, :, :]

        for i in range(dm.n_loads):
            w = self.weights[i]
            off_u, off_g = dm.off_u(i), dm.off_g(i)
            ue = qu[i][ops.udofs[mc]] if dm.n_xi else None
            ge = qg[i][ops.udofs[mc]] if dm.n_xi else None
            if dm.n_xi:
                w1g = self.base.mu0 * np.einsum("mjk,mk->mj", ops.w1core[mc], ge)
                w1u = self.base.mu0 * np.einsum("mjk,mk->mj", ops.w1core[mc], ue)
                dg = self.base.kappa0 * np.einsum("mj,mj->m", ops.d[mc], ge)
                du = np.einsum("mj,mj->m", ops.d[mc], ue)
                w2g = dg[:, None] * ops.d[mc]
                w2u = self.base.kappa0 * du[:, None] * ops.d[mc]
                area_c = ops.areas[mc]
                # second-derivative corrections on the design diagonal
                s1 = np.einsum("mj,mj->m", ge, w1u)
                s2 = dg * du
                jxx = -(area_c * s1)[:, None, None] * fbb_mu
                jee = -(area_c * s2)[:, None, None] * fbb_ka
                emit(xi_r, xi_c, w * jxx)
                emit(xi_r + dm.n_xi, xi_c + dm.n_xi, w * jee)
                # design-displacement couplings and their transposes
                kxu = area_c[:, None, None] * np.einsum("mi,mk->mik", fb_mu, w1g)
                kxg = area_c[:, None, None] * np.einsum("mi,mk->mik", fb_mu, w1u)
                keu = area_c[:, None, None] * np.einsum("mi,mk->mik", fb_ka, w2g)
                keg = area_c[:, None, None] * np.einsum("mi,mk->mik", fb_ka, w2u)
                for blk, roff, coff in (
                    (kxu, 0, off_u),
                    (kxg, 0, off_g),
                    (keu, dm.n_xi, off_u),
                    (keg, dm.n_xi, off_g),
                ):
                    emit(blk_ru + roff, blk_cu + coff, w * blk)
                    emit(
                        (blk_cu + coff).reshape(-1, 3, 6).transpose(0, 2, 1),
                        (blk_ru + roff).reshape(-1, 3, 6).transpose(0, 2, 1),
                        w * blk.transpose(0, 2, 1),
                    )
            # displacement-adjoint coupling (symmetric, same values both sides)
            emit(uu_r + off_u, uu_c + off_g, -w * ae)
            emit(uu_r + off_g, uu_c + off_u, -w * ae)
            # penalty mass on exterior displacement DOFs
            emit(
                uu_r[ext] + off_u,
                uu_c[ext] + off_u,
                w * self.k_i[i] * mass_ext,
            )

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=(dm.total, dm.total)).tocsc()

    # ------------------------------------------------------------------
    def reduce(self, jac: sp.csc_matrix, res: np.ndarray):
        """Eliminate constrained DOFs; values are already folded into res."""
        free = self.dofmap.free
        jr = jac[free][:, free]
        return jr.tocsc(), res[free]


def dump_matrix(path, mat) -> None:
    """Debug dump of a sparse matrix in MatrixMarket coordinate format."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(mat))
