"""Linear-triangle (P1) shape matrices and all element-level blocks.

Vector DOFs are interleaved per node: (u1x, u1y, u2x, u2y, u3x, u3y).
Second-order tensors are vectorized in the order [T11, T12, T21, T22].
Volume integrals use the 3-point degree-2 Gauss rule; the polynomial part of
every integrand is integrated exactly while the exponential moduli factor is
sampled at the three interior points.  Edge integrals use 2-point Gauss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .material import BaseMaterial

# 3-point interior rule, exact for degree-2 polynomials on the triangle.
QUAD_BARY = np.array(
    [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]
)
QUAD_W = np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])

# 2-point Gauss rule on [0, 1], exact for cubics.
EDGE_GAUSS = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
EDGE_W = np.array([0.5, 0.5])

# Scalar and vector P1 mass matrices divided by the element area.
MASS3 = (np.ones((3, 3)) + np.eye(3)) / 12.0
MASS6 = np.kron(MASS3, np.eye(2))


class DegenerateTriangleError(ValueError):
    pass


@dataclass(frozen=True)
class ElementBasis:
    """Shape-function data of one triangle.

    g is the 2x3 matrix of constant scalar shape gradients, d the 1x6
    divergence row and s the 4x6 vectorized symmetric-gradient map; all three
    are constant over the element.  b(q) and vector_shape(q) evaluate the
    scalar 1x3 and vector 2x6 shape rows at quadrature point q.
    """

    coords: np.ndarray  # (3, 2)
    area: float
    g: np.ndarray  # (2, 3)
    d: np.ndarray  # (6,)
    s: np.ndarray  # (4, 6)

    def b(self, q: int) -> np.ndarray:
        return QUAD_BARY[q]

    def vector_shape(self, q: int) -> np.ndarray:
        bq = QUAD_BARY[q]
        bmat = np.zeros((2, 6))
        bmat[0, 0::2] = bq
        bmat[1, 1::2] = bq
        return bmat

    def point(self, q: int) -> np.ndarray:
        return QUAD_BARY[q] @ self.coords


def basis(coords: np.ndarray) -> ElementBasis:
    """Build the P1 basis of a triangle given its 3x2 vertex coordinates."""
    coords = np.asarray(coords, dtype=float)
    x, y = coords[:, 0], coords[:, 1]
    det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    if det <= 0.0:
        raise DegenerateTriangleError(
            f"triangle has non-positive signed area {0.5 * det:g}"
        )
    area = 0.5 * det
    g = np.array(
        [
            [y[1] - y[2], y[2] - y[0], y[0] - y[1]],
            [x[2] - x[1], x[0] - x[2], x[1] - x[0]],
        ]
    ) / det
    d = np.zeros(6)
    d[0::2] = g[0]
    d[1::2] = g[1]
    s = np.zeros((4, 6))
    s[0, 0::2] = g[0]
    s[1, 0::2] = 0.5 * g[1]
    s[1, 1::2] = 0.5 * g[0]
    s[2] = s[1]
    s[3, 1::2] = g[1]
    return ElementBasis(coords=coords, area=area, g=g, d=d, s=s)


def deviatoric_core(eb: ElementBasis) -> np.ndarray:
    """Design-independent 6x6 core of W1: 2*S^T S - (2/3)*d^T d."""
    return 2.0 * eb.s.T @ eb.s - (2.0 / 3.0) * np.outer(eb.d, eb.d)


def volumetric_core(eb: ElementBasis) -> np.ndarray:
    """Design-independent 6x6 core of W2: d^T d."""
    return np.outer(eb.d, eb.d)


def work_matrices(
    eb: ElementBasis,
    qxi: np.ndarray,
    qeta: np.ndarray,
    base: BaseMaterial,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-quadrature-point 6x6 work matrices (W1, W2).

    Returns arrays of shape (nq, 6, 6).  Contracting gamma^T W1 u at a point
    reproduces the pointwise shear work density of the interpolated fields,
    and likewise for W2 and the volumetric density.
    """
    qxi = np.asarray(qxi, dtype=float)
    qeta = np.asarray(qeta, dtype=float)
    w1core = deviatoric_core(eb)
    w2core = volumetric_core(eb)
    fac_mu = base.mu0 * np.exp(-QUAD_BARY @ qxi)
    fac_ka = base.kappa0 * np.exp(-QUAD_BARY @ qeta)
    w1 = fac_mu[:, None, None] * w1core[None, :, :]
    w2 = fac_ka[:, None, None] * w2core[None, :, :]
    return w1, w2


@dataclass(frozen=True)
class RegularizationParams:
    m1: float = 1.0
    m2: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0


@dataclass(frozen=True)
class ElementBlocks:
    k_xi_xi: np.ndarray  # (3, 3)
    k_eta_eta: np.ndarray  # (3, 3)
    kbar_xi_xi: np.ndarray  # (3, 3)
    kbar_eta_eta: np.ndarray  # (3, 3)
    k_xi_u: np.ndarray  # (3, 6)
    k_xi_g: np.ndarray  # (3, 6)
    k_eta_u: np.ndarray  # (3, 6)
    k_eta_g: np.ndarray  # (3, 6)
    k_u_g: np.ndarray  # (6, 6)
    k_u_u: np.ndarray  # (6, 6)
    f_u: np.ndarray  # (6,)
    f_g: np.ndarray  # (6,)


def _moduli_factors(
    eb: ElementBasis,
    qxi: np.ndarray,
    qeta: np.ndarray,
    in_cloak: bool,
    stiffness_ratio: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Dimensionless (mu, kappa) multipliers at the quadrature points."""
    if in_cloak:
        fac_mu = np.exp(-QUAD_BARY @ np.asarray(qxi, dtype=float))
        fac_ka = np.exp(-QUAD_BARY @ np.asarray(qeta, dtype=float))
    else:
        fac_mu = np.full(len(QUAD_W), stiffness_ratio)
        fac_ka = np.full(len(QUAD_W), stiffness_ratio)
    return fac_mu, fac_ka


def blocks(
    eb: ElementBasis,
    qxi: np.ndarray,
    qeta: np.ndarray,
    qgamma: np.ndarray,
    qu: np.ndarray,
    *,
    base: BaseMaterial,
    is_exterior: bool,
    is_cloak: bool,
    k: float = 0.0,
    reg: RegularizationParams = RegularizationParams(),
    stiffness_ratio: float = 1.0,
    utilde: np.ndarray | None = None,
    body_force=None,
) -> ElementBlocks:
    """All element-level stiffness and force blocks at the given DOF values.

    Design DOFs and the design couplings are active only on cloak elements;
    exterior elements carry the penalty mass k and the mismatch load; an
    inhomogeneity element (neither exterior nor cloak) uses the fixed
    stiffened moduli and contributes no design blocks.  The traction part of
    f_g is assembled separately per boundary edge (see edge_traction).
    """
    qgamma = np.asarray(qgamma, dtype=float)
    qu = np.asarray(qu, dtype=float)
    area = eb.area
    w1core = deviatoric_core(eb)
    w2core = volumetric_core(eb)

    ratio = 1.0 if is_exterior else stiffness_ratio
    fac_mu, fac_ka = _moduli_factors(eb, qxi, qeta, is_cloak, ratio)
    wq = QUAD_W
    mu_avg = base.mu0 * float(wq @ fac_mu)
    ka_avg = base.kappa0 * float(wq @ fac_ka)
    # Moment vectors/matrices of the moduli factors against the scalar shapes.
    mu_b = base.mu0 * (wq * fac_mu) @ QUAD_BARY  # (3,)
    ka_b = base.kappa0 * (wq * fac_ka) @ QUAD_BARY
    mu_bb = base.mu0 * np.einsum("q,qi,qj->ij", wq * fac_mu, QUAD_BARY, QUAD_BARY)
    ka_bb = base.kappa0 * np.einsum("q,qi,qj->ij", wq * fac_ka, QUAD_BARY, QUAD_BARY)

    zero33 = np.zeros((3, 3))
    zero36 = np.zeros((3, 6))
    if is_cloak:
        k_xi_xi = area * (reg.m1 * MASS3 + reg.alpha1 * eb.g.T @ eb.g)
        k_eta_eta = area * (reg.m2 * MASS3 + reg.alpha2 * eb.g.T @ eb.g)
        s1 = float(qgamma @ w1core @ qu)
        s2 = float(qgamma @ w2core @ qu)
        kbar_xi_xi = -area * s1 * mu_bb
        kbar_eta_eta = -area * s2 * ka_bb
        k_xi_u = area * np.outer(mu_b, w1core @ qgamma)
        k_xi_g = area * np.outer(mu_b, w1core @ qu)
        k_eta_u = area * np.outer(ka_b, w2core @ qgamma)
        k_eta_g = area * np.outer(ka_b, w2core @ qu)
    else:
        k_xi_xi = k_eta_eta = kbar_xi_xi = kbar_eta_eta = zero33
        k_xi_u = k_xi_g = k_eta_u = k_eta_g = zero36

    k_u_g = -area * (mu_avg * w1core + ka_avg * w2core)
    if is_exterior:
        k_u_u = k * area * MASS6
        if utilde is None:
            f_u = np.zeros(6)
        else:
            f_u = k * area * MASS6 @ np.asarray(utilde, dtype=float)
    else:
        k_u_u = np.zeros((6, 6))
        f_u = np.zeros(6)

    f_g = np.zeros(6)
    if body_force is not None:
        for q, w in enumerate(QUAD_W):
            bvec = np.asarray(body_force(eb.point(q)), dtype=float)
            f_g -= area * w * eb.vector_shape(q).T @ bvec

    return ElementBlocks(
        k_xi_xi=k_xi_xi,
        k_eta_eta=k_eta_eta,
        kbar_xi_xi=kbar_xi_xi,
        kbar_eta_eta=kbar_eta_eta,
        k_xi_u=k_xi_u,
        k_xi_g=k_xi_g,
        k_eta_u=k_eta_u,
        k_eta_g=k_eta_g,
        k_u_g=k_u_g,
        k_u_u=k_u_u,
        f_u=f_u,
        f_g=f_g,
    )


def edge_traction(p0: np.ndarray, p1: np.ndarray, traction) -> np.ndarray:
    """Consistent nodal loads of a traction field over the edge (p0, p1).

    Returns the 4-vector (f0x, f0y, f1x, f1y) from 2-point Gauss integration,
    exact for tractions varying up to quadratically along the edge.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.hypot(*(p1 - p0)))
    f = np.zeros(4)
    for t, w in zip(EDGE_GAUSS, EDGE_W):
        x = (1.0 - t) * p0 + t * p1
        tr = np.asarray(traction(x), dtype=float)
        f[0:2] += length * w * (1.0 - t) * tr
        f[2:4] += length * w * t * tr
    return f
