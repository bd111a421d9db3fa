"""Closed-form and ODE solutions for the axisymmetric annular cloak.

An infinitely-long hollow cylinder (inner radius r_i, traction-free) carries
an annular cloak on [r_i, r_c]; outside the cloak the base moduli apply up to
r_o where a uniform radial traction sigma_inf acts.  Radial displacement
fields u(r) satisfy, in the uniform-coefficient regions, the Euler equation
r^2 u'' + r u' - u = 0 with solutions C1*r + C2/r.  This module provides the
virtual solution, the perfect-cloak parameter families, a shooting solver for
radially varying moduli, and objective-landscape sampling; it serves as the
independent oracle for the finite element pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import minimize_scalar


@dataclass(frozen=True)
class CylinderSpec:
    r_i: float = 0.5
    r_c: float = 1.0
    r_o: float = 2.0
    mu0: float = 1.0
    kappa0: float = 1.0
    sigma_inf: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.r_i < self.r_c < self.r_o):
            raise ValueError("radii must satisfy 0 < r_i < r_c < r_o")
        if self.mu0 <= 0.0 or self.kappa0 <= 0.0:
            raise ValueError("moduli must be positive")

    @property
    def lambda0(self) -> float:
        return self.kappa0 - 2.0 * self.mu0 / 3.0


class ProfileKind(Enum):
    UNIFORM_P = "uniform-p"
    UNIFORM_KAPPA_MU = "uniform-kappa-mu"
    LINEAR_P = "linear-p"


@dataclass(frozen=True)
class RadialProfile:
    """Moduli distribution on [r_i, r_c].

    UNIFORM_P: (mu, kappa) = P * (mu0, kappa0), params = (P,).
    UNIFORM_KAPPA_MU: params = (kappa, mu) independent uniform values.
    LINEAR_P: (mu, kappa)(r) = P(r) * (mu0, kappa0) with P linear between
    P(r_i) = P_i and P(r_c) = P_c, params = (P_i, P_c).
    """

    kind: ProfileKind
    params: tuple

    def moduli(self, spec: CylinderSpec):
        """Return callables mu(r), kappa(r), mu'(r), kappa'(r)."""
        if self.kind == ProfileKind.UNIFORM_P:
            (p,) = self.params
            return (
                lambda r: spec.mu0 * p,
                lambda r: spec.kappa0 * p,
                lambda r: 0.0,
                lambda r: 0.0,
            )
        if self.kind == ProfileKind.UNIFORM_KAPPA_MU:
            kappa, mu = self.params
            return (lambda r: mu, lambda r: kappa, lambda r: 0.0, lambda r: 0.0)
        p_i, p_c = self.params
        slope = (p_c - p_i) / (spec.r_c - spec.r_i)

        def pval(r):
            return ((spec.r_c - r) * p_i + (r - spec.r_i) * p_c) / (spec.r_c - spec.r_i)

        return (
            lambda r: spec.mu0 * pval(r),
            lambda r: spec.kappa0 * pval(r),
            lambda r: spec.mu0 * slope,
            lambda r: spec.kappa0 * slope,
        )

    def validate(self, spec: CylinderSpec):
        mu, kappa, _, _ = self.moduli(spec)
        rr = np.linspace(spec.r_i, spec.r_c, 64)
        muv = np.array([mu(r) for r in rr])
        kav = np.array([kappa(r) for r in rr])
        if np.any(muv <= 0.0) or np.any(kav <= 0.0):
            raise ValueError("profile produces non-positive moduli")
        if np.any(3.0 * kav + 4.0 * muv <= 1e-14):
            raise ValueError("profile produces a singular 3*kappa + 4*mu coefficient")


def virtual_solution(spec: CylinderSpec):
    """Solid-cylinder response: C1t, the displacement u(r), sigma_rr(r).

    The displacement is C1t * r with C1t = 3*sigma_inf / (2*(3*kappa0 + mu0));
    the radial stress is uniformly sigma_inf.
    """
    c1t = 3.0 * spec.sigma_inf / (2.0 * (3.0 * spec.kappa0 + spec.mu0))
    return c1t, (lambda r: c1t * np.asarray(r, dtype=float)), (
        lambda r: np.full_like(np.asarray(r, dtype=float), spec.sigma_inf)
    )


def outer_constants(spec: CylinderSpec, c1: float) -> float:
    """C2 of the outer solution C1*r + C2/r from the traction condition at r_o.

    sigma_rr = 2*(lambda0 + mu0)*C1 - 2*mu0*C2/r^2 equated to sigma_inf at r_o
    gives C2 = ((3*kappa0 + mu0) / (3*mu0)) * r_o^2 * C1 - sigma_inf * r_o^2 /
    (2*mu0); it vanishes exactly at the virtual C1.
    """
    lam_mu = spec.lambda0 + spec.mu0
    return (lam_mu / spec.mu0) * spec.r_o**2 * c1 - spec.sigma_inf * spec.r_o**2 / (
        2.0 * spec.mu0
    )


def objective_from_C1(spec: CylinderSpec, c1: float) -> float:
    """Closed-form objective as a function of the outer C1 constant.

    Proportional to the squared distance from the perfect-cloak constant; it
    vanishes exactly at C1 = 3*sigma_inf/(2*(3*kappa0 + mu0)) and differs
    from the quadrature objective by a fixed positive geometric factor.
    """
    pref = (
        np.pi
        * (spec.r_o**2 - spec.r_c**2)
        * (3.0 * spec.mu0 * spec.r_c**2 + (3.0 * spec.kappa0 + spec.mu0) * spec.r_o**2)
        / (2.0 * spec.mu0 * (3.0 * spec.kappa0 + spec.mu0) * spec.r_c**2)
    )
    mismatch = spec.sigma_inf - (2.0 / 3.0) * (3.0 * spec.kappa0 + spec.mu0) * c1
    return float(pref * mismatch**2)


def objective_quadrature(spec: CylinderSpec, c1: float, c2: float) -> float:
    """Exact integral pi * int_{r_c}^{r_o} (u - u_virtual)^2 r dr.

    u - u_virtual = (C1 - C1t) r + C2 / r over the measured annulus.
    """
    c1t, _, _ = virtual_solution(spec)
    a = c1 - c1t
    ro, rc = spec.r_o, spec.r_c
    return float(
        np.pi
        * (
            a**2 * (ro**4 - rc**4) / 4.0
            + a * c2 * (ro**2 - rc**2)
            + c2**2 * np.log(ro / rc)
        )
    )


@dataclass(frozen=True)
class ForwardSolution:
    c1: float
    c2: float
    inner_u: object  # callable u(r) on [r_i, r_c]
    inner_sigma: object  # callable sigma_rr(r) on [r_i, r_c]
    objective: float


def _outer_sigma_factors(spec: CylinderSpec):
    # sigma_rr of C1*r + C2/r with the base moduli
    lam_mu = spec.lambda0 + spec.mu0
    return 2.0 * lam_mu, -2.0 * spec.mu0


def forward_solve(spec: CylinderSpec, profile: RadialProfile, rtol: float = 1e-10) -> ForwardSolution:
    """Forward elastostatic solve for a given cloak profile.

    Uniform profiles use the closed inner form D1*r + D2/r; the linear
    profile integrates the variable-coefficient balance by adaptive RK
    shooting from the traction-free inner rim.  Interface continuity of u and
    sigma_rr at r_c and the outer traction at r_o close the system.
    """
    profile.validate(spec)
    mu, kappa, dmu, dkappa = profile.moduli(spec)
    s1, s2 = _outer_sigma_factors(spec)

    if profile.kind in (ProfileKind.UNIFORM_P, ProfileKind.UNIFORM_KAPPA_MU):
        mu_i, ka_i = mu(spec.r_i), kappa(spec.r_i)
        lam_i = ka_i - 2.0 * mu_i / 3.0
        # unknowns [D1, D2, C1, C2]
        a = np.zeros((4, 4))
        b = np.zeros(4)
        # traction-free inner rim
        a[0, 0] = 2.0 * (lam_i + mu_i)
        a[0, 1] = -2.0 * mu_i / spec.r_i**2
        # displacement continuity at r_c
        a[1, 0], a[1, 1] = spec.r_c, 1.0 / spec.r_c
        a[1, 2], a[1, 3] = -spec.r_c, -1.0 / spec.r_c
        # radial stress continuity at r_c
        a[2, 0] = 2.0 * (lam_i + mu_i)
        a[2, 1] = -2.0 * mu_i / spec.r_c**2
        a[2, 2] = -s1
        a[2, 3] = -s2 / spec.r_c**2
        # outer traction
        a[3, 2] = s1
        a[3, 3] = s2 / spec.r_o**2
        b[3] = spec.sigma_inf
        d1, d2, c1, c2 = np.linalg.solve(a, b)

        def inner_u(r):
            return d1 * np.asarray(r, dtype=float) + d2 / np.asarray(r, dtype=float)

        def inner_sigma(r):
            r = np.asarray(r, dtype=float)
            return 2.0 * (lam_i + mu_i) * d1 - 2.0 * mu_i * d2 / r**2

    else:
        def rhs(r, y):
            m, k = mu(r), kappa(r)
            dm, dk = dmu(r), dkappa(r)
            denom = 3.0 * k + 4.0 * m
            c1_ = (3.0 * dk + 4.0 * dm) / denom + 1.0 / r
            c0_ = ((3.0 * dk - 2.0 * dm) / denom - 1.0 / r) / r
            return [y[1], -c1_ * y[1] - c0_ * y[0]]

        mu_i, ka_i = mu(spec.r_i), kappa(spec.r_i)
        lam_i = ka_i - 2.0 * mu_i / 3.0
        # unit-amplitude start obeying sigma_rr(r_i) = 0
        u0 = 1.0
        du0 = -lam_i * u0 / ((lam_i + 2.0 * mu_i) * spec.r_i)
        sol = solve_ivp(
            rhs,
            (spec.r_i, spec.r_c),
            [u0, du0],
            rtol=rtol,
            atol=1e-14,
            dense_output=True,
            method="RK45",
        )
        if not sol.success:
            raise RuntimeError(f"radial integration failed: {sol.message}")
        uc, duc = sol.y[0, -1], sol.y[1, -1]
        mu_c, ka_c = mu(spec.r_c), kappa(spec.r_c)
        lam_c = ka_c - 2.0 * mu_c / 3.0
        sig_c = (lam_c + 2.0 * mu_c) * duc + lam_c * uc / spec.r_c
        # unknowns [A, C1, C2]
        a = np.array(
            [
                [uc, -spec.r_c, -1.0 / spec.r_c],
                [sig_c, -s1, -s2 / spec.r_c**2],
                [0.0, s1, s2 / spec.r_o**2],
            ]
        )
        b = np.array([0.0, 0.0, spec.sigma_inf])
        amp, c1, c2 = np.linalg.solve(a, b)

        def inner_u(r):
            return amp * sol.sol(np.asarray(r, dtype=float))[0]

        def inner_sigma(r):
            r = np.asarray(r, dtype=float)
            y = sol.sol(r)
            m = np.vectorize(mu)(r)
            k = np.vectorize(kappa)(r)
            lam = k - 2.0 * m / 3.0
            return amp * ((lam + 2.0 * m) * y[1] + lam * y[0] / r)

    return ForwardSolution(
        c1=float(c1),
        c2=float(c2),
        inner_u=inner_u,
        inner_sigma=inner_sigma,
        objective=objective_quadrature(spec, float(c1), float(c2)),
    )


def solve_radial_ode(spec: CylinderSpec, profile: RadialProfile, rtol: float = 1e-10):
    """Inner displacement and radial stress on [r_i, r_c] for the profile."""
    sol = forward_solve(spec, profile, rtol=rtol)
    return sol.inner_u, sol.inner_sigma


def perfect_uniform_P(spec: CylinderSpec) -> float:
    """Proportional-moduli multiplier that makes the cloak exact."""
    return (
        3.0 * spec.r_i**2 * spec.kappa0
        + (3.0 * spec.r_c**2 + spec.r_i**2) * spec.mu0
    ) / (3.0 * (spec.r_c**2 - spec.r_i**2) * spec.mu0)


def mu_limits(spec: CylinderSpec) -> tuple[float, float]:
    """Open interval of shear moduli admitting a perfect uniform cloak."""
    t = 3.0 * spec.kappa0 + spec.mu0
    lo = spec.r_i**2 * t / (3.0 * (spec.r_c**2 - spec.r_i**2))
    hi = t * (3.0 * spec.r_c**2 + spec.r_i**2) / (3.0 * (spec.r_c**2 - spec.r_i**2))
    return lo, hi


def perfect_kappa_of_mu(spec: CylinderSpec, mu: float) -> float:
    """Bulk modulus pairing with mu on the perfect-cloak curve.

    Derived from the interface conditions of an exact uniform cloak:
    lambda + mu = (lambda0 + mu0) * mu * r_c^2 /
                  (mu*(r_c^2 - r_i^2) - (lambda0 + mu0)*r_i^2),
    kappa = (lambda + mu) - mu/3.  Valid only between mu_limits, where both
    moduli stay positive.
    """
    lo, hi = mu_limits(spec)
    if not (lo < mu < hi):
        raise ValueError(f"mu={mu:g} outside the admissible interval ({lo:g}, {hi:g})")
    lam_mu0 = spec.lambda0 + spec.mu0
    denom = mu * (spec.r_c**2 - spec.r_i**2) - lam_mu0 * spec.r_i**2
    lam_mu = lam_mu0 * mu * spec.r_c**2 / denom
    return float(lam_mu - mu / 3.0)


def locate_perfect_P(spec: CylinderSpec) -> float:
    """Minimizer of the uniform-P objective by bounded scalar minimization."""
    lo, hi = mu_limits(spec)
    lo_p, hi_p = lo / spec.mu0, hi / spec.mu0

    def g_of_p(p):
        return forward_solve(spec, RadialProfile(ProfileKind.UNIFORM_P, (p,))).objective

    res = minimize_scalar(
        g_of_p, bounds=(max(lo_p, 1e-6), hi_p), method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def objective_landscape(spec: CylinderSpec, kind: ProfileKind, grid) -> list[tuple]:
    """Sample the objective over a parameter grid; rows (param1, param2, g).

    UNIFORM_P expects a 1D grid of P values (param2 reported as 0);
    UNIFORM_KAPPA_MU a pair of (kappa_values, mu_values); LINEAR_P a pair of
    (P_i values, P_c values).  Rows are emitted row-major.
    """
    rows = []
    if kind == ProfileKind.UNIFORM_P:
        for p in grid:
            g = forward_solve(spec, RadialProfile(kind, (float(p),))).objective
            rows.append((float(p), 0.0, g))
        return rows
    p1s, p2s = grid
    for a in p1s:
        for b in p2s:
            try:
                g = forward_solve(spec, RadialProfile(kind, (float(a), float(b)))).objective
            except ValueError:
                g = np.nan
            rows.append((float(a), float(b), g))
    return rows


def landscape_csv(rows) -> str:
    lines = ["param1,param2,g"]
    lines += [f"{a:.17g},{b:.17g},{g:.17g}" for a, b, g in rows]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TransformationModuli:
    c_rrrr: np.ndarray
    c_rrtt: np.ndarray
    c_tttt: np.ndarray
    isotropy_residual: np.ndarray


def transformation_moduli(r, f, fp, mu, kappa) -> TransformationModuli:
    """Curvilinear moduli induced by a radial map r -> f(r).

    All arguments are arrays (or scalars broadcast over r).  The isotropy
    residual is |r^4 * C^tttt / C^rrrr - 1|, which vanishes exactly when
    f(r) = r f'(r), i.e. only for the identity-like map; any genuine
    transformation violates isotropy.
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    fp = np.asarray(fp, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), r.shape)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), r.shape)
    h = 3.0 * kappa + 4.0 * mu
    c_rrrr = h * f / (3.0 * r * fp)
    c_rrtt = (3.0 * kappa - 2.0 * mu) / (3.0 * r**2)
    c_tttt = h * fp / (3.0 * r**3 * f)
    residual = np.abs(r**4 * c_tttt / c_rrrr - 1.0)
    return TransformationModuli(c_rrrr, c_rrtt, c_tttt, residual)
