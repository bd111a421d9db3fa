"""Isotropic plane-strain constitutive model and the unconstrained design map.

The cloak moduli are parameterized as mu = mu0*exp(-xi), kappa = kappa0*exp(-eta)
so that any real-valued design fields (xi, eta) give positive moduli.  Plane
strain is used throughout with the 3D isotropic relations
lambda = kappa - 2*mu/3 and nu = (3*kappa - 2*mu) / (2*(3*kappa + mu)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BaseMaterial:
    """Homogeneous background solid (shear modulus mu0, bulk modulus kappa0)."""

    mu0: float = 1.0
    kappa0: float = 2.0

    def __post_init__(self):
        if self.mu0 <= 0.0 or self.kappa0 <= 0.0:
            raise ValueError("base moduli must be strictly positive")

    @property
    def lambda0(self) -> float:
        return self.kappa0 - 2.0 * self.mu0 / 3.0

    @property
    def poisson0(self) -> float:
        return poisson_ratio(self.mu0, self.kappa0)


@dataclass(frozen=True)
class DesignPoint:
    """Pointwise value of the unconstrained design fields."""

    xi: float = 0.0
    eta: float = 0.0


@dataclass(frozen=True)
class InhomMaterial:
    """Stiffness multiplier applied to both base moduli inside inhomogeneities."""

    stiffness_ratio: float = 1.0e3

    def __post_init__(self):
        if self.stiffness_ratio <= 0.0:
            raise ValueError("stiffness_ratio must be positive")


def moduli(base: BaseMaterial, d: DesignPoint) -> tuple[float, float, float]:
    """Return (mu, kappa, lambda) for a design point.

    mu = mu0*exp(-xi) and kappa = kappa0*exp(-eta) are positive for any
    (xi, eta); lambda = kappa - 2*mu/3 may take either sign.
    """
    mu = base.mu0 * np.exp(-d.xi)
    kappa = base.kappa0 * np.exp(-d.eta)
    return mu, kappa, kappa - 2.0 * mu / 3.0


def poisson_ratio(mu: float, kappa: float) -> float:
    """Plane-strain Poisson ratio; negative values indicate auxetic response."""
    return (3.0 * kappa - 2.0 * mu) / (2.0 * (3.0 * kappa + mu))


def stress(d: DesignPoint, grad_y: np.ndarray, base: BaseMaterial) -> np.ndarray:
    """Stress of a displacement gradient under the design-point moduli.

    sigma = (-(2/3)*mu0*exp(-xi) + kappa0*exp(-eta)) * div(y) * I
            + 2*mu0*exp(-xi) * sym(grad_y)

    Works for the standard and the adjoint displacement alike; the output is
    symmetric and vanishes on antisymmetric gradients.
    """
    grad_y = np.asarray(grad_y, dtype=float)
    mu = base.mu0 * np.exp(-d.xi)
    kappa = base.kappa0 * np.exp(-d.eta)
    div_y = grad_y[0, 0] + grad_y[1, 1]
    sym = 0.5 * (grad_y + grad_y.T)
    return (kappa - 2.0 * mu / 3.0) * div_y * np.eye(2) + 2.0 * mu * sym


def work_densities(
    d: DesignPoint,
    grad_u: np.ndarray,
    grad_gamma: np.ndarray,
    base: BaseMaterial,
) -> tuple[float, float]:
    """Mixed work densities (W1, W2) of a displacement/adjoint gradient pair.

    W1 carries the shear (deviatoric) part scaled by mu0*exp(-xi); W2 carries
    the volumetric part scaled by kappa0*exp(-eta).  For symmetric grad_u,
    W1 + W2 equals stress(d, grad_gamma) : grad_u.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    grad_gamma = np.asarray(grad_gamma, dtype=float)
    mu = base.mu0 * np.exp(-d.xi)
    kappa = base.kappa0 * np.exp(-d.eta)
    div_u = grad_u[0, 0] + grad_u[1, 1]
    div_g = grad_gamma[0, 0] + grad_gamma[1, 1]
    sym_u = 0.5 * (grad_u + grad_u.T)
    sym_g = 0.5 * (grad_gamma + grad_gamma.T)
    w1 = -(2.0 / 3.0) * mu * div_g * div_u + 2.0 * mu * float(np.sum(sym_g * sym_u))
    w2 = kappa * div_g * div_u
    return w1, w2
