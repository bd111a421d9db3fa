import pytest

from cloakopt import mesh as meshmod
from cloakopt.material import BaseMaterial


@pytest.fixture(scope="session")
def base():
    return BaseMaterial(1.0, 2.0)


@pytest.fixture(scope="session")
def rect_mesh():
    return meshmod.build_rectangle(6.0, 4.0, 0.4)


@pytest.fixture(scope="session")
def tiny_hole_mesh():
    """Small circular-hole mesh; the coupled system stays under 300 DOFs."""
    spec = meshmod.GeometrySpec(
        kind=meshmod.GeometryKind.ELLIPTIC_HOLE,
        target_h=0.75,
        hole_semiaxes=(0.8, 0.8),
        cloak_semiaxes=(1.6, 1.6),
    )
    return meshmod.build(spec)


@pytest.fixture(scope="session")
def coarse_hole_mesh():
    """Benchmark hole geometry at a coarse resolution for solver tests."""
    spec = meshmod.GeometrySpec(kind=meshmod.GeometryKind.ELLIPTIC_HOLE, target_h=0.3)
    return meshmod.build(spec)
