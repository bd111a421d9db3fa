import numpy as np
import pytest
from scipy.spatial import cKDTree

from cloakopt import mesh as M


def edge_counts(mesh):
    counts = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


# ---------------------------------------------------------------- elliptic hole
def test_elliptic_hole_default(coarse_hole_mesh):
    m = coarse_hole_mesh
    assert M.validate(m) == "OK"
    assert np.all(m.triangle_areas() > 0.0)
    assert (m.boundary_tags == M.BoundaryTag.HOLE).sum() > 8
    assert set(np.unique(m.region)) == {M.Region.EXTERIOR, M.Region.CLOAK}


def test_elliptic_hole_chord_error(coarse_hole_mesh):
    """Hole boundary chords sag below h^2/8 relative to the true ellipse."""
    m = coarse_hole_mesh
    h = 0.3  # generation target size
    a, b = 2.0 / 3.0, 1.0
    for (i, j), tag in zip(m.boundary_edges, m.boundary_tags):
        if tag != M.BoundaryTag.HOLE:
            continue
        mid = 0.5 * (m.nodes[i] + m.nodes[j])
        # radial projection of the midpoint onto the ellipse
        t = 1.0 / np.sqrt((mid[0] / a) ** 2 + (mid[1] / b) ** 2)
        sagitta = np.hypot(*(mid - t * mid))
        assert sagitta <= h**2 / 8.0


def test_elliptic_hole_containment_violation():
    spec = M.GeometrySpec(hole_semiaxes=(1.5, 1.8), cloak_semiaxes=(4 / 3, 5 / 3))
    with pytest.raises(M.MeshError):
        M.build_elliptic_hole(spec)


def test_elliptic_hole_refinement_ratio():
    m1 = M.build(M.GeometrySpec(target_h=0.3))
    m2 = M.build(M.GeometrySpec(target_h=0.15))
    ratio = m2.n_triangles / m1.n_triangles
    assert 3.0 <= ratio <= 5.0


def test_hole_edges_do_not_touch_exterior(coarse_hole_mesh):
    m = coarse_hole_mesh
    hole_edges = {
        (min(i, j), max(i, j))
        for (i, j), t in zip(m.boundary_edges, m.boundary_tags)
        if t == M.BoundaryTag.HOLE
    }
    for ti, t in enumerate(m.triangles):
        if m.region[ti] != M.Region.EXTERIOR:
            continue
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            assert (min(a, b), max(a, b)) not in hole_edges


def test_area_accounting(coarse_hole_mesh):
    m = coarse_hole_mesh
    hole_area = np.pi * (2.0 / 3.0) * 1.0
    expected = 24.0 - hole_area
    assert abs(m.triangle_areas().sum() - expected) / expected < 0.3**2


def test_edge_incidence(coarse_hole_mesh):
    counts = edge_counts(coarse_hole_mesh)
    boundary = {tuple(e) for e in np.sort(coarse_hole_mesh.boundary_edges, axis=1)}
    for edge, c in counts.items():
        assert c in (1, 2)
        assert (c == 1) == (edge in boundary)


def test_refinement_preserves_region_areas():
    m1 = M.build(M.GeometrySpec(target_h=0.3))
    m2 = M.build(M.GeometrySpec(target_h=0.15))
    for region in (M.Region.EXTERIOR, M.Region.CLOAK):
        a1 = m1.triangle_areas()[m1.region == region].sum()
        a2 = m2.triangle_areas()[m2.region == region].sum()
        assert abs(a1 - a2) / a2 < 0.3**2


# ---------------------------------------------------------------- elliptic cut
def test_elliptic_cut_default():
    m = M.build(M.GeometrySpec(kind=M.GeometryKind.ELLIPTIC_CUT, target_h=0.25))
    assert M.validate(m) == "OK"
    assert (m.boundary_tags == M.BoundaryTag.CUT).sum() > 4
    # the cloak reaches the bottom boundary
    cloak_nodes = np.unique(m.triangles[m.region == M.Region.CLOAK])
    assert m.nodes[cloak_nodes][:, 1].min() == pytest.approx(-2.0)
    # bottom edges under the cloak keep their outer tag
    bottom = m.boundary_tags == M.BoundaryTag.OUTER_BOTTOM
    xs = m.nodes[np.unique(m.boundary_edges[bottom])][:, 0]
    assert (np.abs(xs) < 2.0).any()


def test_elliptic_cut_rejects_cut_larger_than_cloak():
    spec = M.GeometrySpec(
        kind=M.GeometryKind.ELLIPTIC_CUT, cut_semiaxes=(2.2, 0.9),
        cut_cloak_semiaxes=(2.0, 1.2),
    )
    with pytest.raises(M.MeshError):
        M.build_elliptic_cut(spec)


def test_elliptic_cut_symmetric_node_cloud():
    m = M.build(
        M.GeometrySpec(kind=M.GeometryKind.ELLIPTIC_CUT, target_h=0.25, symmetric=True)
    )
    mirrored = m.nodes.copy()
    mirrored[:, 0] = -mirrored[:, 0]
    d, _ = cKDTree(m.nodes).query(mirrored)
    assert d.max() <= 1e-12


# ------------------------------------------------------- rect inhomogeneity
def test_rect_inhom_area_exact():
    m = M.build(M.GeometrySpec(kind=M.GeometryKind.RECT_INHOM, target_h=0.25))
    assert M.validate(m) == "OK"
    area = m.triangle_areas()[m.region == M.Region.INHOMOGENEITY].sum()
    assert area == pytest.approx((4.0 / 3.0) * (8.0 / 21.0), rel=1e-12)


def test_rect_inhom_zero_rotation():
    m = M.build(
        M.GeometrySpec(kind=M.GeometryKind.RECT_INHOM, target_h=0.25, rotation_deg=0.0)
    )
    cent = m.nodes[m.triangles[m.region == M.Region.INHOMOGENEITY]].mean(axis=1)
    assert np.all(np.abs(cent[:, 0]) <= 2.0 / 3.0)
    assert np.all(np.abs(cent[:, 1]) <= 4.0 / 21.0)


def test_rect_inhom_zero_thickness_rejected():
    with pytest.raises(M.MeshError):
        M.build_rect_inhom(
            M.GeometrySpec(kind=M.GeometryKind.RECT_INHOM, cloak_thickness=0.0)
        )


# ---------------------------------------------------------------- random disks
def test_random_disks_deterministic():
    spec = M.GeometrySpec(kind=M.GeometryKind.RANDOM_DISKS, target_h=0.15, seed=42)
    m1 = M.build(spec)
    m2 = M.build(spec)
    assert np.array_equal(m1.nodes, m2.nodes)
    assert np.array_equal(m1.region, m2.region)
    assert np.array_equal(m1.triangles, m2.triangles)


def test_random_disks_disjoint_annuli():
    spec = M.GeometrySpec(kind=M.GeometryKind.RANDOM_DISKS, seed=42)
    disks = M.place_disks(spec)
    assert len(disks) == 8
    for i in range(len(disks)):
        for j in range(i + 1, len(disks)):
            dist = np.hypot(disks[i, 0] - disks[j, 0], disks[i, 1] - disks[j, 1])
            rc = 1.5 * (disks[i, 2] + disks[j, 2])
            assert dist >= rc + spec.clearance - 1e-12
        assert abs(disks[i, 0]) <= 3.0 - 1.5 * disks[i, 2] - spec.clearance + 1e-12
        assert abs(disks[i, 1]) <= 2.0 - 1.5 * disks[i, 2] - spec.clearance + 1e-12


def test_zero_disks_is_plain_rectangle():
    m = M.build(
        M.GeometrySpec(kind=M.GeometryKind.RANDOM_DISKS, n_disks=0, target_h=0.4)
    )
    assert np.all(m.region == M.Region.EXTERIOR)
    assert not m.has_hole()


def test_infeasible_packing_reports_seed():
    spec = M.GeometrySpec(
        kind=M.GeometryKind.RANDOM_DISKS, n_disks=100,
        disk_radius_range=(0.45, 0.45), seed=7, max_attempts=2000,
    )
    with pytest.raises(M.MeshError, match="seed=7"):
        M.place_disks(spec)


# ----------------------------------------------------------------- save / load
def test_save_load_roundtrip(tmp_path, coarse_hole_mesh):
    path = tmp_path / "mesh.txt"
    M.save_mesh(coarse_hole_mesh, path)
    loaded = M.load_mesh(path)
    assert np.array_equal(loaded.nodes, coarse_hole_mesh.nodes)
    assert np.array_equal(loaded.triangles, coarse_hole_mesh.triangles)
    assert np.array_equal(loaded.region, coarse_hole_mesh.region)
    assert np.array_equal(loaded.boundary_edges, coarse_hole_mesh.boundary_edges)
    assert loaded.h == coarse_hole_mesh.h


def test_hand_written_two_triangle_square(tmp_path):
    text = "\n".join(
        [
            "cloakmesh 1",
            "nodes 4",
            "0 0", "1 0", "1 1", "0 1",
            "tris 2",
            "0 1 2 0", "0 2 3 0",
            "bedges 4",
            "0 1 3", "1 2 1", "2 3 2", "0 3 0",
        ]
    )
    path = tmp_path / "square.txt"
    path.write_text(text + "\n")
    m = M.load_mesh(path)
    assert m.h == pytest.approx(np.sqrt(2.0))
    assert m.n_triangles == 2


def test_load_rejects_nonconforming(tmp_path):
    # duplicate node splits the diagonal: boundary bookkeeping cannot close
    text = "\n".join(
        [
            "cloakmesh 1",
            "nodes 5",
            "0 0", "1 0", "1 1", "0 1", "1 1",
            "tris 2",
            "0 1 2 0", "0 4 3 0",
            "bedges 4",
            "0 1 3", "1 2 1", "2 3 2", "0 3 0",
        ]
    )
    path = tmp_path / "bad.txt"
    path.write_text(text + "\n")
    with pytest.raises(M.MeshError):
        M.load_mesh(path)


def test_load_rejects_inverted_triangle(tmp_path):
    text = "\n".join(
        [
            "cloakmesh 1",
            "nodes 3",
            "0 0", "1 0", "0 1",
            "tris 1",
            "0 2 1 0",
            "bedges 3",
            "0 1 3", "1 2 0", "0 2 0",
        ]
    )
    path = tmp_path / "inv.txt"
    path.write_text(text + "\n")
    with pytest.raises(M.MeshError, match="area"):
        M.load_mesh(path)


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("cloakmesh 1\nnodes two\n")
    with pytest.raises(M.MeshError):
        M.load_mesh(path)
    path.write_text("wrongheader\n")
    with pytest.raises(M.MeshError):
        M.load_mesh(path)


def test_validate_detects_bad_region(coarse_hole_mesh):
    m = coarse_hole_mesh
    bad = M.Mesh(
        nodes=m.nodes.copy(),
        triangles=m.triangles.copy(),
        region=np.full(m.n_triangles, 9, dtype=np.int8),
        boundary_edges=m.boundary_edges.copy(),
        boundary_tags=m.boundary_tags.copy(),
    )
    assert "region" in M.validate(bad)


def test_mesh_is_immutable(coarse_hole_mesh):
    with pytest.raises(ValueError):
        coarse_hole_mesh.nodes[0, 0] = 99.0
