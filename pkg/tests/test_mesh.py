import numpy as np
import pytest

from hdgmg.mesh import NORMALS, Mesh, MeshError, build_cartesian, coarsen


def test_single_element():
    m = build_cartesian(1, 1)
    assert m.n_elems == 1
    assert m.n_facets == 4
    assert m.facet_boundary.all()


def test_two_by_two():
    m = build_cartesian(2, 2)
    assert m.n_elems == 4
    assert m.n_facets == 12
    assert m.interior_facets.size == 4


def test_sixteen_by_sixteen_counts():
    m = build_cartesian(16, 16)
    assert m.n_elems == 256
    # n_x (n_y + 1) + n_y (n_x + 1)
    assert m.n_facets == 16 * 17 + 16 * 17 == 544


@pytest.mark.parametrize("nx,ny", [(1, 1), (2, 3), (4, 4), (5, 2)])
def test_ownership_invariants(nx, ny):
    m = build_cartesian(nx, ny)
    for f in range(m.n_facets):
        owners = m.facet_to_elems[f]
        count = int((owners[:, 0] >= 0).sum())
        assert count == (1 if m.facet_boundary[f] else 2)
        for e, side in owners:
            if e >= 0:
                assert m.elem_to_facets[e, side] == f
    # facet incidences: every element touches 4 facets
    n_int = m.interior_facets.size
    n_bdry = m.n_facets - n_int
    assert 4 * m.n_elems == 2 * n_int + n_bdry


def test_local_facets_distinct():
    m = build_cartesian(3, 2)
    for e in range(m.n_elems):
        assert len(set(m.elem_to_facets[e])) == 4


def test_opposite_normals_on_shared_facets():
    m = build_cartesian(3, 3)
    for f in m.interior_facets:
        (e1, s1), (e2, s2) = m.facet_to_elems[f]
        np.testing.assert_array_equal(NORMALS[s1], -NORMALS[s2])


def test_boundary_normals_point_outward():
    m = build_cartesian(2, 2)
    for f in np.flatnonzero(m.facet_boundary):
        e, side = m.facet_to_elems[f][m.facet_to_elems[f][:, 0] >= 0][0]
        n = m.normal(e, side)
        cx, cy = np.asarray(m.elem_origin(e)) + (m.dx / 2, m.dy / 2)
        (px, py), _ = m.facet_geometry(f)
        mx = px + (m.dx / 2 if m.facet_axis[f] == 0 else 0.0)
        my = py + (m.dy / 2 if m.facet_axis[f] == 1 else 0.0)
        # outward: from the element center toward the facet midpoint
        assert n @ (mx - cx, my - cy) > 0


def test_rejects_bad_arguments():
    with pytest.raises(MeshError):
        build_cartesian(0, 3)
    with pytest.raises(MeshError):
        build_cartesian(2, 2, ((0.0, 0.0), (0.0, 1.0)))


def test_coarsen_halves():
    m = coarsen(build_cartesian(16, 16))
    assert (m.n_x, m.n_y) == (8, 8)
    assert m.child_elements.shape == (64, 4)
    # children partition the fine elements
    assert sorted(m.child_elements.ravel().tolist()) == list(range(256))


def test_coarsen_two_by_two():
    m = coarsen(build_cartesian(2, 2))
    assert (m.n_x, m.n_y) == (1, 1)


def test_coarsen_rejects_odd():
    with pytest.raises(MeshError):
        coarsen(build_cartesian(3, 3))


def test_coarsen_twice_ancestry():
    fine = build_cartesian(8, 8)
    mid = coarsen(fine)
    coarse = coarsen(mid)
    assert (coarse.n_x, coarse.n_y) == (2, 2)
    # grandchildren of each coarse element tile a 4x4 block of the fine mesh
    for c in range(coarse.n_elems):
        fine_ids = np.concatenate([mid.child_elements[k] for k in coarse.child_elements[c]])
        cols = fine_ids % fine.n_x
        rows = fine_ids // fine.n_x
        assert cols.max() - cols.min() == 3
        assert rows.max() - rows.min() == 3


def test_facet_points_follow_geometry():
    m = build_cartesian(2, 2)
    f = m.elem_to_facets[0, 1]  # right facet of element 0: x = 0.5, y in [0, 0.5]
    x, y = m.facet_points(f, np.array([-1.0, 1.0]))
    np.testing.assert_allclose(x, [0.5, 0.5])
    np.testing.assert_allclose(y, [0.0, 0.5])


def test_dump_csv(tmp_path):
    m = build_cartesian(2, 2)
    path = tmp_path / "mesh.csv"
    m.dump_csv(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + m.n_elems + m.n_facets
