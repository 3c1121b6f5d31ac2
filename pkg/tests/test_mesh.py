import numpy as np
import pytest

from conedet import mesh as meshing
from conedet.cover import CoverGeometry, example_deg2
from conedet.errors import ConePointsTooClose, MeshFormatError

# regression band for the uniform round-sphere mesh at h = 0.2 (first build: 177)
SPHERE_VERTICES = (150, 210)


def test_uniform_sphere_mesh(sphere_meshes):
    m = sphere_meshes[0]
    assert SPHERE_VERTICES[0] <= m.n_vertices <= SPHERE_VERTICES[1]
    assert m.check()
    assert m.euler_characteristic() == 2
    assert m.boundary_edge_count() == 0
    assert m.chart_boundary_edge_count(0) > 0  # the equator is a seam, not a boundary


def test_marked_vertices_are_exact(deg2_geom):
    m = meshing.build_mesh(deg2_geom, 0.2)
    assert len(m.marked) == deg2_geom.n_critical
    for mk, cone in zip(m.marked, deg2_geom.cone_points):
        assert m.vchart[mk.vertex] == cone.chart
        assert m.coords(cone.chart)[mk.vertex] == cone.coord


def test_grading(deg2_geom):
    uniform = meshing.build_mesh(deg2_geom, 0.2, q=1)
    graded = meshing.build_mesh(deg2_geom, 0.2, q=8)
    for mu, mg in zip(uniform.marked, graded.marked):
        assert uniform.local_size(mu.vertex) == pytest.approx(0.2, rel=0.25)
        assert graded.local_size(mg.vertex) < 0.1 * uniform.local_size(mu.vertex)
    assert graded.n_vertices > uniform.n_vertices


def test_refine_quadruples(sphere_meshes, deg2_mesh, deg2_geom):
    coarse, fine = sphere_meshes[0], sphere_meshes[1]
    assert fine.n_triangles == 4 * coarse.n_triangles
    # V - E + F = 2 with E = 3F/2 gives V = F/2 + 2
    assert fine.n_vertices == fine.n_triangles // 2 + 2
    for chart in (0, 1):
        old = coarse.coords(chart)[coarse.vchart == chart]
        new = fine.coords(chart)[: coarse.n_vertices][coarse.vchart == chart]
        assert np.array_equal(old, new)
    assert fine.check() and deg2_mesh.check()
    # marked cone vertices survive refinement
    for mk, cone in zip(deg2_mesh.marked, deg2_geom.cone_points):
        assert deg2_mesh.coords(cone.chart)[mk.vertex] == cone.coord


def test_io_round_trip(tmp_path, deg2_mesh):
    path = tmp_path / "m.mesh"
    meshing.write_mesh(deg2_mesh, path)
    back = meshing.read_mesh(path)
    assert np.array_equal(back.tri, deg2_mesh.tri)
    assert np.allclose(back.w0, deg2_mesh.w0, equal_nan=True)
    assert np.array_equal(back.vchart, deg2_mesh.vchart)
    assert [m.vertex for m in back.marked] == [m.vertex for m in deg2_mesh.marked]


def test_bad_mesh_file(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("not a mesh\n")
    with pytest.raises(MeshFormatError):
        meshing.read_mesh(path)


def test_cones_too_close(flat_metric):
    geom = CoverGeometry.build(example_deg2(0.01, 2), flat_metric)
    with pytest.raises(ConePointsTooClose):
        meshing.build_mesh(geom, 0.2)


def test_flat_cover_marks_all_cones(flat_metric):
    geom = CoverGeometry.build(example_deg2(0.5j, -1j), flat_metric)
    m = meshing.build_mesh(geom, 0.2)
    # 2 critical points plus 2 preimages of each of the 3 metric cones
    assert len(m.marked) == 8
    assert m.check()


def test_bad_h(sphere_geom):
    with pytest.raises(ValueError):
        meshing.build_mesh(sphere_geom, 0.0)
