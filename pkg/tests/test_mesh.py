"""Mesh container, OBJ io, and the discrete geometry helpers."""

import numpy as np
import pytest

from helpers import fold_pair
from layerdrape.errors import MeshError, ObjParseError
from layerdrape.mesh import (
    TriangleMesh,
    build_hinges,
    deformation_gradients,
    dihedral_angles,
    edge_keys,
    face_areas_normals,
    green_strains,
    hinge_angles,
    load_obj,
    mean_edge_length,
    rest_frames,
    save_obj,
    unique_edges,
    vertex_adjacency,
    vertex_masses,
    vertex_normals,
)
from layerdrape.primitives import sheet, tube


def quad_sheet():
    return sheet(1.0, 1.0, 1, 1)


class TestTriangleMesh:
    def test_accepts_valid_mesh(self):
        m = quad_sheet()
        assert m.num_vertices == 4
        assert m.num_faces == 2

    def test_rejects_bad_vertex_shape(self):
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((4, 2)), np.array([[0, 1, 2]]))

    def test_rejects_bad_face_shape(self):
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((4, 3)), np.array([[0, 1, 2, 3]]))

    def test_rejects_out_of_range_index(self):
        verts = np.eye(3)
        with pytest.raises(MeshError, match="out of range"):
            TriangleMesh(verts, np.array([[0, 1, 5]]))

    def test_rejects_repeated_vertex_in_face(self):
        verts = np.eye(3)
        with pytest.raises(MeshError, match="repeated vertex"):
            TriangleMesh(verts, np.array([[0, 1, 1]]))

    def test_rejects_duplicate_face(self):
        verts = np.eye(3)
        with pytest.raises(MeshError, match="duplicate face"):
            TriangleMesh(verts, np.array([[0, 1, 2], [2, 0, 1]]))

    def test_rejects_degenerate_face(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(MeshError, match="degenerate"):
            TriangleMesh(verts, np.array([[0, 1, 2]]))

    def test_arrays_are_locked(self):
        m = quad_sheet()
        assert not m.vertices.flags.writeable
        assert not m.faces.flags.writeable
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 1.0

    def test_with_vertices(self):
        m = quad_sheet()
        shifted = m.with_vertices(m.vertices + 1.0)
        assert np.array_equal(shifted.faces, m.faces)
        assert np.array_equal(shifted.vertices, m.vertices + 1.0)
        # the source mesh is untouched
        assert float(m.vertices[0, 1]) == 0.0


class TestObjIo:
    def test_round_trip(self, tmp_path):
        m = tube(0.4, 1.0, segments=7, rings=3)
        path = tmp_path / "tube.obj"
        save_obj(path, m)
        back = load_obj(path)
        assert np.array_equal(back.faces, m.faces)
        # %.9g keeps nine significant digits
        assert np.allclose(back.vertices, m.vertices, rtol=1e-8, atol=0.0)

    def test_save_is_deterministic(self, tmp_path):
        m = tube(0.4, 1.0, segments=7, rings=3)
        a, b = tmp_path / "a.obj", tmp_path / "b.obj"
        save_obj(a, m)
        save_obj(b, m)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes().endswith(b"\n")

    def test_reload_is_idempotent(self, tmp_path):
        m = tube(0.4, 1.0, segments=7, rings=3)
        a, b = tmp_path / "a.obj", tmp_path / "b.obj"
        save_obj(a, m)
        save_obj(b, load_obj(a))
        assert a.read_bytes() == b.read_bytes()

    def test_parses_face_subindices(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1/1/1 2/2/2 3/3/3\n")
        m = load_obj(path)
        assert np.array_equal(m.faces, [[0, 1, 2]])

    def test_skips_other_records(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text(
            "# comment\no thing\nvn 0 1 0\nvt 0 0\ns off\n"
            "v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1 2 3\n"
        )
        assert load_obj(path).num_faces == 1

    @pytest.mark.parametrize(
        "content,message",
        [
            ("v 0 0\n", "3 coordinates"),
            ("v a 0 0\n", "bad vertex coordinate"),
            ("v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1 2\n", "triangulated"),
            ("v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1 2 x\n", "bad face index"),
            ("# nothing here\n", "no vertex records"),
        ],
    )
    def test_parse_errors(self, tmp_path, content, message):
        path = tmp_path / "bad.obj"
        path.write_text(content)
        with pytest.raises(ObjParseError, match=message):
            load_obj(path)

    def test_face_index_out_of_range(self, tmp_path):
        path = tmp_path / "oob.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1 2 9\n")
        with pytest.raises(MeshError, match="out of range"):
            load_obj(path)


class TestFaceQuantities:
    def test_flat_sheet_areas_and_normals(self):
        m = sheet(1.0, 1.0, 2, 2)
        areas, normals = face_areas_normals(m.vertices, m.faces)
        assert np.allclose(areas, 0.125, rtol=0.0, atol=0.0)
        assert np.array_equal(normals, np.tile([0.0, 1.0, 0.0], (m.num_faces, 1)))
        assert np.isclose(areas.sum(), 1.0, rtol=1e-12)

    def test_degenerate_face_has_no_normal(self):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(MeshError, match="no normal"):
            face_areas_normals(verts, np.array([[0, 1, 2]]))

    def test_vertex_normals_flat(self):
        m = sheet(1.0, 1.0, 3, 3)
        n = vertex_normals(m.vertices, m.faces)
        assert np.array_equal(n, np.tile([0.0, 1.0, 0.0], (m.num_vertices, 1)))

    def test_vertex_normals_isolated_vertex(self):
        verts = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [5.0, 5.0, 5.0]]
        )
        with pytest.raises(MeshError):
            vertex_normals(verts, np.array([[0, 1, 2]]))

    def test_vertex_masses_partition_total(self):
        m = tube(0.5, 1.2, segments=9, rings=4)
        masses = vertex_masses(m, 0.15)
        areas, _ = face_areas_normals(m.vertices, m.faces)
        assert np.isclose(masses.sum(), 0.15 * areas.sum(), rtol=1e-12)
        assert (masses > 0.0).all()

    def test_vertex_masses_rejects_bad_density(self):
        with pytest.raises(MeshError):
            vertex_masses(quad_sheet(), 0.0)


class TestConnectivity:
    def test_unique_edges_sorted(self):
        m = quad_sheet()
        edges = unique_edges(m.faces)
        assert edges.shape == (5, 2)
        assert (edges[:, 0] < edges[:, 1]).all()
        # lexicographic order, no duplicates
        keys = edges[:, 0] * m.num_vertices + edges[:, 1]
        assert (np.diff(keys) > 0).all()
        for tri in m.faces:
            for u, v in ((0, 1), (1, 2), (2, 0)):
                a, b = sorted((tri[u], tri[v]))
                assert a * m.num_vertices + b in keys

    def test_edge_keys_match_unique_edges(self):
        m = sheet(1.0, 1.0, 2, 2)
        edges = unique_edges(m.faces)
        keys = edge_keys(m.faces, m.num_vertices)
        assert np.array_equal(keys, edges[:, 0] * m.num_vertices + edges[:, 1])

    def test_vertex_adjacency_symmetric(self):
        m = sheet(1.0, 1.0, 2, 2)
        adj = vertex_adjacency(m.faces, m.num_vertices)
        for v in range(m.num_vertices):
            ring = adj.ring(v)
            assert len(np.unique(ring)) == len(ring)
            for u in ring:
                assert v in adj.ring(int(u))


class TestHinges:
    def test_single_quad_has_one_flat_hinge(self):
        m = quad_sheet()
        hinges = build_hinges(m)
        assert len(hinges) == 1
        assert hinges.nonmanifold_edges == []
        assert hinge_angles(m.vertices, hinges)[0] == 0.0

    def test_fold_angle_matches_construction(self):
        hinges = build_hinges(fold_pair(0.0))
        for theta in (-2.0, -0.5, 0.3, 1.2, np.pi / 2):
            pos = fold_pair(theta).vertices
            assert np.allclose(hinge_angles(pos, hinges), [theta], atol=1e-12)

    def test_dihedral_angles_wrapper(self):
        m = fold_pair(0.9)
        angles, hinges = dihedral_angles(m)
        assert len(hinges) == 1
        assert np.allclose(angles, [0.9], atol=1e-12)

    def test_nonmanifold_edge_excluded(self):
        verts = np.array(
            [
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.5, 0.0, 1.0],
                [0.5, 1.0, 0.0],
                [0.5, 0.0, -1.0],
            ]
        )
        faces = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        hinges = build_hinges(TriangleMesh(verts, faces))
        assert hinges.nonmanifold_edges == [(0, 1)]
        assert len(hinges) == 0


class TestDeformation:
    def test_rest_state_has_no_strain(self):
        m = tube(0.5, 1.0, segments=8, rings=3)
        rest = rest_frames(m)
        strains = green_strains(m.vertices, rest)
        assert np.abs(strains).max() < 1e-12

    def test_uniform_scale_strain(self):
        m = sheet(1.0, 1.0, 3, 3)
        rest = rest_frames(m)
        s = 1.2
        pos = m.vertices * np.array([s, 1.0, s])
        f = deformation_gradients(pos, rest)
        strains = green_strains(pos, rest)
        e = 0.5 * (s * s - 1.0)
        assert np.allclose(strains[:, 0, 0], e, rtol=1e-12)
        assert np.allclose(strains[:, 1, 1], e, rtol=1e-12)
        assert np.allclose(strains[:, 0, 1], 0.0, atol=1e-12)
        # metric of the gradient is the squared scale in every rest frame
        metric = np.einsum("fia,fib->fab", f, f)
        assert np.allclose(metric, (s * s) * np.eye(2), atol=1e-12)

    def test_mean_edge_length(self):
        m = quad_sheet()
        expected = (4 * 1.0 + np.sqrt(2.0)) / 5.0
        assert np.isclose(mean_edge_length(m.vertices, m.faces), expected, rtol=1e-12)
