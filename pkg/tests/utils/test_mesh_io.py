import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from cmclab.utils.mesh_io import grid_triangles, read_obj, triangle_areas, write_obj


class TestMeshIO(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_grid_triangles(self):
        faces = grid_triangles(2, 2)
        assert_array_equal(faces, [[0, 2, 3], [0, 3, 1]])
        faces = grid_triangles(3, 4)
        self.assertEqual(faces.shape, (12, 3))
        self.assertEqual(faces.max(), 11)

    def test_triangle_areas(self):
        vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]])
        areas = triangle_areas(vertices, np.array([[0, 1, 2], [0, 1, 3]]))
        assert_allclose(areas, [0.5, 0.0])

    def test_write_and_read(self):
        vertices = np.array([[0.1, -0.2, 0.3], [1.0 / 3.0, 0.0, 0.5], [0.0, 2.0 / 3.0, -0.25]])
        faces = np.array([[0, 1, 2]])
        path = write_obj(self.test_dir / "mesh.obj", vertices, faces, comment="test mesh\nsecond line")

        lines = path.read_text().splitlines()
        self.assertEqual(lines[:2], ["# test mesh", "# second line"])
        self.assertIn("v 0.333333333 0 0.5", lines)
        self.assertEqual(lines[-1], "f 1 2 3")

        read_vertices, read_faces = read_obj(path)
        assert_allclose(read_vertices, vertices, rtol=1e-8)
        assert_array_equal(read_faces, faces)

    def test_read_slash_faces(self):
        path = self.test_dir / "slashes.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nvn 0 0 1\nf 1//1 2//1 3//1\n")
        vertices, faces = read_obj(path)
        self.assertEqual(vertices.shape, (3, 3))
        assert_array_equal(faces, [[0, 1, 2]])


if __name__ == "__main__":
    unittest.main()
