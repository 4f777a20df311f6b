import shutil
import tempfile
import unittest
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.testing import assert_allclose

from cmclab.constants import IDENTITY
from cmclab.core.linalg import random_sl2c
from cmclab.core.magnus import GridSpec, IntegratorConfig, integrate_grid
from cmclab.core.seeds import TanProfile, connection_from_seed
from cmclab.core.surface import (
    CSV_COLUMNS,
    build_surface,
    export_mesh,
    extract_geometry,
    gauss_map,
    h_from_lambda,
    immerse,
    is_cmc_interpretable,
    kokubu_metric,
    realized_mean_curvature,
    singular_radius,
    stereographic,
    surface_point,
)
from cmclab.utils.data_handling import read_csv
from cmclab.utils.exceptions import (
    DegenerateMetricError,
    DomainError,
    NotUnimodularError,
    PreconditionError,
    SingularMetricError,
)
from cmclab.utils.mesh_io import read_obj


def tan_frames(lam: float, x1: float, n: int, cfg: Optional[IntegratorConfig] = None):
    conn = connection_from_seed(TanProfile(C=1.0, delta=0.0, lam=lam), lam)
    return integrate_grid(conn, GridSpec(0.0, x1, 0.0, x1, nx=n, ny=n), cfg)


class TestPointMaps(unittest.TestCase):
    def test_immerse(self):
        assert_allclose(immerse(IDENTITY), IDENTITY)
        with self.assertRaises(NotUnimodularError):
            immerse(2 * IDENTITY)

    def test_gauss_map(self):
        assert_allclose(gauss_map(IDENTITY), [0, 0, -1])
        rng = np.random.default_rng(20)
        g = gauss_map(random_sl2c(rng, size=25))
        assert_allclose(np.linalg.norm(g, axis=-1), 1, atol=1e-12)

    def test_stereographic(self):
        self.assertEqual(complex(stereographic([0.0, 0.0, -1.0])), 0j)
        self.assertAlmostEqual(complex(stereographic([1.0, 0.0, 0.0])), 1 + 0j)
        with self.assertRaises(DomainError):
            stereographic([0.0, 0.0, 1.0])

    def test_surface_point(self):
        point = surface_point(IDENTITY)
        self.assertEqual(point.ball.as_tuple(), (0.0, 0.0, 0.0))
        assert_allclose(point.gauss, [0, 0, -1])


class TestMeanCurvatureLaws(unittest.TestCase):
    def test_h_from_lambda(self):
        self.assertAlmostEqual(h_from_lambda(1.0), 0.0)
        self.assertAlmostEqual(h_from_lambda(0.5), 0.6)
        self.assertAlmostEqual(h_from_lambda(0.5j), 0.6)
        self.assertLess(h_from_lambda(2.0), 0)
        with self.assertRaises(PreconditionError):
            h_from_lambda(0)

    def test_interpretable(self):
        self.assertTrue(is_cmc_interpretable(1.0))
        self.assertTrue(is_cmc_interpretable(0.3 + 0.4j))
        self.assertFalse(is_cmc_interpretable(1.5))

    def test_realized_mean_curvature(self):
        self.assertAlmostEqual(realized_mean_curvature(0.5), 5 / 3)
        self.assertAlmostEqual(realized_mean_curvature(0.5), 1 / h_from_lambda(0.5))
        with self.assertRaises(PreconditionError):
            realized_mean_curvature(1.0)


class TestKokubuMetric(unittest.TestCase):
    def test_values(self):
        self.assertAlmostEqual(float(kokubu_metric(0, 0.0)), 4.0)
        self.assertAlmostEqual(singular_radius(0.6), 2.0)
        self.assertAlmostEqual(singular_radius(0.0), 1.0)
        self.assertGreater(float(kokubu_metric(1.9, 0.6)), 0)

    def test_singular_circle(self):
        with self.assertRaises(SingularMetricError):
            kokubu_metric(1.0, 0.0)
        with self.assertRaises(SingularMetricError):
            kokubu_metric(np.array([0.0, 2.5]), 0.6)
        with self.assertRaises(PreconditionError):
            kokubu_metric(0.0, 1.0)


class TestExtractGeometry(unittest.TestCase):
    def test_tan_surface(self):
        frame_grid = tan_frames(0.5, 0.2, 21)
        geometry = extract_geometry(frame_grid)
        summary = geometry.summary()
        # flat metric (1 - lam)^2 C^2 and H = (1 + lam^2) / (1 - lam^2)
        self.assertAlmostEqual(summary["H_median"], 5 / 3, delta=1e-3)
        assert_allclose(geometry.interior(geometry.e2u), 0.25, rtol=1e-3)
        self.assertLess(summary["conformal_defect_max"], 5e-4)
        self.assertTrue(np.all(np.isnan(geometry.H[0])))
        self.assertEqual(geometry.normal.shape, (21, 21, 4))

    def test_discretization_error_is_second_order(self):
        # central differences bias H and the conformal defect by O(h^2); integrate tightly
        cfg = IntegratorConfig(atol=1e-12)
        for lam in (0.5, 0.25):
            with self.subTest(lam=lam):
                target = realized_mean_curvature(lam)
                errors, defects = [], []
                for n in (21, 41):
                    geometry = extract_geometry(tan_frames(lam, 0.4, n, cfg))
                    errors.append(float(np.nanmax(np.abs(geometry.H - target))))
                    defects.append(float(np.nanmax(geometry.conformal_defect)))
                self.assertGreaterEqual(errors[0] / errors[1], 3.5)
                self.assertLessEqual(errors[0] / errors[1], 4.5)
                self.assertLess(errors[1], 2e-4)
                self.assertGreater(defects[0] / defects[1], 3.0)
                self.assertLess(defects[1], 1e-4)

    def test_unit_lambda_is_degenerate(self):
        frame_grid = tan_frames(1.0, 0.2, 6)
        with self.assertRaises(DegenerateMetricError):
            extract_geometry(frame_grid)

    def test_small_grid(self):
        with self.assertRaises(PreconditionError):
            extract_geometry(tan_frames(0.5, 0.2, 4))

    def test_surface_grid(self):
        surface = build_surface(tan_frames(0.5, 0.2, 5))
        self.assertEqual(surface.shape, (5, 5))
        self.assertLess(surface.lorentz_norm_deviation(), 1e-12)
        self.assertTrue(np.all(np.linalg.norm(surface.ball, axis=-1) < 1))


class TestExportMesh(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_export_with_geometry(self):
        frame_grid = tan_frames(0.5, 0.2, 6)
        surface = build_surface(frame_grid)
        export = export_mesh(
            surface,
            self.test_dir / "mesh.obj",
            self.test_dir / "geometry.csv",
            extract_geometry(frame_grid),
        )
        self.assertEqual(export.vertex_count, 36)
        self.assertEqual(export.face_count, 50)
        self.assertEqual(export.degenerate_faces, 0)

        vertices, faces = read_obj(export.obj_path)
        assert_allclose(vertices, surface.ball.reshape(-1, 3), rtol=1e-8, atol=1e-9)
        self.assertEqual(faces.shape, (50, 3))

        columns, table = read_csv(export.csv_path)
        self.assertEqual(tuple(columns), CSV_COLUMNS)
        self.assertEqual(table.shape, (36, len(CSV_COLUMNS)))

    def test_degenerate_faces_are_counted(self):
        surface = build_surface(tan_frames(1.0, 0.2, 4))
        export = export_mesh(surface, self.test_dir / "flat.obj")
        self.assertEqual(export.degenerate_faces, export.face_count)
        self.assertIsNone(export.csv_path)


if __name__ == "__main__":
    unittest.main()
