import json
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from cmclab.cli import build_parser, main
from cmclab.constants import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_FAILURE, EXIT_SUCCESS, THREADS_ENV_VAR
from cmclab.commands.lab_command import resolve_threads
from cmclab.utils.data_handling import read_csv
from cmclab.utils.exceptions import RunConfigException, StepUnderflowError


class TestCli(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.out = self.test_dir / "out"

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def write_config(self, data: dict) -> Path:
        path = self.test_dir / "run.json"
        path.write_text(json.dumps(data))
        return path

    def run_cli(self, command: str, config, *extra: str) -> int:
        return main([command, "--config", str(config), "--out", str(self.out), *extra])

    def report(self, name: str) -> dict:
        return json.loads((self.out / name).read_text())

    def test_parser(self):
        args = build_parser().parse_args(["surface", "--config", "x.json", "--threads", "2"])
        self.assertEqual(args.command, "surface")
        self.assertEqual(args.threads, 2)
        self.assertIsNone(args.tolerance)
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["surface"])

    def test_flatness(self):
        self.assertEqual(self.run_cli("flatness", "tan_flatness"), EXIT_SUCCESS)
        report = self.report("flatness_report.json")
        self.assertTrue(report["passed"])
        self.assertLess(report["max_residual"], 1e-6)
        self.assertEqual(report["mode"], "analytic")

    def test_non_flat_seed(self):
        self.assertEqual(self.run_cli("flatness", "nilpotent"), EXIT_NUMERICAL_FAILURE)
        report = self.report("flatness_report.json")
        self.assertFalse(report["passed"])
        self.assertAlmostEqual(report["max_residual"], 2**0.5)

        # a looser tolerance accepts the same data
        self.assertEqual(self.run_cli("flatness", "nilpotent", "--tolerance", "10"), EXIT_SUCCESS)

    def test_jacobi(self):
        self.assertEqual(self.run_cli("jacobi", "jacobi_constant"), EXIT_SUCCESS)
        report = self.report("jacobi_report.json")
        self.assertEqual([mode["m"] for mode in report["modes"]], [0, 1, 2])
        self.assertTrue(all(mode["negative_eigenvalue_count"] == 0 for mode in report["modes"]))
        columns, table = read_csv(self.out / "jacobi_potential.csv")
        self.assertEqual(columns, ["s", "V_0", "V_1", "V_2"])
        self.assertEqual(table.shape, (201, 4))

    def test_monodromy(self):
        self.assertEqual(self.run_cli("monodromy", "cylinder_monodromy"), EXIT_SUCCESS)
        report = self.report("monodromy_report.json")
        self.assertAlmostEqual(report["trace_expected"], -2.0)
        self.assertAlmostEqual(report["trace_re"], -2.0, delta=1e-6)
        self.assertAlmostEqual(report["trace_im"], 0.0, delta=1e-6)

    def test_surface(self):
        config = self.write_config(
            {
                "seed": {"variant": "tan", "lambda": {"re": 0.5}},
                "grid": {"x0": 0.0, "x1": 0.2, "y0": 0.0, "y1": 0.2, "nx": 21, "ny": 21},
            }
        )
        self.assertEqual(self.run_cli("surface", config, "--tolerance", "1e-3"), EXIT_SUCCESS)
        report = self.report("report.json")
        self.assertFalse(report["degenerate"])
        self.assertAlmostEqual(report["H_realized"], 5 / 3)
        self.assertEqual(report["mesh"]["vertices"], 441)
        self.assertTrue((self.out / "mesh.obj").exists())
        self.assertTrue((self.out / "geometry.csv").exists())

    def test_outputs_are_reproducible(self):
        config = self.write_config(
            {
                "seed": {"variant": "tan", "lambda": {"re": 0.5}},
                "grid": {"x0": 0.0, "x1": 0.2, "y0": 0.0, "y1": 0.2, "nx": 11, "ny": 11},
            }
        )
        first, second = self.test_dir / "first", self.test_dir / "second"
        for out, threads in ((first, "1"), (second, "3")):
            code = self.run_cli("surface", config, "--threads", threads, "--tolerance", "1e-2", "--out", str(out))
            self.assertEqual(code, EXIT_SUCCESS)

        names = sorted(p.name for p in first.iterdir())
        self.assertEqual(names, sorted(p.name for p in second.iterdir()))
        self.assertIn("mesh.obj", names)
        for name in names:
            with self.subTest(file=name):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_degenerate_surface(self):
        config = self.write_config(
            {
                "seed": {"variant": "tan", "lambda": {"re": 1.0}},
                "grid": {"x0": 0.0, "x1": 0.2, "y0": 0.0, "y1": 0.2, "nx": 6, "ny": 6},
            }
        )
        self.assertEqual(self.run_cli("surface", config), EXIT_NUMERICAL_FAILURE)
        self.assertTrue(self.report("report.json")["degenerate"])
        self.assertTrue((self.out / "mesh.obj").exists())

    def test_aa_compare_from_data(self):
        self.assertEqual(self.run_cli("aa-compare", "aa_conj_half"), EXIT_NUMERICAL_FAILURE)
        report = self.report("aa_report.json")
        self.assertEqual(report["mode"], "gauss_map_data")
        self.assertFalse(report["passed"])
        self.assertTrue(report["immersed"])
        # largest residual at the interior corner z = 0.45 (1 + i), nu = conj(z) / 2
        nu = 0.45 * 2**0.5 / 2
        expected = 2 * nu / ((1 - nu**2) * (1 - nu**4))
        self.assertAlmostEqual(report["tau_flatness"], expected, delta=1e-5)

    def test_aa_compare_closed_loop(self):
        self.assertEqual(self.run_cli("aa-compare", "aa_closed_loop"), EXIT_NUMERICAL_FAILURE)
        report = self.report("aa_report.json")
        self.assertEqual(report["mode"], "closed_loop")
        self.assertAlmostEqual(report["H"], 0.6)
        self.assertFalse(report["agrees"])
        self.assertGreater(report["max_distance"], report["tolerance"])

    def test_config_errors(self):
        self.assertEqual(self.run_cli("flatness", self.test_dir / "missing.json"), EXIT_CONFIG_ERROR)
        self.assertEqual(self.run_cli("flatness", self.test_dir), EXIT_CONFIG_ERROR)
        # the monodromy command needs a loop block
        self.assertEqual(self.run_cli("monodromy", "tan_flatness"), EXIT_CONFIG_ERROR)
        self.assertFalse(self.out.exists())

    def test_open_loop(self):
        config = self.write_config(
            {
                "seed": {"variant": "tan", "lambda": {"re": 1.0}},
                "loop": {"kind": "polyline", "points": [{"re": 0.0}, {"re": 0.5}]},
            }
        )
        self.assertEqual(self.run_cli("monodromy", config), EXIT_CONFIG_ERROR)
        self.assertFalse(self.out.exists())

    @patch("cmclab.commands.commands.integrate_grid")
    def test_numerical_failure(self, mock_integrate_grid):
        mock_integrate_grid.side_effect = StepUnderflowError("step below hmin")
        self.assertEqual(self.run_cli("surface", "tan_flatness"), EXIT_NUMERICAL_FAILURE)
        self.assertFalse(self.out.exists())

    @patch.dict(os.environ, {THREADS_ENV_VAR: "zero"})
    def test_invalid_thread_env(self):
        self.assertEqual(self.run_cli("flatness", "tan_flatness"), EXIT_CONFIG_ERROR)


class TestResolveThreads(unittest.TestCase):
    def test_argument(self):
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_threads(), 1)
            self.assertEqual(resolve_threads(4), 4)
            with self.assertRaises(RunConfigException):
                resolve_threads(0)

    def test_environment_wins(self):
        with patch.dict(os.environ, {THREADS_ENV_VAR: "3"}):
            self.assertEqual(resolve_threads(8), 3)
        with patch.dict(os.environ, {THREADS_ENV_VAR: "-1"}):
            with self.assertRaises(RunConfigException):
                resolve_threads()


if __name__ == "__main__":
    unittest.main()
