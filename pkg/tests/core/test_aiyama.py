import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

from cmclab.constants import E12, E21, IDENTITY, SIGMA1, SIGMA3, FlatnessMode, NuPreset
from cmclab.core.aiyama import (
    AAComparison,
    AAData,
    SampledAAData,
    aa_alpha,
    aa_compare,
    aa_connection,
    aa_omega,
    aa_reconstruct,
    aa_tau,
    induced_metric_aa,
    nu_preset,
)
from cmclab.core.linalg import exp_traceless, trace2
from cmclab.core.magnus import GridSpec, integrate_grid
from cmclab.core.seeds import ConnectionField, TanProfile, connection_from_seed, flatness_residual
from cmclab.utils.data_handling import write_csv
from cmclab.utils.exceptions import PreconditionError, SingularDenominatorError


def preset_data(preset: NuPreset, H: float = 0.0, constant: complex = 0j) -> AAData:
    nu, nu_bar_z = nu_preset(preset, constant)
    return AAData(nu=nu, nu_bar_z=nu_bar_z, H=H)


class TestAAForms(unittest.TestCase):
    def test_values_at_origin(self):
        data = preset_data(NuPreset.CONJ_HALF)
        self.assertAlmostEqual(complex(aa_omega(data, 0j)), -1)
        assert_allclose(aa_alpha(data, 0j), E21)
        self.assertAlmostEqual(float(induced_metric_aa(data, 0j)), 1.0)

    def test_tau(self):
        a_tau, b_tau = aa_tau(preset_data(NuPreset.CONJ_HALF), 0j)
        assert_allclose(a_tau, np.zeros((2, 2)), atol=1e-15)
        assert_allclose(b_tau, E12, atol=1e-15)

        a_tau, b_tau = aa_tau(preset_data(NuPreset.CONJ_HALF, H=0.6), 0j)
        assert_allclose(a_tau, 0.5 * E21, atol=1e-15)
        assert_allclose(b_tau, 0.75 * E12, atol=1e-15)

        z = np.array([0.1 + 0.2j, -0.3j])
        for part in aa_tau(preset_data(NuPreset.CONJ_HALF, H=0.3), z):
            assert_allclose(trace2(part), 0, atol=1e-15)

    def test_connection(self):
        self.assertAlmostEqual(aa_connection(preset_data(NuPreset.CONJ_HALF)).lam, 1.0)
        self.assertAlmostEqual(aa_connection(preset_data(NuPreset.CONJ_HALF, H=0.6)).lam, 0.5)

    def test_curvature_of_antiholomorphic_nu(self):
        # for nu = conj(z) / 2 and H = 0 the residual is the single entry -2 nu / ((1 - |nu|^2)(1 - |nu|^4))
        conn = aa_connection(preset_data(NuPreset.CONJ_HALF))
        z = np.array([0.0, 0.1 + 0.2j, -0.3 + 0.1j, 0.45 + 0.45j])
        residual = flatness_residual(conn, z, mode=FlatnessMode.FINITE_DIFFERENCE)
        nu = np.conj(z) / 2
        p = np.abs(nu) ** 2
        assert_allclose(residual[..., 0, 1], -2 * nu / ((1 - p) * (1 - p**2)), rtol=1e-6, atol=1e-9)
        assert_allclose(residual[..., 0, 0], 0, atol=1e-9)
        assert_allclose(residual[..., 1, 0], 0, atol=1e-9)
        assert_allclose(residual[..., 1, 1], 0, atol=1e-9)

    def test_singular_denominator(self):
        data = preset_data(NuPreset.CONSTANT, constant=1j)
        with self.assertRaises(SingularDenominatorError):
            aa_omega(data, 0j)

    def test_holomorphic_nu_is_not_immersed(self):
        data = preset_data(NuPreset.HOLOMORPHIC_HALF)
        assert_allclose(induced_metric_aa(data, np.array([0.1, 0.2j])), 0)

    def test_mean_curvature_range(self):
        with self.assertRaises(PreconditionError):
            preset_data(NuPreset.CONJ_HALF, H=1.0)


class TestSampledAAData(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.x = np.linspace(-0.5, 0.5, 6)
        self.y = np.linspace(-0.5, 0.5, 5)
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        self.nu = (xx - 1j * yy) / 2

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_matches_preset(self):
        sampled = SampledAAData(self.x, self.y, self.nu, H=0.0)
        z = np.array([0.05 + 0.1j, -0.33 + 0.21j])
        assert_allclose(sampled.nu(z), np.conj(z) / 2, atol=1e-12)
        assert_allclose(sampled.nu_bar_z(z), 0.5, atol=1e-12)

    def test_from_csv(self):
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        table = np.column_stack([xx.ravel(), yy.ravel(), self.nu.real.ravel(), self.nu.imag.ravel()])
        table = table[np.random.default_rng(9).permutation(len(table))]
        path = write_csv(self.test_dir / "nu.csv", ["x", "y", "re_nu", "im_nu"], table)

        sampled = SampledAAData.from_csv(path, H=0.2)
        assert_allclose(sampled.samples, self.nu, atol=1e-12)
        self.assertEqual(sampled.H, 0.2)

    def test_incomplete_csv(self):
        path = write_csv(self.test_dir / "nu.csv", ["x", "y", "re_nu"], np.zeros((4, 3)))
        with self.assertRaises(PreconditionError):
            SampledAAData.from_csv(path, H=0.0)

    def test_shape_checks(self):
        with self.assertRaises(PreconditionError):
            SampledAAData(self.x, self.y, self.nu.T, H=0.0)
        with self.assertRaises(PreconditionError):
            SampledAAData(self.x[:3], self.y[:3], self.nu[:3, :3], H=0.0)


class TestReconstruction(unittest.TestCase):
    def setUp(self):
        self.grid = GridSpec(-0.2, 0.2, -0.2, 0.2, nx=5, ny=5)

    def test_vanishing_tau_gives_a_point(self):
        frame_grid, f = aa_reconstruct(preset_data(NuPreset.HOLOMORPHIC_HALF), self.grid)
        assert_allclose(frame_grid.frames, np.broadcast_to(IDENTITY, (5, 5, 2, 2)), atol=1e-14)
        assert_allclose(f, np.broadcast_to(IDENTITY, (5, 5, 2, 2)), atol=1e-14)

    def test_relaxed_reconstruction(self):
        frame_grid, f = aa_reconstruct(preset_data(NuPreset.CONJ_HALF), self.grid, strict=False)
        self.assertEqual(frame_grid.shape, (5, 5))
        assert_allclose(f, np.conj(np.swapaxes(f, -1, -2)), atol=1e-12)
        assert_allclose(frame_grid.frames[0, 0], IDENTITY)


class TestCompare(unittest.TestCase):
    def test_agreement_flag(self):
        close = AAComparison(tau_flatness=0.0, cell_defect=0.0, max_distance=1e-5, metric_mismatch=None, tolerance=1e-4)
        far = AAComparison(tau_flatness=0.0, cell_defect=0.0, max_distance=1e-3, metric_mismatch=0.1, tolerance=1e-4)
        self.assertTrue(close.agrees)
        self.assertFalse(far.agrees)
        self.assertTrue(close.to_dict()["agrees"])

    def test_tan_surface_is_outside_the_aa_range(self):
        # the tan surface at lam = 0.5 carries H = 5/3, so AA forms built with H = 0.6 cannot reproduce it
        conn = connection_from_seed(TanProfile(C=1.0, delta=0.0, lam=0.5), 0.5)
        frame_grid = integrate_grid(conn, GridSpec(0.0, 0.5, 0.0, 0.5, nx=21, ny=21))
        comparison = aa_compare(frame_grid, H=0.6, tolerance=1e-4)
        report = comparison.to_dict()
        self.assertEqual(
            set(report),
            {"tau_flatness", "cell_defect", "max_distance", "metric_mismatch", "tolerance", "agrees"},
        )
        self.assertFalse(comparison.agrees)
        self.assertGreater(comparison.tau_flatness, 0.1)
        self.assertGreater(comparison.max_distance, 0.05)
        self.assertIsNotNone(comparison.metric_mismatch)
        self.assertGreater(comparison.metric_mismatch, 0.05)

    def test_constant_frames_agree(self):
        # constant frames have a constant Gauss map, so tau vanishes and both immersions stay at g g*
        g = exp_traceless(0.3 * SIGMA3 + 0.2j * SIGMA1)
        zero = np.zeros((2, 2), dtype=np.complex128)
        conn = ConnectionField(
            a=lambda z: np.broadcast_to(zero, np.shape(z) + (2, 2)),
            b=lambda z: np.broadcast_to(zero, np.shape(z) + (2, 2)),
            lam=1.0,
            name="zero",
        )
        frame_grid = integrate_grid(conn, GridSpec(0.0, 0.3, 0.0, 0.3, nx=6, ny=6, initial_frame=g))
        assert_allclose(frame_grid.frames, np.broadcast_to(g, (6, 6, 2, 2)), atol=1e-14)

        comparison = aa_compare(frame_grid, H=0.3, tolerance=1e-4)
        self.assertTrue(comparison.agrees)
        self.assertLess(comparison.max_distance, 1e-5)
        self.assertLess(comparison.tau_flatness, 1e-10)
        self.assertIsNone(comparison.metric_mismatch)


if __name__ == "__main__":
    unittest.main()
