import sys
import os
import math
import unittest

import numpy as np

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.calibration import band_trace, calibrate, perturbed
from src.core.errors import CoverageError
from src.core.geometry import (
    ImmersionGrid, build_grid, constant_grid, free_boundary_residual, geodesic_disk_grid, geometry_report,
    measures, metric_report, minimality_residual, normal_projector, second_fundamental_norm2, simpson_weights,
    tangent_frame,
)
from src.core.ode import integrate

R = math.pi / 4


class TestQuadrature(unittest.TestCase):
    def test_simpson_weights_integrate_cubic(self):
        s = np.linspace(0.0, 2.0, 17)
        self.assertAlmostEqual(float(np.dot(simpson_weights(s), s ** 3)), 4.0, delta=1e-13)

    def test_fft_derivative_of_trigonometric_polynomial(self):
        s = np.linspace(0.0, 1.0, 8)
        theta = 2 * math.pi * np.arange(16) / 16
        values = np.broadcast_to(np.sin(3 * theta), (8, 16))[..., np.newaxis]
        grid = ImmersionGrid.from_nodes(s, theta, np.repeat(values, 5, axis=-1), rho=np.ones(8))
        np.testing.assert_allclose(grid.d_theta(grid.nodes)[..., 0], 3 * np.cos(3 * theta)[np.newaxis].repeat(8, 0),
                                   atol=1e-12)
        np.testing.assert_allclose(grid.d_thetatheta(grid.nodes)[..., 0], -9 * values[..., 0], atol=1e-11)


class TestBandGrid(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.params = calibrate(R)
        cls.trace = band_trace(cls.params)
        cls.grid = build_grid(cls.params, cls.trace, 65, 32)
        cls.fine = build_grid(cls.params, cls.trace, 129, 32)

    def test_grid_validation(self):
        with self.assertRaises(ValueError):
            build_grid(self.params, self.trace, 8, 32)
        with self.assertRaises(ValueError):
            build_grid(self.params, self.trace, 65, 33)

    def test_coverage(self):
        short = integrate(self.params.a, 0.5 * self.params.s_r)
        with self.assertRaises(CoverageError):
            build_grid(self.params, short, 65, 32)

    def test_core_circle(self):
        a = self.params.a
        np.testing.assert_allclose(self.grid.nodes[0, 0], [math.sqrt(1 - a * a), 0.0, 0.0, a, 0.0], atol=1e-14)
        # s = 0 is the doubly covered core: theta and theta + pi give the same point
        np.testing.assert_allclose(self.grid.nodes[0], np.roll(self.grid.nodes[0], -16, axis=0), atol=1e-14)

    def test_sphere_and_containment(self):
        metric = metric_report(self.grid)
        self.assertLess(metric.sphere, 1e-12)
        self.assertGreater(metric.containment_margin, -1e-10)
        np.testing.assert_allclose(self.grid.nodes[-1, :, 0], math.cos(R), atol=1e-10)
        self.assertLess(metric.boundary_gap, 1e-12)

    def test_conformality_converges(self):
        coarse = metric_report(self.grid)
        fine = metric_report(self.fine)
        self.assertLess(coarse.conformality_theta, 1e-12)
        self.assertLess(coarse.conformality_theta_analytic, 1e-14)
        ratio = coarse.conformality_s / fine.conformality_s
        self.assertGreater(ratio, 3.0)
        self.assertLess(ratio, 6.0)

    def test_minimality_converges(self):
        coarse = minimality_residual(self.grid).max
        fine = minimality_residual(self.fine).max
        self.assertLess(fine, 1e-3)
        self.assertGreater(coarse / fine, 3.0)

    def test_free_boundary(self):
        residual = free_boundary_residual(self.grid)
        self.assertLess(residual.defect, 1e-8)
        self.assertLess(residual.agreement, 1e-12)

    def test_perturbed_free_boundary_fails(self):
        shifted = perturbed(self.params, -1e-3)
        grid = build_grid(shifted, band_trace(shifted), 32, 32)
        residual = free_boundary_residual(grid)
        self.assertGreater(residual.defect, 1e-4)
        self.assertLess(residual.agreement, 1e-6)

    def test_theta_identity_at_exact_sigmas(self):
        # sigma0 cos^2 r + sigma1 sin^2 r = 0 when sigma0 = -tan r and sigma1 = cot r
        totals = measures(self.grid, -math.tan(R), 1.0 / math.tan(R))
        self.assertAlmostEqual(totals.theta_r / (2.0 * totals.area), 1.0, delta=1e-12)
        self.assertAlmostEqual(totals.boundary_length, 2 * math.pi * math.sqrt(self.grid.rho[-1]), delta=1e-15)

    def test_area_is_stable_in_theta(self):
        wide = build_grid(self.params, self.trace, 65, 64)
        self.assertAlmostEqual(measures(wide, 0.0, 0.0).area / measures(self.grid, 0.0, 0.0).area, 1.0, delta=1e-12)

    def test_tangent_frame_is_orthonormal(self):
        e1, e2, _, _ = tangent_frame(self.grid)
        np.testing.assert_allclose(np.sum(e1 * e1, axis=-1), 1.0, atol=1e-13)
        np.testing.assert_allclose(np.sum(e1 * e2, axis=-1), 0.0, atol=1e-13)
        np.testing.assert_allclose(np.sum(e1 * self.grid.nodes, axis=-1), 0.0, atol=1e-13)

    def test_frame_swap_keeps_normal_space(self):
        np.testing.assert_allclose(normal_projector(self.grid), normal_projector(self.grid, swap=True), atol=1e-12)

    def test_report_keys(self):
        report = geometry_report(self.grid, -math.tan(R), 1.0 / math.tan(R)).to_dict()
        self.assertEqual(set(report['conformality']), {'g11', 'g22', 'g12'})
        self.assertEqual(len(report['minimality_per_coordinate']), 5)
        self.assertIn('free_boundary_squared_expansion', report)


class TestRefinement(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        params = calibrate(R)
        trace = band_trace(params)
        cls.grids = {n: build_grid(params, trace, n, n) for n in (64, 128, 256)}

    def test_conformality_is_second_order(self):
        ratio = metric_report(self.grids[128]).conformality_s / metric_report(self.grids[256]).conformality_s
        self.assertGreater(ratio, 3.5)
        self.assertLess(ratio, 4.5)

    def test_minimality_at_finest_grid(self):
        residuals = [minimality_residual(self.grids[n]).max for n in (64, 128, 256)]
        self.assertLess(residuals[-1], 1e-5)
        for coarse, fine in zip(residuals, residuals[1:]):
            self.assertGreater(coarse / fine, 3.5)
            self.assertLess(coarse / fine, 4.5)

class TestReferenceSurfaces(unittest.TestCase):
    def test_geodesic_disk_has_no_second_fundamental_form(self):
        grid = geodesic_disk_grid()
        self.assertLess(float(np.max(second_fundamental_norm2(grid))), 1e-10)

    def test_geodesic_disk_is_conformal(self):
        metric = metric_report(geodesic_disk_grid())
        self.assertLess(metric.conformality_theta, 1e-12)
        self.assertLess(metric.sphere, 1e-14)

    def test_constant_map_is_not_minimal(self):
        residual = minimality_residual(constant_grid([1.0, 0.0, 0.0, 0.0, 0.0]))
        self.assertAlmostEqual(residual.max, 2.0, delta=1e-12)
        self.assertAlmostEqual(residual.per_coordinate[1], 0.0, delta=1e-12)


if __name__ == '__main__':
    unittest.main()
