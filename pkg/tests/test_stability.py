import sys
import os
import math
import unittest

import numpy as np

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.calibration import band_trace, calibrate
from src.core.errors import FrameDegeneracy, Inadmissible
from src.core.geometry import build_grid, geodesic_disk_grid
from src.core.stability import (
    AmbientField, build_stability_report, cap_constant, coordinate_field, index_closed, index_direct, index_form,
    morse_gram, q_form, q_nullity, tangent_field, unit_vector, vy_field,
)

R = math.pi / 4


class TestCapConstant(unittest.TestCase):
    def test_quarter_value(self):
        self.assertAlmostEqual(cap_constant(R), 1.0 + math.sqrt(2.0), delta=1e-14)

    def test_unbounded_at_hemisphere(self):
        with self.assertRaises(Inadmissible):
            cap_constant(math.pi / 2)


class TestFields(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        params = calibrate(R)
        cls.grid = build_grid(params, band_trace(params), 65, 32)

    def test_coordinate_field_vanishes_at_its_point(self):
        p = self.grid.nodes[3, 5]
        field = coordinate_field(self.grid, p / np.linalg.norm(p))
        np.testing.assert_allclose(field.field.values[3, 5], 0.0, atol=1e-14)
        with self.assertRaises(ValueError):
            coordinate_field(self.grid, 2.0 * unit_vector(1))

    def test_coordinate_field_norm(self):
        field = coordinate_field(self.grid, unit_vector(2))
        np.testing.assert_allclose(np.sum(field.field.values ** 2, axis=-1), 1.0 - field.phi ** 2, atol=1e-14)

    def test_vy_requires_horizontal_direction(self):
        with self.assertRaises(Inadmissible):
            vy_field(self.grid, unit_vector(0))
        with self.assertRaises(Inadmissible):
            index_closed(self.grid, unit_vector(0))

    def test_vy_is_normal(self):
        v = vy_field(self.grid, unit_vector(1)).values
        scale = np.max(np.abs(v))
        self.assertLess(np.max(np.abs(np.sum(v * self.grid.phi_s, axis=-1))) / scale, 1e-12)
        self.assertLess(np.max(np.abs(np.sum(v * self.grid.phi_theta, axis=-1))) / scale, 1e-12)
        self.assertLess(np.max(np.abs(np.sum(v * self.grid.nodes, axis=-1))) / scale, 1e-12)

    def test_vy_on_boundary(self):
        field = vy_field(self.grid, unit_vector(3))
        # tangent to the cap boundary, and a multiple of dy^perp there
        self.assertLess(np.max(np.abs(field.values[-1, :, 0])), 1e-8)
        dy_perp = coordinate_field(self.grid, unit_vector(3)).field.normal()
        factor = math.sin(R) * (1.0 + math.sin(R)) / math.cos(R)
        np.testing.assert_allclose(field.values[-1], factor * dy_perp[-1], atol=1e-7)

    def test_ambient_field_algebra(self):
        v = vy_field(self.grid, unit_vector(1))
        total = v + v.scaled(-1.0)
        self.assertEqual(float(np.max(np.abs(total.values))), 0.0)
        self.assertLess(float(np.max(np.abs(v.tangential()))), 1e-10)
        self.assertIsInstance(tangent_field(self.grid), AmbientField)


class TestIndex(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        params = calibrate(R)
        cls.grid = build_grid(params, band_trace(params), 129, 64)
        cls.report = build_stability_report(cls.grid)

    def test_closed_values_are_negative(self):
        for i in (1, 2, 3, 4):
            self.assertLess(index_closed(self.grid, unit_vector(i)), 0.0)

    def test_zero_direction(self):
        self.assertEqual(index_closed(self.grid, np.zeros(5)), 0.0)

    def test_rotation_symmetry(self):
        closed = [d.closed for d in self.report.directions]
        self.assertAlmostEqual(closed[0] / closed[1], 1.0, delta=1e-10)
        self.assertAlmostEqual(closed[2] / closed[3], 1.0, delta=1e-10)

    def test_direct_matches_closed(self):
        for direction in self.report.directions:
            self.assertLess(direction.relative_gap, 1e-3, msg=f"e{direction.direction}")

    def test_mixed_entry(self):
        self.assertLess(abs(self.report.g12_closed), 1e-10 * abs(self.report.directions[0].closed))
        self.assertLess(self.report.g12_gap, 1e-3)

    def test_gram(self):
        gram = morse_gram(self.grid)
        self.assertTrue(gram.negative_definite)
        self.assertEqual(gram.symmetry, 0.0)
        np.testing.assert_allclose(np.diag(gram.matrix), [d.closed for d in self.report.directions])

    def test_polarized_form_is_bilinear(self):
        v = vy_field(self.grid, unit_vector(1))
        w = vy_field(self.grid, unit_vector(3))
        self.assertAlmostEqual(index_form(self.grid, v.scaled(2.0), w), 2.0 * index_form(self.grid, v, w),
                               delta=1e-12 * abs(index_direct(self.grid, v)))
        self.assertAlmostEqual(index_form(self.grid, v, w), index_form(self.grid, w, v),
                               delta=1e-12 * abs(index_direct(self.grid, v)))

    def test_frame_order_does_not_matter(self):
        v = vy_field(self.grid, unit_vector(2))
        direct = index_direct(self.grid, v)
        self.assertAlmostEqual(index_direct(self.grid, v, swap_frame=True) / direct, 1.0, delta=1e-9)

    def test_q_form(self):
        v = vy_field(self.grid, unit_vector(4))
        zero = v.scaled(0.0)
        self.assertEqual(q_form(self.grid, zero, v), 0.0)
        self.assertAlmostEqual(q_form(self.grid, v.scaled(2.0), v), 2.0 * q_form(self.grid, v, v),
                               delta=1e-12 * abs(q_form(self.grid, v, v)))

    def test_rotation_field_is_null(self):
        self.assertLess(q_nullity(self.grid), 1e-3)

    def test_report_payload(self):
        payload = self.report.to_dict()
        self.assertEqual(len(payload['gram']), 16)
        self.assertTrue(payload['negative_definite'])
        self.assertEqual(payload['off_diagonal']['note'], 'polarized extension, cross-checked')
        self.assertAlmostEqual(payload['c'], 1.0 + math.sqrt(2.0), delta=1e-14)


class TestRefinement(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        params = calibrate(R)
        trace = band_trace(params)
        cls.grids = {n: build_grid(params, trace, n, n) for n in (64, 128, 256)}
        cls.reports = {n: build_stability_report(grid) for n, grid in cls.grids.items()}

    def test_index_gap_at_finest_grid(self):
        report = self.reports[256]
        for direction in report.directions:
            self.assertLess(direction.relative_gap, 1e-3, msg=f"e{direction.direction}")
        self.assertTrue(morse_gram(self.grids[256]).negative_definite)

    def test_index_gap_is_second_order(self):
        gaps = [self.reports[n].max_relative_gap for n in (64, 128, 256)]
        for coarse, fine in zip(gaps, gaps[1:]):
            self.assertGreater(coarse / fine, 3.0)

    def test_rotation_field_nullity_decays(self):
        values = [q_nullity(self.grids[n]) for n in (64, 128, 256)]
        self.assertLess(values[-1], 1e-4)
        for coarse, fine in zip(values, values[1:]):
            self.assertGreater(coarse / fine, 3.0)

class TestFrameDegeneracy(unittest.TestCase):
    def test_vanishing_conformal_factor(self):
        grid = geodesic_disk_grid(32, 32)
        grid.rho = grid.rho.copy()
        grid.rho[0] = 0.0
        field = tangent_field(grid)
        with self.assertRaises(FrameDegeneracy):
            q_form(grid, field, field)


if __name__ == '__main__':
    unittest.main()
