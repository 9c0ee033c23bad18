import sys
import os
import math
import unittest

import numpy as np
from scipy.optimize import brentq

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.config import IntegratorConfig
from src.core.errors import NearPole
from src.core.ode import (
    ROOT_RTOL, ROOT_XTOL, TRACE_COLUMNS, OdeState, conformal_factor, find_period, first_integrals, integrate,
    integrate_fixed_step, integrate_raw, lift_arrays, lift_x, rhs, trace_rows,
)

HEMISPHERE_A = math.sqrt(3.0 / 8.0)


class TestOdeState(unittest.TestCase):
    def test_canonical_state(self):
        state = OdeState.canonical(0.4)
        self.assertEqual((state.s, state.y, state.dy, state.z, state.dz), (0.0, 0.0, 0.8, 0.4, 0.0))

    def test_first_integrals_vanish_on_canonical_data(self):
        for a in (0.1, 0.45, HEMISPHERE_A, 0.9):
            h1, h2 = first_integrals(OdeState.canonical(a), a)
            self.assertAlmostEqual(h1, 0.0, delta=1e-15)
            self.assertAlmostEqual(h2, 0.0, delta=1e-15)

    def test_rhs_matches_system(self):
        state = OdeState(0.0, 0.3, 0.1, 0.2, -0.5)
        two_rho = 2 * 0.09 + 8 * 0.04
        np.testing.assert_allclose(rhs(state), [0.1, (1 - two_rho) * 0.3, -0.5, (4 - two_rho) * 0.2])

    def test_conformal_factor(self):
        self.assertAlmostEqual(conformal_factor(OdeState(0.0, 0.3, 0.0, 0.2, 0.0)), 0.09 + 0.16)

    def test_lift_raises_near_pole(self):
        with self.assertRaises(NearPole):
            lift_x(OdeState(1.0, 0.6, 0.1, 0.8, 0.0))

    def test_lift_identity(self):
        state = OdeState(0.0, 0.3, 0.2, 0.4, -0.1)
        x, dx = lift_x(state)
        self.assertAlmostEqual(x * x + 0.09 + 0.16, 1.0, delta=1e-15)
        self.assertAlmostEqual(dx, -(0.3 * 0.2 - 0.4 * 0.1) / x, delta=1e-15)

    def test_pole_lift_is_signed(self):
        # on the equator x' = -sqrt(rho - y'^2 - z'^2) and x follows the sign of -(y y' + z z')
        rho = 0.36 + 4 * 0.64
        x, dx = lift_arrays(0.6, -0.3, 0.8, 0.1)
        self.assertAlmostEqual(float(dx), -math.sqrt(rho - 0.09 - 0.01), delta=1e-15)
        self.assertLess(float(x), 0.0)
        x, _ = lift_arrays(0.6, 0.3, 0.8, -0.1)
        self.assertGreater(float(x), 0.0)

    def test_lift_arrays_matches_scalar_lift(self):
        state = OdeState(0.0, 0.3, 0.2, 0.4, -0.1)
        x, dx = lift_arrays(state.y, state.dy, state.z, state.dz)
        expected = lift_x(state)
        self.assertAlmostEqual(float(x), expected[0], delta=1e-15)
        self.assertAlmostEqual(float(dx), expected[1], delta=1e-15)


class TestIntegrate(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.cfg = IntegratorConfig(rtol=1e-10, atol=1e-10)
        cls.trace = integrate(0.45, 3.0, cls.cfg)

    def test_rejects_bad_arguments(self):
        with self.assertRaises(ValueError):
            integrate(1.2, 1.0)
        with self.assertRaises(ValueError):
            integrate(0.4, -1.0)

    def test_samples_start_at_zero_and_increase(self):
        self.assertEqual(self.trace.s[0], 0.0)
        self.assertTrue(np.all(np.diff(self.trace.s) > 0))

    def test_first_integrals_conserved(self):
        self.assertLess(self.trace.max_drift, 1e-9)

    def test_sphere_constraint_from_lift(self):
        total = self.trace.x ** 2 + self.trace.y ** 2 + self.trace.z ** 2
        self.assertLess(np.max(np.abs(total - 1.0)), 1e-14)

    def test_parity_reconstruction(self):
        # integrate backwards from the canonical state and compare with the stored parity
        sol = integrate_raw(OdeState.canonical(0.45).as_array(), (0.0, -1.5), self.cfg)
        y, dy, z, dz = self.trace.at(sol.t[-1])
        np.testing.assert_allclose([y, dy, z, dz], sol.y[:, -1], atol=1e-8)

    def test_at_rejects_out_of_range(self):
        with self.assertRaises(ValueError):
            self.trace.at(self.trace.s_max + 1.0)

    def test_method_metadata(self):
        self.assertEqual(self.trace.method, 'DOP853')
        self.assertEqual(self.trace.order, 8)

    def test_trace_rows_schema(self):
        rows = trace_rows(self.trace, 1.0)
        self.assertEqual(len(rows[0]), len(TRACE_COLUMNS))
        self.assertTrue(all(row[0] <= 1.0 for row in rows))


class TestFixedStepOrder(unittest.TestCase):
    def test_error_drops_at_high_order(self):
        reference = integrate(0.45, 1.0, IntegratorConfig(rtol=1e-13, atol=1e-13, max_step=0.01))
        exact = np.array(reference.at(1.0))
        errors = [np.max(np.abs(integrate_fixed_step(0.45, 1.0, h) - exact)) for h in (0.5, 0.25)]
        # eighth order: halving h divides the error by about 2^8
        self.assertGreater(errors[0] / errors[1], 50.0)


class TestPeriod(unittest.TestCase):
    def test_hemisphere_orbit_recurs(self):
        period = find_period(HEMISPHERE_A, tol=1e-7)
        self.assertGreater(period, 0.0)
        trace = integrate(HEMISPHERE_A, period + 0.1)
        np.testing.assert_allclose(trace.at(period), OdeState.canonical(HEMISPHERE_A).as_array(), atol=1e-7)


class TestRootTolerances(unittest.TestCase):
    def test_brent_accepts_shared_tolerances(self):
        self.assertGreaterEqual(ROOT_RTOL, 4.0 * np.finfo(float).eps)
        root = brentq(lambda t: t * t - 2.0, 1.0, 2.0, xtol=ROOT_XTOL, rtol=ROOT_RTOL)
        self.assertAlmostEqual(root, math.sqrt(2.0), delta=1e-14)


if __name__ == '__main__':
    unittest.main()
