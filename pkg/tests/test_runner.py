import sys
import os
import math
import unittest

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.calibration import calibrate
from src.core.config import RunConfig
from src.core.runner import SECTIONS, VerificationRunner


class TestVerificationRunner(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.params = calibrate(math.pi / 4)
        cls.config = RunConfig(r=math.pi / 4, n_s=33, n_theta=16, k_max=5, seed=3)

    def test_progress_and_sections(self):
        messages = []
        report = VerificationRunner(self.config, progress=messages.append).run(self.params)
        self.assertEqual(list(report.sections), list(SECTIONS))
        self.assertEqual(messages[0], "Verifying: calibration")
        self.assertTrue(messages[-1].startswith("Verification complete"))
        names = {check.name for check in report.checks}
        self.assertIn('calibration.residual', names)
        self.assertIn('controls.perturbed_free_boundary', names)
        self.assertEqual(report.to_dict()['pass'], report.passed)

    def test_core_checks_pass_on_small_grid(self):
        report = VerificationRunner(self.config).run(self.params)
        by_name = {check.name: check for check in report.checks}
        for name in ('calibration.residual', 'conservation.drift', 'spectrum.sigma0', 'spectrum.sigma1',
                     'geometry.sphere', 'geometry.free_boundary', 'stability.negative_definite',
                     'controls.perturbed_free_boundary'):
            self.assertTrue(by_name[name].passed, msg=name)

    def test_stop_skips_remaining_sections(self):
        runner = VerificationRunner(self.config)
        runner.progress = lambda message: runner.stop() if message.endswith('conservation') else None
        report = runner.run(self.params)
        self.assertIn('drift', report.sections['conservation'])
        for name in ('spectrum', 'geometry', 'stability', 'controls'):
            self.assertEqual(report.sections[name], {'failed': True, 'reason': 'stopped'})
        self.assertFalse(report.passed)


if __name__ == '__main__':
    unittest.main()
