import sys
import os
import json
import math
import shutil
import tempfile
import unittest

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.config import CONFIG_ENV, DEFAULT_CONFIG, ConfigManager, IntegratorConfig, RunConfig, Tolerances
from src.core.errors import ConfigError


class ConfigTestCase(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, 'config.json')
        self.previous = os.environ.get(CONFIG_ENV)
        os.environ[CONFIG_ENV] = self.path
        ConfigManager.reset()

    def tearDown(self):
        ConfigManager.reset()
        if self.previous is None:
            os.environ.pop(CONFIG_ENV, None)
        else:
            os.environ[CONFIG_ENV] = self.previous
        shutil.rmtree(self.test_dir)


class TestConfigManager(ConfigTestCase):
    def test_defaults_without_file(self):
        manager = ConfigManager()
        self.assertEqual(manager.get_section('grid'), DEFAULT_CONFIG['grid'])
        self.assertIs(manager, ConfigManager())

    def test_saved_values_override_defaults(self):
        with open(self.path, 'w') as f:
            json.dump({'integrator': {'rtol': 1e-9}, 'extra': {'k': 1}}, f)
        manager = ConfigManager()
        integrator = manager.get_section('integrator')
        self.assertEqual(integrator['rtol'], 1e-9)
        self.assertEqual(integrator['atol'], DEFAULT_CONFIG['integrator']['atol'])
        self.assertEqual(manager.get_section('extra'), {'k': 1})

    def test_corrupt_file_falls_back(self):
        with open(self.path, 'w') as f:
            f.write("{not json")
        with self.assertLogs('src.core.config', level='WARNING'):
            manager = ConfigManager()
        self.assertEqual(manager.get_section('tolerances'), DEFAULT_CONFIG['tolerances'])

    def test_last_run_persists(self):
        manager = ConfigManager()
        self.assertEqual(manager.get_last_run_info()['timestamp'], 'Never')
        manager.set_last_run_info({'timestamp': 't', 'command': 'solve', 'status': 'pass'})
        ConfigManager.reset()
        self.assertEqual(ConfigManager().get_last_run_info()['command'], 'solve')

    def test_sections_are_copies(self):
        manager = ConfigManager()
        manager.get_section('grid')['n_s'] = 3
        self.assertEqual(manager.get_section('grid')['n_s'], DEFAULT_CONFIG['grid']['n_s'])


class TestRunConfig(ConfigTestCase):
    def test_from_config_ignores_missing_flags(self):
        cfg = RunConfig.from_config(r=0.5, n_s=None, k_max=None)
        self.assertEqual(cfg.n_s, DEFAULT_CONFIG['grid']['n_s'])
        self.assertEqual(cfg.k_max, DEFAULT_CONFIG['spectral']['k_max'])
        self.assertEqual(cfg.integrator, IntegratorConfig())
        self.assertEqual(cfg.tolerances, Tolerances())

    def test_flags_override(self):
        cfg = RunConfig.from_config(r=0.5, n_s=33, tol=1e-9)
        self.assertEqual((cfg.n_s, cfg.tol), (33, 1e-9))
        self.assertEqual(cfg.with_r(0.7).r, 0.7)

    def test_validation(self):
        bad = [
            {},
            {'r': 0.0},
            {'r': math.pi},
            {'r': float('nan')},
            {'r': 0.5, 'tol': -1.0},
            {'r': 0.5, 'n_theta': 33},
            {'r': 0.5, 'n_s': 8},
            {'r': 0.5, 'k_max': 2},
            {'r': 0.5, 'projection': 'ortho'},
            {'r': 0.5, 'workers': 0},
            {'r': 0.5, 'out': os.path.join(self.test_dir, 'missing', 'out.json')},
        ]
        for kwargs in bad:
            with self.assertRaises(ConfigError, msg=str(kwargs)):
                RunConfig(**kwargs)

    def test_params_path_replaces_r(self):
        cfg = RunConfig(params_path='p.json')
        self.assertIsNone(cfg.r)

    def test_echo(self):
        echo = RunConfig(r=0.5).echo()
        self.assertEqual(echo['r'], 0.5)
        self.assertEqual(echo['integrator']['method'], 'DOP853')
        json.dumps(echo)

    def test_echo_ignores_worker_count(self):
        self.assertNotIn('workers', RunConfig(r=0.5, workers=4).echo())
        self.assertEqual(RunConfig(r=0.5, workers=1).echo(), RunConfig(r=0.5, workers=4).echo())

    def test_integrator_validation(self):
        with self.assertRaises(ConfigError):
            IntegratorConfig(rtol=0.0)
        self.assertEqual(IntegratorConfig(rtol=1e-9, atol=1e-11).tau, 1e-9)


if __name__ == '__main__':
    unittest.main()
