import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV = 'CAPBAND_CONFIG'


def config_path():
    return os.environ.get(CONFIG_ENV) or os.path.join(os.getcwd(), 'config.json')


def config_path_is_explicit():
    return bool(os.environ.get(CONFIG_ENV))


DEFAULT_CONFIG = {
    'integrator': {
        'rtol': 1e-12,
        'atol': 1e-12,
        'max_step': 0.05,
        'method': 'DOP853',
        'drift_bound': 1e-8,
        's_end': 6.0,
    },
    'calibration': {
        'tol': 1e-10,
        'scan_points': 24,
    },
    'grid': {
        'n_s': 129,
        'n_theta': 64,
    },
    'spectral': {
        'k_max': 8,
    },
    'tolerances': {
        'calibration': 1e-8,
        'conservation': 1e-9,
        'sphere': 1e-12,
        'containment': 1e-10,
        'minimality': 1e-4,
        'free_boundary': 1e-8,
        'spectrum': 1e-7,
        'index_gap': 1e-3,
        'q_nullity': 1e-4,
        'symmetry': 1e-10,
        'dtn': 1e-3,
    },
    'output': {
        'directory': '.',
        'cache': None,
    },
    'logging': {
        'level': 'WARNING',
    },
}


class ConfigManager:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
            cls._instance.load_config()
        return cls._instance

    @classmethod
    def reset(cls):
        """Drops the cached instance so the next access reloads from disk."""
        cls._instance = None

    def load_config(self):
        self.path = config_path()
        self.config = copy.deepcopy(DEFAULT_CONFIG)

        if os.path.exists(self.path):
            try:
                with open(self.path, 'r') as f:
                    saved_config = json.load(f)
                # Saved sections override defaults key by key; unknown sections are kept
                for section, values in saved_config.items():
                    if isinstance(values, dict) and isinstance(self.config.get(section), dict):
                        self.config[section].update(values)
                    else:
                        self.config[section] = values
            except (json.JSONDecodeError, OSError) as e:
                logger.warning("Could not read %s (%s); using defaults", self.path, e)

    def save_config(self):
        try:
            with open(self.path, 'w') as f:
                json.dump(self.config, f, indent=4)
        except OSError as e:
            logger.error("Could not write %s: %s", self.path, e)

    def get_section(self, name):
        return copy.deepcopy(self.config.get(name, {}))

    def set_value(self, section, key, value):
        self.config.setdefault(section, {})[key] = value
        self.save_config()

    def get_last_run_info(self):
        return self.config.get('last_run', {
            'timestamp': 'Never',
            'command': 'N/A',
            'status': 'N/A',
        })

    def set_last_run_info(self, info):
        self.config['last_run'] = info
        self.save_config()


def _section_kwargs(cls, section):
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in section.items() if k in names}


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-12
    atol: float = 1e-12
    max_step: float = 0.05
    method: str = 'DOP853'
    drift_bound: float = 1e-8
    s_end: float = 6.0

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError(f"tolerances must be positive (rtol={self.rtol}, atol={self.atol})")
        if not self.max_step > 0:
            raise ConfigError(f"max_step must be positive, got {self.max_step}")
        if not self.s_end > 0:
            raise ConfigError(f"s_end must be positive, got {self.s_end}")

    @property
    def tau(self):
        return max(self.rtol, self.atol)

    @classmethod
    def from_config(cls, manager=None, **overrides):
        manager = manager or ConfigManager()
        kwargs = _section_kwargs(cls, manager.get_section('integrator'))
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class Tolerances:
    calibration: float = 1e-8
    conservation: float = 1e-9
    sphere: float = 1e-12
    containment: float = 1e-10
    minimality: float = 1e-4
    free_boundary: float = 1e-8
    spectrum: float = 1e-7
    index_gap: float = 1e-3
    q_nullity: float = 1e-4
    symmetry: float = 1e-10
    dtn: float = 1e-3

    @classmethod
    def from_config(cls, manager=None):
        manager = manager or ConfigManager()
        return cls(**_section_kwargs(cls, manager.get_section('tolerances')))


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, after merging config.json with flags."""
    r: Optional[float] = None
    params_path: Optional[str] = None
    tol: float = 1e-10
    n_s: int = 129
    n_theta: int = 64
    k_max: int = 8
    out: Optional[str] = None
    projection: str = 'drop0'
    seed: int = 0
    cache: Optional[str] = None
    workers: int = 1
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.r is None and self.params_path is None:
            raise ConfigError("either --r or --params is required")
        if self.r is not None:
            if not math.isfinite(self.r) or not (0.0 < self.r <= math.pi / 2 + 1e-12):
                raise ConfigError(f"r must lie in (0, pi/2], got {self.r}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.n_s < 16 or self.n_theta < 16:
            raise ConfigError(f"grid sizes must be >= 16, got n_s={self.n_s}, n_theta={self.n_theta}")
        if self.n_theta % 2:
            raise ConfigError(f"n_theta must be even, got {self.n_theta}")
        if self.k_max < 3:
            raise ConfigError(f"k_max must be >= 3, got {self.k_max}")
        if self.projection not in ('drop0', 'stereo'):
            raise ConfigError(f"unknown projection {self.projection!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.out:
            parent = os.path.dirname(os.path.abspath(self.out))
            if not os.access(parent, os.W_OK):
                raise ConfigError(f"output directory {parent} is not writable")

    @classmethod
    def from_config(cls, manager=None, **overrides):
        manager = manager or ConfigManager()
        grid = manager.get_section('grid')
        calibration = manager.get_section('calibration')
        output = manager.get_section('output')
        kwargs = {
            'tol': calibration.get('tol', cls.tol),
            'n_s': grid.get('n_s', cls.n_s),
            'n_theta': grid.get('n_theta', cls.n_theta),
            'k_max': manager.get_section('spectral').get('k_max', cls.k_max),
            'cache': output.get('cache'),
            'integrator': IntegratorConfig.from_config(manager),
            'tolerances': Tolerances.from_config(manager),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def echo(self):
        """Plain-dict view for report headers. The worker count is not part of it."""
        payload = {
            'r': self.r,
            'params_path': self.params_path,
            'tol': self.tol,
            'n_s': self.n_s,
            'n_theta': self.n_theta,
            'k_max': self.k_max,
            'projection': self.projection,
            'seed': self.seed,
        }
        payload['integrator'] = {f.name: getattr(self.integrator, f.name) for f in fields(self.integrator)}
        return payload

    def with_r(self, r):
        return replace(self, r=r)
