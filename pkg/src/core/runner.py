import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src import __version__
from src.core.calibration import (
    band_trace, boundary_residual, invariant_conic_residual, near_hemisphere, perturbed,
)
from src.core.errors import Inadmissible, NumericalError
from src.core.geometry import build_grid, free_boundary_residual, geometry_report
from src.core.ode import lift_arrays
from src.core.spectral import dtn_crosscheck, eigenfunction_match, spectrum, verify_first_eigen
from src.core.stability import build_stability_report

logger = logging.getLogger(__name__)

SECTIONS = ('calibration', 'conservation', 'spectrum', 'geometry', 'stability', 'controls')
PERTURBATION = 1e-3
PERTURBED_DEFECT_FLOOR = 1e-4
MIN_CONTROL_GRID = 32


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self):
        return {'name': self.name, 'value': self.value, 'tolerance': self.tolerance, 'passed': self.passed}


def below(name, value, tolerance):
    return Check(name, float(value), tolerance, bool(value < tolerance))


@dataclass
class VerifyReport:
    version: str
    config: dict
    params: dict = None
    sections: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        failed = any(s.get('failed') for s in self.sections.values())
        return bool(self.checks) and not failed and all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            'pass': self.passed,
            'version': self.version,
            'config': self.config,
            'params': self.params,
            'sections': self.sections,
            'checks': [c.to_dict() for c in self.checks],
        }


class VerificationRunner:
    """Runs every check for one calibrated band.

    Progress messages go to the optional callback; a section whose numerics
    fail is kept in the report with a "failed" marker and the rest still run.
    """

    def __init__(self, run_config, progress=None):
        self.config = run_config
        self.progress = progress or (lambda message: None)
        self._is_running = True

    def stop(self):
        """Skips the remaining sections."""
        self._is_running = False

    def _emit(self, message):
        logger.info(message)
        self.progress(message)

    def run(self, params):
        cfg = self.config
        tol = cfg.tolerances
        report = VerifyReport(version=__version__, config=cfg.echo(), params=params.to_dict())
        trace = band_trace(params, cfg.integrator)
        state = {'trace': trace}

        for name in SECTIONS:
            if not self._is_running:
                report.sections[name] = {'failed': True, 'reason': 'stopped'}
                continue
            self._emit(f"Verifying: {name}")
            try:
                section, checks = getattr(self, f"_{name}")(params, state, tol)
            except Inadmissible as e:
                if name == 'stability' and near_hemisphere(params.r):
                    report.sections[name] = {'skipped': True, 'reason': str(e)}
                    continue
                report.sections[name] = {'failed': True, 'error': e.to_dict()}
                continue
            except NumericalError as e:
                logger.warning("section %s failed: %s", name, e)
                report.sections[name] = {'failed': True, 'error': e.to_dict()}
                continue
            report.sections[name] = section
            report.checks.extend(checks)

        self._emit(f"Verification complete: {'pass' if report.passed else 'fail'}")
        return report

    def _calibration(self, params, state, tol):
        residual = boundary_residual(params.a, params.r, params.s_r, state['trace'])
        section = {
            'residual': [residual.f1, residual.f2],
            'seed_a': params.seed_a,
            'seed_gap': abs(params.a - params.seed_a),
        }
        return section, [below('calibration.residual', residual.max_abs, tol.calibration)]

    def _conservation(self, params, state, tol):
        trace = state['trace']
        keep = trace.s <= params.s_r
        drift = float(max(np.max(np.abs(trace.H1[keep])), np.max(np.abs(trace.H2[keep]))))
        section = {'drift': drift, 'conic_residual': invariant_conic_residual(trace, params.a, params.s_r)}
        return section, [below('conservation.drift', drift, tol.conservation)]

    def _spectrum(self, params, state, tol):
        cfg = self.config
        report = spectrum(params, state['trace'], cfg.k_max, cfg.integrator, cfg.workers)
        state['spectrum'] = report
        eigen = verify_first_eigen(report, tol.spectrum, raise_on_failure=False)

        checks = [below(f"spectrum.{name}", value, tol.spectrum)
                  for name, value in eigen.margins.items() if name != 'higher']
        checks.append(Check('spectrum.higher', float(eigen.margins['higher']), 0.0, eigen.margins['higher'] > 0.0))

        grid_s = report.line(1).s
        y, dy, z, dz = state['trace'].at(grid_s)
        references = {1: y, 2: z}
        if not near_hemisphere(params.r):
            references[0] = lift_arrays(y, dy, z, dz)[0]
        matches = {k: eigenfunction_match(report.line(k), ref) for k, ref in sorted(references.items())}
        checks += [below(f"spectrum.eigenfunction{k}", value, tol.spectrum) for k, value in matches.items()]

        dtn = dtn_crosscheck(params, state['trace'], 3, cfg=cfg.integrator)
        checks.append(below('spectrum.dtn3', dtn.relative_gap, tol.dtn))

        section = report.to_dict()
        section['eigenfunction_match'] = {str(k): v for k, v in matches.items()}
        section['dtn'] = {'k': dtn.k, 'sigma_fd': dtn.sigma_fd, 'relative_gap': dtn.relative_gap}
        return section, checks

    def _geometry(self, params, state, tol):
        cfg = self.config
        grid = build_grid(params, state['trace'], cfg.n_s, cfg.n_theta)
        state['grid'] = grid
        lines = state.get('spectrum')
        cot_r = math.cos(params.r) / math.sin(params.r)
        sigma0 = lines.sigma0 if lines else -math.tan(params.r)
        sigma1 = lines.sigma1 if lines else cot_r
        report = geometry_report(grid, sigma0, sigma1)
        checks = [
            below('geometry.sphere', report.sphere, tol.sphere),
            Check('geometry.containment', report.containment_margin, -tol.containment,
                  bool(report.containment_margin >= -tol.containment)),
            below('geometry.minimality', report.minimality, tol.minimality),
            below('geometry.free_boundary', report.free_boundary, tol.free_boundary),
        ]
        return report.to_dict(), checks

    def _stability(self, params, state, tol):
        grid = state.get('grid') or build_grid(params, state['trace'], self.config.n_s, self.config.n_theta)
        report = build_stability_report(grid)
        closed = [d.closed for d in report.directions]
        checks = [
            below('stability.index_gap', report.max_relative_gap, tol.index_gap),
            below('stability.g12_gap', report.g12_gap, tol.index_gap),
            Check('stability.negative_definite', float(np.max(report.eigenvalues)), 0.0, report.negative_definite),
            below('stability.q_nullity', report.q_nullity, tol.q_nullity),
            below('stability.symmetry',
                  max(abs(closed[0] - closed[1]), abs(closed[2] - closed[3])) / abs(closed[0]), tol.symmetry),
        ]
        return report.to_dict(), checks

    def _controls(self, params, state, tol):
        """Negative control: a shifted by +-PERTURBATION must break the free-boundary condition."""
        sign = float(np.random.default_rng(self.config.seed).choice([-1.0, 1.0]))
        shifted = perturbed(params, sign * PERTURBATION, self.config.integrator)
        grid = build_grid(shifted, band_trace(shifted, self.config.integrator), MIN_CONTROL_GRID, MIN_CONTROL_GRID)
        defect = free_boundary_residual(grid).defect
        section = {'da': sign * PERTURBATION, 'a': shifted.a, 's_r': shifted.s_r, 'free_boundary': defect}
        check = Check('controls.perturbed_free_boundary', defect, PERTURBED_DEFECT_FLOOR,
                      bool(defect > PERTURBED_DEFECT_FLOOR))
        return section, [check]
