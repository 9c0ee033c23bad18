"""Steklov spectrum with frequency 2 by shooting one Fourier mode at a time.

A mode u = psi(s) cos(k theta) solves Delta_g u + 2u = 0 iff
psi'' = (k^2 - 2 rho) psi, and the quotient (s, t) ~ (-s, t + pi) forces
psi(-s) = (-1)^k psi(s). Each admissible mode has a one-dimensional solution
space, so sigma(k) = psi'(s_r) / (sqrt(rho(s_r)) psi(s_r)) is read off directly.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import circulant
from scipy.sparse.linalg import spsolve

from src.core.calibration import near_hemisphere
from src.core.config import IntegratorConfig
from src.core.errors import DirichletDegeneracy, StepFailure, VerificationFailure

logger = logging.getLogger(__name__)

DIRICHLET_RATIO = 1e-10
SAMPLES = 257


def params_rho(trace, s):
    y, _, z, _ = trace.at(s)
    return y * y + 4.0 * z * z


def parity_of(k):
    return 'even' if k % 2 == 0 else 'odd'


@dataclass(frozen=True, eq=False)
class SpectralLine:
    k: int
    sigma: float
    multiplicity: int
    parity: str
    s: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    dpsi: np.ndarray = field(repr=False)
    dense: object = field(default=None, repr=False)

    def to_dict(self):
        return {'k': self.k, 'sigma': self.sigma, 'mult': self.multiplicity}


def _shoot_mode(k, trace, s_r, initial, cfg):
    k2 = float(k * k)

    def system(s, u):
        y, _, z, _ = trace.at(s)
        return [u[1], (k2 - 2.0 * (y * y + 4.0 * z * z)) * u[0]]

    sol = solve_ivp(system, (0.0, s_r), initial, method=cfg.method,
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, dense_output=True)
    if sol.status != 0:
        raise StepFailure(f"mode {k} integration failed: {sol.message}", {'k': k})
    return sol


def mode_sigma(k, params, trace, cfg=None, parity=None):
    """sigma(k) from parity-forced initial data; parity overrides (-1)^k when given."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    cfg = cfg or IntegratorConfig()
    parity = parity or parity_of(k)
    initial = [1.0, 0.0] if parity == 'even' else [0.0, 1.0]
    s_r = params.s_r

    sol = _shoot_mode(k, trace, s_r, initial, cfg)
    s = np.linspace(0.0, s_r, SAMPLES)
    psi, dpsi = sol.sol(s)
    psi_end, dpsi_end = sol.sol(s_r)
    scale = max(float(np.max(np.abs(psi))), float(np.max(np.abs(sol.y[0]))))
    if abs(psi_end) < DIRICHLET_RATIO * scale:
        raise DirichletDegeneracy(
            f"psi_{k}(s_r) = {psi_end:.3e} vanishes; sigma is undefined for this mode",
            {'k': k, 'psi_end': float(psi_end), 'sup_psi': scale, 'parity': parity},
        )

    y, _, z, _ = trace.at(s_r)
    sigma = float(dpsi_end / (math.sqrt(y * y + 4.0 * z * z) * psi_end))
    logger.debug("mode k=%d (%s): sigma=%.15g", k, parity, sigma)
    return SpectralLine(k=k, sigma=sigma, multiplicity=1 if k == 0 else 2, parity=parity,
                        s=s, psi=psi, dpsi=dpsi, dense=sol.sol)


def robin_residual(line, trace, s_r):
    """|rho^-1/2 psi'(s_r) - sigma psi(s_r)| relative to sup |psi|, from dense output."""
    psi_end, dpsi_end = line.dense(s_r)
    y, _, z, _ = trace.at(s_r)
    value = dpsi_end / math.sqrt(y * y + 4.0 * z * z) - line.sigma * psi_end
    return float(abs(value) / np.max(np.abs(line.psi)))


def eigenfunction_match(line, profile):
    """Sup distance between psi and a reference profile after both are scaled to unit sup norm."""
    psi = line.psi / line.psi[np.argmax(np.abs(line.psi))]
    ref = np.asarray(profile, dtype=float)
    ref = ref / ref[np.argmax(np.abs(ref))]
    return float(np.max(np.abs(psi - ref)))


@dataclass(frozen=True, eq=False)
class ExcludedLine:
    k: int
    sigma: Optional[float]
    parity: str

    def to_dict(self):
        return {'k': self.k, 'sigma': self.sigma, 'parity': self.parity}


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    r: float
    lines: tuple
    excluded: tuple
    sigma0: float
    sigma1: float
    gap: float
    coincidence: float
    ordered: bool

    def line(self, k):
        for line in self.lines:
            if line.k == k:
                return line
        raise KeyError(k)

    def sigma(self, k):
        return self.line(k).sigma

    def to_dict(self):
        return {
            'lines': [line.to_dict() for line in self.lines],
            'sigma0': self.sigma0,
            'sigma1': self.sigma1,
            'gap': self.gap,
            'excluded': [line.to_dict() for line in self.excluded],
        }


def _line_or_degenerate(k, params, trace, cfg):
    try:
        return mode_sigma(k, params, trace, cfg)
    except DirichletDegeneracy:
        if k == 0 and near_hemisphere(params.r):
            # psi_0 is proportional to x, which vanishes on the boundary of the hemisphere band
            logger.info("mode 0 is a Dirichlet mode at r=%s; sigma0 recorded as -inf", params.r)
            s = np.linspace(0.0, params.s_r, SAMPLES)
            return SpectralLine(k=0, sigma=-math.inf, multiplicity=1, parity='even',
                                s=s, psi=np.zeros_like(s), dpsi=np.zeros_like(s))
        raise


def _excluded_line(k, params, trace, cfg):
    wrong = 'odd' if k % 2 == 0 else 'even'
    try:
        sigma = mode_sigma(k, params, trace, cfg, parity=wrong).sigma
    except DirichletDegeneracy:
        sigma = None
    return ExcludedLine(k=k, sigma=sigma, parity=wrong)


def spectrum(params, trace, k_max, cfg=None, workers=1):
    if k_max < 3:
        raise ValueError(f"k_max must be >= 3, got {k_max}")
    cfg = cfg or IntegratorConfig()
    modes = range(k_max + 1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lines = list(pool.map(lambda k: _line_or_degenerate(k, params, trace, cfg), modes))
            excluded = list(pool.map(lambda k: _excluded_line(k, params, trace, cfg), modes))
    else:
        lines = [_line_or_degenerate(k, params, trace, cfg) for k in modes]
        excluded = [_excluded_line(k, params, trace, cfg) for k in modes]

    by_k = {line.k: line for line in lines}
    cot_r = math.cos(params.r) / math.sin(params.r)
    others = [abs(line.sigma - cot_r) for line in lines if line.k not in (1, 2)]
    higher = [by_k[k].sigma for k in modes if k >= 3]
    ordered = by_k[0].sigma < cot_r and all(value > cot_r for value in higher)

    root_rho = math.sqrt(float(params_rho(trace, params.s_r)))
    trend = by_k[k_max].sigma * root_rho / k_max
    logger.info("large-k trend sigma(%d) sqrt(rho)/k = %.4f", k_max, trend)
    if abs(trend - 1.0) > 0.05:
        logger.info("large-k trend is %.1f%% away from 1", 100.0 * abs(trend - 1.0))

    report = SpectrumReport(
        r=params.r,
        lines=tuple(sorted(lines, key=lambda line: (line.sigma, line.k))),
        excluded=tuple(excluded),
        sigma0=by_k[0].sigma,
        sigma1=by_k[1].sigma,
        gap=min(others),
        coincidence=abs(by_k[1].sigma - by_k[2].sigma),
        ordered=ordered,
    )
    if not ordered:
        logger.warning("cot r is not the second Steklov line for r=%s", params.r)
    return report


@dataclass(frozen=True)
class EigenCheck:
    passed: bool
    margins: dict
    offending: tuple


def verify_first_eigen(report, tol=1e-7, raise_on_failure=True):
    """sigma(0) = -tan r, sigma(1) = sigma(2) = cot r, and sigma(k) > cot r for k >= 3.

    Near the hemisphere tan r is unbounded; only the cot r lines and the
    higher modes are checked there.
    """
    r = report.r
    cot_r = math.cos(r) / math.sin(r)
    margins = {
        'sigma1': abs(report.sigma(1) - cot_r),
        'sigma2': abs(report.sigma(2) - cot_r),
    }
    if not near_hemisphere(r):
        margins['sigma0'] = abs(report.sigma(0) + math.tan(r))
    higher = [line.sigma - cot_r for line in report.lines if line.k >= 3]
    if len(higher) < 3:
        raise ValueError("verify_first_eigen needs a spectrum with k_max >= 5")
    margins['higher'] = min(higher)

    offending = [name for name in ('sigma0', 'sigma1', 'sigma2') if name in margins and not margins[name] < tol]
    offending += [line.k for line in report.lines if line.k >= 3 and not line.sigma > cot_r]
    check = EigenCheck(passed=not offending, margins=margins, offending=tuple(offending))
    if offending and raise_on_failure:
        raise VerificationFailure(f"first Steklov eigenvalue checks failed for r={r}", offending, margins)
    return check


@dataclass(frozen=True)
class DtnCheck:
    k: int
    sigma_fd: float
    sigma_shooting: float

    @property
    def relative_gap(self):
        return abs(self.sigma_fd - self.sigma_shooting) / max(abs(self.sigma_shooting), 1e-300)


def _spectral_second_derivative(n):
    k = np.fft.rfftfreq(n, 1.0 / n)
    impulse = np.zeros(n)
    impulse[0] = 1.0
    column = np.fft.irfft(np.fft.rfft(impulse) * -(k ** 2), n=n)
    return circulant(column)


def dtn_crosscheck(params, trace, k, n_s=200, n_theta=32, cfg=None):
    """Dirichlet-to-Neumann value on cos(k theta) from a 2-D solve on the fundamental domain.

    u_ss + u_tt + 2 rho u = 0 on [0, s_r) x [0, 2 pi) with u(s_r, t) = cos(k t)
    and the ghost row u(-h, t) = u(h, t + pi); second order in s, spectral in theta.
    """
    if n_theta % 2 or k >= n_theta // 2:
        raise ValueError(f"n_theta={n_theta} must be even and exceed 2k={2 * k}")
    s = np.linspace(0.0, params.s_r, n_s)
    h = s[1] - s[0]
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    rho = params_rho(trace, s)
    rows = n_s - 1

    d_ss = sp.diags([np.ones(rows - 1), -2.0 * np.ones(rows), np.ones(rows - 1)], [-1, 0, 1]) / h ** 2
    half_turn = sp.csr_matrix((np.ones(n_theta), (np.arange(n_theta), (np.arange(n_theta) + n_theta // 2) % n_theta)),
                              shape=(n_theta, n_theta))
    ghost = sp.csr_matrix(([1.0 / h ** 2], ([0], [1])), shape=(rows, rows))
    operator = (sp.kron(d_ss, sp.identity(n_theta)) + sp.kron(ghost, half_turn)
                + sp.kron(sp.identity(rows), sp.csr_matrix(_spectral_second_derivative(n_theta)))
                + sp.diags(np.repeat(2.0 * rho[:rows], n_theta)))

    data = np.cos(k * theta)
    rhs = np.zeros(rows * n_theta)
    rhs[-n_theta:] = -data / h ** 2
    u = spsolve(operator.tocsc(), rhs).reshape(rows, n_theta)

    du = (3.0 * data - 4.0 * u[-1] + u[-2]) / (2.0 * h)
    sigma_fd = float(np.dot(du / math.sqrt(rho[-1]), data) / np.dot(data, data))
    sigma_shooting = mode_sigma(k, params, trace, cfg).sigma
    check = DtnCheck(k=k, sigma_fd=sigma_fd, sigma_shooting=sigma_shooting)
    logger.debug("DtN cross-check k=%d: fd %.9f shooting %.9f", k, sigma_fd, sigma_shooting)
    return check
