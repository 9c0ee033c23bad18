"""Calibration of (a, s_r) for a cap radius r.

The free-boundary condition F(a, r, s_r) = (0, 0) asks x(s_r) = cos r and
x'(s_r) = -sin r * sqrt(rho(s_r)). On the zero level set of the first
integrals this is equivalent to (y', z') being parallel to (y, z) at s_r, so
the shooting residual is the cross product W = y z' - z y' taken at the first
radius where y^2 + z^2 = sin^2 r.

The closed-form quadratic in A = a^2 seeds the search only: it relies on an
invariant conic that the orbit follows exactly when a^2 = 3/8.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from src.core.config import IntegratorConfig
from src.core.errors import (
    DomainExit, NearPole, NoConvergence, NoCrossing, NoRoot, StepFailure,
)
from src.core.ode import ROOT_RTOL, ROOT_XTOL, conformal_factor, integrate, lift_arrays, lift_x

logger = logging.getLogger(__name__)

HEMISPHERE_A = math.sqrt(3.0 / 8.0)
HALF_PI = math.pi / 2.0

# below this value of 1 - y^2 - z^2 the signed pole lift replaces the square root
POLE_GAP = 1e-8
# cos r under this threshold puts the crossing inside the pole neighbourhood
POLE_X = 1e-4


def near_hemisphere(r):
    """cos r is small enough that tan r and c(r) lose meaning."""
    return math.cos(r) < POLE_X


SHOOTING_ERRORS = (NoCrossing, DomainExit, NearPole, StepFailure)


@dataclass(frozen=True)
class BoundaryResidual:
    f1: float
    f2: float

    @property
    def max_abs(self):
        return max(abs(self.f1), abs(self.f2))


@dataclass(frozen=True)
class CapParams:
    r: float
    a: float
    s_r: float
    residual: tuple
    seed_a: float
    method: str = 'shooting-refined'
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {
            'r': self.r,
            'a': self.a,
            's_r': self.s_r,
            'residual': [self.residual[0], self.residual[1]],
            'seed_a': self.seed_a,
            'method': self.method,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            r=float(payload['r']),
            a=float(payload['a']),
            s_r=float(payload['s_r']),
            residual=tuple(float(v) for v in payload.get('residual', (0.0, 0.0))),
            seed_a=float(payload.get('seed_a', payload['a'])),
            method=payload.get('method', 'shooting-refined'),
        )


def _check_radius(r):
    if not (0.0 < r <= HALF_PI + 1e-12):
        raise ValueError(f"r must lie in (0, pi/2], got {r}")


def _quadratic_small_root(b, c0):
    """Smaller root of 8A^2 + bA + c0 = 0, written to avoid cancellation."""
    disc = b * b - 32.0 * c0
    if disc < 0:
        return None
    return 2.0 * c0 / (-b + math.sqrt(disc)) if -b > 0 else (-b - math.sqrt(disc)) / 16.0


def candidate_a(r):
    """Seed a from the quadratic (4A - 3) cos^2 r + (8A - 3)(A - 1) = 0.

    Expanded: 8A^2 + (4c - 11)A + 3(1 - c) = 0 with c = cos^2 r. The branch
    with A(pi/2) = 3/8 and A -> 0 as r -> 0 is the smaller root.
    """
    _check_radius(r)
    c = math.cos(r) ** 2
    A = _quadratic_small_root(4.0 * c - 11.0, 3.0 * (1.0 - c))
    if A is None or not (0.0 < A < 1.0) or not (1.0 - A > c - 1e-15):
        raise NoRoot(f"no admissible seed root for r={r}", {'r': r, 'A': A})
    return math.sqrt(A)


def printed_polynomial_a(r):
    """Root of (4a^2 - 5) cos^2 r + (1 - a^2)(3 - 8a^2) = 0 in (0, 1).

    This simplification does not follow from the identity it is derived from;
    it is kept so its disagreement with the calibrated value stays visible.
    """
    _check_radius(r)
    c = math.cos(r) ** 2
    A = _quadratic_small_root(4.0 * c - 11.0, 3.0 - 5.0 * c)
    if A is None or not (0.0 < A < 1.0):
        raise NoRoot(f"printed polynomial has no root in (0, 1) for r={r}", {'r': r})
    return math.sqrt(A)


def boundary_residual(a, r, s, trace, pole_fallback=True):
    """F(a, r, s) = (cos r - x(s), sin r * sqrt(rho(s)) + x'(s)).

    Near the pole (x -> 0) x and x' come from the signed on-orbit lift when
    pole_fallback is set; otherwise NearPole propagates.
    """
    state = trace.state_at(s)
    rho = conformal_factor(state)
    if pole_fallback:
        x_arr, dx_arr = lift_arrays(state.y, state.dy, state.z, state.dz, eps=POLE_GAP)
        x, dx = float(x_arr), float(dx_arr)
    else:
        x, dx = lift_x(state)
    return BoundaryResidual(math.cos(r) - x, math.sin(r) * math.sqrt(rho) + dx)


def crossing_product(trace, s):
    y, dy, z, dz = trace.at(s)
    return float(y * dz - z * dy)


def find_s_r(a, r, trace=None, cfg=None):
    """First s > 0 with x(s) = cos r, i.e. y^2 + z^2 = sin^2 r.

    At the hemisphere radius y^2 + z^2 touches 1 without crossing; s_r is then
    the first zero of y y' + z z' (the first zero of x).
    """
    _check_radius(r)
    if not math.sqrt(1.0 - a * a) > math.cos(r):
        raise NoCrossing(
            f"x(0)=sqrt(1-a^2)={math.sqrt(1.0 - a * a):.12f} does not exceed cos r={math.cos(r):.12f}",
            {'a': a, 'r': r},
        )
    cfg = cfg or IntegratorConfig()
    if trace is None:
        trace = integrate(a, cfg.s_end, cfg)

    target = math.sin(r) ** 2

    def gap(s):
        y, _, z, _ = trace.at(s)
        return float(y * y + z * z - target)

    def radial_speed(s):
        y, dy, z, dz = trace.at(s)
        return float(y * dy + z * dz)

    def pole_offset(s):
        y, dy, z, dz = trace.at(s)
        x, _ = lift_arrays(y, dy, z, dz, eps=np.inf)
        return float(x) - cos_r

    cos_r = max(math.cos(r), 0.0)
    s = trace.s
    g = trace.y ** 2 + trace.z ** 2 - target
    q = trace.y * trace.dy + trace.z * trace.dz
    for i in range(1, len(s)):
        if q[i] <= 0.0:
            s_turn = brentq(radial_speed, s[i - 1], s[i], xtol=ROOT_XTOL, rtol=ROOT_RTOL)
            if cos_r < POLE_X:
                # crossing sits next to the zero of x, where only the signed lift resolves it
                if cos_r == 0.0 or pole_offset(s_turn) >= 0.0 or pole_offset(s[i - 1]) <= 0.0:
                    return s_turn
                return brentq(pole_offset, s[i - 1], s_turn, xtol=ROOT_XTOL, rtol=ROOT_RTOL)
            g_turn = gap(s_turn)
            if g_turn > 0.0:
                return brentq(gap, s[i - 1], s_turn, xtol=ROOT_XTOL, rtol=ROOT_RTOL)
            raise NoCrossing(
                f"x reached zero at s={s_turn:.9f} before reaching cos r (a={a}, r={r})",
                {'a': a, 'r': r, 's_zero': s_turn, 'gap': g_turn},
            )
        if g[i] >= 0.0:
            if cos_r >= POLE_X:
                return brentq(gap, s[i - 1], s[i], xtol=ROOT_XTOL, rtol=ROOT_RTOL)
            if pole_offset(s[i - 1]) > 0.0 >= pole_offset(s[i]):
                return brentq(pole_offset, s[i - 1], s[i], xtol=ROOT_XTOL, rtol=ROOT_RTOL)
    raise NoCrossing(
        f"trace ends at s={trace.s_max} before x reaches cos r (a={a}, r={r})",
        {'a': a, 'r': r, 's_end': trace.s_max},
    )


def _shoot(a, r, cfg):
    trace = integrate(a, cfg.s_end, cfg)
    s_r = find_s_r(a, r, trace, cfg)
    return crossing_product(trace, s_r), s_r, trace


def _scan(r, cfg, scan_points, seed):
    a_hi = 1.0 if r >= HALF_PI - 1e-15 else math.sin(r)
    grid = np.linspace(0.02, 0.98, scan_points) * a_hi
    values = np.full(scan_points, np.nan)
    for i, a in enumerate(grid):
        try:
            values[i] = _shoot(float(a), r, cfg)[0]
        except SHOOTING_ERRORS as e:
            logger.debug("scan a=%.6f skipped: %s", a, e)
    logger.debug("bracket scan r=%s: %s", r, list(zip(grid.round(6), values)))

    brackets = []
    for i in range(scan_points - 1):
        w0, w1 = values[i], values[i + 1]
        if np.isfinite(w0) and np.isfinite(w1) and w0 * w1 <= 0.0:
            brackets.append((float(grid[i]), float(grid[i + 1])))
    brackets.sort(key=lambda b: abs(0.5 * (b[0] + b[1]) - seed))
    return brackets, grid, values


def _newton_polish(a, r, cfg, steps=3, h=1e-7):
    """A few Newton steps on W(a) with a central-difference slope."""
    w, _, _ = _shoot(a, r, cfg)
    for _ in range(steps):
        if w == 0.0:
            break
        slope = (_shoot(a + h, r, cfg)[0] - _shoot(a - h, r, cfg)[0]) / (2.0 * h)
        if slope == 0.0:
            break
        candidate = a - w / slope
        w_new = _shoot(candidate, r, cfg)[0]
        if abs(w_new) >= abs(w):
            break
        a, w = candidate, w_new
    return a


def calibrate(r, tol=1e-10, cfg=None, scan_points=24):
    _check_radius(r)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    cfg = cfg or IntegratorConfig()
    seed = candidate_a(r)
    brackets, grid, values = _scan(r, cfg, scan_points, seed)

    tried = []
    for lo, hi in brackets:
        try:
            a = brentq(lambda t: _shoot(t, r, cfg)[0], lo, hi, xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=200)
            a = _newton_polish(a, r, cfg)
            _, s_r, trace = _shoot(a, r, cfg)
        except SHOOTING_ERRORS as e:
            tried.append({'bracket': [lo, hi], 'error': str(e)})
            continue
        residual = boundary_residual(a, r, s_r, trace)
        tried.append({'bracket': [lo, hi], 'a': a, 'residual': [residual.f1, residual.f2]})
        if residual.max_abs <= tol:
            params = CapParams(
                r=r, a=a, s_r=s_r, residual=(residual.f1, residual.f2), seed_a=seed,
                diagnostics={'bracket': [lo, hi], 'seed_gap': abs(a - seed), 'scan_points': scan_points},
            )
            _report_admissibility(params, trace)
            logger.info("calibrated r=%.12g: a=%.15g s_r=%.15g |F|=%.2e (seed %.12g, gap %.3e)",
                        r, a, s_r, residual.max_abs, seed, abs(a - seed))
            return params

    raise NoConvergence(
        f"no calibrated a for r={r} within tol={tol}",
        {
            'r': r, 'tol': tol, 'seed_a': seed, 'attempts': tried,
            'scan': {'a': [float(v) for v in grid],
                     'W': [float(v) if np.isfinite(v) else None for v in values]},
        },
    )


def _report_admissibility(params, trace):
    r, a, s_r = params.r, params.a, params.s_r
    x0 = math.sqrt(1.0 - a * a)
    # the stated inequality for the polynomial root points the other way; x decreases from x0 to cos r
    logger.info("x(0)=sqrt(1-a^2)=%.12f > cos r=%.12f", x0, math.cos(r))
    if r < HALF_PI - 1e-12 and not a < HEMISPHERE_A:
        logger.warning("calibrated a=%.12f is not below sqrt(3/8) for r=%s", a, r)
    inside = (trace.s > 0) & (trace.s <= s_r)
    if np.any(trace.z[trace.s <= s_r] <= 0.0) or np.any(trace.y[inside] <= 0.0):
        logger.warning("sign conditions z>0 on [0,s_r], y>0 on (0,s_r] fail for r=%s", r)


def sweep(radii, tol=1e-10, cfg=None, workers=1, scan_points=24):
    """Independent calibrations, returned in input order."""
    cfg = cfg or IntegratorConfig()

    def job(r):
        return calibrate(r, tol, cfg, scan_points)

    if workers <= 1:
        return [job(r) for r in radii]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, radii))


def band_trace(params, cfg=None):
    """Trace covering [0, s_r] with a margin for boundary stencils."""
    cfg = cfg or IntegratorConfig()
    return integrate(params.a, max(params.s_r * 1.1, params.s_r + 0.1), cfg)


def perturbed(params, da, cfg=None):
    """Non-calibrated parameters: a shifted by da, s_r recomputed for the new orbit."""
    cfg = cfg or IntegratorConfig()
    a = params.a + da
    trace = integrate(a, cfg.s_end, cfg)
    s_r = find_s_r(a, params.r, trace, cfg)
    residual = boundary_residual(a, params.r, s_r, trace)
    return CapParams(
        r=params.r, a=a, s_r=s_r, residual=(residual.f1, residual.f2),
        seed_a=params.seed_a, method='perturbed', diagnostics={'da': da},
    )


def invariant_conic_residual(trace, a, s_upper=None):
    """max |a^2 y^2 - (3 - 4a^2) z^2 + a^2 (3 - 4a^2)| over the samples."""
    keep = slice(None) if s_upper is None else trace.s <= s_upper
    k = 3.0 - 4.0 * a * a
    values = a * a * trace.y[keep] ** 2 - k * trace.z[keep] ** 2 + a * a * k
    return float(np.max(np.abs(values)))


@dataclass(frozen=True)
class ReducedResidual:
    first_order: float
    second_order: float

    @property
    def max(self):
        return max(self.first_order, self.second_order)


def reduced_x_consistency(trace, a, s_upper=None, x_floor=1e-6):
    """Residuals of the reduced x equations along a canonical orbit.

    second order: x'' + 2(1 + 4a^2 - x^2/(1 - a^2)) x
    first order:  x'^2 - [-(2 + 8a^2) x^2 + x^4/(1 - a^2) + (1 - a^2)(8a^2 + 1)]
    Both vanish only where the orbit follows the invariant conic.
    """
    keep = (trace.x > x_floor) if s_upper is None else (trace.x > x_floor) & (trace.s <= s_upper)
    y, dy, z, dz = trace.y[keep], trace.dy[keep], trace.z[keep], trace.dz[keep]
    x, dx = trace.x[keep], trace.dx[keep]
    A = a * a
    energy = -(2.0 + 8.0 * A) * x ** 2 + x ** 4 / (1.0 - A) + (1.0 - A) * (8.0 * A + 1.0)
    first = np.abs(dx ** 2 - energy)
    second = np.abs(x_second_derivative(y, dy, z, dz, x, dx) + 2.0 * (1.0 + 4.0 * A - x ** 2 / (1.0 - A)) * x)
    return ReducedResidual(float(np.max(first)), float(np.max(second)))


def x_second_derivative(y, dy, z, dz, x, dx):
    """x'' from differentiating x^2 + y^2 + z^2 = 1 twice along the flow."""
    two_rho = 2.0 * y * y + 8.0 * z * z
    ydd = (1.0 - two_rho) * y
    zdd = (4.0 - two_rho) * z
    return -(dx * dx + dy * dy + dz * dz + y * ydd + z * zdd) / x
