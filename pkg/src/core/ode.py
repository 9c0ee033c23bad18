"""The (y, z) system behind the band, its first integrals and the lifted x.

    y'' = (1 - 2y^2 - 8z^2) y,    y(0) = 0, y'(0) = 2a
    z'' = (4 - 2y^2 - 8z^2) z,    z(0) = a, z'(0) = 0

x = sqrt(1 - y^2 - z^2) is never integrated; it is lifted from (y, z) so the
constraint x^2 + y^2 + z^2 = 1 holds to rounding. Traces store s >= 0 only;
negative arclength is served through the parity y(-s) = -y(s), z(-s) = z(s).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from src.core.config import IntegratorConfig
from src.core.errors import DomainExit, NearPole, NoRoot, StepFailure

logger = logging.getLogger(__name__)

NEAR_POLE_EPS = 1e-12

# brentq refuses rtol below 4 * eps
ROOT_XTOL = 1e-15
ROOT_RTOL = 4.0 * np.finfo(float).eps

METHOD_ORDER = {'DOP853': 8, 'RK45': 5, 'Radau': 5}

TRACE_COLUMNS = ('s', 'y', 'dy', 'z', 'dz', 'x', 'dx', 'rho', 'H1', 'H2')


@dataclass(frozen=True)
class OdeState:
    s: float
    y: float
    dy: float
    z: float
    dz: float

    @classmethod
    def canonical(cls, a):
        return cls(0.0, 0.0, 2.0 * a, a, 0.0)

    def as_array(self):
        return np.array([self.y, self.dy, self.z, self.dz])


def _system(s, u):
    y, dy, z, dz = u
    two_rho = 2.0 * y * y + 8.0 * z * z
    return np.array([dy, (1.0 - two_rho) * y, dz, (4.0 - two_rho) * z])


def rhs(state):
    """Phase derivative (y', y'', z', z'') at a state."""
    return _system(state.s, state.as_array())


def _integrals(y, dy, z, dz, a):
    c = 4.0 * a * a * (3.0 - 4.0 * a * a)
    rho = y * y + 4.0 * z * z
    h1 = rho * rho - y * y - 16.0 * z * z + dy * dy + 4.0 * dz * dz + c
    h2 = (12.0 * z * z * (z * z - 1.0) + 3.0 * y * y * z * z + z * z * dy * dy
          - 2.0 * y * dy * z * dz + (3.0 + y * y) * dz * dz + c)
    return h1, h2


def first_integrals(state, a):
    h1, h2 = _integrals(state.y, state.dy, state.z, state.dz, a)
    return float(h1), float(h2)


def conformal_factor(state):
    return state.y ** 2 + 4.0 * state.z ** 2


def lift_x(state, eps=NEAR_POLE_EPS):
    """x = sqrt(1 - y^2 - z^2) and x' = -(y y' + z z') / x."""
    w = 1.0 - state.y ** 2 - state.z ** 2
    if w < eps:
        raise NearPole(
            f"1 - y^2 - z^2 = {w:.3e} is below {eps:.0e} at s={state.s}",
            {'s': state.s, 'gap': w},
        )
    x = float(np.sqrt(w))
    return x, -(state.y * state.dy + state.z * state.dz) / x


def lift_arrays(y, dy, z, dz, eps=NEAR_POLE_EPS):
    """Vectorised lift.

    Where 1 - y^2 - z^2 < eps the square root loses its sign and its accuracy,
    so x' comes from the on-orbit identity x'^2 = rho - y'^2 - z'^2 (x
    decreasing) and x from x x' = -(y y' + z z'). That x is signed and stays
    continuous through its first zero.
    """
    y, dy, z, dz = (np.asarray(v, dtype=float) for v in (y, dy, z, dz))
    w = 1.0 - y * y - z * z
    radial = y * dy + z * dz
    near = w < eps
    x = np.sqrt(np.clip(w, 0.0, None))
    safe_x = np.where(near, 1.0, x)
    quotient = -radial / safe_x
    rho = y * y + 4.0 * z * z
    fallback = -np.sqrt(np.clip(rho - dy * dy - dz * dz, 0.0, None))
    safe_fallback = np.where(fallback == 0.0, -1.0, fallback)
    signed_x = np.where(fallback == 0.0, 0.0, -radial / safe_fallback)
    return np.where(near, signed_x, x), np.where(near, fallback, quotient)


@dataclass(frozen=True, eq=False)
class Trace:
    a: float
    s: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    rho: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    rtol: float
    atol: float
    method: str
    order: int
    dense: object = field(repr=False)

    @property
    def s_max(self):
        return float(self.s[-1])

    @property
    def max_drift(self):
        return float(max(np.max(np.abs(self.H1)), np.max(np.abs(self.H2))))

    def at(self, s):
        """(y, y', z, z') from dense output; s < 0 through parity."""
        s = np.asarray(s, dtype=float)
        t = np.abs(s)
        if np.any(t > self.s_max * (1.0 + 1e-14)):
            raise ValueError(f"s={float(np.max(t))} outside trace range [0, {self.s_max}]")
        y, dy, z, dz = self.dense(np.minimum(t, self.s_max))
        sign = np.where(s < 0, -1.0, 1.0)
        # y odd, z even: y(-s) = -y(s), y'(-s) = y'(s), z'(-s) = -z'(s)
        return sign * y, dy, z, sign * dz

    def state_at(self, s):
        y, dy, z, dz = self.at(s)
        return OdeState(float(s), float(y), float(dy), float(z), float(dz))

    def derived_at(self, s):
        y, dy, z, dz = self.at(s)
        x, dx = lift_arrays(y, dy, z, dz)
        return {'y': y, 'dy': dy, 'z': z, 'dz': dz, 'x': x, 'dx': dx, 'rho': y * y + 4.0 * z * z}

    def states(self):
        return [OdeState(*row) for row in zip(self.s, self.y, self.dy, self.z, self.dz)]

    def columns(self):
        return {name: getattr(self, name) for name in TRACE_COLUMNS}


def integrate_raw(u0, s_span, cfg=None, dense_output=True):
    """Integrates from an arbitrary phase state; used for parity checks."""
    cfg = cfg or IntegratorConfig()
    sol = solve_ivp(
        _system, s_span, np.asarray(u0, dtype=float), method=cfg.method,
        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, dense_output=dense_output,
    )
    if sol.status != 0:
        raise StepFailure(f"integrator failed: {sol.message}", {'s_reached': float(sol.t[-1])})
    return sol


def integrate(a, s_end, cfg=None):
    cfg = cfg or IntegratorConfig()
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    if not s_end > 0:
        raise ValueError(f"s_end must be positive, got {s_end}")

    sol = integrate_raw(OdeState.canonical(a).as_array(), (0.0, s_end), cfg)
    y, dy, z, dz = sol.y

    radius2 = y * y + z * z
    bound = 1.0 + 10.0 * cfg.tau
    if np.max(radius2) > bound:
        k = int(np.argmax(radius2))
        raise DomainExit(
            f"orbit left y^2+z^2<=1 (a={a}, s={sol.t[k]:.6f}, y^2+z^2={radius2[k]:.15f})",
            {'a': a, 's': float(sol.t[k]), 'radius2': float(radius2[k])},
        )

    x, dx = lift_arrays(y, dy, z, dz)
    h1, h2 = _integrals(y, dy, z, dz, a)
    trace = Trace(
        a=a, s=sol.t, y=y, dy=dy, z=z, dz=dz, x=x, dx=dx, rho=y * y + 4.0 * z * z,
        H1=h1, H2=h2, rtol=cfg.rtol, atol=cfg.atol, method=cfg.method,
        order=METHOD_ORDER.get(cfg.method, 0), dense=sol.sol,
    )
    if trace.max_drift > cfg.drift_bound:
        logger.warning("first-integral drift %.3e exceeds bound %.1e (a=%s)",
                       trace.max_drift, cfg.drift_bound, a)
    logger.debug("integrated a=%s to s=%s in %d steps, drift %.2e",
                 a, s_end, len(sol.t) - 1, trace.max_drift)
    return trace


def integrate_fixed_step(a, s_end, h, method='DOP853'):
    """Endpoint state using constant steps of size h (error control disabled)."""
    sol = solve_ivp(
        _system, (0.0, s_end), OdeState.canonical(a).as_array(), method=method,
        rtol=1e3, atol=1e3, first_step=h, max_step=h,
    )
    if sol.status != 0:
        raise StepFailure(f"fixed-step integration failed: {sol.message}")
    return sol.y[:, -1]


def find_period(a, cfg=None, s_max=30.0, tol=1e-8):
    """First s > 0 where the phase state returns to the canonical one.

    Candidates are upward zeros of y; the recurrence distance is the max-norm
    of the phase difference there.
    """
    trace = integrate(a, s_max, cfg)
    u0 = OdeState.canonical(a).as_array()
    y = trace.y
    candidates = np.nonzero((y[:-1] < 0.0) & (y[1:] >= 0.0))[0]
    for i in candidates:
        s_hit = brentq(lambda t: float(trace.at(t)[0]), trace.s[i], trace.s[i + 1],
                       xtol=ROOT_XTOL, rtol=ROOT_RTOL)
        distance = float(np.max(np.abs(np.array(trace.at(s_hit)) - u0)))
        logger.debug("recurrence candidate s=%.12f distance %.3e", s_hit, distance)
        if distance < tol:
            return s_hit
    raise NoRoot(f"no recurrence within s <= {s_max} for a={a}", {'a': a, 's_max': s_max})


def trace_rows(trace, s_upper: Optional[float] = None):
    """Rows of the CSV schema, optionally restricted to s <= s_upper."""
    cols = trace.columns()
    keep = np.ones_like(trace.s, dtype=bool) if s_upper is None else trace.s <= s_upper
    return [tuple(float(cols[name][i]) for name in TRACE_COLUMNS) for i in np.nonzero(keep)[0]]
