"""The immersion Phi(s, theta) on a grid over the fundamental domain.

    Phi = (x, y cos t, y sin t, z cos 2t, z sin 2t),   (s, t) in [0, s_r] x [0, 2 pi)

The band is the quotient of the cylinder by (s, t) ~ (-s, t + pi). Rows of the
grid are s samples, columns are theta samples; theta derivatives are spectral,
s derivatives are finite differences that borrow a ghost row across s = 0 from
the identification.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from src.core.calibration import POLE_GAP
from src.core.errors import CoverageError
from src.core.ode import lift_arrays

logger = logging.getLogger(__name__)

MIN_SAMPLES = 16


def simpson_weights(s):
    """Weights w with sum(w * f) equal to scipy's Simpson rule on samples f."""
    return simpson(np.eye(len(s)), x=s, axis=0)


def _fft_derivative(values, order, axis=1):
    n = values.shape[axis]
    k = np.fft.rfftfreq(n, 1.0 / n)
    factor = (1j * k) ** order
    if order % 2 and n % 2 == 0:
        factor[-1] = 0.0
    shape = [1] * values.ndim
    shape[axis] = len(k)
    spectrum = np.fft.rfft(values, axis=axis) * factor.reshape(shape)
    return np.fft.irfft(spectrum, n=n, axis=axis)


@dataclass(eq=False)
class ImmersionGrid:
    s: np.ndarray
    theta: np.ndarray
    nodes: np.ndarray
    phi_s: np.ndarray
    rho: np.ndarray
    mobius: bool = True
    params: Optional[object] = None
    profile: dict = field(default_factory=dict, repr=False)
    cap_radius: Optional[float] = None

    def __post_init__(self):
        self.phi_theta = self.d_theta(self.nodes)
        self.ds_weights = simpson_weights(self.s)
        self.dtheta = 2.0 * math.pi / self.n_theta

    @property
    def n_s(self):
        return len(self.s)

    @property
    def n_theta(self):
        return len(self.theta)

    @property
    def h(self):
        return float(self.s[1] - self.s[0])

    @property
    def s_r(self):
        return float(self.s[-1])

    @property
    def dv(self):
        """Weights of rho ds dtheta on the fundamental domain, shape (n_s, n_theta)."""
        return np.outer(self.ds_weights * self.rho, np.full(self.n_theta, self.dtheta))

    @property
    def da(self):
        """Weights of sqrt(rho) dtheta on the boundary circle s = s_r."""
        return np.full(self.n_theta, math.sqrt(self.rho[-1]) * self.dtheta)

    @property
    def flat_weights(self):
        """Weights of ds dtheta, for integrands already carrying their conformal factor."""
        return np.outer(self.ds_weights, np.full(self.n_theta, self.dtheta))

    @classmethod
    def from_nodes(cls, s, theta, nodes, phi_s=None, rho=None, cap_radius=None):
        """Grid over arbitrary sampled nodes, open at both s ends."""
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        nodes = np.asarray(nodes, dtype=float)
        grid = cls(s=s, theta=theta, nodes=nodes, phi_s=np.zeros_like(nodes),
                   rho=np.ones(len(s)), mobius=False, cap_radius=cap_radius)
        grid.phi_s = np.asarray(phi_s, dtype=float) if phi_s is not None else grid.d_s(nodes)
        if rho is None:
            stretch = 0.5 * (np.sum(grid.phi_s ** 2, axis=-1) + np.sum(grid.phi_theta ** 2, axis=-1))
            rho = np.mean(stretch, axis=1)
        grid.rho = np.asarray(rho, dtype=float)
        return grid

    def _ghost(self, values, parity):
        """Row at s = -h: Phi(-s, t) = Phi(s, t + pi), with the field's parity sign."""
        return parity * np.roll(values[1], -(self.n_theta // 2), axis=0)

    def d_s(self, values, parity=1.0):
        h = self.h
        out = np.empty_like(values)
        out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
        if self.mobius:
            out[0] = (values[1] - self._ghost(values, parity)) / (2.0 * h)
        else:
            out[0] = (-11.0 * values[0] + 18.0 * values[1] - 9.0 * values[2] + 2.0 * values[3]) / (6.0 * h)
        out[-1] = (11.0 * values[-1] - 18.0 * values[-2] + 9.0 * values[-3] - 2.0 * values[-4]) / (6.0 * h)
        return out

    def d_ss(self, values, parity=1.0):
        h2 = self.h ** 2
        out = np.empty_like(values)
        out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h2
        if self.mobius:
            out[0] = (values[1] - 2.0 * values[0] + self._ghost(values, parity)) / h2
        else:
            out[0] = (35.0 * values[0] - 104.0 * values[1] + 114.0 * values[2]
                      - 56.0 * values[3] + 11.0 * values[4]) / (12.0 * h2)
        out[-1] = (35.0 * values[-1] - 104.0 * values[-2] + 114.0 * values[-3]
                   - 56.0 * values[-4] + 11.0 * values[-5]) / (12.0 * h2)
        return out

    def d_theta(self, values):
        return _fft_derivative(values, 1)

    def d_thetatheta(self, values):
        return _fft_derivative(values, 2)

    def integrate(self, density):
        """Integral of density * rho ds dtheta over the fundamental domain."""
        return float(np.sum(self.dv * density))

    def integrate_boundary(self, density):
        return float(np.sum(self.da * density))


def _embed(x, y, z, theta):
    t = theta[np.newaxis, :]
    return np.stack([
        np.broadcast_to(x[:, np.newaxis], (len(x), len(theta))),
        y[:, np.newaxis] * np.cos(t),
        y[:, np.newaxis] * np.sin(t),
        z[:, np.newaxis] * np.cos(2.0 * t),
        z[:, np.newaxis] * np.sin(2.0 * t),
    ], axis=-1)


def build_grid(params, trace, n_s, n_theta):
    if n_s < MIN_SAMPLES or n_theta < MIN_SAMPLES:
        raise ValueError(f"grid sizes must be >= {MIN_SAMPLES}, got n_s={n_s}, n_theta={n_theta}")
    if n_theta % 2:
        raise ValueError(f"n_theta must be even, got {n_theta}")
    if trace.s_max < params.s_r:
        raise CoverageError(
            f"trace reaches s={trace.s_max} but s_r={params.s_r}",
            {'s_max': trace.s_max, 's_r': params.s_r},
        )

    s = np.linspace(0.0, params.s_r, n_s)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    y, dy, z, dz = trace.at(s)
    x, dx = lift_arrays(y, dy, z, dz, eps=POLE_GAP)
    rho = y * y + 4.0 * z * z

    grid = ImmersionGrid(
        s=s, theta=theta, nodes=_embed(x, y, z, theta), phi_s=_embed(dx, dy, dz, theta),
        rho=rho, mobius=True, params=params, cap_radius=params.r,
        profile={'x': x, 'dx': dx, 'y': y, 'dy': dy, 'z': z, 'dz': dz},
    )
    logger.debug("built %dx%d grid on [0, %.12f]", n_s, n_theta, params.s_r)
    return grid


def geodesic_disk_grid(n_s=64, n_theta=64, s_lo=-1.5, s_hi=0.0):
    """Conformal patch of the great 2-sphere {x3 = x4 = 0}, totally geodesic in S^4.

    Polar angle phi from e0 with d(phi)/ds = sin(phi), so phi = 2 arctan(e^s)
    and rho = sin^2(phi).
    """
    s = np.linspace(s_lo, s_hi, n_s)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    phi = 2.0 * np.arctan(np.exp(s))
    sin_phi = np.sin(phi)
    t = theta[np.newaxis, :]
    zeros = np.zeros((n_s, n_theta))
    nodes = np.stack([
        np.broadcast_to(np.cos(phi)[:, np.newaxis], (n_s, n_theta)),
        sin_phi[:, np.newaxis] * np.cos(t),
        sin_phi[:, np.newaxis] * np.sin(t),
        zeros, zeros,
    ], axis=-1)
    # d(cos phi)/ds = -sin^2 phi, d(sin phi)/ds = sin phi cos phi
    phi_s = np.stack([
        np.broadcast_to((-sin_phi ** 2)[:, np.newaxis], (n_s, n_theta)),
        (sin_phi * np.cos(phi))[:, np.newaxis] * np.cos(t),
        (sin_phi * np.cos(phi))[:, np.newaxis] * np.sin(t),
        zeros, zeros,
    ], axis=-1)
    return ImmersionGrid.from_nodes(s, theta, nodes, phi_s=phi_s, rho=sin_phi ** 2)


def constant_grid(point, n_s=32, n_theta=32):
    """Every node at the same unit vector; rho is set to 1 so Delta_g is finite."""
    point = np.asarray(point, dtype=float)
    s = np.linspace(0.0, 1.0, n_s)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    nodes = np.broadcast_to(point, (n_s, n_theta, len(point))).copy()
    return ImmersionGrid.from_nodes(s, theta, nodes, phi_s=np.zeros_like(nodes), rho=np.ones(n_s))


def tangent_frame(grid, swap=False):
    """Orthonormal (E1, E2) from Gram-Schmidt on (Phi_s, Phi_theta), with the raw norms.

    swap runs Gram-Schmidt on (Phi_theta, Phi_s) instead.
    """
    first, second = (grid.phi_theta, grid.phi_s) if swap else (grid.phi_s, grid.phi_theta)
    norm_s = np.linalg.norm(first, axis=-1)
    e1 = first / np.where(norm_s == 0.0, 1.0, norm_s)[..., np.newaxis]
    w = second - np.sum(second * e1, axis=-1, keepdims=True) * e1
    norm_w = np.linalg.norm(w, axis=-1)
    e2 = w / np.where(norm_w == 0.0, 1.0, norm_w)[..., np.newaxis]
    return e1, e2, norm_s, norm_w


def sphere_projector(grid):
    """I - Phi Phi^T per node, shape (n_s, n_theta, 5, 5)."""
    dim = grid.nodes.shape[-1]
    return np.eye(dim) - np.einsum('...i,...j->...ij', grid.nodes, grid.nodes)


def normal_projector(grid, swap=False):
    """Projector onto the normal space of the surface inside T_p S^4."""
    e1, e2, _, _ = tangent_frame(grid, swap)
    return (sphere_projector(grid)
            - np.einsum('...i,...j->...ij', e1, e1)
            - np.einsum('...i,...j->...ij', e2, e2))


def apply(projector, vectors):
    return np.einsum('...ij,...j->...i', projector, vectors)


def second_fundamental_form(grid, projector=None):
    """(B_ss, B_st, B_tt) = P_N Phi_ij / rho, i.e. B on the conformal unit frame."""
    projector = normal_projector(grid) if projector is None else projector
    phi_ss = grid.d_s(grid.phi_s, parity=-1.0)
    phi_st = grid.d_theta(grid.phi_s)
    phi_tt = grid.d_thetatheta(grid.nodes)
    scale = grid.rho[:, np.newaxis, np.newaxis]
    return tuple(apply(projector, second) / scale for second in (phi_ss, phi_st, phi_tt))


def second_fundamental_norm2(grid, projector=None):
    b_ss, b_st, b_tt = second_fundamental_form(grid, projector)
    return np.sum(b_ss ** 2 + 2.0 * b_st ** 2 + b_tt ** 2, axis=-1)


@dataclass(frozen=True)
class MetricReport:
    sphere: float
    conformality_s: float
    conformality_theta: float
    conformality_cross: float
    conformality_theta_analytic: float
    containment_margin: float
    boundary_gap: float

    @property
    def conformality(self):
        return max(self.conformality_s, self.conformality_theta, self.conformality_cross)


def metric_report(grid):
    rho = grid.rho[:, np.newaxis]
    tangent_s = grid.d_s(grid.nodes)
    tangent_t = grid.phi_theta
    sphere = np.max(np.abs(np.sum(grid.nodes ** 2, axis=-1) - 1.0))
    profile = grid.profile
    theta_analytic = (np.max(np.abs(profile['y'] ** 2 + 4.0 * profile['z'] ** 2 - grid.rho))
                      if profile else 0.0)
    r = grid.cap_radius
    margin = float(np.min(grid.nodes[..., 0]) - math.cos(r)) if r is not None else math.inf
    boundary_gap = (abs(profile['y'][-1] ** 2 + profile['z'][-1] ** 2 - math.sin(r) ** 2)
                    if profile and r is not None else 0.0)
    return MetricReport(
        sphere=float(sphere),
        conformality_s=float(np.max(np.abs(np.sum(tangent_s ** 2, axis=-1) - rho))),
        conformality_theta=float(np.max(np.abs(np.sum(tangent_t ** 2, axis=-1) - rho))),
        conformality_cross=float(np.max(np.abs(np.sum(tangent_s * tangent_t, axis=-1)))),
        conformality_theta_analytic=float(theta_analytic),
        containment_margin=margin,
        boundary_gap=float(boundary_gap),
    )


@dataclass(frozen=True)
class MinimalityResidual:
    max: float
    per_coordinate: tuple


def minimality_residual(grid):
    """max over coordinates and nodes of |rho^-1 (phi_ss + phi_tt) + 2 phi|."""
    laplacian = (grid.d_ss(grid.nodes) + grid.d_thetatheta(grid.nodes)) / grid.rho[:, np.newaxis, np.newaxis]
    residual = np.abs(laplacian + 2.0 * grid.nodes)
    per_coordinate = tuple(float(v) for v in np.max(residual, axis=(0, 1)))
    return MinimalityResidual(max=max(per_coordinate), per_coordinate=per_coordinate)


@dataclass(frozen=True)
class FreeBoundaryResidual:
    defect: float
    defect_squared_expansion: float

    @property
    def agreement(self):
        return abs(self.defect ** 2 - self.defect_squared_expansion)


def free_boundary_residual(grid):
    """max |N - nu| on the boundary row, N = (cos r p - e0)/sin r the cap normal and
    nu = Phi_s / sqrt(rho) the conormal, both from the analytic trace.

    The expansion 2 + 2 x'(s_r) / (sin r sqrt(rho)) of |N - nu|^2 is returned
    alongside; it cancels to the size of f2 while |N - nu| is of the size of
    sqrt(f2), so only the direct difference resolves small defects.
    """
    r = grid.cap_radius
    sin_r, cos_r = math.sin(r), math.cos(r)
    root_rho = math.sqrt(grid.rho[-1])
    squared = 2.0 + 2.0 * grid.profile['dx'][-1] / (sin_r * root_rho)

    e0 = np.zeros(grid.nodes.shape[-1])
    e0[0] = 1.0
    cap_normal = (cos_r * grid.nodes[-1] - e0) / sin_r
    conormal = grid.phi_s[-1] / root_rho
    direct = np.max(np.linalg.norm(cap_normal - conormal, axis=-1))
    return FreeBoundaryResidual(defect=float(direct), defect_squared_expansion=float(squared))


@dataclass(frozen=True)
class Measures:
    area: float
    boundary_length: float
    theta_r: float


def measures(grid, sigma0, sigma1):
    """|Sigma|, |dSigma| and [sigma0 cos^2 r + sigma1 sin^2 r] |dSigma| + 2 |Sigma|."""
    r = grid.cap_radius
    area = grid.integrate(np.ones((grid.n_s, grid.n_theta)))
    length = 2.0 * math.pi * math.sqrt(grid.rho[-1])
    cos2 = math.cos(r) ** 2
    # cos^2 r sigma0 -> -sin r cos r, which is 0 at the hemisphere where sigma0 is -inf
    first = 0.0 if math.isinf(sigma0) and cos2 < 1e-30 else sigma0 * cos2
    theta_r = (first + sigma1 * math.sin(r) ** 2) * length + 2.0 * area
    return Measures(area=area, boundary_length=length, theta_r=theta_r)


@dataclass(frozen=True)
class GeometryReport:
    n_s: int
    n_theta: int
    sphere: float
    conformality_s: float
    conformality_theta: float
    conformality_cross: float
    containment_margin: float
    boundary_gap: float
    minimality: float
    minimality_per_coordinate: tuple
    free_boundary: float
    free_boundary_expansion: float
    area: float
    boundary_length: float
    theta_r: float

    def to_dict(self):
        return {
            'n_s': self.n_s,
            'n_theta': self.n_theta,
            'sphere': self.sphere,
            'conformality': {
                'g11': self.conformality_s,
                'g22': self.conformality_theta,
                'g12': self.conformality_cross,
            },
            'containment_margin': self.containment_margin,
            'boundary_gap': self.boundary_gap,
            'minimality': self.minimality,
            'minimality_per_coordinate': list(self.minimality_per_coordinate),
            'free_boundary': self.free_boundary,
            'free_boundary_squared_expansion': self.free_boundary_expansion,
            'area': self.area,
            'boundary_length': self.boundary_length,
            'theta_r': self.theta_r,
        }


def geometry_report(grid, sigma0, sigma1):
    metric = metric_report(grid)
    minimal = minimality_residual(grid)
    boundary = free_boundary_residual(grid)
    totals = measures(grid, sigma0, sigma1)
    return GeometryReport(
        n_s=grid.n_s, n_theta=grid.n_theta,
        sphere=metric.sphere,
        conformality_s=metric.conformality_s,
        conformality_theta=metric.conformality_theta,
        conformality_cross=metric.conformality_cross,
        containment_margin=metric.containment_margin,
        boundary_gap=metric.boundary_gap,
        minimality=minimal.max,
        minimality_per_coordinate=minimal.per_coordinate,
        free_boundary=boundary.defect,
        free_boundary_expansion=boundary.defect_squared_expansion,
        area=totals.area,
        boundary_length=totals.boundary_length,
        theta_r=totals.theta_r,
    )
