"""Index form, energy form and the Gram matrix of the coordinate variations.

For a unit vector y of R^5 with <y, e0> = 0 the field

    V_y = phi_y d0^perp - phi_0 dy^perp + c(r) dy^perp,   c(r) = (1 + sin r) / cos r,

is normal along the band and tangent to the cap boundary on the boundary
circle. Its index is -2 c(r)^2 times the integral of |dy^perp|^2; the quadrature
here checks that value against the index form evaluated from grid derivatives.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from src.core.calibration import near_hemisphere
from src.core.errors import FrameDegeneracy, Inadmissible
from src.core.geometry import apply, normal_projector, second_fundamental_form, sphere_projector, tangent_frame

logger = logging.getLogger(__name__)

RHO_FLOOR = 1e-12
DIRECTIONS = (1, 2, 3, 4)


def unit_vector(i, dim=5):
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def cap_constant(r):
    if near_hemisphere(r):
        raise Inadmissible(f"c(r) = (1 + sin r)/cos r is unbounded at r={r}", {'r': r})
    return (1.0 + math.sin(r)) / math.cos(r)


@dataclass(eq=False)
class AmbientField:
    """A 5-vector per node, with parity +1 under (s, t) -> (-s, t + pi)."""
    grid: object
    values: np.ndarray

    def tangential(self):
        e1, e2, _, _ = tangent_frame(self.grid)
        return (np.sum(self.values * e1, axis=-1, keepdims=True) * e1
                + np.sum(self.values * e2, axis=-1, keepdims=True) * e2)

    def normal(self, projector=None):
        projector = normal_projector(self.grid) if projector is None else projector
        return apply(projector, self.values)

    def scaled(self, factor):
        return AmbientField(self.grid, factor * self.values)

    def __add__(self, other):
        return AmbientField(self.grid, self.values + other.values)


@dataclass(eq=False)
class CoordinateField:
    """d_y(p) = y - <p, y> p and the height phi_y = <p, y>."""
    field: AmbientField
    phi: np.ndarray


def _coordinate(grid, y_vec):
    phi = grid.nodes @ y_vec
    return CoordinateField(AmbientField(grid, y_vec - phi[..., np.newaxis] * grid.nodes), phi)


def coordinate_field(grid, y_vec):
    y_vec = np.asarray(y_vec, dtype=float)
    if abs(np.linalg.norm(y_vec) - 1.0) > 1e-12:
        raise ValueError(f"y_vec must be a unit vector, |y|={np.linalg.norm(y_vec)}")
    return _coordinate(grid, y_vec)


def _require_horizontal(y_vec):
    if abs(y_vec[0]) > 1e-12:
        raise Inadmissible(f"direction {list(y_vec)} is not orthogonal to e0", {'e0_component': float(y_vec[0])})


def vy_field(grid, y_vec, projector=None):
    y_vec = np.asarray(y_vec, dtype=float)
    _require_horizontal(y_vec)
    projector = normal_projector(grid) if projector is None else projector
    c = cap_constant(grid.cap_radius)
    d0 = _coordinate(grid, unit_vector(0, len(y_vec)))
    dy = coordinate_field(grid, y_vec)
    d0_perp = d0.field.normal(projector)
    dy_perp = dy.field.normal(projector)
    values = dy.phi[..., np.newaxis] * d0_perp + (c - d0.phi[..., np.newaxis]) * dy_perp
    return AmbientField(grid, values)


def tangent_field(grid):
    """Phi_theta, the restriction of the rotation field generating theta."""
    return AmbientField(grid, grid.phi_theta.copy())


def index_closed(grid, y_vec, projector=None):
    """-2 c(r)^2 times the integral of |dy^perp|^2 dv."""
    y_vec = np.asarray(y_vec, dtype=float)
    _require_horizontal(y_vec)
    c = cap_constant(grid.cap_radius)
    perp = _coordinate(grid, y_vec).field.normal(projector)
    return -2.0 * c * c * grid.integrate(np.sum(perp ** 2, axis=-1))


def gram_closed(grid, projector=None):
    """G_ij = -2 c(r)^2 integral of <di^perp, dj^perp> dv over e1..e4."""
    c = cap_constant(grid.cap_radius)
    projector = normal_projector(grid) if projector is None else projector
    perps = [_coordinate(grid, unit_vector(i)).field.normal(projector) for i in DIRECTIONS]
    n = len(perps)
    gram = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            gram[i, j] = gram[j, i] = -2.0 * c * c * grid.integrate(np.sum(perps[i] * perps[j], axis=-1))
    return gram


def _check_frame(grid):
    low = float(np.min(grid.rho))
    if low < RHO_FLOOR:
        k = int(np.argmin(grid.rho))
        raise FrameDegeneracy(f"rho={low:.3e} at s={grid.s[k]}", {'s': float(grid.s[k]), 'rho': low})


def index_form(grid, v, w, swap_frame=False):
    """Polarised index form for normal fields V, W.

    Interior: <P_N V_s, P_N W_s> + <P_N V_t, P_N W_t> - rho (2 <V, W> + sum_ij <B_ij, V><B_ij, W>)
    against ds dtheta, with B_ij = P_N Phi_ij / rho. Boundary: -cot r <V, W> da.
    """
    _check_frame(grid)
    projector = normal_projector(grid, swap_frame)
    b_ss, b_st, b_tt = second_fundamental_form(grid, projector)

    def pieces(field):
        values = field.values
        return (apply(projector, grid.d_s(values)), apply(projector, grid.d_theta(values)),
                np.sum(b_ss * values, axis=-1), np.sum(b_st * values, axis=-1), np.sum(b_tt * values, axis=-1))

    vs, vt, v_ss, v_st, v_tt = pieces(v)
    ws, wt, w_ss, w_st, w_tt = pieces(w)
    rho = grid.rho[:, np.newaxis]
    gradient = np.sum(vs * ws, axis=-1) + np.sum(vt * wt, axis=-1)
    shape = v_ss * w_ss + 2.0 * v_st * w_st + v_tt * w_tt
    interior = gradient - rho * (2.0 * np.sum(v.values * w.values, axis=-1) + shape)

    r = grid.cap_radius
    boundary = np.sum(v.values[-1] * w.values[-1], axis=-1)
    return float(np.sum(grid.flat_weights * interior)) - math.cos(r) / math.sin(r) * grid.integrate_boundary(boundary)


def index_direct(grid, v, swap_frame=False):
    return index_form(grid, v, v, swap_frame)


def q_form(grid, v, w):
    """Q(V, W) = int <nabla V, nabla W> - 2 <V, W> + <V^T, W^T> dv - cot r int <V, W> da,
    with nabla the covariant derivative of S^4 along the surface."""
    _check_frame(grid)
    projector = sphere_projector(grid)
    vs, vt = apply(projector, grid.d_s(v.values)), apply(projector, grid.d_theta(v.values))
    ws, wt = apply(projector, grid.d_s(w.values)), apply(projector, grid.d_theta(w.values))
    rho = grid.rho[:, np.newaxis]
    gradient = np.sum(vs * ws, axis=-1) + np.sum(vt * wt, axis=-1)
    zeroth = 2.0 * np.sum(v.values * w.values, axis=-1) - np.sum(v.tangential() * w.tangential(), axis=-1)
    interior = gradient - rho * zeroth

    r = grid.cap_radius
    boundary = np.sum(v.values[-1] * w.values[-1], axis=-1)
    return float(np.sum(grid.flat_weights * interior)) - math.cos(r) / math.sin(r) * grid.integrate_boundary(boundary)


def q_nullity(grid):
    """|Q(Phi_theta, Phi_theta)| over the integral of |Phi_theta|^2 dv."""
    field = tangent_field(grid)
    q = q_form(grid, field, field)
    return abs(q) / grid.integrate(np.sum(field.values ** 2, axis=-1))


@dataclass(frozen=True)
class GramResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    symmetry: float

    @property
    def negative_definite(self):
        return bool(np.all(self.eigenvalues < 0.0))


def morse_gram(grid):
    matrix = gram_closed(grid)
    symmetry = float(np.max(np.abs(matrix - matrix.T)))
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    result = GramResult(matrix=matrix, eigenvalues=eigenvalues, symmetry=symmetry)
    logger.info("Gram eigenvalues %s (negative definite: %s)", eigenvalues, result.negative_definite)
    return result


@dataclass(frozen=True)
class DirectionIndex:
    direction: int
    closed: float
    direct: float

    @property
    def relative_gap(self):
        return abs(self.direct - self.closed) / abs(self.closed)

    def to_dict(self):
        return {'direction': self.direction, 'closed': self.closed, 'direct': self.direct,
                'relative_gap': self.relative_gap}


@dataclass(frozen=True)
class StabilityReport:
    r: float
    c: float
    directions: tuple
    q_nullity: float
    gram: np.ndarray
    eigenvalues: np.ndarray
    gram_symmetry: float
    g12_closed: float
    g12_direct: float

    @property
    def negative_definite(self):
        return bool(np.all(self.eigenvalues < 0.0))

    @property
    def max_relative_gap(self):
        return max(d.relative_gap for d in self.directions)

    @property
    def g12_gap(self):
        """Mixed-entry gap measured against |G_11|; G_12 itself vanishes by symmetry."""
        return abs(self.g12_direct - self.g12_closed) / abs(self.directions[0].closed)

    def to_dict(self):
        return {
            'r': self.r,
            'c': self.c,
            'directions': [d.to_dict() for d in self.directions],
            'q_nullity': self.q_nullity,
            'gram': [float(v) for v in np.asarray(self.gram).ravel()],
            'eigenvalues': [float(v) for v in self.eigenvalues],
            'gram_symmetry': self.gram_symmetry,
            'negative_definite': self.negative_definite,
            'off_diagonal': {
                'g12_closed': self.g12_closed,
                'g12_direct': self.g12_direct,
                'gap': self.g12_gap,
                'note': 'polarized extension, cross-checked',
            },
        }


def build_stability_report(grid):
    c = cap_constant(grid.cap_radius)
    projector = normal_projector(grid)
    gram = morse_gram(grid)
    fields = {i: vy_field(grid, unit_vector(i), projector) for i in DIRECTIONS}

    directions = []
    for row, i in enumerate(DIRECTIONS):
        direct = index_direct(grid, fields[i])
        directions.append(DirectionIndex(direction=i, closed=float(gram.matrix[row, row]), direct=direct))
        logger.debug("e%d: closed %.12g direct %.12g", i, gram.matrix[row, row], direct)

    g12_direct = index_form(grid, fields[1], fields[2])
    return StabilityReport(
        r=grid.cap_radius, c=c, directions=tuple(directions), q_nullity=q_nullity(grid),
        gram=gram.matrix, eigenvalues=gram.eigenvalues, gram_symmetry=gram.symmetry,
        g12_closed=float(gram.matrix[0, 1]), g12_direct=g12_direct,
    )
