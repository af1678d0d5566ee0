"""Pointwise 3x3 symmetrizer algebra for the first-order reduction.

With U = (D_t^2 u, D_t <D> u, <D>^2 u) the model operator becomes
D_t U = (A <D> + B) U + F where

    A = [[0, a, b], [1, 0, 0], [0, 1, 0]],   B = first-row lower order.

The symmetrizer S and the weight J are

    S = [[3, 0, -a], [0, 2a, 3b], [-a, 3b, a^2]],   J = diag(1, 1, a),

with S A symmetric, det S = Delta = 4 a^3 - 27 b^2 and
det(S - 2 delta t J) = Delta + 2 delta O(t (t + alpha)^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import HyperbolicModel, LowerOrderTerms


@dataclass(frozen=True)
class PointEval:
    """Coefficient values of a model at a single (t, x, xi) point."""

    t: float
    x: float
    xi: float
    alpha: float
    atilde: float
    a: float
    b: float
    jp: float

    @property
    def scale(self):
        """Matrix tolerance scale 1 + a^2 + b^2 + (t + alpha)^2."""
        return 1.0 + self.a**2 + self.b**2 + (self.t + self.alpha) ** 2


def point_eval(model: HyperbolicModel, t, x, xi):
    alpha = float(model.eval_alpha(x, xi))
    atilde = float(model.eval_atilde(t, x, xi))
    return PointEval(
        t=float(t),
        x=float(x),
        xi=float(xi),
        alpha=alpha,
        atilde=atilde,
        a=(float(t) + alpha) * atilde,
        b=float(model.eval_b(t, x, xi)),
        jp=math.sqrt(1.0 + float(xi) ** 2),
    )


def matrix_A(pe: PointEval):
    return np.array([[0.0, pe.a, pe.b], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def matrix_B(pe: PointEval, lot: LowerOrderTerms):
    b10, b11, b12 = (float(v) for v in lot.evaluate(pe.t, pe.x, pe.xi))
    out = np.zeros((3, 3))
    out[0] = (b10, b11, b12)
    return out


def matrix_S(pe: PointEval):
    a, b = pe.a, pe.b
    return np.array([[3.0, 0.0, -a], [0.0, 2.0 * a, 3.0 * b], [-a, 3.0 * b, a * a]])


def matrix_J(pe: PointEval):
    return np.diag([1.0, 1.0, pe.a])


def matrix_SA_closed(pe: PointEval):
    """The closed form of S A: [[0, 2a, 3b], [2a, 3b, 0], [3b, 0, -ab]]."""
    a, b = pe.a, pe.b
    return np.array([[0.0, 2.0 * a, 3.0 * b], [2.0 * a, 3.0 * b, 0.0], [3.0 * b, 0.0, -a * b]])


def check_SA_symmetric(pe: PointEval):
    """Max |SA - (SA)^T| and max |SA - closed form|, both scale-normalized."""
    sa = matrix_S(pe) @ matrix_A(pe)
    asym = float(np.max(np.abs(sa - sa.T)))
    closed = float(np.max(np.abs(sa - matrix_SA_closed(pe))))
    return asym / pe.scale, closed / pe.scale


def det3(m):
    """Cofactor expansion along the first row (no LU pivoting)."""
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


@dataclass(frozen=True)
class DetIdentityReport:
    det_S: float
    delta: float
    det_shifted: float
    remainder_ratio: float


def det_identities(pe: PointEval, delta=0.25):
    """det S vs Delta and the shifted determinant remainder.

    remainder_ratio = |det(S - 2 delta t J) - Delta| / (delta t (t+alpha)^2),
    which the structure of S keeps O(1) (it is 2 delta O(t (t+alpha)^2)).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    S = matrix_S(pe)
    det_s = det3(S)
    dd = 4.0 * pe.a**3 - 27.0 * pe.b**2
    shifted = det3(S - 2.0 * delta * pe.t * matrix_J(pe))
    denom = delta * pe.t * (pe.t + pe.alpha) ** 2
    ratio = abs(shifted - dd) / denom if denom > 0 else float("inf") if shifted != dd else 0.0
    return DetIdentityReport(det_S=det_s, delta=dd, det_shifted=shifted, remainder_ratio=ratio)


def build_Stilde(pe: PointEval, lam):
    """S + lam t^-1 jp^-2 I (pointwise; t > 0 required)."""
    if not pe.t > 0:
        raise ValueError("Stilde needs t > 0")
    return matrix_S(pe) + (lam / (pe.t * pe.jp**2)) * np.eye(3)


def stilde_floor(model: HyperbolicModel, grid):
    """Smallest lam such that min eig(S + lam/(t jp^2)) >= lam/(2 t jp^2) on the grid.

    Pointwise that is lam >= 2 t jp^2 max(0, -min eig S); returns the sup.
    """
    S, _, t, alpha, jp2 = _stacked_matrices(model, grid)
    eigs = np.linalg.eigvalsh(S)
    need = 2.0 * t * jp2 * np.maximum(0.0, -eigs[..., 0])
    return float(np.max(need))


def _stacked_matrices(model, grid):
    tg = grid.t_vals[:, None, None]
    xg = grid.x_vals[None, :, None]
    xig = grid.xi_vals[None, None, :]
    shape = (len(grid.t_vals), len(grid.x_vals), len(grid.xi_vals))
    alpha = np.broadcast_to(model.alpha.evaluate(0.0, xg, xig), shape)
    a = np.broadcast_to((tg + alpha) * model.atilde.evaluate(tg, xg, xig), shape)
    b = np.broadcast_to(model.b.evaluate(tg, xg, xig), shape)
    S = np.zeros(shape + (3, 3))
    S[..., 0, 0] = 3.0
    S[..., 0, 2] = -a
    S[..., 2, 0] = -a
    S[..., 1, 1] = 2.0 * a
    S[..., 1, 2] = 3.0 * b
    S[..., 2, 1] = 3.0 * b
    S[..., 2, 2] = a * a
    J = np.zeros(shape + (3, 3))
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    J[..., 2, 2] = a
    t_full = np.broadcast_to(tg, shape)
    jp2 = np.broadcast_to(1.0 + xig**2, shape)
    return S, J, t_full, alpha, jp2


@dataclass(frozen=True)
class DeltaSymReport:
    delta_sym: float
    feasible_at_one: bool
    grid: dict
    tol: float


def lower_bound_delta(model: HyperbolicModel, grid, tol=1e-10, rel=1e-4):
    """Largest delta with S - 2 delta t J >= -tol * scale on the whole grid.

    Bisection with ties resolved downward; returns 0 when even delta = 1e-8
    fails.  S - 2 delta t J loses positivity monotonically in delta because
    J >= 0, so bisection is valid.
    """
    S, J, t, alpha, _ = _stacked_matrices(model, grid)
    a = J[..., 2, 2]
    scale = 1.0 + a**2 + S[..., 1, 2] ** 2 / 9.0 + (t + alpha) ** 2
    tJ = 2.0 * t[..., None, None] * J

    def feasible(delta):
        eigs = np.linalg.eigvalsh(S - delta * tJ)
        return bool(np.all(eigs[..., 0] >= -tol * scale))

    if not feasible(1e-8):
        return DeltaSymReport(0.0, False, grid.describe(), tol)
    lo = 1e-8
    hi = 1.0
    feasible_one = feasible(1.0)
    if feasible_one:
        lo = 1.0
        while feasible(2.0 * lo):
            lo *= 2.0
            if lo > 2.0**30:
                return DeltaSymReport(float(lo), True, grid.describe(), tol)
        hi = 2.0 * lo
    while hi - lo > rel * lo:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return DeltaSymReport(float(lo), feasible_one, grid.describe(), tol)
