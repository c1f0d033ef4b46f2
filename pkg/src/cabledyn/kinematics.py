"""Polynomial-curvature backbone kinematics and analytic Jacobians.

The curvature along the normalized abscissa s in [0, 1] is the polynomial
kappa(s) = sum_i theta_i s^i, so the tangent angle relative to the base is
its running integral.  All arc integrals are evaluated with fixed 16-point
Gauss-Legendre quadrature mapped onto [0, s]; for low polynomial degrees
the integrands are smooth and the rule is accurate to ~1e-12.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .params import FloatingBaseConfig, ObjectParams, Point2

_GAUSS_POINTS = 16
_GX, _GW = np.polynomial.legendre.leggauss(_GAUSS_POINTS)


def _check_s(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("abscissa s must lie in [0, 1]")
    return s


def _check_d(d: float) -> float:
    d = float(d)
    if not -0.5 <= d <= 0.5:
        raise ValueError("cross-section offset d must lie in [-1/2, 1/2]")
    return d


def angle_basis(s, n: int) -> np.ndarray:
    """Partial derivatives of the tangent angle w.r.t. theta: s^(i+1)/(i+1).

    Returns an array of shape s.shape + (n+1,).
    """
    s = np.asarray(s, dtype=float)
    i = np.arange(n + 1)
    return s[..., None] ** (i + 1) / (i + 1)


def alpha(s, theta, phi: float = 0.0):
    """Backbone tangent angle at abscissa s, measured from the downward vertical.

    Affine in phi with unit coefficient: alpha = phi + integral of the
    curvature polynomial from 0 to s.
    """
    s = _check_s(s)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    val = phi + angle_basis(s, len(theta) - 1) @ theta
    return float(val) if np.ndim(s) == 0 else val


def tip_angle(theta, phi: float = 0.0) -> float:
    """Tangent angle at the free end (0 = pointing straight down)."""
    return float(alpha(1.0, theta, phi))


@lru_cache(maxsize=64)
def _quad_grid(s_key: tuple, n: int):
    """Quadrature nodes, weights and basis values for a tuple of abscissae.

    Returns (WT, PSI) where WT has shape (P, K) and PSI has shape
    (P, K, n+2): the first n+1 basis columns are v^(i+1)/(i+1) (theta
    directions) and the last column is 1 (phi direction).
    """
    s = np.asarray(s_key, dtype=float)
    nodes = 0.5 * s[:, None] * (_GX[None, :] + 1.0)     # (P, K)
    wt = 0.5 * s[:, None] * _GW[None, :]                # (P, K)
    psi = np.empty(nodes.shape + (n + 2,))
    psi[..., : n + 1] = angle_basis(nodes, n)
    psi[..., n + 1] = 1.0
    return wt, psi


def _arc_integrals(theta2d: np.ndarray, phi1d: np.ndarray, s_key: tuple, n: int):
    """Batched arc integrals for several configurations and abscissae.

    Args:
        theta2d: (B, n+1) curvature coefficients per configuration.
        phi1d: (B,) base angles.
        s_key: tuple of abscissae (quadrature grids are cached on it).

    Returns:
        (Ic, Is): arrays of shape (B, P, n+2) holding the integrals of
        cos(alpha(v)) * psi_j(v) and sin(alpha(v)) * psi_j(v) over [0, s_p],
        with psi ordered (theta_0..theta_n, phi const 1).
    """
    wt, psi = _quad_grid(s_key, n)
    a = phi1d[:, None, None] + np.tensordot(theta2d, psi[..., : n + 1], axes=(1, 2))
    cw = np.cos(a) * wt
    sw = np.sin(a) * wt
    # contraction over quadrature nodes k: (B,P,1,K) @ (P,K,J) -> (B,P,1,J)
    ic = np.matmul(cw[:, :, None, :], psi)[:, :, 0, :]
    is_ = np.matmul(sw[:, :, None, :], psi)[:, :, 0, :]
    return ic, is_


def point_jacobians(theta2d, phi1d, s_key: tuple, n: int, L: float):
    """Positions (relative to the base point) and full Jacobians of backbone points.

    Returns:
        pos_rel: (B, P, 2) backbone point minus base position.
        jac: (B, P, 2, n+4) derivative of the point w.r.t. (theta, x, y, phi).
    """
    theta2d = np.atleast_2d(np.asarray(theta2d, dtype=float))
    phi1d = np.atleast_1d(np.asarray(phi1d, dtype=float))
    ic, is_ = _arc_integrals(theta2d, phi1d, s_key, n)
    b, p = ic.shape[:2]
    pos_rel = np.empty((b, p, 2))
    pos_rel[..., 0] = L * is_[..., n + 1]
    pos_rel[..., 1] = -L * ic[..., n + 1]
    jac = np.zeros((b, p, 2, n + 4))
    jac[..., 0, : n + 1] = L * ic[..., : n + 1]
    jac[..., 1, : n + 1] = L * is_[..., : n + 1]
    jac[..., 0, n + 1] = 1.0
    jac[..., 1, n + 2] = 1.0
    jac[..., 0, n + 3] = L * ic[..., n + 1]
    jac[..., 1, n + 3] = L * is_[..., n + 1]
    return pos_rel, jac


def fk_point(q: FloatingBaseConfig, p: ObjectParams, s: float, d: float = 0.0) -> Point2:
    """Forward kinematics of the point at abscissa s and cross-section offset d."""
    s = float(_check_s(s))
    d = _check_d(d)
    pos_rel, _ = point_jacobians(q.theta[None, :], np.array([q.phi]), (s,), q.n, p.L)
    px = q.x + pos_rel[0, 0, 0]
    py = q.y + pos_rel[0, 0, 1]
    if d != 0.0 and p.D != 0.0:
        a = alpha(s, q.theta, q.phi)
        px -= p.D * d * np.cos(a)
        py -= p.D * d * np.sin(a)
    return Point2(float(px), float(py))


def backbone_points(q: FloatingBaseConfig, p: ObjectParams, s_values) -> np.ndarray:
    """Backbone positions at many abscissae, shape (len(s_values), 2)."""
    s = _check_s(np.asarray(s_values, dtype=float))
    pos_rel, _ = point_jacobians(q.theta[None, :], np.array([q.phi]), tuple(s), q.n, p.L)
    return pos_rel[0] + np.array([q.x, q.y])


def fk_jacobian(q: FloatingBaseConfig, p: ObjectParams, s: float, d: float = 0.0) -> np.ndarray:
    """Analytic Jacobian of fk_point w.r.t. (theta_0..theta_n, x, y, phi)."""
    s = float(_check_s(s))
    d = _check_d(d)
    _, jac = point_jacobians(q.theta[None, :], np.array([q.phi]), (s,), q.n, p.L)
    jac = jac[0, 0].copy()
    if d != 0.0 and p.D != 0.0:
        a = alpha(s, q.theta, q.phi)
        w = np.empty(q.n + 2)
        w[: q.n + 1] = angle_basis(np.asarray(s), q.n)
        w[q.n + 1] = 1.0
        cols = list(range(q.n + 1)) + [q.n + 3]
        jac[0, cols] += p.D * d * np.sin(a) * w
        jac[1, cols] -= p.D * d * np.cos(a) * w
    return jac


@lru_cache(maxsize=32)
def elasticity_matrix(n: int) -> np.ndarray:
    """Gram matrix of the monomial curvature basis, H_ij = 1/(i+j+1).

    (k/2) (theta - theta_bar)^T H (theta - theta_bar) equals the bending
    energy (k/2) * integral of (kappa - kappa_bar)^2 over [0, 1].  Symmetric
    positive definite (Hilbert-patterned, hence a Hankel matrix).
    """
    if n < 0:
        raise ValueError("polynomial degree n must be non-negative")
    i = np.arange(n + 1)
    h = 1.0 / (i[:, None] + i[None, :] + 1)
    h.setflags(write=False)
    return h
