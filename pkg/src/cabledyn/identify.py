"""Configuration and parameter identification from marker data.

Covers three stages: recovering the object configuration from three
backbone markers (damped-pseudoinverse iteration), recovering stiffness
and rest curvature from equilibrium shapes at several base angles
(stacked linear least squares), and recovering the damping coefficient
from one free swing (scalar least squares on the curvature dynamics).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import dynamics as dyn
from .errors import DegenerateDataError, IkConvergenceError, NonPhysicalParameterError, RankDeficiencyError
from .kinematics import elasticity_matrix, fk_jacobian, fk_point
from .params import FloatingBaseConfig, ObjectParams, Point2
from .simulate import Trajectory, atomic_write_text

_MARKER_S = (0.0, 0.5, 1.0)
MARKER_CSV_HEADER = ("t", "psx", "psy", "pmx", "pmy", "pex", "pey")


@dataclass(frozen=True)
class MarkerSet:
    """Measured backbone points at s = 0, 0.5, 1 in the fixed base frame."""

    p_s: Point2
    p_m: Point2
    p_e: Point2

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.p_s.as_array(), self.p_m.as_array(), self.p_e.as_array()])

    def check_span(self, p: ObjectParams, slack: float = 0.02) -> None:
        """Reject marker sets whose pairwise spans exceed the object length."""
        pts = [self.p_s.as_array(), self.p_m.as_array(), self.p_e.as_array()]
        limit = (1.0 + slack) * p.L
        for i in range(3):
            for j in range(i + 1, 3):
                d = float(np.linalg.norm(pts[i] - pts[j]))
                if d > limit:
                    raise ValueError(f"marker span {d:.4f} m exceeds object length {p.L} m (+{slack:.0%})")


@dataclass(frozen=True)
class EquilibriumSample:
    """One measured steady state: base angle and curvature coefficients."""

    phi: float
    theta_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.atleast_1d(np.asarray(self.theta_star, dtype=float)))


def markers_from_config(q: FloatingBaseConfig, p: ObjectParams) -> MarkerSet:
    """Forward-kinematics markers at the start-, mid- and endpoint."""
    pts = [fk_point(q, p, s) for s in _MARKER_S]
    return MarkerSet(*pts)


def _stacked_fk(q: FloatingBaseConfig, p: ObjectParams) -> np.ndarray:
    return np.concatenate([fk_point(q, p, s).as_array() for s in _MARKER_S])


def _stacked_jacobian(q: FloatingBaseConfig, p: ObjectParams) -> np.ndarray:
    return np.vstack([fk_jacobian(q, p, s) for s in _MARKER_S])


def numerical_ik(markers: MarkerSet, q_init: FloatingBaseConfig, p: ObjectParams,
                 eps: float = 1e-6, delta: float = 0.5, i_max: int = 200,
                 damping: float = 1e-4) -> FloatingBaseConfig:
    """Recover the configuration whose marker points match the measurements.

    Iterates q <- q - delta * J^+ e with e the stacked marker mismatch and
    J^+ a Tikhonov-damped pseudoinverse.  Raises IkConvergenceError with
    the best iterate when the budget is exhausted.  For n >= 3 the three
    markers underdetermine the shape and the minimum-norm update is used.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if i_max < 1:
        raise ValueError("i_max must be at least 1")
    markers.check_span(p)
    if p.n >= 3:
        import warnings

        warnings.warn("three markers underdetermine a degree >= 3 shape; "
                      "returning the minimum-norm fit", stacklevel=2)
    target = markers.stacked()
    q_vec = q_init.q.copy()
    best_vec, best_res = q_vec.copy(), np.inf
    for _ in range(i_max):
        cfg = FloatingBaseConfig.from_q(q_vec)
        err = _stacked_fk(cfg, p) - target
        res = float(np.linalg.norm(err))
        if res < best_res:
            best_res, best_vec = res, q_vec.copy()
        if res < eps:
            return cfg
        J = _stacked_jacobian(cfg, p)
        # damped pseudoinverse step: J^T (J J^T + lambda^2 I)^-1 e
        JJt = J @ J.T + damping**2 * np.eye(J.shape[0])
        q_vec = q_vec - delta * (J.T @ np.linalg.solve(JJt, err))
    cfg = FloatingBaseConfig.from_q(q_vec)
    res = float(np.linalg.norm(_stacked_fk(cfg, p) - target))
    if res < eps:
        return cfg
    if res < best_res:
        best_res, best_vec = res, q_vec
    raise IkConvergenceError(
        f"marker fit stalled at residual {best_res:.3e} m after {i_max} iterations",
        best=FloatingBaseConfig.from_q(best_vec), residual=best_res,
    )


def identify_static(samples, p: ObjectParams):
    """Recover (k, theta_bar) from equilibrium shapes at several base angles.

    Stacks H theta* and -H against the curvature-block gravity force for
    every sample and solves the overdetermined linear system for
    (k, k*theta_bar) by least squares.

    Returns:
        (k, theta_bar, residual): stiffness, rest-curvature coefficients,
        and the 2-norm of the stacked equation residual.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise RankDeficiencyError("static identification needs at least two equilibria at distinct angles")
    n = p.n
    H = elasticity_matrix(n)
    rows = []
    rhs = []
    for s in samples:
        theta = np.asarray(s.theta_star, dtype=float)
        a = np.empty((n + 1, n + 2))
        a[:, 0] = H @ theta
        a[:, 1:] = -H
        rows.append(a)
        rhs.append(-dyn.gravity_theta(theta, s.phi, p))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < n + 2:
        raise RankDeficiencyError(
            f"stacked regressor has rank {rank} < {n + 2}; vary the base angle to excite the elasticity"
        )
    k = float(sol[0])
    if k <= 0:
        raise NonPhysicalParameterError(
            f"recovered stiffness k = {k:.4g} is not positive; check frames and data"
        )
    theta_bar = sol[1:] / k
    residual = float(np.linalg.norm(A @ sol - b))
    return k, theta_bar, residual


def differentiate_trajectory(times, theta_samples):
    """First and second time derivatives via Savitzky-Golay filtering.

    Window 7, polynomial order 3; endpoints use one-sided polynomial fits,
    so polynomial signals up to cubic are differentiated exactly.  Requires
    at least 7 uniformly spaced samples.
    """
    times = np.asarray(times, dtype=float)
    theta = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    if theta.shape[0] == 1 and theta.shape[1] == len(times):
        theta = theta.T
    if len(times) < 7:
        raise ValueError("Savitzky-Golay differentiation needs at least 7 samples")
    dt_all = np.diff(times)
    if np.any(dt_all <= 0):
        raise ValueError("times must be strictly increasing")
    dt = float(dt_all.mean())
    if np.abs(dt_all - dt).max() > 1e-6 * dt:
        raise ValueError("samples must be uniformly spaced for the smoothing filter")
    d1 = scipy.signal.savgol_filter(theta, 7, 3, deriv=1, delta=dt, axis=0, mode="interp")
    d2 = scipy.signal.savgol_filter(theta, 7, 3, deriv=2, delta=dt, axis=0, mode="interp")
    return d1, d2


def identify_damping_from_samples(thetas, theta_dots, theta_ddots, phi_star: float, p: ObjectParams,
                                  min_excitation: float = 1e-12):
    """Scalar least-squares damping from curvature states and derivatives.

    Returns:
        (beta, residual): damping coefficient and the 2-norm of the stacked
        dynamics residual at the solution.
    """
    H = elasticity_matrix(p.n)
    reg = []
    rhs = []
    for th, td, tdd in zip(thetas, theta_dots, theta_ddots):
        B_tt, C_tt, G_t = dyn._zero_dyn_terms(np.asarray(th, float), np.asarray(td, float), phi_star, p)
        reg.append(H @ td)
        rhs.append(-(B_tt @ tdd + C_tt @ td + G_t + dyn.elastic_force(th, p)))
    a = np.concatenate(reg)
    b = np.concatenate(rhs)
    denom = float(a @ a)
    if denom < min_excitation:
        raise DegenerateDataError("the object never moved; damping is unobservable")
    beta = float(a @ b) / denom
    residual = float(np.linalg.norm(a * beta - b))
    return beta, residual


def identify_damping(traj: Trajectory, p: ObjectParams, theta_ddots=None):
    """Recover the damping coefficient from one base-fixed evolution.

    The trajectory must hold the base still; curvature accelerations are
    taken from ``theta_ddots`` when given and are otherwise recomputed by
    Savitzky-Golay differentiation of the curvature samples.
    """
    n = p.n
    base_vel = traj.velocities[:, n + 1 :]
    if np.abs(base_vel).max() > 1e-9:
        raise ValueError("damping identification expects a base-fixed trajectory")
    base = traj.states[:, n + 1 :]
    if np.abs(base - base[0]).max() > 1e-9:
        raise ValueError("base pose drifts during the trajectory")
    phi_star = float(traj.states[0, n + 3])
    thetas = traj.states[:, : n + 1]
    theta_dots = traj.velocities[:, : n + 1]
    if theta_ddots is None:
        _, theta_ddots = differentiate_trajectory(traj.times, thetas)
    return identify_damping_from_samples(thetas, theta_dots, theta_ddots, phi_star, p)


# ---------------------------------------------------------------------------
# file interchange


def write_marker_csv(path, times, marker_sets) -> None:
    lines = [",".join(MARKER_CSV_HEADER)]
    for t, m in zip(times, marker_sets):
        vals = [t, m.p_s.px, m.p_s.py, m.p_m.px, m.p_m.py, m.p_e.px, m.p_e.py]
        lines.append(",".join(f"{v:.12g}" for v in vals))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_marker_csv(path, key_column: str = "t"):
    """Read marker rows; returns (key values, list of MarkerSet).

    The leading column is ``t`` for time series and ``phi`` for static
    equilibrium collections.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"empty marker CSV: {path}") from None
        expected = [key_column, *MARKER_CSV_HEADER[1:]]
        if header != expected:
            raise ValueError(f"marker CSV header must be {','.join(expected)}, got {','.join(header)}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"marker CSV has no samples: {path}")
    keys = np.array([r[0] for r in rows])
    sets = [MarkerSet(Point2(r[1], r[2]), Point2(r[3], r[4]), Point2(r[5], r[6])) for r in rows]
    return keys, sets


def identification_report(k: float, theta_bar, beta, residual_static: float,
                          residual_dynamic, n_static: int, n_dynamic: int) -> dict:
    return {
        "k": k,
        "theta_bar": [float(v) for v in np.atleast_1d(theta_bar)],
        "beta": beta,
        "residual_static": residual_static,
        "residual_dynamic": residual_dynamic,
        "n_samples": {"static": n_static, "dynamic": n_dynamic},
    }
