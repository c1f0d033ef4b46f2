"""Equations of motion of the floating-base object and the coupled robot-object system.

The object is reduced to lumped point masses on the backbone (six interior
points sharing the body mass plus optional end masses), so the inertia
matrix is the mass-weighted Gram matrix of the point Jacobians and the
gravity force is the mass-weighted stack of their y-rows.  Coriolis terms
come from Christoffel symbols with dB/dq evaluated by central finite
differences, which keeps dB/dt - 2C skew-symmetric by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularInertiaError
from .kinematics import elasticity_matrix, point_jacobians
from .params import FloatingBaseConfig, ObjectParams
from .robot import RobotModel, link_chain_batch

_FD_STEP = 1e-6


@dataclass(frozen=True)
class DynamicsTerms:
    """Assembled dynamic terms of the floating-base model at one state.

    ``B qdd + Cqdot + G + K_force + D_force = (0; F_x; F_y; tau_phi)``
    with K_force and D_force nonzero only in the curvature block.
    """

    B: np.ndarray
    Cqdot: np.ndarray
    G: np.ndarray
    K_force: np.ndarray
    D_force: np.ndarray


def _as_theta_phi(q: np.ndarray, n: int):
    return q[: n + 1], q[n + 3]


def _fd_steps(values: np.ndarray) -> np.ndarray:
    return _FD_STEP * np.maximum(1.0, np.abs(values))


def _object_mass_gram(jac: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Mass-weighted Gram matrices for batched point Jacobians (B,P,2,m)."""
    b, p, _, m = jac.shape
    flat = jac.reshape(b, 2 * p, m)
    weighted = (jac * masses[None, :, None, None]).reshape(b, 2 * p, m)
    return np.matmul(flat.transpose(0, 2, 1), weighted)


class _ObjectKin:
    """Batched positions/Jacobians of the lumped mass points for one parameter set."""

    def __init__(self, p: ObjectParams):
        self.p = p
        s, m = p.mass_schedule()
        self.s_key = tuple(s)
        self.masses = m

    def jacobians(self, thetas: np.ndarray, phis: np.ndarray):
        return point_jacobians(thetas, phis, self.s_key, self.p.n, self.p.L)


def _object_kin(p: ObjectParams) -> _ObjectKin:
    # ObjectParams is frozen/hashable; cache the schedule arrays per instance
    kin = getattr(p, "_kin_cache", None)
    if kin is None:
        kin = _ObjectKin(p)
        object.__setattr__(p, "_kin_cache", kin)
    return kin


def mass_matrix(q: FloatingBaseConfig, p: ObjectParams) -> np.ndarray:
    """Inertia matrix of the floating-base model, (n+4)x(n+4)."""
    kin = _object_kin(p)
    _, jac = kin.jacobians(q.theta[None, :], np.array([q.phi]))
    return _object_mass_gram(jac, kin.masses)[0]


def gravity_vector(q: FloatingBaseConfig, p: ObjectParams) -> np.ndarray:
    """Gravity force vector: g times the configuration gradient of total height."""
    kin = _object_kin(p)
    _, jac = kin.jacobians(q.theta[None, :], np.array([q.phi]))
    return p.gravity * (kin.masses @ jac[0, :, 1, :])


def elastic_force(theta: np.ndarray, p: ObjectParams) -> np.ndarray:
    """Bending restoring force k H (theta - theta_bar) on the curvature block."""
    return p.k * (elasticity_matrix(p.n) @ (np.asarray(theta) - p.theta_bar_vec))


def damping_force(theta_dot: np.ndarray, p: ObjectParams) -> np.ndarray:
    """Internal damping force beta H theta_dot on the curvature block."""
    return p.beta * (elasticity_matrix(p.n) @ np.asarray(theta_dot))


def _coriolis_from_tensor(dB: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """Coriolis matrix from the stacked derivative tensor dB[k] = dB/dq_k."""
    t1 = np.einsum("kij,k->ij", dB, qdot)
    t2 = np.einsum("jik,k->ij", dB, qdot)
    t3 = np.einsum("ijk,k->ij", dB, qdot)
    return 0.5 * (t1 + t2 - t3)


def _floating_terms(q_vec: np.ndarray, qdot: np.ndarray, p: ObjectParams, want_C=True):
    """One batched evaluation of (B, C, G) for the floating-base model.

    B depends only on (theta, phi); translations leave it unchanged, so the
    finite-difference sweep covers those n+2 coordinates only.
    """
    n = p.n
    m = n + 4
    theta, phi = _as_theta_phi(q_vec, n)
    kin = _object_kin(p)
    active = list(range(n + 1)) + [n + 3]
    if want_C:
        steps = _fd_steps(q_vec[active])
        thetas = np.repeat(theta[None, :], 2 * len(active) + 1, axis=0)
        phis = np.full(2 * len(active) + 1, phi)
        for idx, (a, h) in enumerate(zip(active, steps)):
            for sign, row in ((+1, 1 + 2 * idx), (-1, 2 + 2 * idx)):
                if a <= n:
                    thetas[row, a] += sign * h
                else:
                    phis[row] += sign * h
    else:
        thetas = theta[None, :]
        phis = np.array([phi])
    _, jac = kin.jacobians(thetas, phis)
    grams = _object_mass_gram(jac, kin.masses)
    B = 0.5 * (grams[0] + grams[0].T)
    G = p.gravity * (kin.masses @ jac[0, :, 1, :])
    if not want_C:
        return B, None, G
    dB = np.zeros((m, m, m))
    for idx, (a, h) in enumerate(zip(active, steps)):
        d = (grams[1 + 2 * idx] - grams[2 + 2 * idx]) / (2.0 * h)
        dB[a] = 0.5 * (d + d.T)
    C = _coriolis_from_tensor(dB, qdot)
    return B, C, G


def coriolis_matrix(q: FloatingBaseConfig, qdot, p: ObjectParams) -> np.ndarray:
    """Coriolis/centrifugal matrix C(q, qdot) of the floating-base model."""
    qdot = np.asarray(qdot, dtype=float)
    _, C, _ = _floating_terms(q.q, qdot, p)
    return C


def assemble(q: FloatingBaseConfig, qdot, p: ObjectParams) -> DynamicsTerms:
    """Assemble all dynamic terms of the floating-base model at (q, qdot)."""
    qdot = np.asarray(qdot, dtype=float)
    if len(qdot) != p.n + 4 or q.n != p.n:
        raise ValueError("state dimensions inconsistent with the parameter degree")
    B, C, G = _floating_terms(q.q, qdot, p)
    n = p.n
    k_force = np.zeros(n + 4)
    k_force[: n + 1] = elastic_force(q.theta, p)
    d_force = np.zeros(n + 4)
    d_force[: n + 1] = damping_force(qdot[: n + 1], p)
    return DynamicsTerms(B=B, Cqdot=C @ qdot, G=G, K_force=k_force, D_force=d_force)


def _spd_solve(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # Cholesky guards positive definiteness; the triangular back-substitution
    # is done by the generic solver, which has the lowest call overhead for
    # the tiny matrices involved here (n+4 <= 10).
    try:
        low = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError(f"mass matrix is not positive definite: {exc}") from exc
    return np.linalg.solve(low @ low.T, rhs)


def _solve_possibly_singular(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve, falling back to least squares when inertia blocks vanish.

    The fallback only accepts consistent systems (e.g. a massless object
    block with no residual force); anything else is a genuine singularity.
    """
    try:
        return _spd_solve(B, rhs)
    except SingularInertiaError:
        sol, *_ = np.linalg.lstsq(B, rhs, rcond=None)
        if np.linalg.norm(B @ sol - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
            raise
        return sol


def floating_base_accel(q: FloatingBaseConfig, qdot, wrench, p: ObjectParams) -> np.ndarray:
    """Acceleration of the floating-base model under a base wrench (F_x, F_y, tau_phi)."""
    qdot = np.asarray(qdot, dtype=float)
    wrench = np.asarray(wrench, dtype=float)
    n = p.n
    B, C, G = _floating_terms(q.q, qdot, p)
    rhs = -C @ qdot - G
    rhs[: n + 1] -= elastic_force(q.theta, p) + damping_force(qdot[: n + 1], p)
    rhs[n + 1 :] += wrench
    return _spd_solve(B, rhs)


def _zero_dyn_terms(theta: np.ndarray, theta_dot: np.ndarray, phi_star: float, p: ObjectParams):
    """(B_tt, C_tt, G_t) of the curvature block with the base frozen at phi_star."""
    from .kinematics import _arc_integrals

    n = p.n
    kin = _object_kin(p)
    steps = _fd_steps(theta)
    thetas = np.repeat(theta[None, :], 2 * (n + 1) + 1, axis=0)
    for i in range(n + 1):
        thetas[1 + 2 * i, i] += steps[i]
        thetas[2 + 2 * i, i] -= steps[i]
    phis = np.full(len(thetas), phi_star)
    ic, is_ = _arc_integrals(thetas, phis, kin.s_key, n)
    # curvature-block Jacobian rows are L*ic (x) and L*is (y); stack both
    # coordinate rows along the point axis for one Gram product
    rows = np.concatenate([ic[..., : n + 1], is_[..., : n + 1]], axis=1)
    w2 = np.concatenate([kin.masses, kin.masses]) * p.L * p.L
    grams = np.matmul(rows.transpose(0, 2, 1), rows * w2[None, :, None])
    B_tt = 0.5 * (grams[0] + grams[0].T)
    G_t = (p.gravity * p.L) * (kin.masses @ is_[0, :, : n + 1])
    dB = np.empty((n + 1, n + 1, n + 1))
    for i in range(n + 1):
        d = (grams[1 + 2 * i] - grams[2 + 2 * i]) / (2.0 * steps[i])
        dB[i] = 0.5 * (d + d.T)
    C_tt = _coriolis_from_tensor(dB, theta_dot)
    return B_tt, C_tt, G_t


def gravity_theta(theta, phi: float, p: ObjectParams) -> np.ndarray:
    """Curvature-block gravity force G_theta(theta, phi)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    kin = _object_kin(p)
    _, jac = kin.jacobians(theta[None, :], np.array([phi]))
    return p.gravity * (kin.masses @ jac[0, :, 1, : p.n + 1])


def gravity_theta_hessian(theta, phi: float, p: ObjectParams) -> np.ndarray:
    """Analytic derivative of G_theta w.r.t. theta (Hessian of gravity potential)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    kin = _object_kin(p)
    from .kinematics import _quad_grid  # shared cached quadrature grids

    n = p.n
    wt, psi = _quad_grid(kin.s_key, n)
    a = phi + np.einsum("i,pki->pk", theta, psi[..., : n + 1])
    cw = np.cos(a) * wt * kin.masses[:, None]
    return p.gravity * p.L * np.einsum("pk,pki,pkj->ij", cw, psi[..., : n + 1], psi[..., : n + 1])


def zero_dynamics_accel(theta, theta_dot, phi_star: float, p: ObjectParams) -> np.ndarray:
    """Curvature acceleration with the base frozen at orientation phi_star."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_dot = np.atleast_1d(np.asarray(theta_dot, dtype=float))
    B_tt, C_tt, G_t = _zero_dyn_terms(theta, theta_dot, phi_star, p)
    rhs = -C_tt @ theta_dot - G_t - elastic_force(theta, p) - damping_force(theta_dot, p)
    return _spd_solve(B_tt, rhs)


def base_wrench(q: FloatingBaseConfig, qdot, qddot, p: ObjectParams) -> np.ndarray:
    """Generalized base forces (F_x, F_y, tau_phi) sustaining the given motion.

    At rest this is exactly the base block of the gravity vector.
    """
    qdot = np.asarray(qdot, dtype=float)
    qddot = np.asarray(qddot, dtype=float)
    B, C, G = _floating_terms(q.q, qdot, p)
    lhs = B @ qddot + C @ qdot + G
    return lhs[p.n + 1 :]


def clamping_wrench(q: FloatingBaseConfig, qdot, p: ObjectParams) -> np.ndarray:
    """Wrench that freezes the base (zero base acceleration) at the current state."""
    qdot = np.asarray(qdot, dtype=float)
    n = p.n
    B, C, G = _floating_terms(q.q, qdot, p)
    h = C @ qdot + G
    h[: n + 1] += elastic_force(q.theta, p) + damping_force(qdot[: n + 1], p)
    tdd = _spd_solve(B[: n + 1, : n + 1], -h[: n + 1])
    return B[n + 1 :, : n + 1] @ tdd + h[n + 1 :]


def object_energies(q: FloatingBaseConfig, qdot, p: ObjectParams):
    """(kinetic, gravitational, elastic) energy of the floating-base object."""
    qdot = np.asarray(qdot, dtype=float)
    kin = _object_kin(p)
    pos_rel, jac = kin.jacobians(q.theta[None, :], np.array([q.phi]))
    B = _object_mass_gram(jac, kin.masses)[0]
    e_kin = 0.5 * qdot @ B @ qdot
    e_grav = p.gravity * float(kin.masses @ (pos_rel[0, :, 1] + q.y))
    dt = q.theta - p.theta_bar_vec
    e_el = 0.5 * p.k * dt @ elasticity_matrix(p.n) @ dt
    return float(e_kin), float(e_grav), float(e_el)


# ---------------------------------------------------------------------------
# coupled robot-object dynamics


def _coupled_jacobians(qr2d: np.ndarray, thetas: np.ndarray, robot: RobotModel, p: ObjectParams):
    """Batched point Jacobians of robot link masses and object lumps w.r.t. (q_r, theta).

    Returns (pos_links, jac_links, pos_obj, jac_obj) where the object
    Jacobians have shape (B, P, 2, 3+n+1): the base block of the object
    Jacobian is composed with the end-effector Jacobian of the arm.
    """
    n = p.n
    pos_l, jac_l_qr, ee_pose, ee_jac = link_chain_batch(qr2d, robot)
    kin = _object_kin(p)
    pos_rel, jac_o = kin.jacobians(thetas, ee_pose[:, 2])
    pos_obj = pos_rel + ee_pose[:, None, :2]
    bsz, pnum = pos_rel.shape[:2]
    jac = np.zeros((bsz, pnum, 2, 3 + n + 1))
    # d p / d q_r: translation through the arm plus rotation through phi = sum(q_r)
    jac[..., :3] = ee_jac[:, None, :2, :] + jac_o[..., n + 3][..., None] * ee_jac[:, None, 2:3, :]
    jac[..., 3:] = jac_o[..., : n + 1]
    jac_links = np.zeros((bsz, len(robot.link_lengths), 2, 3 + n + 1))
    jac_links[..., :3] = jac_l_qr
    return pos_l, jac_links, pos_obj, jac


def _coupled_B_G(qr2d, thetas, robot: RobotModel, p: ObjectParams):
    pos_l, jac_l, pos_o, jac_o = _coupled_jacobians(qr2d, thetas, robot, p)
    lm = np.asarray(robot.link_masses, dtype=float)
    om = _object_kin(p).masses
    B = _object_mass_gram(jac_l, lm) + _object_mass_gram(jac_o, om)
    G = p.gravity * (
        np.tensordot(lm, jac_l[:, :, 1, :], axes=(0, 1)) + np.tensordot(om, jac_o[:, :, 1, :], axes=(0, 1))
    )
    return B, G, (pos_l, pos_o)


def _coupled_terms(q_r: np.ndarray, theta: np.ndarray, qdot: np.ndarray, robot: RobotModel, p: ObjectParams):
    """(B, C, G) of the coupled system, coordinates ordered (q_r, theta)."""
    n = p.n
    m = 3 + n + 1
    q_full = np.concatenate([q_r, theta])
    steps = _fd_steps(q_full)
    cfgs = np.repeat(q_full[None, :], 2 * m + 1, axis=0)
    for i in range(m):
        cfgs[1 + 2 * i, i] += steps[i]
        cfgs[2 + 2 * i, i] -= steps[i]
    B_all, G_all, _ = _coupled_B_G(cfgs[:, :3], cfgs[:, 3:], robot, p)
    B = 0.5 * (B_all[0] + B_all[0].T)
    dB = np.empty((m, m, m))
    for i in range(m):
        d = (B_all[1 + 2 * i] - B_all[2 + 2 * i]) / (2.0 * steps[i])
        dB[i] = 0.5 * (d + d.T)
    C = _coriolis_from_tensor(dB, qdot)
    return B, C, G_all[0]


def coupled_gravity(q_r, theta, robot: RobotModel, p: ObjectParams) -> np.ndarray:
    """Gravity vector of the coupled system, rows ordered (q_r, theta)."""
    q_r = np.asarray(q_r, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _, G, _ = _coupled_B_G(q_r[None, :], theta[None, :], robot, p)
    return G[0]


def coupled_accel(q_r, theta, q_r_dot, theta_dot, tau, robot: RobotModel, p: ObjectParams) -> np.ndarray:
    """Acceleration of the coupled robot-object system under joint torques tau.

    Elastic and internal damping forces act only on the curvature block;
    torques (and optional viscous joint damping) act only on the robot
    block.  The two subsystems couple through inertia and gravity alone.
    """
    q_r = np.asarray(q_r, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    qdot = np.concatenate([np.asarray(q_r_dot, dtype=float), np.atleast_1d(np.asarray(theta_dot, dtype=float))])
    tau = np.asarray(tau, dtype=float)
    n = p.n
    B, C, G = _coupled_terms(q_r, theta, qdot, robot, p)
    rhs = -C @ qdot - G
    rhs[:3] += tau - np.asarray(robot.joint_damping, dtype=float) * qdot[:3]
    rhs[3:] -= elastic_force(theta, p) + damping_force(qdot[3:], p)
    return _solve_possibly_singular(B, rhs)


def coupled_energies(q_r, theta, q_r_dot, theta_dot, robot: RobotModel, p: ObjectParams):
    """(kinetic, gravitational, elastic) energy of the coupled system."""
    q_r = np.asarray(q_r, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    qdot = np.concatenate([np.asarray(q_r_dot, dtype=float), np.atleast_1d(np.asarray(theta_dot, dtype=float))])
    B, _, pos = _coupled_B_G(q_r[None, :], theta[None, :], robot, p)
    pos_l, pos_o = pos
    e_kin = 0.5 * qdot @ (0.5 * (B[0] + B[0].T)) @ qdot
    lm = np.asarray(robot.link_masses, dtype=float)
    om = _object_kin(p).masses
    e_grav = p.gravity * (float(lm @ pos_l[0, :, 1]) + float(om @ pos_o[0, :, 1]))
    dt = theta - p.theta_bar_vec
    e_el = 0.5 * p.k * dt @ elasticity_matrix(p.n) @ dt
    return float(e_kin), float(e_grav), float(e_el)
