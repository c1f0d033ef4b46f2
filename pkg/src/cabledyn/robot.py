"""Planar 3R arm standing in for the manipulator that holds the object.

Joint angles are measured so that the zero configuration points all links
along +y from the arm base; the end-effector orientation is the wrapped
sum of the joint angles, matching the object's base-angle convention
(phi = 0 means the grasped object hangs straight down).  Link masses are
lumped at each link's distal end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnreachablePoseError
from .params import Point2, wrap_angle


@dataclass(frozen=True)
class RobotModel:
    """Desk-scale planar 3R arm; reach matches the 0.5 m planning disk."""

    link_lengths: tuple = (0.25, 0.15, 0.10)
    link_masses: tuple = (3.0, 2.0, 1.0)
    base_position: Point2 = Point2(0.0, 0.333)
    joint_damping: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.link_lengths) != 3 or len(self.link_masses) != 3 or len(self.joint_damping) != 3:
            raise ValueError("robot model expects exactly three links")
        if min(self.link_lengths) <= 0 or min(self.link_masses) <= 0:
            raise ValueError("link lengths and masses must be positive")

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


def link_chain_batch(qr2d: np.ndarray, robot: RobotModel):
    """Batched chain kinematics for joint configurations of shape (B, 3).

    Returns:
        pos_links: (B, 3, 2) distal end of each link (the lumped mass points).
        jac_links: (B, 3, 2, 3) their Jacobians w.r.t. the joint angles.
        ee_pose: (B, 3) end-effector (x, y, phi) with phi unwrapped.
        ee_jac: (B, 3, 3) Jacobian of the end-effector pose.
    """
    qr2d = np.atleast_2d(np.asarray(qr2d, dtype=float))
    lengths = np.asarray(robot.link_lengths, dtype=float)
    cum = np.cumsum(qr2d, axis=1)                      # (B, 3) absolute link angles
    dirs = np.stack([-np.sin(cum), np.cos(cum)], axis=-1)          # (B, 3, 2)
    ddirs = np.stack([-np.cos(cum), -np.sin(cum)], axis=-1)        # d dirs / d angle
    seg = lengths[None, :, None] * dirs
    pos_links = np.cumsum(seg, axis=1) + robot.base_position.as_array()
    b = qr2d.shape[0]
    jac_links = np.zeros((b, 3, 2, 3))
    for i in range(3):
        for k in range(i + 1):
            # joint k rotates every link j >= k
            for j in range(k, i + 1):
                jac_links[:, i, :, k] += lengths[j] * ddirs[:, j, :]
    ee_pose = np.concatenate([pos_links[:, 2, :], cum[:, 2:3]], axis=1)
    ee_jac = np.concatenate([jac_links[:, 2, :, :], np.ones((b, 1, 3))], axis=1)
    return pos_links, jac_links, ee_pose, ee_jac


def robot_fk(q_r, robot: RobotModel):
    """End-effector pose (x, y, phi) of the arm; phi wrapped to [-pi, pi)."""
    q_r = np.asarray(q_r, dtype=float)
    _, _, ee_pose, _ = link_chain_batch(q_r[None, :], robot)
    x, y, phi = ee_pose[0]
    return float(x), float(y), wrap_angle(float(phi))


def robot_jacobian(q_r, robot: RobotModel) -> np.ndarray:
    """3x3 Jacobian of (x, y, phi) w.r.t. the joint angles."""
    q_r = np.asarray(q_r, dtype=float)
    _, _, _, ee_jac = link_chain_batch(q_r[None, :], robot)
    return ee_jac[0]


def robot_gravity(q_r, robot: RobotModel, gravity: float = 9.81) -> np.ndarray:
    """Joint torques holding the arm's own weight (gradient of link potential)."""
    q_r = np.asarray(q_r, dtype=float)
    _, jac_links, _, _ = link_chain_batch(q_r[None, :], robot)
    masses = np.asarray(robot.link_masses, dtype=float)
    return gravity * np.einsum("p,pj->j", masses, jac_links[0, :, 1, :])


def _wrist_target(pose, robot: RobotModel) -> np.ndarray:
    x, y, phi = pose
    l3 = robot.link_lengths[2]
    return np.array([x + l3 * math.sin(phi), y - l3 * math.cos(phi)])


def _analytic_branches(pose, robot: RobotModel):
    """Closed-form joint solutions (both elbow branches) for a planar 3R pose."""
    l1, l2, _ = robot.link_lengths
    w = _wrist_target(pose, robot) - robot.base_position.as_array()
    r2 = float(w @ w)
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if abs(c2) > 1.0 + 1e-12:
        return []
    c2 = min(1.0, max(-1.0, c2))
    # angle of the wrist direction in the links' +y-zero convention
    base_ang = math.atan2(w[0], w[1])
    sols = []
    for sign in (+1.0, -1.0):
        q2 = sign * math.acos(c2)
        # planar two-link: offset of link 1 from the wrist direction
        gamma = math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        q1 = base_ang - gamma
        q3 = pose[2] - q1 - q2
        sols.append(np.array([q1, q2, q3]))
    return sols


def robot_ik(pose, robot: RobotModel, q_init=None, tol: float = 1e-8, max_iter: int = 100,
             damping: float = 1e-6) -> np.ndarray:
    """Joint angles realizing an end-effector pose (x, y, phi).

    Damped-least-squares iteration from ``q_init``, which selects the elbow
    branch closest to the initial guess.  Raises UnreachablePoseError when
    the wrist target lies outside the arm's annulus.
    """
    pose = np.asarray(pose, dtype=float)
    l1, l2, _ = robot.link_lengths
    w = _wrist_target(pose, robot) - robot.base_position.as_array()
    r = float(np.hypot(*w))
    if r > l1 + l2 + 1e-9 or r < abs(l1 - l2) - 1e-9:
        raise UnreachablePoseError(
            f"wrist target at radius {r:.4f} m outside the reachable annulus "
            f"[{abs(l1 - l2):.4f}, {l1 + l2:.4f}] m"
        )
    if q_init is None:
        q = np.zeros(3)
    else:
        q = np.asarray(q_init, dtype=float).copy()

    def pose_error(qv):
        x, y, phi = robot_fk(qv, robot)
        return np.array([pose[0] - x, pose[1] - y, wrap_angle(pose[2] - phi)])

    for _ in range(max_iter):
        e = pose_error(q)
        if np.linalg.norm(e) < tol:
            return q
        J = robot_jacobian(q, robot)
        dq = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(3), e)
        # backtrack if a full step grows the error (keeps branch selection local)
        step = 1.0
        base = np.linalg.norm(e)
        for _ in range(30):
            if np.linalg.norm(pose_error(q + step * dq)) <= base:
                break
            step *= 0.5
        q = q + step * dq
    if np.linalg.norm(pose_error(q)) < tol:
        return q
    # stalled (e.g. straightened-arm singularity): fall back to the
    # closed-form branch nearest the initial guess (exact by construction)
    branches = _analytic_branches(pose, robot)
    ref = q_init if q_init is not None else np.zeros(3)
    for branch in sorted(branches, key=lambda b: np.linalg.norm(b - ref)):
        if np.linalg.norm(pose_error(branch)) < tol:
            return branch
    raise UnreachablePoseError(f"inverse kinematics stalled at pose error {np.linalg.norm(pose_error(q)):.2e}")
