"""Time integration of the object models with a per-sample energy audit.

The integrator state is augmented with two work integrals (injected by the
base wrench or joint torques, and dissipated internally), so the energy
balance E(t) - E(0) = W_in(t) - W_diss(t) closes to integrator accuracy at
every sample without any separate power quadrature.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.integrate

from . import dynamics as dyn
from .errors import StepFailureError
from .kinematics import elasticity_matrix, point_jacobians
from .params import FloatingBaseConfig, ObjectParams
from .robot import RobotModel, link_chain_batch


@dataclass
class Trajectory:
    """Time-stamped simulation output with an energy audit.

    ``states``/``velocities`` are (m, dof) arrays in floating-base
    coordinates (theta..., x, y, phi); ``energies`` stacks
    (kinetic, gravitational, elastic, total) per sample.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    energies: np.ndarray
    wrench: np.ndarray | None = None
    work_input: np.ndarray | None = None
    work_dissipated: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        m = len(self.times)
        if any(len(a) != m for a in (self.states, self.velocities, self.energies)):
            raise ValueError("trajectory arrays must share one length")
        if self.wrench is not None and len(self.wrench) != m:
            raise ValueError("wrench series length mismatch")
        if m > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    def energy_drift(self) -> float:
        """Relative spread of audited total energy over the trajectory."""
        e = self.energies[:, 3]
        scale = max(np.abs(e).max(), np.abs(self.energies[:, 0]).max(), 1e-12)
        return float((e.max() - e.min()) / scale)


def _resolve_wrench(wrench):
    if wrench is None:
        return lambda t, q, qd, p: np.zeros(3)
    if isinstance(wrench, str):
        if wrench != "clamp":
            raise ValueError(f"unknown wrench spec: {wrench!r}")
        return lambda t, q, qd, p: dyn.clamping_wrench(FloatingBaseConfig.from_q(q), qd, p)
    if callable(wrench):
        return lambda t, q, qd, p: np.asarray(wrench(t, q, qd), dtype=float)
    const = np.asarray(wrench, dtype=float)
    if const.shape != (3,):
        raise ValueError("constant wrench must have three components")
    return lambda t, q, qd, p: const


def _run_ode(rhs, y0, t_span, method, dt, rtol, atol, sample_dt):
    t0, t1 = t_span
    if not (np.isfinite(t0) and np.isfinite(t1) and t1 > t0):
        raise ValueError("t_span must be a finite, increasing interval")
    if method == "rk4":
        if dt <= 0:
            raise ValueError("fixed step dt must be positive")
        stride = max(1, int(round((sample_dt or dt) / dt)))
        n_steps = int(np.ceil((t1 - t0) / dt - 1e-12))
        times = [t0]
        ys = [np.asarray(y0, dtype=float)]
        t, y = t0, np.asarray(y0, dtype=float)
        for i in range(n_steps):
            h = min(dt, t1 - t)
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t + h
            if not np.all(np.isfinite(y)):
                raise StepFailureError(f"state diverged at t={t:.6g} s")
            if (i + 1) % stride == 0 or i == n_steps - 1:
                times.append(t)
                ys.append(y)
        return np.array(times), np.array(ys)
    if method == "rk45":
        t_eval = np.arange(t0, t1, sample_dt or 1e-2)
        if t_eval[-1] < t1 - 1e-12:
            t_eval = np.append(t_eval, t1)
        sol = scipy.integrate.solve_ivp(
            rhs, (t0, t1), np.asarray(y0, dtype=float), method="RK45",
            rtol=rtol, atol=atol if atol is not None else rtol * 1e-2, t_eval=t_eval,
        )
        if not sol.success:
            raise StepFailureError(f"adaptive step control failed: {sol.message}")
        return sol.t, sol.y.T
    raise ValueError(f"unknown integration method: {method!r}")


def simulate_floating_base(q0: FloatingBaseConfig, qdot0, p: ObjectParams, t_span,
                           wrench=None, method: str = "rk4", dt: float = 1e-3,
                           rtol: float = 1e-8, atol=None, sample_dt=None,
                           record_wrench: bool = True) -> Trajectory:
    """Integrate the floating-base model under a base wrench.

    ``wrench`` may be None (free), "clamp" (hold the base still), a constant
    triple, or a callable (t, q, qdot) -> (F_x, F_y, tau_phi).
    """
    n = p.n
    dof = n + 4
    wfun = _resolve_wrench(wrench)
    H = elasticity_matrix(n)

    def rhs(t, y):
        q, qd = y[:dof], y[dof : 2 * dof]
        cfg = FloatingBaseConfig.from_q(q)
        w = wfun(t, q, qd, p)
        acc = dyn.floating_base_accel(cfg, qd, w, p)
        td = qd[: n + 1]
        out = np.empty(2 * dof + 2)
        out[:dof] = qd
        out[dof : 2 * dof] = acc
        out[2 * dof] = w @ qd[n + 1 :]
        out[2 * dof + 1] = p.beta * (td @ H @ td)
        return out

    if isinstance(t_span, (int, float)):
        t_span = (0.0, float(t_span))
    y0 = np.concatenate([q0.q, np.asarray(qdot0, dtype=float), [0.0, 0.0]])
    times, ys = _run_ode(rhs, y0, t_span, method, dt, rtol, atol, sample_dt)
    states = ys[:, :dof]
    velocities = ys[:, dof : 2 * dof]
    energies = _floating_energies(states, velocities, p)
    wr = None
    if record_wrench:
        wr = np.array([wfun(t, q, qd, p) for t, q, qd in zip(times, states, velocities)])
    return Trajectory(times=times, states=states, velocities=velocities, energies=energies,
                      wrench=wr, work_input=ys[:, 2 * dof], work_dissipated=ys[:, 2 * dof + 1])


def simulate_zero_dynamics(theta0, thetadot0, phi_star: float, p: ObjectParams, t_span,
                           base_xy=(0.0, 0.0), method: str = "rk4", dt: float = 1e-3,
                           rtol: float = 1e-8, atol=None, sample_dt=None,
                           record_wrench: bool = True) -> Trajectory:
    """Integrate the curvature dynamics with the base frozen at phi_star.

    The returned trajectory is padded to full floating-base coordinates
    (constant base pose) so it shares the CSV schema of the other systems;
    the recorded wrench is the clamping reaction at the base.
    """
    n = p.n
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    thetadot0 = np.atleast_1d(np.asarray(thetadot0, dtype=float))
    H = elasticity_matrix(n)

    def rhs(t, y):
        th, td = y[: n + 1], y[n + 1 : 2 * (n + 1)]
        acc = dyn.zero_dynamics_accel(th, td, phi_star, p)
        out = np.empty(2 * (n + 1) + 1)
        out[: n + 1] = td
        out[n + 1 : 2 * (n + 1)] = acc
        out[-1] = p.beta * (td @ H @ td)
        return out

    if isinstance(t_span, (int, float)):
        t_span = (0.0, float(t_span))
    y0 = np.concatenate([theta0, thetadot0, [0.0]])
    times, ys = _run_ode(rhs, y0, t_span, method, dt, rtol, atol, sample_dt)
    m = len(times)
    states = np.empty((m, n + 4))
    states[:, : n + 1] = ys[:, : n + 1]
    states[:, n + 1] = base_xy[0]
    states[:, n + 2] = base_xy[1]
    states[:, n + 3] = phi_star
    velocities = np.zeros((m, n + 4))
    velocities[:, : n + 1] = ys[:, n + 1 : 2 * (n + 1)]
    energies = _floating_energies(states, velocities, p)
    wr = None
    if record_wrench:
        wr = np.array([
            dyn.clamping_wrench(FloatingBaseConfig.from_q(q), qd, p)
            for q, qd in zip(states, velocities)
        ])
    return Trajectory(times=times, states=states, velocities=velocities, energies=energies,
                      wrench=wr, work_input=np.zeros(m), work_dissipated=ys[:, -1])


def simulate_coupled(q_r0, theta0, q_r_dot0, thetadot0, robot: RobotModel, p: ObjectParams,
                     t_span, tau=None, method: str = "rk45", dt: float = 1e-3,
                     rtol: float = 1e-8, atol=None, sample_dt=None) -> Trajectory:
    """Integrate the coupled robot-object system under a joint torque law.

    ``tau`` is a callable (t, q_r, theta, q_r_dot, theta_dot) -> (3,) or a
    constant triple (zero if omitted).  States/velocities hold the coupled
    coordinates (q_r, theta); ``extras['ee_pose']`` caches the end-effector
    pose per sample.
    """
    n = p.n
    dof = 3 + n + 1
    if tau is None:
        tau_fun = lambda t, qr, th, qrd, thd: np.zeros(3)
    elif callable(tau):
        tau_fun = tau
    else:
        const = np.asarray(tau, dtype=float)
        tau_fun = lambda t, qr, th, qrd, thd: const
    H = elasticity_matrix(n)
    jd = np.asarray(robot.joint_damping, dtype=float)

    def rhs(t, y):
        qr, th = y[:3], y[3:dof]
        qrd, thd = y[dof : dof + 3], y[dof + 3 : 2 * dof]
        torque = np.asarray(tau_fun(t, qr, th, qrd, thd), dtype=float)
        acc = dyn.coupled_accel(qr, th, qrd, thd, torque, robot, p)
        out = np.empty(2 * dof + 2)
        out[:dof] = y[dof : 2 * dof]
        out[dof : 2 * dof] = acc
        out[2 * dof] = torque @ qrd
        out[2 * dof + 1] = p.beta * (thd @ H @ thd) + jd @ (qrd * qrd)
        return out

    if isinstance(t_span, (int, float)):
        t_span = (0.0, float(t_span))
    y0 = np.concatenate([
        np.asarray(q_r0, dtype=float), np.atleast_1d(np.asarray(theta0, dtype=float)),
        np.asarray(q_r_dot0, dtype=float), np.atleast_1d(np.asarray(thetadot0, dtype=float)),
        [0.0, 0.0],
    ])
    times, ys = _run_ode(rhs, y0, t_span, method, dt, rtol, atol, sample_dt)
    states = ys[:, :dof]
    velocities = ys[:, dof : 2 * dof]
    energies = np.array([
        _total_energy_coupled(q, qd, robot, p) for q, qd in zip(states, velocities)
    ])
    _, _, ee_pose, _ = link_chain_batch(states[:, :3], robot)
    return Trajectory(times=times, states=states, velocities=velocities, energies=energies,
                      work_input=ys[:, 2 * dof], work_dissipated=ys[:, 2 * dof + 1],
                      extras={"ee_pose": ee_pose})


def _total_energy_coupled(q, qd, robot, p):
    n = p.n
    ek, eg, ee = dyn.coupled_energies(q[:3], q[3:], qd[:3], qd[3:], robot, p)
    return np.array([ek, eg, ee, ek + eg + ee])


def _floating_energies(states: np.ndarray, velocities: np.ndarray, p: ObjectParams) -> np.ndarray:
    """Batched (kinetic, gravity, elastic, total) energies for floating-base samples."""
    n = p.n
    kin = dyn._object_kin(p)
    thetas = states[:, : n + 1]
    pos_rel, jac = point_jacobians(thetas, states[:, n + 3], kin.s_key, n, p.L)
    grams = dyn._object_mass_gram(jac, kin.masses)
    e_kin = 0.5 * np.einsum("bi,bij,bj->b", velocities, grams, velocities)
    heights = pos_rel[:, :, 1] + states[:, n + 2 : n + 3]
    e_grav = p.gravity * (heights @ kin.masses)
    dth = thetas - p.theta_bar_vec
    e_el = 0.5 * p.k * np.einsum("bi,ij,bj->b", dth, elasticity_matrix(n), dth)
    total = e_kin + e_grav + e_el
    return np.stack([e_kin, e_grav, e_el, total], axis=1)


def integrate(system: str, initial_state, t_span, p: ObjectParams, **options) -> Trajectory:
    """Dispatching front end over the three simulation systems.

    ``system`` is one of "floating_base", "zero_dynamics" or "coupled".
    ``initial_state`` is (q0, qdot0) for the floating base, (theta0,
    thetadot0, phi_star) for the zero dynamics, and (q_r0, theta0,
    q_r_dot0, thetadot0) for the coupled system (pass robot= in options).
    """
    if system == "floating_base":
        q0, qdot0 = initial_state
        if not isinstance(q0, FloatingBaseConfig):
            q0 = FloatingBaseConfig.from_q(q0)
        return simulate_floating_base(q0, qdot0, p, t_span, **options)
    if system == "zero_dynamics":
        theta0, thetadot0, phi_star = initial_state
        return simulate_zero_dynamics(theta0, thetadot0, phi_star, p, t_span, **options)
    if system == "coupled":
        q_r0, theta0, q_r_dot0, thetadot0 = initial_state
        robot = options.pop("robot", None) or RobotModel()
        return simulate_coupled(q_r0, theta0, q_r_dot0, thetadot0, robot, p, t_span, **options)
    raise ValueError(f"unknown system {system!r}")


# ---------------------------------------------------------------------------
# CSV interchange


def trajectory_header(n: int, with_wrench: bool, extra_cols=()) -> list[str]:
    cols = ["t"]
    cols += [f"theta{i}" for i in range(n + 1)] + ["x", "y", "phi"]
    cols += [f"dtheta{i}" for i in range(n + 1)] + ["dx", "dy", "dphi"]
    cols += ["E_kin", "E_grav", "E_el", "E_tot"]
    if with_wrench:
        cols += ["Fx", "Fy", "tauphi"]
    cols += list(extra_cols)
    return cols


def write_trajectory_csv(traj: Trajectory, path, n: int, extra: dict | None = None) -> None:
    """Write a trajectory as CSV (>= 9 significant digits), atomically."""
    extra = extra or {}
    header = trajectory_header(n, traj.wrench is not None, extra.keys())
    rows = []
    for i in range(len(traj.times)):
        row = [traj.times[i], *traj.states[i], *traj.velocities[i], *traj.energies[i]]
        if traj.wrench is not None:
            row.extend(traj.wrench[i])
        for col in extra.values():
            row.append(col[i])
        rows.append(",".join(f"{v:.12g}" for v in row))
    text = ",".join(header) + "\n" + "\n".join(rows) + "\n"
    atomic_write_text(path, text)


def read_trajectory_csv(path) -> Trajectory:
    """Read a trajectory CSV produced by write_trajectory_csv."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty trajectory CSV: {path}") from None
        data = np.array([[float(v) for v in row] for row in reader if row])
    if data.size == 0:
        raise ValueError(f"trajectory CSV has no samples: {path}")
    idx = {name: i for i, name in enumerate(header)}
    n = sum(1 for name in header if name.startswith("theta")) - 1
    if n < 0 or "t" not in idx:
        raise ValueError(f"not a trajectory CSV (header {header[:6]}...)")
    dof = n + 4
    states = data[:, 1 : 1 + dof]
    velocities = data[:, 1 + dof : 1 + 2 * dof]
    energies = data[:, 1 + 2 * dof : 5 + 2 * dof]
    wrench = None
    if "Fx" in idx:
        wrench = data[:, idx["Fx"] : idx["Fx"] + 3]
    return Trajectory(times=data[:, 0], states=states, velocities=velocities,
                      energies=energies, wrench=wrench)


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
