"""Reset, step and observation assembly for batches of planar environments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .config import EnvConfig
from .physics import CAUSE_NAMES, CAUSE_NONE, CAUSE_TIME_LIMIT, kernel_params, step_kernel


@dataclass
class EnvState:
    """State of ``n`` environments; every field has a leading batch axis.

    ``theta`` is the continuously integrated trunk angle, so it is already
    unwrapped. ``contact`` holds one flag per foot followed by the trunk flag.
    """

    x: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    vx: np.ndarray
    vz: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qd_prev: np.ndarray
    contact: np.ndarray
    t: np.ndarray
    h_max: np.ndarray
    terminated: np.ndarray
    cause: np.ndarray
    command: np.ndarray
    steps: np.ndarray

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def copy(self) -> "EnvState":
        return EnvState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def take(self, idx) -> "EnvState":
        idx = np.atleast_1d(idx)
        return EnvState(**{f.name: getattr(self, f.name)[idx].copy() for f in fields(self)})

    def mechanical_energy(self, cfg: EnvConfig) -> np.ndarray:
        """Trunk kinetic plus potential energy (J); legs are massless."""
        ke = 0.5 * cfg.mass * (self.vx ** 2 + self.vz ** 2)
        if cfg.planar:
            ke = ke + 0.5 * cfg.trunk_inertia * self.omega ** 2
        return ke + cfg.mass * cfg.gravity * self.h


@dataclass
class Observation:
    prop: np.ndarray
    priv: np.ndarray

    def full(self) -> np.ndarray:
        return np.concatenate([self.prop, self.priv], axis=-1)


@dataclass
class StepResult:
    state: EnvState
    obs: Observation
    terminated: np.ndarray
    cause: np.ndarray

    @property
    def cause_names(self) -> list[str]:
        return [CAUSE_NAMES[int(c)] for c in self.cause]


@dataclass
class ExternalLoad:
    """Body-frame application points, world-frame forces and active windows, shape (n, k, 2)."""

    points: np.ndarray
    forces: np.ndarray
    windows: np.ndarray
    count: np.ndarray

    @classmethod
    def empty(cls, n: int, k: int = 1) -> "ExternalLoad":
        return cls(np.zeros((n, k, 2)), np.zeros((n, k, 2)), np.zeros((n, k, 2)), np.zeros(n, np.int64))

    @classmethod
    def constant(cls, pairs, t_start: float, duration: float) -> "ExternalLoad":
        """A single-environment load applying each (point, force) pair over one interval."""
        k = max(1, len(pairs))
        load = cls.empty(1, k)
        for e, (p, f) in enumerate(pairs):
            load.points[0, e] = p
            load.forces[0, e] = f
            load.windows[0, e] = (t_start, t_start + duration)
        load.count[0] = len(pairs)
        return load

    def magnitude_at(self, t: np.ndarray) -> np.ndarray:
        """Total applied force magnitude per environment at times ``t`` (N)."""
        total = np.zeros((len(self.count), 2))
        for e in range(self.points.shape[1]):
            on = (e < self.count) & (t + 1e-9 >= self.windows[:, e, 0]) & (t + 1e-9 < self.windows[:, e, 1])
            total += self.forces[:, e] * on[:, None]
        return np.hypot(total[:, 0], total[:, 1])


def check_command(cfg: EnvConfig, command) -> None:
    lo, hi = cfg.command_range if cfg.task == "jump" else (2 * np.pi, 2 * np.pi)
    if cfg.task == "jump":
        lo, hi = max(lo, 0.2), min(hi, 0.8)
    c = np.atleast_1d(command)
    if np.any(c < lo - 1e-9) or np.any(c > hi + 1e-9):
        raise ValueError(f"command {command} outside [{lo}, {hi}] for task {cfg.task}")


def _stand_pose(cfg: EnvConfig, q: np.ndarray):
    """Trunk height and angle that put every foot on the ground for joint positions ``q`` (n, nj)."""
    hips = np.asarray(cfg.hip_offsets, dtype=float)
    feet_x = np.broadcast_to(hips[:, 0], q.shape)
    feet_z = hips[:, 1] - cfg.leg_length(q)
    if cfg.planar and cfg.n_joints >= 2:
        theta = -np.arctan2(feet_z[:, 0] - feet_z[:, 1], feet_x[:, 0] - feet_x[:, 1])
    else:
        theta = np.zeros(q.shape[0])
    c, s = np.cos(theta), np.sin(theta)
    world_z = s[:, None] * feet_x + c[:, None] * feet_z
    return -world_z.min(axis=1), theta


def reset_batch(cfg: EnvConfig, commands, rng: np.random.Generator | None = None,
                noise: float | None = None) -> tuple[EnvState, Observation]:
    commands = np.asarray(commands, dtype=float).reshape(-1)
    check_command(cfg, commands)
    n, nj = commands.size, cfg.n_joints
    noise = cfg.reset_noise if noise is None else noise
    q = np.full((n, nj), cfg.q_stand)
    if noise > 0:
        if rng is None:
            raise ValueError("reset noise requires a random generator")
        q = np.clip(q + rng.uniform(-noise, noise, size=q.shape), cfg.q_min, cfg.q_max)
    h, theta = _stand_pose(cfg, q)
    zeros = np.zeros(n)
    contact = np.zeros((n, nj + 1), bool)
    contact[:, :nj] = True
    state = EnvState(
        x=zeros.copy(), h=h, theta=theta, vx=zeros.copy(), vz=zeros.copy(), omega=zeros.copy(),
        q=q, qd=np.zeros((n, nj)), qd_prev=np.zeros((n, nj)), contact=contact, t=zeros.copy(),
        h_max=h.copy(), terminated=np.zeros(n, bool), cause=np.zeros(n, np.int64), command=commands.copy(),
        steps=np.zeros(n, np.int64),
    )
    return state, build_observation(state, cfg, commands, np.zeros(n))


def env_reset(cfg: EnvConfig, command: float, rng: np.random.Generator | None = None,
              noise: float | None = None) -> tuple[EnvState, Observation]:
    """Single-environment reset (a batch of one)."""
    return reset_batch(cfg, [command], rng, noise)


def feet_heights(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    hips = np.asarray(cfg.hip_offsets, dtype=float)
    c, s = np.cos(state.theta)[:, None], np.sin(state.theta)[:, None]
    bz = hips[:, 1] - cfg.leg_length(state.q)
    return state.h[:, None] + s * hips[:, 0] + c * bz


def pd_targets(cfg: EnvConfig, action: np.ndarray) -> np.ndarray:
    """Joint position targets for normalised actions; actions are clipped to [-1, 1]."""
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    return np.clip(cfg.q_stand + cfg.action_scale * a, cfg.q_min, cfg.q_max)


def step_batch(state: EnvState, cfg: EnvConfig, action: np.ndarray, load: ExternalLoad | None = None,
               in_place: bool = False) -> EnvState:
    """Advance all live environments by one control step.

    ``action`` (n, n_joints) sets joint PD targets; the servo torque is evaluated
    every substep and saturated at ``cfg.torque_limit``.
    """
    s = state if in_place else state.copy()
    n = s.n
    if load is None:
        load = ExternalLoad.empty(n)
    targets = pd_targets(cfg, np.reshape(action, (n, cfg.n_joints)))
    alive = ~s.terminated
    s.qd_prev[alive] = s.qd[alive]
    step_kernel(s.x, s.h, s.theta, s.vx, s.vz, s.omega, s.q, s.qd, s.contact, s.h_max, s.t, s.terminated,
                s.cause, targets, load.points, load.forces, load.windows, load.count,
                kernel_params(cfg), np.asarray(cfg.hip_offsets, dtype=float), cfg.substeps, cfg.contact_iterations)
    s.steps[alive] += 1
    s.t[alive] = s.steps[alive] * cfg.dt_ctrl
    timed_out = alive & ~s.terminated & (s.steps >= cfg.episode_steps)
    s.terminated[timed_out] = True
    s.cause[timed_out] = CAUSE_TIME_LIMIT
    return s


def env_step(state: EnvState, cfg: EnvConfig, action, external_force=(), tau: float | None = None,
             load: ExternalLoad | None = None) -> StepResult:
    """Single-step interface; ``external_force`` is a list of (body point, world force) pairs
    held for the whole control step."""
    if load is None:
        load = ExternalLoad.constant(list(external_force), float(state.t[0]), cfg.dt_ctrl)
    nxt = step_batch(state, cfg, np.atleast_2d(action), load)
    if tau is None:
        tau = np.zeros(nxt.n)
    obs = build_observation(nxt, cfg, nxt.command, tau)
    return StepResult(nxt, obs, nxt.terminated.copy(), np.where(nxt.terminated, nxt.cause, CAUSE_NONE))


def gravity_in_body(theta: np.ndarray) -> np.ndarray:
    """World down direction expressed in the trunk frame."""
    return np.stack([-np.sin(theta), -np.cos(theta)], axis=-1)


def build_observation(state: EnvState, cfg: EnvConfig, command, tau) -> Observation:
    n = state.n
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    if np.any(tau < 0) or np.any(tau >= 1):
        raise ValueError("time encoding must lie in [0, 1)")
    command = np.broadcast_to(np.asarray(command, dtype=float), (n,))
    prop = np.concatenate([
        state.q, state.qd, gravity_in_body(state.theta), state.omega[:, None], command[:, None], tau[:, None],
    ], axis=1)
    second = state.h_max if cfg.task == "jump" else state.theta
    priv = np.stack([state.h, second], axis=1)
    return Observation(prop, priv)


def observation_normalizer(cfg: EnvConfig):
    """Fixed (offset, scale) pairs mapping teacher inputs to roughly unit range."""
    nj = cfg.n_joints
    c_mid = 0.5 * (cfg.command_range[0] + cfg.command_range[1]) if cfg.task == "jump" else 2 * np.pi
    off = np.concatenate([np.full(nj, cfg.q_stand), np.zeros(nj), [0.0, 0.0, 0.0, c_mid, 0.5],
                          [cfg.h_stand, cfg.h_stand if cfg.task == "jump" else 0.0]])
    scale = np.concatenate([np.ones(nj), np.full(nj, 0.1), [1.0, 1.0, 0.1, 5.0, 6.0],
                            [5.0, 2.0 if cfg.task == "jump" else 1.0 / np.pi]])
    return off, scale


def write_trace(path, rows: list[dict]) -> None:
    """Per-step state dump: t, h, theta, joint positions, contact flags, applied assist (N)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "h", "theta", "q", "contacts", "assist"])
        for r in rows:
            w.writerow([f"{r['t']:.4f}", f"{r['h']:.6f}", f"{r['theta']:.6f}",
                        " ".join(f"{v:.5f}" for v in r["q"]),
                        "".join("1" if c else "0" for c in r["contacts"]), f"{r['assist']:.3f}"])


def trace_row(state: EnvState, i: int, assist: float) -> dict:
    return {"t": float(state.t[i]), "h": float(state.h[i]), "theta": float(state.theta[i]),
            "q": state.q[i].tolist(), "contacts": state.contact[i].tolist(), "assist": float(assist)}
