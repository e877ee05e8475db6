"""Physical parameters of the planar jumper and flipper."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

TASKS = ("jump", "flip")
FLIP_VARIANTS = ("backflip", "lateral")


@dataclass(frozen=True)
class EnvConfig:
    """Geometry, actuation and timing of one environment.

    Legs are body-fixed telescopic struts pointing along the body -y axis. The
    actuated joint coordinate ``q`` (rad) maps to strut length through a lever:
    ``length = leg_min_length + leg_lever * q``. The jumper is the same rigid
    trunk with horizontal translation and rotation locked and a single leg.
    """

    task: str = "jump"
    variant: str = "jump"
    mass: float = 18.0
    gravity: float = 9.81
    dt_ctrl: float = 0.02
    dt_sim: float = 0.001
    episode_length: float = 3.0
    trunk_half_length: float = 0.15
    trunk_half_height: float = 0.05
    hip_offsets: tuple = ((0.0, -0.05),)
    leg_min_length: float = 0.0
    leg_lever: float = 0.2
    q_min: float = 0.0
    q_max: float = 2.5
    q_stand: float = 1.5
    joint_inertia: float = 0.08
    kp: float = 300.0
    kd: float = 6.0
    torque_limit: float = 120.0
    action_scale: float = 1.0
    friction: float = 0.8
    reset_noise: float = 0.05
    command_range: tuple = (0.2, 0.8)
    contact_iterations: int = 6
    planar: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        ratio = self.dt_ctrl / self.dt_sim
        if self.dt_sim <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_sim must divide dt_ctrl")
        for name in ("mass", "gravity", "torque_limit", "joint_inertia", "episode_length", "leg_lever"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.q_min <= self.q_stand <= self.q_max:
            raise ValueError("q_stand outside joint limits")

    @property
    def n_joints(self) -> int:
        return len(self.hip_offsets)

    @property
    def substeps(self) -> int:
        return int(round(self.dt_ctrl / self.dt_sim))

    @property
    def episode_steps(self) -> int:
        return int(round(self.episode_length / self.dt_ctrl))

    @property
    def trunk_inertia(self) -> float:
        a, b = self.trunk_half_length, self.trunk_half_height
        return self.mass * ((2 * a) ** 2 + (2 * b) ** 2) / 12.0

    def leg_length(self, q):
        return self.leg_min_length + self.leg_lever * np.asarray(q)

    @property
    def h_stand(self) -> float:
        """Trunk height with every leg at ``q_stand`` and the feet on the ground."""
        return float(self.leg_length(self.q_stand) - self.hip_offsets[0][1])

    @property
    def q_stand_vec(self) -> np.ndarray:
        return np.full(self.n_joints, self.q_stand)

    @property
    def prop_dim(self) -> int:
        return 2 * self.n_joints + 5

    @property
    def priv_dim(self) -> int:
        return 2

    def with_(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


def jumper_config(**kw) -> EnvConfig:
    return EnvConfig(**kw)


def flipper_config(variant: str = "backflip", **kw) -> EnvConfig:
    """Backflip (pitch) or lateral (roll) analog; they differ only in trunk length and hip spacing."""
    if variant not in FLIP_VARIANTS:
        raise ValueError(f"unknown flip variant {variant!r}")
    if variant == "backflip":
        geom = dict(trunk_half_length=0.3, hip_offsets=((0.25, -0.05), (-0.25, -0.05)))
    else:
        geom = dict(trunk_half_length=0.15, hip_offsets=((0.1, -0.05), (-0.1, -0.05)))
    base = dict(task="flip", variant=variant, planar=True, kp=600.0, torque_limit=200.0, command_range=(2 * np.pi, 2 * np.pi), **geom)
    base.update(kw)
    return EnvConfig(**base)


def make_env_config(task: str, variant: str | None = None, **kw) -> EnvConfig:
    if task == "jump":
        return jumper_config(**kw)
    return flipper_config(variant or "backflip", **kw)
