"""Task-agnostic reward: task progress, standing, angular regularization, physical penalties.

Jump and flip share every weight and functional form; only the tracked
variable, its target and its normalization differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .envs.config import EnvConfig
from .envs.core import EnvState


@dataclass(frozen=True)
class RewardConfig:
    target_variable: str  # "h_max_gain" (m) or "theta" (rad)
    x_target: float | None  # None: taken from the episode command
    s_x: float
    lambda_omega: float = 0.1
    q_stand: float = 1.5
    stand_h_scale: float = 0.01
    stand_q_scale: float = 0.25
    collision_coef: float = -1.0
    termination_coef: float = -100.0
    joint_vel_coef: float = -5e-4
    joint_acc_coef: float = -1e-7

    def __post_init__(self):
        if self.s_x <= 0:
            raise ValueError("s_x must be positive")

    def differing_fields(self, other: "RewardConfig") -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) != getattr(other, f.name)]


def reward_config(cfg: EnvConfig) -> RewardConfig:
    if cfg.task == "jump":
        return RewardConfig("h_max_gain", None, 0.01, q_stand=cfg.q_stand)
    return RewardConfig("theta", 2 * math.pi, math.pi ** 2, q_stand=cfg.q_stand)


@dataclass
class RewardInputs:
    x: np.ndarray
    h_dev: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    omega_non_target: np.ndarray
    body_contacts: np.ndarray
    terminated: np.ndarray
    x_target: np.ndarray | float | None = None


def rho_task(x, x_target, s_x: float):
    if s_x <= 0:
        raise ValueError("s_x must be positive")
    d = np.asarray(x, dtype=float) - x_target
    return np.exp(-(d * d) / s_x)


def rho_stand(h_dev, q, q_stand, h_scale: float = 0.01, q_scale: float = 0.25):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    dq = q - q_stand
    h_dev = np.asarray(h_dev, dtype=float)
    return np.exp(-h_dev ** 2 / h_scale) + np.exp(-np.sum(dq * dq, axis=-1) / q_scale)


def reward_terms(inputs: RewardInputs, config: RewardConfig) -> dict[str, np.ndarray]:
    """Per-term contributions; they sum to :func:`total_reward`."""
    target = config.x_target if config.x_target is not None else inputs.x_target
    if target is None:
        raise ValueError("no target value: set RewardConfig.x_target or RewardInputs.x_target")
    task = rho_task(inputs.x, target, config.s_x)
    stand = rho_stand(inputs.h_dev, inputs.q, config.q_stand, config.stand_h_scale, config.stand_q_scale)
    w = np.atleast_1d(np.asarray(inputs.omega_non_target, dtype=float))
    qd = np.atleast_1d(np.asarray(inputs.qd, dtype=float))
    qdd = np.atleast_1d(np.asarray(inputs.qdd, dtype=float))
    return {
        "task": task,
        "task_x_stand": task * stand,
        "angular": config.lambda_omega * -np.sum(w * w, axis=-1),
        "collision": config.collision_coef * np.asarray(inputs.body_contacts, dtype=float),
        "termination": config.termination_coef * np.asarray(inputs.terminated, dtype=float),
        "joint_vel": config.joint_vel_coef * np.sum(qd * qd, axis=-1),
        "joint_acc": config.joint_acc_coef * np.sum(qdd * qdd, axis=-1),
    }


def total_reward(inputs: RewardInputs, config: RewardConfig):
    terms = reward_terms(inputs, config)
    return sum(terms.values())


def inputs_from_state(state: EnvState, cfg: EnvConfig, body_contact_terminal: np.ndarray) -> RewardInputs:
    """Reward inputs after a control step; ``body_contact_terminal`` flags trunk-contact terminations."""
    x = state.h_max - cfg.h_stand if cfg.task == "jump" else state.theta
    qdd = (state.qd - state.qd_prev) / cfg.dt_ctrl
    return RewardInputs(
        x=x, h_dev=state.h - cfg.h_stand, q=state.q, qd=state.qd, qdd=qdd,
        # planar bodies rotate only about the target axis
        omega_non_target=np.zeros((state.n, 1)),
        body_contacts=state.contact[:, -1].astype(float), terminated=body_contact_terminal,
        x_target=state.command if cfg.task == "jump" else None,
    )
