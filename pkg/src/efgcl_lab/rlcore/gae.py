"""Rollout storage and generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    value: float
    done: bool
    assist: float = 0.0  # magnitude of the applied external force, N


@dataclass
class RolloutBatch:
    """Time-major rollout arrays of shape (T, n_envs, ...).

    ``dones[t, i]`` marks a terminal transition: no value is bootstrapped across it.
    ``mask`` flags real samples; padded slots after an early episode end carry
    ``mask == False`` and are ignored by the update.
    """

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    mask: np.ndarray
    gamma: float = 0.99
    lam: float = 0.95
    assist: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError(f"gamma={self.gamma}, lambda={self.lam} must lie in [0, 1]")

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_envs(self) -> int:
        return self.rewards.shape[1]

    @classmethod
    def from_sequences(cls, sequences: list[list[Transition]], gamma=0.99, lam=0.95) -> "RolloutBatch":
        """Pack per-environment transition lists, padding shorter ones with masked slots."""
        if not sequences or not any(sequences):
            raise ValueError("empty rollout batch")
        T = max(len(s) for s in sequences)
        n = len(sequences)
        first = next(s[0] for s in sequences if s)
        obs = np.zeros((T, n, np.size(first.obs)))
        act = np.zeros((T, n, np.size(first.action)))
        lp, rew, val, assist = (np.zeros((T, n)) for _ in range(4))
        done = np.zeros((T, n), bool)
        mask = np.zeros((T, n), bool)
        for i, seq in enumerate(sequences):
            for t, tr in enumerate(seq):
                obs[t, i] = tr.obs
                act[t, i] = tr.action
                lp[t, i], rew[t, i], val[t, i] = tr.log_prob, tr.reward, tr.value
                done[t, i], assist[t, i] = tr.done, tr.assist
                mask[t, i] = True
        return cls(obs, act, lp, rew, val, done, mask, gamma, lam, assist)


def compute_gae(batch: RolloutBatch, bootstrap_values: np.ndarray):
    """Advantages and value targets by the backward GAE recursion.

    ``bootstrap_values[i]`` is V of the state following the last *unmasked* step
    of column ``i``; it is ignored when that step is terminal. Returns
    ``(advantages, returns)`` with the batch's (T, n_envs) shape.
    """
    if batch.rewards.size == 0:
        raise ValueError("empty rollout batch")
    rewards, values = batch.rewards, batch.values
    T, n = rewards.shape
    bootstrap_values = np.broadcast_to(np.asarray(bootstrap_values, dtype=float), (n,))
    gamma, lam = batch.gamma, batch.lam
    adv = np.zeros((T, n))
    running = np.zeros(n)
    next_value = bootstrap_values.copy()
    mask = batch.mask
    for t in range(T - 1, -1, -1):
        live = ~batch.dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = np.where(mask[t], delta + gamma * lam * live * running, 0.0)
        adv[t] = running
        # padded slots pass the bootstrap value through to the last real step
        next_value = np.where(mask[t], values[t], next_value)
    return adv, adv + values
