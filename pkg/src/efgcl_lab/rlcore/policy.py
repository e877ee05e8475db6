"""Diagonal Gaussian policy with a state-independent log standard deviation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import ConfigurationError, MlpCache, MlpParams, init_mlp, mlp_forward

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianPolicyOut:
    mean: np.ndarray
    log_std: np.ndarray


@dataclass
class GaussianPolicy:
    net: MlpParams
    log_std: np.ndarray
    log_std_bounds: tuple[float, float] = (LOG_STD_MIN, LOG_STD_MAX)

    @property
    def obs_dim(self) -> int:
        return self.net.sizes[0]

    @property
    def act_dim(self) -> int:
        return self.net.sizes[-1]

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.net.copy(), self.log_std.copy(), self.log_std_bounds)

    def arrays(self) -> list[np.ndarray]:
        return self.net.arrays() + [self.log_std]

    def project(self) -> None:
        """Clamp the log-std parameters back into their bounds."""
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    def __call__(self, obs: np.ndarray, cache: MlpCache | None = None) -> GaussianPolicyOut:
        mean = mlp_forward(self.net, obs, cache)
        return GaussianPolicyOut(mean, np.clip(self.log_std, *self.log_std_bounds))


def make_policy(obs_dim: int, act_dim: int, rng: np.random.Generator, hidden=(64, 64),
                init_log_std: float = -0.5) -> GaussianPolicy:
    net = init_mlp([obs_dim, *hidden, act_dim], rng, out_gain=0.01)
    return GaussianPolicy(net, np.full(act_dim, float(init_log_std)))


def gaussian_log_prob(action: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over the last axis."""
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * _LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + _LOG_2PI))


def sample_action(policy_out: GaussianPolicyOut, noise: np.ndarray):
    """Reparameterised sample ``mean + exp(log_std) * noise`` and its log-probability."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-1] != policy_out.mean.shape[-1]:
        raise ConfigurationError(f"noise has {noise.shape[-1]} dims, policy has {policy_out.mean.shape[-1]}")
    action = policy_out.mean + np.exp(policy_out.log_std) * noise
    return action, gaussian_log_prob(action, policy_out.mean, policy_out.log_std)
