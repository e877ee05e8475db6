"""Clipped-surrogate PPO update with analytic gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .adam import Adam, clip_grad_norm
from .gae import RolloutBatch
from .mlp import MlpCache, MlpParams, mlp_backward, mlp_forward
from .policy import GaussianPolicy, gaussian_entropy, gaussian_log_prob

log = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    # Defaults are desk-scale choices, not values taken from any publication.
    lr: float = 3e-4
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 1.0
    gamma: float = 0.99
    lam: float = 0.95
    reward_scale: float = 0.01  # rewards are multiplied by this before advantage estimation
    target_kl: float = 0.02  # policy steps stop for the batch once approx KL passes 1.5x this; 0 disables

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("epochs and minibatches must be >= 1")


@dataclass
class PpoStats:
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    value_loss: float = 0.0
    policy_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    aborted: bool = False
    message: str = ""


def ppo_clip_objective(log_prob_new, log_prob_old, advantage, clip_eps):
    """``min(r A, clip(r, 1-eps, 1+eps) A)`` with ``r = exp(new - old)``; to be maximised."""
    ratio = np.exp(np.asarray(log_prob_new) - np.asarray(log_prob_old))
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


def policy_loss_and_grads(policy: GaussianPolicy, obs, actions, old_log_probs, advantages,
                          clip_eps: float, entropy_coef: float = 0.0):
    """Loss ``-mean(surrogate) - entropy_coef * H`` and its gradient w.r.t. ``policy.arrays()``."""
    cache = MlpCache()
    out = policy(obs, cache)
    std_inv = np.exp(-out.log_std)
    z = (actions - out.mean) * std_inv
    logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(out.log_std) - 0.5 * out.mean.shape[-1] * np.log(2 * np.pi)
    ratio = np.exp(logp - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    n = len(advantages)
    entropy = gaussian_entropy(out.log_std)
    loss = -surrogate.mean() - entropy_coef * entropy

    # d(-mean surrogate)/d logp: only the unclipped branch carries gradient
    active = unclipped <= clipped
    g_logp = -(active * advantages * ratio) / n
    g_mean = g_logp[:, None] * z * std_inv
    g_log_std = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0) - entropy_coef
    lo, hi = policy.log_std_bounds
    g_log_std = np.where((policy.log_std < lo) | (policy.log_std > hi), 0.0, g_log_std)
    gw, gb, _ = mlp_backward(policy.net, cache, g_mean)
    grads = []
    for w, b in zip(gw, gb):
        grads += [w, b]
    grads.append(g_log_std)
    info = {
        "ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean(old_log_probs - logp)),
        "entropy": entropy,
        "surrogate": float(surrogate.mean()),
    }
    return float(loss), grads, info


def value_loss_and_grads(value: MlpParams, obs, returns, value_coef: float = 1.0):
    """Loss ``value_coef * mean((V - R)^2)`` and gradient w.r.t. ``value.arrays()``."""
    cache = MlpCache()
    v = mlp_forward(value, obs, cache)[:, 0]
    err = v - returns
    loss = value_coef * float(np.mean(err * err))
    g = (2.0 * value_coef / len(err)) * err[:, None]
    gw, gb, _ = mlp_backward(value, cache, g)
    grads = []
    for w, b in zip(gw, gb):
        grads += [w, b]
    return loss, grads, float(np.mean(err * err))


class PpoTrainer:
    """Owns the policy, value network and their optimizer state across updates."""

    def __init__(self, policy: GaussianPolicy, value: MlpParams, config: PpoConfig):
        self.policy = policy
        self.value = value
        self.config = config
        self.pi_opt = Adam(policy.arrays(), lr=config.lr)
        self.v_opt = Adam(value.arrays(), lr=config.lr)

    def values(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.value, obs)[..., 0]

    def update(self, batch: RolloutBatch, rng: np.random.Generator) -> PpoStats:
        """Run the configured epochs of minibatch updates on one batch.

        ``batch.advantages`` and ``batch.returns`` must already be filled in.
        On a non-finite gradient the parameters are restored and the update is
        abandoned; the returned stats carry ``aborted=True``.
        """
        cfg = self.config
        if batch.advantages is None or batch.returns is None:
            raise ValueError("compute advantages before calling update")
        m = batch.mask.reshape(-1)
        obs = batch.obs.reshape(-1, batch.obs.shape[-1])[m]
        act = batch.actions.reshape(-1, batch.actions.shape[-1])[m]
        old_lp = batch.log_probs.reshape(-1)[m]
        adv = normalize_advantages(batch.advantages.reshape(-1)[m])
        ret = batch.returns.reshape(-1)[m]
        n = len(adv)
        if n == 0:
            return PpoStats(message="no samples")

        snapshot = ([a.copy() for a in self.policy.arrays()], [a.copy() for a in self.value.arrays()],
                    self.pi_opt.state(), self.v_opt.state())
        ratios, clips, vlosses, plosses, kls = [], [], [], [], []
        entropy = 0.0
        mb = max(1, n // cfg.minibatches)
        policy_frozen = False
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for k in range(cfg.minibatches):
                idx = perm[k * mb:(k + 1) * mb] if k < cfg.minibatches - 1 else perm[k * mb:]
                if len(idx) == 0:
                    continue
                ploss, pgrads, info = policy_loss_and_grads(
                    self.policy, obs[idx], act[idx], old_lp[idx], adv[idx], cfg.clip_eps, cfg.entropy_coef)
                vloss, vgrads, mse = value_loss_and_grads(self.value, obs[idx], ret[idx], cfg.value_coef)
                pnorm = clip_grad_norm(pgrads, cfg.max_grad_norm)
                vnorm = clip_grad_norm(vgrads, cfg.max_grad_norm)
                if not (np.isfinite(pnorm) and np.isfinite(vnorm)):
                    self._restore(snapshot)
                    msg = f"non-finite gradient (policy norm {pnorm}, value norm {vnorm}); update aborted"
                    log.warning(msg)
                    return PpoStats(aborted=True, message=msg)
                if cfg.target_kl > 0 and info["approx_kl"] > 1.5 * cfg.target_kl:
                    policy_frozen = True
                if not policy_frozen:
                    self.pi_opt.step(pgrads)
                    self.policy.project()
                self.v_opt.step(vgrads)
                ratios.append(info["ratio"])
                clips.append(info["clip_fraction"])
                kls.append(info["approx_kl"])
                plosses.append(ploss)
                vlosses.append(mse)
                entropy = info["entropy"]
        return PpoStats(
            mean_ratio=float(np.mean(ratios)),
            clip_fraction=float(np.mean(clips)),
            value_loss=float(np.mean(vlosses)),
            policy_loss=float(np.mean(plosses)),
            entropy=entropy,
            approx_kl=float(np.mean(kls)),
        )

    def _restore(self, snapshot) -> None:
        pol, val, pst, vst = snapshot
        for dst, src in zip(self.policy.arrays(), pol):
            dst[...] = src
        for dst, src in zip(self.value.arrays(), val):
            dst[...] = src
        self.pi_opt.load_state(pst)
        self.v_opt.load_state(vst)


def ppo_update(batch: RolloutBatch, policy: GaussianPolicy, value: MlpParams, config: PpoConfig,
               rng: np.random.Generator):
    """Functional wrapper: update copies of the networks with fresh optimizer state."""
    trainer = PpoTrainer(policy.copy(), value.copy(), config)
    stats = trainer.update(batch, rng)
    return trainer.policy, trainer.value, stats


def log_prob(policy: GaussianPolicy, obs, actions) -> np.ndarray:
    out = policy(obs)
    return gaussian_log_prob(actions, out.mean, out.log_std)
