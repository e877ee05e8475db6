"""Rollout collection, evaluation and the curriculum training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..envs import (CAUSE_BODY_CONTACT, CAUSE_FAULT, CAUSE_TIME_LIMIT, EnvConfig, build_observation,
                    observation_normalizer, reset_batch, step_batch)
from ..guidance import (AssistPattern, CurriculumState, EpisodeSummary, SuccessSpec, build_load, check_success,
                        curriculum_advance, flip_pattern, jump_pattern, time_encoding)
from ..reward import inputs_from_state, reward_config, total_reward
from ..rlcore import (GaussianPolicy, MlpParams, PpoTrainer, RolloutBatch, compute_gae, init_mlp, make_policy,
                      mlp_forward, sample_action)
from .config import ExperimentConfig
from .metrics import MetricsRow, RunMetrics

log = logging.getLogger(__name__)


@dataclass
class Agent:
    """Teacher policy and critic acting on normalised (proprioceptive + privileged) observations."""

    policy: GaussianPolicy
    value: MlpParams
    obs_offset: np.ndarray
    obs_scale: np.ndarray

    def inputs(self, full_obs: np.ndarray) -> np.ndarray:
        return (full_obs - self.obs_offset) * self.obs_scale

    def act_mean(self, full_obs: np.ndarray) -> np.ndarray:
        return self.policy(self.inputs(full_obs)).mean

    def values(self, full_obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.value, self.inputs(full_obs))[..., 0]

    def copy(self) -> "Agent":
        return Agent(self.policy.copy(), self.value.copy(), self.obs_offset.copy(), self.obs_scale.copy())


def make_agent(env_cfg: EnvConfig, rng: np.random.Generator, hidden: int = 64, init_log_std: float = -0.5) -> Agent:
    dim = env_cfg.prop_dim + env_cfg.priv_dim
    policy = make_policy(dim, env_cfg.n_joints, rng, (hidden, hidden), init_log_std)
    value = init_mlp([dim, hidden, hidden, 1], rng, out_gain=1.0)
    off, scale = observation_normalizer(env_cfg)
    return Agent(policy, value, off, scale)


def make_patterns(cfg: ExperimentConfig, env_cfg: EnvConfig, commands: np.ndarray) -> list[AssistPattern]:
    window = (cfg.assist.window_start, cfg.assist.window_end)
    if env_cfg.task == "jump":
        return [jump_pattern(float(c), env_cfg, window) for c in commands]
    pat = flip_pattern(env_cfg, cfg.assist.magnitude, window, cfg.assist.offset)
    return [pat] * len(commands)


@dataclass
class EpisodeBatch:
    """Everything one synchronous round of episodes produced."""

    batch: RolloutBatch
    bootstrap: np.ndarray
    success: np.ndarray
    summary: EpisodeSummary
    episode_reward: np.ndarray
    causes: np.ndarray
    final_state: object = None
    states: list = field(default_factory=list)


def sample_commands(env_cfg: EnvConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = env_cfg.command_range
    if env_cfg.task != "jump":
        return np.full(n, 2 * np.pi)
    return np.full(n, lo) if hi <= lo else rng.uniform(lo, hi, n)


def run_episodes(env_cfg: EnvConfig, actor, n_envs: int, rng: np.random.Generator, alpha: float = 0.0,
                 patterns: list[AssistPattern] | None = None, commands: np.ndarray | None = None,
                 critic=None, gamma: float = 0.99, lam: float = 0.95, deterministic: bool = False,
                 record_states: bool = False, time_scale: float = 1.0) -> EpisodeBatch:
    """Roll ``n_envs`` episodes in lockstep until every one has ended.

    ``actor(obs)`` receives an :class:`Observation` and returns a
    :class:`GaussianPolicyOut`; ``critic(obs)`` returns values, or is None.
    """
    if commands is None:
        commands = sample_commands(env_cfg, n_envs, rng)
    state, obs = reset_batch(env_cfg, commands, rng)
    load = build_load(patterns, alpha) if patterns is not None and alpha > 0 else None
    rcfg = reward_config(env_cfg)
    T = env_cfg.episode_steps
    nj = env_cfg.n_joints
    dim = obs.prop.shape[1] + obs.priv.shape[1]
    obs_buf = np.zeros((T, n_envs, dim))
    act_buf = np.zeros((T, n_envs, nj))
    lp_buf, rew_buf, val_buf, assist_buf = (np.zeros((T, n_envs)) for _ in range(4))
    done_buf = np.zeros((T, n_envs), bool)
    mask_buf = np.zeros((T, n_envs), bool)
    states = []
    for t in range(T):
        alive = ~state.terminated
        if not alive.any():
            break
        if record_states:
            states.append(state.copy())
        out = actor(obs)
        if deterministic:
            action, logp = out.mean, np.zeros(n_envs)
        else:
            action, logp = sample_action(out, rng.standard_normal((n_envs, nj)))
        obs_buf[t] = obs.full()
        act_buf[t] = action
        lp_buf[t] = logp
        if critic is not None:
            val_buf[t] = critic(obs)
        if load is not None:
            assist_buf[t] = load.magnitude_at(state.t)
        mask_buf[t] = alive
        state = step_batch(state, env_cfg, action, load, in_place=True)
        ended_badly = alive & state.terminated & ((state.cause == CAUSE_BODY_CONTACT) | (state.cause == CAUSE_FAULT))
        r = total_reward(inputs_from_state(state, env_cfg, ended_badly), rcfg)
        rew_buf[t] = np.where(alive, r, 0.0)
        done_buf[t] = ended_badly
        obs = build_observation(state, env_cfg, commands, time_encoding(state.t, time_scale))
    bootstrap = np.zeros(n_envs)
    truncated = state.cause == CAUSE_TIME_LIMIT
    if critic is not None and truncated.any():
        bootstrap = np.where(truncated, critic(obs), 0.0)
    failed = (state.cause == CAUSE_BODY_CONTACT) | (state.cause == CAUSE_FAULT)
    summary = EpisodeSummary(state.h_max - env_cfg.h_stand, state.h - env_cfg.h_stand, state.theta.copy(), failed)
    success = check_success(summary, SuccessSpec(env_cfg.task), commands)
    batch = RolloutBatch(obs_buf, act_buf, lp_buf, rew_buf, val_buf, done_buf, mask_buf, gamma, lam, assist_buf)
    return EpisodeBatch(batch, bootstrap, np.atleast_1d(success), summary, rew_buf.sum(axis=0),
                        state.cause.copy(), state, states)


def agent_actor(agent: Agent):
    return lambda obs: agent.policy(agent.inputs(obs.full()))


def agent_critic(agent: Agent):
    return lambda obs: agent.values(obs.full())


def evaluate(actor, env_cfg: EnvConfig, n_episodes: int, rng: np.random.Generator, deterministic: bool = True,
             alpha: float = 0.0, patterns=None) -> float:
    """Success rate of ``actor`` over ``n_episodes`` episodes (no assist by default)."""
    res = run_episodes(env_cfg, actor, n_episodes, rng, alpha=alpha, patterns=patterns, deterministic=deterministic)
    return float(res.success.mean())


@dataclass
class TrainingResult:
    metrics: RunMetrics
    agent: Agent
    curriculum: CurriculumState
    checkpoints: dict


def run_training(cfg: ExperimentConfig, seed: int, out_dir: str | Path | None = None,
                 wall_clock: bool = False, progress=None) -> TrainingResult:
    """Collect, estimate advantages, update, measure success and step the curriculum until the budget ends.

    With ``cfg.efgcl`` off the assist stays at zero throughout. A run also stops
    ``cfg.confirm_iterations`` iterations after first reaching the success
    threshold without assist (never, when that setting is negative).
    """
    from .checkpoint import save_checkpoint

    env_cfg = cfg.env_config()
    rng = np.random.default_rng(seed)
    agent = make_agent(env_cfg, rng, cfg.hidden, cfg.init_log_std)
    trainer = PpoTrainer(agent.policy, agent.value, cfg.ppo)
    cur = CurriculumState(epsilon=cfg.epsilon, zeta=cfg.zeta, alpha=1.0 if cfg.efgcl else 0.0)
    time_scale = cfg.assist.window_start if cfg.assist.window_start > 0 else 1.0
    metrics = RunMetrics()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ckpt_iters = {max(1, int(round(f * cfg.iterations))): f for f in cfg.checkpoint_fractions}
    if cfg.checkpoint_every > 0:
        for it in range(cfg.checkpoint_every, cfg.iterations + 1, cfg.checkpoint_every):
            ckpt_iters.setdefault(it, it / cfg.iterations)
    checkpoints: dict = {}
    t0 = time.perf_counter()
    reached_at = None
    for it in range(1, cfg.iterations + 1):
        alpha = cur.alpha if cfg.efgcl else 0.0
        commands = sample_commands(env_cfg, cfg.n_envs, rng)
        patterns = make_patterns(cfg, env_cfg, commands) if alpha > 0 else None
        eb = run_episodes(env_cfg, agent_actor(agent), cfg.n_envs, rng, alpha, patterns, commands,
                          agent_critic(agent), cfg.ppo.gamma, cfg.ppo.lam, time_scale=time_scale)
        faults = int(np.sum(eb.causes == CAUSE_FAULT))
        if faults:
            log.warning("iteration %d: %d simulation faults counted as failures", it, faults)
        eb.batch.rewards = eb.batch.rewards * cfg.ppo.reward_scale
        eb.batch.obs = agent.inputs(eb.batch.obs)  # the networks act on normalised inputs
        adv, ret = compute_gae(eb.batch, eb.bootstrap)
        eb.batch.advantages, eb.batch.returns = adv, ret
        stats = trainer.update(eb.batch, rng)
        rate = float(eb.success.mean())
        stage = cur.stage
        if cfg.efgcl:
            cur = curriculum_advance(cur, rate, cfg.min_stage_updates)
        elif rate >= cfg.zeta:
            cur.complete = True
        wall_ms = int((time.perf_counter() - t0) * 1000) if wall_clock else 0
        metrics.rows.append(MetricsRow(it, float(eb.episode_reward.mean()), rate, alpha, stage,
                                       stats.value_loss, wall_ms))
        if progress is not None:
            progress(it, metrics.rows[-1], cur)
        if reached_at is None and alpha == 0.0 and rate >= cfg.zeta:
            reached_at = it
        if it in ckpt_iters:
            checkpoints[ckpt_iters[it]] = agent.copy()
            if out is not None:
                save_checkpoint(out / f"ckpt_iter{it:05d}.npz", agent, env_cfg,
                                meta={"iteration": it, "seed": seed})
        if reached_at is not None and cfg.confirm_iterations >= 0 and it >= reached_at + cfg.confirm_iterations:
            break
    metrics.iterations_to_threshold = reached_at
    metrics.final_success_rate = metrics.rows[-1].success_rate if metrics.rows else None
    metrics.final_alpha = metrics.rows[-1].alpha if metrics.rows else None
    if out is not None:
        metrics.write_csv(out / "metrics.csv")
        metrics.write_summary(out / "summary.txt", cfg, seed)
        save_checkpoint(out / "final.npz", agent, env_cfg,
                        meta={"iteration": len(metrics.rows), "seed": seed, "curriculum_complete": bool(cur.complete),
                              "alpha": float(cur.alpha if cfg.efgcl else 0.0), "efgcl": bool(cfg.efgcl)})
    return TrainingResult(metrics, agent, cur, checkpoints)
