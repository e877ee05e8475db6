"""Teacher-to-student distillation onto a proprioception-only policy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvConfig, Observation
from .rlcore import Adam, MlpCache, MlpParams, init_mlp, mlp_backward, mlp_forward
from .rlcore.policy import GaussianPolicyOut

log = logging.getLogger(__name__)


class CurriculumIncompleteError(RuntimeError):
    """Distillation was requested from a teacher that still relies on assist."""


@dataclass
class StudentNet:
    """Maps normalised ``o_prop`` to ``(action mean, reconstructed normalised o_priv)``."""

    net: MlpParams
    obs_offset: np.ndarray  # proprioceptive slice of the teacher normaliser
    obs_scale: np.ndarray
    act_dim: int

    def __post_init__(self):
        if self.net.sizes[0] != len(self.obs_offset):
            raise ValueError("student input size must equal the proprioceptive observation size")
        if self.net.sizes[-1] <= self.act_dim:
            raise ValueError("student output must hold the action and a reconstruction head")

    @property
    def priv_dim(self) -> int:
        return self.net.sizes[-1] - self.act_dim

    def inputs(self, prop: np.ndarray) -> np.ndarray:
        return (prop - self.obs_offset) * self.obs_scale

    def forward(self, prop: np.ndarray, cache: MlpCache | None = None):
        out = mlp_forward(self.net, self.inputs(prop), cache)
        return out[..., :self.act_dim], out[..., self.act_dim:]

    def __call__(self, obs: Observation):
        # Only the proprioceptive part is ever read.
        return self.forward(obs.prop)

    def actor(self, log_std: float = -5.0):
        """Adapter for rollout code expecting a Gaussian policy output."""
        return lambda obs: GaussianPolicyOut(self(obs)[0], np.full(self.act_dim, log_std))


def make_student(env_cfg: EnvConfig, teacher_offset: np.ndarray, teacher_scale: np.ndarray,
                 rng: np.random.Generator, hidden=(128, 128)) -> StudentNet:
    p = env_cfg.prop_dim
    net = init_mlp([p, *hidden, env_cfg.n_joints + env_cfg.priv_dim], rng, out_gain=0.1)
    return StudentNet(net, teacher_offset[:p].copy(), teacher_scale[:p].copy(), env_cfg.n_joints)


def distill_loss(student_action, teacher_action, reconstructed_priv, true_priv, weight: float = 0.5) -> float:
    """Mean-squared action error plus ``weight`` times mean-squared reconstruction error."""
    sa, ta = np.asarray(student_action, float), np.asarray(teacher_action, float)
    rp, tp = np.asarray(reconstructed_priv, float), np.asarray(true_priv, float)
    if sa.shape != ta.shape or rp.shape != tp.shape:
        raise ValueError("student and teacher arrays must have matching shapes")
    if weight < 0:
        raise ValueError("reconstruction weight must be non-negative")
    return float(np.mean((sa - ta) ** 2) + weight * np.mean((rp - tp) ** 2))


def distill_loss_and_grads(student: StudentNet, prop, teacher_action, true_priv, weight: float):
    cache = MlpCache()
    out = mlp_forward(student.net, student.inputs(prop), cache)
    a, r = out[:, :student.act_dim], out[:, student.act_dim:]
    da, dr = a - teacher_action, r - true_priv
    loss = float(np.mean(da * da) + weight * np.mean(dr * dr))
    g = np.concatenate([2.0 * da / da.size, 2.0 * weight * dr / dr.size], axis=1)
    gw, gb, _ = mlp_backward(student.net, cache, g)
    grads = []
    for w, b in zip(gw, gb):
        grads += [w, b]
    return loss, grads


@dataclass
class DistillConfig:
    n_transitions: int = 200_000
    n_envs: int = 64
    epochs: int = 30
    batch_size: int = 2048
    lr: float = 1e-3
    recon_weight: float = 0.5
    heldout_fraction: float = 0.1
    hidden: tuple = (128, 128)
    drive: str = "sample"  # teacher drives with sampled ("sample") or mean ("mean") actions
    seed: int = 0

    def __post_init__(self):
        if self.drive not in ("sample", "mean"):
            raise ValueError("drive must be 'sample' or 'mean'")
        if not 0 < self.heldout_fraction < 1:
            raise ValueError("heldout_fraction must lie in (0, 1)")
        if self.recon_weight < 0:
            raise ValueError("recon_weight must be non-negative")


@dataclass
class DistillReport:
    train_mse: float
    heldout_mse: float
    heldout_recon_mse: float
    n_train: int
    n_heldout: int
    losses: list = field(default_factory=list)


def collect_teacher_data(teacher, env_cfg: EnvConfig, n_transitions: int, rng: np.random.Generator,
                         n_envs: int = 64, drive: str = "sample"):
    """Unassisted teacher rollouts; returns (o_prop, teacher action mean, normalised o_priv)."""
    from .harness.training import agent_actor, run_episodes

    props, acts, privs = [], [], []
    total = 0
    p = env_cfg.prop_dim
    while total < n_transitions:
        res = run_episodes(env_cfg, agent_actor(teacher), n_envs, rng, deterministic=(drive == "mean"))
        m = res.batch.mask
        full = res.batch.obs[m]
        props.append(full[:, :p])
        acts.append(teacher.act_mean(full))
        privs.append(teacher.inputs(full)[:, p:])
        total += int(m.sum())
    prop, act, priv = (np.concatenate(x)[:n_transitions] for x in (props, acts, privs))
    return prop, act, priv


def train_student(teacher, env_cfg: EnvConfig, curriculum, config: DistillConfig | None = None,
                  data=None):
    """Supervised distillation of ``teacher`` into a :class:`StudentNet`.

    ``curriculum`` is the teacher's final curriculum state (anything with
    ``complete`` and ``alpha``); training is refused unless the assist has fully
    decayed. Returns ``(student, report)``.
    """
    cfg = config or DistillConfig()
    if not getattr(curriculum, "complete", False) or getattr(curriculum, "alpha", 1.0) > 0.0:
        raise CurriculumIncompleteError("teacher curriculum is not complete (assist has not decayed to zero)")
    rng = np.random.default_rng(cfg.seed)
    if data is None:
        data = collect_teacher_data(teacher, env_cfg, cfg.n_transitions, rng, cfg.n_envs, cfg.drive)
    prop, act, priv = data
    n = len(prop)
    perm = rng.permutation(n)
    n_held = max(1, int(round(cfg.heldout_fraction * n)))
    held, train = perm[:n_held], perm[n_held:]
    student = make_student(env_cfg, teacher.obs_offset, teacher.obs_scale, rng, cfg.hidden)
    opt = Adam(student.net.arrays(), lr=cfg.lr)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(train)
        ep = []
        for k in range(0, len(order), cfg.batch_size):
            idx = order[k:k + cfg.batch_size]
            loss, grads = distill_loss_and_grads(student, prop[idx], act[idx], priv[idx], cfg.recon_weight)
            opt.step(grads)
            ep.append(loss)
        losses.append(float(np.mean(ep)))
    a_tr, _ = student.forward(prop[train])
    a_ho, r_ho = student.forward(prop[held])
    report = DistillReport(
        train_mse=float(np.mean((a_tr - act[train]) ** 2)),
        heldout_mse=float(np.mean((a_ho - act[held]) ** 2)),
        heldout_recon_mse=float(np.mean((r_ho - priv[held]) ** 2)),
        n_train=len(train), n_heldout=n_held, losses=losses,
    )
    log.info("student: train action MSE %.4g, held-out %.4g", report.train_mse, report.heldout_mse)
    return student, report


def privileged_perturbation_delta(student: StudentNet, obs: Observation, rng: np.random.Generator,
                                  scale: float = 10.0) -> float:
    """Largest change in student actions when the privileged part of ``obs`` is replaced by noise."""
    base, _ = student(obs)
    noisy = Observation(obs.prop.copy(), obs.priv + scale * rng.standard_normal(obs.priv.shape))
    pert, _ = student(noisy)
    return float(np.max(np.abs(pert - base)))
