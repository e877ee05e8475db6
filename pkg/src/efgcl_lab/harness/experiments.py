"""Multi-seed comparisons, the value-acceleration probe and the assist ablation grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..guidance import FLIP_NOMINAL
from ..rlcore import PpoConfig
from .config import AssistOverrides, ExperimentConfig
from .training import Agent, TrainingResult, agent_actor, run_episodes, run_training

log = logging.getLogger(__name__)

ABLATION_MAGNITUDES = (100.0, 140.0, 175.0, 210.0, 250.0)
ABLATION_SHORT_WINDOW = (1.0, 1.05)


def preset(task: str, variant: str = "backflip", **kw) -> ExperimentConfig:
    """Tuned desk-scale settings per task; keyword arguments override fields."""
    if task == "jump":
        base = ExperimentConfig(task="jump", iterations=200, command_min=0.3, command_max=0.8,
                                init_log_std=-1.5, confirm_iterations=20,
                                ppo=PpoConfig(lr=1e-3, entropy_coef=0.0))
    else:
        base = ExperimentConfig(task="flip", variant=variant, iterations=500, init_log_std=-1.0,
                                confirm_iterations=20, ppo=PpoConfig(lr=5e-4, entropy_coef=0.01))
    return replace(base, **kw)


PROBE_FRACTIONS = (0.1, 0.2, 0.5)


def _median_or_none(values):
    """Median treating None (never reached) as +inf; None when the median itself is infinite or undefined."""
    if len(values) == 0:
        return None
    arr = np.array([np.inf if v is None else v for v in values], dtype=float)
    med = float(np.median(arr))
    return None if not np.isfinite(med) else med


@dataclass
class ArmResult:
    efgcl: bool
    budget: int
    seeds: list
    runs: list  # TrainingResult per seed

    @property
    def iterations_to_threshold(self) -> list:
        return [r.metrics.iterations_to_threshold for r in self.runs]

    @property
    def median_iterations(self):
        return _median_or_none(self.iterations_to_threshold)

    @property
    def reached(self) -> list[bool]:
        return [v is not None for v in self.iterations_to_threshold]

    @property
    def max_unassisted_success(self) -> list[float]:
        """Highest per-iteration success rate observed while the assist was off."""
        return [max((row.success_rate for row in r.metrics.rows if row.alpha == 0.0), default=0.0)
                for r in self.runs]


@dataclass
class ComparisonResult:
    efgcl: ArmResult
    baseline: ArmResult

    @property
    def speedup_ratio(self):
        """EFGCL median over baseline median; None when either is undefined (never reached, or no runs)."""
        e, b = self.efgcl.median_iterations, self.baseline.median_iterations
        return None if e is None or b is None else e / b

    def speedup_ok(self, ratio: float = 0.6) -> bool:
        """EFGCL's median is at most ``ratio`` times the baseline's, or the baseline never gets there."""
        e = self.efgcl.median_iterations
        b = self.baseline.median_iterations
        if e is None or not self.baseline.runs:
            return False
        return b is None or e <= ratio * b

    def summary_lines(self) -> list[str]:
        r = self.speedup_ratio
        return [
            f"efgcl    budget {self.efgcl.budget}: iterations to threshold {self.efgcl.iterations_to_threshold}"
            f" (median {self.efgcl.median_iterations})",
            f"baseline budget {self.baseline.budget}: iterations to threshold {self.baseline.iterations_to_threshold}"
            f" (median {self.baseline.median_iterations})",
            "speedup ratio (efgcl / baseline median): " + ("undefined" if r is None else f"{r:.3f}"),
        ]


def run_arm(cfg: ExperimentConfig, seeds, efgcl: bool, budget: int, out_dir=None, progress=None) -> ArmResult:
    arm_cfg = replace(cfg, efgcl=efgcl, iterations=budget)
    runs = []
    for seed in seeds:
        sub = None if out_dir is None else Path(out_dir) / f"{'efgcl' if efgcl else 'baseline'}_seed{seed}"
        res = run_training(arm_cfg, seed, out_dir=sub)
        log.info("%s seed %d: threshold at %s", "efgcl" if efgcl else "baseline", seed,
                 res.metrics.iterations_to_threshold)
        if progress is not None:
            progress(efgcl, seed, res)
        runs.append(res)
    return ArmResult(efgcl, budget, list(seeds), runs)


def run_comparison(cfg: ExperimentConfig, seeds=None, baseline_factor: float = 1.5,
                   probe_fractions=PROBE_FRACTIONS, out_dir=None, progress=None) -> ComparisonResult:
    """Train both arms over ``seeds``; the baseline gets ``baseline_factor`` times EFGCL's budget.

    Both arms snapshot their networks at the same iterations, ``probe_fractions``
    of EFGCL's budget, so the value probe compares equal amounts of experience.
    A zero budget yields an empty comparison whose ratio is undefined.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    if len(seeds) < 2:
        raise ValueError("a comparison needs at least two seeds")
    budget = cfg.iterations
    if budget <= 0:
        return ComparisonResult(ArmResult(True, 0, seeds, []), ArmResult(False, 0, seeds, []))
    base_budget = int(round(baseline_factor * budget))
    iters = sorted({max(1, int(round(f * budget))) for f in probe_fractions})
    e_cfg = replace(cfg, checkpoint_fractions=tuple(i / budget for i in iters))
    b_cfg = replace(cfg, checkpoint_fractions=tuple(i / base_budget for i in iters))
    efg = run_arm(e_cfg, seeds, True, budget, out_dir, progress)
    base = run_arm(b_cfg, seeds, False, base_budget, out_dir, progress)
    return ComparisonResult(efg, base)


def _snapshot_at(run: TrainingResult, iteration: int, budget: int):
    """The agent saved at ``iteration`` of a run with iteration budget ``budget``; None when the run stopped first."""
    for frac, agent in run.checkpoints.items():
        if max(1, int(round(frac * budget))) == iteration:
            return agent
    return None


def find_probe(agent: Agent, cfg: ExperimentConfig, seed: int = 0, attempts: int = 64, command: float = 0.5):
    """Stacked observations of one successful unassisted episode of ``agent``, or None."""
    env_cfg = cfg.env_config()
    rng = np.random.default_rng(seed)
    n = attempts
    commands = np.full(n, command) if env_cfg.task == "jump" else None
    res = run_episodes(env_cfg, agent_actor(agent), n, rng, commands=commands, deterministic=True)
    ok = np.flatnonzero(res.success)
    if ok.size == 0:
        res = run_episodes(env_cfg, agent_actor(agent), n, rng, commands=commands, deterministic=False)
        ok = np.flatnonzero(res.success)
        if ok.size == 0:
            return None
    i = int(ok[0])
    m = res.batch.mask[:, i]
    return res.batch.obs[m, i]


def probe_mse(early: Agent, final: Agent, probe_obs: np.ndarray) -> float:
    d = early.values(probe_obs) - final.values(probe_obs)
    return float(np.mean(d * d))


@dataclass
class ValueProbeResult:
    """Per checkpoint fraction and seed, MSE of early values against the run's own final values.

    ``None`` entries are gaps: the run ended before that checkpoint.
    """

    fractions: tuple = PROBE_FRACTIONS
    efgcl: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    probe_source: list = field(default_factory=list)
    key_fraction: float = 0.2

    @property
    def efgcl_mse(self) -> list:
        return self.efgcl.get(self.key_fraction, [])

    @property
    def baseline_mse(self) -> list:
        return self.baseline.get(self.key_fraction, [])

    @property
    def wins(self) -> int:
        """Seeds where EFGCL's MSE at the key fraction is below the baseline's."""
        return int(sum(e is not None and b is not None and e < b
                       for e, b in zip(self.efgcl_mse, self.baseline_mse)))

    def lines(self) -> list[str]:
        out = []
        for f in self.fractions:
            for k, (e, b) in enumerate(zip(self.efgcl.get(f, []), self.baseline.get(f, []))):
                fmt = lambda v: "gap" if v is None else f"{v:.5g}"  # noqa: E731
                out.append(f"{int(round(f * 100)):3d}% seed#{k}: efgcl {fmt(e)} baseline {fmt(b)}")
        out.append(f"efgcl lower at {int(round(self.key_fraction * 100))}% in {self.wins}/{len(self.efgcl_mse)} seeds")
        return out


def measure_value_acceleration(cmp: ComparisonResult, cfg: ExperimentConfig,
                               fractions=PROBE_FRACTIONS) -> ValueProbeResult:
    """Per seed and checkpoint: MSE between early values and the same run's final values on a fixed probe.

    The probe is a successful unassisted episode of that seed's final EFGCL
    policy (or, failing that, of any seed's), shared by both arms. Checkpoint
    fractions refer to EFGCL's budget for both arms.
    """
    budget = cmp.efgcl.budget
    fractions = tuple(fractions) + ((1.0,) if 1.0 not in fractions else ())
    out = ValueProbeResult(fractions, {f: [] for f in fractions}, {f: [] for f in fractions})
    finals = [r.agent for r in cmp.efgcl.runs]
    for k, (e_run, b_run) in enumerate(zip(cmp.efgcl.runs, cmp.baseline.runs)):
        probe, source = None, None
        for j in [k] + [j for j in range(len(finals)) if j != k]:
            probe = find_probe(finals[j], cfg, seed=1000 + k)
            if probe is not None:
                source = j
                break
        if probe is None:
            raise RuntimeError("no EFGCL policy produced a successful probe episode")
        out.probe_source.append(source)
        for f in fractions:
            it = max(1, int(round(f * budget)))
            for run, arm, dst in ((e_run, cmp.efgcl, out.efgcl), (b_run, cmp.baseline, out.baseline)):
                # 1.0 is the run's own final network, whenever the run stopped
                early = run.agent if f == 1.0 else _snapshot_at(run, it, arm.budget)
                dst[f].append(None if early is None else probe_mse(early, run.agent, probe))
    return out


@dataclass
class AblationCell:
    label: str
    magnitude: float
    window: tuple
    reached: list
    iterations: list

    @property
    def success(self) -> bool:
        """Learning counts as successful when most seeds reach the threshold without assist."""
        return sum(self.reached) * 2 > len(self.reached)


def run_ablation(cfg: ExperimentConfig, seeds=None, magnitudes=ABLATION_MAGNITUDES,
                 short_window=ABLATION_SHORT_WINDOW, out_dir=None) -> list[AblationCell]:
    """EFGCL on a flip task across assist magnitudes (default window) plus one short window at the nominal magnitude.

    ``short_window=None`` skips the window cell; an empty sweep returns an empty report.
    """
    if cfg.task != "flip":
        raise ValueError("the ablation grid is defined for flip tasks")
    seeds = list(cfg.seeds if seeds is None else seeds)
    cells = []
    grid = [(f"{m:g}", m, (cfg.assist.window_start, cfg.assist.window_end)) for m in magnitudes]
    nominal_mag = FLIP_NOMINAL[cfg.variant]
    if short_window is not None:
        grid.append((f"{nominal_mag:g}@{short_window[0]:g}-{short_window[1]:g}", nominal_mag, tuple(short_window)))
    for label, mag, window in grid:
        assist = AssistOverrides(magnitude=mag, offset=cfg.assist.offset, window_start=window[0], window_end=window[1])
        cell_cfg = replace(cfg, efgcl=True, assist=assist, confirm_iterations=0)
        sub = None if out_dir is None else Path(out_dir) / f"ablation_{label}"
        arm = run_arm(cell_cfg, seeds, True, cfg.iterations, sub)
        cells.append(AblationCell(label, mag, window, arm.reached, arm.iterations_to_threshold))
        log.info("ablation %s: reached %s", label, arm.iterations_to_threshold)
    return cells
