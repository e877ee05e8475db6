"""External assist forces and the success-gated decay curriculum.

An assist pattern is a set of application points, force vectors and timing
windows. During training the forces are scaled by a decay factor
``alpha = max(0, 1 - eps * stage)``; the stage only advances once the measured
success rate under the current scaling reaches the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .envs.config import EnvConfig
from .envs.core import ExternalLoad


@dataclass(frozen=True)
class AssistPattern:
    """Body-frame points (m), world-frame forces (N) and (t_start, t_end) windows (s).

    ``forces`` may hold a single vector shared by every point. Each point is
    paired with ``windows[k]``; a single window applies to all points.
    """

    points: tuple
    forces: tuple
    windows: tuple

    def __post_init__(self):
        if not self.windows:
            raise ValueError("an assist pattern needs at least one timing window")
        for start, end in self.windows:
            if not start < end:
                raise ValueError(f"window ({start}, {end}) must satisfy t_start < t_end")
        if len(self.forces) not in (1, len(self.points)):
            raise ValueError("need one force per point or a single shared force")
        if len(self.windows) not in (1, len(self.points)):
            raise ValueError("need one window per point or a single shared window")

    def pairs(self):
        """Yield (point, force, window) triples with shared entries broadcast."""
        for k, p in enumerate(self.points):
            f = self.forces[0] if len(self.forces) == 1 else self.forces[k]
            w = self.windows[0] if len(self.windows) == 1 else self.windows[k]
            yield p, f, w

    @property
    def t_start(self) -> float:
        return min(w[0] for w in self.windows)

    def total_force(self) -> np.ndarray:
        return np.sum([np.asarray(f, float) for _, f, _ in self.pairs()], axis=0)

    def scaled(self, factor: float) -> "AssistPattern":
        return replace(self, forces=tuple(tuple(factor * np.asarray(f, float)) for f in self.forces))


DEFAULT_WINDOW = (1.0, 1.1)


def f_jump(l: float, m: float, dt: float, g: float = 9.81) -> float:
    """Constant push force that lifts mass ``m`` by ``l`` at the apex after pushing for ``dt``.

    The push lasts ``dt`` from rest against gravity, then the body flies
    ballistically. This is the positive root of ``f^2 - m g f - 2 l m^2 g / dt^2 = 0``.
    """
    if m <= 0 or dt <= 0:
        raise ValueError("mass and push duration must be positive")
    if l < 0:
        raise ValueError("height gain must be non-negative")
    return 0.5 * m * g * (1.0 + math.sqrt(1.0 + 8.0 * l / (g * dt * dt)))


def time_encoding(t, lam: float):
    """Bounded clock feature ``u^3 / (1 + u^3)`` with ``u = t / lam``; lies in [0, 1)."""
    if lam <= 0:
        raise ValueError("time scale must be positive")
    u3 = (np.asarray(t, dtype=float) / lam) ** 3
    return u3 / (1.0 + u3)


def assist_force(pattern: AssistPattern, t: float, alpha: float):
    """Active (point, alpha-scaled force) pairs at time ``t``; windows are half-open."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return []
    out = []
    for p, f, (start, end) in pattern.pairs():
        if start <= t < end:
            out.append((np.asarray(p, float), alpha * np.asarray(f, float)))
    return out


def jump_pattern(h_target: float, cfg: EnvConfig, window=DEFAULT_WINDOW, points: int = 1) -> AssistPattern:
    """Vertical push sized by :func:`f_jump` for the window length, split over ``points`` equal shares."""
    total = f_jump(h_target, cfg.mass, window[1] - window[0], cfg.gravity)
    pts = tuple((0.0, 0.0) for _ in range(points))
    return AssistPattern(pts, ((0.0, total / points),), (tuple(window),))


# Planar analogs of the flip assists. The planar bodies are lighter in rotation
# than the quadruped, so forces are expressed relative to the nominal magnitude
# of each variant; FLIP_FORCE_SCALE converts a legged-robot figure (N) to the
# planar force that plays the same role.
FLIP_NOMINAL = {"backflip": 175.0, "lateral": 300.0}
FLIP_FORCE_SCALE = {"backflip": 405.0 / 175.0, "lateral": 310.0 / 300.0}


def flip_pattern(cfg: EnvConfig, magnitude: float | None = None, window=DEFAULT_WINDOW,
                 offset: float | None = None) -> AssistPattern:
    """Upward force at the trunk end (backflip) or side (lateral analog).

    ``magnitude`` is in the legged-robot convention (175 N backflip, 300 N
    lateral) and converted with ``FLIP_FORCE_SCALE``; ``offset`` is the
    body-frame x of the application point (defaults to the trunk tip).
    """
    variant = cfg.variant
    mag = FLIP_NOMINAL[variant] if magnitude is None else magnitude
    planar = mag * FLIP_FORCE_SCALE[variant]
    px = cfg.trunk_half_length if offset is None else offset
    return AssistPattern(((px, 0.0),), ((0.0, planar),), (tuple(window),))


def default_pattern(cfg: EnvConfig, command: float) -> AssistPattern:
    if cfg.task == "jump":
        return jump_pattern(command, cfg)
    return flip_pattern(cfg)


def build_load(patterns: list[AssistPattern], alpha: float) -> ExternalLoad:
    """Pack one pattern per environment into the integrator's load arrays, scaled by ``alpha``."""
    n = len(patterns)
    k = max(1, max(len(p.points) for p in patterns))
    load = ExternalLoad.empty(n, k)
    if alpha <= 0.0:
        return load
    for i, pat in enumerate(patterns):
        for e, (p, f, w) in enumerate(pat.pairs()):
            load.points[i, e] = p
            load.forces[i, e] = alpha * np.asarray(f, float)
            load.windows[i, e] = w
        load.count[i] = len(pat.points)
    return load


@dataclass(frozen=True)
class SuccessSpec:
    task: str
    height_tol: float = 0.1
    angle_tol: float = 0.3
    target_angle: float = 2 * math.pi

    def __post_init__(self):
        if self.height_tol <= 0 or self.angle_tol <= 0:
            raise ValueError("tolerances must be positive")


_BOUNDARY = 1e-9


@dataclass
class EpisodeSummary:
    """End-of-episode quantities, heights measured as deviations from standing height."""

    h_max_gain: float | np.ndarray
    h_final_dev: float | np.ndarray
    theta_final: float | np.ndarray = 0.0
    failed: bool | np.ndarray = False


def check_success(summary: EpisodeSummary, spec: SuccessSpec, h_target: float | np.ndarray = 0.0):
    """Strict-inequality success test; works elementwise on arrays.

    Values within round-off of a tolerance count as on the boundary, i.e. failures.
    """
    settled = np.abs(np.asarray(summary.h_final_dev)) < spec.height_tol - _BOUNDARY
    if spec.task == "jump":
        hit = np.abs(np.asarray(summary.h_max_gain) - h_target) < spec.height_tol - _BOUNDARY
    else:
        hit = np.abs(np.asarray(summary.theta_final) - spec.target_angle) < spec.angle_tol - _BOUNDARY
    ok = hit & settled & ~np.asarray(summary.failed, bool)
    return bool(ok) if np.ndim(ok) == 0 else ok


@dataclass
class CurriculumState:
    stage: int = 0
    epsilon: float = 0.01
    zeta: float = 0.6
    alpha: float = 1.0
    last_success_rate: float = 0.0
    updates_in_stage: int = 0
    complete: bool = False
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("decay step must be positive")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("success threshold must lie in (0, 1)")

    @property
    def n_stages(self) -> int:
        """Threshold crossings needed to reach alpha = 0."""
        return math.ceil(1.0 / self.epsilon - 1e-9)


def decay_factor(stage: int, epsilon: float) -> float:
    alpha = 1.0 - epsilon * stage
    # absorb round-off so ceil(1/epsilon) stages always reach exactly zero
    return alpha if alpha > 1e-12 else 0.0


def curriculum_advance(state: CurriculumState, measured_success_rate: float, min_updates: int = 1) -> CurriculumState:
    """Record one PPO update's success rate and move to the next stage if it clears the threshold.

    The stage advances only when at least ``min_updates`` updates have been
    made in it. Once alpha is 0, clearing the threshold again marks the
    curriculum complete. Success statistics restart on every stage change.
    """
    if not 0.0 <= measured_success_rate <= 1.0:
        raise ValueError("success rate must lie in [0, 1]")
    new = replace(state, history=list(state.history))
    new.last_success_rate = measured_success_rate
    new.updates_in_stage += 1
    new.history.append(measured_success_rate)
    if new.complete or measured_success_rate < new.zeta or new.updates_in_stage < min_updates:
        return new
    if new.alpha <= 0.0:
        new.complete = True
        return new
    new.stage += 1
    new.alpha = decay_factor(new.stage, new.epsilon)
    new.updates_in_stage = 0
    new.history = []
    return new
