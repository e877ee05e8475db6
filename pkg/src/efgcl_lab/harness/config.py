"""Experiment configuration and its flat ``section.key = value`` text format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from ..envs.config import FLIP_VARIANTS, TASKS, EnvConfig, make_env_config
from ..rlcore.ppo import PpoConfig


class ConfigError(ValueError):
    """A configuration file could not be parsed or validated."""


@dataclass
class AssistOverrides:
    magnitude: float | None = None  # flip tasks, legged-robot convention (N)
    offset: float | None = None  # flip tasks, body-frame x of the push point (m)
    window_start: float = 1.0
    window_end: float = 1.1


@dataclass
class ExperimentConfig:
    task: str = "jump"
    variant: str = "backflip"
    seeds: tuple = (0,)
    iterations: int = 400
    n_envs: int = 64
    efgcl: bool = True
    epsilon: float = 0.01
    zeta: float = 0.6
    min_stage_updates: int = 1
    confirm_iterations: int = 0
    command_min: float = 0.5
    command_max: float = 0.5
    hidden: int = 64
    init_log_std: float = -0.5
    ppo: PpoConfig = field(default_factory=PpoConfig)
    assist: AssistOverrides = field(default_factory=AssistOverrides)
    env_overrides: dict = field(default_factory=dict)
    checkpoint_every: int = 0
    checkpoint_fractions: tuple = ()
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task: unknown task {self.task!r}")
        if self.variant not in FLIP_VARIANTS:
            raise ConfigError(f"variant: unknown flip variant {self.variant!r}")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if self.iterations < 0:
            raise ConfigError("iterations: must be >= 0")
        if self.n_envs < 1:
            raise ConfigError("n_envs: must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("run.checkpoint_every: must be >= 0 (0 disables periodic checkpoints)")
        if not self.epsilon > 0:
            raise ConfigError("curriculum.epsilon: must be positive")
        if not 0 < self.zeta < 1:
            raise ConfigError("curriculum.zeta: must lie in (0, 1)")
        if self.task == "jump" and not 0.2 <= self.command_min <= self.command_max <= 0.8:
            raise ConfigError("task.command_min/command_max: jump targets must satisfy 0.2 <= min <= max <= 0.8")
        if not self.assist.window_start < self.assist.window_end:
            raise ConfigError("assist.window_start: must be before assist.window_end")

    def env_config(self) -> EnvConfig:
        kw = dict(self.env_overrides)
        if self.task == "jump":
            kw.setdefault("command_range", (self.command_min, self.command_max))
        return make_env_config(self.task, self.variant, **kw)

    @property
    def n_stages(self) -> int:
        return math.ceil(1.0 / self.epsilon - 1e-9)

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_seeds(text: str) -> tuple:
    return tuple(int(s) for s in text.replace(",", " ").split())


def _opt_float(text: str):
    return None if text.strip().lower() in ("none", "default", "") else float(text)


# key -> (attribute path, parser)
_KEYS = {
    "task": (("task",), str),
    "task.name": (("task",), str),
    "task.variant": (("variant",), str),
    "task.command_min": (("command_min",), float),
    "task.command_max": (("command_max",), float),
    "efgcl": (("efgcl",), _parse_bool),
    "run.seeds": (("seeds",), _parse_seeds),
    "run.iterations": (("iterations",), int),
    "run.n_envs": (("n_envs",), int),
    "run.checkpoint_every": (("checkpoint_every",), int),
    "run.out_dir": (("out_dir",), str),
    "curriculum.epsilon": (("epsilon",), float),
    "curriculum.zeta": (("zeta",), float),
    "curriculum.min_stage_updates": (("min_stage_updates",), int),
    "curriculum.confirm_iterations": (("confirm_iterations",), int),
    "policy.hidden": (("hidden",), int),
    "policy.init_log_std": (("init_log_std",), float),
    "assist.magnitude": (("assist", "magnitude"), _opt_float),
    "assist.offset": (("assist", "offset"), _opt_float),
    "assist.window_start": (("assist", "window_start"), float),
    "assist.window_end": (("assist", "window_end"), float),
}
for _f in fields(PpoConfig):
    _KEYS[f"ppo.{_f.name}"] = (("ppo", _f.name), int if _f.type in ("int", int) else float)
_ENV_KEYS = {f.name: f.type for f in fields(EnvConfig)
             if f.name not in ("task", "variant", "hip_offsets", "command_range", "planar")}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key-value format.

    One ``key = value`` per line; ``[section]`` headers prefix following keys
    with ``section.``; ``#`` starts a comment. Unknown keys, malformed values
    and range violations raise :class:`ConfigError` naming the key and line.
    """
    cfg = ExperimentConfig()
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        try:
            if key.startswith("env."):
                name = key[4:]
                if name not in _ENV_KEYS:
                    raise KeyError(key)
                cfg.env_overrides[name] = int(value) if _ENV_KEYS[name] in ("int", int) else float(value)
                continue
            if key not in _KEYS:
                raise KeyError(key)
            path, parser = _KEYS[key]
            parsed = parser(value)
        except KeyError:
            raise ConfigError(f"line {lineno}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        target = cfg
        for attr in path[:-1]:
            target = getattr(target, attr)
        setattr(target, path[-1], parsed)
        try:
            cfg.validate()
            if path[0] == "ppo":
                cfg.ppo.__post_init__()
        except (ConfigError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    try:
        cfg.env_config()
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from None
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for the keys it knows."""
    lines = []
    for key, (path, _) in _KEYS.items():
        if key in ("task.name",):
            continue
        v = cfg
        for attr in path:
            v = getattr(v, attr)
        if isinstance(v, bool):
            v = "on" if v else "off"
        elif isinstance(v, tuple):
            v = " ".join(str(s) for s in v)
        elif v is None:
            v = "default"
        lines.append(f"{key} = {v}")
    for name, value in sorted(cfg.env_overrides.items()):
        lines.append(f"env.{name} = {value}")
    return "\n".join(lines) + "\n"
