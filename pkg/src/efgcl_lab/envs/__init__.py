from .config import FLIP_VARIANTS, TASKS, EnvConfig, flipper_config, jumper_config, make_env_config
from .core import (EnvState, ExternalLoad, Observation, StepResult, build_observation, env_reset, env_step,
                   feet_heights, gravity_in_body, observation_normalizer, pd_targets, reset_batch, step_batch,
                   trace_row, write_trace)
from .physics import CAUSE_BODY_CONTACT, CAUSE_FAULT, CAUSE_NAMES, CAUSE_NONE, CAUSE_TIME_LIMIT

__all__ = [
    "FLIP_VARIANTS", "TASKS", "EnvConfig", "flipper_config", "jumper_config", "make_env_config", "EnvState",
    "ExternalLoad", "Observation", "StepResult", "build_observation", "env_reset", "env_step", "feet_heights",
    "gravity_in_body", "observation_normalizer", "pd_targets", "reset_batch", "step_batch", "trace_row",
    "write_trace", "CAUSE_BODY_CONTACT", "CAUSE_FAULT", "CAUSE_NAMES", "CAUSE_NONE", "CAUSE_TIME_LIMIT",
]
