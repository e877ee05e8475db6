from .adam import Adam, clip_grad_norm
from .gae import RolloutBatch, Transition, compute_gae
from .mlp import ConfigurationError, MlpCache, MlpParams, init_mlp, mlp_backward, mlp_forward
from .policy import (GaussianPolicy, GaussianPolicyOut, gaussian_entropy, gaussian_log_prob, make_policy,
                     sample_action)
from .ppo import (PpoConfig, PpoStats, PpoTrainer, normalize_advantages, policy_loss_and_grads,
                  ppo_clip_objective, ppo_update, value_loss_and_grads)

__all__ = [
    "Adam", "clip_grad_norm", "RolloutBatch", "Transition", "compute_gae", "ConfigurationError", "MlpCache",
    "MlpParams", "init_mlp", "mlp_backward", "mlp_forward", "GaussianPolicy", "GaussianPolicyOut",
    "gaussian_entropy", "gaussian_log_prob", "make_policy", "sample_action", "PpoConfig", "PpoStats",
    "PpoTrainer", "normalize_advantages", "policy_loss_and_grads", "ppo_clip_objective", "ppo_update",
    "value_loss_and_grads",
]
