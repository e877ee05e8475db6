"""Versioned ``.npz`` checkpoints for teacher agents and students."""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from ..envs.config import EnvConfig, make_env_config
from ..rlcore import GaussianPolicy, MlpParams

FORMAT = "efgcl-lab-checkpoint"
VERSION = 1


def _pack_mlp(prefix: str, net: MlpParams, arrays: dict) -> list[int]:
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"{prefix}.w{k}"] = w
        arrays[f"{prefix}.b{k}"] = b
    return net.sizes


def _unpack_mlp(prefix: str, data, n_layers: int) -> MlpParams:
    return MlpParams([np.array(data[f"{prefix}.w{k}"]) for k in range(n_layers)],
                     [np.array(data[f"{prefix}.b{k}"]) for k in range(n_layers)])


def _header(kind: str, env_cfg: EnvConfig, sizes: dict, meta: dict | None) -> str:
    env = asdict(env_cfg)
    env["hip_offsets"] = [list(h) for h in env_cfg.hip_offsets]
    env["command_range"] = list(env_cfg.command_range)
    return json.dumps({"format": FORMAT, "version": VERSION, "kind": kind, "sizes": sizes, "env": env,
                       "meta": meta or {}}, sort_keys=True)


def _read_header(data) -> dict:
    header = json.loads(str(data["header"]))
    if header.get("format") != FORMAT:
        raise ValueError("not an efgcl-lab checkpoint")
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    return header


def _env_from_header(header: dict) -> EnvConfig:
    env = dict(header["env"])
    env["hip_offsets"] = tuple(tuple(h) for h in env["hip_offsets"])
    env["command_range"] = tuple(env["command_range"])
    task, variant = env.pop("task"), env.pop("variant")
    return make_env_config(task, variant if task == "flip" else None, **env)


def save_checkpoint(path, agent, env_cfg: EnvConfig, meta: dict | None = None) -> None:
    arrays: dict = {}
    sizes = {"policy": _pack_mlp("policy", agent.policy.net, arrays), "value": _pack_mlp("value", agent.value, arrays)}
    arrays["policy.log_std"] = agent.policy.log_std
    arrays["obs_offset"] = agent.obs_offset
    arrays["obs_scale"] = agent.obs_scale
    arrays["header"] = np.array(_header("teacher", env_cfg, sizes, meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns ``(agent_or_student, env_config, header)``."""
    from ..distill import StudentNet
    from .training import Agent

    with np.load(path, allow_pickle=False) as data:
        header = _read_header(data)
        env_cfg = _env_from_header(header)
        sizes = header["sizes"]
        if header["kind"] == "teacher":
            net = _unpack_mlp("policy", data, len(sizes["policy"]) - 1)
            policy = GaussianPolicy(net, np.array(data["policy.log_std"]))
            value = _unpack_mlp("value", data, len(sizes["value"]) - 1)
            obj = Agent(policy, value, np.array(data["obs_offset"]), np.array(data["obs_scale"]))
        elif header["kind"] == "student":
            net = _unpack_mlp("student", data, len(sizes["student"]) - 1)
            obj = StudentNet(net, np.array(data["obs_offset"]), np.array(data["obs_scale"]), int(sizes["act_dim"]))
        else:
            raise ValueError(f"unknown checkpoint kind {header['kind']!r}")
    return obj, env_cfg, header


def save_student(path, student, env_cfg: EnvConfig, meta: dict | None = None) -> None:
    arrays: dict = {}
    sizes = {"student": _pack_mlp("student", student.net, arrays), "act_dim": student.act_dim}
    arrays["obs_offset"] = student.obs_offset
    arrays["obs_scale"] = student.obs_scale
    arrays["header"] = np.array(_header("student", env_cfg, sizes, meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
