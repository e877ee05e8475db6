import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from efgcl_lab.harness import (ConfigError, ExperimentConfig, MetricsRow, RunMetrics, format_config, make_agent,
                               parse_config, run_episodes, run_training)
from efgcl_lab.harness.checkpoint import load_checkpoint, save_checkpoint
from efgcl_lab.harness.experiments import (ArmResult, ComparisonResult, ValueProbeResult, preset, probe_mse,
                                           run_ablation, run_comparison)
from efgcl_lab.harness.plot import write_learning_curve_svg
from efgcl_lab.harness.training import agent_actor, make_patterns, sample_commands
from efgcl_lab.envs import flipper_config, jumper_config

TINY = dict(n_envs=6, hidden=16)


# ---------------------------------------------------------------- config parsing

def test_empty_config_is_all_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.task == "jump" and cfg.efgcl


def test_efgcl_off():
    assert parse_config("efgcl = off").efgcl is False


def test_negative_epsilon_rejected_naming_key_and_line():
    with pytest.raises(ConfigError, match=r"line 2.*curriculum\.epsilon"):
        parse_config("# comment\ncurriculum.epsilon = -1\n")


def test_unknown_key_rejected_naming_key_and_line():
    with pytest.raises(ConfigError, match=r"line 3: unknown key 'run\.bogus'"):
        parse_config("[run]\niterations = 5\nbogus = 1\n")


def test_type_mismatch_rejected():
    with pytest.raises(ConfigError, match=r"line 1: bad value for 'run\.iterations'"):
        parse_config("run.iterations = many")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just words")


def test_sections_and_overrides():
    text = """
[task]
name = flip
variant = lateral
[ppo]
lr = 0.001
epochs = 3
[env]
kp = 500
[assist]
magnitude = 140
"""
    cfg = parse_config(text)
    assert (cfg.task, cfg.variant) == ("flip", "lateral")
    assert cfg.ppo.lr == 0.001 and cfg.ppo.epochs == 3 and isinstance(cfg.ppo.epochs, int)
    assert cfg.env_config().kp == 500.0
    assert cfg.assist.magnitude == 140.0


def test_env_range_violation_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("env.mass = -3")


def test_format_parse_round_trip():
    cfg = preset("flip", "lateral", seeds=(3, 4), efgcl=False)
    cfg.env_overrides["kd"] = 5.0
    assert parse_config(format_config(cfg)) == cfg


# ---------------------------------------------------------------- metrics

rows_strategy = st.lists(
    st.tuples(st.floats(-1e4, 1e4), st.floats(0, 1), st.floats(0, 1), st.integers(0, 200), st.floats(0, 1e3),
              st.integers(0, 10 ** 7)), max_size=30)


@given(rows_strategy)
def test_metrics_csv_round_trip(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("m") / "metrics.csv"
    m = RunMetrics([MetricsRow(i + 1, *r) for i, r in enumerate(raw)])
    m.write_csv(path)
    back = RunMetrics.read_csv(path)
    assert len(back.rows) == len(m.rows)
    for a, b in zip(m.rows, back.rows):
        assert a.iteration == b.iteration and a.stage == b.stage and a.wall_ms == b.wall_ms
        for name in ("reward_mean", "success_rate", "alpha", "value_loss"):
            assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-6)
    assert back.rows == RunMetrics.read_csv(path).rows


def test_metrics_header_is_stable(tmp_path):
    path = tmp_path / "metrics.csv"
    RunMetrics([MetricsRow(1, 0.5, 0.25, 1.0, 0, 0.1, 0)]).write_csv(path)
    assert path.read_text() == ("iteration,reward_mean,success_rate,alpha,stage,value_loss,wall_ms\n"
                                "1,0.500000,0.250000,1.000000,0,0.100000,0\n")


def test_metrics_reject_unordered_rows(tmp_path):
    path = tmp_path / "metrics.csv"
    RunMetrics([MetricsRow(2, 0, 0, 0, 0, 0), MetricsRow(1, 0, 0, 0, 0, 0)]).write_csv(path)
    with pytest.raises(ValueError):
        RunMetrics.read_csv(path)


# ---------------------------------------------------------------- training loop

@pytest.mark.parametrize("efgcl,alpha", [(True, 1.0), (False, 0.0)])
def test_single_iteration_budget(tmp_path, efgcl, alpha):
    cfg = preset("jump", iterations=1, efgcl=efgcl, **TINY)
    res = run_training(cfg, 0, out_dir=tmp_path)
    assert len(res.metrics.rows) == 1 and res.metrics.rows[0].alpha == alpha
    back = RunMetrics.read_csv(tmp_path / "metrics.csv")
    assert len(back.rows) == 1 and back.rows[0].alpha == alpha
    assert "iterations_run: 1" in (tmp_path / "summary.txt").read_text()
    assert (tmp_path / "final.npz").exists()


def test_alpha_trace_is_non_increasing_and_matches_stage(tmp_path):
    # a generous threshold so the curriculum actually moves in a few iterations
    cfg = preset("jump", iterations=12, zeta=0.01, epsilon=0.25, **TINY)
    res = run_training(cfg, 1, out_dir=tmp_path)
    rows = RunMetrics.read_csv(tmp_path / "metrics.csv").rows
    alphas = [r.alpha for r in rows]
    assert all(b <= a for a, b in zip(alphas, alphas[1:]))
    assert all(0.0 <= a <= 1.0 for a in alphas)
    for r in rows:
        assert r.alpha == pytest.approx(max(0.0, 1.0 - 0.25 * r.stage))
    assert res.curriculum.stage == rows[-1].stage + (1 if rows[-1].success_rate >= 0.01 and rows[-1].alpha > 0 else 0)


def test_baseline_never_applies_assist():
    env_cfg = jumper_config()
    agent = make_agent(env_cfg, np.random.default_rng(0), 16)
    cfg = preset("jump", efgcl=False, **TINY)
    commands = sample_commands(env_cfg, 6, np.random.default_rng(1))
    # even with patterns available, alpha 0 must not push
    res = run_episodes(env_cfg, agent_actor(agent), 6, np.random.default_rng(2), 0.0,
                       make_patterns(cfg, env_cfg, commands), commands)
    assert np.all(res.batch.assist == 0.0)
    res = run_episodes(env_cfg, agent_actor(agent), 6, np.random.default_rng(2), 1.0,
                       make_patterns(cfg, env_cfg, commands), commands)
    assert res.batch.assist.max() > 0.0


def test_baseline_run_logs_zero_alpha_everywhere(tmp_path):
    res = run_training(preset("jump", iterations=3, efgcl=False, **TINY), 0, out_dir=tmp_path)
    assert all(r.alpha == 0.0 for r in res.metrics.rows)


def test_episode_batch_shapes_and_masks():
    env_cfg = flipper_config()
    agent = make_agent(env_cfg, np.random.default_rng(0), 16)
    res = run_episodes(env_cfg, agent_actor(agent), 4, np.random.default_rng(0))
    b = res.batch
    assert b.obs.shape == (150, 4, env_cfg.prop_dim + env_cfg.priv_dim)
    for i in range(4):
        live = np.flatnonzero(b.mask[:, i])
        assert np.array_equal(live, np.arange(len(live)))  # contiguous from the start
        if res.causes[i] == 1:
            assert b.dones[live[-1], i]
        assert not b.dones[~b.mask[:, i], i].any()


def test_checkpoints_at_fractions(tmp_path):
    cfg = preset("jump", iterations=4, checkpoint_fractions=(0.5,), **TINY)
    res = run_training(cfg, 0, out_dir=tmp_path)
    assert list(res.checkpoints) == [0.5]
    assert (tmp_path / "ckpt_iter00002.npz").exists()


def test_periodic_checkpoints(tmp_path):
    cfg = preset("jump", iterations=5, checkpoint_every=2, **TINY)
    res = run_training(cfg, 0, out_dir=tmp_path)
    assert sorted(res.checkpoints) == [0.4, 0.8]
    assert sorted(p.name for p in tmp_path.glob("ckpt_iter*.npz")) == ["ckpt_iter00002.npz", "ckpt_iter00004.npz"]


def test_negative_checkpoint_interval_rejected():
    with pytest.raises(ConfigError, match="checkpoint_every"):
        parse_config("run.checkpoint_every = -1\n")


# ---------------------------------------------------------------- checkpoints

def test_teacher_checkpoint_round_trip(tmp_path):
    env_cfg = flipper_config("lateral", kd=4.0)
    agent = make_agent(env_cfg, np.random.default_rng(3), 16)
    save_checkpoint(tmp_path / "t.npz", agent, env_cfg, meta={"note": "x"})
    back, env_back, header = load_checkpoint(tmp_path / "t.npz")
    assert env_back == env_cfg
    assert header["kind"] == "teacher" and header["version"] == 1 and header["meta"] == {"note": "x"}
    obs = np.random.default_rng(0).standard_normal((5, env_cfg.prop_dim + env_cfg.priv_dim))
    assert np.array_equal(back.act_mean(obs), agent.act_mean(obs))
    assert np.array_equal(back.values(obs), agent.values(obs))


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, header=np.array(json.dumps({"format": "other", "version": 1})))
    with pytest.raises(ValueError):
        load_checkpoint(path)


# ---------------------------------------------------------------- experiments

def test_zero_budget_comparison_is_empty_with_undefined_ratio():
    cmp = run_comparison(preset("jump", iterations=0, seeds=(0, 1)))
    assert cmp.efgcl.runs == [] and cmp.baseline.runs == []
    assert cmp.speedup_ratio is None and not cmp.speedup_ok()
    assert "undefined" in cmp.summary_lines()[-1]


def test_comparison_needs_two_seeds():
    with pytest.raises(ValueError):
        run_comparison(preset("jump", iterations=2, seeds=(0,)))


def test_tiny_comparison_snapshots_both_arms_at_same_iterations():
    cmp = run_comparison(preset("jump", iterations=10, seeds=(0, 1), **TINY))
    assert cmp.baseline.budget == 15
    e, b = cmp.efgcl.runs[0], cmp.baseline.runs[0]
    assert sorted(round(f * 10) for f in e.checkpoints) == [1, 2, 5]
    assert sorted(round(f * 15) for f in b.checkpoints) == [1, 2, 5]


def test_empty_ablation_sweep():
    assert run_ablation(preset("flip", iterations=1), seeds=(0,), magnitudes=(), short_window=None) == []


def test_ablation_rejects_jump_task():
    with pytest.raises(ValueError):
        run_ablation(preset("jump"), magnitudes=())


def test_probe_mse_of_final_against_itself_is_zero():
    agent = make_agent(jumper_config(), np.random.default_rng(0), 16)
    probe = np.random.default_rng(1).standard_normal((30, jumper_config().prop_dim + 2))
    assert probe_mse(agent, agent, probe) == 0.0


def test_zero_value_net_gives_mean_square_of_final_values():
    cfg = jumper_config()
    final = make_agent(cfg, np.random.default_rng(0), 16)
    zero = final.copy()
    for a in zero.value.arrays():
        a[...] = 0.0
    probe = np.random.default_rng(1).standard_normal((30, cfg.prop_dim + 2))
    assert probe_mse(zero, final, probe) == pytest.approx(float(np.mean(final.values(probe) ** 2)), rel=1e-12)


def test_value_probe_wins_skip_gaps():
    vp = ValueProbeResult(efgcl={0.2: [0.1, None, 0.5]}, baseline={0.2: [0.2, 0.3, 0.4]})
    assert vp.wins == 1


def test_speedup_rule_when_baseline_never_reaches():
    class R:  # minimal stand-in for a TrainingResult
        def __init__(self, it):
            self.metrics = RunMetrics(iterations_to_threshold=it)

    cmp = ComparisonResult(ArmResult(True, 10, [0, 1, 2], [R(5), R(6), R(7)]),
                           ArmResult(False, 15, [0, 1, 2], [R(None), R(9), R(None)]))
    assert cmp.baseline.median_iterations is None and cmp.speedup_ok()
    cmp.baseline.runs = [R(9), R(10), R(None)]
    assert cmp.speedup_ratio == pytest.approx(0.6) and cmp.speedup_ok()
    cmp.baseline.runs = [R(9), R(9), R(None)]
    assert not cmp.speedup_ok()


def test_max_unassisted_success_ignores_assisted_iterations():
    def run(rows):
        return SimpleNamespace(metrics=RunMetrics(rows=[MetricsRow(i + 1, 0.0, rate, a, 0, 0.0, 0)
                                                        for i, (rate, a) in enumerate(rows)]))

    arm = ArmResult(True, 3, [0, 1], [run([(0.9, 0.5), (0.3, 0.0), (0.2, 0.0)]), run([(0.8, 1.0)])])
    assert arm.max_unassisted_success == [0.3, 0.0]


def test_learning_curve_svg(tmp_path):
    m = RunMetrics([MetricsRow(i, 0.0, i / 10, 1 - i / 10, i, 0.0) for i in range(1, 11)])
    write_learning_curve_svg(tmp_path / "c.svg", {"a<b": m})
    text = (tmp_path / "c.svg").read_text()
    assert text.startswith("<svg") and text.count("<polyline") == 2 and "a&lt;b" in text


def test_presets_valid():
    for task in ("jump", "flip"):
        cfg = preset(task)
        cfg.validate()
        assert math.isclose(cfg.epsilon, 0.01) and math.isclose(cfg.zeta, 0.6)
