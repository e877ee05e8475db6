import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import relative_error
from efgcl_lab.rlcore import (Adam, ConfigurationError, GaussianPolicyOut, MlpCache, MlpParams, PpoConfig,
                              RolloutBatch, Transition, clip_grad_norm, compute_gae, gaussian_entropy,
                              gaussian_log_prob, init_mlp, make_policy, mlp_backward, mlp_forward,
                              normalize_advantages, policy_loss_and_grads, ppo_clip_objective, ppo_update,
                              sample_action, value_loss_and_grads)
from efgcl_lab.rlcore.ppo import PpoTrainer, log_prob
from oracles import central_difference, dense_forward, gae_brute_force

LOG_2PI = math.log(2 * math.pi)


# ---------------------------------------------------------------- mlp_forward

def test_zero_net_outputs_zero(rng):
    net = MlpParams([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    assert np.array_equal(mlp_forward(net, rng.standard_normal(3)), np.zeros(2))


def test_identity_single_layer():
    net = MlpParams([np.eye(2)], [np.zeros(2)])
    assert np.array_equal(mlp_forward(net, np.array([1.0, 2.0])), [1.0, 2.0])


def test_random_2_4_1_net_matches_dense_oracle(rng):
    net = init_mlp([2, 4, 1], rng)
    for b in net.biases:
        b[...] = rng.standard_normal(b.shape)
    x = rng.standard_normal(2)
    assert np.max(np.abs(mlp_forward(net, x) - dense_forward(net.weights, net.biases, x))) < 1e-12


@given(st.integers(1, 5), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_forward_matches_oracle_on_random_shapes(n_in, hidden, n_out, seed):
    r = np.random.default_rng(seed)
    net = init_mlp([n_in, hidden, hidden, n_out], r)
    x = r.standard_normal(n_in)
    assert np.allclose(mlp_forward(net, x), dense_forward(net.weights, net.biases, x), atol=1e-12, rtol=0)


def test_forward_batches_rows_independently(rng):
    net = init_mlp([3, 5, 2], rng)
    xs = rng.standard_normal((7, 3))
    stacked = np.stack([mlp_forward(net, x) for x in xs])
    assert np.allclose(mlp_forward(net, xs), stacked, atol=1e-14)


def test_forward_dimension_mismatch_is_configuration_error(rng):
    net = init_mlp([3, 4, 1], rng)
    with pytest.raises(ConfigurationError):
        mlp_forward(net, np.zeros(2))


def test_params_reject_incompatible_layers():
    with pytest.raises(ConfigurationError):
        MlpParams([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])


def test_flat_round_trip(rng):
    net = init_mlp([3, 4, 2], rng)
    vec = rng.standard_normal(net.n_params)
    net.set_flat(vec)
    assert np.array_equal(net.flat(), vec)


# ---------------------------------------------------------------- gradients

def _check_mlp_gradient(net, x, r):
    proj = r.standard_normal((x.shape[0], net.sizes[-1]))

    def f():
        return float(np.sum(mlp_forward(net, x) * proj))

    cache = MlpCache()
    mlp_forward(net, x, cache)
    gw, gb, gx = mlp_backward(net, cache, proj)
    analytic = []
    for w, b in zip(gw, gb):
        analytic += [w, b]
    numeric = central_difference(f, net.arrays())
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def test_mlp_backward_matches_finite_differences(rng):
    net = init_mlp([4, 16, 16, 3], rng)
    x = rng.standard_normal((5, 4))
    assert _check_mlp_gradient(net, x, rng) < 1e-4


def test_policy_gradient_matches_finite_differences(rng):
    pol = make_policy(3, 2, rng, hidden=(8, 8), init_log_std=-0.3)
    pol.net.weights[-1] *= 30.0  # move the means away from zero
    obs = rng.standard_normal((12, 3))
    out = pol(obs)
    actions = out.mean + np.exp(out.log_std) * rng.standard_normal((12, 2))
    old_lp = gaussian_log_prob(actions, out.mean, out.log_std) + rng.uniform(-0.3, 0.3, 12)
    adv = rng.standard_normal(12)
    _, grads, _ = policy_loss_and_grads(pol, obs, actions, old_lp, adv, 0.2, entropy_coef=0.01)

    def f():
        return policy_loss_and_grads(pol, obs, actions, old_lp, adv, 0.2, entropy_coef=0.01)[0]

    numeric = central_difference(f, pol.arrays())
    assert max(relative_error(a, n) for a, n in zip(grads, numeric)) < 1e-4


def test_two_parameter_surrogate_gradient_matches_finite_differences():
    # one weight (1x1, no hidden layer) plus one log-std: exactly two free parameters
    pol = make_policy(1, 1, np.random.default_rng(0), hidden=())
    pol.net.weights[0][...] = 0.7
    pol.log_std[...] = -0.2
    obs = np.array([[0.5], [-1.0], [2.0]])
    actions = np.array([[0.1], [-0.9], [1.0]])
    old_lp = log_prob(pol, obs, actions) + np.array([0.05, -0.1, 0.02])
    adv = np.array([1.0, -0.5, 0.3])
    _, grads, _ = policy_loss_and_grads(pol, obs, actions, old_lp, adv, 0.2)
    params = [pol.net.weights[0], pol.log_std]
    analytic = [grads[0], grads[2]]

    def f():
        return policy_loss_and_grads(pol, obs, actions, old_lp, adv, 0.2)[0]

    numeric = central_difference(f, params)
    for a, n in zip(analytic, numeric):
        assert relative_error(a, n) < 1e-4


def test_value_gradient_matches_finite_differences(rng):
    net = init_mlp([4, 8, 8, 1], rng)
    obs = rng.standard_normal((9, 4))
    ret = rng.standard_normal(9)
    _, grads, _ = value_loss_and_grads(net, obs, ret, 0.5)
    numeric = central_difference(lambda: value_loss_and_grads(net, obs, ret, 0.5)[0], net.arrays())
    assert max(relative_error(a, n) for a, n in zip(grads, numeric)) < 1e-4


# ---------------------------------------------------------------- Gaussian policy

def test_sample_at_mean_has_peak_density():
    out = GaussianPolicyOut(np.array([0.3, -1.0, 2.0]), np.array([-0.5, 0.1, 0.2]))
    a, lp = sample_action(out, np.zeros(3))
    assert np.array_equal(a, out.mean)
    assert lp == pytest.approx(-np.sum(out.log_std) - 1.5 * LOG_2PI, abs=1e-12)


def test_standard_normal_at_one():
    a, lp = sample_action(GaussianPolicyOut(np.zeros(1), np.zeros(1)), np.ones(1))
    assert np.array_equal(a, [1.0])
    assert lp == pytest.approx(-0.5 - 0.5 * LOG_2PI, abs=1e-12)


def test_density_integrates_to_one_by_quadrature(rng):
    mean, log_std = rng.normal(), rng.uniform(-2, 0.5)
    sigma = math.exp(log_std)
    grid = np.linspace(mean - 12 * sigma, mean + 12 * sigma, 20001)
    dens = np.exp(gaussian_log_prob(grid[:, None], np.array([mean]), np.array([log_std])))
    total = np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))
    assert abs(total - 1.0) < 1e-3


def test_entropy_matches_quadrature(rng):
    log_std = np.array([rng.uniform(-1, 0.5)])
    sigma = math.exp(log_std[0])
    grid = np.linspace(-12 * sigma, 12 * sigma, 20001)
    lp = gaussian_log_prob(grid[:, None], np.zeros(1), log_std)
    integrand = -np.exp(lp) * lp
    h = np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(grid))
    assert gaussian_entropy(log_std) == pytest.approx(h, abs=1e-6)


def test_sample_rejects_wrong_noise_length():
    with pytest.raises(ConfigurationError):
        sample_action(GaussianPolicyOut(np.zeros(2), np.zeros(2)), np.zeros(3))


def test_log_std_projected_into_bounds(rng):
    pol = make_policy(2, 2, rng)
    pol.log_std[...] = [-10.0, 5.0]
    assert np.array_equal(pol(np.zeros(2)).log_std, [-4.0, 1.0])
    pol.project()
    assert np.array_equal(pol.log_std, [-4.0, 1.0])


# ---------------------------------------------------------------- GAE

def _single_column(rewards, values, dones, gamma, lam):
    T = len(rewards)
    return RolloutBatch(np.zeros((T, 1, 1)), np.zeros((T, 1, 1)), np.zeros((T, 1)),
                        np.asarray(rewards, float)[:, None], np.asarray(values, float)[:, None],
                        np.asarray(dones, bool)[:, None], np.ones((T, 1), bool), gamma, lam)


def test_gae_single_step():
    adv, ret = compute_gae(_single_column([1.0], [0.0], [False], 1.0, 1.0), np.array([0.0]))
    assert adv[0, 0] == 1.0 and ret[0, 0] == 1.0


def test_gae_lambda_zero_is_td_error(rng):
    r, v = rng.standard_normal(6), rng.standard_normal(6)
    boot, gamma = 0.4, 0.9
    adv, _ = compute_gae(_single_column(r, v, [False] * 6, gamma, 0.0), np.array([boot]))
    nxt = np.append(v[1:], boot)
    assert np.allclose(adv[:, 0], r + gamma * nxt - v, atol=1e-15, rtol=0)


def test_gae_five_steps_matches_brute_force(rng):
    r, v = rng.standard_normal(5), rng.standard_normal(5)
    adv, ret = compute_gae(_single_column(r, v, [False] * 5, 0.97, 0.9), np.array([0.3]))
    expected = gae_brute_force(r, v, [False] * 5, 0.3, 0.97, 0.9)
    assert np.max(np.abs(adv[:, 0] - expected)) < 1e-12
    assert np.allclose(ret[:, 0], expected + v, atol=1e-12)


@given(st.integers(1, 20), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_gae_equals_truncated_sum(T, gamma, lam, seed):
    r = np.random.default_rng(seed)
    rewards, values = r.standard_normal(T), r.standard_normal(T)
    dones = r.random(T) < 0.2
    boot = r.standard_normal()
    adv, _ = compute_gae(_single_column(rewards, values, dones, gamma, lam), np.array([boot]))
    assert np.max(np.abs(adv[:, 0] - gae_brute_force(rewards, values, dones, boot, gamma, lam))) < 1e-10


def test_gae_ignores_padding(rng):
    # column 0 lasts 6 steps, column 1 only 3; the padded tail must not leak into column 1
    r, v = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    seqs = [[Transition(np.zeros(1), np.zeros(1), 0.0, r[t, i], v[t, i], False) for t in range(n)]
            for i, n in enumerate((6, 3))]
    batch = RolloutBatch.from_sequences(seqs, gamma=0.95, lam=0.9)
    boot = np.array([0.2, -0.7])
    adv, _ = compute_gae(batch, boot)
    assert np.allclose(adv[:3, 1], gae_brute_force(r[:3, 1], v[:3, 1], [False] * 3, -0.7, 0.95, 0.9), atol=1e-12)
    assert np.all(adv[3:, 1] == 0.0)


def test_gae_terminal_step_ignores_bootstrap(rng):
    r, v = rng.standard_normal(4), rng.standard_normal(4)
    dones = [False, False, False, True]
    a1, _ = compute_gae(_single_column(r, v, dones, 0.9, 0.8), np.array([0.0]))
    a2, _ = compute_gae(_single_column(r, v, dones, 0.9, 0.8), np.array([123.0]))
    assert np.array_equal(a1, a2)


def test_gae_rejects_empty_batch():
    with pytest.raises(ValueError):
        RolloutBatch.from_sequences([])
    with pytest.raises(ValueError):
        compute_gae(_single_column([], [], [], 0.9, 0.9), np.zeros(1))


def test_batch_rejects_out_of_range_discount():
    with pytest.raises(ValueError):
        _single_column([1.0], [0.0], [False], 1.2, 0.9)


# ---------------------------------------------------------------- PPO

def test_clip_objective_examples():
    assert ppo_clip_objective(0.0, 0.0, 1.0, 0.2) == pytest.approx(1.0)
    assert ppo_clip_objective(math.log(2.0), 0.0, 1.0, 0.2) == pytest.approx(1.2)
    assert ppo_clip_objective(math.log(0.5), 0.0, -1.0, 0.2) == pytest.approx(-0.8)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5), st.floats(0.01, 0.5), st.floats(-50, 50))
def test_clip_objective_invariant_to_shared_log_prob_shift(new, old, adv, eps, shift):
    a = ppo_clip_objective(new, old, adv, eps)
    b = ppo_clip_objective(new + shift, old + shift, adv, eps)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_advantage_normalization_keeps_argmax(values):
    adv = np.array(values)
    top = np.sort(adv)
    if top[-1] - top[-2] < 1e-6:
        return  # no unique maximum
    norm = normalize_advantages(adv)
    assert adv[np.argmax(norm)] == adv.max()
    assert abs(norm.mean()) < 1e-8


def _batch_from(obs, actions, log_probs, adv, ret):
    n = len(adv)
    batch = RolloutBatch(obs[None], actions[None], log_probs[None], np.zeros((1, n)), np.zeros((1, n)),
                         np.zeros((1, n), bool), np.ones((1, n), bool))
    batch.advantages, batch.returns = adv[None], ret[None]
    return batch


def test_zero_advantages_leave_policy_exactly_unchanged(rng):
    pol = make_policy(3, 2, rng, hidden=(8, 8))
    value = init_mlp([3, 8, 1], rng)
    obs = rng.standard_normal((16, 3))
    act = rng.standard_normal((16, 2))
    batch = _batch_from(obs, act, log_prob(pol, obs, act), np.zeros(16), rng.standard_normal(16))
    new_pol, new_val, stats = ppo_update(batch, pol, value, PpoConfig(entropy_coef=0.0), rng)
    for a, b in zip(new_pol.arrays(), pol.arrays()):
        assert np.array_equal(a, b)
    assert not np.array_equal(new_val.flat(), value.flat())
    assert not stats.aborted


def test_update_raises_good_action_and_lowers_bad_one(rng):
    pol = make_policy(2, 1, rng, hidden=(8,))
    value = init_mlp([2, 8, 1], rng)
    o = rng.standard_normal(2)
    obs = np.stack([o, o])
    mean = pol(o).mean[0]
    act = np.array([[mean + 0.4], [mean - 0.4]])
    before = log_prob(pol, obs, act)
    batch = _batch_from(obs, act, before, np.array([1.0, -1.0]), np.zeros(2))
    cfg = PpoConfig(lr=1e-4, epochs=1, minibatches=1, target_kl=0.0)
    new_pol, _, _ = ppo_update(batch, pol, value, cfg, rng)
    after = log_prob(new_pol, obs, act)
    assert after[0] > before[0]
    assert after[1] < before[1]


def test_update_is_deterministic_given_seed(rng):
    pol = make_policy(3, 2, rng)
    value = init_mlp([3, 64, 64, 1], rng)
    obs = rng.standard_normal((64, 3))
    act = rng.standard_normal((64, 2))
    batch = _batch_from(obs, act, log_prob(pol, obs, act), rng.standard_normal(64), rng.standard_normal(64))
    p1, v1, _ = ppo_update(batch, pol, value, PpoConfig(), np.random.default_rng(7))
    p2, v2, _ = ppo_update(batch, pol, value, PpoConfig(), np.random.default_rng(7))
    assert np.array_equal(np.concatenate([a.ravel() for a in p1.arrays()]),
                          np.concatenate([a.ravel() for a in p2.arrays()]))
    assert np.array_equal(v1.flat(), v2.flat())


def test_non_finite_gradient_aborts_and_restores(rng):
    pol = make_policy(3, 1, rng)
    value = init_mlp([3, 8, 1], rng)
    trainer = PpoTrainer(pol, value, PpoConfig())
    before = [a.copy() for a in pol.arrays()] + [a.copy() for a in value.arrays()]
    obs = rng.standard_normal((8, 3))
    obs[3, 1] = np.nan
    act = rng.standard_normal((8, 1))
    batch = _batch_from(obs, act, np.zeros(8), rng.standard_normal(8), rng.standard_normal(8))
    stats = trainer.update(batch, rng)
    assert stats.aborted and "non-finite" in stats.message
    for a, b in zip(pol.arrays() + value.arrays(), before):
        assert np.array_equal(a, b)


def test_update_requires_advantages(rng):
    pol = make_policy(3, 1, rng)
    trainer = PpoTrainer(pol, init_mlp([3, 4, 1], rng), PpoConfig())
    batch = _batch_from(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros(2), np.zeros(2), np.zeros(2))
    batch.advantages = None
    with pytest.raises(ValueError):
        trainer.update(batch, rng)


def test_config_rejects_non_positive_clip():
    with pytest.raises(ValueError):
        PpoConfig(clip_eps=0.0)


# ---------------------------------------------------------------- optimizer

def test_adam_first_two_steps_match_hand_computation():
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    g1, g2 = np.array([0.5, -3.0]), np.array([1.0, 1.0])
    opt.step([g1])
    assert np.allclose(p, [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 3.0 / (3.0 + 1e-8)], atol=1e-15)
    expected = p.copy()
    m = 0.9 * (0.1 * g1) + 0.1 * g2
    v = 0.999 * (0.001 * g1 ** 2) + 0.001 * g2 ** 2
    m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    expected -= 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    opt.step([g2])
    assert np.allclose(p, expected, atol=1e-14)


def test_clip_grad_norm_scales_to_bound():
    grads = [np.array([3.0, 0.0]), np.array([[4.0]])]
    norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(sum(np.sum(g * g) for g in grads)) == pytest.approx(1.0)
