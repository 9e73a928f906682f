from __future__ import annotations

import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from busevac.errors import ContractViolation, NumericalError
from busevac.ppo import EvacEnv, PpoConfig, PpoPolicy, init_params, load_checkpoint, save_checkpoint, train
from busevac.ppo.losses import clipped_objective, entropy, gae, total_loss, value_loss
from busevac.ppo.model import forward, loss_and_grads
from busevac.ppo.train import Adam, _clip_norm
from busevac.simulator import SimConfig, run_episode
from busevac.synthetic import generate

from oracles import central_differences, gae_double_sum, random_batch


def test_gae_examples():
    assert gae([2.0], [0.5, 0.0], 1.0, 1.0)[0] == pytest.approx(1.5)
    assert np.allclose(gae([1, 1], [0, 0, 0], 0.5, 0.5), [1.25, 1.0])
    r, v = [1.0, -2.0, 3.0], [0.1, 0.4, -0.3, 0.7]
    td = [r[t] + 0.9 * v[t + 1] - v[t] for t in range(3)]
    assert np.allclose(gae(r, v, 0.9, 0.0), td)
    with pytest.raises(ContractViolation):
        gae([1.0], [0.0], 0.9, 0.9)


@settings(max_examples=200)
@given(st.integers(1, 50), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_gae_equals_double_sum(n, gamma, lam, seed):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=n), rng.normal(size=n + 1)
    dones = rng.random(n) < 0.1
    assert np.allclose(gae(r, v, gamma, lam, dones), gae_double_sum(r, v, dones, gamma, lam),
                       atol=1e-10, rtol=0)


@pytest.mark.parametrize("ratio, adv, expected", [(1.0, 1.0, 1.0), (1.5, 1.0, 1.2), (0.5, -1.0, -0.8)])
def test_clipped_objective_examples(ratio, adv, expected):
    assert clipped_objective(ratio, adv, 0.2) == pytest.approx(expected)


@settings(max_examples=200)
@given(st.floats(0.01, 5), st.floats(-10, 10), st.floats(0.01, 0.5))
def test_clipped_objective_is_a_lower_bound(ratio, adv, eps):
    assert clipped_objective(ratio, adv, eps) <= ratio * adv + 1e-12


def test_value_loss_examples():
    assert value_loss([1, 2], [1, 2]) == 0
    assert value_loss([0, 0], [1, 3]) == 5
    assert value_loss([2], [5]) == 9


def test_total_loss_examples():
    assert total_loss(1.0, 0.0, 0.0, 0.5, 0.01) == 1.0
    assert total_loss(1.2, 5.0, 0.6931, 0.5, 0.01) == pytest.approx(-1.293069)
    assert total_loss(0.7, 3.0, 2.0, 0.0, 0.0) == 0.7


def test_entropy_examples():
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert entropy([0, 1, 0]) == 0
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5 * math.log(2))


def test_forward_single_slot_and_uniform():
    rng = np.random.default_rng(0)
    p = init_params(5, 2, 4, rng, hidden=(8,), zero_policy_head=True)
    mask = np.array([[True, False, True, True], [False, True, False, False]])
    probs, value = forward(p, rng.normal(size=5), mask)
    assert np.allclose(probs[0], [1 / 3, 0, 1 / 3, 1 / 3])
    assert np.allclose(probs[1], [0, 1, 0, 0])
    assert np.isfinite(value)
    with pytest.raises(ValueError):
        forward(p, np.zeros(4), mask)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(1)
    p = init_params(5, 2, 3, rng, hidden=(6,))
    for w in p.weights.values():
        w += rng.normal(scale=0.3, size=w.shape)
    batch = random_batch(p, 6, rng)
    coefs = dict(clip_epsilon=0.2, value_coef=0.5, entropy_coef=0.05)
    _, grads = loss_and_grads(p, batch, **coefs)
    fd = central_differences(lambda: loss_and_grads(p, batch, **coefs, with_grads=False)[0]["objective"],
                             p.weights)
    for key in grads:
        assert np.allclose(grads[key], fd[key], rtol=1e-4, atol=1e-7), key


def test_adam_moves_uphill():
    w = {"x": np.array([0.0])}
    opt = Adam(0.1)
    for _ in range(200):
        opt.ascend(w, {"x": -2 * (w["x"] - 3.0)})
    assert w["x"][0] == pytest.approx(3.0, abs=0.05)


def test_non_finite_gradient_aborts():
    with pytest.raises(NumericalError):
        _clip_norm({"w": np.array([np.nan])}, 0.5)


def test_config_validation():
    with pytest.raises(ContractViolation):
        PpoConfig(gamma=1.5)
    with pytest.raises(ContractViolation):
        PpoConfig(observation="pixels")
    assert PpoConfig.from_dict({"updates": 3, "junk": 1}).updates == 3


def test_env_layout(net, scenario):
    env = EvacEnv(net, scenario, SimConfig())
    assert env.obs_dim == 27 and env.n_buses == 2 and env.n_slots == 5
    decision, done = env.reset()
    assert not done and decision.deciding.any()
    assert (decision.slot_mask.sum(axis=1)[decision.deciding] > 1).all()


def test_zero_updates_returns_initialisation(net, scenario):
    cfg = PpoConfig(updates=0, hidden=(8,))
    a = train(net, scenario, SimConfig(), cfg)
    b = train(net, scenario, SimConfig(), cfg)
    assert a.history == [] and a.updates == 0
    for k in a.params.weights:
        assert np.array_equal(a.params.weights[k], b.params.weights[k])


def test_training_is_seed_deterministic(net, scenario):
    cfg = PpoConfig(updates=2, hidden=(8,), episodes_per_update=2, seed=5)
    a = train(net, scenario, SimConfig(max_steps=100), cfg)
    b = train(net, scenario, SimConfig(max_steps=100), cfg)
    assert a.history == b.history


def test_checkpoint_round_trip_and_layout_check(tmp_path, net, scenario):
    cfg = PpoConfig(updates=1, hidden=(8,), episodes_per_update=1)
    res = train(net, scenario, SimConfig(max_steps=100), cfg)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, res.params, cfg, res.updates, res.optimizer)
    params, cfg2, updates, opt = load_checkpoint(path, res.params.layout_hash)
    assert cfg2 == cfg and updates == 1 and opt.t == res.optimizer.t
    for k in params.weights:
        assert np.array_equal(params.weights[k], res.params.weights[k])
    with pytest.raises(ContractViolation):
        load_checkpoint(path, "0" * 16)
    other_net, other_sc = generate(0)
    with pytest.raises(ContractViolation):
        PpoPolicy(params, other_net, other_sc, SimConfig())


def test_resume_with_zero_updates_keeps_weights(tmp_path, net, scenario):
    cfg = PpoConfig(updates=1, hidden=(8,), episodes_per_update=1)
    res = train(net, scenario, SimConfig(max_steps=100), cfg)
    again = train(net, scenario, SimConfig(max_steps=100), PpoConfig(updates=0, hidden=(8,)),
                  params=res.params.copy(), optimizer=res.optimizer)
    for k in res.params.weights:
        assert np.array_equal(again.params.weights[k], res.params.weights[k])


def test_warm_started_policy_finishes_evacuation(net, scenario):
    sim = SimConfig(max_steps=200)
    cfg = PpoConfig(updates=0, hidden=(16,), warm_start="greedy", observation="distances")
    res = train(net, scenario, sim, cfg)
    final = run_episode(net, scenario, sim, PpoPolicy(res.params, net, scenario, sim)).final
    assert final.waiting == 0 and final.onboard == 0
