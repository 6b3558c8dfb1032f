import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rltsp import agent, neural
from rltsp.agent import ActorCritic, EpisodeBatch
from rltsp.exceptions import NumericError, ShapeError
from rltsp.tsp_core import random_instance, tour_length


def make(n, seed=0, batch=3):
    inst = random_instance(n, seed)
    ac = ActorCritic.create(n, seed)
    rng = np.random.default_rng(seed)
    tours = np.array([rng.permutation(n) for _ in range(batch)])
    return inst, ac, EpisodeBatch.from_tours(inst, tours)


def test_widths():
    assert agent.actor_widths(10) == [20, 64, 32, 32, 32, 32, 10]
    assert agent.critic_widths(10) == [20, 64, 32, 32, 16, 8, 1]


def test_encoding_follows_tour_order():
    inst = random_instance(4, 0)
    enc = agent.encode_episode(inst, [2, 0, 3, 1])
    np.testing.assert_array_equal(enc, inst.cities[[2, 0, 3, 1]].ravel())


def test_batch_lengths():
    inst, _, batch = make(6)
    for t, L in zip(batch.episodes, batch.lengths):
        assert L == pytest.approx(tour_length(inst, t))


def test_log_prob_hand_computed():
    s = np.array([0.1, 0.2, 0.3, 0.4])
    # first city given, then 2 of {1,2,3}, then 1 of {1,3}
    expected = np.log(0.3 / 0.9) + np.log(0.2 / 0.6)
    assert agent.actor_log_prob(s, [0, 2, 1, 3]) == pytest.approx(expected)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_log_prob_is_a_distribution(n):
    s = np.random.default_rng(n).dirichlet(np.ones(n))
    for start in range(n):
        rest = [c for c in range(n) if c != start]
        total = sum(np.exp(agent.actor_log_prob(s, (start, *p))) for p in itertools.permutations(rest))
        assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10_000))
def test_log_prob_grad_matches_fd(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.random(n) + 0.05
    tour = rng.permutation(n)
    g = agent.actor_log_prob_grad(s, tour)
    h = 1e-6
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        fd = (agent.actor_log_prob(s + e, tour) - agent.actor_log_prob(s - e, tour)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_log_prob_rejects_zero_scores():
    with pytest.raises(NumericError):
        agent.actor_log_prob(np.array([0.5, 0.5, 0.0]), [0, 1, 2])


def test_relative_targets():
    np.testing.assert_allclose(agent.relative_targets([0.25] * 4), 1.0)
    np.testing.assert_allclose(agent.relative_targets([0.1, 0.1, 0.8]), [0.3, 0.3, 1.0])


def test_actor_v_is_probability_vector():
    _, ac, batch = make(7)
    v = agent.actor_v(ac, batch)
    assert v.shape == (7,) and v.sum() == pytest.approx(1.0) and v.min() > 0


def _fd_params(net, f, h=1e-6):
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        flat, gf = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = f()
            flat[k] = old - h
            down = f()
            flat[k] = old
            gf[k] = (up - down) / (2 * h)
        out.append(g)
    return out


def _rel_err(a, b):
    a, b = np.concatenate([x.ravel() for x in a]), np.concatenate([x.ravel() for x in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_actor_gradient_matches_fd():
    _, ac, batch = make(5, seed=2)
    base = agent.critic_predict(ac, batch)
    grads, _ = agent.actor_gradient(ac, batch, base)
    fd = _fd_params(ac.actor, lambda: agent.actor_gradient(ac, batch, base)[1])
    assert _rel_err(grads, fd) < 1e-4


def test_critic_gradient_matches_fd():
    _, ac, batch = make(5, seed=4)

    def mse():
        pred, _ = neural.forward(ac.critic, batch.encodings)
        return float(np.mean((pred[:, 0] - batch.lengths) ** 2))

    pred, trace = neural.forward(ac.critic, batch.encodings)
    err = pred[:, 0] - batch.lengths
    grads = neural.backward(ac.critic, trace, (2.0 / len(batch)) * err[:, None])
    assert _rel_err(grads, _fd_params(ac.critic, mse)) < 1e-4


def test_critic_step_reduces_loss():
    _, ac, batch = make(6, seed=1, batch=4)
    first, _ = agent.critic_step(ac, batch)
    for _ in range(200):
        last, _ = agent.critic_step(ac, batch)
    assert last < first


def test_reinforce_favors_the_shorter_tour():
    inst, ac, _ = make(6, seed=3)
    tours = np.array([[0, 1, 2, 3, 4, 5], [0, 3, 1, 4, 2, 5]])
    batch = EpisodeBatch.from_tours(inst, tours)
    probs0, _ = neural.forward(ac.actor, batch.encodings)
    # pin the baseline between the two lengths by hand
    b = np.full(2, batch.lengths.mean())
    for _ in range(30):
        grads, _ = agent.actor_gradient(ac, batch, b)
        neural.rmsprop_step(ac.actor_opt, ac.actor.params, grads)
    probs1, _ = neural.forward(ac.actor, batch.encodings)
    short, long_ = np.argsort(batch.lengths)

    def margin(probs):
        # with opposite advantages the surrogate is proportional to -margin
        return agent.actor_log_prob(probs[short], tours[short]) - agent.actor_log_prob(
            probs[long_], tours[long_]
        )

    assert margin(probs1) > margin(probs0)


def test_shape_checks():
    inst = random_instance(5, 0)
    with pytest.raises(ShapeError):
        agent.encode_episodes(inst, np.zeros((2, 4), int))
    with pytest.raises(ShapeError):
        ActorCritic(
            neural.init_net([10, 4, 5], "softmax", 0),
            neural.init_net([8, 4, 1], "linear", 0),
            None,
            None,
        )


def test_worked_examples():
    tri = random_instance(3, 1)
    np.testing.assert_array_equal(agent.encode_episode(tri, [0, 1, 2]), tri.cities.ravel())
    # uniform scores with a given start: log(1/(n-1)!)
    assert agent.actor_log_prob(np.full(5, 0.2), [3, 1, 0, 4, 2]) == pytest.approx(-np.log(24))


def test_zero_actor_and_single_row():
    inst, ac, batch = make(5)
    zero = ActorCritic(neural.zeros_net(agent.actor_widths(5), "softmax"), ac.critic,
                       ac.actor_opt, ac.critic_opt)
    np.testing.assert_allclose(agent.actor_v(zero, batch), 0.2)
    one = EpisodeBatch.from_tours(inst, batch.episodes[:1])
    probs, _ = neural.forward(ac.actor, one.encodings)
    np.testing.assert_array_equal(agent.actor_v(ac, one), probs[0])


def test_zero_advantage_leaves_actor_alone():
    _, ac, batch = make(6)
    before = [p.copy() for p in ac.actor.params]
    grads, _ = agent.actor_gradient(ac, batch, batch.lengths)
    assert all(np.all(g == 0) for g in grads)
    neural.rmsprop_step(ac.actor_opt, ac.actor.params, grads)
    assert all(np.array_equal(a, b) for a, b in zip(before, ac.actor.params))


def test_good_tour_gains_likelihood():
    inst, ac, _ = make(7, seed=5)
    batch = EpisodeBatch.from_tours(inst, [np.arange(7)])
    probs, _ = neural.forward(ac.actor, batch.encodings)
    before = agent.actor_log_prob(probs[0], batch.episodes[0])
    grads, _ = agent.actor_gradient(ac, batch, batch.lengths + 1.0)
    neural.rmsprop_step(ac.actor_opt, ac.actor.params, grads)
    probs, _ = neural.forward(ac.actor, batch.encodings)
    assert agent.actor_log_prob(probs[0], batch.episodes[0]) > before


def test_critic_examples():
    inst, ac, batch = make(5, batch=4)
    zero = ActorCritic(ac.actor, neural.zeros_net(agent.critic_widths(5), "linear"),
                       ac.actor_opt, neural.OptimizerState.for_net(
                           neural.zeros_net(agent.critic_widths(5), "linear"), 2e-4))
    flat = EpisodeBatch(batch.episodes, np.full(4, 3.0), batch.encodings)
    mse, _ = agent.critic_step(zero, flat)
    assert mse == pytest.approx(9.0)
    mse0, _ = agent.critic_step(ac, batch)
    for _ in range(500):
        mse, _ = agent.critic_step(ac, batch)
    assert mse <= mse0 / 10


def test_baseline_is_constant_for_actor():
    _, ac, batch = make(6)
    b = agent.critic_predict(ac, batch)
    g1, _ = agent.actor_gradient(ac, batch, b)
    for p in ac.critic.params:
        p += 0.1
    g2, _ = agent.actor_gradient(ac, batch, b)
    assert all(np.array_equal(x, y) for x, y in zip(g1, g2))
