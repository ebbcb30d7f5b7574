import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftsquint.core import (
    ExpertPrior,
    ProbabilityVector,
    build_grid,
    instantaneous_regret,
    kl_divergence,
    surrogate_loss_grid,
)
from driftsquint.algorithms import (
    EwPosterior,
    Hedge,
    Squint,
    bound_A,
    hedge_bound,
    hedge_default_rate,
    squint_bound,
    surrogate_regret,
)

from oracles import naive_hedge_trace, naive_squint_trace


# ---------------------------------------------------------------------------
# Hedge


def test_hedge_starts_at_prior():
    prior = ExpertPrior(ProbabilityVector([0.7, 0.3]))
    learner = Hedge(2, rate=0.5, prior=prior)
    assert np.allclose(learner.weights().p, [0.7, 0.3])


def test_hedge_shift_invariance():
    learner = Hedge(3, rate=1.3)
    for _ in range(4):
        learner.update([0.4, 0.4, 0.4])
    assert np.allclose(learner.weights().p, 1.0 / 3.0, atol=1e-12)


def test_hedge_hand_value():
    learner = Hedge(2, rate=1.0)
    learner.update([0.0, 1.0])
    w = learner.weights().p
    assert w[0] == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), abs=1e-9)
    assert w[0] == pytest.approx(0.731059, abs=1e-6)


def test_hedge_matches_naive_trace():
    rng = np.random.default_rng(0)
    losses = rng.random((20, 3))
    eta = hedge_default_rate(20, 3)
    learner = Hedge(3, rate=eta)
    expected = naive_hedge_trace(losses.tolist(), eta)
    for t in range(20):
        assert np.allclose(learner.weights().p, expected[t], atol=1e-12)
        learner.update(losses[t])


def test_hedge_default_rate_values():
    assert hedge_default_rate(32, 2) == pytest.approx(0.416277, abs=1e-6)
    # algebraic inversion: T = 8 ln 2 makes the rate exactly 1
    assert hedge_default_rate(8 * math.log(2), 2) == pytest.approx(1.0, abs=1e-12)
    rates = [hedge_default_rate(t, 4) for t in (4, 8, 32, 128, 1024)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    with pytest.raises(ValueError):
        hedge_default_rate(10, 1)


def test_hedge_bound_values():
    assert hedge_bound(2, 2) == pytest.approx(math.sqrt(math.log(2)), abs=1e-12)
    assert hedge_bound(1, 2) == pytest.approx(0.588705, abs=1e-6)
    assert hedge_bound(10, 4) > hedge_bound(10, 2)
    assert hedge_bound(20, 4) > hedge_bound(10, 4)


def test_hedge_bound_sampled_runs():
    rng = np.random.default_rng(7)
    for _ in range(40):
        horizon = int(rng.integers(1, 80))
        k = int(rng.choice([2, 4, 8]))
        losses = (rng.random((horizon, k)) < rng.random(k)).astype(float)
        learner = Hedge(k, horizon=horizon)
        total = np.zeros(k)
        for t in range(horizon):
            total += instantaneous_regret(learner.weights(), losses[t])
            learner.update(losses[t])
        assert total.max() <= hedge_bound(horizon, k) + 1e-9


# ---------------------------------------------------------------------------
# Exponential weights posterior


def test_ew_constant_losses_keep_prior():
    ew = EwPosterior.with_uniform_prior(4)
    ew.update(np.full(4, 2.2))
    assert np.allclose(ew.posterior().p, 0.25, atol=1e-12)


def test_ew_rate_zero_is_inert():
    ew = EwPosterior(np.log([0.6, 0.4]), rate=0.0)
    ew.update(np.array([5.0, -3.0]))
    assert np.allclose(ew.posterior().p, [0.6, 0.4], atol=1e-12)


def test_ew_hand_value():
    ew = EwPosterior.with_uniform_prior(2)
    ew.update(np.array([0.0, math.log(2.0)]))
    assert np.allclose(ew.posterior().p, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)


# ---------------------------------------------------------------------------
# Squint


def test_squint_prior_reproduction():
    prior = ExpertPrior(ProbabilityVector([0.2, 0.8]))
    learner = Squint(2, build_grid(64), prior=prior)
    assert np.allclose(learner.weights().p, [0.2, 0.8], atol=1e-12)


def test_squint_single_expert():
    learner = Squint(1, build_grid(8))
    assert np.allclose(learner.weights().p, [1.0])
    learner.update(learner.weights(), [0.3])
    assert np.allclose(learner.weights().p, [1.0])
    assert learner.R[0] == pytest.approx(0.0, abs=1e-15)


def test_squint_hand_value_single_rate():
    # grid {1/2}; after r = (.5, -.5): w_1 = e^.1875 / (e^.1875 + e^-.3125)
    learner = Squint(2, build_grid(2))
    w = learner.weights()
    assert np.allclose(w.p, 0.5)
    learner.update(w, [0.0, 1.0])
    got = learner.weights().p
    expected = math.exp(0.1875) / (math.exp(0.1875) + math.exp(-0.3125))
    assert got[0] == pytest.approx(expected, abs=1e-12)
    assert got[0] == pytest.approx(0.622459, abs=1e-6)


def test_squint_constant_losses_are_inert():
    learner = Squint(3, build_grid(16))
    for _ in range(5):
        w = learner.weights()
        learner.update(w, [0.6, 0.6, 0.6])
    assert np.allclose(learner.weights().p, 1.0 / 3.0, atol=1e-12)
    assert np.allclose(learner.R, 0.0, atol=1e-15)


def test_squint_state_is_additive():
    learner = Squint(2, build_grid(4))
    rates = learner.grid.array
    r_seen = []
    for losses in ([0.0, 1.0], [0.9, 0.1]):
        w = learner.weights()
        r_seen.append(learner.update(w, losses))
    stacked = np.array(r_seen)
    assert np.allclose(learner.R, stacked.sum(axis=0), atol=1e-12)
    assert np.allclose(learner.V, (stacked**2).sum(axis=0), atol=1e-12)
    expected_f = sum(surrogate_loss_grid(rates, r) for r in r_seen)
    assert np.allclose(learner.F, expected_f, atol=1e-12)


def test_squint_matches_naive_trace():
    rng = np.random.default_rng(5)
    losses = rng.random((24, 3))
    learner = Squint(3, build_grid(24))
    expected = naive_squint_trace(losses.tolist())
    for t in range(24):
        w = learner.weights()
        assert np.allclose(w.p, expected[t], atol=1e-9)
        learner.update(w, losses[t])


def test_squint_route_equivalence_random():
    rng = np.random.default_rng(11)
    for _ in range(10):
        horizon = int(rng.integers(2, 50))
        k = int(rng.integers(2, 5))
        losses = rng.random((horizon, k))
        learner = Squint(k, build_grid(horizon))
        for t in range(horizon):
            a = learner.weights().p
            b = learner.weights_from_moments().p
            assert np.max(np.abs(a - b)) <= 1e-9
            learner.update(a, losses[t])


# ---------------------------------------------------------------------------
# bounds and surrogate regret


def test_bound_A_values():
    assert bound_A(16, 0.25) == pytest.approx(math.log(8.0), abs=1e-12)
    assert bound_A(3, 1.0) == 1.0          # ln 1 - ln 1 clamps to 1
    assert bound_A(1, 0.5) == 1.0          # T = 1 grid term vanishes
    with pytest.raises(ValueError):
        bound_A(16, 0.0)


def test_squint_bound_values():
    assert squint_bound(0.0, 2.5) == pytest.approx(10.0)
    a = bound_A(16, 0.25)
    assert squint_bound(3.0, a) == pytest.approx(2 * math.sqrt(6 * a) + 4 * a)
    with pytest.raises(ValueError):
        squint_bound(-1.0, 1.0)


def test_squint_total_bound_sampled_runs():
    rng = np.random.default_rng(13)
    for _ in range(25):
        horizon = int(rng.integers(1, 120))
        k = int(rng.choice([2, 4]))
        losses = (rng.random((horizon, k)) < rng.random(k)).astype(float)
        learner = Squint(k, build_grid(horizon))
        total_r = np.zeros(k)
        total_v = np.zeros(k)
        for t in range(horizon):
            w = learner.weights()
            r = learner.update(w, losses[t])
            total_r += r
            total_v += r * r
        for kk in range(k):
            bound = squint_bound(total_v[kk], bound_A(horizon, 1.0 / k))
            assert total_r[kk] <= bound + 1e-9


def test_squint_total_bound_nonuniform_prior():
    # the bound holds for arbitrary expert priors, not only uniform
    rng = np.random.default_rng(41)
    for _ in range(25):
        horizon = int(rng.integers(2, 100))
        k = int(rng.choice([3, 5]))
        prior = ExpertPrior(ProbabilityVector.from_weights(np.arange(1, k + 1.0)))
        losses = (rng.random((horizon, k)) < rng.random(k)).astype(float)
        learner = Squint(k, build_grid(horizon), prior=prior)
        total_r, total_v = np.zeros(k), np.zeros(k)
        for t in range(horizon):
            w = learner.weights()
            r = learner.update(w, losses[t])
            total_r += r
            total_v += r * r
        for kset in [(kk,) for kk in range(k)] + [tuple(range(k // 2))]:
            cond = prior.conditional(kset)
            r_set = float(cond @ total_r[list(kset)])
            v_set = float(cond @ total_v[list(kset)])
            bound = squint_bound(v_set, bound_A(horizon, prior.mass(kset)))
            assert r_set <= bound + 1e-9


def test_surrogate_regret_empty_and_sign():
    q = ProbabilityVector.uniform(4)
    assert surrogate_regret([], [], q) == 0.0
    rng = np.random.default_rng(3)
    p1 = rng.random(4)
    p1 /= p1.sum()
    g1 = rng.uniform(-0.5, 0.5, size=4)
    # Q = P_1 and T = 1: mix loss <= expected loss, so S <= 0
    assert surrogate_regret([p1], [g1], ProbabilityVector(p1)) <= 1e-12


def test_surrogate_regret_telescoping_identity():
    # with EW(rate 1) posteriors, sum of mix losses telescopes to -ln Z_{T+1}
    rng = np.random.default_rng(17)
    n = 6
    ew = EwPosterior.with_uniform_prior(n)
    posteriors, losses = [], []
    for _ in range(3):
        g = rng.uniform(-0.7, 0.7, size=n)
        posteriors.append(ew.posterior().p)
        losses.append(g)
        ew.update(g)
    q = ProbabilityVector.from_weights(rng.random(n))
    direct = surrogate_regret(posteriors, losses, q)
    total = np.sum(losses, axis=0)
    z_final = float(np.mean(np.exp(-total)))
    via_z = -math.log(z_final) - q.expect(total)
    assert direct == pytest.approx(via_z, abs=1e-12)


def test_surrogate_inequalities_on_squint_run():
    rng = np.random.default_rng(29)
    horizon, k = 60, 3
    losses = (rng.random((horizon, k)) < np.array([0.3, 0.5, 0.7])).astype(float)
    grid = build_grid(horizon)
    learner = Squint(k, grid)
    mixes, total_r, total_v = [], np.zeros(k), np.zeros(k)
    for t in range(horizon):
        post = np.exp(learner.log_posterior())
        w = learner.weights()
        r = learner.update(w, losses[t])
        fhat = surrogate_loss_grid(grid.array, r)
        mixes.append(float(-np.log((post * np.exp(-fhat)).sum())))
        total_r += r
        total_v += r * r
        assert mixes[-1] >= -1e-12
    joint_prior = np.full((grid.size, k), 1.0 / (grid.size * k))
    for i, eta in enumerate(grid.array):
        for kk in range(k):
            s_q = sum(mixes) - (-eta * total_r[kk] + eta * eta * total_v[kk])
            assert eta * total_r[kk] <= eta * eta * total_v[kk] + s_q + 1e-9
            q_joint = np.zeros_like(joint_prior)
            q_joint[i, kk] = 1.0
            assert s_q <= kl_divergence(q_joint.ravel(), joint_prior.ravel()) + 1e-9


@given(st.integers(2, 5), st.integers(1, 30), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_squint_weights_normalized(k, horizon, seed):
    rng = np.random.default_rng(seed)
    learner = Squint(k, build_grid(horizon))
    for t in range(min(horizon, 10)):
        w = learner.weights()
        assert w.p.sum() == pytest.approx(1.0, abs=1e-12)
        learner.update(w, rng.random(k))
