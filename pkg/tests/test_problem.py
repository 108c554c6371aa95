import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penaldiff import (
    AffineConstraint,
    AgentProblem,
    ConvexConstraint,
    PenaltySpec,
    QuadraticCost,
    StreamingMSECost,
    ZeroCost,
    hessian_bounds,
)
from penaldiff.exceptions import DimensionMismatch, MissingRng, UnboundedCurvature
from penaldiff.problem import agent_penalty, cost_from_dict, stochastic_gradient, true_gradient

from conftest import random_spd

SIP = PenaltySpec("sip", "sep", trust_radius=10.0)


def test_agent_penalty_sip_examples():
    p = AgentProblem(ZeroCost(1), inequalities=[AffineConstraint([-1.0], -1.0)], penalty=SIP)
    v, g = agent_penalty(p, np.array([0.0]))
    assert v == pytest.approx(1.0) and g == pytest.approx([-3.0])
    v, g = agent_penalty(p, np.array([2.0]))
    assert v == 0.0 and g == pytest.approx([0.0])


def test_agent_penalty_sep_example():
    p = AgentProblem(ZeroCost(1), equalities=[AffineConstraint([1.0], 2.0, "equality")], penalty=SIP)
    v, g = agent_penalty(p, np.array([3.0]))
    assert v == pytest.approx(1.0) and g == pytest.approx([2.0])


def test_agent_penalty_dimension_mismatch():
    p = AgentProblem(ZeroCost(2), inequalities=[AffineConstraint([1.0, 0.0], 0.0)])
    with pytest.raises(DimensionMismatch):
        agent_penalty(p, np.zeros(3))


def test_true_gradient_examples():
    np.testing.assert_allclose(true_gradient(QuadraticCost(np.eye(2), np.zeros(2)), [1.0, 2.0]), [1, 2])
    c = StreamingMSECost(np.eye(2), 0.3, [1.0, -1.0])
    np.testing.assert_array_equal(true_gradient(c, c.w_bar), np.zeros(2))
    np.testing.assert_array_equal(true_gradient(ZeroCost(2), [5.0, 1.0]), np.zeros(2))


def test_lms_gradient_zero_at_model_without_noise(rng):
    c = StreamingMSECost(random_spd(rng, 3), 0.0, rng.standard_normal(3))
    for _ in range(20):
        np.testing.assert_array_equal(stochastic_gradient(c, c.w_bar, rng), np.zeros(3))


def test_stochastic_gradient_needs_rng():
    with pytest.raises(MissingRng):
        stochastic_gradient(StreamingMSECost(np.eye(2), 0.1, [0.0, 0.0]), np.zeros(2), None)


def test_hessian_bounds_examples():
    p = AgentProblem(QuadraticCost(np.diag([1.0, 3.0]), np.zeros(2)))
    lo, hi, lp = hessian_bounds(p)
    assert (lo, hi, lp) == pytest.approx((1.0, 3.0, 0.0))
    p = AgentProblem(ZeroCost(2), inequalities=[AffineConstraint([1.0, 0.0], 0.0)],
                     penalty=PenaltySpec("smooth_norm_plus", rho=0.01))
    assert hessian_bounds(p)[2] == pytest.approx(100.0)
    p = AgentProblem(ZeroCost(2), equalities=[AffineConstraint([1.0, 0.0], 0.0, "equality"),
                                              AffineConstraint([0.0, 1.0], 1.0, "equality")])
    assert hessian_bounds(p)[2] == pytest.approx(4.0)


def test_hessian_bounds_sip_needs_radius():
    p = AgentProblem(ZeroCost(1), inequalities=[AffineConstraint([1.0], 0.0)], penalty=PenaltySpec("sip"))
    with pytest.raises(UnboundedCurvature):
        hessian_bounds(p)
    assert hessian_bounds(p, radius=2.0)[2] == pytest.approx(12.0)


def test_convex_callback_constraint():
    # unit disc: ||w||^2 - 1 <= 0
    disc = ConvexConstraint(lambda w: w @ w - 1.0, lambda w: 2 * w, dim=2, curvature=2.0)
    p = AgentProblem(ZeroCost(2), inequalities=[disc], penalty=PenaltySpec("sip", trust_radius=4.0))
    v, g = agent_penalty(p, np.array([2.0, 0.0]))
    assert v == pytest.approx(27.0) and g == pytest.approx([3 * 9 * 4.0, 0.0])
    assert agent_penalty(p, np.array([0.1, 0.2]))[0] == 0.0
    assert hessian_bounds(p)[2] == 2.0


def _fd_grad(f, w, h=1e-6):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (f(w + e) - f(w - e)) / (2 * h)
    return g


@pytest.mark.parametrize("kind", ["sip", "smooth_norm_plus", "smooth_norm_raw"])
def test_gradients_match_finite_differences(kind, rng):
    m = 3
    spec = PenaltySpec(kind, "sep", rho=0.1, trust_radius=10.0)
    cons = [AffineConstraint(rng.standard_normal(m), rng.normal()) for _ in range(3)]
    eqs = [AffineConstraint(rng.standard_normal(m), rng.normal(), "equality")]
    Q = random_spd(rng, m)
    p = AgentProblem(QuadraticCost(Q, rng.standard_normal(m), 0.5), eqs, cons, spec)
    mse = StreamingMSECost(Q, 0.4, rng.standard_normal(m))
    checked = 0
    while checked < 200:
        w = rng.uniform(-2, 2, m)
        if min(abs(c.value(w)) for c in cons) < 1e-3:
            continue  # kink neighbourhood
        g = agent_penalty(p, w)[1]
        fd = _fd_grad(lambda x: agent_penalty(p, x)[0], w)
        assert np.abs(g - fd).max() <= 1e-5 * (1 + np.abs(g).max())
        for cost in (p.cost, mse):
            g = true_gradient(cost, w)
            fd = _fd_grad(cost.value, w)
            assert np.abs(g - fd).max() <= 1e-5 * (1 + np.abs(g).max())
        checked += 1


def test_penalty_hessian_matches_gradient_differences(rng):
    spec = PenaltySpec("smooth_norm_plus", "sep", rho=0.3)
    p = AgentProblem(ZeroCost(2), [AffineConstraint([0.3, 1.0], 0.2, "equality")],
                     [AffineConstraint([1.0, -0.5], 0.1)], spec)
    for _ in range(50):
        w = rng.uniform(-2, 2, 2)
        H = p.penalty_hessian(w)
        fd = np.column_stack([
            (p.penalty_value_grad(w + e)[1] - p.penalty_value_grad(w - e)[1]) / 2e-6
            for e in np.eye(2) * 1e-6
        ])
        np.testing.assert_allclose(H, fd, atol=1e-5)


def test_penalty_vanishes_in_strict_interior(rng):
    m = 3
    cons = [AffineConstraint(rng.standard_normal(m), 1.0) for _ in range(4)]
    for kind in ("sip", "smooth_norm_plus"):
        p = AgentProblem(ZeroCost(m), inequalities=cons, penalty=PenaltySpec(kind, rho=0.05))
        found = 0
        while found < 100:
            w = rng.uniform(-1, 1, m)
            if all(c.value(w) < 0 for c in cons):
                v, g = agent_penalty(p, w)
                assert v == 0.0 and not g.any()
                found += 1


def test_penalty_midpoint_convex_in_vectors(rng):
    cons = [AffineConstraint(rng.standard_normal(2), 0.1) for _ in range(3)]
    for kind in ("sip", "smooth_norm_plus", "smooth_norm_raw"):
        p = AgentProblem(ZeroCost(2), [AffineConstraint([1.0, 1.0], 0.0, "equality")], cons,
                         PenaltySpec(kind, rho=0.05))
        for _ in range(500):
            a, b = rng.uniform(-3, 3, (2, 2))
            lhs = agent_penalty(p, (a + b) / 2)[0]
            assert lhs <= (agent_penalty(p, a)[0] + agent_penalty(p, b)[0]) / 2 + 1e-12


def test_lms_noise_mean_and_second_moment(rng):
    # reduced-size version of the Monte-Carlo conformance check
    n = 20_000
    cost = StreamingMSECost(random_spd(rng, 2, 0.2, 1.0), 0.5, rng.standard_normal(2))
    params = cost.noise_params()
    for _ in range(3):
        w = rng.uniform(-2, 2, 2)
        v = np.array([cost.sample_gradient(w, rng) for _ in range(n)]) - cost.gradient(w)
        se = v.std(axis=0, ddof=1) / np.sqrt(n)
        assert (np.abs(v.mean(axis=0)) <= 4 * se).all()
        second = np.mean(np.sum(v ** 2, axis=1))
        exact = cost.noise_second_moment(w)
        assert second == pytest.approx(exact, rel=0.1)
        assert exact <= params.bound(w)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_noise_moment_below_bound(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    cost = StreamingMSECost(random_spd(rng, m, 0.05, 2.0), rng.uniform(0, 2), rng.standard_normal(m))
    w = rng.uniform(-5, 5, m)
    assert cost.noise_second_moment(w) <= cost.noise_params().bound(w) * (1 + 1e-12)


def test_quadratic_noise_model(rng):
    c = QuadraticCost(np.eye(2), np.zeros(2), 0.0, noise_var=0.8)
    assert c.noise_params().alpha == 0.0
    v = np.array([c.sample_gradient(np.ones(2), rng) - np.ones(2) for _ in range(20_000)])
    assert np.mean(np.sum(v ** 2, axis=1)) == pytest.approx(0.8, rel=0.05)


def test_cost_round_trip(rng):
    for c in (QuadraticCost(random_spd(rng, 2), rng.standard_normal(2), 1.5, 0.2),
              StreamingMSECost(random_spd(rng, 2), 0.3, rng.standard_normal(2)), ZeroCost(3)):
        d = c.to_dict()
        c2 = cost_from_dict(d)
        assert c2.to_dict() == d


def test_set_affine_updates_penalty():
    p = AgentProblem(ZeroCost(1), inequalities=[AffineConstraint([1.0], 0.0)],
                     penalty=PenaltySpec("smooth_norm_plus", rho=0.1))
    before = agent_penalty(p, np.array([0.5]))[0]
    p.set_affine("inequality", 0, [1.0], 1.0)
    assert before > 0 and agent_penalty(p, np.array([0.5]))[0] == 0.0


def test_constraint_validation():
    with pytest.raises(ValueError):
        AffineConstraint([0.0, 0.0], 1.0)
    with pytest.raises(DimensionMismatch):
        AgentProblem(ZeroCost(2), inequalities=[AffineConstraint([1.0], 0.0)])
    with pytest.raises(ValueError):
        QuadraticCost(-np.eye(2), np.zeros(2))
