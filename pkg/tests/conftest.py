import numpy as np
import pytest

from penaldiff import (
    AffineConstraint,
    AgentProblem,
    PenaltySpec,
    QuadraticCost,
    StreamingMSECost,
    metropolis_weights,
)
from penaldiff.topology import random_connected_graph


def random_spd(rng, m, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return q @ np.diag(rng.uniform(lo, hi, m)) @ q.T


def quadratic_network(seed, n=5, m=2, noise=0.0, penalty=None, n_ineq=1, z=0.2,
                      shared_minimizer=True, eq=False):
    """Random connected network of quadratic agents with one halfspace each
    (plus optionally one hyperplane for agent 0)."""
    rng = np.random.default_rng(seed)
    penalty = penalty or PenaltySpec("smooth_norm_plus", rho=0.1)
    w_bar = 2.0 * rng.standard_normal(m)
    problems = []
    for k in range(n):
        Q = random_spd(rng, m)
        target = w_bar if shared_minimizer else 2.0 * rng.standard_normal(m)
        ineq = []
        for _ in range(n_ineq):
            b = rng.standard_normal(m)
            ineq.append(AffineConstraint(b / np.linalg.norm(b), z))
        eqs = []
        if eq and k == 0:
            b = rng.standard_normal(m)
            eqs.append(AffineConstraint(b / np.linalg.norm(b), 0.1, "equality"))
        problems.append(AgentProblem(QuadraticCost(Q, Q @ target, 0.0, noise), eqs, ineq, penalty))
    A = metropolis_weights(random_connected_graph(n, rng))
    return problems, A


def mse_network(seed, n=5, m=2, penalty=None):
    rng = np.random.default_rng(seed)
    penalty = penalty or PenaltySpec("smooth_norm_plus", rho=0.1)
    w_bar = rng.standard_normal(m)
    problems = []
    for _ in range(n):
        R = random_spd(rng, m, 0.2, 1.0)
        b = rng.standard_normal(m)
        problems.append(AgentProblem(StreamingMSECost(R, rng.uniform(0.1, 1.0), w_bar), [],
                                     [AffineConstraint(b / np.linalg.norm(b), 0.1)], penalty))
    return problems, metropolis_weights(random_connected_graph(n, rng))


def penalized_gradient_independent(problems, w, eta, kind):
    """Gradient of sum_k J_k + eta * p_k written from scratch for oracles."""
    g = np.zeros_like(w)
    for p in problems:
        g += p.cost.gradient(w)
        for c in p.inequalities:
            x = c.normal @ w - c.offset
            if kind == "sip":
                d = 3 * max(x, 0.0) ** 2
            elif kind == "smooth_norm_plus":
                rho = p.penalty.rho
                d = max(x, 0.0) / np.sqrt(max(x, 0.0) ** 2 + rho ** 2)
            else:
                raise ValueError(kind)
            g += eta * d * c.normal
        for c in p.equalities:
            g += eta * 2 * (c.normal @ w - c.offset) * c.normal
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------- acceptance report

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line; the lines are printed in the terminal summary."""
    def record(number, title, passed, detail=""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}"
        if detail:
            line += f": {detail}"
        ACCEPTANCE_LINES.append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
