"""
scikit-learn style facade: distributed constrained least-mean-squares
regression with penalized diffusion.

Training rows are split among the agents of a network (explicitly through
``agents=`` or round-robin). Every round each agent takes one of its own
samples, forms the instantaneous LMS gradient and runs one penalized
diffusion round, so the model respects the affine constraints up to the
penalty approximation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .diffusion import NetworkState, Strategy, StepParams, diffusion_round
from .penalty import PenaltySpec
from .problem import AffineConstraint, AgentProblem, NoiseParams
from .topology import Graph, metropolis_weights, ring_graph


class _SampleStreamCost:
    """Empirical squared-error cost of one agent's rows; its stochastic
    gradient walks through the rows in a freshly shuffled order per pass."""

    kind = "samples"

    def __init__(self, H: np.ndarray, d: np.ndarray, rng: np.random.RandomState):
        self.H = H
        self.d = d
        self._rng = rng
        self._order = np.arange(len(d))
        self._pos = len(d)
        n = max(len(d), 1)
        self.R = H.T @ H / n
        self.r = H.T @ d / n

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def value(self, w) -> float:
        e = self.d - self.H @ w
        return float(e @ e / max(len(self.d), 1))

    def gradient(self, w) -> np.ndarray:
        return 2.0 * (self.R @ w - self.r)

    def hessian(self, w=None) -> np.ndarray:
        return 2.0 * self.R

    def sample_gradient(self, w, rng=None) -> np.ndarray:
        if self._pos >= len(self.d):
            self._order = self._rng.permutation(len(self.d))
            self._pos = 0
        j = self._order[self._pos]
        self._pos += 1
        h = self.H[j]
        return -2.0 * h * (self.d[j] - h @ w)

    def noise_params(self) -> NoiseParams:
        R = self.R
        lam = float(np.linalg.eigvalsh(R @ R + np.trace(R) * R).max())
        return NoiseParams(8.0 * lam, 0.0)


class PenalizedDiffusionRegressor(RegressorMixin, BaseEstimator):
    """Linear regression learned by a network of agents under affine constraints.

    Parameters
    ----------
    n_agents : int, default=5
        Number of agents; ignored when ``graph`` is given.
    graph : Graph, optional
        Network topology. Defaults to a ring over ``n_agents`` nodes.
    strategy : {'atc', 'cta'}, default='atc'
    mu : float, default=0.01
        Constant step-size.
    eta : float, default=30.0
        Penalty scale. Ignored when ``theta`` is set.
    theta : float, optional
        Couples the penalty scale to the step-size, ``eta = mu**(-theta)``.
    constraints : list of dict, optional
        Affine constraints ``{"b": [...], "z": float, "kind": "inequality" |
        "equality", "agent": int | None}``; ``agent=None`` gives the
        constraint to every agent. Inequalities read ``b'w <= z``.
    penalty : str, default='smooth_norm_plus'
        Inequality penalty kind; equalities always use the squared penalty.
    rho : float, default=0.01
        Smoothing parameter of the smooth-norm penalties.
    n_epochs : int, default=5
        Passes over the largest agent's data.
    fit_intercept : bool, default=True
        Center the data before fitting and recover an unconstrained intercept.
    random_state : int, RandomState or None
        Seeds the per-agent sample order.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Network average of the agents' final estimates.
    intercept_ : float
    agent_coefs_ : ndarray of shape (n_agents, n_features)
    n_features_in_ : int
    n_rounds_ : int
    """

    def __init__(self, n_agents=5, graph=None, strategy="atc", mu=0.01, eta=30.0, theta=None,
                 constraints=None, penalty="smooth_norm_plus", rho=0.01, n_epochs=5,
                 fit_intercept=True, random_state=None):
        self.n_agents = n_agents
        self.graph = graph
        self.strategy = strategy
        self.mu = mu
        self.eta = eta
        self.theta = theta
        self.constraints = constraints
        self.penalty = penalty
        self.rho = rho
        self.n_epochs = n_epochs
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _graph(self) -> Graph:
        if self.graph is not None:
            return self.graph
        if self.n_agents < 1:
            raise ValueError("n_agents must be positive")
        return ring_graph(self.n_agents) if self.n_agents > 2 else Graph.from_edges(
            self.n_agents, [(0, 1)] if self.n_agents == 2 else [])

    def _agent_constraints(self, n: int, m: int):
        eq = [[] for _ in range(n)]
        ineq = [[] for _ in range(n)]
        for c in self.constraints or []:
            kind = c.get("kind", "inequality")
            con = AffineConstraint(np.asarray(c["b"], dtype=float), float(c["z"]), kind)
            if con.dim != m:
                raise ValueError(f"constraint has dimension {con.dim}, data has {m} features")
            targets = range(n) if c.get("agent") is None else [int(c["agent"])]
            for k in targets:
                (eq if kind == "equality" else ineq)[k].append(con)
        return eq, ineq

    def fit(self, X, y, agents=None):
        """Fit from rows ``X`` and targets ``y``.

        ``agents`` assigns every row to an agent (integers in
        ``[0, n_agents)``); rows are dealt round-robin when omitted.
        """
        X, y = check_X_y(X, y, y_numeric=True)
        if self.strategy not in ("atc", "cta"):
            raise ValueError("strategy must be 'atc' or 'cta'")
        graph = self._graph()
        n = graph.n_agents
        if agents is None:
            agents = np.arange(X.shape[0]) % n
        agents = np.asarray(agents)
        if agents.shape != (X.shape[0],):
            raise ValueError("agents must hold one label per row")
        if agents.min() < 0 or agents.max() >= n:
            raise ValueError(f"agent labels must lie in [0, {n})")
        if np.bincount(agents, minlength=n).min() == 0:
            raise ValueError("every agent needs at least one sample")

        self.n_features_in_ = X.shape[1]
        if self.fit_intercept:
            x_mean, y_mean = X.mean(axis=0), float(y.mean())
        else:
            x_mean, y_mean = np.zeros(X.shape[1]), 0.0
        Xc, yc = X - x_mean, y - y_mean

        rng = check_random_state(self.random_state)
        spec = PenaltySpec(self.penalty, "sep", rho=self.rho)
        eq, ineq = self._agent_constraints(n, X.shape[1])
        problems = []
        for k in range(n):
            rows = agents == k
            seed = rng.randint(np.iinfo(np.int32).max)
            cost = _SampleStreamCost(Xc[rows], yc[rows], np.random.RandomState(seed))
            problems.append(AgentProblem(cost, eq[k], ineq[k], spec))

        A = metropolis_weights(graph)
        strat = Strategy(self.strategy, A)
        step = StepParams(self.mu, theta=self.theta) if self.theta is not None \
            else StepParams(self.mu, self.eta)
        rounds = int(self.n_epochs) * int(np.bincount(agents).max())
        state = NetworkState(0, np.zeros((n, X.shape[1])))
        marker = [None] * n  # costs draw their own samples; any non-None stream works
        for _ in range(rounds):
            state = diffusion_round(state, problems, strat, step, marker)

        self.agent_coefs_ = state.w
        self.coef_ = state.w.mean(axis=0)
        self.intercept_ = y_mean - float(x_mean @ self.coef_)
        self.n_rounds_ = rounds
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_ + self.intercept_
