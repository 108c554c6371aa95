"""
Centralized reference solvers and theory-side quantities.

* ``solve_penalized``       minimizer ``w_o(eta)`` of the penalized aggregate cost
* ``solve_constrained``     constrained minimizer ``w_star`` (affine constraints)
* ``noiseless_fixed_point`` fixed point of the exact-gradient diffusion map
* ``contraction_factor``    per-round contraction factor of that map
* ``step_size_bound``       largest step-size certified for mean-square convergence
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffusion import NetworkState, StepParams, Strategy, diffusion_round, is_feasible, project_affine
from .exceptions import (
    DimensionMismatch,
    EmptyIntersection,
    InfeasibleProblem,
    MaxIterations,
    NotAContraction,
)
from .problem import AgentProblem, hessian_bounds, stack_problems


def block_max_norm(x: np.ndarray) -> float:
    """Largest Euclidean norm over the agent blocks (rows) of ``x``."""
    x = np.asarray(x, dtype=float)
    return float(np.sqrt((x * x).sum(axis=-1)).max())


class GlobalProblem:
    """The network problem seen by a central solver."""

    def __init__(self, problems: Sequence[AgentProblem]):
        self.problems = list(problems)
        if not self.problems:
            raise ValueError("need at least one agent")
        self.dim = stack_problems(self.problems)
        # every supported cost is quadratic, so the aggregate is H w + g0
        self.H = sum(p.cost.hessian() for p in self.problems)
        self.g0 = sum(p.cost.gradient(np.zeros(self.dim)) for p in self.problems)
        self.c0 = sum(p.cost.value(np.zeros(self.dim)) for p in self.problems)
        eig = np.linalg.eigvalsh(self.H)
        if eig[0] <= 0:
            raise ValueError("aggregate cost is not strongly convex")
        self.lambda_min, self.lambda_max = float(eig[0]), float(eig[-1])

    @property
    def n_agents(self) -> int:
        return len(self.problems)

    @property
    def affine_only(self) -> bool:
        return all(p.affine_only for p in self.problems)

    def constraints(self) -> list:
        return [c for p in self.problems for c in p.constraints]

    def cost(self, w) -> float:
        return float(0.5 * w @ self.H @ w + self.g0 @ w + self.c0)

    def cost_gradient(self, w) -> np.ndarray:
        return self.H @ w + self.g0

    def penalty(self, w):
        value, grad = 0.0, np.zeros(self.dim)
        for p in self.problems:
            v, g = p.penalty_value_grad(w)
            value += v
            grad += g
        return value, grad

    def penalty_hessian(self, w) -> np.ndarray:
        return sum(p.penalty_hessian(w) for p in self.problems)

    def augmented(self, w, eta: float):
        """Value and gradient of ``J_glob(w) + eta * sum_k p_k(w)``."""
        pv, pg = self.penalty(w)
        return self.cost(w) + eta * pv, self.cost_gradient(w) + eta * pg

    def bounds(self, radius=None) -> list[tuple[float, float, float]]:
        return [hessian_bounds(p, radius) for p in self.problems]

    def unconstrained_minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.H, -self.g0)


@dataclass
class ReferenceSolution:
    w_star: np.ndarray | None
    w_o_eta: dict = field(default_factory=dict)
    w_fixed: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "w_star": None if self.w_star is None else self.w_star.tolist(),
            "w_o_eta": {str(k): v.tolist() for k, v in self.w_o_eta.items()},
            "residuals": {str(k): v for k, v in self.residuals.items()},
            "iterations": {str(k): v for k, v in self.iterations.items()},
        }
        if self.w_star is not None:
            d["distance_to_w_star"] = {
                str(k): float(np.linalg.norm(v - self.w_star)) for k, v in self.w_o_eta.items()
            }
        if self.w_fixed is not None:
            d["w_fixed"] = self.w_fixed.tolist()
        return d


# ------------------------------------------------------------ penalized solve

def _line_search(gp: GlobalProblem, eta: float, x, d, slope0: float) -> float:
    # The objective is convex along d, so its directional derivative is
    # monotone; bisect on its sign instead of comparing function values,
    # which stall at round-off next to penalty kinks.
    def slope(t):
        return float(gp.augmented(x + t * d, eta)[1] @ d)

    if slope(1.0) <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        s = slope(mid)
        if abs(s) <= 0.1 * abs(slope0):
            return mid
        if s < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _newton(gp: GlobalProblem, eta: float, x: np.ndarray, tol: float, max_iter: int):
    for it in range(max_iter):
        _, g = gp.augmented(x, eta)
        if np.linalg.norm(g) <= tol:
            return x, it
        H = gp.H + eta * gp.penalty_hessian(x)
        d = -np.linalg.solve(H, g)
        x = x + _line_search(gp, eta, x, d, float(g @ d)) * d
    raise MaxIterations(f"Newton did not reach gradient norm {tol} in {max_iter} steps")


def _gradient_descent(gp: GlobalProblem, eta: float, x: np.ndarray, tol: float, max_iter: int):
    L = sum(b[1] for b in gp.bounds()) + eta * sum(b[2] for b in gp.bounds())
    step = 1.0 / L
    for it in range(max_iter):
        _, g = gp.augmented(x, eta)
        if np.linalg.norm(g) <= tol:
            return x, it
        x = x - step * g
    raise MaxIterations(f"gradient descent did not reach gradient norm {tol} in {max_iter} steps")


def solve_penalized(
    gp: GlobalProblem,
    eta: float,
    tol: float = 1e-10,
    method: str = "auto",
    x0=None,
    max_iter: int | None = None,
    return_info: bool = False,
):
    """Minimizer ``w_o(eta)`` of the penalized aggregate cost.

    ``method='gradient'`` runs gradient descent with the certified step
    ``1 / (sum lambda_max + eta * sum lambda_p_max)``; ``'newton'`` runs
    damped Newton with exact penalty Hessians (affine constraints, or
    callbacks providing ``hessian_fn``). ``'auto'`` picks Newton when it is
    available. Both stop on the gradient norm.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    x = gp.unconstrained_minimizer() if x0 is None else np.array(x0, dtype=float)
    if eta == 0:
        x = gp.unconstrained_minimizer()
        info = {"iterations": 0, "residual": float(np.linalg.norm(gp.cost_gradient(x)))}
        return (x, info) if return_info else x
    if method == "auto":
        newton_ok = all(
            getattr(c, "hessian_fn", True) is not None for p in gp.problems for c in p.inequalities
        )
        method = "newton" if newton_ok else "gradient"
    if method == "newton":
        x, it = _newton(gp, eta, x, tol, max_iter or 500)
    elif method == "gradient":
        x, it = _gradient_descent(gp, eta, x, tol, max_iter or 2_000_000)
    else:
        raise ValueError(f"unknown method {method!r}")
    if return_info:
        return x, {"iterations": it, "residual": float(np.linalg.norm(gp.augmented(x, eta)[1]))}
    return x


# ---------------------------------------------------------- constrained solve

def solve_constrained(
    gp: GlobalProblem,
    tol: float = 1e-8,
    x0=None,
    max_iter: int = 100_000,
    check_feasible: bool = True,
    return_info: bool = False,
):
    """Constrained minimizer ``w_star`` by projected gradient with exact
    projections onto the intersection of all agents' affine constraints.

    Convergence is declared when the gradient-mapping norm
    ``L * ||x - P(x - grad/L)||`` is at most ``tol``.
    """
    if not gp.affine_only:
        raise TypeError("the constrained oracle handles affine constraints only")
    cons = gp.constraints()
    if check_feasible and cons and not is_feasible(cons):
        raise InfeasibleProblem("the intersection of the agents' constraint sets is empty")
    L = gp.lambda_max
    x = gp.unconstrained_minimizer() if x0 is None else np.array(x0, dtype=float)
    try:
        x = project_affine(x, cons, check_feasible=False, tol=1e-13)
        for it in range(max_iter):
            xn = project_affine(x - gp.cost_gradient(x) / L, cons, check_feasible=False, tol=1e-13)
            res = L * float(np.linalg.norm(xn - x))
            x = xn
            if res <= tol:
                break
        else:
            raise MaxIterations(f"projected gradient did not converge in {max_iter} steps")
    except EmptyIntersection as exc:
        raise InfeasibleProblem(str(exc)) from exc
    if return_info:
        return x, {"iterations": it + 1, "residual": res}
    return x


# -------------------------------------------------------- contraction / bound

@dataclass(frozen=True)
class ContractionInfo:
    gamma: float
    per_agent: tuple
    mu_eta_ok: bool
    mu_eta_max: float

    @property
    def is_contraction(self) -> bool:
        return self.gamma < 1 and self.mu_eta_ok


def contraction_factor(gp: GlobalProblem | Sequence[AgentProblem], mu: float, eta: float,
                       radius=None) -> ContractionInfo:
    """``gamma = max_k max(|1 - mu lambda_k_min|, |1 - mu lambda_k_max|)``,
    plus whether ``mu * eta <= min_k 2 / lambda_p_k_max``."""
    problems = gp.problems if isinstance(gp, GlobalProblem) else list(gp)
    bounds = [hessian_bounds(p, radius) for p in problems]
    per = tuple(max(abs(1 - mu * lo), abs(1 - mu * hi)) for lo, hi, _ in bounds)
    lam_p = [b[2] for b in bounds if b[2] > 0]
    mu_eta_max = min(2.0 / lp for lp in lam_p) if lam_p else np.inf
    return ContractionInfo(max(per), per, mu * eta <= mu_eta_max, float(mu_eta_max))


@dataclass(frozen=True)
class StepSizeBound:
    mu_max: float
    term: str
    agent: int
    terms: tuple

    def __float__(self):
        return self.mu_max


def step_size_terms(gp, eta: float, alpha=None, radius=None) -> StepSizeBound:
    """All terms of the mean-square step-size bound and the binding one.

    ``alpha`` may be a scalar, a per-agent sequence, or ``None`` to use each
    cost's analytic noise parameters. Terms with a zero curvature (no
    constraint, ``eta = 0``, or a constraints-only agent) are dropped.
    """
    problems = gp.problems if isinstance(gp, GlobalProblem) else list(gp)
    if alpha is None:
        alphas = [p.cost.noise_params().alpha for p in problems]
    elif np.ndim(alpha) == 0:
        alphas = [float(alpha)] * len(problems)
    else:
        alphas = [float(a) for a in alpha]
    if any(a < 0 for a in alphas):
        raise ValueError("alpha must be nonnegative")
    terms = []
    for k, (p, a) in enumerate(zip(problems, alphas)):
        lo, hi, lp = hessian_bounds(p, radius)
        if hi > 0:
            terms.append(("cost_max", k, 2 * hi / (hi ** 2 + 2 * a)))
        if lo > 0:
            terms.append(("cost_min", k, 2 * lo / (lo ** 2 + 2 * a)))
        if eta > 0 and lp > 0:
            terms.append(("penalty", k, 2.0 / (eta * lp)))
    if not terms:
        return StepSizeBound(np.inf, "none", -1, ())
    name, k, val = min(terms, key=lambda t: t[2])
    return StepSizeBound(float(val), name, k, tuple(terms))


def step_size_bound(gp, eta: float, alpha=None, radius=None) -> float:
    return step_size_terms(gp, eta, alpha, radius).mu_max


# --------------------------------------------------------------- fixed point

def _map_jacobian(problems, strategy: Strategy, mu, eta, state: NetworkState) -> np.ndarray:
    a1, a2 = strategy.matrices()
    m = state.dim
    I = np.eye(m)
    D_cost = [I - mu * p.cost.hessian(state.phi[k]) for k, p in enumerate(problems)]
    D_pen = [I - mu * eta * p.penalty_hessian(state.zeta[k]) for k, p in enumerate(problems)]
    from scipy.linalg import block_diag

    return (np.kron(a2.weights.T, I) @ block_diag(*D_pen) @ block_diag(*D_cost)
            @ np.kron(a1.weights.T, I))


def noiseless_fixed_point(
    gp: GlobalProblem,
    strategy: Strategy,
    step: StepParams,
    tol: float = 1e-12,
    method: str = "auto",
    x0=None,
    max_iter: int = 1_000_000,
    radius=None,
    return_info: bool = False,
):
    """Fixed point of the exact-gradient diffusion map.

    The map is certified to contract when ``gamma < 1`` and
    ``mu * eta <= min 2 / lambda_p_max``; otherwise ``NotAContraction`` is
    raised. ``method='picard'`` iterates the map; ``'newton'`` solves
    ``T(x) = x`` with the exact Jacobian of the map. Either way the result
    satisfies ``||T(x) - x||_{b,inf} <= tol``.
    """
    problems = gp.problems
    mu, eta = step.mu, step.eta_value
    info = contraction_factor(gp, mu, eta, radius)
    if not info.is_contraction:
        raise NotAContraction(
            f"gamma={info.gamma:.6g}, mu*eta={mu * eta:.6g} (max {info.mu_eta_max:.6g})"
        )
    if strategy.is_baseline:
        raise ValueError("fixed points are defined for the penalized strategies")
    n = gp.n_agents
    if x0 is None:
        x0 = np.tile(solve_penalized(gp, eta), (n, 1))
    x = np.array(x0, dtype=float)
    if x.shape != (n, gp.dim):
        raise DimensionMismatch("x0 must be (N, M)")

    def T(v):
        return diffusion_round(NetworkState(0, v), problems, strategy, step, None)

    if method == "auto":
        method = "newton" if all(p.affine_only for p in problems) else "picard"
    its = 0
    if method == "newton":
        eye = np.eye(n * gp.dim)
        for its in range(1, 101):
            s = T(x)
            r = s.w - x
            if block_max_norm(r) <= tol:
                break
            J = _map_jacobian(problems, strategy, mu, eta, s)
            x = x + np.linalg.solve(eye - J, r.ravel()).reshape(x.shape)
        else:
            method = "picard"
    if method == "picard":
        for its in range(its + 1, max_iter + 1):
            nx = T(x).w
            if block_max_norm(nx - x) <= tol:
                x = nx
                break
            x = nx
        else:
            raise MaxIterations(f"fixed-point iteration did not converge in {max_iter} rounds")
    elif method != "newton":
        raise ValueError(f"unknown method {method!r}")
    if return_info:
        return x, {"iterations": its, "residual": block_max_norm(T(x).w - x), "gamma": info.gamma}
    return x


def reference_solution(gp: GlobalProblem, etas: Sequence[float], strategy=None, step=None,
                       tol: float = 1e-10) -> ReferenceSolution:
    """Bundle ``w_star``, ``w_o(eta)`` over a grid and optionally ``w_inf``."""
    try:
        w_star, info = solve_constrained(gp, return_info=True)
    except InfeasibleProblem:
        w_star, info = None, {"iterations": 0, "residual": float("nan")}
    ref = ReferenceSolution(w_star)
    ref.residuals["w_star"] = info["residual"]
    ref.iterations["w_star"] = info["iterations"]
    for eta in etas:
        w, inf = solve_penalized(gp, eta, tol=tol, return_info=True)
        ref.w_o_eta[float(eta)] = w
        ref.residuals[f"w_o({eta:g})"] = inf["residual"]
        ref.iterations[f"w_o({eta:g})"] = inf["iterations"]
    if strategy is not None and step is not None:
        ref.w_fixed = noiseless_fixed_point(gp, strategy, step)
    return ref
