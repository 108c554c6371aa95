"""
Agent-level problem data: costs, constraints, penalties and gradient oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DimensionMismatch, MissingRng, UnboundedCurvature
from .penalty import (
    PenaltySpec,
    curvature_bound,
    penalty_eval,
    penalty_second_derivative,
)


# ---------------------------------------------------------------- constraints

@dataclass(frozen=True, eq=False)
class AffineConstraint:
    """``b @ w - z == 0`` (equality) or ``b @ w - z <= 0`` (inequality)."""

    normal: np.ndarray
    offset: float
    kind: str = "inequality"

    def __post_init__(self):
        b = np.atleast_1d(np.array(self.normal, dtype=float))
        if b.ndim != 1:
            raise DimensionMismatch("constraint normal must be a vector")
        if not np.linalg.norm(b) > 0:
            raise ValueError("constraint normal must be nonzero")
        if self.kind not in ("equality", "inequality"):
            raise ValueError(f"kind must be 'equality' or 'inequality', got {self.kind!r}")
        b.setflags(write=False)
        object.__setattr__(self, "normal", b)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def value(self, w) -> float:
        return float(self.normal @ np.asarray(w, dtype=float) - self.offset)

    def gradient(self, w) -> np.ndarray:
        return self.normal.copy()

    def is_satisfied(self, w, tol: float = 0.0) -> bool:
        v = self.value(w)
        return abs(v) <= tol if self.kind == "equality" else v <= tol

    def to_dict(self) -> dict:
        return {"b": self.normal.tolist(), "z": self.offset}


@dataclass(frozen=True, eq=False)
class ConvexConstraint:
    """General convex inequality ``g(w) <= 0`` given by callbacks.

    ``curvature`` is the user-declared upper bound on the Hessian norm of
    ``delta(g(w))``; without it no step-size certificate can be issued.
    """

    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    curvature: float | None = None
    hessian_fn: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = "inequality"

    def value(self, w) -> float:
        return float(self.value_fn(np.asarray(w, dtype=float)))

    def gradient(self, w) -> np.ndarray:
        return np.asarray(self.gradient_fn(np.asarray(w, dtype=float)), dtype=float)


# ---------------------------------------------------------------------- costs

@dataclass(frozen=True)
class NoiseParams:
    alpha: float = 0.0
    sigma_v2: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.sigma_v2 < 0:
            raise ValueError("noise parameters must be nonnegative")

    def bound(self, w) -> float:
        return self.alpha * float(np.dot(w, w)) + self.sigma_v2


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``J(w) = 0.5 w'Qw - r'w + c``.

    Stochastic gradients add zero-mean Gaussian noise whose total second
    moment is ``noise_var`` (so alpha = 0, sigma_v^2 = noise_var).
    """

    Q: np.ndarray
    r: np.ndarray
    c: float = 0.0
    noise_var: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        r = np.atleast_1d(np.array(self.r, dtype=float))
        if Q.shape != (r.size, r.size):
            raise DimensionMismatch(f"Q {Q.shape} does not match r {r.shape}")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("Q must be positive definite")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)

    kind = "quadratic"

    @property
    def dim(self) -> int:
        return self.r.size

    def value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(0.5 * w @ self.Q @ w - self.r @ w + self.c)

    def gradient(self, w) -> np.ndarray:
        return self.Q @ w - self.r

    def hessian(self, w=None) -> np.ndarray:
        return self.Q

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.Q, self.r)

    def sample_gradient(self, w, rng: np.random.Generator) -> np.ndarray:
        g = self.gradient(w)
        if self.noise_var > 0:
            g = g + rng.normal(scale=np.sqrt(self.noise_var / self.dim), size=self.dim)
        return g

    def noise_params(self) -> NoiseParams:
        return NoiseParams(0.0, float(self.noise_var))

    def noise_second_moment(self, w) -> float:
        return float(self.noise_var)

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "Q": self.Q.tolist(), "r": self.r.tolist(),
                "c": self.c, "noise_var": self.noise_var}


@dataclass(frozen=True, eq=False)
class StreamingMSECost:
    """Mean-square-error cost of the linear model ``d = h'w_bar + v``.

    ``J(w) = E(d - h'w)^2 = (w - w_bar)' R_h (w - w_bar) + sigma_v2``
    with ``h ~ N(0, R_h)``, ``v ~ N(0, sigma_v2)``.
    """

    R_h: np.ndarray
    sigma_v2: float
    w_bar: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.array(self.R_h, dtype=float))
        wb = np.atleast_1d(np.array(self.w_bar, dtype=float))
        if R.shape != (wb.size, wb.size):
            raise DimensionMismatch(f"R_h {R.shape} does not match w_bar {wb.shape}")
        if not np.allclose(R, R.T):
            raise ValueError("R_h must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R_h must be positive definite")
        if self.sigma_v2 < 0:
            raise ValueError("sigma_v2 must be nonnegative")
        object.__setattr__(self, "R_h", R)
        object.__setattr__(self, "w_bar", wb)
        object.__setattr__(self, "_chol", np.linalg.cholesky(R))

    kind = "mse"

    @property
    def dim(self) -> int:
        return self.w_bar.size

    def value(self, w) -> float:
        e = np.asarray(w, dtype=float) - self.w_bar
        return float(e @ self.R_h @ e + self.sigma_v2)

    def gradient(self, w) -> np.ndarray:
        return 2.0 * self.R_h @ (w - self.w_bar)

    def hessian(self, w=None) -> np.ndarray:
        return 2.0 * self.R_h

    def draw(self, rng: np.random.Generator):
        """One regression sample ``(h, d)``."""
        h = self._chol @ rng.standard_normal(self.dim)
        v = rng.normal(scale=np.sqrt(self.sigma_v2)) if self.sigma_v2 > 0 else 0.0
        return h, float(h @ self.w_bar + v)

    def sample_gradient(self, w, rng: np.random.Generator) -> np.ndarray:
        h, d = self.draw(rng)
        return -2.0 * h * (d - h @ w)

    def _noise_shape(self) -> np.ndarray:
        R = self.R_h
        return R @ R + np.trace(R) * R

    def noise_second_moment(self, w) -> float:
        """Exact ``E||v(w)||^2`` of the LMS gradient noise (Gaussian fourth moments)."""
        e = np.asarray(w, dtype=float) - self.w_bar
        return float(4.0 * e @ self._noise_shape() @ e + 4.0 * self.sigma_v2 * np.trace(self.R_h))

    def noise_params(self) -> NoiseParams:
        # ||w - w_bar||^2 <= 2||w||^2 + 2||w_bar||^2
        lam = float(np.linalg.eigvalsh(self._noise_shape()).max())
        alpha = 8.0 * lam
        sigma = alpha * float(self.w_bar @ self.w_bar) + 4.0 * self.sigma_v2 * float(np.trace(self.R_h))
        return NoiseParams(alpha, sigma)

    def to_dict(self) -> dict:
        return {"kind": "mse", "R_h": self.R_h.tolist(), "sigma_v2": self.sigma_v2,
                "w_bar": self.w_bar.tolist()}


@dataclass(frozen=True)
class ZeroCost:
    """Agent that only contributes constraints."""

    dim: int

    kind = "zero"

    def value(self, w) -> float:
        return 0.0

    def gradient(self, w) -> np.ndarray:
        return np.zeros(self.dim)

    def hessian(self, w=None) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    def sample_gradient(self, w, rng) -> np.ndarray:
        return np.zeros(self.dim)

    def noise_params(self) -> NoiseParams:
        return NoiseParams()

    def noise_second_moment(self, w) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": "zero", "dim": self.dim}


CostSpec = QuadraticCost | StreamingMSECost | ZeroCost


def cost_from_dict(data: dict, dim: int | None = None):
    kind = data.get("kind")
    if kind == "quadratic":
        return QuadraticCost(data["Q"], data["r"], float(data.get("c", 0.0)),
                             float(data.get("noise_var", 0.0)))
    if kind == "mse":
        return StreamingMSECost(data["R_h"], float(data["sigma_v2"]), data["w_bar"])
    if kind == "zero":
        return ZeroCost(int(data.get("dim", dim)))
    raise ValueError(f"unknown cost kind {kind!r}")


def true_gradient(cost, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (cost.dim,):
        raise DimensionMismatch(f"w has shape {w.shape}, cost expects ({cost.dim},)")
    return cost.gradient(w)


def stochastic_gradient(cost, w, rng: np.random.Generator | None) -> np.ndarray:
    """Perturbed gradient: LMS instantaneous gradient for MSE costs,
    exact gradient plus Gaussian noise for quadratics."""
    if rng is None:
        raise MissingRng("stochastic_gradient needs a numpy Generator")
    w = np.asarray(w, dtype=float)
    if w.shape != (cost.dim,):
        raise DimensionMismatch(f"w has shape {w.shape}, cost expects ({cost.dim},)")
    return cost.sample_gradient(w, rng)


# -------------------------------------------------------------------- agents

@dataclass(eq=False)
class AgentProblem:
    """Cost, constraints and penalty choice held by one agent.

    Affine constraint parameters may be replaced between rounds (constraint
    drift) through :meth:`set_affine`; nothing else mutates.
    """

    cost: CostSpec
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    penalty: PenaltySpec = field(default_factory=PenaltySpec)

    def __post_init__(self):
        self.equalities = list(self.equalities)
        self.inequalities = list(self.inequalities)
        for c in self.equalities:
            if not isinstance(c, AffineConstraint) or c.kind != "equality":
                raise ValueError("equalities must be affine equality constraints")
        for c in self.inequalities:
            if c.kind != "inequality":
                raise ValueError("inequalities list holds inequality constraints only")
        for c in self.equalities + self.inequalities:
            if c.dim != self.dim:
                raise DimensionMismatch(f"constraint dim {c.dim} vs cost dim {self.dim}")
        self._restack()

    def _restack(self):
        aff = [c for c in self.inequalities if isinstance(c, AffineConstraint)]
        self._callbacks = [c for c in self.inequalities if not isinstance(c, AffineConstraint)]
        m = self.dim
        self._Bi = np.array([c.normal for c in aff]).reshape(-1, m)
        self._zi = np.array([c.offset for c in aff])
        self._Be = np.array([c.normal for c in self.equalities]).reshape(-1, m)
        self._ze = np.array([c.offset for c in self.equalities])

    @property
    def dim(self) -> int:
        return self.cost.dim

    @property
    def affine_only(self) -> bool:
        return not self._callbacks

    @property
    def constraints(self) -> list:
        return self.equalities + self.inequalities

    def set_affine(self, kind: str, index: int, normal, offset) -> None:
        """Replace the parameters of the ``index``-th affine constraint of ``kind``."""
        c = AffineConstraint(normal, offset, kind)
        if c.dim != self.dim:
            raise DimensionMismatch("new normal has wrong dimension")
        target = self.equalities if kind == "equality" else self.inequalities
        if not isinstance(target[index], AffineConstraint):
            raise TypeError("only affine constraints can be re-parameterized")
        target[index] = c
        self._restack()

    def copy(self) -> "AgentProblem":
        return AgentProblem(self.cost, list(self.equalities), list(self.inequalities), self.penalty)

    def penalty_value_grad(self, w: np.ndarray):
        spec = self.penalty
        value = 0.0
        grad = np.zeros(self.dim)
        if self._Bi.shape[0]:
            v, d = penalty_eval(spec, "inequality", self._Bi @ w - self._zi)
            value += float(np.sum(v))
            grad += d @ self._Bi
        if self._Be.shape[0]:
            v, d = penalty_eval(spec, "equality", self._Be @ w - self._ze)
            value += float(np.sum(v))
            grad += d @ self._Be
        for c in self._callbacks:
            v, d = penalty_eval(spec, "inequality", c.value(w))
            value += v
            grad += d * c.gradient(w)
        return value, grad

    def penalty_hessian(self, w: np.ndarray) -> np.ndarray:
        spec = self.penalty
        H = np.zeros((self.dim, self.dim))
        if self._Bi.shape[0]:
            s = penalty_second_derivative(spec, "inequality", self._Bi @ w - self._zi)
            H += (self._Bi * s[:, None]).T @ self._Bi
        if self._Be.shape[0]:
            s = penalty_second_derivative(spec, "equality", self._Be @ w - self._ze)
            H += (self._Be * s[:, None]).T @ self._Be
        for c in self._callbacks:
            if c.hessian_fn is None:
                raise NotImplementedError("callback constraint without hessian_fn")
            g = c.gradient(w)
            v = c.value(w)
            _, d1 = penalty_eval(spec, "inequality", v)
            d2 = penalty_second_derivative(spec, "inequality", v)
            H += d2 * np.outer(g, g) + d1 * np.asarray(c.hessian_fn(w))
        return H

    def is_feasible(self, w, tol: float = 1e-9) -> bool:
        return all(c.value(w) <= tol if c.kind == "inequality" else abs(c.value(w)) <= tol
                   for c in self.constraints)

    def to_dict(self) -> dict:
        ineq = []
        for c in self.inequalities:
            if not isinstance(c, AffineConstraint):
                raise TypeError("callback constraints cannot be serialized")
            ineq.append(c.to_dict())
        return {
            "cost": self.cost.to_dict(),
            "equalities": [c.to_dict() for c in self.equalities],
            "inequalities": ineq,
        }


def agent_penalty(problem: AgentProblem, w) -> tuple[float, np.ndarray]:
    """Aggregate penalty ``p_k(w)`` and its gradient (chain rule)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.dim,):
        raise DimensionMismatch(f"w has shape {w.shape}, problem expects ({problem.dim},)")
    return problem.penalty_value_grad(w)


def hessian_bounds(problem: AgentProblem, radius: float | None = None) -> tuple[float, float, float]:
    """``(lambda_min, lambda_max, lambda_p_max)`` for one agent.

    ``lambda_p_max`` sums ``curvature_bound * ||b||^2`` over affine
    constraints plus the declared curvature of callback constraints.
    """
    if isinstance(problem.cost, ZeroCost):
        lo = hi = 0.0
    else:
        eig = np.linalg.eigvalsh(problem.cost.hessian())
        lo, hi = float(eig[0]), float(eig[-1])
    spec = problem.penalty
    lam_p = 0.0
    for c in problem.equalities:
        lam_p += curvature_bound(spec, "equality", radius) * float(c.normal @ c.normal)
    for c in problem.inequalities:
        if isinstance(c, AffineConstraint):
            lam_p += curvature_bound(spec, "inequality", radius) * float(c.normal @ c.normal)
        elif c.curvature is None:
            raise UnboundedCurvature("callback constraint has no declared curvature")
        else:
            lam_p += float(c.curvature)
    return lo, hi, lam_p


def stack_problems(problems: Sequence[AgentProblem]) -> int:
    """Common dimension of a list of agent problems."""
    dims = {p.dim for p in problems}
    if len(dims) != 1:
        raise DimensionMismatch(f"agents disagree on dimension: {sorted(dims)}")
    return dims.pop()
