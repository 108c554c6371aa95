"""
Penalized diffusion rounds and the projection-based baselines.

A round of the unified strategy, for every agent ``k``::

    phi_k  = sum_l A1[l, k] w_l
    zeta_k = phi_k - mu * grad_hat J_k(phi_k)
    psi_k  = zeta_k - mu * eta * grad p_k(zeta_k)
    w_k    = sum_l A2[l, k] psi_l

ATC is ``(A1, A2) = (I, A)``, CTA is ``(A, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyIntersection,
    NonFiniteIterate,
    ProjectionNotConverged,
)
from .problem import AffineConstraint, AgentProblem, stack_problems
from .topology import CombinationMatrix, validate_combination, validate_composite

STRATEGY_KINDS = ("atc", "cta", "unified", "consensus_projection", "projection_cta")
BASELINES = ("consensus_projection", "projection_cta")


@dataclass(frozen=True)
class Strategy:
    kind: str
    combination: CombinationMatrix | None = None
    a1: CombinationMatrix | None = None
    a2: CombinationMatrix | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "unified":
            if self.a1 is None or self.a2 is None:
                raise ValueError("unified strategy needs a1 and a2")
        elif self.combination is None:
            raise ValueError(f"{kind} strategy needs a combination matrix")

    @classmethod
    def atc(cls, A: CombinationMatrix) -> "Strategy":
        return cls("atc", A)

    @classmethod
    def cta(cls, A: CombinationMatrix) -> "Strategy":
        return cls("cta", A)

    @classmethod
    def unified(cls, a1: CombinationMatrix, a2: CombinationMatrix) -> "Strategy":
        return cls("unified", a1=a1, a2=a2)

    @property
    def is_baseline(self) -> bool:
        return self.kind in BASELINES

    @property
    def n_agents(self) -> int:
        m = self.combination if self.combination is not None else self.a1
        return m.n_agents

    def matrices(self) -> tuple[CombinationMatrix, CombinationMatrix]:
        """``(A1, A2)`` for the penalized strategies."""
        if self.kind == "unified":
            return self.a1, self.a2
        ident = CombinationMatrix.identity(self.combination.graph)
        if self.kind == "atc":
            return ident, self.combination
        if self.kind == "cta":
            return self.combination, ident
        raise ValueError(f"{self.kind} has no (A1, A2) form")

    def composite(self) -> np.ndarray:
        if self.is_baseline:
            return self.combination.weights
        a1, a2 = self.matrices()
        return a1.weights @ a2.weights

    def validate(self):
        if self.is_baseline:
            return validate_combination(self.combination, "A")
        a1, a2 = self.matrices()
        return validate_composite(a1, a2)


@dataclass(frozen=True)
class StepParams:
    """Step-size ``mu`` and penalty scale ``eta`` (or ``theta`` with
    ``eta = mu**(-theta)``).

    ``mu_schedule='diminishing'`` uses ``mu / (i + 1)`` at round ``i``
    (``i`` counted from zero); only the projection baseline accepts it.
    """

    mu: float
    eta: float | None = None
    theta: float | None = None
    mu_schedule: str = "constant"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.eta is None and self.theta is None:
            object.__setattr__(self, "eta", 0.0)
        if self.eta is not None and self.theta is not None:
            raise ValueError("give eta or theta, not both")
        if self.theta is not None and not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.mu_schedule not in ("constant", "diminishing"):
            raise ValueError(f"unknown mu_schedule {self.mu_schedule!r}")

    @property
    def eta_value(self) -> float:
        if self.theta is not None:
            return float(self.mu ** (-self.theta))
        return float(self.eta)

    def mu_at(self, i: int) -> float:
        if self.mu_schedule == "diminishing":
            return self.mu / (i + 1)
        return self.mu


@dataclass
class NetworkState:
    iteration: int
    w: np.ndarray
    phi: np.ndarray | None = None
    zeta: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        if self.w.ndim != 2:
            raise DimensionMismatch("state must be an (N, M) array")

    @property
    def n_agents(self) -> int:
        return self.w.shape[0]

    @property
    def dim(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "NetworkState":
        def c(a):
            return None if a is None else a.copy()
        return NetworkState(self.iteration, self.w.copy(), c(self.phi), c(self.zeta), c(self.psi))


@dataclass
class Trajectory:
    """Recorded iterates, ``iterates[j]`` being the state after round ``iterations[j]``."""

    iterations: np.ndarray
    iterates: np.ndarray
    strategy: str
    final: NetworkState
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterations)

    def mean_path(self) -> np.ndarray:
        return self.iterates.mean(axis=1)


def agent_rngs(seed, n_agents: int) -> list[np.random.Generator]:
    """Independent per-agent generators derived from one master seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n_agents)]


def _as_rngs(rng, n: int):
    if rng is None:
        return None
    if isinstance(rng, np.random.Generator):
        return [rng] * n
    rngs = list(rng)
    if len(rngs) != n:
        raise DimensionMismatch(f"need {n} agent generators, got {len(rngs)}")
    return rngs


def _check(state: NetworkState, problems: Sequence[AgentProblem], n: int):
    if len(problems) != n or state.n_agents != n:
        raise DimensionMismatch(
            f"{len(problems)} problems, {state.n_agents} state rows, {n}-agent combination"
        )
    if stack_problems(problems) != state.dim:
        raise DimensionMismatch("state dimension does not match the problems")


def _gradients(problems, x, rngs) -> np.ndarray:
    if rngs is None:
        return np.array([p.cost.gradient(x[k]) for k, p in enumerate(problems)])
    return np.array([p.cost.sample_gradient(x[k], rngs[k]) for k, p in enumerate(problems)])


def _guard(w: np.ndarray, iteration: int):
    if not np.isfinite(w).all():
        bad = np.argwhere(~np.isfinite(w))[0][0]
        raise NonFiniteIterate(iteration, int(bad), w[bad].copy())


def diffusion_round(
    state: NetworkState,
    problems: Sequence[AgentProblem],
    strategy: Strategy,
    step: StepParams,
    rng=None,
) -> NetworkState:
    """One synchronous round of the unified penalized strategy.

    ``rng`` is ``None`` for exact gradients, otherwise a generator or a
    list of per-agent generators drawing the perturbed gradients.
    """
    if strategy.is_baseline:
        raise ValueError("use baseline_round for projection baselines")
    a1, a2 = strategy.matrices()
    _check(state, problems, a1.n_agents)
    rngs = _as_rngs(rng, state.n_agents)
    mu = step.mu_at(state.iteration)
    eta = step.eta_value

    phi = a1.combine(state.w)
    zeta = phi - mu * _gradients(problems, phi, rngs)
    if eta > 0:
        pen = np.array([p.penalty_value_grad(zeta[k])[1] for k, p in enumerate(problems)])
        psi = zeta - (mu * eta) * pen
    else:
        psi = zeta.copy()
    w = a2.combine(psi)
    nxt = state.iteration + 1
    _guard(w, nxt)
    return NetworkState(nxt, w, phi, zeta, psi)


# ---------------------------------------------------------------- projections

def _project_one(y, c: AffineConstraint):
    b = c.normal
    r = b @ y - c.offset
    if c.kind == "inequality":
        if r <= 0:
            return y
    return y - (r / (b @ b)) * b


def is_feasible(constraints: Sequence[AffineConstraint]) -> bool:
    """Exact feasibility check of a polyhedron via a zero-objective LP."""
    from scipy.optimize import linprog

    cons = list(constraints)
    if not cons:
        return True
    m = cons[0].dim
    ineq = [c for c in cons if c.kind == "inequality"]
    eq = [c for c in cons if c.kind == "equality"]
    res = linprog(
        np.zeros(m),
        A_ub=np.array([c.normal for c in ineq]) if ineq else None,
        b_ub=np.array([c.offset for c in ineq]) if ineq else None,
        A_eq=np.array([c.normal for c in eq]) if eq else None,
        b_eq=np.array([c.offset for c in eq]) if eq else None,
        bounds=[(None, None)] * m,
        method="highs",
    )
    if res.status == 2:
        return False
    if res.status != 0:
        raise RuntimeError(f"feasibility LP failed: {res.message}")
    return True


def project_affine(
    point,
    constraints: Sequence[AffineConstraint],
    mode: str = "intersection",
    tol: float = 1e-10,
    max_iter: int = 10_000,
    check_feasible: bool = True,
) -> np.ndarray:
    """Euclidean projection onto a halfspace, hyperplane, or an intersection.

    The intersection mode runs Dykstra's cyclic projection scheme (plain
    alternating projections only find *a* feasible point, not the nearest
    one) until neither the iterate nor the correction terms move by more
    than ``tol`` over a sweep and every constraint holds to ``10 * tol``.

    Raises
    ------
    EmptyIntersection
        The polyhedron is empty (certified by an LP) .
    ProjectionNotConverged
        ``max_iter`` sweeps were not enough.
    """
    y = np.array(point, dtype=float)
    cons = list(constraints)
    if mode in ("single_halfspace", "single_hyperplane"):
        if len(cons) != 1:
            raise ValueError(f"{mode} takes exactly one constraint")
        c = cons[0]
        if mode == "single_hyperplane" and c.kind != "equality":
            c = AffineConstraint(c.normal, c.offset, "equality")
        if mode == "single_halfspace" and c.kind != "inequality":
            c = AffineConstraint(c.normal, c.offset, "inequality")
        return _project_one(y, c)
    if mode != "intersection":
        raise ValueError(f"unknown projection mode {mode!r}")
    if not cons:
        return y
    if all(c.is_satisfied(y) for c in cons):
        return y
    if len(cons) == 1:
        return _project_one(y, cons[0])
    if check_feasible and not is_feasible(cons):
        raise EmptyIntersection("constraint intersection is empty")

    x = y
    incs = np.zeros((len(cons), y.size))
    for _ in range(max_iter):
        start, prev = x, incs.copy()
        for j, c in enumerate(cons):
            t = x + incs[j]
            x = _project_one(t, c)
            incs[j] = t - x
        # x alone can sit still for many sweeps while the increments move
        moved = max(np.linalg.norm(x - start), np.abs(incs - prev).max())
        if moved <= tol and all(c.is_satisfied(x, 10 * tol) for c in cons):
            return x
    raise ProjectionNotConverged(f"no convergence after {max_iter} sweeps")


def _affine(problem: AgentProblem) -> list[AffineConstraint]:
    if not problem.affine_only:
        raise TypeError("projection baselines support affine constraints only")
    return problem.constraints


def baseline_round(
    state: NetworkState,
    problems: Sequence[AgentProblem],
    strategy: Strategy,
    step: StepParams,
    rng=None,
) -> NetworkState:
    """One round of a projection-based baseline.

    ``consensus_projection`` evaluates the gradient at the agent's previous
    iterate (not at the combined one) and projects onto the intersection of
    every agent's constraints. ``projection_cta`` adapts at the combined
    iterate with ``step.mu_at(i)`` and projects onto the agent's own set.
    """
    if not strategy.is_baseline:
        raise ValueError("baseline_round needs a projection baseline strategy")
    A = strategy.combination
    _check(state, problems, A.n_agents)
    rngs = _as_rngs(rng, state.n_agents)
    mu = step.mu_at(state.iteration)
    phi = A.combine(state.w)
    if strategy.kind == "consensus_projection":
        zeta = phi - mu * _gradients(problems, state.w, rngs)
        everything = [c for p in problems for c in _affine(p)]
        w = np.array([project_affine(z, everything, check_feasible=False) for z in zeta])
    else:
        zeta = phi - mu * _gradients(problems, phi, rngs)
        w = np.array([project_affine(zeta[k], _affine(p), check_feasible=False)
                      for k, p in enumerate(problems)])
    nxt = state.iteration + 1
    _guard(w, nxt)
    return NetworkState(nxt, w, phi, zeta, None)


# ------------------------------------------------------------------------ run

def step_once(state, problems, strategy, step, rng=None) -> NetworkState:
    if strategy.is_baseline:
        return baseline_round(state, problems, strategy, step, rng)
    return diffusion_round(state, problems, strategy, step, rng)


def run(
    problems: Sequence[AgentProblem],
    strategy: Strategy,
    step: StepParams,
    horizon: int,
    init,
    rng=None,
    schedule=None,
    record_every: int = 1,
    on_round: Callable[[NetworkState], None] | None = None,
) -> Trajectory:
    """Apply ``horizon`` rounds starting from ``init`` (an ``(N, M)`` array,
    feasible or not).

    ``schedule``, when given, must provide ``apply(i, problems)``; it is
    called before round ``i`` (1-based) to update drifting constraints.
    ``rng`` follows :func:`diffusion_round`; pass ``agent_rngs(seed, N)``
    for reproducible per-agent streams.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if step.mu_schedule == "diminishing" and strategy.kind != "projection_cta":
        raise ValueError("diminishing step-sizes are only used by the projection_cta baseline")
    problems = list(problems)
    state = NetworkState(0, init)
    _check(state, problems, strategy.n_agents)
    if strategy.kind == "consensus_projection" and schedule is None:
        if not is_feasible([c for p in problems for c in _affine(p)]):
            raise EmptyIntersection("network constraint set is empty")
    rngs = _as_rngs(rng, state.n_agents)

    its = [0]
    snaps = [state.w.copy()]
    for i in range(1, horizon + 1):
        if schedule is not None:
            schedule.apply(i, problems)
        state = step_once(state, problems, strategy, step, rngs)
        if on_round is not None:
            on_round(state)
        if i % record_every == 0 or i == horizon:
            its.append(i)
            snaps.append(state.w.copy())
    return Trajectory(np.array(its), np.array(snaps), strategy.kind, state)
