"""Exception hierarchy shared by every module of the package."""


class PenalDiffError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PenalDiffError, ValueError):
    pass


class EmptyGraph(PenalDiffError, ValueError):
    pass


class DisconnectedGraph(PenalDiffError, ValueError):
    pass


class NonpositiveRadius(PenalDiffError, ValueError):
    pass


class UnboundedCurvature(PenalDiffError, ValueError):
    """A curvature bound was requested for a penalty whose second derivative
    is unbounded and no trust radius was declared."""


class MissingRng(PenalDiffError, ValueError):
    pass


class NonFiniteIterate(PenalDiffError, FloatingPointError):
    """Raised when a diffusion round produces NaN or inf.

    The offending round, agent and iterate are kept as attributes so sweeps
    can log them.
    """

    def __init__(self, iteration, agent, iterate):
        self.iteration = iteration
        self.agent = agent
        self.iterate = iterate
        super().__init__(
            f"non-finite iterate at round {iteration}, agent {agent}: {iterate!r}"
        )


class EmptyIntersection(PenalDiffError, ValueError):
    pass


class ProjectionNotConverged(PenalDiffError, RuntimeError):
    pass


class MaxIterations(PenalDiffError, RuntimeError):
    pass


class InfeasibleProblem(PenalDiffError, ValueError):
    pass


class NotAContraction(PenalDiffError, ValueError):
    pass


class EmptySeries(PenalDiffError, ValueError):
    pass


class DegenerateInput(PenalDiffError, ValueError):
    pass


class StepSizeTooLarge(PenalDiffError, ValueError):
    """The step-size exceeds the certified convergence bound.

    ``term`` names which term of the bound is violated: ``"cost_max"``,
    ``"cost_min"`` or ``"penalty"``.
    """

    def __init__(self, mu, mu_max, term, agent=None):
        self.mu = mu
        self.mu_max = mu_max
        self.term = term
        self.agent = agent
        where = "" if agent is None else f" (agent {agent})"
        super().__init__(
            f"mu={mu:g} exceeds bound {mu_max:g}; violated term: {term}{where}"
        )


class ConfigParseError(PenalDiffError, ValueError):
    pass


class InfeasibleKeyframe(PenalDiffError, ValueError):
    pass
