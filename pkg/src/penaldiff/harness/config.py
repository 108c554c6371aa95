"""
Run configurations: JSON ingestion, scenario resolution and serialization.

A configuration is a JSON object. Minimal example::

    {
      "graph": {"n_agents": 3, "edges": [[0, 1], [1, 2]]},
      "combination": {"rule": "metropolis"},
      "agents": [{"cost": {"kind": "quadratic", "Q": [[2.0]], "r": [0.0]},
                  "inequalities": [{"b": [-1.0], "z": -1.0}]}, ...],
      "penalty": {"inequality": "sip", "equality": "sep"},
      "strategy": "atc",
      "step": {"mu": 0.01, "eta": 10.0},
      "horizon": 2000
    }

``agents`` and ``graph`` may instead come from a scenario generator,
``"scenario": {"kind": "moving_hyperplanes", "seed": 1}``; the generator is
resolved on load so the written configuration is always explicit.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diffusion import STRATEGY_KINDS, Strategy, StepParams
from ..exceptions import ConfigParseError
from ..penalty import PenaltySpec
from ..problem import AffineConstraint, AgentProblem, cost_from_dict
from ..topology import CombinationMatrix, Graph, metropolis_weights
from .scenario import DriftSchedule, moving_hyperplanes

OUTPUT_ENV = "PENALDIFF_OUTPUT_DIR"
INIT_MODES = ("zeros", "given", "random_ball")
REFERENCE_KINDS = ("w_star", "w_o_eta", "w_fixed")
SCENARIOS = {"moving_hyperplanes": moving_hyperplanes}


def _combination(spec, graph: Graph, role: str) -> CombinationMatrix:
    if spec is None:
        spec = {"rule": "metropolis"}
    if "matrix" in spec:
        return CombinationMatrix(np.asarray(spec["matrix"], dtype=float), graph, role)
    rule = spec.get("rule")
    if rule == "metropolis":
        m = metropolis_weights(graph)
        return CombinationMatrix(m.weights, m.graph, role)
    if rule == "identity":
        return CombinationMatrix.identity(graph)
    raise ConfigParseError(f"unknown combination rule {rule!r}")


@dataclass
class RunConfig:
    """Fully resolved experiment description.

    ``combination`` is used by every strategy except ``unified``, which reads
    ``a1`` and ``a2`` (each ``{"rule": ...}`` or ``{"matrix": ...}``).
    ``baseline`` optionally describes the comparison run of a tracking
    experiment, e.g. ``{"strategy": "projection_cta", "mu": 1.0,
    "mu_schedule": "diminishing"}``.
    """

    graph: Graph
    agents: list
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    combination: dict = field(default_factory=lambda: {"rule": "metropolis"})
    a1: dict | None = None
    a2: dict | None = None
    strategy: str = "atc"
    step: StepParams = field(default_factory=lambda: StepParams(0.01, 0.0))
    gradient: str = "stochastic"
    horizon: int = 1000
    init: dict = field(default_factory=lambda: {"mode": "zeros"})
    seed: int = 0
    replications: int = 1
    window: float = 0.25
    reference: str = "w_star"
    record_every: int = 1
    drift: DriftSchedule | None = None
    baseline: dict | None = None
    scenario: dict | None = None
    output_dir: str = "runs"
    n_jobs: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGY_KINDS:
            raise ConfigParseError(f"unknown strategy {self.strategy!r}")
        if self.gradient not in ("stochastic", "exact"):
            raise ConfigParseError("gradient must be 'stochastic' or 'exact'")
        if self.init.get("mode") not in INIT_MODES:
            raise ConfigParseError(f"init mode must be one of {INIT_MODES}")
        if self.reference not in REFERENCE_KINDS:
            raise ConfigParseError(f"reference must be one of {REFERENCE_KINDS}")
        if self.horizon < 1 or self.replications < 1 or self.record_every < 1:
            raise ConfigParseError("horizon, replications and record_every must be positive")
        if not 0 < self.window <= 1:
            raise ConfigParseError("window must lie in (0, 1]")
        if len(self.agents) != self.graph.n_agents:
            raise ConfigParseError(
                f"{len(self.agents)} agents for a {self.graph.n_agents}-node graph"
            )

    # ---------------------------------------------------------------- builders

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    def build_problems(self) -> list[AgentProblem]:
        """Fresh agent problems (drift mutates them, so never share)."""
        out = []
        for a in self.agents:
            cost = cost_from_dict(a["cost"])
            eq = [AffineConstraint(c["b"], c["z"], "equality") for c in a.get("equalities", [])]
            ineq = [AffineConstraint(c["b"], c["z"], "inequality")
                    for c in a.get("inequalities", [])]
            out.append(AgentProblem(cost, eq, ineq, self.penalty))
        return out

    @property
    def dim(self) -> int:
        return self.build_problems()[0].dim

    def build_strategy(self, kind: str | None = None) -> Strategy:
        kind = kind or self.strategy
        if kind == "unified":
            a1 = _combination(self.a1 or {"rule": "identity"}, self.graph, "A1")
            a2 = _combination(self.a2 or self.combination, self.graph, "A2")
            return Strategy.unified(a1, a2)
        return Strategy(kind, _combination(self.combination, self.graph, "A"))

    def build_drift(self) -> DriftSchedule | None:
        # schedules cache the last applied values, so hand out copies
        return None if self.drift is None else DriftSchedule.from_dict(self.drift.to_dict())

    def initial_state(self, seed_seq: np.random.SeedSequence | None = None) -> np.ndarray:
        n, m = self.n_agents, self.dim
        mode = self.init["mode"]
        if mode == "zeros":
            return np.zeros((n, m))
        if mode == "given":
            x = np.asarray(self.init["matrix"], dtype=float)
            if x.shape != (n, m):
                raise ConfigParseError(f"init matrix must be ({n}, {m}), got {x.shape}")
            return x
        radius = float(self.init.get("radius", 1.0))
        rng = np.random.default_rng(seed_seq if seed_seq is not None else self.seed)
        d = rng.standard_normal((n, m))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = radius * rng.uniform(size=(n, 1)) ** (1.0 / m)
        return d * r

    # ----------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        step = {"mu": self.step.mu, "mu_schedule": self.step.mu_schedule}
        if self.step.theta is not None:
            step["theta"] = self.step.theta
        else:
            step["eta"] = self.step.eta
        out = {
            "graph": self.graph.to_dict(),
            "agents": copy.deepcopy(self.agents),
            "penalty": self.penalty.to_dict(),
            "combination": self.combination,
            "strategy": self.strategy,
            "step": step,
            "gradient": self.gradient,
            "horizon": self.horizon,
            "init": self.init,
            "seed": self.seed,
            "replications": self.replications,
            "window": self.window,
            "reference": self.reference,
            "record_every": self.record_every,
            "output_dir": self.output_dir,
            "n_jobs": self.n_jobs,
        }
        for key in ("a1", "a2", "baseline", "scenario"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.drift is not None:
            out["drift"] = self.drift.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, env: dict | None = None) -> "RunConfig":
        return parse_config(data, env)


def _resolve_scenario(data: dict) -> dict:
    spec = dict(data["scenario"])
    kind = spec.pop("kind", None)
    if kind not in SCENARIOS:
        raise ConfigParseError(f"unknown scenario {kind!r}")
    # model data come from the master seed unless the scenario pins its own
    spec.setdefault("seed", int(data.get("seed", 0)))
    try:
        generated = SCENARIOS[kind](**spec)
    except TypeError as exc:
        raise ConfigParseError(f"bad scenario parameters: {exc}") from None
    merged = dict(data)
    if "graph" in merged:
        raise ConfigParseError("'graph' conflicts with the scenario generator")
    for key in ("graph", "agents", "drift"):
        merged.setdefault(key, generated[key])
    return merged


def parse_config(data: dict, env: dict | None = None) -> RunConfig:
    """Validate a configuration mapping and build a :class:`RunConfig`.

    ``env`` defaults to ``os.environ``; only ``PENALDIFF_OUTPUT_DIR`` is read
    from it.
    """
    if not isinstance(data, dict):
        raise ConfigParseError("configuration must be a JSON object")
    env = os.environ if env is None else env
    if "scenario" in data and "agents" not in data:
        data = _resolve_scenario(data)
    for key in ("graph", "agents"):
        if key not in data:
            raise ConfigParseError(f"missing required field '{key}'")
    known = {
        "graph", "agents", "penalty", "combination", "a1", "a2", "strategy", "step",
        "gradient", "horizon", "init", "seed", "replications", "window", "reference",
        "record_every", "drift", "baseline", "scenario", "output_dir", "n_jobs",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigParseError(f"unknown fields: {sorted(unknown)}")
    try:
        graph = Graph.from_dict(data["graph"])
        penalty = PenaltySpec.from_dict(data.get("penalty", {}))
        s = dict(data.get("step", {"mu": 0.01}))
        step = StepParams(float(s["mu"]), s.get("eta"), s.get("theta"),
                          s.get("mu_schedule", "constant"))
        drift = DriftSchedule.from_dict(data["drift"]) if data.get("drift") else None
        cfg = RunConfig(
            graph=graph,
            agents=list(data["agents"]),
            penalty=penalty,
            combination=data.get("combination", {"rule": "metropolis"}),
            a1=data.get("a1"),
            a2=data.get("a2"),
            strategy=str(data.get("strategy", "atc")).lower(),
            step=step,
            gradient=data.get("gradient", "stochastic"),
            horizon=int(data.get("horizon", 1000)),
            init=dict(data.get("init", {"mode": "zeros"})),
            seed=int(data.get("seed", 0)),
            replications=int(data.get("replications", 1)),
            window=float(data.get("window", 0.25)),
            reference=data.get("reference", "w_star"),
            record_every=int(data.get("record_every", 1)),
            drift=drift,
            baseline=data.get("baseline"),
            scenario=data.get("scenario"),
            output_dir=str(env.get(OUTPUT_ENV) or data.get("output_dir", "runs")),
            n_jobs=int(data.get("n_jobs", 1)),
        )
        cfg.build_problems()
        cfg.build_strategy()
    except ConfigParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid configuration: {exc}") from exc
    return cfg


def load_config(source, env: dict | None = None) -> RunConfig:
    """Read a configuration from a path, a JSON string or a mapping."""
    if isinstance(source, dict):
        return parse_config(source, env)
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        if not path.exists():
            raise ConfigParseError(f"no such configuration file: {path}")
        text = path.read_text()
    else:
        text = source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"malformed JSON: {exc}") from exc
    return parse_config(data, env)


def bundled_config(name: str = "tracking_default") -> Path:
    """Path of a configuration shipped with the package."""
    from importlib.resources import files

    path = files("penaldiff") / "data" / f"{name}.json"
    if not path.is_file():
        raise ConfigParseError(f"no bundled configuration named {name!r}")
    return Path(str(path))
