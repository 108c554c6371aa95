"""
Experiment drivers: validation reports, replicated runs, step-size sweeps
and the drifting-constraint tracking experiment.

Every driver derives its random streams from the master seed alone:
replication ``r`` uses ``SeedSequence(seed, spawn_key=(r, 0))`` for the
per-agent gradient noise and ``spawn_key=(r, 1)`` for a random initial
state, so results do not depend on ``n_jobs`` or on execution order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from ..diffusion import StepParams, Trajectory, agent_rngs, is_feasible, run
from ..exceptions import (
    DegenerateInput,
    NonFiniteIterate,
    StepSizeTooLarge,
    UnboundedCurvature,
)
from ..metrics import MetricsSeries, msd, scaling_fit, steady_state_msd, steady_state_summary, summary_line
from ..oracle import (
    GlobalProblem,
    contraction_factor,
    noiseless_fixed_point,
    solve_constrained,
    solve_penalized,
    step_size_terms,
)
from .config import RunConfig
from .scenario import DriftSchedule

REFERENCE_EVERY = 10


def _seed_seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def _rngs(cfg: RunConfig, r: int):
    if cfg.gradient == "exact":
        return None
    return agent_rngs(_seed_seq(cfg.seed, r, 0), cfg.n_agents)


def _init(cfg: RunConfig, r: int) -> np.ndarray:
    return cfg.initial_state(_seed_seq(cfg.seed, r, 1))


# ---------------------------------------------------------------- validation

@dataclass
class RunValidation:
    """Aggregated pre-run checks for one configuration."""

    combination: dict
    step_bound: dict | None
    contraction: dict | None
    feasibility: dict
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failures": list(self.failures),
            "combination": self.combination,
            "step_bound": self.step_bound,
            "contraction": self.contraction,
            "feasibility": self.feasibility,
        }


def _feasibility(cfg: RunConfig) -> dict:
    problems = cfg.build_problems()
    drift = cfg.build_drift()
    if drift is None:
        cons = [c for p in problems for c in p.constraints]
        return {"checked": [0], "feasible": bool(not cons or is_feasible(cons))}
    bad = []
    its = drift.keyframe_iterations()
    for it in its:
        cons = [c for agent in drift.constraints_at(it, problems) for c in agent]
        if cons and not is_feasible(cons):
            bad.append(it)
    return {"checked": its, "feasible": not bad, "infeasible_keyframes": bad}


def validate(cfg: RunConfig) -> RunValidation:
    """Combination-matrix flags, step-size bound, contraction factor and a
    feasibility probe of the network constraint set (at every keyframe when
    the constraints drift)."""
    failures = []
    strategy = cfg.build_strategy()
    report = strategy.validate()
    comb = report.to_dict()
    comb["passed"] = report.passed
    if not report.passed:
        bad = [k for k, v in report.flags().items() if not v]
        failures.append(f"combination matrix fails: {', '.join(bad)}")

    step_info = contraction = None
    if not strategy.is_baseline:
        gp = GlobalProblem(cfg.build_problems())
        mu, eta = cfg.step.mu, cfg.step.eta_value
        alpha = 0.0 if cfg.gradient == "exact" else None
        try:
            b = step_size_terms(gp, eta, alpha=alpha)
            step_info = {"mu": mu, "eta": eta, "mu_max": b.mu_max, "term": b.term,
                         "agent": b.agent, "ok": bool(mu < b.mu_max)}
            if not mu < b.mu_max:
                failures.append(f"mu={mu:g} exceeds the step-size bound {b.mu_max:.6g} "
                                f"({b.term} term, agent {b.agent})")
            c = contraction_factor(gp, mu, eta)
            contraction = {"gamma": c.gamma, "per_agent": list(c.per_agent),
                           "mu_eta_ok": c.mu_eta_ok, "mu_eta_max": c.mu_eta_max,
                           "is_contraction": c.is_contraction}
            if cfg.reference == "w_fixed" and not c.is_contraction:
                failures.append("fixed-point reference requested but the map is not a contraction")
        except UnboundedCurvature as exc:
            step_info = {"ok": False, "error": str(exc)}
            failures.append("penalty curvature unbounded; set penalty.trust_radius")

    feas = _feasibility(cfg)
    if not feas["feasible"]:
        failures.append("constraint intersection is empty")
    return RunValidation(comb, step_info, contraction, feas, failures)


# ----------------------------------------------------------------- references

def static_reference(cfg: RunConfig, problems=None) -> np.ndarray:
    problems = cfg.build_problems() if problems is None else problems
    gp = GlobalProblem(problems)
    if cfg.reference == "w_o_eta":
        return solve_penalized(gp, cfg.step.eta_value)
    if cfg.reference == "w_fixed":
        return noiseless_fixed_point(gp, cfg.build_strategy(), cfg.step)
    return solve_constrained(gp)


def drift_references(cfg: RunConfig, iterations, every: int = REFERENCE_EVERY) -> np.ndarray:
    """Time-varying ``w_star`` aligned with ``iterations``.

    The constrained optimum is computed exactly at every keyframe and every
    ``every`` rounds, and interpolated linearly in between.
    """
    its = np.asarray(iterations)
    drift = cfg.build_drift()
    problems = cfg.build_problems()
    last = int(its.max())
    anchors = set(range(0, last + 1, every)) | {last}
    if drift is not None:
        anchors |= {k for k in drift.keyframe_iterations() if k <= last}
    anchors = np.array(sorted(anchors))
    sols = []
    x = None
    for a in anchors:
        if drift is not None:
            drift.apply(int(a), problems)
        x = solve_constrained(GlobalProblem(problems), x0=x, check_feasible=False)
        sols.append(x)
    sols = np.array(sols)
    return np.column_stack([np.interp(its, anchors, sols[:, j]) for j in range(sols.shape[1])])


# ------------------------------------------------------------------------ run

def _run_one(cfg: RunConfig, r: int, strategy_kind: str | None = None,
             step: StepParams | None = None, frozen: bool = False):
    problems = cfg.build_problems()
    drift = cfg.build_drift()
    if drift is not None and frozen:
        drift = drift.frozen(0)
    traj = run(
        problems,
        cfg.build_strategy(strategy_kind),
        step or cfg.step,
        cfg.horizon,
        _init(cfg, r),
        rng=_rngs(cfg, r),
        schedule=drift,
        record_every=cfg.record_every,
    )
    return traj


def _replicate(cfg: RunConfig, r: int, reference, ref_kind: str, **kw):
    try:
        traj = _run_one(cfg, r, **kw)
    except NonFiniteIterate as exc:
        return {"replication": r, "diverged": True, "iteration": exc.iteration, "agent": exc.agent}
    series = msd(traj, reference, ref_kind)
    return {"replication": r, "diverged": False, "iterations": series.iterations,
            "per_agent": series.per_agent, "final_w": traj.final.w}


def _parallel(n_jobs: int, tasks):
    if n_jobs == 1:
        return [f(*a, **k) for f, a, k in tasks]
    return Parallel(n_jobs=n_jobs)(delayed(f)(*a, **k) for f, a, k in tasks)


def config_digest(cfg: RunConfig, extra=None) -> str:
    """Short hash of the resolved config (output location and worker count
    excluded), naming run directories."""
    data = cfg.to_dict()
    data.pop("output_dir", None)
    data.pop("n_jobs", None)
    if extra is not None:
        data["_extra"] = extra
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:12]


def run_directory(cfg: RunConfig, command: str, out_dir=None, extra=None) -> Path:
    base = Path(out_dir if out_dir is not None else cfg.output_dir)
    path = base / f"{command}-{config_digest(cfg, extra)}"
    path.mkdir(parents=True, exist_ok=True)
    return path


@dataclass
class ExperimentResult:
    series: MetricsSeries | None
    replications: list
    summary: dict
    validation: RunValidation
    run_dir: Path | None = None

    @property
    def diverged(self) -> bool:
        return any(r["diverged"] for r in self.replications)


def _write_common(run_dir: Path, cfg: RunConfig, validation: RunValidation):
    (run_dir / "config.json").write_text(cfg.to_json() + "\n")
    (run_dir / "validation.json").write_text(
        json.dumps(validation.to_dict(), indent=2, sort_keys=True, default=_plain) + "\n"
    )


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def run_experiment(cfg: RunConfig, out_dir=None, write: bool = True,
                   n_jobs: int | None = None) -> ExperimentResult:
    """Run ``cfg.replications`` seeded replications and aggregate their MSD.

    The metrics CSV holds the ensemble-mean squared distance per agent and
    round; ``summary.jsonl`` holds one line per replication and a final
    aggregate line.
    """
    validation = validate(cfg)
    n_jobs = cfg.n_jobs if n_jobs is None else n_jobs
    horizon_its = np.arange(0, cfg.horizon + 1, cfg.record_every)
    if horizon_its[-1] != cfg.horizon:
        horizon_its = np.append(horizon_its, cfg.horizon)
    if cfg.drift is not None:
        reference, ref_kind = drift_references(cfg, horizon_its), "w_star_time_varying"
    else:
        reference, ref_kind = static_reference(cfg), cfg.reference

    tasks = [(_replicate, (cfg, r, reference, ref_kind), {}) for r in range(cfg.replications)]
    reps = _parallel(n_jobs, tasks)
    ok = [r for r in reps if not r["diverged"]]
    lines = []
    series = None
    summary = {"kind": "aggregate", "replications": cfg.replications,
               "diverged": len(ok) < len(reps), "ref_kind": ref_kind,
               "strategy": cfg.strategy, "mu": cfg.step.mu, "eta": cfg.step.eta_value}
    for r in reps:
        if r["diverged"]:
            lines.append(summary_line(kind="replication", replication=r["replication"],
                                      diverged=True, iteration=r["iteration"], agent=r["agent"]))
            continue
        s = MetricsSeries(r["iterations"], r["per_agent"], ref_kind)
        mean, _ = steady_state_msd(s, cfg.window)
        lines.append(summary_line(kind="replication", replication=r["replication"],
                                  diverged=False, steady_state=mean,
                                  final_net_msd=float(s.net_mean[-1])))
    if ok:
        # fixed index order keeps the ensemble mean independent of n_jobs
        stack = np.stack([r["per_agent"] for r in ok])
        series = MetricsSeries(ok[0]["iterations"], stack.mean(axis=0), ref_kind)
        per_rep = [MetricsSeries(r["iterations"], r["per_agent"], ref_kind) for r in ok]
        summary.update(steady_state_summary(per_rep, cfg.window))
    lines.append(summary_line(**summary))

    run_dir = None
    if write:
        run_dir = run_directory(cfg, "run", out_dir)
        _write_common(run_dir, cfg, validation)
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            if series is not None:
                series.to_csv(fh)
        (run_dir / "summary.jsonl").write_text("\n".join(lines) + "\n")
    return ExperimentResult(series, reps, summary, validation, run_dir)


# ---------------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    table: list
    fit_w_o: object = None
    fit_w_star: object = None
    fit_error: str | None = None
    run_dir: Path | None = None

    @property
    def fit(self):
        """Slope fit against ``w_o(eta)``; raises when the grid was too small."""
        if self.fit_w_o is None:
            raise DegenerateInput(self.fit_error or "no fit available")
        return self.fit_w_o


def _sweep_point(cfg: RunConfig, r: int, w_o, w_star):
    try:
        traj = _run_one(cfg, r)
    except NonFiniteIterate as exc:
        return {"diverged": True, "iteration": exc.iteration}
    return {"diverged": False,
            "w_o": msd(traj, w_o, "w_o_eta"),
            "w_star": msd(traj, w_star, "w_star")}


def sweep_mu(cfg: RunConfig, mu_grid: Sequence[float], theta: float | None = None,
             out_dir=None, write: bool = True, n_jobs: int | None = None,
             scale_horizon: bool = True) -> SweepResult:
    """Steady-state MSD over a grid of step-sizes.

    With ``theta`` the penalty scale follows ``eta = mu**(-theta)``; without
    it ``cfg``'s eta is kept. Every grid point is checked against the
    step-size bound before anything runs. When ``scale_horizon`` is set,
    the horizon grows like ``1 / mu`` relative to the largest step so each
    run reaches steady state.
    """
    mus = [float(m) for m in mu_grid]
    if not mus:
        raise DegenerateInput("empty step-size grid")
    problems = cfg.build_problems()
    gp = GlobalProblem(problems)
    alpha = 0.0 if cfg.gradient == "exact" else None
    points = []
    for mu in mus:
        step = StepParams(mu, theta=theta) if theta is not None else StepParams(mu, cfg.step.eta_value)
        b = step_size_terms(gp, step.eta_value, alpha=alpha)
        if not mu < b.mu_max:
            raise StepSizeTooLarge(mu, b.mu_max, b.term, b.agent)
        horizon = cfg.horizon
        if scale_horizon:
            horizon = int(np.ceil(cfg.horizon * max(mus) / mu))
        points.append((mu, step, horizon, b))

    w_star = solve_constrained(gp)
    n_jobs = cfg.n_jobs if n_jobs is None else n_jobs
    tasks, w_os = [], []
    for mu, step, horizon, _ in points:
        w_o = solve_penalized(gp, step.eta_value)
        w_os.append(w_o)
        sub = dataclasses.replace(cfg, step=step, horizon=horizon)
        tasks += [(_sweep_point, (sub, r, w_o, w_star), {}) for r in range(cfg.replications)]
    results = _parallel(n_jobs, tasks)

    table = []
    for j, (mu, step, horizon, b) in enumerate(points):
        chunk = results[j * cfg.replications:(j + 1) * cfg.replications]
        row = {"mu": mu, "eta": step.eta_value, "horizon": horizon, "mu_max": b.mu_max,
               "bias_sq": float(np.sum((w_os[j] - w_star) ** 2))}
        if any(c["diverged"] for c in chunk):
            row["diverged"] = True
        else:
            m_o, h_o = steady_state_msd([c["w_o"] for c in chunk], cfg.window)
            m_s, h_s = steady_state_msd([c["w_star"] for c in chunk], cfg.window)
            row.update(diverged=False, msd_w_o=m_o, msd_w_o_hw=h_o, msd_w_star=m_s, msd_w_star_hw=h_s)
        table.append(row)

    result = SweepResult(table)
    good = [r for r in table if not r["diverged"]]
    try:
        result.fit_w_o = scaling_fit([(r["mu"], r["msd_w_o"]) for r in good])
        result.fit_w_star = scaling_fit([(r["mu"], r["msd_w_star"]) for r in good])
    except DegenerateInput as exc:
        result.fit_error = str(exc)

    if write:
        run_dir = run_directory(cfg, "sweep", out_dir, extra={"mu_grid": mus, "theta": theta})
        _write_common(run_dir, cfg, validate(cfg))
        cols = ["mu", "eta", "horizon", "mu_max", "bias_sq", "diverged",
                "msd_w_o", "msd_w_o_hw", "msd_w_star", "msd_w_star_hw"]
        rows = [",".join(cols)]
        for r in table:
            rows.append(",".join("" if r.get(c) is None else repr(r[c]) if isinstance(r.get(c), float)
                                 else str(r[c]) for c in cols))
        (run_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
        lines = [summary_line(kind="point", **r) for r in table]
        fit = {"kind": "fit", "theta": theta}
        if result.fit_w_o is not None:
            fit.update(slope_w_o=result.fit_w_o.slope, slope_w_star=result.fit_w_star.slope,
                       residual_w_o=result.fit_w_o.residual)
        else:
            fit["rejected"] = result.fit_error
        lines.append(summary_line(**fit))
        (run_dir / "summary.jsonl").write_text("\n".join(lines) + "\n")
        result.run_dir = run_dir
    return result


# ------------------------------------------------------------------- tracking

@dataclass
class TrackingResult:
    trajectory: Trajectory | None
    series: MetricsSeries | None
    references: np.ndarray
    summary: dict
    baseline_series: MetricsSeries | None = None
    static_series: MetricsSeries | None = None
    run_dir: Path | None = None

    @property
    def diverged(self) -> bool:
        return bool(self.summary.get("diverged"))


def _final_quarter(series: MetricsSeries) -> float:
    return float(series.tail(0.25).net_mean.mean())


def tracking_scenario(cfg: RunConfig, out_dir=None, write: bool = True) -> TrackingResult:
    """Penalized diffusion over a drifting constraint schedule.

    Tracking error is measured against the time-varying ``w_star``. The
    summary compares the post-onset average with the steady state of a
    companion run whose constraints stay frozen at their initial values,
    and, when ``cfg.baseline`` is set, with a baseline strategy run on the
    same seeds and schedule over the final quarter of the horizon.
    """
    if cfg.drift is None:
        drift = DriftSchedule([])
    else:
        drift = cfg.build_drift()
    drift.check_feasible(cfg.build_problems())
    onset = drift.onset

    its = np.arange(0, cfg.horizon + 1, cfg.record_every)
    if its[-1] != cfg.horizon:
        its = np.append(its, cfg.horizon)
    refs = drift_references(cfg, its)
    summary = {"kind": "tracking", "onset": onset, "horizon": cfg.horizon,
               "strategy": cfg.strategy, "mu": cfg.step.mu, "eta": cfg.step.eta_value}
    traj = series = static = base = None
    try:
        traj = _run_one(cfg, 0)
        series = msd(traj, refs, "w_star_time_varying")
    except NonFiniteIterate as exc:
        summary.update(diverged=True, iteration=exc.iteration, agent=exc.agent)
    if series is not None:
        summary["diverged"] = False
        static_traj = _run_one(cfg, 0, frozen=True)
        static = msd(static_traj, refs[0], "w_star")
        static_ss, _ = steady_state_msd(static, cfg.window)
        post = series.net_mean[series.iterations > onset]
        summary.update(
            static_steady_state=static_ss,
            post_onset_mean=float(post.mean()) if post.size else float("nan"),
            post_onset_max=float(post.max()) if post.size else float("nan"),
            final_quarter=_final_quarter(series),
        )
        summary["post_onset_ratio"] = summary["post_onset_mean"] / static_ss
        summary["bounded"] = bool(summary["post_onset_ratio"] <= 10.0)
        if cfg.baseline:
            b = dict(cfg.baseline)
            kind = b.pop("strategy", "projection_cta")
            step = StepParams(float(b.get("mu", 1.0)), b.get("eta"), b.get("theta"),
                              b.get("mu_schedule", "diminishing"))
            try:
                base = msd(_run_one(cfg, 0, strategy_kind=kind, step=step), refs,
                           "w_star_time_varying")
                summary.update(baseline=kind, baseline_final_quarter=_final_quarter(base))
                summary["beats_baseline"] = bool(summary["final_quarter"] < summary["baseline_final_quarter"])
            except NonFiniteIterate as exc:
                summary.update(baseline=kind, baseline_diverged=True, baseline_iteration=exc.iteration)

    result = TrackingResult(traj, series, refs, summary, base, static)
    if write:
        run_dir = run_directory(cfg, "track", out_dir)
        _write_common(run_dir, cfg, validate(cfg))
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            if series is not None:
                series.to_csv(fh)
        if base is not None:
            with open(run_dir / "baseline_metrics.csv", "w", newline="") as fh:
                base.to_csv(fh)
        if traj is not None:
            (run_dir / "mean_path.csv").write_text(_path_csv(traj, refs))
        (run_dir / "summary.jsonl").write_text(summary_line(**summary) + "\n")
        result.run_dir = run_dir
    return result


def _path_csv(traj: Trajectory, refs: np.ndarray) -> str:
    """Network-mean iterate and ``w_star`` per recorded round (plot data)."""
    mean = traj.mean_path()
    m = mean.shape[1]
    head = ["iter"] + [f"mean_{j}" for j in range(m)] + [f"w_star_{j}" for j in range(m)]
    rows = [",".join(head)]
    for i, it in enumerate(traj.iterations):
        vals = [repr(float(v)) for v in mean[i]] + [repr(float(v)) for v in refs[i]]
        rows.append(",".join([str(int(it))] + vals))
    return "\n".join(rows) + "\n"
