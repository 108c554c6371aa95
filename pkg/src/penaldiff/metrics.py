"""
Error measures: mean-square deviation series, steady-state estimates and
log-log scaling fits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateInput, DimensionMismatch, EmptySeries

REF_KINDS = ("w_star", "w_o_eta", "w_fixed", "w_star_time_varying")


@dataclass
class MetricsSeries:
    iterations: np.ndarray
    per_agent: np.ndarray
    ref_kind: str = "w_star"

    def __post_init__(self):
        self.iterations = np.asarray(self.iterations)
        self.per_agent = np.asarray(self.per_agent, dtype=float)
        if self.per_agent.ndim != 2 or self.per_agent.shape[0] != self.iterations.shape[0]:
            raise DimensionMismatch("per_agent must be (K, N) matching iterations")
        if self.ref_kind not in REF_KINDS:
            raise ValueError(f"unknown reference kind {self.ref_kind!r}")

    @property
    def net_mean(self) -> np.ndarray:
        return self.per_agent.mean(axis=1)

    def __len__(self):
        return self.iterations.shape[0]

    def tail(self, window: float) -> "MetricsSeries":
        if not 0 < window <= 1:
            raise ValueError("window must lie in (0, 1]")
        k = len(self)
        start = k - max(1, int(np.ceil(window * k)))
        return MetricsSeries(self.iterations[start:], self.per_agent[start:], self.ref_kind)

    def to_csv(self, fh=None) -> str | None:
        """Long-format CSV: ``iter, agent, sq_dist, net_mean, ref_kind``.

        Floats are written with ``repr`` so identical runs give identical
        bytes.
        """
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["iter", "agent", "sq_dist", "net_mean", "ref_kind"])
        means = self.net_mean
        for j, it in enumerate(self.iterations):
            m = repr(float(means[j]))
            for k, v in enumerate(self.per_agent[j]):
                w.writerow([int(it), k, repr(float(v)), m, self.ref_kind])
        return out.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, text: str) -> "MetricsSeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise EmptySeries("CSV holds no rows")
        its = sorted({int(r["iter"]) for r in rows})
        agents = sorted({int(r["agent"]) for r in rows})
        index = {it: j for j, it in enumerate(its)}
        data = np.zeros((len(its), len(agents)))
        for r in rows:
            data[index[int(r["iter"])], int(r["agent"])] = float(r["sq_dist"])
        return cls(np.array(its), data, rows[0]["ref_kind"])


def msd(trajectory, reference, ref_kind: str = "w_star") -> MetricsSeries:
    """Squared distance of every agent to the reference at every recorded round.

    ``reference`` is an ``(M,)`` vector, an ``(N, M)`` array when
    ``ref_kind='w_fixed'``, or a ``(K, M)`` array aligned with the recorded
    rounds when ``ref_kind='w_star_time_varying'``.
    """
    its = np.asarray(trajectory.iterations)
    X = np.asarray(trajectory.iterates, dtype=float)
    K, N, M = X.shape
    ref = np.asarray(reference, dtype=float)
    if ref_kind == "w_star_time_varying":
        if ref.shape != (K, M):
            raise DimensionMismatch(f"time-varying reference must be ({K}, {M}), got {ref.shape}")
        diff = X - ref[:, None, :]
    elif ref_kind == "w_fixed":
        if ref.shape != (N, M):
            raise DimensionMismatch(f"fixed-point reference must be ({N}, {M}), got {ref.shape}")
        diff = X - ref[None, :, :]
    else:
        if ref.shape != (M,):
            raise DimensionMismatch(f"reference must be ({M},), got {ref.shape}")
        diff = X - ref
    return MetricsSeries(its, np.einsum("knm,knm->kn", diff, diff), ref_kind)


def _trailing_means(series, window):
    if isinstance(series, MetricsSeries):
        series = [series]
    series = list(series)
    if not series:
        raise EmptySeries("no replications")
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    tails = []
    for s in series:
        if len(s) == 0:
            raise EmptySeries("empty series")
        tails.append(s.tail(window).net_mean)
    return tails


def steady_state_msd(series, window: float = 0.25) -> tuple[float, float]:
    """Ensemble and trailing-window average of the network MSD.

    ``series`` is one :class:`MetricsSeries` or a list of replications.
    Returns ``(mean, half_width)`` with ``half_width`` two standard errors
    across replications (zero for a single replication).
    """
    per_rep = np.array([t.mean() for t in _trailing_means(series, window)])
    mean = float(per_rep.mean())
    if per_rep.size < 2:
        return mean, 0.0
    return mean, float(2.0 * per_rep.std(ddof=1) / np.sqrt(per_rep.size))


def steady_state_summary(series, window: float = 0.25) -> dict:
    tails = _trailing_means(series, window)
    mean, hw = steady_state_msd(series, window)
    return {
        "mean": mean,
        "half_width": hw,
        "replications": len(tails),
        "window": window,
        # finite-horizon stand-in for the limsup
        "trailing_max": float(np.mean([t.max() for t in tails])),
    }


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.residual))


def scaling_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line through ``(log mu, log value)``.

    ``residual`` is the root-mean-square residual in log space.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise DegenerateInput("need at least three (mu, value) points")
    if np.unique(pts[:, 0]).size != pts.shape[0]:
        raise DegenerateInput("step-sizes must be distinct")
    if (pts <= 0).any() or not np.isfinite(pts).all():
        raise DegenerateInput("log-log fit needs positive finite values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return ScalingFit(float(slope), float(intercept), float(np.sqrt(np.mean(res ** 2))))


def summary_line(**fields) -> str:
    """One JSON-lines record with sorted keys."""
    return json.dumps(fields, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")
