"""
Constraint drift schedules and the moving-hyperplane tracking scenario.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion import is_feasible
from ..exceptions import InfeasibleKeyframe
from ..problem import AffineConstraint


@dataclass
class Track:
    """Keyframed parameters of one affine constraint of one agent."""

    agent: int
    keyframes: list  # [(iteration, b, z)], sorted by iteration
    index: int = 0
    kind: str = "inequality"

    def __post_init__(self):
        frames = []
        for f in self.keyframes:
            if isinstance(f, dict):
                f = (f["iteration"], f["b"], f["z"])
            it, b, z = f
            frames.append((int(it), np.asarray(b, dtype=float), float(z)))
        frames.sort(key=lambda f: f[0])
        if not frames:
            raise ValueError("a track needs at least one keyframe")
        self.keyframes = frames
        self._its = np.array([f[0] for f in frames])

    def at(self, i: int) -> tuple[np.ndarray, float]:
        """Linearly interpolated ``(b, z)`` at round ``i``; constant outside
        the keyframe range."""
        its = self._its
        if i <= its[0]:
            _, b, z = self.keyframes[0]
            return b, z
        if i >= its[-1]:
            _, b, z = self.keyframes[-1]
            return b, z
        j = int(np.searchsorted(its, i, side="right")) - 1
        i0, b0, z0 = self.keyframes[j]
        i1, b1, z1 = self.keyframes[j + 1]
        t = (i - i0) / (i1 - i0)
        return (1 - t) * b0 + t * b1, (1 - t) * z0 + t * z1

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "index": self.index,
            "kind": self.kind,
            "keyframes": [{"iteration": it, "b": b.tolist(), "z": z} for it, b, z in self.keyframes],
        }


@dataclass
class DriftSchedule:
    tracks: list = field(default_factory=list)

    def __post_init__(self):
        self.tracks = [t if isinstance(t, Track) else Track(**t) for t in self.tracks]
        self._last = {}

    @property
    def onset(self) -> int:
        """First round at which any constraint differs from its initial value."""
        best = None
        for t in self.tracks:
            _, b0, z0 = t.keyframes[0]
            for it, b, z in t.keyframes[1:]:
                if z != z0 or not np.array_equal(b, b0):
                    prev = max(k for k, _, _ in t.keyframes if k < it)
                    best = prev if best is None else min(best, prev)
                    break
        return 0 if best is None else best

    def keyframe_iterations(self) -> list[int]:
        return sorted({it for t in self.tracks for it, _, _ in t.keyframes})

    def constraints_at(self, i: int, problems) -> list[list[AffineConstraint]]:
        """Per-agent constraint lists with the scheduled parameters at round ``i``."""
        out = [list(p.constraints) for p in problems]
        for t in self.tracks:
            b, z = t.at(i)
            p = problems[t.agent]
            pos = t.index if t.kind == "equality" else len(p.equalities) + t.index
            out[t.agent][pos] = AffineConstraint(b, z, t.kind)
        return out

    def check_feasible(self, problems):
        for it in self.keyframe_iterations():
            cons = [c for agent in self.constraints_at(it, problems) for c in agent]
            if not is_feasible(cons):
                raise InfeasibleKeyframe(f"constraint intersection empty at keyframe {it}")

    def apply(self, i: int, problems) -> None:
        for n, t in enumerate(self.tracks):
            b, z = t.at(i)
            key = (t.agent, t.kind, t.index)
            last = self._last.get(key)
            if last is not None and last[1] == z and np.array_equal(last[0], b):
                continue
            problems[t.agent].set_affine(t.kind, t.index, b, z)
            self._last[key] = (b, z)

    def frozen(self, at: int = 0) -> "DriftSchedule":
        """Static schedule holding every constraint at its round-``at`` value."""
        tracks = []
        for t in self.tracks:
            b, z = t.at(at)
            tracks.append(Track(t.agent, [(0, b, z)], t.index, t.kind))
        return DriftSchedule(tracks)

    def to_dict(self) -> dict:
        return {"tracks": [t.to_dict() for t in self.tracks]}

    @classmethod
    def from_dict(cls, data: dict) -> "DriftSchedule":
        return cls([Track(**t) for t in data.get("tracks", [])])


def random_orthogonal(rng: np.random.Generator, m: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def moving_hyperplanes(
    seed: int = 0,
    n_agents: int = 5,
    dim: int = 2,
    onset: int = 160,
    horizon: int = 10_000,
    normal_scale: float = 0.2,
    radius: tuple[float, float] = (0.5, 0.3),
    rotation: float = np.pi / 6,
    center_shift: float = 0.3,
    n_keyframes: int = 20,
    edge_prob: float = 0.3,
    model_norm: tuple[float, float] = (0.8, 1.2),
) -> dict:
    """Random regression network with one drifting halfspace per agent.

    Model data follow the usual recipe: ``sigma_v2 ~ U(0,1)``,
    ``R_h = Q diag(U(0,1)) Q'`` with ``Q`` orthogonal (QR of a Gaussian
    matrix) and a random model vector ``w_bar``. The agents' halfspaces
    ``b_k'w <= z_k`` bound a polygon of inradius ``radius[0]`` around the
    origin until ``onset``; afterwards the polygon rotates by ``rotation``,
    its center moves by ``center_shift`` and its inradius shrinks to
    ``radius[1]`` by ``horizon``. The center stays strictly feasible, so
    every keyframe is feasible.

    Returns the ``agents``, ``graph`` and ``drift`` sections of a run
    configuration.
    """
    from ..topology import random_connected_graph

    if dim < 2:
        raise ValueError("the moving-polygon scenario needs dim >= 2")
    rng = np.random.default_rng(seed)
    graph = random_connected_graph(n_agents, rng, p=edge_prob)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    w_bar = direction * rng.uniform(*model_norm)

    agents = []
    for _ in range(n_agents):
        sigma_v2 = float(rng.uniform(0.0, 1.0))
        q = random_orthogonal(rng, dim)
        lam = rng.uniform(0.0, 1.0, size=dim)
        R = q @ np.diag(lam) @ q.T
        R = 0.5 * (R + R.T)
        agents.append({"cost": {"kind": "mse", "R_h": R.tolist(), "sigma_v2": sigma_v2,
                                "w_bar": w_bar.tolist()}})

    # normals of a polygon, in the plane of the first two coordinates
    base = rng.uniform(0.0, 2 * np.pi)
    angles = base + 2 * np.pi * np.arange(n_agents) / n_agents + rng.uniform(-0.2, 0.2, n_agents)
    shift_dir = rng.standard_normal(dim)
    shift_dir /= np.linalg.norm(shift_dir)

    def params(k, frac):
        ang = angles[k] + rotation * frac
        u = np.zeros(dim)
        u[0], u[1] = np.cos(ang), np.sin(ang)
        b = normal_scale * u
        center = center_shift * frac * shift_dir
        r = radius[0] + (radius[1] - radius[0]) * frac
        return b, float(b @ center + normal_scale * r)

    times = np.unique(np.round(np.linspace(onset, horizon, n_keyframes + 1)).astype(int))
    tracks = []
    for k in range(n_agents):
        frames = [(0, *params(k, 0.0))]
        for t in times:
            frames.append((int(t), *params(k, (t - onset) / (horizon - onset))))
        tracks.append(Track(k, frames))
        b0, z0 = frames[0][1], frames[0][2]
        agents[k]["inequalities"] = [{"b": b0.tolist(), "z": z0}]
        agents[k]["equalities"] = []
    return {
        "graph": graph.to_dict(),
        "agents": agents,
        "drift": DriftSchedule(tracks).to_dict(),
    }
