"""
Scalar penalty families.

Inequality kinds (applied to ``g(w) <= 0``):

* ``sip``               ``max(0, x)**3``
* ``smooth_norm_plus``  ``sqrt(max(0, x)**2 + rho**2) - rho``
* ``smooth_norm_raw``   ``sqrt(x**2 + rho**2)``  (positive on the feasible side)

Equality kinds (applied to ``h(w) = 0``):

* ``sep``               ``x**2``
* ``smooth_norm_raw``   ``sqrt(x**2 + rho**2)``

All functions accept scalars or arrays and are evaluated elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NonpositiveRadius, UnboundedCurvature

INEQUALITY_KINDS = ("sip", "smooth_norm_plus", "smooth_norm_raw")
EQUALITY_KINDS = ("sep", "smooth_norm_raw")

_ALIASES = {
    "SIP": "sip",
    "SmoothNormPlus": "smooth_norm_plus",
    "SmoothNormRaw": "smooth_norm_raw",
    "SEP": "sep",
}


def _canonical(kind: str) -> str:
    return _ALIASES.get(kind, kind)


@dataclass(frozen=True)
class PenaltySpec:
    inequality_kind: str = "smooth_norm_plus"
    equality_kind: str = "sep"
    rho: float = 0.01
    trust_radius: float | None = None

    def __post_init__(self):
        ineq = _canonical(self.inequality_kind)
        eq = _canonical(self.equality_kind)
        if ineq not in INEQUALITY_KINDS:
            raise ValueError(f"unknown inequality penalty {self.inequality_kind!r}")
        if eq not in EQUALITY_KINDS:
            raise ValueError(f"unknown equality penalty {self.equality_kind!r}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.trust_radius is not None and not self.trust_radius > 0:
            raise NonpositiveRadius("trust_radius must be positive")
        object.__setattr__(self, "inequality_kind", ineq)
        object.__setattr__(self, "equality_kind", eq)

    def kind(self, role: str) -> str:
        if role == "inequality":
            return self.inequality_kind
        if role == "equality":
            return self.equality_kind
        raise ValueError(f"role must be 'inequality' or 'equality', got {role!r}")

    def to_dict(self) -> dict:
        return {
            "inequality": self.inequality_kind,
            "equality": self.equality_kind,
            "rho": self.rho,
            "trust_radius": self.trust_radius,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PenaltySpec":
        return cls(
            inequality_kind=data.get("inequality", "smooth_norm_plus"),
            equality_kind=data.get("equality", "sep"),
            rho=float(data.get("rho", 0.01)),
            trust_radius=data.get("trust_radius"),
        )


def _eval_kind(kind: str, x, rho: float):
    x = np.asarray(x, dtype=float)
    if kind == "sip":
        xp = np.maximum(x, 0.0)
        return xp ** 3, 3.0 * xp ** 2
    if kind == "sep":
        return x ** 2, 2.0 * x
    if kind == "smooth_norm_raw":
        r = np.hypot(x, rho)
        return r, x / r
    if kind == "smooth_norm_plus":
        xp = np.maximum(x, 0.0)
        r = np.hypot(xp, rho)
        return r - rho, xp / r
    raise ValueError(f"unknown penalty kind {kind!r}")


def _second_kind(kind: str, x, rho: float):
    x = np.asarray(x, dtype=float)
    if kind == "sip":
        return 6.0 * np.maximum(x, 0.0)
    if kind == "sep":
        return np.full_like(x, 2.0)
    if kind == "smooth_norm_raw":
        return rho ** 2 / np.hypot(x, rho) ** 3
    if kind == "smooth_norm_plus":
        return np.where(x > 0, rho ** 2 / np.hypot(x, rho) ** 3, 0.0)
    raise ValueError(f"unknown penalty kind {kind!r}")


def penalty_eval(spec: PenaltySpec, role: str, x):
    """Value and first derivative of the penalty for ``role`` at ``x``.

    Returns Python floats for scalar input, arrays otherwise.
    """
    value, deriv = _eval_kind(spec.kind(role), x, spec.rho)
    if np.ndim(value) == 0:
        return float(value), float(deriv)
    return value, deriv


def penalty_second_derivative(spec: PenaltySpec, role: str, x):
    """Second derivative; at the kink of ``sip`` / ``smooth_norm_plus`` the
    left-hand value (zero) is returned."""
    out = _second_kind(spec.kind(role), x, spec.rho)
    return float(out) if np.ndim(out) == 0 else out


def curvature_bound(spec: PenaltySpec, role: str, radius: float | None = None) -> float:
    """Upper bound on the penalty's second derivative over ``|x| <= radius``.

    ``radius`` defaults to ``spec.trust_radius``. Only ``sip`` needs it;
    the other kinds have global bounds.
    """
    if radius is None:
        radius = spec.trust_radius
    if radius is not None and not radius > 0:
        raise NonpositiveRadius(f"radius must be positive, got {radius}")
    kind = spec.kind(role)
    if kind == "sep":
        return 2.0
    if kind in ("smooth_norm_raw", "smooth_norm_plus"):
        return 1.0 / spec.rho
    if radius is None:
        raise UnboundedCurvature("sip curvature grows like 6x; declare a trust radius")
    return 6.0 * float(radius)
