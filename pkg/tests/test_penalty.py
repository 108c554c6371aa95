import numpy as np
import pytest
from hypothesis import given, strategies as st

from penaldiff import PenaltySpec, curvature_bound, penalty_eval
from penaldiff.exceptions import NonpositiveRadius, UnboundedCurvature
from penaldiff.penalty import penalty_second_derivative

INEQ_KINDS = ["sip", "smooth_norm_plus", "smooth_norm_raw"]


def spec(kind, rho=0.01, radius=5.0):
    if kind in ("sep",):
        return PenaltySpec("smooth_norm_plus", kind, rho=rho, trust_radius=radius)
    return PenaltySpec(kind, "sep", rho=rho, trust_radius=radius)


def role(kind):
    return "equality" if kind == "sep" else "inequality"


@pytest.mark.parametrize(
    "kind, x, expected",
    [
        ("sip", 2.0, (8.0, 12.0)),
        ("sip", -1.0, (0.0, 0.0)),
        ("sep", 3.0, (9.0, 6.0)),
        ("smooth_norm_raw", 0.0, (0.01, 0.0)),
        ("smooth_norm_plus", 0.0, (0.0, 0.0)),
    ],
)
def test_worked_values(kind, x, expected):
    v, d = penalty_eval(spec(kind), role(kind), x)
    assert v == pytest.approx(expected[0], abs=1e-15)
    assert d == pytest.approx(expected[1], abs=1e-15)


def test_aliases():
    s = PenaltySpec("SmoothNormPlus", "SEP", rho=0.5)
    assert s.inequality_kind == "smooth_norm_plus"
    assert PenaltySpec.from_dict(s.to_dict()) == s


def test_curvature_bounds():
    assert curvature_bound(spec("sep"), "equality", 3.0) == 2.0
    assert curvature_bound(spec("smooth_norm_raw"), "inequality", 1.0) == pytest.approx(100.0)
    assert curvature_bound(spec("smooth_norm_plus"), "inequality", 1.0) == pytest.approx(100.0)
    assert curvature_bound(spec("sip"), "inequality", 5.0) == pytest.approx(30.0)


def test_curvature_errors():
    with pytest.raises(NonpositiveRadius):
        curvature_bound(spec("sep"), "equality", 0.0)
    with pytest.raises(UnboundedCurvature):
        curvature_bound(PenaltySpec("sip"), "inequality")


def test_vectorized_matches_scalar():
    xs = np.linspace(-2, 2, 41)
    for kind in INEQ_KINDS + ["sep"]:
        v, d = penalty_eval(spec(kind), role(kind), xs)
        for x, vi, di in zip(xs, v, d):
            sv, sd = penalty_eval(spec(kind), role(kind), float(x))
            assert sv == vi and sd == di


@pytest.mark.parametrize("kind", INEQ_KINDS + ["sep"])
def test_derivative_matches_finite_difference(kind, rng):
    s, r = spec(kind, rho=0.05), role(kind)
    xs = rng.uniform(-3, 3, 1000)
    if kind in ("sip", "smooth_norm_plus"):
        xs = xs[np.abs(xs) >= 1e-4]
    h = 1e-6
    for x in xs:
        _, d = penalty_eval(s, r, x)
        fd = (penalty_eval(s, r, x + h)[0] - penalty_eval(s, r, x - h)[0]) / (2 * h)
        assert abs(d - fd) <= 1e-6 * (1 + abs(d))


@pytest.mark.parametrize("kind", INEQ_KINDS + ["sep"])
def test_midpoint_convexity(kind, rng):
    s, r = spec(kind, rho=0.05, radius=3.0), role(kind)
    a, b = rng.uniform(-3, 3, (2, 10_000))
    va, _ = penalty_eval(s, r, a)
    vb, _ = penalty_eval(s, r, b)
    vm, _ = penalty_eval(s, r, (a + b) / 2)
    assert (vm <= (va + vb) / 2 + 1e-12).all()


@pytest.mark.parametrize("kind", INEQ_KINDS + ["sep"])
def test_curvature_bound_holds(kind, rng):
    radius = 3.0
    s, r = spec(kind, rho=0.05, radius=radius), role(kind)
    bound = curvature_bound(s, r, radius)
    xs = rng.uniform(-radius, radius, 1000)
    h = 1e-4
    for x in xs:
        if kind in ("sip", "smooth_norm_plus") and abs(x) < 2 * h:
            continue
        second = (penalty_eval(s, r, x + h)[1] - penalty_eval(s, r, x - h)[1]) / (2 * h)
        assert second <= bound + 1e-8
        assert penalty_second_derivative(s, r, x) <= bound + 1e-12


@pytest.mark.parametrize("kind", ["sip", "smooth_norm_plus"])
@given(st.floats(-1e6, 0.0, allow_nan=False))
def test_inequality_zero_set(kind, x):
    v, d = penalty_eval(spec(kind), "inequality", x)
    assert v == 0.0 and d == 0.0


@pytest.mark.parametrize("kind", ["sip", "smooth_norm_plus"])
@given(st.floats(1e-3, 1e3))
def test_inequality_positive_when_violated(kind, x):
    v, d = penalty_eval(spec(kind), "inequality", x)
    assert v > 0 and d > 0


@given(st.one_of(st.just(0.0), st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-150)))
def test_sep_zero_only_at_zero(x):
    # magnitudes below 1e-150 underflow when squared
    v, _ = penalty_eval(spec("sep"), "equality", x)
    assert (v == 0.0) == (x == 0.0)


def test_raw_is_positive_on_feasible_side():
    v, d = penalty_eval(spec("smooth_norm_raw"), "inequality", -1.0)
    assert v > 0 and d < 0
