import math

import numpy as np
import pytest
from scipy.integrate import quad

from arratia import drift
from arratia.drift import (Constant, Linear, Mollified, Step, Tabulated, Tanh,
                           Zero, as_engine_spec, evaluate, l1_distance,
                           l_inf_distance, mollifier_kernel, mollifier_radius,
                           mollify, negate, parse_drift, drift_to_string)
from arratia.errors import ConfigError, UnboundedDriftError

ALL_BOUNDED = [
    Zero(),
    Constant(1.0),
    Constant(-0.3),
    Tanh(0.5, 1.0),
    Tanh(-2.0, 0.4),
    Step(1.0, -1.0, 1.0),
    Step(-0.7, 0.2, 2.5),
    Tabulated((-1.0, 0.0, 2.0), (0.0, 0.5, 0.0)),
    Mollified(Step(1.0, -1.0, 1.0), 4),
    Mollified(Tanh(0.5, 1.0), 2),
    Mollified(Constant(1.0), 3),
]


def test_evaluate_examples():
    assert evaluate(Linear(1.0), 2.0) == 2.0
    assert evaluate(Zero(), 7.3) == 0.0
    assert evaluate(Tanh(0.5, 1.0), 0.0) == 0.0


def test_evaluate_arrays():
    x = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(Tanh(2.0, 0.5).evaluate(x), 2.0 * np.tanh(x / 0.5))
    np.testing.assert_array_equal(Step(1.0, 0.0, 1.0).evaluate(x),
                                  ((x >= 0) & (x <= 1)).astype(float))


def test_tabulated_interpolation_and_extrapolation():
    d = Tabulated((0.0, 1.0, 2.0), (0.0, 2.0, 0.0))
    assert evaluate(d, 0.5) == 1.0
    assert evaluate(d, -5.0) == 0.0   # constant extrapolation
    assert evaluate(d, 9.0) == 0.0
    assert d.sup_norm == 2.0


def test_sup_norm_certification_random_grid():
    rng = np.random.default_rng(42)
    x = rng.uniform(-100.0, 100.0, 10_000)
    for d in ALL_BOUNDED:
        vals = np.abs(d.evaluate(x))
        assert vals.max() <= d.sup_norm + 1e-12, type(d).__name__


def test_mollified_sup_norm_not_larger():
    for base in (Step(1.0, -1.0, 1.0), Tanh(0.5, 1.0), Constant(2.0)):
        for n in (1, 2, 8):
            assert mollify(base, n).sup_norm <= base.sup_norm


def test_simple_sup_norms():
    assert Zero().sup_norm == 0.0
    assert Constant(3.0).sup_norm == 3.0
    assert Linear(1.0).sup_norm == math.inf
    assert not Linear(1.0).bounded


def test_mollifier_mass_unit():
    # independent adaptive quadrature of the scaled kernel
    for n in (1, 2, 8, 32):
        r = mollifier_radius(n)
        mass, _ = quad(lambda y: float(mollifier_kernel(n, y)), -r, r,
                       epsabs=1e-13, limit=200)
        assert abs(mass - 1.0) <= 1e-10


def test_mollify_trivial_bases():
    assert evaluate(mollify(Zero(), 5), 0.3) == 0.0
    m = mollify(Constant(1.0), 7)
    for x in (-3.0, 0.0, 10.0):
        assert evaluate(m, x) == pytest.approx(1.0, abs=1e-12)


def test_mollify_step_center_value():
    # kernel support 1/8 around 0 sits inside the step, so the value is ~1
    m = mollify(Step(1.0, -1.0, 1.0), 4)
    assert 0.99 <= evaluate(m, 0.0) <= 1.0


def test_mollify_smooths_and_vanishes_outside():
    m = mollify(Step(1.0, -1.0, 1.0), 4)
    assert evaluate(m, 1.0 + mollifier_radius(4) + 1e-6) == 0.0
    assert evaluate(m, -2.0) == 0.0
    mid = evaluate(m, 1.0)   # halfway down the smoothed edge
    assert 0.4 <= mid <= 0.6


def test_mollified_l1_convergence():
    base = Step(1.0, -1.0, 1.0)
    dists = [l1_distance(base, mollify(base, n), (-2.0, 2.0))
             for n in (1, 2, 4, 8, 16)]
    for a, b in zip(dists, dists[1:]):
        assert b <= a + 1e-12
    for n, dist in zip((1, 2, 4, 8, 16), dists):
        assert dist <= 0.5 / n
    assert dists[-1] < 0.05


def test_mollify_rejects_linear():
    with pytest.raises(UnboundedDriftError):
        mollify(Linear(1.0), 2)


def test_negate():
    assert negate(Zero()) == Zero()
    assert negate(Linear(1.0)) == Linear(-1.0)
    x = np.linspace(-5, 5, 41)
    for d in ALL_BOUNDED:
        nn = negate(negate(d))
        np.testing.assert_allclose(nn.evaluate(x), d.evaluate(x), atol=1e-14)
        np.testing.assert_allclose(negate(d).evaluate(x), -d.evaluate(x),
                                   atol=1e-14)
        assert negate(d).sup_norm == d.sup_norm


def test_l_inf_distance():
    assert l_inf_distance(Linear(1.0), Linear(1.1), (-1.0, 1.0), 201) == \
        pytest.approx(0.1, rel=1e-9)
    d = Tanh(0.5, 1.0)
    assert l_inf_distance(d, d, (-3.0, 3.0), 55) == 0.0
    v = l_inf_distance(Tanh(0.5, 1.0), Zero(), (-10.0, 10.0), 2001)
    assert 0.4999 <= v <= 0.5
    with pytest.raises(ConfigError):
        l_inf_distance(d, d, (1.0, 1.0), 10)


def test_l1_distance():
    assert l1_distance(Zero(), Zero(), (-1.0, 1.0)) == 0.0
    assert l1_distance(Step(1.0, 0.0, 1.0), Zero(), (-2.0, 2.0)) == \
        pytest.approx(1.0, abs=1e-8)


def test_parse_roundtrip():
    specs = ["zero", "linear:c=1.0", "const:k=-2.0", "tanh:k=0.5,lam=1.0",
             "step:h=1.0,lo=-1.0,hi=1.0",
             "mollify(step:h=1.0,lo=-1.0,hi=1.0,n=4)",
             "mollify(mollify(step:h=0.5,lo=0.0,hi=1.0,n=2),n=8)"]
    for s in specs:
        d = parse_drift(s)
        assert drift_to_string(d) == s
        assert parse_drift(drift_to_string(d)) == d


def test_parse_table(tmp_path):
    p = tmp_path / "drift.csv"
    p.write_text("0.0,0.0\n1.0,0.5\n2.0,0.0\n")
    d = parse_drift(f"table:{p}")
    assert isinstance(d, Tabulated)
    assert evaluate(d, 0.5) == 0.25
    assert drift_to_string(d) == f"table:{p}"


def test_parse_errors():
    for bad in ("gauss:k=1", "tanh:k=", "mollify(zero)", "zero:k=1"):
        with pytest.raises(ConfigError):
            parse_drift(bad)


def test_engine_spec_matches_evaluate():
    from arratia.flow import _drift_nb
    x = np.linspace(-4.0, 4.0, 101)
    for d in ALL_BOUNDED + [Linear(0.7)]:
        code, p, xs, ys = as_engine_spec(d)
        got = np.array([_drift_nb(code, p, xs, ys, xi) for xi in x])
        np.testing.assert_allclose(got, d.evaluate(x), atol=1e-12,
                                   err_msg=type(d).__name__)


def test_scale():
    d = Tanh(0.5, 1.0)
    s = drift.scale(d, 1.5)
    assert s.sup_norm == pytest.approx(0.75)
    x = np.linspace(-2, 2, 21)
    np.testing.assert_allclose(s.evaluate(x), 1.5 * d.evaluate(x))
