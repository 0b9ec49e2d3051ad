import math

import numpy as np
import pytest
from scipy.special import erf

from arratia import series
from arratia.drift import Constant, Linear, Step, Tanh, Zero
from arratia.errors import ConfigError, UnboundedDriftError
from arratia.kernel import calibrate_bound_constants
from arratia.series import (SeriesConfig, W0, W_partial, W_partial_estimate,
                            density_series, density_term, grad_W0,
                            survival_term, truncation_bound, truncation_tail)

TANH = Tanh(0.5, 1.0)
FAST = SeriesConfig(mc_samples=150_000, seed=11)


def test_W0_values():
    assert W0((0.0, 0.0), 1.0) == 0.0
    assert W0((0.0, 1.0), 1.0) == pytest.approx(0.5204998778130465, rel=1e-13)
    assert abs(W0((0.0, 100.0), 1.0) - 1.0) <= 1e-12


def test_grad_W0():
    g1, g2 = grad_W0((3.0, 3.0), 1.0)
    assert g2 == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)
    assert g1 == -g2
    # components cancel everywhere: W0 depends only on the gap
    for x in ((0.0, 0.5), (-1.0, 2.0)):
        g1, g2 = grad_W0(x, 0.7)
        assert g1 + g2 == 0.0
    # finite-difference oracle
    h = 1e-6
    fd = (W0((0.0, 0.5 + h), 0.7) - W0((0.0, 0.5 - h), 0.7)) / (2 * h)
    assert abs(grad_W0((0.0, 0.5), 0.7)[1] - fd) <= 1e-7


def test_term0():
    est = density_term(0, 0.3, 1.0, TANH, FAST)
    assert est.value == pytest.approx(0.5641895835477563, rel=1e-14)
    assert est.stderr == 0.0


def test_zero_drift_terms_vanish():
    for n in (1, 2, 3):
        est = density_term(n, 0.0, 1.0, Zero(), FAST)
        assert est.value == 0.0 and est.stderr == 0.0 and est.bound == 0.0


def test_constant_drift_terms_vanish_exactly():
    # the drift difference factor is identically zero for constant drift
    for n in (1, 2, 3):
        est = density_term(n, 0.0, 1.0, Constant(0.5), FAST)
        assert est.value == 0.0
        assert est.stderr == 0.0


def test_rejects_linear_drift():
    with pytest.raises(UnboundedDriftError, match="unsupported by series"):
        density_term(1, 0.0, 1.0, Linear(1.0), FAST)
    with pytest.raises(UnboundedDriftError):
        density_series(0.0, 1.0, Linear(-1.0))


def test_rejects_beyond_nmax():
    with pytest.raises(ConfigError, match="n_max"):
        density_term(5, 0.0, 1.0, TANH, FAST)


def test_term1_quadrature_resolution_stable():
    a = series._term1_quadrature(TANH, 1.0, "density", 0.0, 40, 48)
    b = series._term1_quadrature(TANH, 1.0, "density", 0.0, 56, 64)
    assert abs(a - b) <= 1e-7
    assert a == pytest.approx(-0.11820602, abs=1e-6)


def test_term1_even_in_x_for_odd_drift():
    # odd drift makes the density even in x
    a = series._term1_quadrature(TANH, 1.0, "density", 0.8, 40, 48)
    b = series._term1_quadrature(TANH, 1.0, "density", -0.8, 40, 48)
    assert a == pytest.approx(b, rel=1e-9)


def test_term1_quadrature_vs_importance_sampling():
    # same integral through the n>=2 Monte Carlo machinery
    quad_val = series._term1_quadrature(TANH, 1.0, "density", 0.0, 40, 48)
    mc_val, mc_err = series._term_mc(1, TANH, 1.0, "density", 0.0,
                                     SeriesConfig(mc_samples=400_000, seed=5))
    assert abs(mc_val - quad_val) <= 4 * mc_err


def test_term1_density_consistent_with_survival_gap_quotient():
    # d/dx2 of term 1 at the diagonal == small-gap limit of the survival term
    t = 1.0
    dens = series._term1_quadrature(TANH, t, "density", 0.0, 48, 56)
    quots = []
    for h in (2e-3, 1e-3):
        w1 = series._term1_quadrature(TANH, t, "survival", (0.0, h), 48, 56)
        quots.append(w1 / h)
    extrap = 2 * quots[1] - quots[0]
    assert extrap == pytest.approx(dens, rel=2e-3)


def test_truncation_bound_properties():
    consts = calibrate_bound_constants()
    assert truncation_bound(1, 1.0, 0.0, consts) == 0.0
    b = [truncation_bound(n, 1.0, 0.5, consts) for n in (1, 2, 3)]
    assert all(v > 0 for v in b)
    # monotone in sup-norm and s
    assert truncation_bound(2, 1.0, 0.6, consts) > b[1]
    assert truncation_bound(2, 1.5, 0.5, consts) > b[1]
    # gamma growth eventually beats the geometric factor
    ratios = [truncation_bound(n + 1, 1.0, 0.5, consts)
              / truncation_bound(n, 1.0, 0.5, consts) for n in range(1, 60)]
    assert all(r2 < r1 + 1e-9 for r1, r2 in zip(ratios, ratios[1:]))
    assert ratios[-1] < 1.0
    assert truncation_tail(3, 1.0, 0.5, consts) < math.inf


def test_term_bound_dominance_small_family():
    consts = calibrate_bound_constants()
    for d in (TANH, Step(0.4, -1.0, 1.0)):
        for n in (1, 2, 3):
            est = density_term(n, 0.0, 1.0, d, FAST, consts)
            assert abs(est.value) <= est.bound + 3 * est.stderr


def test_density_series_zero_drift_exact():
    est = density_series(0.0, 1.0, Zero(), tol=1e-12)
    assert est.value == 1.0 / math.sqrt(math.pi)
    assert est.stat_error == 0.0
    assert est.det_bound == 0.0
    assert est.flag == ""
    est = density_series(0.0, 0.25, Zero(), tol=1e-12)
    assert est.value == pytest.approx(1.1283791670955126, rel=1e-15)


def test_density_series_constant_equals_zero_drift():
    est = density_series(0.0, 1.0, Constant(1.0), tol=1e-12, cfg=FAST)
    assert est.value == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)
    assert est.stat_error == 0.0
    assert est.flag == "tolerance_not_met"   # the a-priori tail stays large


def test_density_series_partial_sum_stabilizes():
    cfg = SeriesConfig(mc_samples=200_000, seed=3)
    consts = calibrate_bound_constants()
    terms = [density_term(n, 0.0, 1.0, TANH, cfg, consts) for n in range(4)]
    partial = np.cumsum([t.value for t in terms])
    for n in (1, 2, 3):
        step = abs(partial[n] - partial[n - 1])
        assert step <= truncation_bound(n, 1.0, TANH.sup_norm, consts) \
            + 3 * terms[n].stderr


def test_W_partial_zero_drift_is_W0():
    for N in (0, 2):
        cfg = SeriesConfig(mc_samples=10_000, seed=1)
        assert W_partial((0.0, 1.0), 1.0, Zero(), N, cfg) == \
            pytest.approx(W0((0.0, 1.0), 1.0), rel=1e-14)
    assert W_partial((0.0, 1.0), 1.0, Zero(), 0) == \
        pytest.approx(0.5204998778130465, rel=1e-13)


def test_W_partial_estimate_structure():
    est = W_partial_estimate((0.0, 1.0), 1.0, TANH, 2, FAST)
    assert est.n_terms == 3
    assert est.det_bound > 0
    assert math.isfinite(est.value)
    assert float(est) == est.value


def test_survival_term_zero_order():
    est = survival_term(0, (0.0, 1.0), 1.0, TANH, FAST)
    assert est.value == pytest.approx(erf(0.5), rel=1e-13)
