import math

import numpy as np
import pytest
from scipy.special import erf

from arratia import flow, oracle
from arratia.drift import Constant, Linear, Tanh, Zero
from arratia.errors import ConfigError, MarginError
from arratia.flow import (FlowConfig, duality_check, empirical_density,
                          flow_config_for, meeting_probability,
                          required_half_width, simulate_flow)

TANH = Tanh(0.5, 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        FlowConfig(half_width=1.0, spacing=0.2, dt=1e-3, t=1.0, n_runs=10)
    cfg = FlowConfig(half_width=1.0, spacing=0.05, dt=1e-3, t=1.0, n_runs=10)
    starters = cfg.starters()
    assert starters[0] == -1.0 and starters[-1] == 1.0
    assert len(starters) == 41


def test_required_half_width():
    assert required_half_width(Zero(), 1.0, 2.0) == pytest.approx(6.0)
    assert required_half_width(Constant(1.0), 1.0, 2.0) == pytest.approx(7.0)
    # contracting linear flow needs exponential room
    assert required_half_width(Linear(-1.0), 1.0, 2.0) == \
        pytest.approx(6.0 * math.e)
    assert required_half_width(Linear(1.0), 1.0, 2.0) == pytest.approx(6.0)


def test_order_and_mass_invariants():
    cfg = flow_config_for(TANH, 0.5, 1.0, spacing=0.02, dt=5e-4, n_runs=50,
                          seed=9)
    ens = simulate_flow(TANH, cfg)
    n0 = len(cfg.starters())
    for s in ens:
        assert np.all(np.diff(s.positions) > 0)
        assert int(s.masses.sum()) == n0
        assert np.all(s.masses >= 1)


def test_single_starter_zero_drift():
    cfg = FlowConfig(half_width=1e-9, spacing=0.04, dt=1e-3, t=1.0,
                     n_runs=3000, seed=2)
    # a degenerate grid still produces one starter at ~0
    starters = cfg.starters()
    assert len(starters) == 1
    ens = simulate_flow(Zero(), cfg)
    finals = np.array([s.positions[0] for s in ens])
    assert abs(finals.mean()) <= 3.0 / math.sqrt(len(finals))
    assert np.isclose(finals.std(), 1.0, rtol=0.1)


def test_cluster_count_zero_drift():
    cfg = FlowConfig(half_width=10.0, spacing=0.01, dt=2e-4, t=1.0,
                     n_runs=300, seed=5, eval_margin=5.0)
    ens = simulate_flow(Zero(), cfg)
    counts = [np.sum((s.positions >= -5) & (s.positions <= 5)) for s in ens]
    expected = 10.0 / math.sqrt(math.pi)
    assert abs(np.mean(counts) - expected) / expected <= 0.05


def test_empirical_density_zero_drift_bins():
    cfg = FlowConfig(half_width=9.0, spacing=0.01, dt=2e-4, t=1.0,
                     n_runs=250, seed=6, eval_margin=5.0)
    ens = simulate_flow(Zero(), cfg)
    edges, ests = empirical_density(ens, (-4.0, 4.0), 4)
    exact = oracle.density_zero(1.0)
    for e in ests:
        assert abs(e.value - exact) <= 3 * e.stat_error + 0.05 * exact
    assert len(edges) == 5


def test_empirical_density_margin_enforced():
    cfg = FlowConfig(half_width=6.0, spacing=0.02, dt=1e-3, t=1.0,
                     n_runs=5, seed=1, eval_margin=5.0)
    ens = simulate_flow(Zero(), cfg)
    with pytest.raises(MarginError):
        empirical_density(ens, (-2.0, 2.0), 2)


def test_empty_window_zero_density():
    # degenerate configuration: tiny starter set, long horizon, no declared
    # margin; the histogram must come back with zero bins, not an error
    cfg = FlowConfig(half_width=0.2, spacing=0.04, dt=5e-3, t=25.0,
                     n_runs=20, seed=3)
    ens = simulate_flow(Zero(), cfg)
    edges, ests = empirical_density(ens, (0.19, 0.2), 1)
    assert ests[0].value == 0.0


def test_seed_determinism():
    cfg = flow_config_for(TANH, 0.5, 1.0, spacing=0.02, dt=1e-3, n_runs=20,
                          seed=77)
    a = simulate_flow(TANH, cfg)
    b = simulate_flow(TANH, cfg)
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.positions, sb.positions)
        np.testing.assert_array_equal(sa.masses, sb.masses)


def test_meeting_probability_requires_order():
    cfg = FlowConfig(half_width=1.0, spacing=0.02, dt=1e-3, t=1.0, n_runs=10)
    with pytest.raises(ConfigError):
        meeting_probability(1.0, 1.0, 1.0, Zero(), cfg)


def test_meeting_probability_zero_drift_erf():
    cfg = FlowConfig(half_width=1.0, spacing=0.02, dt=1e-4, t=1.0,
                     n_runs=20_000, seed=12)
    est = meeting_probability(0.0, 1.0, 1.0, Zero(), cfg)
    exact = erf(0.5)
    assert abs(est.p_hat - exact) <= 3 * est.stderr


def test_meeting_probability_grows_with_gap():
    cfg = FlowConfig(half_width=1.0, spacing=0.02, dt=5e-4, t=1.0,
                     n_runs=8000, seed=13)
    ps = [meeting_probability(0.0, g, 1.0, Zero(), cfg).p_hat
          for g in (0.2, 0.6, 1.5)]
    assert ps[0] < ps[1] < ps[2]


def test_duality_zero_drift_self_dual():
    cfg = flow_config_for(Zero(), 1.0, 0.6, spacing=0.02, dt=2e-4,
                          n_runs=8000, seed=14)
    res = duality_check(0.0, 0.1, 1.0, Zero(), cfg)
    assert abs(res.lhs - res.rhs) <= 3 * res.combined_stderr


def test_starter_refinement_converged():
    # halving the spacing moves the windowed density by < 2 combined sigma
    t = 0.5
    vals = []
    errs = []
    for spacing in (0.02, 0.01):
        cfg = FlowConfig(half_width=5.0, spacing=spacing, dt=5e-4, t=t,
                         n_runs=400, seed=15, eval_margin=3.0)
        ens = simulate_flow(Zero(), cfg)
        _, ests = empirical_density(ens, (-2.0, 2.0), 1)
        vals.append(ests[0].value)
        errs.append(ests[0].stat_error)
    assert abs(vals[0] - vals[1]) <= 2 * math.hypot(*errs)


def test_halfwidth_doubling_converged():
    t = 0.5
    vals = []
    errs = []
    for U in (5.0, 10.0):
        cfg = FlowConfig(half_width=U, spacing=0.02, dt=5e-4, t=t,
                         n_runs=400, seed=16, eval_margin=U - 2.0)
        ens = simulate_flow(Zero(), cfg)
        _, ests = empirical_density(ens, (-2.0, 2.0), 1)
        vals.append(ests[0].value)
        errs.append(ests[0].stat_error)
    assert abs(vals[0] - vals[1]) <= 2 * math.hypot(*errs)


def test_export_csv(tmp_path):
    cfg = FlowConfig(half_width=1.0, spacing=0.05, dt=1e-3, t=1.0,
                     n_runs=3, seed=4)
    ens = simulate_flow(Zero(), cfg)
    path = tmp_path / "samples.csv"
    flow.export_samples_csv(ens, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "run_id,position,mass"
    assert len(lines) == 1 + sum(len(s.positions) for s in ens)
