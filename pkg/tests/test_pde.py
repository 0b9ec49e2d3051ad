import math

import numpy as np
import pytest

from arratia import oracle, pde
from arratia.drift import Constant, Linear, Tanh, Zero
from arratia.errors import ConfigError, MarginError, UnboundedDriftError
from arratia.pde import RotatedGrid, density_from_field, grid_for, solve
from arratia.series import W0


def test_grid_validation():
    with pytest.raises(ConfigError):           # non-integer count
        RotatedGrid(1.003, -1.0, 1.0, 0.1, 0.1, 1e-4)
    with pytest.raises(ConfigError):           # too few points
        RotatedGrid(0.5, -0.2, 0.2, 0.1, 0.1, 1e-4)
    with pytest.raises(ConfigError):           # unstable step
        RotatedGrid(2.0, -2.0, 2.0, 0.1, 0.1, 0.01)
    g = RotatedGrid(2.0, -2.0, 2.0, 0.1, 0.1, 0.5 * 0.45 * 0.01)
    assert g.n_u == 20 and g.n_v == 40


def test_grid_for_margins():
    g = grid_for(Tanh(0.5, 1.0), 1.0, [0.0], h_u=0.05)
    need = 6.0 + 2 * 0.5
    assert g.u_max >= need - 1e-9
    assert g.v_max >= need - 1e-9 and g.v_min <= -need + 1e-9


def test_rejects_linear():
    with pytest.raises(UnboundedDriftError, match="unsupported by pde"):
        grid_for(Linear(1.0), 1.0, [0.0])
    g = grid_for(Zero(), 1.0, [0.0], h_u=0.05)
    with pytest.raises(UnboundedDriftError):
        solve(Linear(1.0), 1.0, g)


def test_margin_enforced():
    g = RotatedGrid(2.0, -2.0, 2.0, 0.1, 0.1, 0.45 * 0.01)
    with pytest.raises(MarginError):
        solve(Zero(), 1.0, g)   # u_max=2 < 6 sqrt(t)


@pytest.fixture(scope="module")
def zero_field():
    g = grid_for(Zero(), 1.0, [0.0], h_u=0.02, h_v=0.1)
    return solve(Zero(), 1.0, g)


def test_zero_drift_field_values(zero_field):
    f = zero_field
    # boundary row pinned at zero, everything inside [0, 1]
    assert np.all(f.values[0, :] == 0.0)
    assert f.min_seen >= -1e-12 and f.max_seen <= 1.0 + 1e-9
    # monotone in u for zero drift
    mid = f.values[:, f.values.shape[1] // 2]
    assert np.all(np.diff(mid) >= -1e-12)
    # spec point check: W at the rotated image of ((0,1), t=1)
    u_target = 1.0 / math.sqrt(2.0)
    v_target = 1.0 / math.sqrt(2.0)
    col = np.array([np.interp(v_target, f.grid.v_axis(), f.values[i, :])
                    for i in range(f.values.shape[0])])
    w = float(np.interp(u_target, f.grid.u_axis(), col))
    assert abs(w - W0((0.0, 1.0), 1.0)) / W0((0.0, 1.0), 1.0) <= 1e-2


def test_zero_drift_density(zero_field):
    est = density_from_field(zero_field, 0.0)
    exact = oracle.density_zero(1.0)
    assert abs(est.value - exact) / exact <= 0.01
    assert est.det_bound > 0.0
    assert est.method == "pde"


def test_density_outside_window_rejected(zero_field):
    with pytest.raises(MarginError):
        density_from_field(zero_field, 100.0)


def test_grid_convergence_zero_drift():
    t = 0.5
    exact = oracle.density_zero(t)
    errs = []
    for h in (0.08, 0.04):
        g = grid_for(Zero(), t, [0.0], h_u=h, h_v=0.2)
        est = density_from_field(solve(Zero(), t, g), 0.0)
        errs.append(abs(est.value - exact))
    assert errs[0] / errs[1] >= 2.5


def test_constant_drift_matches_zero_drift():
    t = 1.0
    exact = oracle.density_zero(t)
    for k in (1.0,):
        g = grid_for(Constant(k), t, [0.0], h_u=0.04, h_v=0.1)
        est = density_from_field(solve(Constant(k), t, g), 0.0)
        assert abs(est.value - exact) / exact <= 0.01


def test_constant_drift_density_v_independent():
    k = 1.0
    t = 0.5
    g = grid_for(Constant(k), t, [-1.0, 1.0], h_u=0.04, h_v=0.1)
    f = solve(Constant(k), t, g)
    vals = [density_from_field(f, x).value for x in (-1.0, 0.0, 1.0)]
    ref = oracle.density_zero(t)
    for v in vals:
        assert abs(v - ref) / ref <= 0.01


def test_tanh_density_even_and_in_range():
    t = 1.0
    d = Tanh(0.5, 1.0)
    g = grid_for(d, t, [-1.0, 1.0], h_u=0.04, h_v=0.1)
    f = solve(d, t, g)
    p0 = density_from_field(f, 0.0).value
    p_plus = density_from_field(f, 1.0).value
    p_minus = density_from_field(f, -1.0).value
    assert p_plus == pytest.approx(p_minus, rel=5e-3)
    assert 0.2 < p0 < 0.6


def test_ramp_schedule():
    sizes = pde._step_sizes(1.0, 0.01, 1.5)
    assert sizes.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.diff(sizes) >= -1e-15)
    assert sizes[0] < sizes[-1]
    flat = pde._step_sizes(1.0, 0.01, 1.0)
    assert np.allclose(flat, flat[0])


def test_dump_field(zero_field, tmp_path):
    path = tmp_path / "field.csv"
    pde.dump_field(zero_field, str(path))
    head = path.read_text().splitlines()
    assert head[0] == "u,v,W"
    assert len(head) > 100
