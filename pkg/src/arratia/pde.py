"""Explicit finite-difference solver for the killed two-particle survival
function on the wedge, in rotated coordinates.

With u = (x2 - x1)/sqrt(2) (distance from the diagonal) and
v = (x1 + x2)/sqrt(2), the generator becomes

    dW/ds = (W_uu + W_vv)/2 - b_u W_u - b_v W_v,
    b_u = (a(x2) - a(x1))/sqrt(2),   b_v = (a(x1) + a(x2))/sqrt(2),

with Dirichlet W = 0 on the killing line u = 0.  The wedge is unbounded, so
the problem alone does not pin down a unique solution; the bounded
(probabilistic) one is selected by the far-field closure W = 1 at u = u_max
and zero-normal-derivative edges in v, with margins wide enough that the
closure cannot reach the evaluation window within the run time.

The discontinuous corner between the initial value 1 and the boundary value
0 is regularized by starting from the drift-free profile at a small positive
time; the scheme is first-order upwind in the advection terms and centered
in the diffusion, stepped explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import erf

from .drift import DriftSpec, drift_to_string
from .errors import ConfigError, MarginError, UnboundedDriftError
from .kernel import SQRT2
from .results import DensityEstimate, stable_digest

_STABILITY = 0.45  # tau <= _STABILITY * min(h_u, h_v)^2


def _check_count(length: float, h: float, name: str) -> int:
    n = length / h
    if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"{name} must be an integer multiple of the step")
    n = int(round(n))
    if n < 8:
        raise ConfigError(f"{name}/step must be at least 8, got {n}")
    return n


@dataclass(frozen=True)
class RotatedGrid:
    """Grid of the rotated wedge coordinates plus time step controls."""

    u_max: float
    v_min: float
    v_max: float
    h_u: float
    h_v: float
    tau: float
    ramp: float = 1.0

    def __post_init__(self):
        if min(self.u_max, self.h_u, self.h_v, self.tau) <= 0:
            raise ConfigError("grid lengths and steps must be positive")
        if self.v_min >= self.v_max:
            raise ConfigError("need v_min < v_max")
        if self.ramp < 1.0:
            raise ConfigError("ramp factor must be >= 1")
        _check_count(self.u_max, self.h_u, "u_max")
        _check_count(self.v_max - self.v_min, self.h_v, "v_max - v_min")
        if self.tau > _STABILITY * min(self.h_u, self.h_v) ** 2 * (1 + 1e-12):
            raise ConfigError(
                f"unstable time step: tau={self.tau} exceeds "
                f"{_STABILITY}*min(h)^2={_STABILITY * min(self.h_u, self.h_v) ** 2}")

    @property
    def n_u(self) -> int:
        return int(round(self.u_max / self.h_u))

    @property
    def n_v(self) -> int:
        return int(round((self.v_max - self.v_min) / self.h_v))

    def u_axis(self) -> np.ndarray:
        return self.h_u * np.arange(self.n_u + 1)

    def v_axis(self) -> np.ndarray:
        return self.v_min + self.h_v * np.arange(self.n_v + 1)


def grid_for(d: DriftSpec, t: float, x_eval, h_u: float = 0.02,
             h_v: float | None = None, u_max: float | None = None,
             v_pad: float = 0.0, ramp: float = 1.0) -> RotatedGrid:
    """Build a grid with the standard margins around the evaluation points.

    Margins are 6 sqrt(t) + 2 ||a|| t past the evaluation window in both the
    u and v directions; h_v defaults to min(0.1, 5 h_u), coarser than h_u
    because the density is extracted from the u-profile.
    """
    if not d.bounded:
        raise UnboundedDriftError("unbounded drift unsupported by pde")
    xs = np.atleast_1d(np.asarray(x_eval, dtype=float))
    margin = 6.0 * math.sqrt(t) + 2.0 * d.sup_norm * t
    h_v = h_v if h_v is not None else min(0.1, 5.0 * h_u)
    need_u = margin if u_max is None else u_max
    n_u = max(int(math.ceil(need_u / h_u)), 8)
    v_lo = SQRT2 * xs.min() - margin - v_pad
    v_hi = SQRT2 * xs.max() + margin + v_pad
    n_v = max(int(math.ceil((v_hi - v_lo) / h_v)), 8)
    tau = _STABILITY * min(h_u, h_v) ** 2
    return RotatedGrid(u_max=n_u * h_u, v_min=v_lo, v_max=v_lo + n_v * h_v,
                       h_u=h_u, h_v=h_v, tau=tau, ramp=ramp)


@dataclass(frozen=True)
class WField:
    """Survival function on the rotated grid at the target time."""

    values: np.ndarray
    grid: RotatedGrid
    t: float
    sup_norm: float
    s0: float
    tau_used: float
    drift_digest: str = ""
    min_seen: float = field(default=0.0)
    max_seen: float = field(default=1.0)


@numba.njit(cache=True, parallel=True)
def _step_kernel(W, Wn, bu, bv, h_u, h_v, tau):  # pragma: no cover - jitted
    n_u, n_v = W.shape
    lo = 2.0
    hi = -2.0
    for i in numba.prange(1, n_u - 1):
        for j in range(n_v):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < n_v - 1 else n_v - 2
            w = W[i, j]
            lap = 0.5 * ((W[i + 1, j] - 2.0 * w + W[i - 1, j]) / (h_u * h_u)
                         + (W[i, jp] - 2.0 * w + W[i, jm]) / (h_v * h_v))
            b = bu[i, j]
            if b > 0.0:
                du = (w - W[i - 1, j]) / h_u
            else:
                du = (W[i + 1, j] - w) / h_u
            c = bv[i, j]
            if c > 0.0:
                dv = (w - W[i, jm]) / h_v
            else:
                dv = (W[i, jp] - w) / h_v
            val = w + tau * (lap - b * du - c * dv)
            Wn[i, j] = val
            if val < lo:
                lo = val
            if val > hi:
                hi = val
    return lo, hi


def _step_sizes(total: float, tau: float, ramp: float) -> np.ndarray:
    """Geometric early-step ramp: sizes grow by ``ramp`` per step from a
    small start until they reach ``tau``, then stay uniform; the sequence is
    rescaled to land exactly on the target time."""
    if total <= 0:
        return np.empty(0)
    if ramp <= 1.0:
        n = max(int(math.ceil(total / tau)), 1)
        return np.full(n, total / n)
    sizes = []
    cur = tau / ramp ** 12
    acc = 0.0
    while acc < total:
        cur = min(cur * ramp, tau)
        sizes.append(cur)
        acc += cur
    out = np.array(sizes)
    return out * (total / out.sum())


def solve(d: DriftSpec, t: float, grid: RotatedGrid) -> WField:
    """March the survival function to time ``t`` on the given grid.

    Starts from the analytic drift-free profile at s0 = min(10 tau, 0.01 t),
    which regularizes the corner discontinuity at cost O(||a|| s0), then
    applies the full upwind operator.  The maximum principle is monitored on
    every step; a violation aborts with a stability error.
    """
    if not d.bounded:
        raise UnboundedDriftError("unbounded drift unsupported by pde")
    if t <= 0:
        raise ConfigError("need t > 0")
    margin = 6.0 * math.sqrt(t) + 2.0 * d.sup_norm * t
    if grid.u_max < margin - 1e-9:
        raise MarginError(f"u_max={grid.u_max} below required margin {margin}")
    # advection shrinks the stable step below the diffusive bound if needed
    bmax = SQRT2 * d.sup_norm
    diff = 1.0 / grid.h_u ** 2 + 1.0 / grid.h_v ** 2
    adv = bmax / grid.h_u + bmax / grid.h_v
    tau = min(grid.tau, 0.9 / (diff + adv))
    s0 = min(10.0 * tau, 0.01 * t)
    u = grid.u_axis()
    v = grid.v_axis()
    U, V = np.meshgrid(u, v, indexing="ij")
    X1 = (V - U) / SQRT2
    X2 = (V + U) / SQRT2
    bu = np.ascontiguousarray((d.evaluate(X2) - d.evaluate(X1)) / SQRT2)
    bv = np.ascontiguousarray((d.evaluate(X1) + d.evaluate(X2)) / SQRT2)
    W = erf(U / math.sqrt(2.0 * s0))
    W[0, :] = 0.0
    W[-1, :] = 1.0
    Wn = W.copy()
    lo_seen, hi_seen = 0.0, 1.0
    for tau_k in _step_sizes(t - s0, tau, grid.ramp):
        lo, hi = _step_kernel(W, Wn, bu, bv, grid.h_u, grid.h_v, tau_k)
        lo_seen = min(lo_seen, lo)
        hi_seen = max(hi_seen, hi)
        if lo < -1e-9 or hi > 1.0 + 1e-9:
            raise ConfigError(
                f"maximum principle violated (min={lo}, max={hi}); "
                f"the scheme is unstable on this grid")
        W, Wn = Wn, W
        W[0, :] = 0.0
        W[-1, :] = 1.0
    return WField(values=W, grid=grid, t=t, sup_norm=d.sup_norm, s0=s0,
                  tau_used=tau, drift_digest=stable_digest(
                      {"drift": drift_to_string(d)}),
                  min_seen=lo_seen, max_seen=hi_seen)


def density_from_field(f: WField, x: float) -> DensityEstimate:
    """Density at the diagonal point x: (1/sqrt(2)) du W at u = 0, v = x
    sqrt(2), one-sided second order.

    Along the diagonal W vanishes identically, so the v-derivative drops out
    of the chain rule.  The deterministic allowance is the first-order
    budget h_u^2/t + tau/t plus the initialization error ||a|| s0 / sqrt(t),
    each scaled by the value.
    """
    g = f.grid
    v_target = SQRT2 * x
    margin = 6.0 * math.sqrt(f.t) + 2.0 * f.sup_norm * f.t
    if not (g.v_min + margin - 1e-9 <= v_target <= g.v_max - margin + 1e-9):
        raise MarginError(
            f"x={x} outside the safe window of this field "
            f"(|v| margin {margin})")
    col = (4.0 * f.values[1, :] - f.values[2, :]) / (2.0 * g.h_u) / SQRT2
    value = float(np.interp(v_target, g.v_axis(), col))
    det = abs(value) * (g.h_u ** 2 / f.t + f.tau_used / f.t
                        + f.sup_norm * f.s0 / math.sqrt(f.t))
    digest = stable_digest({"op": "pde", "x": x, "t": f.t,
                            "drift": f.drift_digest, "h_u": g.h_u,
                            "h_v": g.h_v, "tau": f.tau_used})
    return DensityEstimate(value=value, stat_error=0.0, det_bound=det,
                           method="pde", config_digest=digest, seed=None)


def dump_field(f: WField, path: str) -> None:
    """Write the final field as CSV rows (u, v, W)."""
    u = f.grid.u_axis()
    v = f.grid.v_axis()
    with open(path, "w") as fh:
        fh.write("u,v,W\n")
        for i, ui in enumerate(u):
            for j, vj in enumerate(v):
                fh.write(f"{ui!r},{vj!r},{f.values[i, j]!r}\n")
