"""Exit-time Monte Carlo for the two-particle diffusion.

The pair follows dxi_k = -a(xi_k) dt + dw_k with independent drivers; the
survival probability of the wedge up to time t equals the presence
probability of the flow, and the density is its delta-quotient.

Discretization is Euler-Maruyama.  A path dies when the gap goes nonpositive
at a step endpoint; between endpoints, the crossing probability of the
Brownian bridge of the gap process (diffusion coefficient 2, drift frozen
within the step) multiplies the survival weight:

    P(cross | z_k, z_{k+1}) = exp(-2 z_k z_{k+1} / (2 dt)) = exp(-z_k z_{k+1} / dt).

Randomness is counter-based per (path, step), so results are identical for
any chunking of the path range across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .drift import DriftSpec, drift_to_string
from .errors import ConfigError
from .kernel import WedgePoint
from .results import DensityEstimate, stable_digest

_MC_TAG = 0x4d43
_CHUNK = 1 << 15


@dataclass(frozen=True)
class PathConfig:
    """Path count, step size and bridge toggle for exit-time runs."""

    n_paths: int = 100_000
    dt: float = 1e-3
    bridge_correction: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1_000:
            raise ConfigError("need at least 1000 paths")
        if self.dt <= 0:
            raise ConfigError("need dt > 0")

    def validate_horizon(self, t: float) -> None:
        if self.dt > t / 20.0 * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} too coarse for horizon t={t}; "
                              f"need dt <= t/20")

    def digest_payload(self) -> dict:
        return {"n_paths": self.n_paths, "dt": self.dt,
                "bridge": self.bridge_correction, "seed": self.seed}


@dataclass(frozen=True)
class SurvivalEstimate:
    """Monte Carlo estimate of the wedge survival probability."""

    p_hat: float
    stderr: float
    n_paths: int
    config_digest: str


def _survival_chunk(x1: float, x2: float, n_steps: int, dt: float,
                    bridge: bool, d: DriftSpec, key: int,
                    lo: int, hi: int) -> tuple[float, float]:
    m = hi - lo
    paths = np.arange(lo, hi, dtype=np.uint64)
    p1 = np.full(m, x1)
    p2 = np.full(m, x2)
    w = np.ones(m)
    sq = math.sqrt(dt)
    for s in range(n_steps):
        # one Box-Muller pair per (path, step) feeds both drivers
        base = np.uint64(2 * s)
        ua = rng.uniforms(key, paths, base)
        ub = rng.uniforms(key, paths, base + np.uint64(1))
        radius = np.sqrt(-2.0 * np.log(ua))
        angle = 2.0 * np.pi * ub
        z1 = radius * np.cos(angle)
        z2 = radius * np.sin(angle)
        n1 = p1 - d.evaluate(p1) * dt + sq * z1
        n2 = p2 - d.evaluate(p2) * dt + sq * z2
        gap_old = p2 - p1
        gap_new = n2 - n1
        alive = gap_new > 0.0
        if bridge:
            cross = np.exp(-np.maximum(gap_old * gap_new, 0.0) / dt)
            w = np.where(alive, w * (1.0 - cross), 0.0)
        else:
            w = np.where(alive, w, 0.0)
        p1, p2 = n1, n2
    return float(np.sum(w)), float(np.sum(w * w))


def survival(x, t: float, d: DriftSpec, cfg: PathConfig,
             workers: int = 1) -> SurvivalEstimate:
    """Estimate P(exit time > t) for the pair started at the wedge point x."""
    x = x if isinstance(x, WedgePoint) else WedgePoint(*x)
    if t <= 0:
        raise ConfigError("need t > 0")
    digest = stable_digest({"op": "survival", "x": [x.x1, x.x2], "t": t,
                            "drift": drift_to_string(d),
                            **cfg.digest_payload()})
    if not x.interior:
        return SurvivalEstimate(p_hat=0.0, stderr=0.0, n_paths=cfg.n_paths,
                                config_digest=digest)
    cfg.validate_horizon(t)
    n_steps = int(round(t / cfg.dt))
    key = rng.derive_key(cfg.seed, _MC_TAG)
    edges = list(range(0, cfg.n_paths, _CHUNK)) + [cfg.n_paths]
    spans = list(zip(edges[:-1], edges[1:]))
    args = (x.x1, x.x2, n_steps, cfg.dt, cfg.bridge_correction, d, key)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda sp: _survival_chunk(*args, *sp), spans))
    else:
        parts = [_survival_chunk(*args, lo, hi) for lo, hi in spans]
    sw = sum(p[0] for p in parts)
    sw2 = sum(p[1] for p in parts)
    n = cfg.n_paths
    p_hat = sw / n
    var = max(sw2 / n - p_hat * p_hat, 0.0)
    return SurvivalEstimate(p_hat=p_hat, stderr=math.sqrt(var / n),
                            n_paths=n, config_digest=digest)


def density_mc(u: float, t: float, delta: float, d: DriftSpec,
               cfg: PathConfig, richardson: bool = False,
               workers: int = 1) -> DensityEstimate:
    """Density via the delta-quotient survival((u, u+delta), t) / delta.

    With ``richardson`` the O(delta) bias is extrapolated from the pair
    (delta, delta/2) and the observed difference is reported as the
    deterministic allowance; without it the bias is left to the caller's
    tolerance budget.
    """
    if t <= 0:
        raise ConfigError("need t > 0")
    if delta <= 0:
        raise ConfigError("need delta > 0")
    if delta > 0.1 * math.sqrt(t):
        raise ConfigError(f"delta={delta} too large for the bias model; "
                          f"need delta <= 0.1 sqrt(t)")
    flag = "delta_large" if delta > 0.05 * math.sqrt(t) else ""
    digest = stable_digest({"op": "density_mc", "u": u, "t": t,
                            "delta": delta, "richardson": richardson,
                            "drift": drift_to_string(d),
                            **cfg.digest_payload()})
    est = survival((u, u + delta), t, d, cfg, workers)
    d1 = est.p_hat / delta
    se1 = est.stderr / delta
    if not richardson:
        return DensityEstimate(value=d1, stat_error=se1, det_bound=0.0,
                               method="mc", config_digest=digest,
                               seed=cfg.seed, flag=flag)
    est2 = survival((u, u + 0.5 * delta), t, d, cfg, workers)
    d2 = est2.p_hat / (0.5 * delta)
    se2 = est2.stderr / (0.5 * delta)
    value = 2.0 * d2 - d1
    se = math.sqrt(4.0 * se2 ** 2 + se1 ** 2)
    return DensityEstimate(value=value, stat_error=se,
                           det_bound=abs(d1 - d2), method="mc",
                           config_digest=digest, seed=cfg.seed, flag=flag)
