"""Run configuration, method dispatch, experiments and CSV emission.

The CSV schema is fixed:

    method,drift,t,x,estimate,stat_error,det_bound,flag,seed,config_digest,runtime_ms

(config digest, seed) determines every output byte.  Wall-clock timing would
break that, so runtime_ms is 0 unless the ARRATIA_TIMING environment
variable is set to 1.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import flow as flow_mod
from . import mc_exit, oracle, pde, series
from .drift import (DriftSpec, Linear, Zero, drift_to_string, l1_distance,
                    l_inf_distance, mollify, parse_drift, scale)
from .errors import ArratiaError, ConfigError
from .kernel import (calibrate_bound_constants, chapman_kolmogorov_error,
                     grad_a_green, grad_bound, grad_green, green_killed,
                     simplex_gamma_integral, simplex_gamma_quadrature)
from .results import DensityEstimate, stable_digest

CSV_HEADER = ("method,drift,t,x,estimate,stat_error,det_bound,flag,"
              "seed,config_digest,runtime_ms")

METHODS = ("oracle", "series", "pde", "mc", "flow")

DEFAULT_SEED = 12345

#: per-method relative tolerance allowance used in cross-method budgets
METHOD_REL_ALLOWANCE = {"oracle": 0.0, "series": 0.0, "pde": 0.01,
                        "mc": 0.02, "flow": 0.05}

_BOOL_KEYS = {"richardson", "bridge"}
_INT_KEYS = {"seed", "nmax", "samples", "paths", "runs", "bins", "workers",
             "n_pass", "grid_points"}
_STR_KEYS = {"method", "drift", "out", "dump_field", "mode", "n_list",
             "methods", "window"}


@dataclass(frozen=True)
class RunConfig:
    """One density run: method, drift, horizon, target, method parameters."""

    method: str
    drift: str
    t: float
    x: float = 0.0
    window: tuple[float, float] | None = None
    seed: int = DEFAULT_SEED
    workers: int = 1
    out: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"expected one of {', '.join(METHODS)}")
        parse_drift(self.drift)  # fail fast on bad drift strings
        if self.t <= 0:
            raise ConfigError("need t > 0")

    def to_kv(self) -> dict:
        kv = {"method": self.method, "drift": self.drift,
              "t": repr(self.t), "x": repr(self.x),
              "seed": str(self.seed), "workers": str(self.workers)}
        if self.window is not None:
            kv["window"] = f"{self.window[0]!r}:{self.window[1]!r}"
        if self.out:
            kv["out"] = self.out
        for k in sorted(self.params):
            v = self.params[k]
            kv[k] = repr(v) if isinstance(v, float) else str(v)
        return kv

    def to_config_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_kv().items())

    def digest(self) -> str:
        # worker count and output path are execution details: they must not
        # influence a single output byte
        kv = {k: v for k, v in self.to_kv().items()
              if k not in ("workers", "out")}
        return stable_digest(kv)

    @classmethod
    def from_kv(cls, kv: dict) -> "RunConfig":
        kv = dict(kv)
        method = kv.pop("method")
        drift = kv.pop("drift")
        t = float(kv.pop("t"))
        x = float(kv.pop("x", 0.0))
        seed = int(kv.pop("seed", _env_seed()))
        workers = int(kv.pop("workers", 1))
        out = kv.pop("out", None)
        window = None
        if "window" in kv:
            lo, _, hi = kv.pop("window").partition(":")
            window = (float(lo), float(hi))
        params = {}
        for k, v in kv.items():
            if k in _BOOL_KEYS:
                params[k] = v.strip().lower() in ("1", "true", "yes", "on")
            elif k in _INT_KEYS:
                params[k] = int(v)
            elif k in _STR_KEYS:
                params[k] = v
            else:
                params[k] = float(v)
        return cls(method=method, drift=drift, t=t, x=x, window=window,
                   seed=seed, workers=workers, out=out, params=params)


def _env_seed() -> int:
    return int(os.environ.get("ARRATIA_SEED", DEFAULT_SEED))


def parse_config_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment; later keys win."""
    kv = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln}: expected key=value, "
                              f"got {raw!r}")
        k, _, v = line.partition("=")
        kv[k.strip()] = v.strip()
    return kv


def load_config_file(path: str) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _runtime_ms(elapsed: float) -> int:
    if os.environ.get("ARRATIA_TIMING", "0") == "1":
        return int(elapsed * 1000)
    return 0


def format_row(method: str, drift: str, t: float, x: float,
               est: DensityEstimate, seed, digest: str, runtime_ms: int) -> str:
    seed_txt = "" if seed is None else str(seed)
    return (f"{method},{drift},{t!r},{x!r},{est.value!r},{est.stat_error!r},"
            f"{est.det_bound!r},{est.flag},{seed_txt},{digest},{runtime_ms}")


@dataclass(frozen=True)
class RunResult:
    rows: list            # (x, DensityEstimate)
    csv_lines: list
    flagged: bool


def run_density(cfg: RunConfig) -> RunResult:
    """Dispatch one density run and format its CSV rows.

    Flow runs emit one row per histogram bin; every other method emits a
    single row at the requested x.
    """
    d = parse_drift(cfg.drift)
    p = cfg.params
    digest = cfg.digest()
    started = time.perf_counter()
    rows: list[tuple[float, DensityEstimate]] = []
    if cfg.method == "oracle":
        if isinstance(d, Zero):
            value = oracle.density_zero(cfg.t)
        elif isinstance(d, Linear):
            value = oracle.density_linear(d.c, cfg.t)
        else:
            raise ConfigError("oracle supports zero and linear drifts only")
        rows.append((cfg.x, DensityEstimate(
            value=value, stat_error=0.0, det_bound=0.0, method="oracle",
            config_digest=digest, seed=None)))
    elif cfg.method == "series":
        scfg = series.SeriesConfig(
            n_max=p.get("nmax", 4), mc_samples=p.get("samples", 1_000_000),
            seed=cfg.seed, workers=cfg.workers)
        rows.append((cfg.x, series.density_series(
            cfg.x, cfg.t, d, tol=p.get("tol", 1e-3), cfg=scfg)))
    elif cfg.method == "pde":
        grid = pde.grid_for(d, cfg.t, [cfg.x], h_u=p.get("h", 0.02),
                            h_v=p.get("hv"), u_max=p.get("umax"),
                            v_pad=p.get("vpad", 0.0))
        fld = pde.solve(d, cfg.t, grid)
        if p.get("dump_field"):
            pde.dump_field(fld, p["dump_field"])
        rows.append((cfg.x, pde.density_from_field(fld, cfg.x)))
    elif cfg.method == "mc":
        pcfg = mc_exit.PathConfig(
            n_paths=p.get("paths", 100_000),
            dt=p.get("dt", cfg.t / 1000.0),
            bridge_correction=p.get("bridge", True), seed=cfg.seed)
        delta = p.get("delta", 0.02 * math.sqrt(cfg.t))
        rows.append((cfg.x, mc_exit.density_mc(
            cfg.x, cfg.t, delta, d, pcfg,
            richardson=p.get("richardson", False), workers=cfg.workers)))
    elif cfg.method == "flow":
        window = cfg.window or (cfg.x - 0.5, cfg.x + 0.5)
        bins = p.get("bins", 1)
        spacing = p.get("spacing", 0.01)
        dt = p.get("dt", 2e-4)
        runs = p.get("runs", 200)
        half = max(abs(window[0]), abs(window[1]))
        if "U" in p:
            fcfg = flow_mod.FlowConfig(
                half_width=p["U"], spacing=spacing, dt=dt, t=cfg.t,
                n_runs=runs, seed=cfg.seed, eval_margin=p["U"] - half)
        else:
            fcfg = flow_mod.flow_config_for(d, cfg.t, half, spacing, dt,
                                            runs, cfg.seed)
        ens = flow_mod.simulate_flow(d, fcfg)
        edges, ests = flow_mod.empirical_density(ens, window, bins)
        centers = 0.5 * (edges[:-1] + edges[1:])
        rows.extend((float(c), e) for c, e in zip(centers, ests))
    elapsed = time.perf_counter() - started
    ms = _runtime_ms(elapsed)
    lines = [format_row(cfg.method, cfg.drift, cfg.t, x, est,
                        est.seed, digest, ms) for x, est in rows]
    flagged = any(est.flag for _, est in rows)
    return RunResult(rows=rows, csv_lines=lines, flagged=flagged)


def method_budget(est: DensityEstimate, scale_value: float) -> float:
    """Error budget of one estimate in a cross-method comparison:
    3 sigma + deterministic bound + the method's relative allowance."""
    rel = METHOD_REL_ALLOWANCE[est.method]
    return 3.0 * est.stat_error + est.det_bound + rel * abs(scale_value)


@dataclass(frozen=True)
class MethodComparison:
    estimates: dict
    pairs: list               # (a, b, diff, budget, ok)
    csv_lines: list
    pair_lines: list
    flagged: bool


def compare_methods(drift_text: str, t: float, x: float,
                    methods: list[str], seed: int = DEFAULT_SEED,
                    workers: int = 1, params: dict | None = None) -> MethodComparison:
    """Run several methods at one point and cross-check all pairs against
    their combined budgets."""
    params = params or {}
    ests = {}
    csv_lines = []
    for m in methods:
        cfg = RunConfig(method=m, drift=drift_text, t=t, x=x, seed=seed,
                        workers=workers, params=dict(params.get(m, {})))
        res = run_density(cfg)
        ests[m] = res.rows[0][1]
        csv_lines.extend(res.csv_lines)
    pairs = []
    pair_lines = ["method_a,method_b,diff,budget,ok"]
    names = list(ests)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ea, eb = ests[a], ests[b]
            scale_v = max(abs(ea.value), abs(eb.value))
            diff = abs(ea.value - eb.value)
            budget = method_budget(ea, scale_v) + method_budget(eb, scale_v)
            ok = diff <= budget
            pairs.append((a, b, diff, budget, ok))
            pair_lines.append(f"{a},{b},{diff!r},{budget!r},{int(ok)}")
    flagged = any(not ok for *_, ok in pairs) or \
        any(e.flag for e in ests.values())
    return MethodComparison(estimates=ests, pairs=pairs, csv_lines=csv_lines,
                            pair_lines=pair_lines, flagged=flagged)


# ---------------------------------------------------------------------------
# drift-convergence experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    distance: float
    estimate: DensityEstimate
    error: float              # |p(a_n) - p(a_0)|
    tolerance: float          # 2x combined method budget
    ok: bool


@dataclass(frozen=True)
class ConvergenceReport:
    mode: str
    method: str
    t: float
    x: float
    drift: str
    reference: DensityEstimate
    rows: list
    n_pass: int

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows if r.n >= self.n_pass)

    @property
    def monotone_endpoints(self) -> bool:
        first, last = self.rows[0], self.rows[-1]
        return last.error <= first.error + 1e-30

    def csv_lines(self) -> list[str]:
        out = ["mode,method,n,distance,estimate,stat_error,det_bound,"
               "ref,error,tolerance,ok"]
        for r in self.rows:
            e = r.estimate
            out.append(f"{self.mode},{self.method},{r.n},{r.distance!r},"
                       f"{e.value!r},{e.stat_error!r},{e.det_bound!r},"
                       f"{self.reference.value!r},{r.error!r},"
                       f"{r.tolerance!r},{int(r.ok)}")
        return out


def _sequence_drift(mode: str, base: DriftSpec, n: int) -> DriftSpec:
    if mode == "linf":
        return scale(base, 1.0 + 1.0 / n)
    if mode == "l1":
        return mollify(base, n)
    raise ConfigError(f"unknown convergence mode {mode!r}; use linf or l1")


def _sequence_distance(mode: str, base: DriftSpec, d_n: DriftSpec) -> float:
    if mode == "linf":
        return l_inf_distance(d_n, base, (-20.0, 20.0), 4001)
    supp = base.support()
    if supp is None:
        raise ConfigError("l1 mode needs a compactly supported base drift")
    window = (supp[0] - 1.0, supp[1] + 1.0)
    return l1_distance(d_n, base, window)


def experiment_converge(base_text: str, mode: str, n_list: list[int],
                        method: str, t: float, x: float,
                        seed: int = DEFAULT_SEED, workers: int = 1,
                        n_pass: int = 8,
                        params: dict | None = None) -> ConvergenceReport:
    """Density for the drift sequence a_n against the base drift a_0.

    The l-infinity sequence scales the base by (1 + 1/n); the l1 sequence
    mollifies a compactly supported base.  All runs share one seed, so
    statistical noise largely cancels in the reported errors.  No rate is
    asserted: each row carries twice the combined method budget as its
    tolerance.
    """
    mode = mode.lower()
    base = parse_drift(base_text)
    params = params or {}

    def run_one(d: DriftSpec) -> DensityEstimate:
        cfg = RunConfig(method=method, drift=drift_to_string(d), t=t, x=x,
                        seed=seed, workers=workers, params=dict(params))
        return run_density(cfg).rows[0][1]

    ref = run_one(base)
    rows = []
    for n in n_list:
        d_n = _sequence_drift(mode, base, n)
        est = run_one(d_n)
        err = abs(est.value - ref.value)
        scale_v = max(abs(est.value), abs(ref.value))
        tol = 2.0 * (method_budget(est, scale_v) + method_budget(ref, scale_v))
        rows.append(ConvergenceRow(n=n, distance=_sequence_distance(mode, base, d_n),
                                   estimate=est, error=err, tolerance=tol,
                                   ok=err <= tol))
    return ConvergenceReport(mode=mode, method=method, t=t, x=x,
                             drift=base_text, reference=ref, rows=rows,
                             n_pass=n_pass)


# ---------------------------------------------------------------------------
# duality and coalescence experiments
# ---------------------------------------------------------------------------

def experiment_duality(drift_text: str, t: float, u: float, v: float,
                       runs: int = 20_000, spacing: float = 0.02,
                       dt: float = 1e-4, seed: int = DEFAULT_SEED):
    d = parse_drift(drift_text)
    half = max(abs(u), abs(v))
    fcfg = flow_mod.flow_config_for(d, t, half + 0.5, spacing, dt, runs, seed)
    return flow_mod.duality_check(u, v, t, d, fcfg)


@dataclass(frozen=True)
class CoalescenceFit:
    gaps: list
    probs: list
    stderrs: list
    slope: float
    intercept: float
    residual: float           # rms residual relative to the mean probability


def experiment_coalescence(drift_text: str, t: float, gaps: list[float],
                           runs: int = 50_000, dt: float = 1e-4,
                           seed: int = DEFAULT_SEED) -> CoalescenceFit:
    """Non-meeting probability versus starter gap, with a linear fit.

    Validates the linear small-gap law: the fit must be tight (small
    relative residual) with a positive finite slope.
    """
    d = parse_drift(drift_text)
    fcfg = flow_mod.FlowConfig(half_width=1.0, spacing=0.04 * math.sqrt(t),
                               dt=dt, t=t, n_runs=runs, seed=seed)
    probs, errs = [], []
    for g in gaps:
        est = flow_mod.meeting_probability(0.0, g, t, d, fcfg)
        probs.append(est.p_hat)
        errs.append(est.stderr)
    slope, intercept = np.polyfit(gaps, probs, 1)
    fit = np.polyval([slope, intercept], gaps)
    rms = math.sqrt(float(np.mean((fit - np.asarray(probs)) ** 2)))
    residual = rms / float(np.mean(probs))
    return CoalescenceFit(gaps=list(gaps), probs=probs, stderrs=errs,
                          slope=float(slope), intercept=float(intercept),
                          residual=residual)


# ---------------------------------------------------------------------------
# kernel validation suite
# ---------------------------------------------------------------------------

def kernel_validation_rows(seed: int = DEFAULT_SEED) -> list[tuple]:
    """Run the kernel invariant suite; rows are
    (check_name, value, target, tolerance, pass)."""
    from .drift import Constant, Tanh
    rng_ = np.random.default_rng(seed)
    consts = calibrate_bound_constants()
    rows = []

    r = rng_.uniform(0.2, 3.0, 200)
    u = rng_.uniform(-3, 3, 200)
    y = np.sort(rng_.uniform(-3, 3, (200, 2)), axis=1)
    diag = max(abs(green_killed(ri, (ui, ui), yi))
               for ri, ui, yi in zip(r, u, y))
    rows.append(("diagonal_vanishing", diag, 0.0, 0.0, diag == 0.0))

    pts_x = np.sort(rng_.uniform(-4, 4, (10_000, 2)), axis=1)
    pts_y = np.sort(rng_.uniform(-4, 4, (10_000, 2)), axis=1)
    rr = rng_.uniform(0.1, 4.0, 10_000)
    gmin = min(green_killed(ri, xi, yi)
               for ri, xi, yi in zip(rr[:2000], pts_x[:2000], pts_y[:2000]))
    rows.append(("nonnegativity", gmin, 0.0, 0.0, gmin >= 0.0))

    ck_sets = [(0.5, 0.5, (0.0, 1.0), (0.2, 0.8)),
               (0.3, 1.0, (-1.0, 0.5), (0.0, 0.4)),
               (1.0, 1.0, (0.0, 0.3), (-0.5, 1.5)),
               (0.7, 0.4, (-0.2, 2.0), (0.5, 0.9)),
               (2.0, 0.5, (0.0, 0.05), (0.0, 1.0))]
    ck = max(chapman_kolmogorov_error(r_, s_, x_, y_)
             for r_, s_, x_, y_ in ck_sets)
    rows.append(("chapman_kolmogorov", ck, 0.0, 1e-3, ck < 1e-3))

    h = 1e-5
    worst = 0.0
    for i in range(100):
        ri = float(rng_.uniform(0.3, 3.0))
        xi = np.sort(rng_.uniform(-2, 2, 2))
        yi = np.sort(rng_.uniform(-2, 2, 2))
        g1, g2 = grad_green(ri, xi, yi)
        fd1 = (green_killed(ri, (xi[0] + h, xi[1]), yi)
               - green_killed(ri, (xi[0] - h, xi[1]), yi)) / (2 * h)
        fd2 = (green_killed(ri, (xi[0], xi[1] + h), yi)
               - green_killed(ri, (xi[0], xi[1] - h), yi)) / (2 * h)
        worst = max(worst, abs(g1 - fd1), abs(g2 - fd2))
    rows.append(("grad_finite_difference", worst, 0.0, 1e-6, worst < 1e-6))

    drifts = [Constant(1.0), Tanh(0.5, 1.0), Tanh(2.0, 0.3), Constant(0.25)]
    worst_ratio = 0.0
    for i in range(10_000):
        d = drifts[i % len(drifts)]
        ri = float(rng_.uniform(0.05, 4.0))
        xi = np.sort(rng_.uniform(-3, 3, 2))
        yi = np.sort(rng_.uniform(-3, 3, 2))
        b = grad_bound(ri, xi, d, yi, consts)
        if b == 0.0:
            continue
        worst_ratio = max(worst_ratio, abs(grad_a_green(ri, xi, d, yi)) / b)
    rows.append(("grad_bound_dominance", worst_ratio, 1.0, 0.0,
                 worst_ratio <= 1.0))

    gerr = max(abs(simplex_gamma_quadrature(n, 1.0, wf)
                   - simplex_gamma_integral(n, 1.0, wf))
               / simplex_gamma_integral(n, 1.0, wf)
               for n in (1, 2, 3) for wf in (True, False))
    rows.append(("simplex_gamma", gerr, 0.0, 1e-6, gerr < 1e-6))
    return rows


def validation_csv(rows: list[tuple]) -> list[str]:
    out = ["check_name,value,target,tolerance,pass"]
    for name, value, target, tol, ok in rows:
        out.append(f"{name},{value!r},{target!r},{tol!r},{int(ok)}")
    return out
