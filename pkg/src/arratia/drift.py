"""Bounded drift functions: evaluation, negation, mollification, distances.

All drift values are immutable after construction; evaluation accepts scalars
or numpy arrays.  The linear family is the single unbounded member and is
only accepted by modules that explicitly tolerate it (flow, mc_exit, oracle).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import ConfigError, UnboundedDriftError

_CONV_NODES = 64          # Gauss-Legendre nodes for one mollified evaluation
_LATTICE_PER_WIDTH = 8    # lattice spacing is (support width)/8 = 1/(8n)
_UNBOUNDED_CACHE_HALF = 102.0


def _bump_unnormalized(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


@functools.lru_cache(maxsize=1)
def _bump_norm() -> float:
    mass, _ = quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                   epsabs=1e-14, limit=200)
    return 1.0 / mass


def mollifier_kernel(n: int, y) -> np.ndarray:
    """The scaled unit-mass bump used for mollification at index ``n``.

    Support is [-1/(2n), 1/(2n)]; total mass 1.
    """
    scale = 2.0 * n
    return scale * _bump_norm() * _bump_unnormalized(scale * np.asarray(y, dtype=float))


def mollifier_radius(n: int) -> float:
    return 0.5 / n


class DriftSpec:
    """Base class for drift families.  Subclasses are frozen dataclasses."""

    smooth: bool = True

    def evaluate(self, x):
        raise NotImplementedError

    @property
    def sup_norm(self) -> float:
        raise NotImplementedError

    @property
    def l1_norm(self) -> float | None:
        """Certified upper bound on the L1 norm, or None when not integrable."""
        return None

    def support(self) -> tuple[float, float] | None:
        """Interval outside of which the drift vanishes, or None."""
        return None

    def negate(self) -> "DriftSpec":
        raise NotImplementedError

    def scale(self, factor: float) -> "DriftSpec":
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sup_norm)

    def __call__(self, x):
        return self.evaluate(x)


@dataclass(frozen=True)
class Zero(DriftSpec):
    def evaluate(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def sup_norm(self):
        return 0.0

    @property
    def l1_norm(self):
        return 0.0

    def support(self):
        return (0.0, 0.0)

    def negate(self):
        return self

    def scale(self, factor):
        return self


@dataclass(frozen=True)
class Linear(DriftSpec):
    c: float

    def evaluate(self, x):
        return self.c * np.asarray(x, dtype=float)

    @property
    def sup_norm(self):
        return math.inf if self.c != 0.0 else 0.0

    def negate(self):
        return Linear(-self.c)

    def scale(self, factor):
        return Linear(self.c * factor)


@dataclass(frozen=True)
class Constant(DriftSpec):
    k: float

    def evaluate(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.k)

    @property
    def sup_norm(self):
        return abs(self.k)

    @property
    def l1_norm(self):
        return 0.0 if self.k == 0.0 else None

    def negate(self):
        return Constant(-self.k)

    def scale(self, factor):
        return Constant(self.k * factor)


@dataclass(frozen=True)
class Tanh(DriftSpec):
    k: float
    lam: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("tanh drift needs a positive scale")

    def evaluate(self, x):
        return self.k * np.tanh(np.asarray(x, dtype=float) / self.lam)

    @property
    def sup_norm(self):
        return abs(self.k)

    def negate(self):
        return Tanh(-self.k, self.lam)

    def scale(self, factor):
        return Tanh(self.k * factor, self.lam)


@dataclass(frozen=True)
class Step(DriftSpec):
    h: float
    lo: float
    hi: float
    smooth = False

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigError("step drift needs lo <= hi")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return self.h * ((x >= self.lo) & (x <= self.hi)).astype(float)

    @property
    def sup_norm(self):
        return abs(self.h)

    @property
    def l1_norm(self):
        return abs(self.h) * (self.hi - self.lo)

    def support(self):
        return (self.lo, self.hi)

    def negate(self):
        return Step(-self.h, self.lo, self.hi)

    def scale(self, factor):
        return Step(self.h * factor, self.lo, self.hi)


@dataclass(frozen=True)
class Tabulated(DriftSpec):
    """Piecewise-linear interpolation between sorted knots, constant beyond.

    Constant extrapolation keeps the sup-norm certificate: the function never
    exceeds the tabulated values.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]
    source: str | None = None
    smooth = False

    def __post_init__(self):
        if len(self.knots) != len(self.values) or len(self.knots) < 2:
            raise ConfigError("tabulated drift needs >= 2 matching knots/values")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ConfigError("tabulated knots must be strictly increasing")

    def evaluate(self, x):
        return np.interp(np.asarray(x, dtype=float),
                         np.asarray(self.knots), np.asarray(self.values))

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def l1_norm(self):
        if self.values[0] == 0.0 and self.values[-1] == 0.0:
            return float(np.trapz(np.abs(self.values), self.knots))
        return None

    def support(self):
        if self.values[0] == 0.0 and self.values[-1] == 0.0:
            return (self.knots[0], self.knots[-1])
        return None

    def negate(self):
        return Tabulated(self.knots, tuple(-v for v in self.values), self.source)

    def scale(self, factor):
        return Tabulated(self.knots, tuple(v * factor for v in self.values),
                         self.source)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[1] != 2:
            raise ConfigError(f"{path}: expected two columns (knot,value)")
        order = np.argsort(data[:, 0])
        return cls(tuple(float(v) for v in data[order, 0]),
                   tuple(float(v) for v in data[order, 1]), source=str(path))


@dataclass(frozen=True)
class Mollified(DriftSpec):
    """Convolution of a base drift with the scaled smooth bump.

    Evaluation integrates the convolution with a 64-node Gauss-Legendre rule
    over the mollifier support; values are precomputed on a lattice of
    spacing 1/(8n) and linearly interpolated, since the convolved function
    varies on scale 1/n.  Quadrature roundoff is clipped at the certified
    sup-norm.
    """

    base: DriftSpec
    n: int
    _lattice: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _values: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("mollification index must be a positive integer")
        if not self.base.bounded:
            raise UnboundedDriftError("cannot mollify an unbounded drift")
        if isinstance(self.base, (Zero, Constant)):
            return  # convolution with a unit-mass kernel is exact on constants
        radius = mollifier_radius(self.n)
        nodes, weights = leggauss(_CONV_NODES)
        y = radius * nodes
        w = radius * weights * mollifier_kernel(self.n, y)
        w /= w.sum()  # discrete unit mass: exact on constants
        supp = self.base.support()
        spacing = 1.0 / (_LATTICE_PER_WIDTH * self.n)
        if supp is not None:
            lo = supp[0] - radius - 2 * spacing
            hi = supp[1] + radius + 2 * spacing
        else:
            lo, hi = -_UNBOUNDED_CACHE_HALF, _UNBOUNDED_CACHE_HALF
        count = int(math.ceil((hi - lo) / spacing)) + 1
        lattice = lo + spacing * np.arange(count)
        vals = np.zeros_like(lattice)
        for yi, wi in zip(y, w):
            vals += wi * self.base.evaluate(lattice - yi)
        s = self.base.sup_norm
        np.clip(vals, -s, s, out=vals)
        object.__setattr__(self, "_lattice", lattice)
        object.__setattr__(self, "_values", vals)

    def evaluate(self, x):
        if isinstance(self.base, (Zero, Constant)):
            return self.base.evaluate(x)
        # np.interp clamps outside the lattice: constant extrapolation, exact
        # (zero) for compactly supported bases
        return np.interp(np.asarray(x, dtype=float), self._lattice, self._values)

    @property
    def sup_norm(self):
        return self.base.sup_norm

    @property
    def l1_norm(self):
        return self.base.l1_norm  # Young: mollification does not increase L1

    @property
    def smooth(self):
        return True

    def support(self):
        supp = self.base.support()
        if supp is None:
            return None
        r = mollifier_radius(self.n)
        return (supp[0] - r, supp[1] + r)

    def negate(self):
        return Mollified(self.base.negate(), self.n)

    def scale(self, factor):
        return Mollified(self.base.scale(factor), self.n)


def evaluate(d: DriftSpec, x):
    """Evaluate the drift at ``x`` (scalar or array)."""
    out = d.evaluate(x)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def mollify(d: DriftSpec, n: int) -> Mollified:
    """Smooth approximation a * eta_n with eta_n the unit-mass bump of
    support [-1/(2n), 1/(2n)]."""
    return Mollified(d, n)


def negate(d: DriftSpec) -> DriftSpec:
    return d.negate()


def scale(d: DriftSpec, factor: float) -> DriftSpec:
    return d.scale(factor)


def l_inf_distance(d1: DriftSpec, d2: DriftSpec,
                   window: tuple[float, float], grid_points: int) -> float:
    """Max of |d1 - d2| over a uniform sample grid.

    This is a lower approximation of the sup-norm distance (the true sup may
    fall between grid points).
    """
    lo, hi = window
    if not lo < hi:
        raise ConfigError("empty window")
    if grid_points < 2:
        raise ConfigError("need at least two grid points")
    x = np.linspace(lo, hi, grid_points)
    return float(np.max(np.abs(d1.evaluate(x) - d2.evaluate(x))))


def _breakpoints(d: DriftSpec) -> list[float]:
    if isinstance(d, Step):
        return [d.lo, d.hi]
    if isinstance(d, Tabulated):
        return list(d.knots)
    if isinstance(d, Mollified):
        r = mollifier_radius(d.n)
        pts = _breakpoints(d.base)
        return sorted({p + s * r for p in pts for s in (-1.0, 0.0, 1.0)})
    return []


def l1_distance(d1: DriftSpec, d2: DriftSpec, window: tuple[float, float]) -> float:
    """Adaptive quadrature of the L1 distance over the window (abs tol 1e-8)."""
    lo, hi = window
    if not lo < hi:
        raise ConfigError("empty window")
    pts = sorted(p for p in set(_breakpoints(d1)) | set(_breakpoints(d2))
                 if lo < p < hi)
    f = lambda x: abs(float(d1.evaluate(x)) - float(d2.evaluate(x)))
    val, _ = quad(f, lo, hi, points=pts or None, epsabs=1e-8, limit=400)
    return val


# ---------------------------------------------------------------------------
# drift mini-language:  zero | linear:c= | const:k= | tanh:k=,lam= |
#                       step:h=,lo=,hi= | table:<path> | mollify(<spec>,n=)
# ---------------------------------------------------------------------------

def parse_drift(text: str) -> DriftSpec:
    s = text.strip()
    if s.startswith("mollify(") and s.endswith(")"):
        inner = s[len("mollify("):-1]
        base_txt, _, n_txt = inner.rpartition(",")
        n_txt = n_txt.strip()
        if not base_txt or not n_txt.startswith("n="):
            raise ConfigError(f"bad mollify spec: {text!r}")
        return mollify(parse_drift(base_txt), int(n_txt[2:]))
    head, _, rest = s.partition(":")
    head = head.strip().lower()
    if head == "zero":
        if rest:
            raise ConfigError("zero drift takes no parameters")
        return Zero()
    if head == "table":
        return Tabulated.from_csv(rest)
    try:
        params = {}
        if rest:
            for item in rest.split(","):
                k, _, v = item.partition("=")
                params[k.strip()] = float(v)
        if head == "linear":
            return Linear(params.pop("c"))
        if head == "const":
            return Constant(params.pop("k"))
        if head == "tanh":
            return Tanh(params.pop("k"), params.pop("lam", 1.0))
        if head == "step":
            return Step(params.pop("h"), params.pop("lo"), params.pop("hi"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad drift spec {text!r}: {exc}") from None
    raise ConfigError(
        f"unknown drift family {head!r}; expected zero, linear, const, tanh, "
        f"step, table or mollify(...)")


def drift_to_string(d: DriftSpec) -> str:
    if isinstance(d, Zero):
        return "zero"
    if isinstance(d, Linear):
        return f"linear:c={d.c!r}"
    if isinstance(d, Constant):
        return f"const:k={d.k!r}"
    if isinstance(d, Tanh):
        return f"tanh:k={d.k!r},lam={d.lam!r}"
    if isinstance(d, Step):
        return f"step:h={d.h!r},lo={d.lo!r},hi={d.hi!r}"
    if isinstance(d, Tabulated):
        if d.source is None:
            raise ConfigError("tabulated drift without a source path "
                              "cannot be serialized")
        return f"table:{d.source}"
    if isinstance(d, Mollified):
        return f"mollify({drift_to_string(d.base)},n={d.n})"
    raise ConfigError(f"unknown drift type {type(d).__name__}")


# ---------------------------------------------------------------------------
# numeric export for jitted engines: (code, params, xs, ys)
# ---------------------------------------------------------------------------

_EMPTY = np.empty(0)

CODE_ZERO, CODE_LINEAR, CODE_CONST, CODE_TANH, CODE_STEP, CODE_TABLE = range(6)


def as_engine_spec(d: DriftSpec):
    """Flatten a drift into plain numerics for numba kernels.

    Tables carry their own grids; everything else is exact.  Mollified drifts
    export their evaluation lattice, so engine values match ``evaluate``.
    """
    p = np.zeros(3)
    if isinstance(d, Zero):
        return CODE_ZERO, p, _EMPTY, _EMPTY
    if isinstance(d, Linear):
        p[0] = d.c
        return CODE_LINEAR, p, _EMPTY, _EMPTY
    if isinstance(d, Constant):
        p[0] = d.k
        return CODE_CONST, p, _EMPTY, _EMPTY
    if isinstance(d, Tanh):
        p[0], p[1] = d.k, d.lam
        return CODE_TANH, p, _EMPTY, _EMPTY
    if isinstance(d, Step):
        p[0], p[1], p[2] = d.h, d.lo, d.hi
        return CODE_STEP, p, _EMPTY, _EMPTY
    if isinstance(d, Tabulated):
        return CODE_TABLE, p, np.asarray(d.knots, float), np.asarray(d.values, float)
    if isinstance(d, Mollified):
        if isinstance(d.base, (Zero, Constant)):
            return as_engine_spec(d.base)
        return CODE_TABLE, p, d._lattice, d._values
    raise ConfigError(f"unknown drift type {type(d).__name__}")
