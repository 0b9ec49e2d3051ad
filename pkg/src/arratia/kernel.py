"""Heat kernel and the image-method Green function of the diagonal-killed
planar Brownian motion, with the analytic gradient bound and the simplex
integrals used to control series truncation.

Conventions: points live in the closed wedge {x1 <= x2}; the reflected point
of y = (y1, y2) is y* = (y2, y1).  All formulas are for diffusion with unit
coefficient per axis, i.e. Gaussian variance r per axis after time r.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from .drift import DriftSpec
from .errors import ConfigError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class WedgePoint:
    """A point of the closed wedge {x1 <= x2}."""

    x1: float
    x2: float

    def __post_init__(self):
        if not self.x1 <= self.x2:
            raise ConfigError(f"wedge point needs x1 <= x2, got {self.x1}, {self.x2}")

    @property
    def gap(self) -> float:
        return self.x2 - self.x1

    @property
    def interior(self) -> bool:
        return self.x1 < self.x2

    def __iter__(self):
        yield self.x1
        yield self.x2


def _pair(x) -> tuple:
    a, b = x
    return float(a), float(b)


def heat2d(r: float, x, y) -> float:
    """Free-space planar heat kernel (1/(2 pi r)) exp(-|x-y|^2 / (2r))."""
    if r <= 0:
        raise ConfigError("heat kernel needs r > 0")
    x1, x2 = _pair(x)
    y1, y2 = _pair(y)
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    return math.exp(-d2 / (2.0 * r)) / (2.0 * math.pi * r)


def green_killed(r: float, x, y) -> float:
    """Transition density of planar Brownian motion killed on the diagonal.

    Method of images: subtract the kernel of the reflected target.  Vanishes
    exactly when either argument sits on the diagonal and is nonnegative on
    the wedge.
    """
    if r <= 0:
        raise ConfigError("killed kernel needs r > 0")
    x1, x2 = _pair(x)
    y1, y2 = _pair(y)
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    ds2 = (x1 - y2) ** 2 + (x2 - y1) ** 2
    return (math.exp(-d2 / (2.0 * r)) - math.exp(-ds2 / (2.0 * r))) / (2.0 * math.pi * r)


def grad_green(r: float, x, y) -> tuple[float, float]:
    """Analytic gradient of ``green_killed`` in the first argument."""
    if r <= 0:
        raise ConfigError("killed kernel needs r > 0")
    x1, x2 = _pair(x)
    y1, y2 = _pair(y)
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    ds2 = (x1 - y2) ** 2 + (x2 - y1) ** 2
    e = math.exp(-d2 / (2.0 * r))
    es = math.exp(-ds2 / (2.0 * r))
    pref = 1.0 / (2.0 * math.pi * r * r)
    g1 = pref * (-(x1 - y1) * e + (x1 - y2) * es)
    g2 = pref * (-(x2 - y2) * e + (x2 - y1) * es)
    return g1, g2


def _grad_green_arrays(r, x1, x2, y1, y2):
    """Vectorized gradient, used by calibration and the series integrands."""
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    ds2 = (x1 - y2) ** 2 + (x2 - y1) ** 2
    e = np.exp(-d2 / (2.0 * r))
    es = np.exp(-ds2 / (2.0 * r))
    pref = 1.0 / (2.0 * np.pi * r * r)
    g1 = pref * (-(x1 - y1) * e + (x1 - y2) * es)
    g2 = pref * (-(x2 - y2) * e + (x2 - y1) * es)
    return g1, g2


@dataclass(frozen=True)
class KernelBoundConstants:
    """Constants (K, gamma) of the Gaussian envelope for the kernel gradient:

        |d/dx_k g_r(x, y)|  and  |grad^a g_r(x, y)| / G_a(x)
            <=  K r^(-3/2) exp(-gamma |x-y|^2 / r).
    """

    K: float
    gamma: float


@functools.lru_cache(maxsize=4)
def calibrate_bound_constants(gamma: float = 0.25,
                              safety: float = 1.05) -> KernelBoundConstants:
    """Compute a usable K for the gradient envelope at the given gamma.

    The envelope quantity r^{3/2} (|d1 g| + |d2 g|) e^{gamma |x-y|^2 / r} is
    invariant under (x, y, r) -> (sx, sy, s^2 r) and under translation along
    the diagonal, so the supremum is taken at r = 1 on a dense grid of
    relative geometries, then inflated by a safety factor.  Calibrating
    against the sum of both partials makes the bound valid for the drift
    gradient with G_a(x) = min(|a(x1)| + |a(x2)|, sup-norm) verbatim.
    """
    ux = np.linspace(0.0, 5.0, 201)
    uy = np.linspace(0.0, 5.0, 201)
    dv = np.linspace(-5.0, 5.0, 401)
    UY, DV = np.meshgrid(uy, dv, indexing="ij")
    y1 = (DV - UY) / SQRT2
    y2 = (DV + UY) / SQRT2
    best = 0.0
    for a in ux:
        x1 = -a / SQRT2
        x2 = a / SQRT2
        g1, g2 = _grad_green_arrays(1.0, x1, x2, y1, y2)
        d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
        q = (np.abs(g1) + np.abs(g2)) * np.exp(gamma * d2)
        best = max(best, float(q.max()))
    return KernelBoundConstants(K=safety * best, gamma=gamma)


def g_weight(d: DriftSpec, x) -> float:
    """G_a(x) = min(|a(x1)| + |a(x2)|, sup-norm), the drift weight of the
    gradient bound."""
    x1, x2 = _pair(x)
    s = abs(float(d.evaluate(x1))) + abs(float(d.evaluate(x2)))
    return min(s, d.sup_norm)


def grad_bound(r: float, x, d: DriftSpec, y,
               constants: KernelBoundConstants) -> float:
    """Envelope K G_a(x) r^(-3/2) exp(-gamma |x-y|^2 / r) dominating
    |grad^a_x g_r(x, y)|."""
    if r <= 0:
        raise ConfigError("bound needs r > 0")
    x1, x2 = _pair(x)
    y1, y2 = _pair(y)
    d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
    return (constants.K * g_weight(d, x) * r ** -1.5
            * math.exp(-constants.gamma * d2 / r))


def grad_a_green(r: float, x, d: DriftSpec, y) -> float:
    """The drift derivative grad^a_x g_r(x,y) = a(x1) d1 g + a(x2) d2 g."""
    g1, g2 = grad_green(r, x, y)
    x1, x2 = _pair(x)
    return float(d.evaluate(x1)) * g1 + float(d.evaluate(x2)) * g2


# ---------------------------------------------------------------------------
# simplex integrals int_{0<=r1<=...<=rn<=s} prod (r_j - r_{j-1})^{-1/2} dr,
# optionally with a final (s - r_n)^{-1/2} factor
# ---------------------------------------------------------------------------

def simplex_gamma_integral(n: int, s: float, with_final_factor: bool) -> float:
    """Closed form of the ordered-simplex product integral.

    With the final factor the value is pi^((n+1)/2) s^((n-1)/2) / G((n+1)/2);
    without, 2 pi^(n/2) s^(n/2) / (n G(n/2)), where G is the gamma function.
    """
    if n < 1 or s <= 0:
        raise ConfigError("need n >= 1 and s > 0")
    if with_final_factor:
        return math.pi ** ((n + 1) / 2) * s ** ((n - 1) / 2) / math.gamma((n + 1) / 2)
    return 2.0 * math.pi ** (n / 2) * s ** (n / 2) / (n * math.gamma(n / 2))


def _convolve_half_power(k: int, x: np.ndarray, nodes: int) -> np.ndarray:
    """k-fold convolution of t^(-1/2) with itself, by recursive quadrature.

    Endpoint singularities are removed with the substitution tau = (x/2) w^2
    on each half of [0, x].
    """
    x = np.asarray(x, dtype=float)
    if k == 1:
        return x ** -0.5
    gl_x, gl_w = leggauss(nodes)
    w = 0.5 * (gl_x + 1.0)           # w in (0, 1)
    ww = 0.5 * gl_w
    half = 0.5 * x[..., None]
    tau_left = half * w ** 2
    jac_left = half * 2.0 * w * ww
    tau_right = x[..., None] - half * w ** 2
    jac_right = jac_left
    inner_left = _convolve_half_power(k - 1, (x[..., None] - tau_left).ravel(), nodes)
    inner_right = _convolve_half_power(k - 1, (x[..., None] - tau_right).ravel(), nodes)
    shape = tau_left.shape
    left = np.sum(jac_left * tau_left ** -0.5 * inner_left.reshape(shape), axis=-1)
    right = np.sum(jac_right * tau_right ** -0.5 * inner_right.reshape(shape), axis=-1)
    return left + right


def simplex_gamma_quadrature(n: int, s: float, with_final_factor: bool,
                             nodes: int = 48) -> float:
    """The same simplex integral computed by recursive 1-d quadrature.

    Companion check of :func:`simplex_gamma_integral`; the integrand chain is
    an (n+1)- or n-fold convolution of t^(-1/2) evaluated (or integrated) at
    s.
    """
    if n < 1 or s <= 0:
        raise ConfigError("need n >= 1 and s > 0")
    if with_final_factor:
        return float(_convolve_half_power(n + 1, np.array([s]), nodes)[0])
    # integral over r_n of the n-fold convolution; substitute both halves
    gl_x, gl_w = leggauss(nodes)
    w = 0.5 * (gl_x + 1.0)
    ww = 0.5 * gl_w
    half = 0.5 * s
    r_left = half * w ** 2
    r_right = s - half * w ** 2
    jac = half * 2.0 * w * ww
    c_left = _convolve_half_power(n, r_left, nodes)
    c_right = _convolve_half_power(n, r_right, nodes)
    return float(np.sum(jac * c_left) + np.sum(jac * c_right))


def chapman_kolmogorov_error(r: float, s: float, x, y, nodes: int = 220) -> float:
    """Relative error of the semigroup identity
    int_wedge g_r(x, z) g_s(z, y) dz = g_{r+s}(x, y) under tensor quadrature.

    The z integral runs in rotated coordinates over a box of 8 sqrt(r+s)
    around the Gaussian center; the neglected tail is far below the 1e-3
    check tolerance.
    """
    x1, x2 = _pair(x)
    y1, y2 = _pair(y)
    ux = (x2 - x1) / SQRT2
    vx = (x1 + x2) / SQRT2
    uy = (y2 - y1) / SQRT2
    vy = (y1 + y2) / SQRT2
    R = 8.0 * math.sqrt(r + s)
    gl, glw = leggauss(nodes)
    u_hi = max(ux, uy) + R
    u = 0.5 * (gl + 1.0) * u_hi
    uw = 0.5 * glw * u_hi
    v_mid = 0.5 * (vx + vy)
    v = v_mid + gl * R
    vw = glw * R
    U, V = np.meshgrid(u, v, indexing="ij")
    z1 = (V - U) / SQRT2
    z2 = (V + U) / SQRT2

    def g(rr, a1, a2, b1, b2):
        d2 = (a1 - b1) ** 2 + (a2 - b2) ** 2
        ds2 = (a1 - b2) ** 2 + (a2 - b1) ** 2
        return (np.exp(-d2 / (2.0 * rr)) - np.exp(-ds2 / (2.0 * rr))) \
            / (2.0 * math.pi * rr)

    integrand = g(r, x1, x2, z1, z2) * g(s, z1, z2, y1, y2)
    val = float(np.sum(integrand * uw[:, None] * vw[None, :]))
    ref = green_killed(r + s, (x1, x2), (y1, y2))
    return abs(val - ref) / abs(ref)


def gaussian_wedge_tail(alpha: float) -> float:
    """Upper bound pi/alpha for the Gaussian integral over the wedge,
    used to bound truncated tails of unbounded domain integrals."""
    if alpha <= 0:
        raise ConfigError("need alpha > 0")
    return math.pi / alpha


def log_simplex_gamma_integral(n: int, s: float) -> float:
    """log of the with-final-factor closed form, for overflow-free tails."""
    return ((n + 1) / 2) * math.log(math.pi) + ((n - 1) / 2) * math.log(s) \
        - gammaln((n + 1) / 2)
