"""Closed-form densities for the drift-free and linear-drift flows.

Both densities are constant in space.  They serve as ground truth in the
acceptance suite.
"""

from __future__ import annotations

import math

from .errors import ConfigError


def density_zero(t: float) -> float:
    """Drift-free 1-point density, 1/sqrt(pi t)."""
    if t <= 0:
        raise ConfigError("need t > 0")
    return 1.0 / math.sqrt(math.pi * t)


def density_linear(c: float, t: float) -> float:
    """1-point density for drift a(x) = c x, c != 0.

    sqrt(2/pi) |c|^(1/2) / psi(t, c), with psi^2 = e^(2tc) - 1 for c > 0 and
    1 - e^(2tc) for c < 0.  Evaluated through expm1 so the c -> 0 limit is
    stable: the value tends to 1/sqrt(pi t).
    """
    if t <= 0:
        raise ConfigError("need t > 0")
    if c == 0.0:
        raise ConfigError("c = 0 has no linear-drift closed form; "
                          "use density_zero")
    if c > 0:
        psi = math.sqrt(math.expm1(2.0 * t * c))
    else:
        psi = math.sqrt(-math.expm1(2.0 * t * c))
    return math.sqrt(2.0 / math.pi) * math.sqrt(abs(c)) / psi
