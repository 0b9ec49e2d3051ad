"""Result carriers shared by the density estimators."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass


def stable_digest(payload: dict) -> str:
    """Short stable hash of a configuration dict (canonical JSON, sha256)."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class DensityEstimate:
    """A value of the 1-point density with its error budget.

    ``stat_error`` is a one-standard-error statistical uncertainty (zero for
    deterministic methods); ``det_bound`` is a deterministic allowance
    (truncation tails, quadrature refinement differences, discretization
    budgets).  ``flag`` is empty on a clean run.
    """

    value: float
    stat_error: float
    det_bound: float
    method: str
    config_digest: str
    seed: int | None = None
    flag: str = ""

    def total_budget(self, n_sigma: float = 3.0) -> float:
        return n_sigma * self.stat_error + self.det_bound
