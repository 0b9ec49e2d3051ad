"""Numerical laboratory for 1-point densities of coalescing Brownian
particle systems with drift.

Four independent routes to the same density: the Duhamel series around the
drift-free survival function, a killed finite-difference PDE solve, exit-time
Monte Carlo of the two-particle diffusion, and direct simulation of the
coalescing flow; plus closed forms for the drift-free and linear cases.
"""

import warnings as _warnings

# environment noise: numba falls back from TBB to its workqueue layer
_warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

from .drift import (Constant, DriftSpec, Linear, Mollified, Step, Tabulated,
                    Tanh, Zero, drift_to_string, evaluate, l1_distance,
                    l_inf_distance, mollify, negate, parse_drift, scale)
from .errors import (ArratiaError, ConfigError, MarginError,
                     UnboundedDriftError)
from .flow import (FlowConfig, FlowEnsemble, PointProcessSample,
                   duality_check, empirical_density, flow_config_for,
                   meeting_probability, simulate_flow)
from .harness import (RunConfig, compare_methods, experiment_coalescence,
                      experiment_converge, experiment_duality, run_density)
from .kernel import (KernelBoundConstants, WedgePoint,
                     calibrate_bound_constants, grad_bound, grad_green,
                     green_killed, heat2d, simplex_gamma_integral,
                     simplex_gamma_quadrature)
from .mc_exit import PathConfig, SurvivalEstimate, density_mc, survival
from .oracle import density_linear, density_zero
from .pde import RotatedGrid, WField, density_from_field, grid_for, solve
from .results import DensityEstimate
from .series import (SeriesConfig, SeriesTermEstimate, W0, W_partial,
                     W_partial_estimate, density_series, density_term,
                     grad_W0, truncation_bound)

__version__ = "0.1.0"
