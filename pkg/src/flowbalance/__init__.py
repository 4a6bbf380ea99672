"""Asymptotic measures of state-space models with non-exponential transitions.

Each non-exponential transition is replaced by an exponential one whose rate
preserves the local probability flow balance, either in steady state or in the
quasi-stationary regime of an absorbing model.
"""

from .correction import (
    CorrectionResult,
    OutflowRace,
    correct_steady,
    embedded_renewal_steady,
    equivalent_rate,
    equivalent_rate_fixed_delay,
    renewal_hazard,
    solve_hazard,
)
from .ctmc import (
    Generator,
    QuasiStationaryResult,
    SteadyState,
    build_generator,
    quasi_stationary,
    steady_state,
    transient,
)
from .distributions import DistributionSpec, distribution_eval, from_mean_scv, moments
from .errors import *  # noqa: F401,F403
from .model import StateSpaceModel, dump_model, load_model, parse_model
from .nonregen import markov_approximation, solve_nonregen

__version__ = "1.0.0"
