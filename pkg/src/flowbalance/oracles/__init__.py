"""Independent numerical references: Monte Carlo and finite differences."""

from .finite_difference import FDResult, fd_hazard
from .montecarlo import BLOCK_SIZE, OracleEstimate, SimConfig, SimResult, simulate, thread_count
from .series import write_series

__all__ = [
    "BLOCK_SIZE",
    "FDResult",
    "OracleEstimate",
    "SimConfig",
    "SimResult",
    "fd_hazard",
    "simulate",
    "thread_count",
    "write_series",
]
