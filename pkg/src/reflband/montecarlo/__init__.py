"""Monte Carlo validation engine for the reflected control problem.

Two interchangeable kernel backends exist: a compiled extension for the
affine-drift / constant-volatility fast path, and a pure-numpy
implementation that also covers arbitrary coefficient callables.  The
compiled one is preferred when importable; set ``REFLBAND_BACKEND``
to ``numpy`` or ``cython`` to force a choice (``auto`` restores the
default), e.g. for benchmarking one against the other.
"""

from .engine import (
    BandPaths,
    SimConfig,
    SimEstimate,
    backend_name,
    compiled_backend_available,
    dump_paths_csv,
    estimate_case_c_value,
    estimate_hitting_laplace,
    estimate_payoff,
    estimate_vprime_stopping,
    simulate_double_reflection,
)

__all__ = [
    "BandPaths",
    "SimConfig",
    "SimEstimate",
    "simulate_double_reflection",
    "estimate_payoff",
    "estimate_case_c_value",
    "estimate_vprime_stopping",
    "estimate_hitting_laplace",
    "dump_paths_csv",
    "backend_name",
    "compiled_backend_available",
]
