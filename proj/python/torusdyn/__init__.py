"""Expanding torus maps, induced Markov maps and tower measures."""

from ._core import (
    InducedMap,
    Map,
    TorusdynError,
    build_induced,
    lyapunov_lebesgue,
    periodic_points,
    run_experiment,
    sample_mu_a,
)

__all__ = [
    "InducedMap",
    "Map",
    "TorusdynError",
    "build_induced",
    "lyapunov_lebesgue",
    "periodic_points",
    "run_experiment",
    "sample_mu_a",
]
