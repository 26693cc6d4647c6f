"""Univariate estimation-of-distribution algorithm laboratory."""

from .core import FrequencyVector, ScoredPopulation, clamp, sample, select_best
from .edas import ConfigError, EdaConfig, EdaState, step
from .fitness import Benchmark, FitnessSpec, Noise, generalize, wrap_noise
from .runner import RunResult, StopCondition, run, run_ea, trace
from .stats import RngStream, derive_seed, derive_stream

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "ConfigError",
    "EdaConfig",
    "EdaState",
    "FitnessSpec",
    "FrequencyVector",
    "Noise",
    "RngStream",
    "RunResult",
    "ScoredPopulation",
    "StopCondition",
    "clamp",
    "derive_seed",
    "derive_stream",
    "generalize",
    "run",
    "run_ea",
    "sample",
    "select_best",
    "step",
    "trace",
    "wrap_noise",
]
