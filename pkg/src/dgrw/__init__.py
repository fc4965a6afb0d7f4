"""Simulator and analytic oracles for the dissipative GRW collapse model."""
from .core import ModelParams, DerivedParams, derive_params, preset_params, scaled_params
from .gaussian import GaussianState, Observables, apply_jump, free_evolve, jump_position_density, observables
from .trajectory import EnsembleSeries, TrajectoryRecord, ensemble_statistics, sample_trajectory

__version__ = "0.1.0"
