"""Bayesian multivariate trend-cycle models for inflation and real activity."""
from .data import TimeSeriesPanel, assemble_panel, load_csv, transform
from .spec import (ModelSpec, ParameterVector, baseline_spec, compile_layout, global_spec,
                   stylized_spec)
from .statespace import StateSpaceSystem, assemble, loglik, simulate, simulation_smoother, smooth

__version__ = "0.1.0"
