"""Relaxation of a few-level system in a finite banded environment.

Exact Schrodinger dynamics by diagonalization next to the
Hilbert-space-average (HAM) rate equations, plus validity diagnostics.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .config import format_model, load_model, save_model
from .diagnostics import (correlation_f, correlation_g, deviation_D2, hilbert_variance, truncation_validity,
                          verify_dyson_trace)
from .exceptions import DimensionCapError, ReductionError, SpecificationError
from .ham import (RateTable, ThreeBandParams, closed_form_three_band, golden_rates, hilbert_average_state,
                  integrate_rates, iterate_map, reduce_canonical)
from .interaction import InteractionMatrix, decorrelation_report, empirical_coupling, sample_interaction
from .model import (BandSpec, BasisLayout, CouplingBlockSpec, ModelSpec, SystemSpec, build_local_hamiltonian,
                    classify_blocks, composite_projector)
from .presets import preset_catalog
from .propagator import (EigenSystem, InitialRecipe, ObservableSet, Trajectory, diagonalize, evolve, measure,
                         propagate, sample_initial_state)
from .scenarios import ScenarioConfig, run_scenario

__all__ = [name for name in dir() if not name.startswith("_") and name not in {"version", "PackageNotFoundError"}]
