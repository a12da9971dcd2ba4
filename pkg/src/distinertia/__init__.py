"""Distributed estimation of control-area inertia in multi-machine power systems."""

__version__ = "0.1.0"

from .areas import (AreaAggregator, AreaPartition, AreaSignals, NoiseInjector, NoiseSpec,
                    add_noise, aggregate_area_signals, coi_diagnostics)
from .errors import ConfigurationError, FrequencyBandError, NumericalDivergenceError
from .estimator import (EstimatorBank, InertiaEstimates, PeReport, check_step_size, ci_step,
                        pe_report, reconstruct_inertia)
from .graph import (CommGraph, ConnectivityReport, Mailbox, connectivity_report,
                    incidence_and_laplacian, neighbors)
from .grid import (GridState, RandomLoadSchedule, SineSchedule, StepSchedule, SystemConfig,
                   electrical_power, initial_state, load_grid, simulate, swing_step,
                   synthetic_system)
from .harness import (RunMetrics, RunResult, Scenario, export_plot_data, load_scenario,
                      parse_scenario, reference_scenario, reference_suite, run_scenario)
from .regression import (AreaRegression, FilterParams, FilterState, RegressorRow,
                         build_regressor_row, filter_step, true_parameters)

__all__ = [
    "AreaAggregator",
    "AreaPartition",
    "AreaSignals",
    "NoiseInjector",
    "NoiseSpec",
    "add_noise",
    "aggregate_area_signals",
    "coi_diagnostics",
    "ConfigurationError",
    "FrequencyBandError",
    "NumericalDivergenceError",
    "EstimatorBank",
    "InertiaEstimates",
    "PeReport",
    "check_step_size",
    "ci_step",
    "pe_report",
    "reconstruct_inertia",
    "CommGraph",
    "ConnectivityReport",
    "Mailbox",
    "connectivity_report",
    "incidence_and_laplacian",
    "neighbors",
    "GridState",
    "RandomLoadSchedule",
    "SineSchedule",
    "StepSchedule",
    "SystemConfig",
    "electrical_power",
    "initial_state",
    "load_grid",
    "simulate",
    "swing_step",
    "synthetic_system",
    "RunMetrics",
    "RunResult",
    "Scenario",
    "export_plot_data",
    "load_scenario",
    "parse_scenario",
    "reference_scenario",
    "reference_suite",
    "run_scenario",
    "AreaRegression",
    "FilterParams",
    "FilterState",
    "RegressorRow",
    "build_regressor_row",
    "filter_step",
    "true_parameters",
]
