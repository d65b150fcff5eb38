"""Discrete-event simulation of a workplace EV charging facility under a shared power cap."""
from .kernel import Calendar, ContractViolation, RngStream, derive_seed, derive_stream
from .scenario import (
    ColumnKind, ConfigError, EVSpec, FacilitySpec, ScenarioConfig, Strategy, build_facility,
    load_config, sample_fleet,
)
from .signals import TimeSeries, energy_cost, interval_index, load_series, value_at
from .facility import EnergySandbox, PortLedger, requested_power
from .protocol import (
    ChargingSimulation, EVTrace, HorizonError, SimulationResult, select_fcfs, select_shrd,
    settle, simulate,
)
from .metrics import (
    E_STAR_WS, RunArtifacts, aggregate_runs, bin_power, ecdf, ks_distance, pdf_estimate, ttr,
    utilization,
)
from .oracle import compare_traces, simulate_timestep
from .runner import ExperimentMatrix, ExperimentRow, builtin_matrix, run_experiment, run_matrix

__version__ = "0.1.0"
