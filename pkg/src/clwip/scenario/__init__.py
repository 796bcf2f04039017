from .config import PRESETS, ConfigError, ScenarioConfig, from_dict, load, preset
from .metrics import ExperimentResult, FlowMetrics, MetricsRecord, aggregate, compute_delay_jitter, export
from .network import Network, simulate
from .rem import RemGrid, ffr_assign, rem_grid, write_rem_csv
from .runner import run_experiment, run_point

__all__ = [
    "PRESETS", "ConfigError", "ScenarioConfig", "from_dict", "load", "preset",
    "ExperimentResult", "FlowMetrics", "MetricsRecord", "aggregate", "compute_delay_jitter", "export",
    "Network", "simulate", "RemGrid", "ffr_assign", "rem_grid", "write_rem_csv",
    "run_experiment", "run_point",
]
