"""Run scenarios over seeds and sweep points."""

from __future__ import annotations

import logging
from typing import Any, Callable, Sequence

from .config import ScenarioConfig
from .metrics import ExperimentResult, aggregate
from .network import simulate

log = logging.getLogger(__name__)


def run_point(cfg: ScenarioConfig, seeds: Sequence[int] | None = None, point: Any = None) -> ExperimentResult:
    cfg.validate()
    records = []
    for s in seeds if seeds is not None else cfg.seeds:
        rec = simulate(cfg, s)
        log.info("%s point=%s seed=%s throughput=%.2f Mbps", cfg.name, point, s, rec.throughput_bps / 1e6)
        if not rec.conserved:
            log.warning("packet conservation violated for seed %s", s)
        records.append(rec)
    return ExperimentResult(point, records, aggregate(records))


def run_experiment(cfg: ScenarioConfig, seeds: Sequence[int] | None = None,
                   progress: Callable[[Any, ExperimentResult], None] | None = None) -> list[ExperimentResult]:
    """One result per sweep point (a single point when no sweep is configured)."""
    out = []
    for value, point_cfg in cfg.sweep_points():
        res = run_point(point_cfg, seeds, value)
        if progress is not None:
            progress(value, res)
        out.append(res)
    return out
