"""Per-flow and system metrics, seed aggregation and CSV/JSON export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Sequence


def compute_delay_jitter(trace: Sequence[tuple[float, float]]) -> tuple[float | None, float | None]:
    """Mean one-way delay and mean |transit(i) - transit(i-1)| of ``(send_ts, recv_ts)`` pairs.

    Pairs are taken in delivery order. Jitter needs two deliveries; both
    values are ``None`` for an empty trace.
    """
    if not trace:
        return None, None
    transits = [r - s for s, r in trace]
    delay = fmean(transits)
    if len(transits) < 2:
        return delay, None
    jitter = fmean(abs(b - a) for a, b in zip(transits, transits[1:]))
    return delay, jitter


@dataclass
class FlowMetrics:
    flow_id: int
    app: str
    transport: str
    direction: str
    ue: int
    node: int
    packets_sent: int = 0
    packets_received: int = 0
    goodput_bytes: int = 0
    goodput_bps: float = 0.0
    mean_delay_s: float | None = None
    jitter_s: float | None = None
    fast_retransmits: int = 0
    timeouts: int = 0
    mean_cwnd_bytes: float | None = None


@dataclass
class MetricsRecord:
    seed: int
    duration_s: float
    flows: list[FlowMetrics] = field(default_factory=list)
    throughput_bps: float = 0.0
    generated: int = 0
    delivered: int = 0
    dropped_queue: int = 0
    dropped_retry: int = 0
    in_flight: int = 0
    drops: dict[str, int] = field(default_factory=dict)
    iface_bytes: dict[str, int] = field(default_factory=dict)
    wifi_collisions: int = 0
    wifi_uplink_packets: int = 0
    fast_retransmits: int = 0
    tcp_goodput_bps: float = 0.0
    cwnd_traces: dict[int, list[tuple[float, float]]] = field(default_factory=dict)
    dispatched_events: int = 0

    @property
    def conserved(self) -> bool:
        return self.generated == self.delivered + self.dropped_queue + self.dropped_retry + self.in_flight

    def app_flows(self, app: str) -> list[FlowMetrics]:
        return [f for f in self.flows if f.app == app]

    def mean_delay(self, app: str) -> float | None:
        vals = [f.mean_delay_s for f in self.app_flows(app) if f.mean_delay_s is not None]
        return fmean(vals) if vals else None

    def mean_jitter(self, app: str) -> float | None:
        vals = [f.jitter_s for f in self.app_flows(app) if f.jitter_s is not None]
        return fmean(vals) if vals else None

    def mean_cwnd(self, app: str = "ftp") -> float | None:
        vals = [f.mean_cwnd_bytes for f in self.app_flows(app) if f.mean_cwnd_bytes is not None]
        return fmean(vals) if vals else None

    def fast_retransmits_per_mb(self) -> float:
        tcp_bytes = sum(f.goodput_bytes for f in self.flows if f.transport == "TCP")
        return self.fast_retransmits / (tcp_bytes / 1e6) if tcp_bytes else math.inf

    def summary(self) -> dict[str, float | None]:
        """Scalar system-level metrics, the unit of seed aggregation."""
        out: dict[str, float | None] = {
            "throughput_mbps": self.throughput_bps / 1e6,
            "tcp_goodput_mbps": self.tcp_goodput_bps / 1e6,
            "generated": self.generated,
            "delivered": self.delivered,
            "dropped_queue": self.dropped_queue,
            "dropped_retry": self.dropped_retry,
            "in_flight": self.in_flight,
            "wifi_collisions": self.wifi_collisions,
            "wifi_uplink_packets": self.wifi_uplink_packets,
            "fast_retransmits": self.fast_retransmits,
        }
        for k in sorted(self.iface_bytes):
            out[f"bytes_{k}"] = self.iface_bytes[k]
        for app in ("voice", "video", "ftp", "web", "udp"):
            if self.app_flows(app):
                d, j = self.mean_delay(app), self.mean_jitter(app)
                out[f"{app}_delay_ms"] = None if d is None else d * 1e3
                out[f"{app}_jitter_ms"] = None if j is None else j * 1e3
        if self.app_flows("ftp"):
            out["ftp_mean_cwnd_bytes"] = self.mean_cwnd("ftp")
        return out


def aggregate(records: Sequence[MetricsRecord]) -> dict[str, float | None]:
    """Per-metric mean over seeds; a metric missing in any seed averages the rest."""
    keys: list[str] = []
    for r in records:
        for k in r.summary():
            if k not in keys:
                keys.append(k)
    out: dict[str, float | None] = {}
    for k in keys:
        vals = [v for r in records if (v := r.summary().get(k)) is not None]
        out[k] = fmean(vals) if vals else None
    return out


@dataclass
class ExperimentResult:
    """Everything produced by one scenario point: per-seed records and their mean."""

    point: Any
    records: list[MetricsRecord]
    aggregate: dict[str, float | None]


FLOW_COLUMNS = [f for f in FlowMetrics.__dataclass_fields__]
SUMMARY_COLUMNS = ["point", "seed", "metric", "value"]
FLOW_FILE_COLUMNS = ["point", "seed"] + FLOW_COLUMNS
CWND_COLUMNS = ["point", "seed", "flow_id", "time_s", "cwnd_bytes"]


def _fmt(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9))
    return v


def _rows(results: Iterable[ExperimentResult]):
    summary, flows, cwnd = [], [], []
    for res in results:
        for rec in res.records:
            for k, v in rec.summary().items():
                summary.append({"point": res.point, "seed": rec.seed, "metric": k, "value": v})
            for f in rec.flows:
                flows.append({"point": res.point, "seed": rec.seed, **asdict(f)})
            for fid in sorted(rec.cwnd_traces):
                for t, c in rec.cwnd_traces[fid]:
                    cwnd.append({"point": res.point, "seed": rec.seed, "flow_id": fid, "time_s": t, "cwnd_bytes": c})
        for k, v in res.aggregate.items():
            summary.append({"point": res.point, "seed": "mean", "metric": k, "value": v})
    return summary, flows, cwnd


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r.get(c)) for c in columns})
    path.write_text(buf.getvalue())


def export(results: Sequence[ExperimentResult], out_dir: str | Path, fmt: str = "csv",
           stem: str = "results") -> list[Path]:
    """Write summary, per-flow and cwnd-trace files; returns the paths written."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unsupported export format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    summary, flows, cwnd = _rows(results)
    paths = [out / f"{stem}_summary.{fmt}", out / f"{stem}_flows.{fmt}", out / f"{stem}_cwnd.{fmt}"]
    try:
        if fmt == "csv":
            _write_csv(paths[0], SUMMARY_COLUMNS, summary)
            _write_csv(paths[1], FLOW_FILE_COLUMNS, flows)
            _write_csv(paths[2], CWND_COLUMNS, cwnd)
        else:
            for p, rows in zip(paths, (summary, flows, cwnd)):
                p.write_text(json.dumps(rows, indent=1, sort_keys=False) + "\n")
    except OSError as e:
        raise OSError(f"cannot write results to {out}: {e}") from e
    return paths
