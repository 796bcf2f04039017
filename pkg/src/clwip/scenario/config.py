"""Scenario configuration: dataclasses, YAML loading, validation and the shipped presets."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..lal import LasPolicy
from ..radio import DEFAULT_PER_1PCT_SNR_DB, DEFAULT_SLOPE_PER_DB, ChannelParams, ErrorModel
from ..transport import CLASS_ORDER

PRESETS = ("expt1", "expt2", "expt3", "expt4", "expt5")


class ConfigError(ValueError):
    """Raised for a scenario that fails validation."""


@dataclass
class LayoutConfig:
    kind: str = "single"  # single | grid
    rows: int = 1
    cols: int = 1
    pitch_m: float = 50.0
    ue_distance_m: float = 25.0
    placement: str = "ring"  # ring: exactly ue_distance_m away | disc: uniform within that radius


@dataclass
class TrafficConfig:
    kind: str = "udp"  # udp | mixed
    adr_mbps: float = 1.0
    payload_bytes: int = 1470
    ul_flows_per_ue: int = 2
    dl_flows_per_ue: int = 2
    weights: list[float] = field(default_factory=lambda: [20.0, 20.0, 60.0, 20.0])
    mix_mode: str = "normalized"
    voice_payload_bytes: int = 160
    voice_interval_ms: float = 20.0
    video_rate_mbps: float = 2.0
    web_think_mean_s: float = 5.0
    web_median_kb: float = 100.0
    ftp_start_window_s: float = 1.0


@dataclass
class RadioConfig:
    ref_loss_db: float = 46.7
    exponent: float = 3.0
    lte_enb_tx_dbm: float = 30.0
    lte_ue_tx_dbm: float = 23.0
    wifi_tx_dbm: float = 20.0
    wifi_noise_dbm: float = -94.0
    lte_noise_dbm: float = -97.0
    per_1pct_snr_db: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_PER_1PCT_SNR_DB))
    per_slope: float = DEFAULT_SLOPE_PER_DB

    def channel(self) -> ChannelParams:
        return ChannelParams(self.ref_loss_db, self.exponent, self.lte_enb_tx_dbm, self.lte_ue_tx_dbm,
                             self.wifi_tx_dbm, self.wifi_noise_dbm, self.lte_noise_dbm)

    def error_model(self) -> ErrorModel:
        return ErrorModel.from_thresholds({int(k): float(v) for k, v in self.per_1pct_snr_db.items()}, self.per_slope)


@dataclass
class WifiConfig:
    queue_packets: int = 400
    retry_limit: int = 7
    cw_min: int = 15
    cw_max: int = 1023
    carrier_sense_range_m: float = 45.0


@dataclass
class LteConfig:
    ewma_alpha: float = 0.01
    uplink_max_cqi: int = 9
    bearer_capacity_bytes: int = 1_000_000
    efficiency: list[float] | None = None
    sinr_db: list[float] | None = None


@dataclass
class ReorderConfig:
    enabled: bool = False
    hold_ms: float = 60.0
    cap: int = 1000


@dataclass
class SweepConfig:
    param: str | None = None
    values: list[Any] = field(default_factory=list)


@dataclass
class ScenarioConfig:
    name: str = "custom"
    policy: str = "FsNLas"
    ue_count: int = 1
    duration_s: float = 100.0
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    backhaul_delay_ms: float = 40.0
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    wifi: WifiConfig = field(default_factory=WifiConfig)
    lte: LteConfig = field(default_factory=LteConfig)
    reorder: ReorderConfig = field(default_factory=ReorderConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def las_policy(self) -> LasPolicy:
        return LasPolicy.parse(self.policy)

    @property
    def node_count(self) -> int:
        return 1 if self.layout.kind == "single" else self.layout.rows * self.layout.cols

    def validate(self) -> ScenarioConfig:
        try:
            LasPolicy.parse(self.policy)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.ue_count < 1:
            raise ConfigError("ue_count must be at least 1")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.backhaul_delay_ms < 0:
            raise ConfigError("backhaul_delay_ms must be non-negative")
        lay = self.layout
        if lay.kind not in ("single", "grid"):
            raise ConfigError(f"unknown layout kind {lay.kind!r}")
        if lay.kind == "grid" and (lay.rows < 1 or lay.cols < 1 or lay.pitch_m <= 0):
            raise ConfigError("grid layout needs positive rows, cols and pitch")
        if lay.ue_distance_m <= 0:
            raise ConfigError("ue_distance_m must be positive")
        if lay.placement not in ("ring", "disc"):
            raise ConfigError(f"unknown UE placement {lay.placement!r}")
        t = self.traffic
        if t.kind == "udp":
            if t.adr_mbps <= 0:
                raise ConfigError("adr_mbps must be positive")
            if t.payload_bytes <= 0 or t.ul_flows_per_ue < 0 or t.dl_flows_per_ue < 0:
                raise ConfigError("invalid UDP flow layout")
            if t.ul_flows_per_ue + t.dl_flows_per_ue == 0:
                raise ConfigError("UDP traffic needs at least one flow per UE")
        elif t.kind == "mixed":
            if len(t.weights) != len(CLASS_ORDER):
                raise ConfigError("weights must list voice, ftp, video, web")
            if any(w < 0 for w in t.weights) or sum(t.weights) <= 0:
                raise ConfigError("traffic weights must be non-negative and not all zero")
            if t.mix_mode not in ("normalized", "multi"):
                raise ConfigError(f"unknown mix_mode {t.mix_mode!r}")
        else:
            raise ConfigError(f"unknown traffic kind {t.kind!r}")
        w = self.wifi
        if w.queue_packets < 1 or w.retry_limit < 0 or w.cw_min < 1 or w.cw_max < w.cw_min:
            raise ConfigError("invalid Wi-Fi MAC parameters")
        if not 0 < self.lte.ewma_alpha < 1:
            raise ConfigError("lte.ewma_alpha must lie in (0, 1)")
        if self.reorder.hold_ms < 0 or self.reorder.cap < 1:
            raise ConfigError("invalid reorder buffer parameters")
        try:
            self.radio.channel()
            self.radio.error_model()
        except (ValueError, KeyError) as e:
            raise ConfigError(f"invalid radio parameters: {e}") from None
        return self

    def with_value(self, dotted: str, value: Any) -> ScenarioConfig:
        """Copy with one (possibly nested) field replaced, e.g. ``traffic.adr_mbps``."""
        cfg = copy.deepcopy(self)
        target: Any = cfg
        parts = dotted.split(".")
        for p in parts[:-1]:
            target = getattr(target, p)
        if not hasattr(target, parts[-1]):
            raise ConfigError(f"unknown config field {dotted!r}")
        setattr(target, parts[-1], value)
        return cfg

    def sweep_points(self) -> list[tuple[Any, ScenarioConfig]]:
        if not self.sweep.param:
            return [(None, self)]
        return [(v, self.with_value(self.sweep.param, v)) for v in self.sweep.values]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "layout": LayoutConfig, "traffic": TrafficConfig, "radio": RadioConfig,
    "wifi": WifiConfig, "lte": LteConfig, "reorder": ReorderConfig, "sweep": SweepConfig,
}


def from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    kwargs: dict[str, Any] = {}
    for key, cls in _SECTIONS.items():
        section = data.pop(key, None) or {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(section) - names
        if unknown:
            raise ConfigError(f"unknown keys in {key}: {sorted(unknown)}")
        kwargs[key] = cls(**section)
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs.update(data)
    return ScenarioConfig(**kwargs).validate()


def load(source: str | Path) -> ScenarioConfig:
    """Load a scenario from a YAML file path or a preset name (``expt1``..``expt5``)."""
    text: str
    if str(source) in PRESETS:
        text = resources.files("clwip.scenario").joinpath("presets", f"{source}.yaml").read_text()
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"no such scenario file or preset: {source}")
        text = path.read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("scenario file must contain a mapping")
    return from_dict(data)


def preset(name: str) -> ScenarioConfig:
    return load(name)
