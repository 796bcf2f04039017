"""Physical-layer abstractions shared by both radios.

Log-distance propagation, a logistic packet-error model per 802.11a rate and
the AARF rate-control state machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# 802.11a PHY rates (Mbps) and data bits per 4 µs OFDM symbol
DOT11A_RATES_MBPS: tuple[int, ...] = (6, 9, 12, 18, 24, 36, 48, 54)
DOT11A_BITS_PER_SYMBOL: dict[int, int] = {6: 24, 9: 36, 12: 48, 18: 72, 24: 96, 36: 144, 48: 192, 54: 216}

# SNR (dB) at which a 1500-byte frame sees 1% PER
DEFAULT_PER_1PCT_SNR_DB: dict[int, float] = {
    6: 6.0, 9: 7.5, 12: 9.0, 18: 11.5, 24: 14.5, 36: 18.5, 48: 23.0, 54: 25.0,
}
DEFAULT_SLOPE_PER_DB = 1.5


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def distance(self, other: Position) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ChannelParams:
    ref_loss_db: float = 46.7
    exponent: float = 3.0
    lte_enb_tx_dbm: float = 30.0
    lte_ue_tx_dbm: float = 23.0
    wifi_tx_dbm: float = 20.0
    wifi_noise_dbm: float = -94.0  # 20 MHz
    lte_noise_dbm: float = -97.0  # 10 MHz

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.ref_loss_db <= 0:
            raise ValueError("reference loss must be positive")


def path_loss_db(dist: float, params: ChannelParams) -> float:
    """Log-distance path loss with a 1 m reference distance."""
    if not dist > 0:
        raise ValueError(f"distance must be positive, got {dist}")
    return params.ref_loss_db + 10.0 * params.exponent * math.log10(dist)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


def received_dbm(tx_dbm: float, dist: float, params: ChannelParams) -> float:
    return tx_dbm - path_loss_db(dist, params)


def sinr_db(signal_dbm: float, interferers_dbm: list[float], noise_dbm: float) -> float:
    denom = dbm_to_mw(noise_dbm) + sum(dbm_to_mw(i) for i in interferers_dbm)
    return signal_dbm - mw_to_dbm(denom)


@dataclass(frozen=True)
class RateCurve:
    rate: int
    snr_mid_db: float
    slope: float

    def bit_error(self, snr_db: float) -> float:
        z = self.slope * (snr_db - self.snr_mid_db)
        if z > 700:
            return 0.0
        return 0.5 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class ErrorModel:
    """Per-rate logistic bit-error curves, ordered by rate."""

    curves: tuple[RateCurve, ...]

    def __post_init__(self):
        mids = [c.snr_mid_db for c in self.curves]
        if any(b <= a for a, b in zip(mids, mids[1:])):
            raise ValueError("snr_mid_db must increase with rate")
        if any(c.slope <= 0 for c in self.curves):
            raise ValueError("slopes must be positive for a monotone PER")

    @classmethod
    def from_thresholds(cls, snr_1pct: dict[int, float] | None = None,
                        slope: float = DEFAULT_SLOPE_PER_DB, ref_bits: int = 1500 * 8) -> ErrorModel:
        """Place each curve so that a ``ref_bits`` frame has 1% PER at the given SNR."""
        snr_1pct = snr_1pct or DEFAULT_PER_1PCT_SNR_DB
        # bit error b with 1 - (1-b)^N = 0.01
        b = -math.expm1(math.log1p(-0.01) / ref_bits)
        offset = math.log(0.5 / b - 1.0) / slope
        curves = tuple(RateCurve(r, snr_1pct[r] - offset, slope) for r in sorted(snr_1pct))
        return cls(curves)

    @property
    def rates(self) -> tuple[int, ...]:
        return tuple(c.rate for c in self.curves)

    def curve(self, rate: int) -> RateCurve:
        for c in self.curves:
            if c.rate == rate:
                return c
        raise KeyError(f"unknown PHY rate {rate} Mbps")


DEFAULT_ERROR_MODEL = ErrorModel.from_thresholds()


def per(rate: int, snr_db: float, frame_bits: int, model: ErrorModel = DEFAULT_ERROR_MODEL) -> float:
    """Frame error probability ``1 - (1 - ber)^bits``."""
    if frame_bits <= 0:
        raise ValueError("frame_bits must be positive")
    ber = model.curve(rate).bit_error(snr_db)
    if ber <= 0.0:
        return 0.0
    if ber >= 0.5:
        return -math.expm1(frame_bits * math.log(0.5))
    return -math.expm1(frame_bits * math.log1p(-ber))


AARF_BASE_THRESHOLD = 10
AARF_THRESHOLD_CAP = 50
AARF_DEMOTE_AFTER = 2


@dataclass
class AarfState:
    current_rate_index: int = 0
    success_count: int = 0
    success_threshold: int = AARF_BASE_THRESHOLD
    probe_flag: bool = False
    failure_count: int = 0
    num_rates: int = len(DOT11A_RATES_MBPS)
    base_threshold: int = AARF_BASE_THRESHOLD
    threshold_cap: int = AARF_THRESHOLD_CAP
    demote_after: int = AARF_DEMOTE_AFTER
    rates: tuple[int, ...] = field(default=DOT11A_RATES_MBPS, repr=False)

    @property
    def rate(self) -> int:
        return self.rates[self.current_rate_index]

    def update(self, tx_success: bool) -> None:
        """Apply one transmission outcome in place."""
        if tx_success:
            self.probe_flag = False
            self.failure_count = 0
            self.success_count += 1
            if self.success_count >= self.success_threshold :
                self.success_count = 0
                if self.current_rate_index < self.num_rates - 1:
                    self.current_rate_index += 1
                    self.probe_flag = True
            return
        self.success_count = 0
        if self.probe_flag:
            # the probe frame at the new rate failed: fall back and wait longer next time
            self.probe_flag = False
            self.failure_count = 0
            self.current_rate_index = max(0, self.current_rate_index - 1)
            self.success_threshold = min(2 * self.success_threshold, self.threshold_cap)
            return
        self.failure_count += 1
        if self.failure_count >= self.demote_after:
            self.failure_count = 0
            self.current_rate_index = max(0, self.current_rate_index - 1)
            self.success_threshold = self.base_threshold


def aarf_on_result(state: AarfState, tx_success: bool) -> AarfState:
    """Return the successor of ``state`` after one transmission attempt."""
    nxt = replace(state)
    nxt.update(tx_success)
    return nxt
