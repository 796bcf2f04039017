"""Radio environment map: best-server SINR raster and a two-region frequency plan."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..radio import ChannelParams, Position


@dataclass
class RemGrid:
    xs: np.ndarray
    ys: np.ndarray
    sinr_db: np.ndarray  # shape (len(ys), len(xs))
    server: np.ndarray  # index of the strongest node per cell


def rem_grid(nodes: Sequence[Position], channel: ChannelParams | None = None, resolution_m: float = 5.0,
             margin_m: float = 25.0, tx_dbm: float | None = None, noise_dbm: float | None = None) -> RemGrid:
    """SINR of the strongest node over every other node plus noise, on a regular grid.

    The grid covers the node bounding box grown by ``margin_m``. A layout
    whose covered area would be zero is rejected.
    """
    ch = channel or ChannelParams()
    if not nodes:
        raise ValueError("REM needs at least one node")
    if resolution_m <= 0:
        raise ValueError("resolution must be positive")
    px = np.array([n.x for n in nodes])
    py = np.array([n.y for n in nodes])
    x0, x1 = px.min() - margin_m, px.max() + margin_m
    y0, y1 = py.min() - margin_m, py.max() + margin_m
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ValueError("layout has zero area")
    xs = np.arange(x0, x1 + resolution_m / 2, resolution_m)
    ys = np.arange(y0, y1 + resolution_m / 2, resolution_m)
    gx, gy = np.meshgrid(xs, ys)
    d = np.hypot(gx[..., None] - px, gy[..., None] - py)
    d = np.maximum(d, 1.0)
    tx = ch.lte_enb_tx_dbm if tx_dbm is None else tx_dbm
    noise = ch.lte_noise_dbm if noise_dbm is None else noise_dbm
    rx_mw = 10 ** ((tx - ch.ref_loss_db - 10 * ch.exponent * np.log10(d)) / 10)
    server = rx_mw.argmax(axis=-1)
    best = rx_mw.max(axis=-1)
    interf = rx_mw.sum(axis=-1) - best
    sinr = 10 * np.log10(best / (interf + 10 ** (noise / 10)))
    return RemGrid(xs, ys, sinr, server)


def ffr_assign(rem: RemGrid, threshold_db: float) -> np.ndarray:
    """1 (cell-centre band R1) where SINR >= threshold, else 2 (edge band R2)."""
    return np.where(rem.sinr_db >= threshold_db, 1, 2)


def write_rem_csv(rem: RemGrid, path: str | Path, regions: np.ndarray | None = None) -> Path:
    """Long-format raster: one row per cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["x_m", "y_m", "sinr_db", "server"] + (["region"] if regions is not None else [])
        w.writerow(cols)
        for i, y in enumerate(rem.ys):
            for j, x in enumerate(rem.xs):
                row = [f"{x:.3f}", f"{y:.3f}", f"{rem.sinr_db[i, j]:.4f}", int(rem.server[i, j])]
                if regions is not None:
                    row.append(int(regions[i, j]))
                w.writerow(row)
    return path
