"""Mass-media volume and the media infection channel."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class MediaMode(str, Enum):
    NONE = "none"
    EXOGENOUS = "exogenous"
    ENDOGENOUS = "endogenous"


class MediaSeriesError(ValueError):
    pass


@dataclass(frozen=True)
class MediaParams:
    mode: MediaMode = MediaMode.NONE
    alpha: float = 0.0
    shock_scale: float = 0.0
    activation_fraction: float = 0.135
    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", MediaMode(self.mode))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.shock_scale < 0:
            raise ValueError(f"shock_scale must be >= 0, got {self.shock_scale}")
        if not 0.0 <= self.activation_fraction <= 1.0:
            raise ValueError(f"activation_fraction must be in [0, 1], got {self.activation_fraction}")
        if self.exponent <= 0:
            raise ValueError(f"exponent must be > 0, got {self.exponent}")


def media_prob(alpha: float, M: float) -> float:
    """Weekly probability that the broadcast converts a susceptible agent."""
    if not 0.0 <= M <= 1.0:
        raise ValueError(f"media volume must be in [0, 1], got {M}")
    return alpha * M


def endogenous_volume(
    I_prev: int,
    N: int,
    cumulative_CM_reached: bool,
    shock_scale: float,
    rng: np.random.Generator,
    exponent: float = 1.0,
) -> float:
    """Media volume driven by last week's adopter count.

    Zero until activation. Afterwards ``base = (I_prev / N) ** exponent``
    plus a multiplicative shock ``base * U`` with ``U ~ Uniform(-s, s)``,
    clamped to [0, 1]. A uniform is drawn on every call so the stream
    position does not depend on the activation state.
    """
    if not 0 <= I_prev <= N:
        raise ValueError(f"I_prev must be in [0, N], got {I_prev} with N={N}")
    u = rng.uniform(-1.0, 1.0)
    if not cumulative_CM_reached or N == 0:
        return 0.0
    base = (I_prev / N) ** exponent
    return float(min(1.0, max(0.0, base + base * shock_scale * u)))


def exogenous_volume(series, t: int) -> float:
    if not 0 <= t < len(series):
        raise IndexError(f"week {t} outside media series of length {len(series)}")
    return float(series[t])


def load_media_series(path: str | Path) -> np.ndarray:
    """Read ``week,volume`` CSV, fill missing weeks with 0, scale max to 1.

    An all-zero series stays all zero.
    """
    weeks, vols = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["week", "volume"]:
            raise MediaSeriesError(f"{path}: expected header week,volume")
        for row in reader:
            try:
                w, v = int(row["week"]), float(row["volume"])
            except (TypeError, ValueError) as exc:
                raise MediaSeriesError(f"{path}: line {reader.line_num}: {exc}") from None
            if w < 0:
                raise MediaSeriesError(f"{path}: line {reader.line_num}: negative week {w}")
            if v < 0 or not np.isfinite(v):
                raise MediaSeriesError(f"{path}: line {reader.line_num}: invalid volume {v}")
            weeks.append(w)
            vols.append(v)
    if not weeks:
        return np.zeros(0)
    if len(set(weeks)) != len(weeks):
        raise MediaSeriesError(f"{path}: duplicate week")
    series = np.zeros(max(weeks) + 1)
    series[weeks] = vols
    peak = series.max()
    return series / peak if peak > 0 else series


def save_media_series(path: str | Path, series) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("week,volume\n")
        for w, v in enumerate(series):
            fh.write(f"{w},{float(v)!r}\n")
