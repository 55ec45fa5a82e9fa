"""Adopter classes, critical mass, ensemble bands and the mean-field SI curve."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trace import AdoptionTrace, ReplicationEnsemble

CRITICAL_MASS_FRACTION = 0.135
BAND_LEVELS = (0.75, 0.95)


class AdopterClass(str, Enum):
    EARLY_ADOPTER = "early_adopter"
    EARLY_MAJORITY = "early_majority"
    LATE_MAJORITY = "late_majority"
    LAGGARD = "laggard"


CLASS_ORDER = tuple(AdopterClass)


def classify_adopters(times: Sequence[float]) -> list[AdopterClass]:
    """Label adoption times by their position relative to mean +/- 1 sd.

    Uses the population standard deviation. Intervals are
    ``t < mu - sd``, ``mu - sd <= t <= mu``, ``mu < t <= mu + sd`` and
    ``t > mu + sd``, so with sd = 0 everyone is early majority.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two adoption times")
    mu = t.mean()
    sd = t.std()
    codes = np.select([t < mu - sd, t <= mu, t <= mu + sd], [0, 1, 2], default=3)
    return [CLASS_ORDER[c] for c in codes]


def class_fractions(labels: Iterable[AdopterClass]) -> dict[AdopterClass, float]:
    labels = list(labels)
    n = len(labels)
    return {c: sum(1 for x in labels if x is c) / n for c in CLASS_ORDER}


def city_composition(
    city_of: Sequence[int], times: Sequence[float], cities: Sequence[int] | None = None
) -> dict[int, dict[AdopterClass, float] | None]:
    """Per-city shares of each adopter class.

    Classes come from the global time distribution. Cities listed in
    ``cities`` that have no adopters map to None.
    """
    city_of = np.asarray(city_of)
    labels = np.array([CLASS_ORDER.index(c) for c in classify_adopters(times)])
    keys = sorted(set(city_of.tolist()) | set(cities or ()))
    out: dict[int, dict[AdopterClass, float] | None] = {}
    for c in keys:
        mine = labels[city_of == c]
        if mine.size == 0:
            out[c] = None
            continue
        counts = np.bincount(mine, minlength=4)
        out[c] = {cls: counts[i] / mine.size for i, cls in enumerate(CLASS_ORDER)}
    return out


def trace_composition(trace: AdoptionTrace) -> dict[int, dict[AdopterClass, float] | None]:
    """city_composition of one simulated run, keyed by city id."""
    adopted = trace.adoption_week >= 0
    if adopted.sum() < 2:
        return {int(cid): None for cid in trace.city_ids}
    comp = city_composition(
        trace.agent_city[adopted], trace.adoption_week[adopted], range(len(trace.city_ids))
    )
    return {int(trace.city_ids[row]): v for row, v in comp.items()}


def critical_mass_time(
    cumulative: Sequence[int],
    final_count: int,
    fraction: float = CRITICAL_MASS_FRACTION,
    start_week: int = 0,
) -> int:
    """First week whose cumulative count reaches ``fraction * final_count``.

    ``cumulative[i]`` is the count at week ``start_week + i``. The
    comparison is exact in rational arithmetic, so 27 of 200 meets 13.5%.
    """
    if final_count < 1:
        raise ValueError("final_count must be >= 1")
    frac = Fraction(repr(float(fraction)))
    target = frac * final_count
    for i, c in enumerate(cumulative):
        if c >= target:
            return start_week + i
    raise ValueError("cumulative series never reaches the critical-mass threshold")


def city_critical_mass_weeks(trace: AdoptionTrace, fraction: float = CRITICAL_MASS_FRACTION) -> np.ndarray:
    """Critical-mass week per city row; NaN for cities without adopters."""
    cum = trace.city_cumulative
    out = np.full(cum.shape[0], np.nan)
    for row in range(cum.shape[0]):
        final = int(cum[row, -1])
        if final >= 1:
            out[row] = critical_mass_time(cum[row], final, fraction)
    return out


def nearest_rank(sorted_values: np.ndarray, p: float) -> np.ndarray:
    """Nearest-rank quantile along axis 0 of an already sorted array."""
    n = sorted_values.shape[0]
    rank = max(1, math.ceil(Fraction(repr(float(p))) * n))
    return sorted_values[min(rank, n) - 1]


@dataclass(frozen=True)
class Bands:
    mean: np.ndarray
    lo: dict[float, np.ndarray]
    hi: dict[float, np.ndarray]

    def write_csv(self, path: str | Path) -> None:
        levels = sorted(self.lo)
        header = ["week", "mean"]
        for lv in levels:
            tag = int(round(lv * 100))
            header += [f"lo{tag}", f"hi{tag}"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for w in range(len(self.mean)):
                row = [str(w), repr(float(self.mean[w]))]
                for lv in levels:
                    row += [repr(float(self.lo[lv][w])), repr(float(self.hi[lv][w]))]
                fh.write(",".join(row) + "\n")


def ensemble_bands(ens: ReplicationEnsemble | np.ndarray, levels: Sequence[float] = BAND_LEVELS) -> Bands:
    """Per-week mean and central nearest-rank intervals of cumulative counts.

    Accepts an ensemble or a (runs, weeks) array.
    """
    data = ens.cumulative_matrix() if isinstance(ens, ReplicationEnsemble) else np.asarray(ens, dtype=float)
    if data.shape[0] < 2:
        raise ValueError("bands need at least two traces")
    s = np.sort(data, axis=0)
    lo, hi = {}, {}
    for lv in levels:
        lo[lv] = nearest_rank(s, (1 - lv) / 2)
        hi[lv] = nearest_rank(s, (1 + lv) / 2)
    return Bands(data.mean(axis=0), lo, hi)


def si_meanfield(beta: float, mean_degree: float, N: int, I0: float, T: int) -> np.ndarray:
    """Discrete-time mean-field SI curve ``I(0..T)``.

    ``I(t+1) = I(t) + (N - I(t)) * (1 - (1 - beta) ** (k * I(t) / N))``.
    """
    I = np.empty(T + 1)
    I[0] = I0
    for t in range(T):
        I[t + 1] = I[t] + (N - I[t]) * (1.0 - (1.0 - beta) ** (mean_degree * I[t] / N))
    return I


def crossing_week(curve: Sequence[float], level: float) -> float:
    """Linearly interpolated week at which ``curve`` first reaches ``level``."""
    c = np.asarray(curve, dtype=float)
    hit = np.flatnonzero(c >= level)
    if hit.size == 0:
        return float("nan")
    w = int(hit[0])
    if w == 0 or c[w] == c[w - 1]:
        return float(w)
    return (w - 1) + (level - c[w - 1]) / (c[w] - c[w - 1])


def half_adoption_week(cumulative: Sequence[float], N: float) -> float:
    return crossing_week(cumulative, N / 2)


def moving_average(x: Sequence[float], window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if window <= 1:
        return x
    pad = window // 2
    padded = np.pad(x, pad, mode="edge")
    return np.convolve(padded, np.ones(window) / window, mode="valid")[: len(x)]


def count_peaks(weekly: Sequence[float], window: int = 5, rel_tol: float = 0.01) -> int:
    """Number of rises-then-falls in the smoothed weekly series.

    Slopes smaller than ``rel_tol`` of the series maximum are treated as
    flat so tail noise does not count as a peak.
    """
    y = moving_average(weekly, window)
    if y.max() <= 0:
        return 0
    d = np.diff(y)
    signs = np.sign(np.where(np.abs(d) < rel_tol * y.max(), 0.0, d))
    signs = signs[signs != 0]
    return int(np.sum((signs[:-1] > 0) & (signs[1:] < 0)))


def is_s_shaped(cumulative: Sequence[float], window: int = 5) -> bool:
    """A cumulative curve is S-shaped when its weekly increments have one peak."""
    weekly = np.diff(np.asarray(cumulative, dtype=float))
    return count_peaks(weekly, window) == 1
