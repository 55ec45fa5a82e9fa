"""Simulation outputs: single-run traces and replication ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(eq=False)
class AdoptionTrace:
    """Weekly record of one run.

    Row ``w`` of every series is week ``w``: week 0 holds the seeds, week
    ``w >= 1`` the adoptions produced by step ``w - 1``. ``media_series[w]``
    is the volume used in that step (0 for week 0).
    """

    new_adopters_by_week: np.ndarray
    new_adopters_by_city_week: np.ndarray
    media_series: np.ndarray
    adoption_week: np.ndarray
    city_ids: np.ndarray
    agent_city: np.ndarray
    seed: int = 0

    @property
    def horizon(self) -> int:
        return len(self.new_adopters_by_week) - 1

    @property
    def n_agents(self) -> int:
        return len(self.adoption_week)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.new_adopters_by_week)

    @property
    def city_cumulative(self) -> np.ndarray:
        return np.cumsum(self.new_adopters_by_city_week, axis=1)

    @property
    def final_adopters(self) -> int:
        return int(self.new_adopters_by_week.sum())

    def check(self) -> None:
        """Assert the internal consistency of the recorded series."""
        if not np.array_equal(self.new_adopters_by_city_week.sum(axis=0), self.new_adopters_by_week):
            raise AssertionError("city matrix columns do not sum to the global series")
        if np.any(self.new_adopters_by_week < 0) or self.cumulative[-1] > self.n_agents:
            raise AssertionError("cumulative adopters out of range")
        if np.any((self.media_series < 0) | (self.media_series > 1)):
            raise AssertionError("media volume outside [0, 1]")
        adopted = self.adoption_week[self.adoption_week >= 0]
        counts = np.bincount(adopted, minlength=self.horizon + 1)
        if not np.array_equal(counts, self.new_adopters_by_week):
            raise AssertionError("per-agent adoption weeks disagree with weekly counts")

    def to_bytes(self) -> bytes:
        """Canonical byte form used for determinism comparisons."""
        return b"".join(
            np.ascontiguousarray(a, dtype=np.float64 if a.dtype.kind == "f" else np.int64).tobytes()
            for a in (self.new_adopters_by_week, self.new_adopters_by_city_week, self.media_series, self.adoption_week)
        )

    def write_csv(self, global_path: str | Path, city_path: str | Path | None = None) -> None:
        cum = self.cumulative
        with open(global_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("week,new_adopters,cumulative,media_volume\n")
            for w in range(self.horizon + 1):
                fh.write(f"{w},{self.new_adopters_by_week[w]},{cum[w]},{float(self.media_series[w])!r}\n")
        if city_path is not None:
            with open(city_path, "w", encoding="utf-8", newline="") as fh:
                fh.write("week,city_id,new_adopters\n")
                mat = self.new_adopters_by_city_week
                for w in range(self.horizon + 1):
                    for row, cid in enumerate(self.city_ids):
                        fh.write(f"{w},{cid},{mat[row, w]}\n")


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {
        "week": data[:, 0].astype(int),
        "new_adopters": data[:, 1].astype(int),
        "cumulative": data[:, 2].astype(int),
        "media_volume": data[:, 3],
    }


@dataclass(eq=False)
class ReplicationEnsemble:
    traces: list[AdoptionTrace] = field(default_factory=list)
    failure_count: int = 0
    failures: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.traces)

    def check(self) -> None:
        if not self.traces:
            return
        T = self.traces[0].horizon
        ids = self.traces[0].city_ids
        for tr in self.traces:
            if tr.horizon != T or not np.array_equal(tr.city_ids, ids):
                raise AssertionError("traces do not share horizon and city set")

    def cumulative_matrix(self) -> np.ndarray:
        """(runs, weeks) array of cumulative adopters."""
        return np.vstack([t.cumulative for t in self.traces])

    def mean_cumulative(self) -> np.ndarray:
        return self.cumulative_matrix().mean(axis=0)

    def mean_new(self) -> np.ndarray:
        return np.vstack([t.new_adopters_by_week for t in self.traces]).mean(axis=0)
