"""City tables, great-circle distances and agent placement."""

from __future__ import annotations

import csv
from decimal import ROUND_HALF_UP, Decimal
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0

CITY_COLUMNS = ("id", "name", "lat", "lon", "n_agents", "frac_early")


class CityTableError(ValueError):
    """Raised when a city table fails to parse or validate."""


class AdopterType(IntEnum):
    REGULAR = 0
    EARLY = 1


@dataclass(frozen=True)
class City:
    id: int
    name: str
    lat: float
    lon: float
    n_agents: int
    frac_early: float

    def validate(self) -> None:
        if self.n_agents < 0:
            raise CityTableError(f"city {self.id}: n_agents must be >= 0, got {self.n_agents}")
        if not 0.0 <= self.frac_early <= 1.0:
            raise CityTableError(
                f"city {self.id}: frac_early must be in [0, 1], got {self.frac_early}"
            )
        if not -90.0 <= self.lat <= 90.0:
            raise CityTableError(f"city {self.id}: lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise CityTableError(f"city {self.id}: lon out of range: {self.lon}")


class CityTable(Sequence[City]):
    """Validated, ordered collection of cities.

    Cities keep their file order; ``index_of`` maps a city id to its row,
    which is the city index used everywhere else in the package.
    """

    def __init__(self, cities: Iterable[City]):
        self._cities = tuple(cities)
        self._index: dict[int, int] = {}
        for row, city in enumerate(self._cities):
            city.validate()
            if city.id in self._index:
                raise CityTableError(f"duplicate city id {city.id}")
            self._index[city.id] = row

    def __getitem__(self, i):
        return self._cities[i]

    def __len__(self) -> int:
        return len(self._cities)

    def __eq__(self, other) -> bool:
        return isinstance(other, CityTable) and self._cities == other._cities

    def __repr__(self) -> str:
        return f"CityTable(L={len(self)}, N={self.total_agents})"

    @property
    def total_agents(self) -> int:
        return sum(c.n_agents for c in self._cities)

    @property
    def ids(self) -> np.ndarray:
        return np.array([c.id for c in self._cities], dtype=np.int64)

    def index_of(self, city_id: int) -> int:
        try:
            return self._index[city_id]
        except KeyError:
            raise KeyError(f"unknown city id {city_id}") from None

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        lat = np.array([c.lat for c in self._cities], dtype=float)
        lon = np.array([c.lon for c in self._cities], dtype=float)
        return lat, lon

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CITY_COLUMNS)
            for c in self._cities:
                writer.writerow([c.id, c.name, repr(c.lat), repr(c.lon), c.n_agents, repr(c.frac_early)])


def load_cities(path: str | Path) -> CityTable:
    """Read a ``id,name,lat,lon,n_agents,frac_early`` CSV into a CityTable.

    Parse failures name the offending line (the header is line 1).
    """
    cities = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CityTableError(f"{path}: missing header") from None
        if tuple(h.strip() for h in header) != CITY_COLUMNS:
            raise CityTableError(f"{path}: line 1: expected header {','.join(CITY_COLUMNS)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CITY_COLUMNS):
                raise CityTableError(
                    f"{path}: line {lineno}: expected {len(CITY_COLUMNS)} fields, got {len(row)}"
                )
            try:
                city = City(
                    id=int(row[0]),
                    name=row[1],
                    lat=float(row[2]),
                    lon=float(row[3]),
                    n_agents=int(row[4]),
                    frac_early=float(row[5]),
                )
            except ValueError as exc:
                raise CityTableError(f"{path}: line {lineno}: {exc}") from None
            cities.append(city)
    return CityTable(cities)


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km; accepts scalars or broadcastable arrays."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance_km(a: City, b: City) -> float:
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def distance_matrix(cities: CityTable) -> np.ndarray:
    """L x L city distances in km, exactly symmetric with a zero diagonal."""
    lat, lon = cities.coords()
    d = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


def early_count(n_agents: int, frac_early: float) -> int:
    """Round-half-up number of Early agents in a city.

    Uses the decimal repr of ``frac_early`` so 0.35 * 10 rounds to 4.
    """
    exact = Decimal(repr(float(frac_early))) * n_agents
    return min(n_agents, int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP)))


@dataclass(frozen=True)
class AgentPopulation:
    """Agents 0..N-1 with their home city index and adopter type.

    ``city`` holds row indices into the CityTable; ``city_ids`` maps a row
    back to the table's city id.
    """

    city: np.ndarray
    early: np.ndarray
    city_ids: np.ndarray

    @property
    def n_cities(self) -> int:
        return len(self.city_ids)

    @property
    def n(self) -> int:
        return len(self.city)

    @property
    def adopter_type(self) -> np.ndarray:
        return np.where(self.early, AdopterType.EARLY, AdopterType.REGULAR)

    def city_members(self, city_index: int) -> np.ndarray:
        return np.flatnonzero(self.city == city_index)

    def row_of(self, city_id: int) -> int:
        rows = np.flatnonzero(self.city_ids == city_id)
        if len(rows) == 0:
            raise KeyError(f"unknown city id {city_id}")
        return int(rows[0])

    @classmethod
    def single_city(cls, early) -> "AgentPopulation":
        """Everyone in one city with id 0; handy for hand-built graphs."""
        early = np.asarray(early, dtype=bool)
        return cls(np.zeros(len(early), dtype=np.int64), early, np.array([0], dtype=np.int64))

    def city_sizes(self) -> np.ndarray:
        return np.bincount(self.city, minlength=self.n_cities)


def place_agents(cities: CityTable, rng_seed: int) -> AgentPopulation:
    """Assign every agent to a city and a type.

    Agents are numbered city by city in table order. Within each city the
    Early agents are a uniformly random subset of size
    ``round_half_up(frac_early * n_agents)``.
    """
    n = cities.total_agents
    if n < 1:
        raise ValueError("place_agents needs at least one agent")
    rng = np.random.default_rng(rng_seed)
    city = np.repeat(np.arange(len(cities), dtype=np.int64), [c.n_agents for c in cities])
    early = np.zeros(n, dtype=bool)
    start = 0
    for c in cities:
        k = early_count(c.n_agents, c.frac_early)
        if k:
            early[start + rng.choice(c.n_agents, size=k, replace=False)] = True
        start += c.n_agents
    return AgentPopulation(city=city, early=early, city_ids=cities.ids)


def uniform_cities(
    n_cities: int,
    agents_per_city: int,
    frac_early: float | Sequence[float] = 0.0,
    seed: int = 0,
    lat_range: tuple[float, float] = (25.0, 49.0),
    lon_range: tuple[float, float] = (-124.0, -67.0),
) -> CityTable:
    """Synthetic table of equally sized cities scattered over a lat/lon box.

    Defaults cover the contiguous United States. ``frac_early`` is either a
    scalar or one value per city.
    """
    rng = np.random.default_rng(seed)
    lat = rng.uniform(*lat_range, size=n_cities)
    lon = rng.uniform(*lon_range, size=n_cities)
    fe = np.broadcast_to(np.asarray(frac_early, dtype=float), (n_cities,))
    return CityTable(
        City(i, f"city{i}", round(float(lat[i]), 4), round(float(lon[i]), 4), agents_per_city, float(fe[i]))
        for i in range(n_cities)
    )


def log_gradient(n: int, lo: float, hi: float) -> list[float]:
    """``n`` values spaced evenly in log between ``lo`` and ``hi``."""
    return [float(v) for v in np.geomspace(lo, hi, n)]


def hub_cities(
    n_cities: int,
    agents_per_city: int,
    n_hubs: int,
    hub_frac: float,
    overall_frac: float,
    seed: int = 0,
) -> CityTable:
    """Scattered cities where Early agents concentrate in a few hubs.

    ``n_hubs`` randomly chosen cities get ``hub_frac``; the others share the
    remaining Early agents evenly so the overall share is ``overall_frac``.
    """
    if not 0 < n_hubs < n_cities:
        raise ValueError("need 0 < n_hubs < n_cities")
    base = (overall_frac * n_cities - n_hubs * hub_frac) / (n_cities - n_hubs)
    if base < 0:
        raise ValueError("hubs alone exceed overall_frac")
    rng = np.random.default_rng(seed)
    fe = np.full(n_cities, base)
    fe[rng.choice(n_cities, size=n_hubs, replace=False)] = hub_frac
    return uniform_cities(n_cities, agents_per_city, fe, seed=seed + 1)
