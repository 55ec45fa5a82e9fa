"""Discrete-time SI contagion with word-of-mouth and media channels.

Every week each susceptible agent ``i`` with ``m_i`` infected neighbours
stays susceptible with probability ``(1 - beta_i) ** m_i * (1 - alpha * M)``
where ``beta_i`` is ``beta_e`` for Early agents and ``beta_r`` otherwise.
Updates are synchronous: agents infected during week ``t`` start
transmitting in week ``t + 1``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numba
import numpy as np

from .geo import CityTable, place_agents
from .media import MediaMode, MediaParams, endogenous_volume, exogenous_volume, media_prob
from .netgen import NetGenParams, Network, build_network
from .trace import AdoptionTrace, ReplicationEnsemble

log = logging.getLogger(__name__)

DEFAULT_SEED_COUNT = 10


class SeedingError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSpec:
    """Who is infected at week 0.

    Exactly one of ``cities`` (pairs of city id and count), ``fraction`` or
    ``agents`` may be given. With none of them, ``origin_count`` agents are
    seeded in the first city of the table.
    """

    cities: tuple[tuple[int, int], ...] = ()
    fraction: float | None = None
    agents: tuple[int, ...] = ()
    origin_count: int = DEFAULT_SEED_COUNT

    def __post_init__(self):
        given = sum([bool(self.cities), self.fraction is not None, bool(self.agents)])
        if given > 1:
            raise ValueError("seed spec takes only one of cities, fraction, agents")
        if self.fraction is not None and not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"seed fraction must be in [0, 1], got {self.fraction}")
        if any(c < 0 for _, c in self.cities) or self.origin_count < 0:
            raise ValueError("seed counts must be >= 0")

    def __str__(self) -> str:
        if self.cities:
            return "cities:" + ",".join(f"{cid}={k}" for cid, k in self.cities)
        if self.fraction is not None:
            return f"fraction:{self.fraction!r}"
        if self.agents:
            return "agents:" + ",".join(map(str, self.agents))
        return f"origin:{self.origin_count}"

    @classmethod
    def parse(cls, text: str) -> "SeedSpec":
        kind, _, body = text.strip().partition(":")
        kind = kind.strip().lower()
        try:
            if kind == "cities":
                pairs = []
                for item in body.split(","):
                    cid, _, k = item.partition("=")
                    pairs.append((int(cid), int(k)))
                return cls(cities=tuple(pairs))
            if kind == "fraction":
                return cls(fraction=float(body))
            if kind == "agents":
                return cls(agents=tuple(int(a) for a in body.split(",")))
            if kind == "origin":
                return cls(origin_count=int(body))
        except ValueError as exc:
            raise ValueError(f"bad seed spec {text!r}: {exc}") from None
        raise ValueError(f"bad seed spec {text!r}: unknown kind {kind!r}")


@dataclass(frozen=True)
class SimParams:
    beta_r: float = 0.05
    ratio_R: float = 1.0
    alpha: float = 0.0
    horizon_T: int = 100
    seed_spec: SeedSpec = field(default_factory=SeedSpec)
    media_mode: MediaMode = MediaMode.NONE
    shock_scale: float = 0.0
    activation_fraction: float = 0.135
    media_exponent: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "media_mode", MediaMode(self.media_mode))
        if not 0.0 <= self.beta_r <= 1.0:
            raise ValueError(f"beta_r must be in [0, 1], got {self.beta_r}")
        if self.ratio_R < 1.0:
            raise ValueError(f"ratio_R must be >= 1, got {self.ratio_R}")
        if self.beta_e > 1.0 + 1e-12:
            raise ValueError(f"beta_e = ratio_R * beta_r = {self.beta_e} exceeds 1")
        if self.horizon_T < 1:
            raise ValueError(f"horizon_T must be >= 1, got {self.horizon_T}")
        # remaining media checks live in MediaParams
        self.media_params

    @property
    def beta_e(self) -> float:
        return self.ratio_R * self.beta_r

    @property
    def media_params(self) -> MediaParams:
        return MediaParams(
            mode=self.media_mode,
            alpha=self.alpha,
            shock_scale=self.shock_scale,
            activation_fraction=self.activation_fraction,
            exponent=self.media_exponent,
        )


@dataclass
class SimState:
    week: int
    infected: np.ndarray
    adoption_week: np.ndarray
    infected_neighbors: np.ndarray
    I_count: int = 0
    media_volume: float = 0.0

    @classmethod
    def empty(cls, n: int) -> "SimState":
        return cls(
            week=0,
            infected=np.zeros(n, dtype=bool),
            adoption_week=np.full(n, -1, dtype=np.int64),
            infected_neighbors=np.zeros(n, dtype=np.int64),
        )

    @property
    def S_count(self) -> int:
        return len(self.infected) - self.I_count

    def check(self) -> None:
        n = len(self.infected)
        popcount = int(self.infected.sum())
        if popcount != self.I_count or self.S_count + self.I_count != n:
            raise AssertionError(f"conservation broken at week {self.week}: S+I != N")
        if not np.array_equal(self.adoption_week >= 0, self.infected):
            raise AssertionError("adoption_week set for a susceptible agent or missing")
        if not 0.0 <= self.media_volume <= 1.0:
            raise AssertionError(f"media volume {self.media_volume} outside [0, 1]")


def _seed_rngs(seed: int) -> tuple[np.random.Generator, ...]:
    """Independent streams for seeding, word-of-mouth draws and media shocks.

    Keeping the word-of-mouth stream separate lets runs that differ only in
    their media settings share random numbers.
    """
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def _infect(state: SimState, net: Network, agents: np.ndarray, week: int) -> None:
    state.infected[agents] = True
    state.adoption_week[agents] = week
    state.I_count += len(agents)
    starts = net.indptr[agents]
    lens = net.indptr[agents + 1] - starts
    first = np.cumsum(lens) - lens
    take = np.repeat(starts - first, lens) + np.arange(lens.sum())
    state.infected_neighbors += np.bincount(net.indices[take], minlength=net.n)


def seed_infection(state: SimState, net: Network, spec: SeedSpec, rng: np.random.Generator) -> SimState:
    """Infect the week-0 seeds in place and return the state.

    City seeds are drawn from the city's susceptible Early agents first,
    then its Regular agents, uniformly within each group.
    """
    pop = net.agents
    chosen: list[np.ndarray] = []
    if spec.fraction is not None:
        k = int(round(spec.fraction * pop.n))
        pool = np.flatnonzero(~state.infected)
        if k > len(pool):
            raise SeedingError(f"cannot seed {k} agents, only {len(pool)} susceptible")
        chosen.append(rng.choice(pool, size=k, replace=False))
    elif spec.agents:
        ids = np.asarray(spec.agents, dtype=np.int64)
        if np.any((ids < 0) | (ids >= pop.n)):
            raise SeedingError("seed agent id out of range")
        chosen.append(np.unique(ids))
    else:
        requests: dict[int, int] = {}
        for city_id, count in spec.cities or ((int(pop.city_ids[0]), spec.origin_count),):
            requests[city_id] = requests.get(city_id, 0) + count
        for city_id, count in requests.items():
            row = pop.row_of(city_id)
            members = pop.city_members(row)
            members = members[~state.infected[members]]
            early = members[pop.early[members]]
            regular = members[~pop.early[members]]
            if count > len(members):
                raise SeedingError(
                    f"city {city_id}: requested {count} seeds, only {len(members)} susceptible agents"
                )
            take_e = min(count, len(early))
            picks = [rng.choice(early, size=take_e, replace=False)]
            if count > take_e:
                picks.append(rng.choice(regular, size=count - take_e, replace=False))
            chosen.append(np.concatenate(picks))
    agents = np.unique(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
    agents = agents[~state.infected[agents]]
    _infect(state, net, agents.astype(np.int64), state.week)
    return state


@numba.njit(cache=True)
def _step_kernel(indptr, indices, infected, adoption_week, nbr, log_stay, media_stay, u, week_next, new_buf):
    n = infected.shape[0]
    n_new = 0
    for i in range(n):
        if infected[i]:
            continue
        m = nbr[i]
        if m == 0 and media_stay >= 1.0:
            continue
        stay = media_stay
        if m > 0:
            stay *= np.exp(m * log_stay[i])
        if u[i] >= stay:
            new_buf[n_new] = i
            n_new += 1
    for k in range(n_new):
        i = new_buf[k]
        infected[i] = True
        adoption_week[i] = week_next
        for j in range(indptr[i], indptr[i + 1]):
            nbr[indices[j]] += 1
    return n_new


def _log_stay(net: Network, p: SimParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(net.agents.early, np.log1p(-p.beta_e), np.log1p(-p.beta_r))


def _advance(state, net, log_stay, alpha, M, rng, buf):
    if not 0.0 <= M <= 1.0:
        raise AssertionError(f"media volume {M} outside [0, 1]")
    u = rng.random(net.n)
    media_stay = 1.0 - media_prob(alpha, M)
    n_new = _step_kernel(
        net.indptr, net.indices, state.infected, state.adoption_week, state.infected_neighbors,
        log_stay, media_stay, u, state.week + 1, buf,
    )
    state.week += 1
    state.I_count += int(n_new)
    state.media_volume = M
    return buf[:n_new]


def step(state: SimState, net: Network, p: SimParams, M: float, rng: np.random.Generator) -> tuple[SimState, int]:
    """Advance one week in place; returns the state and the new-infection count."""
    buf = np.empty(net.n, dtype=np.int64)
    new = _advance(state, net, _log_stay(net, p), p.alpha, M, rng, buf)
    state.check()
    return state, len(new)


def run(net: Network, p: SimParams, media_input: Sequence[float] | None = None, check: bool = True) -> AdoptionTrace:
    """Seed, then step ``horizon_T`` weeks.

    ``check`` asserts the state invariants after every step.
    """
    mode = p.media_mode
    if (mode is MediaMode.EXOGENOUS) != (media_input is not None):
        raise ValueError("media_input must be given exactly when media_mode is exogenous")
    if media_input is not None:
        media_input = np.asarray(media_input, dtype=float)
        if len(media_input) < p.horizon_T:
            raise ValueError(f"media series has {len(media_input)} weeks, horizon is {p.horizon_T}")
        if np.any((media_input < 0) | (media_input > 1)):
            raise ValueError("media series must lie in [0, 1]")

    pop = net.agents
    n, T, L = pop.n, p.horizon_T, pop.n_cities
    seed_rng, wom_rng, media_rng = _seed_rngs(p.rng_seed)
    state = SimState.empty(n)
    seed_infection(state, net, p.seed_spec, seed_rng)

    new_by_week = np.zeros(T + 1, dtype=np.int64)
    by_city = np.zeros((L, T + 1), dtype=np.int64)
    media = np.zeros(T + 1)
    seeds = np.flatnonzero(state.infected)
    new_by_week[0] = len(seeds)
    by_city[:, 0] = np.bincount(pop.city[seeds], minlength=L)
    if check:
        state.check()

    log_stay = _log_stay(net, p)
    buf = np.empty(n, dtype=np.int64)
    I_hist = [state.I_count]
    activation = p.activation_fraction * n
    for t in range(T):
        if mode is MediaMode.EXOGENOUS:
            M = exogenous_volume(media_input, t)
        elif mode is MediaMode.ENDOGENOUS:
            I_prev = I_hist[t - 1] if t >= 1 else 0
            M = endogenous_volume(
                I_prev, n, I_prev >= activation, p.shock_scale, media_rng, p.media_exponent
            )
        else:
            M = 0.0
        new = _advance(state, net, log_stay, p.alpha, M, wom_rng, buf)
        if check:
            state.check()
        new_by_week[t + 1] = len(new)
        by_city[:, t + 1] = np.bincount(pop.city[new], minlength=L)
        media[t + 1] = M
        I_hist.append(state.I_count)

    trace = AdoptionTrace(
        new_by_week, by_city, media, state.adoption_week.copy(), pop.city_ids, pop.city, p.rng_seed
    )
    if check:
        trace.check()
    return trace


@dataclass(frozen=True)
class NetworkRecipe:
    """Generate a fresh population and network per replication.

    Run ``i`` uses seed ``netgen.rng_seed + i`` for placement and wiring.
    """

    cities: CityTable
    netgen: NetGenParams

    def build(self, index: int) -> Network:
        seed = self.netgen.rng_seed + index
        pop = place_agents(self.cities, seed)
        return build_network(pop, self.cities, replace(self.netgen, rng_seed=seed))


_worker_source = None


def _init_worker(source):
    global _worker_source
    _worker_source = source


def _one_run(args):
    source, p, media_input, index, check = args
    source = source if source is not None else _worker_source
    try:
        net = source.build(index) if isinstance(source, NetworkRecipe) else source
        if check and isinstance(source, NetworkRecipe):
            net.check()
        return index, run(net, replace(p, rng_seed=p.rng_seed + index), media_input, check=check), None
    except AssertionError:
        raise
    except Exception as exc:  # a failed replication is recorded, not fatal
        return index, None, f"run {index}: {type(exc).__name__}: {exc}"


def run_replications(
    source: Network | NetworkRecipe,
    p: SimParams,
    n_runs: int,
    media_input: Sequence[float] | None = None,
    jobs: int = 1,
    check: bool = True,
) -> ReplicationEnsemble:
    """``n_runs`` independent runs with seeds ``p.rng_seed + run_index``.

    A fixed Network is shared read-only by every run; a NetworkRecipe
    builds a fresh one per run.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if jobs > 1:
        tasks = [(None, p, media_input, i, check) for i in range(n_runs)]
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(source,)) as ex:
            results = list(ex.map(_one_run, tasks, chunksize=max(1, n_runs // (4 * jobs))))
    else:
        results = [_one_run((source, p, media_input, i, check)) for i in range(n_runs)]
    ens = ReplicationEnsemble()
    for _, trace, err in sorted(results, key=lambda r: r[0]):
        if trace is None:
            ens.failure_count += 1
            ens.failures.append(err)
            log.warning(err)
        else:
            ens.traces.append(trace)
    ens.check()
    return ens
