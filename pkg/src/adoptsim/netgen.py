"""Social network generation and early-adopter connectivity measures.

Networks are built by stub matching. Each agent draws a Poisson number of
stubs. A share of every Early agent's stubs is reserved for an Early-only
pool, the rest go to a common pool, and each pool is paired off stub by
stub. When the network is geographically biased the partner of a stub is
drawn in proportion to a distance kernel between the two home cities.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .geo import AgentPopulation, CityTable, distance_matrix, place_agents

log = logging.getLogger(__name__)

R_MIN_KM = 1.0
MAX_RETRIES = 100
GIANT_THRESHOLD = 0.95


class GenerationError(RuntimeError):
    """Stub matching could not produce the requested network."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UndefinedMeasureError(ValueError):
    pass


@dataclass(frozen=True)
class NetGenParams:
    mean_degree: float = 7.0
    gamma: float = 1.2
    nu_km: float = 1000.0
    homophily_target: float = 0.0
    geo_biased: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if not self.mean_degree > 0:
            raise ValueError(f"mean_degree must be > 0, got {self.mean_degree}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.nu_km > 0:
            raise ValueError(f"nu_km must be > 0, got {self.nu_km}")
        if not 0.0 <= self.homophily_target <= 1.0:
            raise ValueError(f"homophily_target must be in [0, 1], got {self.homophily_target}")


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected simple graph in CSR form with sorted neighbour lists."""

    indptr: np.ndarray
    indices: np.ndarray
    agents: AgentPopulation
    params: NetGenParams | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """(E, 2) array of edges with src < dst, sorted."""
        src = np.repeat(np.arange(self.n), self.degree)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    @classmethod
    def from_edges(cls, n: int, edges, agents: AgentPopulation, params=None, diagnostics=None) -> "Network":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(indptr, dst.astype(np.int64), agents, params, diagnostics or {})

    def check(self) -> None:
        """Full-scan assertion of symmetry, simplicity and sorted rows."""
        n, indptr, idx = self.n, self.indptr, self.indices
        src = np.repeat(np.arange(n), np.diff(indptr))
        if np.any(src == idx):
            raise AssertionError("self-loop present")
        # rows sorted strictly ascending => no multi-edges
        same_row = src[1:] == src[:-1]
        if np.any(idx[1:][same_row] <= idx[:-1][same_row]):
            raise AssertionError("neighbour lists not strictly ascending")
        fwd = src * n + idx
        rev = idx * n + src
        if not np.array_equal(np.sort(fwd), np.sort(rev)):
            raise AssertionError("adjacency not symmetric")

    def save_edgelist(self, path: str | Path, metadata: dict | None = None) -> Path:
        """Write ``src,dst`` CSV and a ``.meta.json`` sidecar next to it."""
        path = Path(path)
        e = self.edges()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("src,dst\n")
            np.savetxt(fh, e, fmt="%d", delimiter=",")
        meta = {"n": self.n, "n_edges": self.n_edges, "diagnostics": self.diagnostics}
        if self.params is not None:
            meta["params"] = asdict(self.params)
        meta.update(metadata or {})
        sidecar = path.with_suffix(path.suffix + ".meta.json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))
        return sidecar


def load_edgelist(path: str | Path, agents: AgentPopulation) -> Network:
    e = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return Network.from_edges(agents.n, e, agents)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def sample_degrees(n: int, mean_degree: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Poisson degrees; one entry is bumped by 1 if the total is odd."""
    if n < 1:
        raise ValueError("n must be >= 1")
    deg = rng.poisson(mean_degree, size=n).astype(np.int64)
    if deg.sum() % 2:
        deg[rng.integers(n)] += 1
    return deg


def kernel_weight(r, gamma: float, nu_km: float, r_min: float = R_MIN_KM):
    """Truncated power-law friendship weight.

    ``max(r, r_min) ** -gamma`` below ``nu_km`` and the constant
    ``nu_km ** -gamma`` at or beyond it.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    w = np.where(r < nu_km, np.maximum(r, r_min) ** -gamma, nu_km ** -gamma)
    return w if w.ndim else float(w)


def ingroup_probability(homophily_target: float, early_stub_share: float) -> float:
    """Chance that an Early stub is reserved for the Early-only pool.

    Chosen so that under uniform mixing the expected share of an Early
    agent's partners who are Early equals ``homophily_target``: reserved
    stubs always meet Early partners, the rest meet Early stubs in
    proportion to their share of the common pool. Targets below the
    random-mixing level map to 0.
    """
    e = early_stub_share
    h = homophily_target
    if e <= 0.0 or h <= e:
        return 0.0
    if h >= 1.0 or e >= 1.0:
        return 1.0
    # 1 - q = (1-h)(1-e) / (1 - 2e + h e)
    return 1.0 - (1.0 - h) * (1.0 - e) / (1.0 - 2.0 * e + h * e)


@numba.njit(cache=True)
def _match_pool(stub_owner, stub_city, order, weights, node_city, adj, adj_start, adj_len, seed, max_retries):
    """Pair the stubs of one pool; returns (#edges added, #stubs discarded).

    Stubs live in per-city buckets; picking a partner draws a city with
    probability proportional to weight * remaining stubs, then a stub
    uniformly inside it.
    """
    np.random.seed(seed)
    n_cities = weights.shape[0]
    n_stubs = stub_owner.shape[0]
    cnt = np.zeros(n_cities, np.int64)
    for s in range(n_stubs):
        cnt[stub_city[s]] += 1
    off = np.zeros(n_cities + 1, np.int64)
    for c in range(n_cities):
        off[c + 1] = off[c] + cnt[c]
    bucket = np.empty(n_stubs, np.int64)
    pos = np.empty(n_stubs, np.int64)
    fill = off[:-1].copy()
    for s in range(n_stubs):
        c = stub_city[s]
        bucket[fill[c]] = s
        pos[s] = fill[c]
        fill[c] += 1
    alive = np.ones(n_stubs, np.bool_)
    cw = np.empty(n_cities, np.float64)
    added = 0
    discarded = 0

    for k in range(n_stubs):
        s = order[k]
        if not alive[s]:
            continue
        # take s out of its bucket
        c = stub_city[s]
        last = bucket[off[c] + cnt[c] - 1]
        bucket[pos[s]] = last
        pos[last] = pos[s]
        cnt[c] -= 1
        alive[s] = False
        u = stub_owner[s]
        cu = node_city[u]

        total = 0.0
        for c2 in range(n_cities):
            total += weights[cu, c2] * cnt[c2]
            cw[c2] = total
        if total <= 0.0:
            discarded += 1
            continue

        matched = False
        for _ in range(max_retries):
            x = np.random.random() * total
            lo = 0
            hi = n_cities - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if cw[mid] > x:
                    hi = mid
                else:
                    lo = mid + 1
            c2 = lo
            t = bucket[off[c2] + np.random.randint(cnt[c2])]
            v = stub_owner[t]
            if v == u:
                continue
            dup = False
            for j in range(adj_start[u], adj_start[u] + adj_len[u]):
                if adj[j] == v:
                    dup = True
                    break
            if dup:
                continue
            last = bucket[off[c2] + cnt[c2] - 1]
            bucket[pos[t]] = last
            pos[last] = pos[t]
            cnt[c2] -= 1
            alive[t] = False
            adj[adj_start[u] + adj_len[u]] = v
            adj_len[u] += 1
            adj[adj_start[v] + adj_len[v]] = u
            adj_len[v] += 1
            added += 1
            matched = True
            break
        if not matched:
            discarded += 1
    return added, discarded


def _discard_budget(pool_size: int) -> float:
    return max(2.0, 0.05 * pool_size)


def build_network(pop: AgentPopulation, cities: CityTable, p: NetGenParams) -> Network:
    """Generate a simple undirected network over ``pop``.

    Raises GenerationError when a pool cannot be paired off, e.g. an
    Early-only pool whose stubs all belong to one agent.
    """
    if len(cities) != pop.n_cities:
        raise ValueError("population was placed over a different city table")
    rng = np.random.default_rng(p.rng_seed)
    n = pop.n
    deg = sample_degrees(n, p.mean_degree, rng)

    owner = np.repeat(np.arange(n, dtype=np.int64), deg)
    early_stub = pop.early[owner]
    n_early_stubs = int(early_stub.sum())
    e_share = n_early_stubs / len(owner) if len(owner) else 0.0
    q = ingroup_probability(p.homophily_target, e_share)
    reserved = early_stub & (rng.random(len(owner)) < q)

    if p.geo_biased:
        weights = kernel_weight(distance_matrix(cities), p.gamma, p.nu_km)
    else:
        weights = np.ones((len(cities), len(cities)))
    weights = np.ascontiguousarray(weights, dtype=np.float64)

    adj = np.empty(len(owner), dtype=np.int64)
    adj_start = np.concatenate([[0], np.cumsum(deg)[:-1]]).astype(np.int64)
    adj_len = np.zeros(n, dtype=np.int64)
    node_city = pop.city.astype(np.int64)

    usable = np.ones(len(owner), dtype=bool)
    dropped = 0
    if reserved.sum() % 2:
        # even up the Early-only pool without letting a reserved stub meet a Regular one
        spare = np.flatnonzero(early_stub & ~reserved)
        if len(spare):
            reserved[spare[rng.integers(len(spare))]] = True
        else:
            usable[np.flatnonzero(reserved)[rng.integers(reserved.sum())]] = False
            common = np.flatnonzero(~reserved)
            if len(common):
                usable[common[rng.integers(len(common))]] = False
            dropped = int((~usable).sum())

    diag = {"q_ingroup": q, "early_stub_share": e_share, "stubs": int(len(owner)), "parity_dropped": dropped}
    pools = (("early_pool", owner[reserved & usable]), ("common_pool", owner[~reserved & usable]))
    for name, stubs in pools:
        order = rng.permutation(len(stubs)).astype(np.int64)
        added, lost = _match_pool(
            stubs, node_city[stubs], order, weights, node_city,
            adj, adj_start, adj_len, int(rng.integers(2**31 - 1)), MAX_RETRIES,
        )
        diag[f"{name}_stubs"] = int(len(stubs))
        diag[f"{name}_edges"] = int(added)
        diag[f"{name}_discarded"] = int(lost)
        if lost > _discard_budget(len(stubs)):
            raise GenerationError(
                f"{name}: {lost} of {len(stubs)} stubs could not be matched "
                f"(homophily_target={p.homophily_target}, early agents={int(pop.early.sum())})",
                diag,
            )

    src = np.repeat(np.arange(n, dtype=np.int64), adj_len)
    first = np.cumsum(adj_len) - adj_len
    take = np.repeat(adj_start, adj_len) + np.arange(len(src)) - np.repeat(first, adj_len)
    dst = adj[take]
    keep = src < dst
    edges = np.column_stack([src[keep], dst[keep]])
    net = Network.from_edges(n, edges, pop, p, diag)
    return net


def measure_homophily(net: Network) -> float:
    """Mean share of Early neighbours over Early agents with degree >= 1."""
    early = net.agents.early
    deg = net.degree
    src = np.repeat(np.arange(net.n), deg)
    early_nb = np.bincount(src, weights=early[net.indices], minlength=net.n)
    sel = early & (deg > 0)
    if not sel.any():
        raise UndefinedMeasureError("no Early agent with degree >= 1")
    return float(np.mean(early_nb[sel] / deg[sel]))


class UnionFind:
    """Disjoint sets over 0..n-1 with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def largest(self) -> int:
        return max((self.size[r] for r in range(len(self.parent)) if self.parent[r] == r), default=0)


def early_giant_component(net: Network) -> float:
    """Largest component of the Early-induced subgraph over #Early agents."""
    early = net.agents.early
    ids = np.flatnonzero(early)
    if len(ids) == 0:
        raise UndefinedMeasureError("no Early agents")
    local = np.full(net.n, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    e = net.edges()
    ee = e[early[e[:, 0]] & early[e[:, 1]]]
    uf = UnionFind(len(ids))
    for a, b in local[ee].tolist():
        uf.union(a, b)
    return uf.largest() / len(ids)


@dataclass(frozen=True)
class CurveRow:
    h: float
    geo_biased: bool
    mean_gc: float
    se_gc: float
    mean_homophily: float
    n_ok: int
    n_failed: int
    errors: tuple[str, ...] = ()


def _curve_cell(args):
    cities, p, n_networks = args
    gcs, homs, errors = [], [], []
    for i in range(n_networks):
        seed = p.rng_seed + i
        try:
            pop = place_agents(cities, seed)
            net = build_network(pop, cities, replace(p, rng_seed=seed))
            net.check()
            gcs.append(early_giant_component(net))
            homs.append(measure_homophily(net))
        except (GenerationError, UndefinedMeasureError) as exc:
            errors.append(f"network {i}: {exc}")
    gcs = np.asarray(gcs)
    return CurveRow(
        h=p.homophily_target,
        geo_biased=p.geo_biased,
        mean_gc=float(gcs.mean()) if len(gcs) else float("nan"),
        se_gc=float(gcs.std(ddof=1) / np.sqrt(len(gcs))) if len(gcs) > 1 else float("nan"),
        mean_homophily=float(np.mean(homs)) if homs else float("nan"),
        n_ok=len(gcs),
        n_failed=len(errors),
        errors=tuple(errors),
    )


def component_curve(
    cities: CityTable,
    p: NetGenParams,
    h_grid: Sequence[float],
    n_networks: int,
    jobs: int = 1,
) -> list[CurveRow]:
    """Mean Early giant-component fraction per (h, geo_biased) cell.

    Network ``i`` of every cell uses seed ``p.rng_seed + i`` for both agent
    placement and wiring, so cells share populations.
    """
    if not len(h_grid):
        raise ValueError("h_grid must be non-empty")
    cells = [
        (cities, replace(p, homophily_target=float(h), geo_biased=biased), n_networks)
        for h in h_grid
        for biased in (True, False)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_curve_cell, cells))
    return [_curve_cell(c) for c in cells]


def giant_threshold(rows: Sequence[CurveRow], geo_biased: bool, level: float = GIANT_THRESHOLD) -> float | None:
    """Smallest h whose mean GC fraction reaches ``level``, or None."""
    hs = sorted(r.h for r in rows if r.geo_biased == geo_biased and r.mean_gc >= level)
    return hs[0] if hs else None
