"""Exact SI outcome enumeration for tiny graphs.

Independent of the engine: walks every subset of new infections per week
and multiplies the per-agent probabilities in rational arithmetic, so the
results are exact. Only usable for a handful of nodes.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(repr(float(x)))


def step_distribution(n, adj, infected_mask, betas, media_p):
    """Map next-week infected mask -> probability from one synchronous step."""
    sus = [i for i in range(n) if not infected_mask >> i & 1]
    p_inf = []
    for i in sus:
        m = sum(1 for j in adj[i] if infected_mask >> j & 1)
        p_inf.append(1 - (1 - betas[i]) ** m * (1 - media_p))
    out = {}
    for outcome in product((0, 1), repeat=len(sus)):
        prob = Fraction(1)
        mask = infected_mask
        for i, hit, p in zip(sus, outcome, p_inf):
            prob *= p if hit else 1 - p
            if hit:
                mask |= 1 << i
        if prob:
            out[mask] = out.get(mask, 0) + prob
    return out


def infection_marginals(n, edges, seeds, betas, media_p, steps):
    """Exact P(agent i infected after week w) for w = 0..steps, as Fractions."""
    betas = [_q(b) for b in betas]
    media_p = _q(media_p)
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    start = 0
    for s in seeds:
        start |= 1 << s
    dist = {start: Fraction(1)}
    marginals = [[Fraction(start >> i & 1) for i in range(n)]]
    for _ in range(steps):
        nxt = {}
        for mask, pm in dist.items():
            for m2, pt in step_distribution(n, adj, mask, betas, media_p).items():
                nxt[m2] = nxt.get(m2, 0) + pm * pt
        dist = nxt
        marginals.append([sum((p for m, p in dist.items() if m >> i & 1), Fraction(0)) for i in range(n)])
    return marginals
