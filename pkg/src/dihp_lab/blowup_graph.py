"""Distribution-labeled k-graphs built from LP solutions, and their blow-up frames."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .csp_core import FiniteDistribution, Instance, check_onewise
from .errors import DomainError
from .lp_relax import LPSolution, lp_residuals
from .util import content_hash, lcm_all


@dataclass(frozen=True)
class DistLabeledGraph:
    vertices: tuple
    edges: tuple  # ordered k-tuples of distinct vertices; a multiset, order preserved
    N: int
    mus: tuple  # one FiniteDistribution over Z_N^k per edge

    def __post_init__(self):
        if self.N < 2:
            raise DomainError(f"modulus N={self.N} is degenerate; a labeled graph needs N >= 2")
        if len(self.edges) != len(self.mus):
            raise DomainError("one distribution per edge is required")
        if not self.edges:
            raise DomainError("graph needs at least one edge")
        vs = set(self.vertices)
        k = len(self.edges[0])
        for i, (e, mu) in enumerate(zip(self.edges, self.mus)):
            if len(e) != k or len(set(e)) != k or any(v not in vs for v in e):
                raise DomainError(f"edge {i} = {e} is not a k-tuple of distinct graph vertices")
            if mu.q != self.N or mu.k != k:
                raise DomainError(f"distribution on edge {i} does not live on Z_N^k")
            if not check_onewise(mu):
                raise DomainError(f"distribution on edge {i} is not one-wise independent")

    @property
    def k(self):
        return len(self.edges[0])

    def to_json(self):
        return {"vertices": list(self.vertices), "edges": [list(e) for e in self.edges], "N": self.N,
                "mus": [mu.to_json()["mass"] for mu in self.mus]}

    @classmethod
    def from_json(cls, d):
        k = len(d["edges"][0])
        mus = tuple(FiniteDistribution.from_json({"q": d["N"], "k": k, "mass": m}) for m in d["mus"])
        return cls(tuple(d["vertices"]), tuple(tuple(e) for e in d["edges"]), d["N"], mus)

    def content_hash(self):
        return content_hash(self.to_json())


def interval_partition(x: dict, variables, q, N, order=None):
    """I[v][s] = contiguous block of Z_N of size x[v,s]*N, blocks laid out in `order` (default 0..q-1)."""
    order = list(range(q)) if order is None else list(order)
    parts = {}
    for v in variables:
        start = 0
        parts[v] = {}
        for s in order:
            size = x[(v, s)] * N
            if size.denominator != 1:
                raise DomainError(f"x[{v},{s}]*N is not integral")
            parts[v][s] = tuple(range(start, start + int(size)))
            start += int(size)
        if start != N:
            raise DomainError(f"blocks of {v} do not cover Z_N")
    return parts


def reduce_to_graph(inst: Instance, sol: LPSolution, block_order=None) -> DistLabeledGraph:
    bad = lp_residuals(inst, sol)
    if bad:
        raise DomainError(f"solution is not feasible for the LP: {bad[0]}")
    q, k = inst.q, inst.k
    N = lcm_all(p.denominator for p in sol.x.values())
    parts = interval_partition(sol.x, inst.variables, q, N, block_order)
    mus = []
    for i, (tup, _) in enumerate(inst.constraints):
        table = {}
        for b in itertools.product(range(q), repeat=k):
            p = sol.z.get((i, b), Fraction(0))
            if not p:
                continue
            blocks = [parts[tup[j]][b[j]] for j in range(k)]
            size = 1
            for blk in blocks:
                size *= len(blk)
            share = p / size
            for u in itertools.product(*blocks):
                table[u] = table.get(u, Fraction(0)) + share
        mus.append(FiniteDistribution.from_dict(N, k, table))
    return DistLabeledGraph(tuple(inst.variables), tuple(t for t, _ in inst.constraints), N, tuple(mus))


def satisfying_mass(inst: Instance, sol: LPSolution, G: DistLabeledGraph, i: int, block_order=None) -> Fraction:
    """Mass mu_i gives to tuples decoding (through the blocks) to an accepting b."""
    parts = interval_partition(sol.x, inst.variables, inst.q, G.N, block_order)
    tup = inst.constraints[i][0]
    decode = [{u: s for s, blk in parts[v].items() for u in blk} for v in tup]
    f = inst.predicate(i)
    return sum((p for u, p in G.mus[i].mass if f(tuple(decode[j][c] for j, c in enumerate(u)))), Fraction(0))


@dataclass(frozen=True)
class BlowupFrame:
    """Ground set V x [n]; element (v, t) has integer id index(v)*n + t."""

    vertices: tuple
    n: int
    edges: tuple

    @property
    def size(self):
        return len(self.vertices) * self.n

    def ground(self):
        return [(v, t) for v in self.vertices for t in range(self.n)]

    def cloud(self, v):
        base = self.vertices.index(v) * self.n
        return tuple(range(base, base + self.n))

    def universe(self, e_idx):
        """The k-universe of edge e: part j is the cloud of the edge's j-th vertex."""
        return tuple(self.cloud(v) for v in self.edges[e_idx])

    def universe_elements(self, e_idx):
        return tuple(g for part in self.universe(e_idx) for g in part)


def build_frame(G: DistLabeledGraph, n: int) -> BlowupFrame:
    if n < 1:
        raise DomainError("blow-up factor must be at least 1")
    return BlowupFrame(tuple(G.vertices), n, tuple(G.edges))


def project(frame: BlowupFrame, e_idx: int, x):
    """Restriction of a ground-set vector to the k-universe of edge e (parts in order)."""
    if len(x) != frame.size:
        raise DomainError(f"vector has length {len(x)}, ground set has {frame.size}")
    return tuple(x[g] for g in frame.universe_elements(e_idx))
