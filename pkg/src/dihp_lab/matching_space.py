"""Labeled matchings on k-universes: enumeration, sampling, restrictions,
globality, pseudo-uniformity and the internal/boundary vertex statistics.

A labeled matching is a sorted tuple of (edge, label) pairs, where an edge is a
k-tuple whose j-th entry lies in part j and a label is a k-tuple over Z_N. The
nil map is the empty tuple. A restriction is the same object with fewer edges.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import CapExceeded, DomainError
from .util import Interval, derive_seed, wilson

OMEGA_CAP = 2 ** 20
PARTIAL_CAP = 2 ** 16


@dataclass(frozen=True)
class KUniverse:
    parts: tuple  # k tuples of ground elements

    def __post_init__(self):
        sizes = {len(p) for p in self.parts}
        if len(sizes) != 1:
            raise DomainError("universe parts must have equal sizes")
        flat = [g for p in self.parts for g in p]
        if len(set(flat)) != len(flat):
            raise DomainError("universe parts must be pairwise disjoint")

    @property
    def k(self):
        return len(self.parts)

    @property
    def size(self):
        return len(self.parts[0])

    def elements(self):
        return tuple(g for p in self.parts for g in p)

    def is_edge(self, e):
        return len(e) == self.k and all(e[j] in self.parts[j] for j in range(self.k))


def universe(*parts) -> KUniverse:
    return KUniverse(tuple(tuple(p) for p in parts))


def count_matchings(U: KUniverse, m: int) -> int:
    if not 0 <= m <= U.size:
        raise DomainError(f"m={m} outside [0, {U.size}]")
    return math.comb(U.size, m) ** U.k * math.factorial(m) ** (U.k - 1)


def omega_size(U: KUniverse, m: int, N: int) -> int:
    return count_matchings(U, m) * N ** (U.k * m)


def enumerate_matchings(U: KUniverse, m: int, cap: int = OMEGA_CAP):
    """All m-edge matchings, each a tuple of edges sorted by first coordinate."""
    total = count_matchings(U, m)
    if total > cap:
        raise CapExceeded("matching enumeration", total, cap)
    out = []
    for firsts in itertools.combinations(U.parts[0], m):
        for rest in itertools.product(*(itertools.permutations(p, m) for p in U.parts[1:])):
            out.append(tuple(sorted(tuple([firsts[i]] + [r[i] for r in rest]) for i in range(m))))
    return out


def labels(N: int, k: int):
    return list(itertools.product(range(N), repeat=k))


def enumerate_labeled(U: KUniverse, m: int, N: int, cap: int = OMEGA_CAP):
    total = omega_size(U, m, N)
    if total > cap:
        raise CapExceeded("labeled matching enumeration", total, cap)
    labs = labels(N, U.k)
    out = []
    for M in enumerate_matchings(U, m, cap):
        for lab in itertools.product(labs, repeat=m):
            out.append(tuple(zip(M, lab)))
    return out


def sample_matching(U: KUniverse, m: int, rng):
    """Uniform m-edge matching; rng is a random.Random."""
    firsts = rng.sample(U.parts[0], m)
    rest = [rng.sample(p, m) for p in U.parts[1:]]
    return tuple(sorted(tuple([firsts[i]] + [r[i] for r in rest]) for i in range(m)))


def sample_labeled(U: KUniverse, m: int, N: int, rng):
    M = sample_matching(U, m, rng)
    return tuple((e, tuple(rng.randrange(N) for _ in range(U.k))) for e in M)


def support(y):
    return tuple(e for e, _ in y)


def make_labeled(pairs):
    """Normalise a collection of (edge, label) pairs into canonical form."""
    out = tuple(sorted((tuple(e), tuple(l)) for e, l in pairs))
    verts = [v for e, _ in out for v in e]
    if len(set(verts)) != len(verts):
        raise DomainError("support is not a matching")
    return out


def is_matching(edges) -> bool:
    verts = [v for e in edges for v in e]
    return len(set(verts)) == len(verts)


def subsumes(z_new, z_old) -> bool:
    """True when z_new extends z_old: larger support, same labels on supp(z_old)."""
    return set(z_old) <= set(z_new)


def agrees(y, z) -> bool:
    return set(z) <= set(y)


def subtract(U: KUniverse, z) -> KUniverse:
    """Remove the j-th vertex of every edge of supp(z) from part j."""
    used = [set() for _ in range(U.k)]
    for e, _ in z:
        if not U.is_edge(e):
            raise DomainError(f"{e} is not an edge of the universe")
        for j, v in enumerate(e):
            used[j].add(v)
    return KUniverse(tuple(tuple(v for v in p if v not in used[j]) for j, p in enumerate(U.parts)))


def restricted_size(U: KUniverse, m: int, z, N: int) -> int:
    if len(z) > m:
        raise DomainError("restriction has more edges than m")
    if not is_matching(support(z)):
        raise DomainError("restriction support is not a matching")
    r = m - len(z)
    return count_matchings(subtract(U, z), r) * N ** (U.k * r)


def enumerate_restricted(U: KUniverse, m: int, z, N: int, cap: int = OMEGA_CAP):
    """All y in Omega^{U,m} agreeing with z."""
    rest = enumerate_labeled(subtract(U, z), m - len(z), N, cap)
    return [make_labeled(tuple(z) + y) for y in rest]


def is_global(A, z, U: KUniverse, m: int, N: int, cap: int = OMEGA_CAP) -> bool:
    return global_violation(A, z, U, m, N, cap) is None


def global_violation(A, z, U: KUniverse, m: int, N: int, cap: int = OMEGA_CAP):
    """First restriction z' witnessing non-globality of A, or None.

    Only z' with A meeting Omega_{z'} need checking: otherwise the left side is 0.
    """
    total = omega_size(U, m, N)
    if total > cap:
        raise CapExceeded("globality check", total, cap)
    A = set(A)
    if not A:
        return None
    zset = set(z)
    counts = {}
    for y in A:
        if not zset <= set(y):
            raise DomainError("A is not contained in Omega_z")
        free = [p for p in y if p not in zset]
        for r in range(len(free) + 1):
            for S in itertools.combinations(free, r):
                counts[S] = counts.get(S, 0) + 1
    base = restricted_size(U, m, z, N)
    for S, c in sorted(counts.items()):
        z2 = make_labeled(tuple(z) + S)
        # c/|Omega_z2| <= 2^|S| |A|/|Omega_z|
        if c * base > (2 ** len(S)) * len(A) * restricted_size(U, m, z2, N):
            return z2
    return None


def partial_matchings_contained(M):
    for r in range(len(M) + 1):
        for S in itertools.combinations(M, r):
            yield S


def is_pseudo_uniform(D: dict, U: KUniverse, m: int) -> bool:
    """D maps matchings (tuples of edges) to probabilities."""
    partial = sum(count_matchings(U, d) for d in range(m + 1))
    if partial > PARTIAL_CAP:
        raise CapExceeded("partial matching enumeration", partial, PARTIAL_CAP)
    total = count_matchings(U, m)
    contain = {}
    for M, p in D.items():
        if p:
            for S in partial_matchings_contained(tuple(sorted(M))):
                contain[S] = contain.get(S, Fraction(0)) + Fraction(p)
    for S, p in contain.items():
        d = len(S)
        unif = Fraction(count_matchings(subtract(U, [(e, ()) for e in S]), m - d), total)
        if p > 2 ** d * unif:
            return False
    return True


def support_distribution(A):
    D = {}
    for y in A:
        M = support(y)
        D[M] = D.get(M, Fraction(0)) + Fraction(1, len(A))
    return D


def containment_bound(k: int, m: int, u: int, extra: int) -> Fraction:
    """(6^k m / |U|^k)^extra, the edge-containment envelope for global sets."""
    return Fraction(6 ** k * m, u ** k) ** extra


def internal_boundary(M, zvec: dict):
    """Counts (|in|, |bd|) of support vertices of z relative to the matching M.

    zvec maps ground elements to nonzero Z_N values (its support).
    """
    n_in = n_bd = 0
    for e in M:
        hits = sum(1 for v in e if zvec.get(v, 0))
        if hits == 1:
            n_bd += 1
        elif hits >= 2:
            n_in += hits
    return n_in, n_bd


def q_bound(k: int, t: int, i: int, b: int, m: int, u: int) -> float:
    """(24k^2)^t (i m/|U|^2)^{i/2} (m/|U|)^b with 0^0 = 1."""
    out = float(24 * k * k) ** t
    out *= (i * m / u ** 2) ** (i / 2) if i else 1.0
    out *= (m / u) ** b if b else 1.0
    return out


def exact_q(U: KUniverse, m: int, zvec: dict, i: int, b: int, D=None) -> Fraction:
    if D is None:
        Ms = enumerate_matchings(U, m)
        D = {M: Fraction(1, len(Ms)) for M in Ms}
    tot = Fraction(0)
    for M, p in D.items():
        if internal_boundary(M, zvec) == (i, b):
            tot += p
    return tot


@dataclass(frozen=True)
class QEstimate:
    interval: Interval
    bound: float
    t: int
    i: int
    b: int

    def within(self, sigmas=3.0) -> bool:
        iv = wilson(self.interval.successes, self.interval.trials, z=sigmas)
        return iv.low <= self.bound


def estimate_q(U: KUniverse, m: int, zvec: dict, i: int, b: int, trials: int, seed: int, sampler=None) -> QEstimate:
    """Monte Carlo estimate of Pr[|in| = i and |bd| = b] with a Wilson interval.

    Trial r draws its matching from an independent stream derived from (seed, r),
    so the result does not depend on evaluation order. `sampler(rng)` overrides
    the default uniform matching law.
    """
    import random

    t = sum(1 for v in zvec if zvec[v])
    if i + b > t:
        raise DomainError("i + b cannot exceed the support size of z")
    hits = 0
    for r in range(trials):
        rng = random.Random(derive_seed(seed, r))
        M = sampler(rng) if sampler else sample_matching(U, m, rng)
        if internal_boundary(M, zvec) == (i, b):
            hits += 1
    return QEstimate(wilson(hits, trials), q_bound(U.k, t, i, b, m, U.size), t, i, b)


def labeled_to_json(y):
    return [[list(e), list(l)] for e, l in y]


def labeled_from_json(d):
    return make_labeled((tuple(e), tuple(l)) for e, l in d)
