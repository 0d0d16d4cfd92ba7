"""The hidden-partition communication game: kernels, yes/no laws, protocols, advantage."""
from __future__ import annotations

import bisect
import csv
import functools
import io
import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .blowup_graph import DistLabeledGraph, build_frame
from .csp_core import FiniteDistribution
from .errors import CapExceeded, ContractError, DomainError
from .matching_space import (KUniverse, count_matchings, enumerate_labeled, enumerate_matchings, labels,
                             omega_size, sample_labeled, sample_matching)
from .util import content_hash, derive_seed, frac_str, wilson

EXACT_CAP = 2 ** 26
OPERATOR_CAP = 2 ** 22


@functools.lru_cache(maxsize=None)
def mass_table(mu: FiniteDistribution) -> dict:
    return dict(mu.mass)


@functools.lru_cache(maxsize=None)
def _sampler_table(mu: FiniteDistribution):
    den = math.lcm(*(p.denominator for _, p in mu.mass))
    pts, cum, acc = [], [], 0
    for pt, p in mu.mass:
        acc += int(p * den)
        pts.append(pt)
        cum.append(acc)
    return pts, cum, den


def sample_mu(mu: FiniteDistribution, rng):
    """Exact draw from mu using integer weights."""
    pts, cum, den = _sampler_table(mu)
    return pts[bisect.bisect_right(cum, rng.randrange(den))]


def diff(a, b, N):
    return tuple((u - v) % N for u, v in zip(a, b))


def restrict(x, e):
    return tuple(x[g] for g in e)


def kernel_P_mass(U: KUniverse, m: int, mu: FiniteDistribution, x, y) -> Fraction:
    """P(x, y) = |M_{U,m}|^{-1} prod_{e in supp y} mu(x|e - y(e)); x is indexable by ground element."""
    if len(y) != m:
        raise DomainError(f"y has {len(y)} edges, the space needs {m}")
    tab = mass_table(mu)
    N = mu.q
    p = Fraction(1, count_matchings(U, m))
    for e, lab in y:
        if not U.is_edge(e) or len(lab) != U.k:
            raise DomainError(f"labeled edge {(e, lab)} does not fit the universe")
        w = tab.get(diff(restrict(x, e), lab, N))
        if w is None:
            return Fraction(0)
        p *= w
    return p


def kernel_R_mass(M, mu: FiniteDistribution, x, xi) -> Fraction:
    """prod_{e in M} mu(x|e - xi(e)); xi is a dict edge -> label or a tuple aligned with M."""
    if isinstance(xi, dict):
        missing = [e for e in M if e not in xi]
        if missing:
            raise DomainError(f"xi is undefined on edge {missing[0]}")
        labs = [xi[e] for e in M]
    else:
        if len(xi) != len(M):
            raise DomainError("xi must assign a label to every edge of M")
        labs = list(xi)
    tab = mass_table(mu)
    p = Fraction(1)
    for e, lab in zip(M, labs):
        w = tab.get(diff(restrict(x, e), lab, mu.q))
        if w is None:
            return Fraction(0)
        p *= w
    return p


def vectors(elements, N):
    """All x in Z_N^elements, as dicts keyed by element."""
    for vals in itertools.product(range(N), repeat=len(elements)):
        yield dict(zip(elements, vals))


def P_matrix(U: KUniverse, m: int, mu: FiniteDistribution, cap=OPERATOR_CAP):
    """Rows indexed by x in Z_N^{union U} (itertools order), columns by enumerate_labeled."""
    N = mu.q
    elems = U.elements()
    size = N ** len(elems) * omega_size(U, m, N)
    if size > cap:
        raise CapExceeded("kernel matrix", size, cap)
    Y = enumerate_labeled(U, m, N)
    xs = list(vectors(elems, N))
    return xs, Y, [[kernel_P_mass(U, m, mu, x, y) for y in Y] for x in xs]


def apply_P(U: KUniverse, m: int, mu: FiniteDistribution, f, cap=OPERATOR_CAP):
    """f: dict labeled matching -> value (missing = 0). Returns dict (x values tuple) -> value."""
    xs, Y, rows = P_matrix(U, m, mu, cap)
    out = {}
    for x, row in zip(xs, rows):
        out[tuple(x[g] for g in U.elements())] = sum((p * f.get(y, 0) for p, y in zip(row, Y) if p), Fraction(0))
    return out


def map_space(M, N, k):
    """All xi: M -> Z_N^k as tuples of labels aligned with M."""
    return list(itertools.product(labels(N, k), repeat=len(M)))


def apply_R(elements, M, mu: FiniteDistribution, f, cap=OPERATOR_CAP):
    """f: dict xi (tuple aligned with M) -> value. Returns dict (x values over elements) -> value."""
    N, k = mu.q, mu.k
    size = N ** len(elements) * N ** (k * len(M))
    if size > cap:
        raise CapExceeded("R operator", size, cap)
    xis = map_space(M, N, k)
    out = {}
    for x in vectors(elements, N):
        out[tuple(x[g] for g in elements)] = sum(
            (kernel_R_mass(M, mu, x, xi) * f.get(xi, 0) for xi in xis), Fraction(0))
    return out


@dataclass(frozen=True)
class GameSpec:
    G: DistLabeledGraph
    n: int
    alpha: Fraction
    K: int

    def __post_init__(self):
        a = Fraction(self.alpha)
        object.__setattr__(self, "alpha", a)
        if not 0 < a <= 1:
            raise DomainError("alpha must lie in (0, 1]")
        if (a * self.n).denominator != 1 or not 1 <= a * self.n <= self.n:
            raise DomainError(f"alpha*n = {a * self.n} must be an integer in [1, n]")
        if self.K < 1:
            raise DomainError("K must be at least 1")
        object.__setattr__(self, "frame", build_frame(self.G, self.n))

    @property
    def m(self):
        return int(self.alpha * self.n)

    @property
    def N(self):
        return self.G.N

    @property
    def k(self):
        return self.G.k

    @property
    def players(self):
        return [(e, j) for e in range(len(self.G.edges)) for j in range(self.K)]

    def universe(self, e) -> KUniverse:
        return KUniverse(self.frame.universe(e))

    def mu(self, e) -> FiniteDistribution:
        return self.G.mus[e]

    def ground_size(self):
        return self.frame.size

    def to_json(self):
        return {"graph": self.G.to_json(), "n": self.n, "alpha": frac_str(self.alpha), "K": self.K}

    def content_hash(self):
        return content_hash(self.to_json())


def sample_yes(spec: GameSpec, rng):
    """(x, Y): x uniform on the ground set, each player's input drawn from P(proj x, .)."""
    N = spec.N
    x = tuple(rng.randrange(N) for _ in range(spec.ground_size()))
    Y = {}
    for e, j in spec.players:
        mu = spec.mu(e)
        M = sample_matching(spec.universe(e), spec.m, rng)
        Y[(e, j)] = tuple((f, diff(restrict(x, f), sample_mu(mu, rng), N)) for f in M)
    return x, Y


def sample_no(spec: GameSpec, rng):
    return {(e, j): sample_labeled(spec.universe(e), spec.m, spec.N, rng) for e, j in spec.players}


@dataclass
class ExactMasses:
    spaces: list  # per player, the enumerated Omega
    yes: list  # mass per joint input, itertools.product order over spaces
    no: Fraction

    def joint_inputs(self, players):
        for combo in itertools.product(*self.spaces):
            yield dict(zip(players, combo))

    def tv(self) -> Fraction:
        return sum((abs(p - self.no) for p in self.yes), Fraction(0)) / 2


def exact_masses(spec: GameSpec, cap=EXACT_CAP) -> ExactMasses:
    players = spec.players
    sizes = [omega_size(spec.universe(e), spec.m, spec.N) for e, _ in players]
    total = math.prod(sizes) * spec.N ** spec.ground_size()
    if total > cap:
        raise CapExceeded("exact yes/no masses", total, cap)
    spaces = [enumerate_labeled(spec.universe(e), spec.m, spec.N) for e, _ in players]
    joint = math.prod(len(s) for s in spaces)
    yes = [Fraction(0)] * joint
    nx = spec.N ** spec.ground_size()
    for xv in itertools.product(range(spec.N), repeat=spec.ground_size()):
        rows = [[kernel_P_mass(spec.universe(e), spec.m, spec.mu(e), xv, y) for y in sp]
                for (e, _), sp in zip(players, spaces)]
        for idx, combo in enumerate(itertools.product(*rows)):
            p = math.prod(combo, start=Fraction(1))
            if p:
                yes[idx] += p
    yes = [p / nx for p in yes]
    return ExactMasses(spaces, yes, Fraction(1, joint))


class Transcript(list):
    """List of (player, bit string) messages plus referee notes."""

    def __init__(self, *args):
        super().__init__(*args)
        self.notes = []

    def bits(self):
        return sum(len(msg) for _, msg in self)


@dataclass
class Protocol:
    name: str
    schedule: tuple  # player ids, one per round
    messages: tuple  # per round: fn(transcript, own_input) -> bit string
    declared: tuple  # per round: declared message length bound in bits
    output: object  # fn(transcript) -> 0/1

    def __post_init__(self):
        if not (len(self.schedule) == len(self.messages) == len(self.declared)):
            raise DomainError("schedule, message functions and declared costs must align")

    @property
    def cost(self):
        return sum(self.declared)


def run_protocol(proto: Protocol, Y: dict):
    tr = Transcript()
    for r, (player, fn, bound) in enumerate(zip(proto.schedule, proto.messages, proto.declared)):
        if player not in Y:
            raise DomainError(f"input has no entry for player {player}")
        msg = fn(tr, Y[player])
        if not isinstance(msg, str) or msg.strip("01"):
            raise ContractError(f"round {r}: message is not a bit string")
        if len(msg) > bound:
            raise ContractError(f"round {r}: player {player} sent {len(msg)} bits, declared {bound}")
        tr.append((player, msg))
    bit = proto.output(tr)
    if bit not in (0, 1):
        raise ContractError("output function must return 0 or 1")
    return bit, tr


def constant_protocol(bit: int = 1) -> Protocol:
    return Protocol(f"constant{bit}", (), (), (), lambda tr: bit)


def echo_protocol(spec: GameSpec) -> Protocol:
    """Player (0,0) broadcasts the low bit of its first edge's first label coordinate."""
    return Protocol("echo", ((0, 0),), (lambda tr, y: str(y[0][1][0] & 1),), (1,), lambda tr: int(tr[0][1]))


def _width(v):
    return max(1, (v - 1).bit_length())


def likelihood_protocol(spec: GameSpec, masses: ExactMasses = None) -> Protocol:
    """Everyone broadcasts its whole input; the referee answers 1 iff the yes mass beats the no mass."""
    masses = masses or exact_masses(spec)
    players = spec.players
    index = [{y: i for i, y in enumerate(sp)} for sp in masses.spaces]
    widths = [_width(len(sp)) for sp in masses.spaces]
    strides = []
    acc = 1
    for sp in reversed(masses.spaces):
        strides.append(acc)
        acc *= len(sp)
    strides.reverse()

    def sender(p):
        return lambda tr, y: format(index[p][y], f"0{widths[p]}b")

    def output(tr):
        joint = sum(int(msg, 2) * strides[p] for p, (_, msg) in enumerate(tr))
        return int(masses.yes[joint] > masses.no)

    return Protocol("likelihood", tuple(players), tuple(sender(p) for p in range(len(players))),
                    tuple(widths), output)


def _solve_component(cons, N, cap):
    """Backtracking satisfiability for constraints (vertices, allowed tuples). None if over cap."""
    adj = {}
    for c, (vs, _) in enumerate(cons):
        for v in vs:
            adj.setdefault(v, []).append(c)
    start = cons[0][0][0]
    order, seen = [], {start}
    queue = [start]
    while queue:
        v = queue.pop(0)
        order.append(v)
        for c in adj[v]:
            for u in cons[c][0]:
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
    pos = {v: i for i, v in enumerate(order)}
    check_at = [[] for _ in order]
    for vs, allowed in cons:
        check_at[max(pos[v] for v in vs)].append((vs, allowed))
    val = {}
    nodes = [0]

    def go(i):
        if i == len(order):
            return True
        v = order[i]
        for a in range(N):
            nodes[0] += 1
            if nodes[0] > cap:
                raise OverflowError
            val[v] = a
            if all(tuple(val[u] for u in vs) in allowed for vs, allowed in check_at[i]) and go(i + 1):
                return True
        del val[v]
        return False

    try:
        return go(0)
    except OverflowError:
        return None


def cycle_consistency_protocol(spec: GameSpec, schedule=None, search_cap: int = 10 ** 5) -> Protocol:
    """Players broadcast their informative labeled edges; the referee checks that some x explains them.

    An edge is informative when supp(mu_e) is not all of Z_N^k. The referee
    solves each connected component of the union hypergraph by backtracking;
    components needing more than `search_cap` search nodes are skipped and noted.
    """
    N, k, n, m = spec.N, spec.k, spec.n, spec.m
    bn, bN = _width(n), _width(N)
    per_edge = k * (bn + bN)
    full = [len(spec.mu(e).mass) == N ** k for e in range(len(spec.G.edges))]
    clouds = [spec.universe(e).parts for e in range(len(spec.G.edges))]
    schedule = tuple(spec.players) if schedule is None else tuple(schedule)
    if sorted(schedule) != sorted(spec.players):
        raise DomainError("schedule must list every player exactly once")

    def sender(player):
        e = player[0]

        def send(tr, y):
            if full[e]:
                return ""
            parts = clouds[e]
            out = []
            for f, lab in y:
                for j in range(k):
                    out.append(format(f[j] - parts[j][0], f"0{bn}b"))
                    out.append(format(lab[j], f"0{bN}b"))
            return "".join(out)
        return send

    supports = [list(spec.mu(e).support) for e in range(len(spec.G.edges))]

    def output(tr):
        cons = []
        for (e, _), msg in tr:
            parts = clouds[e]
            for s in range(0, len(msg), per_edge):
                chunk, pos, verts, lab = msg[s:s + per_edge], 0, [], []
                for j in range(k):
                    verts.append(parts[j][0] + int(chunk[pos:pos + bn], 2))
                    pos += bn
                    lab.append(int(chunk[pos:pos + bN], 2))
                    pos += bN
                allowed = {tuple((l + w) % N for l, w in zip(lab, wv)) for wv in supports[e]}
                cons.append((tuple(verts), allowed))
        parent = {}

        def find(a):
            while parent.setdefault(a, a) != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for vs, _ in cons:
            r0 = find(vs[0])
            for v in vs[1:]:
                r = find(v)
                if r != r0:
                    parent[r] = r0
        comps = {}
        for c in cons:
            comps.setdefault(find(c[0][0]), []).append(c)
        ok = 1
        for root in sorted(comps):
            res = _solve_component(comps[root], N, search_cap)
            if res is None:
                tr.notes.append(f"component at vertex {root} skipped: search cap {search_cap}")
            elif not res:
                ok = 0
        return ok

    senders = tuple(sender(p) for p in schedule)
    return Protocol("cycle-consistency", schedule, senders, tuple(m * per_edge for _ in schedule), output)


@dataclass
class AdvantageRecord:
    spec_hash: str
    protocol_name: str
    mode: str
    trials: int
    estimate: object
    ci_low: object
    ci_high: object
    seed: object
    extra: dict = field(default_factory=dict)

    def to_json(self):
        def fmt(v):
            return frac_str(v) if isinstance(v, Fraction) else v
        return {"spec_hash": self.spec_hash, "protocol_name": self.protocol_name, "mode": self.mode,
                "trials": self.trials, "estimate": fmt(self.estimate), "ci_low": fmt(self.ci_low),
                "ci_high": fmt(self.ci_high), "seed": self.seed}

    def to_csv(self) -> str:
        buf = io.StringIO()
        row = self.to_json()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def acceptance_rates(proto: Protocol, spec: GameSpec, trials: int, seed: int):
    """(yes accepts, no accepts); trial t of each side uses its own derived stream."""
    acc_yes = acc_no = 0
    for t in range(trials):
        _, Y = sample_yes(spec, random.Random(derive_seed(seed, 0, t)))
        acc_yes += run_protocol(proto, Y)[0]
        acc_no += run_protocol(proto, sample_no(spec, random.Random(derive_seed(seed, 1, t))))[0]
    return acc_yes, acc_no


def advantage(proto: Protocol, spec: GameSpec, mode: str = "exact", trials: int = 0, seed: int = 0,
              masses: ExactMasses = None, z: float = 1.96) -> AdvantageRecord:
    if mode == "exact":
        masses = masses or exact_masses(spec)
        gap = Fraction(0)
        for p_yes, Y in zip(masses.yes, masses.joint_inputs(spec.players)):
            if run_protocol(proto, Y)[0]:
                gap += p_yes - masses.no
        adv = abs(gap)
        return AdvantageRecord(spec.content_hash(), proto.name, "exact", 0, adv, adv, adv, None)
    if mode != "mc":
        raise DomainError(f"unknown mode {mode!r}")
    if trials < 1:
        raise DomainError("Monte Carlo mode needs trials >= 1")
    a, b = acceptance_rates(proto, spec, trials, seed)
    wy, wn = wilson(a, trials, z), wilson(b, trials, z)
    lo, hi = wy.low - wn.high, wy.high - wn.low
    if lo > 0:
        alo, ahi = lo, hi
    elif hi < 0:
        alo, ahi = -hi, -lo
    else:
        alo, ahi = 0.0, max(-lo, hi)
    return AdvantageRecord(spec.content_hash(), proto.name, "mc", trials, abs(a - b) / trials, alo, ahi, seed,
                           {"accept_yes": a, "accept_no": b})
