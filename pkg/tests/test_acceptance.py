"""The twelve acceptance criteria, each at its stated tolerance and time budget.

Every test records a one-line PASS/FAIL summary (printed at the end of the run).
"""
import functools
import itertools
import json
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from dihp_lab import fourier_lab as fl
from dihp_lab import rectangle_lab as rl
from dihp_lab.blowup_graph import reduce_to_graph
from dihp_lab.cli_harness import main as cli_main
from dihp_lab.corpus import load_corpus, load_named
from dihp_lab.csp_core import check_onewise, check_twowise, find_independent_support, max_value
from dihp_lab.dihp_engine import (P_matrix, advantage, apply_R, constant_protocol, cycle_consistency_protocol,
                                  exact_masses, map_space)
from dihp_lab.lp_relax import _LP_CACHE, canonical_value1_solution, lp_solution, lp_value
from dihp_lab.matching_space import (enumerate_labeled, estimate_q, make_labeled, sample_matching, universe)
from dihp_lab.suites import random_global_set, spec_for
from dihp_lab.util import derive_seed, lcm_all

from conftest import ACCEPTANCE_RESULTS


def criterion(number, title, budget):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            status, note = "FAIL", ""
            try:
                note = fn(*args, **kwargs) or ""
                elapsed = time.perf_counter() - t0
                assert elapsed <= budget, f"runtime {elapsed:.1f}s exceeds {budget}s"
                status = "PASS"
            except AssertionError as exc:
                note = str(exc).splitlines()[0] if str(exc) else "assertion failed"
                raise
            finally:
                elapsed = time.perf_counter() - t0
                line = f"criterion {number:2d} {status}: {title} ({elapsed:.1f}s / {budget}s) {note}".rstrip()
                ACCEPTANCE_RESULTS[number] = line
                print(line)
        return run
    return wrap


def one_wise_family(inst):
    return all(find_independent_support(inst.predicate(i), 1) is not None for i in range(inst.m))


# 1 -----------------------------------------------------------------------------------------

@criterion(1, "LP exactness on the bundled corpus", 10)
def test_c01_lp_exactness():
    _LP_CACHE.clear()
    corpus = load_corpus()
    assert len(corpus) >= 20
    ones = 0
    for name, inst in corpus.items():
        assert inst.q in (2, 3) and inst.m <= 6, name
        lp = lp_value(inst)
        assert lp >= max_value(inst), name
        if one_wise_family(inst):
            ones += 1
            assert lp == 1, name
    return f"{len(corpus)} instances, {ones} with one-wise supports"


# 2 -----------------------------------------------------------------------------------------

@criterion(2, "reduction soundness", 5)
def test_c02_reduction_soundness():
    n_graphs = n_two = 0
    for name, inst in load_corpus().items():
        for sol in (lp_solution(inst), canonical_value1_solution(inst)):
            if sol is None or lcm_all(p.denominator for p in sol.x.values()) < 2:
                continue
            G = reduce_to_graph(inst, sol)
            n_graphs += 1
            assert all(check_onewise(mu) for mu in G.mus), name
        sol2 = canonical_value1_solution(inst, 2)
        if sol2 is not None:
            G2 = reduce_to_graph(inst, sol2)
            n_two += 1
            assert all(check_twowise(mu) for mu in G2.mus), name
    assert n_graphs >= 10 and n_two >= 2
    return f"{n_graphs} one-wise reductions, {n_two} two-wise"


# 3 -----------------------------------------------------------------------------------------

def random_fraction_function(keys, rng):
    return {y: Fraction(rng.randrange(-9, 10), rng.randrange(1, 6)) for y in keys}


@criterion(3, "kernel identities", 10)
def test_c03_kernel_identities(maxcut_mu, e3lin_mu):
    rng = random.Random(derive_seed(3, 0))
    spaces = [(maxcut_mu, universe([0, 1], [2, 3]), 1), (maxcut_mu, universe([0, 1, 2], [3, 4, 5]), 2),
              (e3lin_mu, universe([0, 1], [2, 3], [4, 5]), 1)]
    for mu, U, m in spaces:
        xs, Y, rows = P_matrix(U, m, mu)
        assert all(sum(r) == 1 for r in rows)
        nz = [[(j, p) for j, p in enumerate(r) if p] for r in rows]
        for _ in range(100):
            f = [Fraction(rng.randrange(-9, 10), rng.randrange(1, 6)) for _ in Y]
            Pf = [sum((p * f[j] for j, p in r), Fraction(0)) for r in nz]
            assert sum(Pf) / len(Pf) == sum(f) / len(f)
            assert max(map(abs, Pf)) <= max(map(abs, f))
    # the matching-indexed kernel R on a fixed matching
    for mu, M, elems in [(maxcut_mu, [(0, 2), (1, 3)], [0, 1, 2, 3, 4]), (e3lin_mu, [(0, 1, 2)], [0, 1, 2, 3])]:
        xis = map_space(M, mu.q, mu.k)
        for _ in range(100):
            f = random_fraction_function(xis, rng)
            Rf = apply_R(elems, M, mu, f)
            assert sum(Rf.values()) / len(Rf) == sum(f.values()) / len(f)
            assert max(map(abs, Rf.values())) <= max(map(abs, f.values()))
    return "3 P-spaces and 2 R-spaces, 100 functions each"


# 4 -----------------------------------------------------------------------------------------

@criterion(4, "relating yes/no identity on the minimal spec", 60)
def test_c04_relating_yes_no():
    rng = random.Random(derive_seed(4, 0))
    total = 0
    for K in (1, 2):
        spec = spec_for(load_named("maxcut_edge"), 1, Fraction(1), K)
        masses = exact_masses(spec)
        v = rl.verify_relating_yes_no(spec, {}, masses)
        assert v.residual_or_slack == 0 and Fraction(v.detail["lhs"]) == 1
        for _ in range(100):
            R = {p: set(rng.sample(sp, rng.randrange(1, len(sp) + 1))) for p, sp in zip(spec.players, masses.spaces)}
            v = rl.verify_relating_yes_no(spec, R, masses)
            assert v.residual_or_slack == 0, v
            total += 1
    return f"{total} random rectangles, residual exactly 0"


# 5 -----------------------------------------------------------------------------------------

@criterion(5, "separation identity and SVD lemma", 60)
def test_c05_separation_and_svd(maxcut_mu, e3lin_mu):
    rng = random.Random(derive_seed(5, 0))
    spaces = [(maxcut_mu, universe([0, 1], [2, 3]), 1), (maxcut_mu, universe([0, 1, 2], [3, 4, 5]), 2),
              (maxcut_mu, universe([0, 1, 2], [3, 4, 5]), 1), (e3lin_mu, universe([0, 1], [2, 3], [4, 5]), 1)]
    for i in range(100):
        mu, U, m = spaces[i % len(spaces)]
        z = ()
        if m > 1 or rng.random() < 0.5:
            e = tuple(rng.choice(p) for p in U.parts)
            z = make_labeled([(e, tuple(rng.randrange(mu.q) for _ in range(mu.k)))])
        A = random_global_set(U, m, mu.q, z, rng)
        v = rl.verify_separation(U, m, mu, z, A)
        assert v.residual_or_slack == 0, v
    worst = 0.0
    svd_cases = [(maxcut_mu, [(0, 2)], [0, 1, 2, 3]), (maxcut_mu, [(0, 2), (1, 3)], [0, 1, 2, 3, 4]),
                 (e3lin_mu, [(0, 1, 2)], [0, 1, 2, 3, 4]), (e3lin_mu, [(0, 2, 4), (1, 3, 5)], [0, 1, 2, 3, 4, 5])]
    for i in range(100):
        mu, M, lam = svd_cases[i % len(svd_cases)]
        xis = map_space(M, mu.q, mu.k)
        if i % 3 == 0:
            f = {xi: complex(rng.gauss(0, 1), rng.gauss(0, 1)) for xi in xis}
        else:
            sub = rng.sample(xis, rng.randrange(1, len(xis) + 1))
            f = {xi: len(xis) / len(sub) for xi in sub}
        v = rl.verify_svd(lam, M, mu, f)
        worst = max(worst, v.residual_or_slack)
        assert v.passed and v.residual_or_slack <= 1e-10, v
    return f"100 + 100 instantiations, worst SVD residual {worst:.1e}"


# 6 -----------------------------------------------------------------------------------------

GRIDS = [("maxcut_edge", 1), ("maxcut_path3", 1), ("maxcut_triangle", 1), ("maxcut_square", 1),
         ("maxcut_k4", 1), ("maxcut_pentagon", 1), ("e3lin_pair", 2), ("e3lin_four", 2)]
# grids small enough to enumerate every restriction sequence of every size
FULL = {("maxcut_edge", 1), ("maxcut_edge", 2), ("maxcut_path3", 1), ("maxcut_triangle", 1), ("e3lin_pair", 1)}
# grids where only single-edge sequences are enumerated (pairs would exceed the time budget)
SINGLE = {("e3lin_pair", 3), ("e3lin_four", 2)}


@criterion(6, "spectrum vanishing on all grids with |V| n <= 10", 120)
def test_c06_spectrum_vanishing():
    checked = 0
    worst = worst_mean = 0.0
    rng = random.Random(derive_seed(6, 0))

    def check(spec, z):
        nonlocal checked, worst, worst_mean
        v = rl.verify_spectrum_vanishing(spec, z)
        worst = max(worst, v.detail["max_forbidden"])
        worst_mean = max(worst_mean, v.detail["mean_error"])
        assert v.detail["max_forbidden"] <= 1e-10 and v.detail["mean_error"] <= 1e-12, (spec.to_json(), z)
        checked += 1

    for name, order in GRIDS:
        inst = load_named(name)
        for n in range(1, 10 // len(inst.variables) + 1):
            spec = spec_for(inst, n, Fraction(1), 2, order)
            assert spec.N == 2
            depth = 10 ** 6 if (name, n) in FULL else (1 if (name, n) in SINGLE else 2)
            for z in rl.enumerate_zetas(spec, min(depth, len(rl.player_slots(spec)))):
                if not rl.is_cyclic(z, spec.k):
                    check(spec, z)
            for _ in range(40):
                z = rl.random_acyclic_zeta(spec, rng.randrange(3, 8), rng)
                check(spec, z)
    return f"{checked} acyclic sequences, max forbidden {worst:.1e}, max |E g - 1| {worst_mean:.1e}"


# 7 -----------------------------------------------------------------------------------------

def random_fair_zeta(spec, n_edges, rng, max_cover):
    """Random almost-acyclic sequence; overlapping edges (sharing k-1 vertices) are tried on purpose."""
    zeta = {}
    for _ in range(400):
        if sum(len(v) for v in zeta.values()) >= n_edges:
            break
        p = rng.choice(spec.players)
        U = spec.universe(p[0])
        cur = zeta.get(p, ())
        if len(cur) >= spec.m:
            continue
        edges = rl.exposed_edges(zeta)
        if edges and rng.random() < 0.5:
            base = rng.choice(edges)
            j = rng.randrange(spec.k)
            e = tuple(base[i] if i != j or base[i] not in U.parts[i] else rng.choice(U.parts[i]) for i in range(spec.k))
            if not all(e[i] in U.parts[i] for i in range(spec.k)):
                continue
        else:
            e = tuple(rng.choice(part) for part in U.parts)
        if any(v in w for w in rl.support(cur) for v in e):
            continue
        trial = dict(zeta)
        trial[p] = make_labeled(tuple(cur) + ((e, tuple(rng.randrange(spec.N) for _ in range(spec.k))),))
        if rl.zeta_almost_acyclic(trial, spec.k) and rl.cover(rl.exposed_edges(trial)) <= max_cover:
            zeta = trial
    return zeta


@criterion(7, "boundedness certificates for structured densities", 120)
def test_c07_boundedness():
    gamma = 0.25
    rng = random.Random(derive_seed(7, 0))
    one = two = cyclic_two = 0
    for name, inst in load_corpus().items():
        if canonical_value1_solution(inst) is None:
            continue
        for n in (16, 32, 48, 64):
            spec = spec_for(inst, n, Fraction(1, 8), 2)
            cap_vertices = 16 if spec.N == 2 else 10
            for _ in range(2):
                z = {}
                for _ in range(50):
                    cand = rl.random_acyclic_zeta(spec, rng.randrange(1, 5), rng)
                    if rl.weight(cand) <= gamma * n and rl.cover(rl.exposed_edges(cand)) <= cap_vertices:
                        z = cand
                        break
                v = rl.verify_structured_bounded(spec, z, gamma, "onewise")
                assert v.status == "pass", (name, n, z, v)
                one += 1
    for name in ("e3lin_pair", "e3lin_four", "sum3_pair", "sum3_chain"):
        inst = load_named(name)
        for n in (16, 32, 48, 64):
            spec = spec_for(inst, n, Fraction(1, 8), 2, order=2)
            cap_vertices = 16 if spec.N == 2 else 9
            for _ in range(3):
                z = random_fair_zeta(spec, min(int(gamma * n), rng.randrange(1, 6)), rng, cap_vertices)
                v = rl.verify_structured_bounded(spec, z, gamma, "twowise")
                assert v.status == "pass", (name, n, z, v)
                two += 1
                cyclic_two += rl.is_cyclic(z, spec.k)
    assert cyclic_two >= 1
    return f"{one} one-wise and {two} two-wise certificates ({cyclic_two} cyclic but almost-acyclic)"


# 8 -----------------------------------------------------------------------------------------

def subset_rule(N, k, s_star, kind):
    def rule(M, r):
        space = map_space(M, N, k)
        need = math.ceil(len(space) * 2 ** -s_star)
        if kind == "subgroup":
            # labels with coordinate sum 0 on each edge, padded up to the density floor
            sub = [xi for xi in space if all(sum(l) % N == 0 for l in xi)]
            if len(sub) >= need:
                return set(sub)
        return set(r.sample(space, r.randrange(need, len(space) + 1)))
    rule.__name__ = f"{kind}_{s_star}"
    return rule


@criterion(8, "combinatorial bounds", 300)
def test_c08_combinatorics():
    notes = []
    # counting lemma: every multiset of block sizes 2..6 with total <= 14, every l
    cnt = 0
    for r in range(1, 8):
        for sizes in itertools.combinations_with_replacement(range(2, 7), r):
            if sum(sizes) > 14:
                continue
            for l in range(2, sum(sizes) + 1):
                assert rl.check_no_singleton(list(sizes), l).passed, (sizes, l)
                cnt += 1
    notes.append(f"{cnt} counting cases")
    # sum-of-B lemma on every k=3 hypergraph with <= 4 edges on <= 9 vertices
    hs = rl.hypergraph_representatives(3, 4, 9)
    checked = 0
    for H in hs:
        v = rl.check_sigma_B(H, 3, 2)
        assert v.status != "fail", H
        checked += v.passed
    notes.append(f"{checked}/{len(hs)} almost-acyclic hypergraphs")
    # q bound: seeded grid, Monte Carlo with a 3 sigma margin
    rng = random.Random(derive_seed(8, 0))
    for i in range(200):
        k = rng.choice([2, 3])
        size = rng.randrange(3, 9)
        U = universe(*[list(range(j * size, (j + 1) * size)) for j in range(k)])
        m = rng.randrange(1, size + 1)
        sup = rng.sample(range(k * size + 3), rng.randrange(1, 5))
        zvec = {v: 1 for v in sup}
        t = len(zvec)
        ii = rng.randrange(0, t + 1)
        bb = rng.randrange(0, t - ii + 1)
        est = estimate_q(U, m, zvec, ii, bb, 400, derive_seed(8, 1, i))
        assert est.within(3.0), (U.parts, m, zvec, ii, bb, est)
    notes.append("200 q instantiations")
    # transfer bounds: seeded grid over all three regimes
    routes = {}
    for i in range(200):
        k = rng.choice([2, 3])
        N = 2 if k == 3 else rng.choice([2, 3])
        m = 1 if k == 3 else rng.choice([1, 1, 2])
        size = 6 * k * m + rng.choice([0, 0, 6])
        U = universe(*[list(range(j * size, (j + 1) * size)) for j in range(k)])
        lam = list(range(k * size + 2))
        zvec = {v: rng.randrange(1, N) for v in rng.sample(lam, rng.randrange(0, 4))}
        s_star = rng.choice([0.05, 0.25, 1.0, 2.0, 4.0])
        l = rng.randrange(0, 7)
        rule = subset_rule(N, k, s_star, rng.choice(["random", "subgroup"]))
        mode = "exact" if size ** (k - 1) * math.comb(size, m) <= 400 else "mc"
        res = rl.check_transfer_Q(U, m, N, lam, s_star, zvec, rule, l, mode, samples=60, seed=derive_seed(8, 2, i))
        routes[(res.route, res.verdict.status)] = routes.get((res.route, res.verdict.status), 0) + 1
        assert res.verdict.status != "fail", (k, N, m, size, zvec, s_star, l, res)
    assert sum(v for (r, s), v in routes.items() if s == "pass") >= 100
    notes.append("transfer " + ", ".join(f"{r}:{s}={v}" for (r, s), v in sorted(routes.items())))
    return "; ".join(notes)


# 9 -----------------------------------------------------------------------------------------

@criterion(9, "cyclicity oracle equivalence", 60)
def test_c09_cyclicity_equivalence():
    total = 0
    for k, max_v in ((2, 10), (3, 15)):
        for H in rl.hypergraph_representatives(k, 5, max_v):
            assert rl.has_cycle_peeling(H, k) == rl.has_cycle_exhaustive(H, k), (k, H)
            total += 1
    assert total >= 10 ** 4
    return f"{total} hypergraphs"


# 10 ----------------------------------------------------------------------------------------

@criterion(10, "distinguishing experiment", 120)
def test_c10_distinguishing():
    spec = spec_for(load_named("maxcut_edge"), 64, Fraction(1, 8), 8)
    cyc = advantage(cycle_consistency_protocol(spec), spec, "mc", 10 ** 4, 20261016)
    const = advantage(constant_protocol(), spec, "mc", 10 ** 4, 20261016)
    assert cyc.ci_low >= 0.1, cyc.to_json()
    assert const.ci_high <= 0.02, const.to_json()
    return f"cycle advantage {cyc.estimate:.3f} (Wilson low {cyc.ci_low:.3f}), constant high {const.ci_high:.4f}"


# 11 ----------------------------------------------------------------------------------------

@criterion(11, "analytic inequality sweeps", 60)
def test_c11_sweeps():
    rng = np.random.default_rng(derive_seed(11, 0))
    hyper = 0
    while hyper < 10 ** 4:
        N = int(rng.choice([2, 3]))
        L = int(rng.integers(1, 5 if N == 2 else 4))
        d = int(rng.integers(1, L + 1))
        f = fl.low_degree(fl.DenseFunction(N, tuple(range(L)), rng.normal(size=N ** L)), d)
        f = fl.DenseFunction(N, f.labels, f.values.real)
        assert fl.check_hypercontractivity(f, float(rng.uniform(2, 6)), d).passed
        hyper += 1
    level = skipped = 0
    while level < 10 ** 4:
        N = int(rng.choice([2, 3]))
        L = int(rng.integers(3, 7 if N == 2 else 5))
        size = N ** L
        A = rng.choice(size, size=int(rng.integers(1, max(2, size // 4))), replace=False)
        v = np.zeros(size)
        v[A] = rng.uniform(0.5, 2.0, size=len(A))
        f = fl.DenseFunction(N, tuple(range(L)), v)
        d = int(rng.integers(1, L + 1))
        res = fl.check_level_d(f, d)
        if res.status == "skipped":
            skipped += 1
            continue
        assert res.passed, res
        level += 1
    a, b = fl.scalar_inequalities(10 ** 4, rng)
    assert a.passed and b.passed and a.samples >= 10 ** 4
    return f"{hyper} hypercontractive, {level} level-d ({skipped} out of range), {a.samples}+{b.samples} scalar"


# 12 ----------------------------------------------------------------------------------------

@criterion(12, "determinism of the verify manifest", 120)
def test_c12_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli_main(["verify", "--suite", "all", "--seed", "1234", "--out", str(out1)]) == 0
    assert cli_main(["verify", "--suite", "all", "--seed", "1234", "--out", str(out2)]) == 0
    b1 = (out1 / "manifest.json").read_bytes()
    b2 = (out2 / "manifest.json").read_bytes()
    assert b1 == b2
    return f"manifest {len(b1)} bytes, {len(json.loads(b1)['verdicts'])} verdicts, identical"
