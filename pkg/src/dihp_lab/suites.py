"""Verification batteries run by `dihp-lab verify`.

Every battery takes a master seed and returns a list of JSON-ready verdict
records; the same seed always yields the same records.
"""
from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction

import numpy as np

from . import fourier_lab as fl
from . import rectangle_lab as rl
from .blowup_graph import reduce_to_graph
from .corpus import load_named
from .dihp_engine import GameSpec, P_matrix, apply_P, exact_masses, map_space
from .errors import DomainError
from .lp_relax import canonical_value1_solution, lp_solution
from .matching_space import (enumerate_labeled, enumerate_restricted, estimate_q, global_violation, make_labeled,
                             universe)
from .util import content_hash, derive_seed, rng_for

SUITES = ("fourier", "kernels", "rectangles", "combinatorics")

PRESETS = {
    # N=2, k=2, |V|=2
    "maxcut-tiny": {"instance": "maxcut_edge", "n": 8, "alpha": Fraction(1, 8), "K": 4},
    "minimal": {"instance": "maxcut_edge", "n": 1, "alpha": Fraction(1), "K": 2},
    "maxcut-game": {"instance": "maxcut_edge", "n": 64, "alpha": Fraction(1, 8), "K": 8},
}


def graph_for(inst, order=1):
    """Reduce an instance through its canonical value-1 solution when one exists, else an optimal LP solution."""
    sol = canonical_value1_solution(inst, order)
    if sol is None:
        sol = lp_solution(inst)
    return reduce_to_graph(inst, sol)


def spec_for(inst, n, alpha, K, order=1) -> GameSpec:
    return GameSpec(graph_for(inst, order), n, Fraction(alpha), K)


def preset_spec(name) -> GameSpec:
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    return spec_for(load_named(p["instance"]), p["n"], p["alpha"], p["K"])


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return float(f"{v:.12g}")
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


def record(lemma_id, payload, status, residual, seed):
    return {"lemma_id": lemma_id, "instantiation_hash": content_hash(payload), "status": status,
            "residual_or_slack": _clean(residual), "seed": seed}


def from_verdict(v: rl.Verdict, seed=None):
    d = v.to_json()
    d["residual_or_slack"] = _clean(v.residual_or_slack)
    d["seed"] = seed if v.seed is None else v.seed
    return d


def from_check(c: fl.CheckResult, payload, seed):
    return record(c.name, payload, c.status, c.slack if c.status != "skipped" else None, seed)


# ---------------------------------------------------------------- fourier

def random_real(N, L, rng: np.random.Generator):
    return fl.DenseFunction(N, tuple(range(L)), rng.normal(size=N ** L))


def fourier_suite(seed):
    out = []
    rng = rng_for(seed, "fourier")
    for i in range(12):
        N = int(rng.choice([2, 3]))
        L = int(rng.integers(2, 6 if N == 2 else 5))
        d = int(rng.integers(1, L + 1))
        f = fl.low_degree(random_real(N, L, rng), d)
        f = fl.DenseFunction(N, f.labels, f.values.real)
        q = float(rng.choice([3.0, 4.0]))
        out.append(from_check(fl.check_hypercontractivity(f, q, d), ["hyper", i, N, L, d, q], seed))
    for i in range(12):
        N = int(rng.choice([2, 3]))
        L = int(rng.integers(3, 7 if N == 2 else 5))
        size = N ** L
        A = rng.choice(size, size=max(1, size // int(rng.choice([4, 8, 16]))), replace=False)
        vals = np.zeros(size)
        vals[A] = size / len(A)
        f = fl.DenseFunction(N, tuple(range(L)), vals)
        lg = math.log2(fl.norm(f, 2) / fl.norm(f, 1))
        d = max(1, int(rng.integers(1, max(2, int(2 * lg) + 1))))
        out.append(from_check(fl.check_level_d(f, d), ["level", i, N, L, d], seed))
        s_star = math.log2(size / len(A))
        out.append(from_check(fl.check_crude_levels(f, s_star), ["crude", i, N, L], seed))
    for rep in fl.scalar_inequalities(2000, rng):
        out.append(record(rep.name, [rep.name, rep.samples], "pass" if rep.passed else "fail", rep.worst, seed))
    return out


# ---------------------------------------------------------------- kernels

def kernel_checks(U, m, mu, rng: random.Random, funcs=3):
    """Row sums, density preservation and sup-norm contraction of P on one small space, exactly."""
    xs, Y, rows = P_matrix(U, m, mu)
    out = []
    bad_rows = sum(1 for row in rows if sum(row) != 1)
    out.append(("kernel_row_sums", bad_rows == 0, Fraction(bad_rows)))
    worst_mean = Fraction(0)
    worst_sup = Fraction(0)
    for _ in range(funcs):
        f = {y: Fraction(rng.randrange(0, 7), rng.randrange(1, 4)) for y in Y}
        Pf = apply_P(U, m, mu, f)
        mean_in = sum(f.values(), Fraction(0)) / len(Y)
        mean_out = sum(Pf.values(), Fraction(0)) / len(Pf)
        worst_mean = max(worst_mean, abs(mean_in - mean_out))
        worst_sup = max(worst_sup, max(abs(v) for v in Pf.values()) - max(abs(v) for v in f.values()))
    out.append(("density_preservation", worst_mean == 0, worst_mean))
    out.append(("sup_contraction", worst_sup <= 0, -worst_sup))
    return out


def random_global_set(U, m, N, z, rng: random.Random, tries=20):
    """A random z-global subset of Omega_z (falls back to the whole space)."""
    full = enumerate_restricted(U, m, z, N)
    for _ in range(tries):
        size = rng.randrange(1, len(full) + 1)
        A = set(rng.sample(full, size))
        if global_violation(A, z, U, m, N) is None:
            return A
    return set(full)


def kernels_suite(seed):
    out = []
    rng = random.Random(derive_seed(seed, "kernels"))
    mus = {"maxcut": graph_for(load_named("maxcut_edge")).mus[0],
           "e3lin": graph_for(load_named("e3lin_pair"), 2).mus[0]}
    for name, U, m in (("maxcut", universe([0, 1], [2, 3]), 1), ("maxcut", universe([0, 1, 2], [3, 4, 5]), 2),
                       ("e3lin", universe([0, 1], [2, 3], [4, 5]), 1)):
        for lemma, ok, res in kernel_checks(U, m, mus[name], rng):
            out.append(record(lemma, [name, U.parts, m], "pass" if ok else "fail", res, seed))
    spec = preset_spec("minimal")
    masses = exact_masses(spec)
    out.append(from_verdict(rl.verify_relating_yes_no(spec, {}, masses), seed))
    for i in range(6):
        R = {}
        for p, sp in zip(spec.players, masses.spaces):
            if rng.random() < 0.8:
                R[p] = set(rng.sample(sp, rng.randrange(1, len(sp) + 1)))
        out.append(from_verdict(rl.verify_relating_yes_no(spec, R, masses), seed))
    mu = mus["maxcut"]
    U = universe([0, 1, 2], [3, 4, 5])
    for i in range(4):
        m = rng.choice([1, 2])
        z = ()
        if rng.random() < 0.5:
            e = (rng.randrange(3), 3 + rng.randrange(3))
            z = make_labeled([(e, (rng.randrange(2), rng.randrange(2)))])
        A = random_global_set(U, m, 2, z, rng)
        out.append(from_verdict(rl.verify_separation(U, m, mu, z, A), seed))
    for i in range(4):
        mu_i = mus["e3lin"] if i % 2 else mu
        k = mu_i.k
        M = [tuple(range(0, k))] if k == 3 else [(0, 1), (2, 3)]
        Lam = list(range(k * len(M) + 1))
        f = {xi: complex(rng.gauss(0, 1), rng.gauss(0, 1)) for xi in map_space(M, mu_i.q, k)}
        out.append(from_verdict(rl.verify_svd(Lam, M, mu_i, f), seed))
    return out


# ---------------------------------------------------------------- rectangles

def rectangles_suite(seed):
    out = []
    rng = random.Random(derive_seed(seed, "rectangles"))
    spec4 = spec_for(load_named("maxcut_edge"), 4, Fraction(1, 2), 2)
    for i in range(6):
        z = rl.random_acyclic_zeta(spec4, rng.randrange(0, 4), rng)
        out.append(from_verdict(rl.verify_spectrum_vanishing(spec4, z), seed))
        ok = sum(spec4.k * len(v) for v in z.values()) <= rl.weight(z)
        out.append(record("support_weight_inequality", [i, repr(z)], "pass" if ok else "fail", None, seed))
    spec16 = spec_for(load_named("maxcut_path3"), 16, Fraction(1, 4), 1)
    for i in range(4):
        z = rl.random_acyclic_zeta(spec16, rng.randrange(1, 3), rng)
        out.append(from_verdict(rl.verify_structured_bounded(spec16, z, 0.25, "onewise"), seed))
    spec3 = spec_for(load_named("e3lin_pair"), 6, Fraction(1, 2), 1, order=2)
    for i in range(3):
        z = rl.random_acyclic_zeta(spec3, rng.randrange(1, 3), rng)
        out.append(from_verdict(rl.verify_structured_bounded(spec3, z, 0.5, "twowise"), seed))
    spec32 = spec_for(load_named("maxcut_edge"), 32, Fraction(1, 8), 2)
    rep = rl.growth_experiment(spec32, 2, rl.SingleEdgeExposure(), 200, derive_seed(seed, "growth"))
    out.extend(from_verdict(v, seed) for v in rep.verdicts)
    rep = rl.growth_experiment(spec32, 2, rl.LabelBitReveal(), 50, derive_seed(seed, "bits"))
    out.extend(from_verdict(v, seed) for v in rep.verdicts)
    return out


# ---------------------------------------------------------------- combinatorics

def random_hypergraph(k, n_edges, n_vertices, rng: random.Random):
    return [tuple(sorted(rng.sample(range(n_vertices), k))) for _ in range(n_edges)]


def combinatorics_suite(seed):
    out = []
    rng = random.Random(derive_seed(seed, "combinatorics"))
    for sizes in ([2], [2, 2], [3, 2], [4], [2, 2, 2], [3, 3]):
        for l in range(2, sum(sizes) + 1):
            out.append(from_verdict(rl.check_no_singleton(sizes, l), seed))
    for i in range(8):
        H = random_hypergraph(3, rng.randrange(1, 4), rng.randrange(3, 10), rng)
        out.append(from_verdict(rl.check_sigma_B(H, 3, 2), seed))
    for i in range(3):
        H = random_hypergraph(3, rng.randrange(1, 5), 9, rng)
        out.append(from_verdict(rl.check_frakE(H, 3), seed))
        out.append(from_verdict(rl.check_B_level_sum(H, 3, 2), seed))
    mism = 0
    for i in range(200):
        k = rng.choice([2, 3])
        H = random_hypergraph(k, rng.randrange(1, 6), rng.randrange(k, 8), rng)
        mism += rl.has_cycle_peeling(H, k) != rl.has_cycle_exhaustive(H, k)
    out.append(record("cyclicity_oracle_agreement", ["random", 200], "pass" if mism == 0 else "fail", mism, seed))
    for i in range(6):
        k = rng.choice([2, 3])
        size = rng.randrange(3, 6)
        U = universe(*[list(range(j * size, (j + 1) * size)) for j in range(k)])
        m = rng.randrange(1, size)
        support = rng.sample(range(k * size + 2), rng.randrange(1, 4))
        zvec = {v: 1 for v in support}
        t = len(zvec)
        i_, b_ = rng.randrange(0, t + 1), 0
        b_ = rng.randrange(0, t - i_ + 1)
        est = estimate_q(U, m, zvec, i_, b_, 300, derive_seed(seed, "q", i))
        out.append(record("q_bound", [U.parts, m, sorted(zvec), i_, b_], "pass" if est.within(3.0) else "fail",
                          est.bound - est.interval.low, seed))
    for i in range(4):
        k, N = 2, 2
        size = 12
        U = universe(list(range(size)), list(range(size, 2 * size)))
        Lam = list(range(2 * size + 2))
        zsup = rng.sample(Lam, rng.randrange(0, 3))
        zvec = {v: 1 for v in zsup}
        s_star = rng.choice([0.5, 1.0, 2.0])
        l = rng.randrange(0, 4)

        def rule(M, r, s=s_star):
            space = map_space(M, N, k)
            need = math.ceil(len(space) * 2 ** -s)
            return set(r.sample(space, r.randrange(need, len(space) + 1)))

        res = rl.check_transfer_Q(U, 1, N, Lam, s_star, zvec, rule, l, seed=derive_seed(seed, "Q", i))
        out.append(from_verdict(res.verdict, seed))
    return out


BATTERIES = {"fourier": fourier_suite, "kernels": kernels_suite, "rectangles": rectangles_suite,
             "combinatorics": combinatorics_suite}


def run_suite(name, seed):
    names = SUITES if name == "all" else (name,)
    out = []
    for s in names:
        if s not in BATTERIES:
            raise DomainError(f"unknown suite {s!r}")
        for rec in BATTERIES[s](seed):
            rec = dict(rec)
            rec["suite"] = s
            out.append(rec)
    return out
