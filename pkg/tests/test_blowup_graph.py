import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dihp_lab.blowup_graph import (DistLabeledGraph, build_frame, interval_partition, project, reduce_to_graph,
                                   satisfying_mass)
from dihp_lab.corpus import load_corpus, load_named
from dihp_lab.csp_core import check_onewise, check_twowise
from dihp_lab.errors import DomainError
from dihp_lab.lp_relax import LPSolution, canonical_value1_solution, lp_solution


def lp_mass(inst, sol, i):
    f = inst.predicate(i)
    return sum((p for (j, b), p in sol.z.items() if j == i and f(b)), Fraction(0))


def usable_solutions():
    for name, inst in load_corpus().items():
        for sol in (lp_solution(inst), canonical_value1_solution(inst)):
            if sol is None:
                continue
            N = 1
            for p in sol.x.values():
                N = N * p.denominator // __import__("math").gcd(N, p.denominator)
            if N >= 2:
                yield name, inst, sol


def test_every_reduction_is_onewise_and_preserves_satisfying_mass():
    seen = 0
    for name, inst, sol in usable_solutions():
        G = reduce_to_graph(inst, sol)
        seen += 1
        assert all(check_onewise(mu) for mu in G.mus), name
        for i in range(inst.m):
            assert satisfying_mass(inst, sol, G, i) == lp_mass(inst, sol, i), name
    assert seen >= 10


def test_twowise_solution_gives_twowise_graph():
    for name in ("e3lin_pair", "e3lin_four", "sum3_pair", "sum3_chain"):
        inst = load_named(name)
        G = reduce_to_graph(inst, canonical_value1_solution(inst, 2))
        assert all(check_twowise(mu) for mu in G.mus), name


def test_block_order_does_not_matter_for_independence():
    inst = load_named("color3_triangle")
    sol = canonical_value1_solution(inst)
    for order in itertools.permutations(range(3)):
        G = reduce_to_graph(inst, sol, block_order=order)
        assert all(check_onewise(mu) for mu in G.mus)
        assert all(satisfying_mass(inst, sol, G, i, order) == lp_mass(inst, sol, i) for i in range(inst.m))


def test_interval_partition_blocks():
    x = {("a", 0): Fraction(1, 3), ("a", 1): Fraction(2, 3)}
    parts = interval_partition(x, ["a"], 2, 3)
    assert parts["a"] == {0: (0,), 1: (1, 2)}
    with pytest.raises(DomainError):
        interval_partition(x, ["a"], 2, 2)


def test_degenerate_modulus_rejected():
    inst = load_named("maxcut_edge")
    sol = lp_solution(inst)  # integral optimum: N would be 1
    with pytest.raises(DomainError, match="degenerate"):
        reduce_to_graph(inst, sol)


def test_infeasible_solution_rejected():
    inst = load_named("maxcut_edge")
    sol = canonical_value1_solution(inst)
    bad = LPSolution(sol.value, dict(sol.x), dict(sol.z))
    bad.x[("v0", 0)] = Fraction(1, 3)
    with pytest.raises(DomainError, match="not feasible"):
        reduce_to_graph(inst, bad)


def test_graph_json_round_trip(maxcut_graph):
    assert DistLabeledGraph.from_json(maxcut_graph.to_json()) == maxcut_graph


def test_frame_ids_and_projection(maxcut_graph):
    fr = build_frame(maxcut_graph, 3)
    assert fr.size == 6
    assert fr.cloud("v1") == (3, 4, 5)
    assert fr.universe(0) == ((0, 1, 2), (3, 4, 5))
    x = tuple(range(6))
    assert project(fr, 0, x) == x
    with pytest.raises(DomainError):
        build_frame(maxcut_graph, 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=3))
def test_partition_covers_modulus(weights):
    tot = sum(weights)
    x = {("v", s): Fraction(w, tot) for s, w in enumerate(weights)}
    parts = interval_partition(x, ["v"], len(weights), tot)["v"]
    flat = [u for s in range(len(weights)) for u in parts[s]]
    assert flat == list(range(tot))
