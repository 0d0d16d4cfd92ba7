import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dihp_lab.corpus import corpus_names, load_corpus, load_named
from dihp_lab.csp_core import (FiniteDistribution, Instance, Predicate, check_onewise, check_twowise,
                               eval_assignment, find_independent_support, instance_from_json, load_instance,
                               max_value)
from dihp_lab.errors import CapExceeded, DomainError


def cut():
    return Predicate.from_function("cut", 2, 2, lambda b: b[0] != b[1])


def test_distribution_must_sum_to_one():
    with pytest.raises(DomainError):
        FiniteDistribution.from_dict(2, 2, {(0, 1): Fraction(1, 3)})
    mu = FiniteDistribution.from_dict(2, 2, {(0, 1): Fraction(1, 2), (1, 0): Fraction(1, 2)})
    assert mu((0, 1)) == Fraction(1, 2) and mu((0, 0)) == 0


def test_independence_checks_on_known_distributions():
    half_cut = FiniteDistribution.from_dict(2, 2, {(0, 1): Fraction(1, 2), (1, 0): Fraction(1, 2)})
    assert check_onewise(half_cut)
    assert not check_twowise(half_cut)
    even = FiniteDistribution.uniform_on(2, 3, [b for b in itertools.product(range(2), repeat=3) if sum(b) % 2 == 0])
    assert check_onewise(even) and check_twowise(even)
    skew = FiniteDistribution.from_dict(2, 2, {(0, 0): Fraction(1, 2), (0, 1): Fraction(1, 2)})
    assert not check_onewise(skew)


@given(st.lists(st.integers(0, 5), min_size=4, max_size=4).filter(lambda w: sum(w) > 0))
def test_onewise_matches_direct_marginals(w):
    pts = list(itertools.product(range(2), repeat=2))
    tot = sum(w)
    mu = FiniteDistribution.from_dict(2, 2, {p: Fraction(c, tot) for p, c in zip(pts, w) if c})
    direct = all(sum(Fraction(c, tot) for p, c in zip(pts, w) if p[j] == s) == Fraction(1, 2)
                 for j in range(2) for s in range(2))
    assert check_onewise(mu) == direct


def test_predicate_table_order_is_lexicographic():
    p = cut()
    assert p.table == (0, 1, 1, 0)
    assert p.accepting() == [(0, 1), (1, 0)]


def test_instance_validation_errors():
    p = cut()
    with pytest.raises(DomainError, match="unknown variable"):
        Instance(2, 2, (p,), ("a", "b"), ((("a", "c"), "cut"),))
    with pytest.raises(DomainError, match="repeats"):
        Instance(2, 2, (p,), ("a", "b"), ((("a", "a"), "cut"),))
    with pytest.raises(DomainError, match="unknown predicate"):
        Instance(2, 2, (p,), ("a", "b"), ((("a", "b"), "nope"),))


def test_json_round_trip_and_errors(tmp_path):
    inst = load_named("maxcut_triangle")
    again = instance_from_json(json.loads(json.dumps(inst.to_json())))
    assert again == inst and again.content_hash() == inst.content_hash()
    bad = tmp_path / "bad.json"
    bad.write_text('{"alphabet_size": 2,\n "arity": }')
    with pytest.raises(DomainError, match="line 2"):
        load_instance(bad)
    doc = inst.to_json()
    del doc["predicates"][0]["name"]
    with pytest.raises(DomainError, match=r"predicates\[0\].*name"):
        instance_from_json(doc)


def test_max_value_examples():
    assert max_value(load_named("maxcut_triangle")) == Fraction(2, 3)
    assert max_value(load_named("maxcut_square")) == 1
    assert max_value(load_named("e3lin_pair")) == Fraction(1, 2)


def test_max_value_cap():
    with pytest.raises(CapExceeded):
        max_value(load_named("maxcut_k4"), cap=4)


def test_eval_assignment_brute_force():
    inst = load_named("maxcut_pentagon")
    best = max(eval_assignment(inst, dict(zip(inst.variables, a)))
               for a in itertools.product(range(2), repeat=len(inst.variables)))
    assert best == max_value(inst) == Fraction(4, 5)


def test_independent_support_examples():
    mu = find_independent_support(cut(), 1)
    assert mu is not None and check_onewise(mu) and all(cut()(b) for b in mu.support)
    assert find_independent_support(cut(), 2) is None
    and_ = Predicate.from_function("and", 2, 2, lambda b: b[0] and b[1])
    assert find_independent_support(and_, 1) is None
    lin = Predicate.from_function("lin", 3, 2, lambda b: sum(b) % 2 == 0)
    mu2 = find_independent_support(lin, 2)
    assert mu2 is not None and check_twowise(mu2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=4, max_size=4))
def test_independent_support_agrees_with_enumeration(bits):
    # oracle: a one-wise support on {0,1}^2 exists iff the accepting set contains {01,10} or {00,11}
    p = Predicate("p", 2, 2, tuple(int(b) for b in bits))
    acc = set(p.accepting())
    expected = {(0, 1), (1, 0)} <= acc or {(0, 0), (1, 1)} <= acc
    assert (find_independent_support(p, 1) is not None) == expected


def test_corpus_shape():
    names = corpus_names()
    assert len(names) >= 20
    for inst in load_corpus().values():
        assert inst.q in (2, 3) and inst.m <= 6
