"""CSP instances, predicates, exact values and independence checks."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import CapExceeded, DomainError
from .util import content_hash, frac_str

DEFAULT_ASSIGNMENT_CAP = 2 ** 22


@dataclass(frozen=True)
class FiniteDistribution:
    """A distribution on G^k, G = {0..q-1}, stored as a sparse mass table."""

    q: int
    k: int
    mass: tuple  # sorted ((point, Fraction), ...) with positive masses

    @classmethod
    def from_dict(cls, q, k, table):
        items = []
        for pt, p in table.items():
            p = Fraction(p)
            pt = tuple(int(c) for c in pt)
            if p < 0:
                raise DomainError(f"negative mass at {pt}")
            if len(pt) != k or any(not 0 <= c < q for c in pt):
                raise DomainError(f"point {pt} outside the ground set")
            if p:
                items.append((pt, p))
        items.sort()
        if sum(p for _, p in items) != 1:
            raise DomainError("masses do not sum to 1")
        return cls(q, k, tuple(items))

    @classmethod
    def uniform_on(cls, q, k, points):
        points = list(points)
        return cls.from_dict(q, k, {pt: Fraction(1, len(points)) for pt in points})

    def as_dict(self):
        return dict(self.mass)

    def __call__(self, pt):
        return self.as_dict().get(tuple(pt), Fraction(0))

    @property
    def support(self):
        return [pt for pt, _ in self.mass]

    def marginal(self, coords):
        out = {}
        for pt, p in self.mass:
            key = tuple(pt[c] for c in coords)
            out[key] = out.get(key, Fraction(0)) + p
        return out

    def to_json(self):
        return {"q": self.q, "k": self.k, "mass": [[list(pt), frac_str(p)] for pt, p in self.mass]}

    @classmethod
    def from_json(cls, d):
        return cls.from_dict(d["q"], d["k"], {tuple(pt): Fraction(p) for pt, p in d["mass"]})


def _uniform_marginals(mu: FiniteDistribution, order: int) -> bool:
    target = Fraction(1, mu.q ** order)
    for coords in itertools.combinations(range(mu.k), order):
        marg = mu.marginal(coords)
        for key in itertools.product(range(mu.q), repeat=order):
            if marg.get(key, 0) != target:
                return False
    return True


def check_onewise(mu: FiniteDistribution) -> bool:
    return _uniform_marginals(mu, 1)


def check_twowise(mu: FiniteDistribution) -> bool:
    if mu.k < 2:
        return check_onewise(mu)
    return _uniform_marginals(mu, 2)


@dataclass(frozen=True)
class Predicate:
    name: str
    k: int
    q: int
    table: tuple  # bits in lexicographic order of G^k

    def __post_init__(self):
        if self.k < 1 or self.q < 2:
            raise DomainError("predicate needs k >= 1 and alphabet size >= 2")
        if len(self.table) != self.q ** self.k:
            raise DomainError(f"truth table of {self.name} has {len(self.table)} entries, expected {self.q ** self.k}")
        if any(b not in (0, 1) for b in self.table):
            raise DomainError(f"truth table of {self.name} is not 0/1 valued")

    @classmethod
    def from_function(cls, name, k, q, fn):
        return cls(name, k, q, tuple(int(bool(fn(b))) for b in itertools.product(range(q), repeat=k)))

    def index(self, b) -> int:
        i = 0
        for c in b:
            i = i * self.q + c
        return i

    def __call__(self, b) -> int:
        return self.table[self.index(b)]

    def accepting(self):
        return [b for b in itertools.product(range(self.q), repeat=self.k) if self(b)]


@dataclass(frozen=True)
class Instance:
    q: int
    k: int
    predicates: tuple  # Predicate objects, unique names
    variables: tuple
    constraints: tuple  # ((var, ...), predicate name)
    _pred_map: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        pm = {}
        for p in self.predicates:
            if (p.k, p.q) != (self.k, self.q):
                raise DomainError(f"predicate {p.name} has (k, |S|) = {(p.k, p.q)}, instance uses {(self.k, self.q)}")
            if p.name in pm:
                raise DomainError(f"duplicate predicate name {p.name}")
            pm[p.name] = p
        object.__setattr__(self, "_pred_map", pm)
        if not self.constraints:
            raise DomainError("instance needs at least one constraint")
        vs = set(self.variables)
        if len(vs) != len(self.variables):
            raise DomainError("duplicate variable names")
        for i, (tup, pname) in enumerate(self.constraints):
            if len(tup) != self.k:
                raise DomainError(f"constraint {i} has {len(tup)} variables, arity is {self.k}")
            if len(set(tup)) != len(tup):
                raise DomainError(f"constraint {i} repeats a variable")
            if any(v not in vs for v in tup):
                raise DomainError(f"constraint {i} references an unknown variable")
            if pname not in pm:
                raise DomainError(f"constraint {i} references unknown predicate {pname!r}")

    @property
    def m(self):
        return len(self.constraints)

    def predicate(self, i) -> Predicate:
        return self._pred_map[self.constraints[i][1]]

    def to_json(self):
        return {
            "alphabet_size": self.q,
            "arity": self.k,
            "predicates": [
                {"name": p.name,
                 "truth_table": [[list(b), p(b)] for b in itertools.product(range(self.q), repeat=self.k)]}
                for p in self.predicates
            ],
            "variables": list(self.variables),
            "constraints": [{"vars": list(t), "predicate": name} for t, name in self.constraints],
        }

    def content_hash(self) -> str:
        return content_hash(self.to_json())


def _need(d, key, ctx):
    if not isinstance(d, dict) or key not in d:
        raise DomainError(f"{ctx}: missing field {key!r}")
    return d[key]


def instance_from_json(doc) -> Instance:
    q = _need(doc, "alphabet_size", "instance")
    k = _need(doc, "arity", "instance")
    if not isinstance(q, int) or not isinstance(k, int):
        raise DomainError("instance: alphabet_size and arity must be integers")
    preds = []
    for pi, pd in enumerate(_need(doc, "predicates", "instance")):
        ctx = f"predicates[{pi}]"
        name = _need(pd, "name", ctx)
        rows = _need(pd, "truth_table", ctx)
        table = {}
        for ri, row in enumerate(rows):
            try:
                b, bit = row
                b = tuple(int(c) for c in b)
            except (TypeError, ValueError):
                raise DomainError(f"{ctx}.truth_table[{ri}]: expected [tuple, bit]") from None
            if len(b) != k or any(not 0 <= c < q for c in b):
                raise DomainError(f"{ctx}.truth_table[{ri}]: tuple {b} outside alphabet^arity")
            if b in table:
                raise DomainError(f"{ctx}.truth_table[{ri}]: duplicate row {b}")
            table[b] = int(bit)
        missing = [b for b in itertools.product(range(q), repeat=k) if b not in table]
        if missing:
            raise DomainError(f"{ctx}: truth table misses {len(missing)} rows, e.g. {missing[0]}")
        preds.append(Predicate(name, k, q, tuple(table[b] for b in itertools.product(range(q), repeat=k))))
    variables = tuple(_need(doc, "variables", "instance"))
    cons = []
    for ci, cd in enumerate(_need(doc, "constraints", "instance")):
        cons.append((tuple(_need(cd, "vars", f"constraints[{ci}]")), _need(cd, "predicate", f"constraints[{ci}]")))
    return Instance(q, k, tuple(preds), variables, tuple(cons))


def load_instance(path) -> Instance:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_json(doc)


def eval_assignment(inst: Instance, tau) -> Fraction:
    missing = [v for v in inst.variables if v not in tau]
    if missing:
        raise DomainError(f"assignment misses variable {missing[0]!r}")
    sat = 0
    for i, (tup, _) in enumerate(inst.constraints):
        sat += inst.predicate(i)(tuple(tau[v] for v in tup))
    return Fraction(sat, inst.m)


def max_value(inst: Instance, cap: int = DEFAULT_ASSIGNMENT_CAP) -> Fraction:
    size = inst.q ** len(inst.variables)
    if size > cap:
        raise CapExceeded("assignment enumeration (|S|^|V|)", size, cap)
    pos = {v: i for i, v in enumerate(inst.variables)}
    cons = [(tuple(pos[v] for v in tup), inst.predicate(i)) for i, (tup, _) in enumerate(inst.constraints)]
    best = 0
    for tau in itertools.product(range(inst.q), repeat=len(inst.variables)):
        sat = sum(p(tuple(tau[j] for j in idx)) for idx, p in cons)
        if sat > best:
            best = sat
            if best == inst.m:
                break
    return Fraction(best, inst.m)


def find_independent_support(f: Predicate, order: int):
    """Distribution on f^{-1}(1) whose `order`-wise marginals are uniform, or None."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    from .lp_relax import solve_standard_form

    acc = f.accepting()
    if not acc:
        return None
    order = min(order, f.k)
    rows, rhs = [[1] * len(acc)], [Fraction(1)]
    for coords in itertools.combinations(range(f.k), order):
        for key in itertools.product(range(f.q), repeat=order):
            rows.append([1 if tuple(b[c] for c in coords) == key else 0 for b in acc])
            rhs.append(Fraction(1, f.q ** order))
    res = solve_standard_form([0] * len(acc), rows, rhs)
    if res is None:
        return None
    _, xs = res
    return FiniteDistribution.from_dict(f.q, f.k, {b: p for b, p in zip(acc, xs) if p})
