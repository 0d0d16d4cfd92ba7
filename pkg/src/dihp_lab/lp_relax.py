"""BasicLP construction and an exact rational simplex solver (Bland's rule)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .csp_core import Instance, find_independent_support
from .errors import DomainError, StructuralError
from .util import frac_str, parse_frac

ZERO = Fraction(0)


def _pivot(rows, rhs, obj, r, j):
    prow = rows[r]
    piv = prow[j]
    if piv != 1:
        inv = 1 / piv
        for c in prow:
            prow[c] *= inv
        rhs[r] *= inv
    for i, row in enumerate(rows):
        if i == r:
            continue
        f = row.get(j)
        if f is None:
            continue
        for c, v in prow.items():
            nv = row.get(c, ZERO) - f * v
            if nv:
                row[c] = nv
            else:
                row.pop(c, None)
        rhs[i] -= f * rhs[r]
    f = obj[0].get(j)
    if f is not None:
        for c, v in prow.items():
            nv = obj[0].get(c, ZERO) - f * v
            if nv:
                obj[0][c] = nv
            else:
                obj[0].pop(c, None)
        obj[1] -= f * rhs[r]


def _run(rows, rhs, obj, basis, allowed):
    """Simplex iterations on a tableau in canonical form. Returns False if unbounded."""
    while True:
        entering = None
        for c in sorted(obj[0]):
            if c in allowed and obj[0][c] < 0:
                entering = c
                break
        if entering is None:
            return True
        best, best_r = None, None
        for i, row in enumerate(rows):
            a = row.get(entering)
            if a is not None and a > 0:
                ratio = rhs[i] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[best_r]):
                    best, best_r = ratio, i
        if best_r is None:
            return False
        _pivot(rows, rhs, obj, best_r, entering)
        basis[best_r] = entering


def solve_standard_form(c, A, b):
    """Maximize c.x subject to A x = b, x >= 0, exactly.

    A is a list of rows, each a dense list or a {column: coef} dict. Returns
    (optimum, x) or None when infeasible. Raises StructuralError if unbounded.
    """
    nvar = len(c)
    rows, rhs = [], []
    for row, bi in zip(A, b):
        d = {j: Fraction(v) for j, v in (row.items() if isinstance(row, dict) else enumerate(row)) if v}
        bi = Fraction(bi)
        if bi < 0:
            d = {j: -v for j, v in d.items()}
            bi = -bi
        rows.append(d)
        rhs.append(bi)
    m = len(rows)
    # phase one: artificial column nvar+i for row i
    basis = []
    obj_row = {}
    for i, row in enumerate(rows):
        row[nvar + i] = Fraction(1)
        basis.append(nvar + i)
        for j, v in row.items():
            if j < nvar:
                obj_row[j] = obj_row.get(j, ZERO) - v
    obj = [{j: v for j, v in obj_row.items() if v}, -sum(rhs, ZERO)]
    _run(rows, rhs, obj, basis, allowed=range(nvar + m))
    if obj[1] != 0:
        return None
    # drive artificial variables out of the basis, dropping redundant rows
    i = 0
    while i < len(rows):
        if basis[i] >= nvar:
            cand = sorted(j for j in rows[i] if j < nvar)
            if cand:
                _pivot(rows, rhs, obj, i, cand[0])
                basis[i] = cand[0]
            else:
                del rows[i], rhs[i], basis[i]
                continue
        i += 1
    for row in rows:
        for j in [j for j in row if j >= nvar]:
            del row[j]
    cf = [Fraction(v) for v in c]
    obj_row = {j: -cf[j] for j in range(nvar) if cf[j]}
    obj_val = ZERO
    for i, row in enumerate(rows):
        cb = cf[basis[i]]
        if cb:
            for j, v in row.items():
                nv = obj_row.get(j, ZERO) + cb * v
                if nv:
                    obj_row[j] = nv
                else:
                    obj_row.pop(j, None)
            obj_val += cb * rhs[i]
    obj = [obj_row, obj_val]
    if not _run(rows, rhs, obj, basis, allowed=range(nvar)):
        raise StructuralError("linear program is unbounded")
    x = [ZERO] * nvar
    for i, bv in enumerate(basis):
        x[bv] = rhs[i]
    return obj[1], x


@dataclass
class LPModel:
    names: list  # ("x", v, s) or ("z", i, b)
    objective: list
    rows: list  # dict column -> coefficient
    rhs: list

    @property
    def n_x(self):
        return sum(1 for n in self.names if n[0] == "x")

    @property
    def n_z(self):
        return sum(1 for n in self.names if n[0] == "z")


@dataclass
class LPSolution:
    value: Fraction
    x: dict  # (v, s) -> Fraction
    z: dict  # (i, b) -> Fraction

    def to_json(self):
        return {
            "value": frac_str(self.value),
            "x": [[v, s, frac_str(p)] for (v, s), p in sorted(self.x.items(), key=lambda t: (str(t[0][0]), t[0][1]))],
            "z": [[i, list(b), frac_str(p)] for (i, b), p in sorted(self.z.items())],
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            parse_frac(d["value"]),
            {(v, s): parse_frac(p) for v, s, p in d["x"]},
            {(i, tuple(b)): parse_frac(p) for i, b, p in d["z"]},
        )


def build_basic_lp(inst: Instance) -> LPModel:
    q, k, m = inst.q, inst.k, inst.m
    names = [("x", v, s) for v in inst.variables for s in range(q)]
    col = {n: j for j, n in enumerate(names)}
    objective = [Fraction(0)] * len(names)
    for i in range(m):
        f = inst.predicate(i)
        for b in itertools.product(range(q), repeat=k):
            col[("z", i, b)] = len(names)
            names.append(("z", i, b))
            objective.append(Fraction(f(b), m))
    rows, rhs = [], []
    for v in inst.variables:
        rows.append({col[("x", v, s)]: 1 for s in range(q)})
        rhs.append(Fraction(1))
    for i, (tup, _) in enumerate(inst.constraints):
        for j in range(k):
            for s in range(q):
                row = {col[("z", i, b)]: 1 for b in itertools.product(range(q), repeat=k) if b[j] == s}
                row[col[("x", tup[j], s)]] = -1
                rows.append(row)
                rhs.append(Fraction(0))
    return LPModel(names, objective, rows, rhs)


def solve_exact(model: LPModel) -> LPSolution:
    res = solve_standard_form(model.objective, [dict(r) for r in model.rows], model.rhs)
    if res is None:
        raise StructuralError("linear program is infeasible")
    val, xs = res
    x, z = {}, {}
    for name, p in zip(model.names, xs):
        if name[0] == "x":
            x[(name[1], name[2])] = p
        else:
            z[(name[1], name[2])] = p
    return LPSolution(val, x, z)


_LP_CACHE = {}


def lp_solution(inst: Instance) -> LPSolution:
    key = inst.content_hash()
    if key not in _LP_CACHE:
        _LP_CACHE[key] = solve_exact(build_basic_lp(inst))
    return _LP_CACHE[key]


def lp_value(inst: Instance) -> Fraction:
    return lp_solution(inst).value


def lp_residuals(inst: Instance, sol: LPSolution):
    """List of violated BasicLP constraints (empty when sol is feasible)."""
    bad = []
    q, k = inst.q, inst.k
    for key, p in list(sol.x.items()) + list(sol.z.items()):
        if p < 0:
            bad.append(f"negative entry {key}")
    for v in inst.variables:
        tot = sum((sol.x.get((v, s), ZERO) for s in range(q)), ZERO)
        if tot != 1:
            bad.append(f"x[{v}] sums to {tot}")
    for i, (tup, _) in enumerate(inst.constraints):
        for j in range(k):
            for s in range(q):
                marg = sum((sol.z.get((i, b), ZERO) for b in itertools.product(range(q), repeat=k) if b[j] == s), ZERO)
                if marg != sol.x.get((tup[j], s), ZERO):
                    bad.append(f"marginal of constraint {i} at position {j}, symbol {s}")
    return bad


def objective_value(inst: Instance, sol: LPSolution) -> Fraction:
    tot = ZERO
    for (i, b), p in sol.z.items():
        tot += inst.predicate(i)(b) * p
    return tot / inst.m


def canonical_value1_solution(inst: Instance, order: int = 1):
    """Uniform x with independent-support z, when every predicate allows it."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    supports = {}
    for p in inst.predicates:
        mu = find_independent_support(p, order)
        if mu is None:
            if any(name == p.name for _, name in inst.constraints):
                return None
            continue
        supports[p.name] = mu
    q, k = inst.q, inst.k
    x = {(v, s): Fraction(1, q) for v in inst.variables for s in range(q)}
    z = {}
    for i, (_, name) in enumerate(inst.constraints):
        d = supports[name].as_dict()
        for b in itertools.product(range(q), repeat=k):
            z[(i, b)] = d.get(b, ZERO)
    sol = LPSolution(Fraction(0), x, z)
    sol.value = objective_value(inst, sol)
    return sol
