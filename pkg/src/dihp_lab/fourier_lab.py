"""Fourier analysis on Z_N^Lambda and the analytic checks built on it.

Points x in Z_N^Lambda are indexed by sum_i x[i] N^i (first label least
significant). Transforms use the normalisation f^(b) = E_x f(x) conj(chi_b(x)).
"""
from __future__ import annotations

import csv
import functools
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DomainError, PreconditionError

FOURIER_CAP = 2 ** 24
TOL = 1e-10


@dataclass(frozen=True)
class DenseFunction:
    N: int
    labels: tuple
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        size = self.N ** len(self.labels)
        if size > FOURIER_CAP:
            raise CapExceeded("dense function", size, FOURIER_CAP)
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if vals.shape[0] != size:
            raise DomainError(f"expected {size} values, got {vals.shape[0]}")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.labels)

    def mean(self):
        return complex(self.values.mean())

    def is_real(self, tol=TOL):
        return bool(np.all(np.abs(self.values.imag) <= tol))


def index_of(x, N) -> int:
    return sum(int(c) * N ** i for i, c in enumerate(x))


def points(N, L):
    """All x in Z_N^L in index order (first coordinate fastest)."""
    return [tuple(reversed(t)) for t in itertools.product(range(N), repeat=L)]


def from_callable(N, labels, fn) -> DenseFunction:
    """fn receives a dict label -> value."""
    labels = tuple(labels)
    size = N ** len(labels)
    if size > FOURIER_CAP:
        raise CapExceeded("dense function", size, FOURIER_CAP)
    vals = [fn(dict(zip(labels, x))) for x in points(N, len(labels))]
    return DenseFunction(N, labels, np.array(vals, dtype=complex))


@functools.lru_cache(maxsize=None)
def hamming_weights(N, L) -> np.ndarray:
    w = np.zeros((N,) * L, dtype=np.int64)
    for axis in range(L):
        shape = [1] * L
        shape[axis] = N
        w = w + (np.arange(N) != 0).reshape(shape)
    return w.reshape(-1, order="F")


def _transform(vals, N, L, sign):
    arr = vals.reshape((N,) * L, order="F") if L else vals.reshape(())
    idx = np.arange(N)
    W = np.exp(sign * 2j * np.pi * np.outer(idx, idx) / N)
    if sign < 0:
        W = W / N
    for axis in range(L):
        arr = np.moveaxis(np.tensordot(W, arr, axes=([1], [axis])), 0, axis)
    return arr.reshape(-1, order="F")


def dft(f: DenseFunction) -> DenseFunction:
    """Coefficients f^(b) = <f, chi_b>, as a DenseFunction indexed by b."""
    return DenseFunction(f.N, f.labels, _transform(f.values, f.N, f.dim, -1))


def idft(fhat: DenseFunction) -> DenseFunction:
    return DenseFunction(fhat.N, fhat.labels, _transform(fhat.values, fhat.N, fhat.dim, +1))


def character(N, labels, b) -> DenseFunction:
    b = tuple(b)
    return from_callable(N, labels, lambda x: np.exp(2j * np.pi * sum(bi * x[l] for bi, l in zip(b, labels)) / N))


def wiener_norm(f: DenseFunction) -> float:
    return float(np.abs(dft(f).values).sum())


def _select(f, keep):
    c = dft(f)
    return idft(DenseFunction(f.N, f.labels, np.where(keep, c.values, 0)))


def degree_part(f: DenseFunction, d: int) -> DenseFunction:
    return _select(f, hamming_weights(f.N, f.dim) == d)


def low_degree(f: DenseFunction, d: int) -> DenseFunction:
    return _select(f, hamming_weights(f.N, f.dim) <= d)


def level_wiener(f: DenseFunction):
    """List of ||f^{=d}||_W for d = 0..|Lambda|."""
    c = np.abs(dft(f).values)
    w = hamming_weights(f.N, f.dim)
    return [float(c[w == d].sum()) for d in range(f.dim + 1)]


def level_mass(f: DenseFunction):
    """List of ||f^{=d}||_2^2 for d = 0..|Lambda|."""
    c = np.abs(dft(f).values) ** 2
    w = hamming_weights(f.N, f.dim)
    return [float(c[w == d].sum()) for d in range(f.dim + 1)]


def degree(f: DenseFunction, tol=TOL) -> int:
    c = np.abs(dft(f).values)
    w = hamming_weights(f.N, f.dim)
    nz = w[c > tol]
    return int(nz.max()) if nz.size else 0


def norm(f: DenseFunction, p: float) -> float:
    a = np.abs(f.values)
    if p == math.inf:
        return float(a.max())
    return float(np.mean(a ** p) ** (1 / p))


@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skipped"
    lhs: float = float("nan")
    rhs: float = float("nan")
    note: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    @property
    def slack(self):
        return self.rhs - self.lhs

    def to_json(self):
        return {"name": self.name, "status": self.status, "lhs": self.lhs, "rhs": self.rhs, "note": self.note}


def _compare(name, lhs, rhs, rel=1e-12, note=""):
    ok = lhs <= rhs * (1 + rel) + rel
    return CheckResult(name, "pass" if ok else "fail", float(lhs), float(rhs), note)


def check_hypercontractivity(f: DenseFunction, q: float, d: int) -> CheckResult:
    """||f||_q <= (sqrt((q-1) N))^d ||f||_2 for real f of degree <= d."""
    if q < 2:
        raise PreconditionError("hypercontractive check needs q >= 2")
    if not f.is_real():
        raise PreconditionError("hypercontractive check needs a real function")
    if degree(f) > d:
        raise PreconditionError(f"function has degree {degree(f)} > {d}")
    return _compare("hypercontractivity", norm(f, q), math.sqrt((q - 1) * f.N) ** d * norm(f, 2))


def check_level_d(f: DenseFunction, d: int) -> CheckResult:
    """||f^{<=d}||_2^2 <= ||f||_1^2 (8N/d log2(||f||_2/||f||_1))^d, when 1 <= d <= 2 log2(ratio)."""
    n1, n2 = norm(f, 1), norm(f, 2)
    if n1 == 0:
        return CheckResult("level_d", "skipped", note="zero function")
    lg = math.log2(n2 / n1)
    if not 1 <= d <= 2 * lg:
        return CheckResult("level_d", "skipped", note=f"need 1 <= d <= 2 log2(|f|_2/|f|_1) = {2 * lg:.4g}")
    lhs = sum(level_mass(f)[: d + 1])
    return _compare("level_d", lhs, n1 * n1 * (8 * f.N / d * lg) ** d)


def log2_growth_bound(n, C, s_star, d) -> float:
    if not 1 <= d <= n:
        raise DomainError(f"degree {d} outside [1, {n}]")
    return d / 2 * math.log2(C * math.sqrt(n * max(s_star, d)) / d)


def growth_bound(n, C, s_star, d) -> float:
    """F_C(n, d, s*) = (C sqrt(n max(s*, d)) / d)^{d/2}."""
    return 2.0 ** log2_growth_bound(n, C, s_star, d)


@dataclass
class BoundednessReport:
    n: float
    C: float
    s_star: float
    delta: float
    mean: float
    mean_ok: bool
    levels: list  # (d, log2 ||f^{=d}||_W, log2 F_C, ok)
    sup: float
    sup_ok: bool

    @property
    def levels_ok(self):
        return all(ok for *_, ok in self.levels)

    @property
    def bounded(self):
        return self.mean_ok and self.levels_ok and self.sup_ok

    def to_json(self):
        return {"n": self.n, "C": self.C, "s_star": self.s_star, "delta": self.delta, "mean": self.mean,
                "mean_ok": self.mean_ok, "levels": [list(t) for t in self.levels], "levels_ok": self.levels_ok,
                "sup": self.sup, "sup_ok": self.sup_ok, "bounded": self.bounded}


def _log2(v):
    return math.log2(v) if v > 0 else -math.inf


def certify_bounded(f: DenseFunction, n, C, s_star, delta, tol=1e-12) -> BoundednessReport:
    """Mean within delta of 1, level Wiener norms within F_C for d <= n/C^2, sup at most 2^{s*}."""
    mean = f.mean()
    mean_ok = abs(mean.imag) <= tol and abs(mean.real - 1) <= delta + tol
    lw = level_wiener(f)
    levels = []
    top = math.floor(n / C ** 2)
    for d in range(1, top + 1):
        w = lw[d] if d < len(lw) else 0.0
        b = log2_growth_bound(n, C, s_star, d)
        levels.append((d, _log2(w), b, _log2(w) <= b + 1e-9))
    sup = norm(f, math.inf)
    sup_ok = _log2(sup) <= s_star + 1e-12
    return BoundednessReport(n, C, s_star, delta, mean.real, bool(mean_ok), levels, sup, bool(sup_ok))


def crude_level_bound_log2(s_star, N, L, d) -> float:
    """log2 of 2^{s*/2} (3 N |Lambda| / d)^{d/2}."""
    return s_star / 2 + d / 2 * math.log2(3 * N * L / d)


def check_crude_levels(f: DenseFunction, s_star, L=None) -> CheckResult:
    """Every level d >= 1 within the crude high-degree bound; L defaults to |Lambda|."""
    L = f.dim if L is None else L
    lw = level_wiener(f)
    worst = -math.inf
    for d in range(1, f.dim + 1):
        worst = max(worst, _log2(lw[d]) - crude_level_bound_log2(s_star, f.N, L, d))
    return CheckResult("crude_levels", "pass" if worst <= 1e-9 else "fail", worst, 0.0, "log2 excess over bound")


def scalar_power_gap(x, l):
    """Returns (lhs, rhs) of (1+x)^l - l x <= (1 + 2 l x^2)^{l/2}; numpy broadcasting."""
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    return (1 + x) ** l - l * x, (1 + 2 * l * x * x) ** (l / 2)


def entropy_ratio_log(a, b, c, d):
    """ln(a^a d^d / (b^b c^c)), the quantity bracketed between 0 and d ln 2."""
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    return a * np.log(a) + d * np.log(d) - b * np.log(b) - c * np.log(c)


@dataclass
class SweepReport:
    name: str
    samples: int
    violations: int
    worst: float

    @property
    def passed(self):
        return self.violations == 0


def scalar_inequalities(samples: int, rng: np.random.Generator):
    """Randomized sweeps of the two elementary inequalities; returns two SweepReports."""
    x = np.concatenate([[0.0], rng.exponential(1.0, samples - 1) * rng.choice([1e-3, 1e-1, 1, 10], samples - 1)])
    x = np.minimum(x, 100.0)
    l = 2 + rng.random(samples) * 40
    lhs, rhs = scalar_power_gap(x, l)
    rel = (lhs - rhs) / rhs
    bad1 = int(np.sum(rel > 1e-12))
    a = rng.random(samples) * 20 + 1e-6
    r = rng.random(samples) * 20
    s = rng.random(samples) * 20
    b, c = a + r, a + r + s
    d = c + r  # a + d = b + c
    lr = entropy_ratio_log(a, b, c, d)
    scale = 1e-9 * (1 + d * np.log(d + 1))
    low_bad = lr < -scale
    high_bad = lr > d * np.log(2) + scale
    bad2 = int(np.sum(low_bad | high_bad))
    return (SweepReport("power_gap", samples, bad1, float(rel.max())),
            SweepReport("entropy_ratio", samples, bad2, float(max((-lr).max(), (lr - d * np.log(2)).max()))))


def spectrum_csv(f: DenseFunction) -> str:
    c = dft(f).values
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["b", "re", "im"])
    for i, v in enumerate(c):
        w.writerow([i, repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()
