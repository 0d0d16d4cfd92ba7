"""Small helpers: rationals, hashing, seeds and confidence intervals."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


def frac_str(q) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def parse_frac(s) -> Fraction:
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, str):
        return Fraction(s.strip())
    raise TypeError(f"cannot read {s!r} as a rational")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def _path_key(p) -> int:
    if isinstance(p, str):
        return int.from_bytes(hashlib.sha256(p.encode()).digest()[:4], "big")
    return int(p)


def derive_seed(master: int, *path) -> int:
    """Deterministic 64-bit seed for a sub-stream (trial index, stream name...)."""
    ss = np.random.SeedSequence(entropy=int(master) & ((1 << 64) - 1), spawn_key=tuple(_path_key(p) for p in path))
    a, b = ss.generate_state(2, dtype=np.uint32)
    return (int(a) << 32) | int(b)


def rng_for(master: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *path))


@dataclass(frozen=True)
class Interval:
    estimate: float
    low: float
    high: float
    successes: int
    trials: int


def wilson(successes: int, trials: int, z: float = 1.96) -> Interval:
    if trials <= 0:
        return Interval(float("nan"), 0.0, 1.0, successes, trials)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return Interval(p, max(0.0, centre - half), min(1.0, centre + half), successes, trials)


def lcm_all(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def py_rng(master: int, *path: int):
    """A stdlib Random for a derived sub-stream; cheap for many small draws."""
    import random

    return random.Random(derive_seed(master, *path))
