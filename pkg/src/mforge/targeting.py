"""Label intervals and the label -> SFT map with Cantor-coded entropies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .errors import Degenerate, NotPrimitive, Unreachable
from .sft import Sft, _period, spectral_radius

MARGIN = 1e-4


def exact(x) -> Fraction:
    """Decimal-faithful rational for user-supplied reals (0.2 -> 1/5)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class LabelInterval:
    label: str
    lo: Fraction
    hi: Fraction

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return (self.lo + self.hi) / 2

    def __contains__(self, h):
        return float(self.lo) < h < float(self.hi)


def label_interval(y: str, a, b) -> LabelInterval:
    """Open interval of entropies assigned to label ``y``:
    (b-a) * [sum_{j<J} 2 y_j / 3^j + (2 y_J / 3^J, (2 y_J + 1) / 3^J)] + a.
    """
    if not y or any(c not in "01" for c in y):
        raise ValueError(f"bad label {y!r}")
    a, b = exact(a), exact(b)
    if not (0 <= a < b <= 1):
        raise ValueError("need 0 <= a < b <= 1")
    left = sum((Fraction(2 * int(c), 3**j) for j, c in enumerate(y, 1)), Fraction(0))
    w = Fraction(1, 3 ** len(y))
    return LabelInterval(y, a + (b - a) * left, a + (b - a) * (left + w))


def required_memory(lo, hi) -> int:
    return math.ceil(math.log2(4.0 / (hi - lo)))


def _edges_of(m):
    n = 1 << m
    e = np.arange(2 * n)
    s = e // 2
    t = ((s << 1) | (e % 2)) & (n - 1)
    return s, t


class _Graph:
    """de Bruijn graph of memory m with an edge-alive mask, evaluated on demand."""

    def __init__(self, m):
        self.m = m
        self.src, self.dst = _edges_of(m)
        self.n = 1 << m

    def core(self, alive):
        """(entropy, primitive, kept edge mask) for the max-entropy strong component."""
        s, t = self.src[alive], self.dst[alive]
        eids = np.nonzero(alive)[0]
        A = sp.csr_matrix((np.ones(len(s)), (s, t)), shape=(self.n, self.n))
        ncomp, lab = csgraph.connected_components(A, directed=True, connection="strong")
        same = lab[s] == lab[t]
        comps = np.unique(lab[s][same])
        best = (0.0, None)
        for c in comps:
            sel = same & (lab[s] == c)
            nodes = np.unique(s[sel])
            idx = np.full(self.n, -1)
            idx[nodes] = np.arange(len(nodes))
            sub = sp.csr_matrix((np.ones(sel.sum()), (idx[s[sel]], idx[t[sel]])), shape=(len(nodes),) * 2)
            rho = spectral_radius(sub)
            # ties broken by component containing the smallest state
            if rho > best[0] + 1e-12:
                best = (rho, (sel, idx, nodes))
        if best[1] is None or best[0] <= 1.0:
            return 0.0, False, np.zeros_like(alive)
        sel, idx, nodes = best[1]
        prim = _period(len(nodes), idx[s[sel]], idx[t[sel]]) == 1
        kept = np.zeros_like(alive)
        kept[eids[sel]] = True
        return math.log2(best[0]), prim, kept


def _search_memory(m, lo, hi, rng):
    g = _Graph(m)
    order = rng.permutation(2 * g.n)
    alive = np.ones(2 * g.n, dtype=bool)
    h, prim, kept = g.core(alive)
    if lo < h < hi and prim:
        return kept
    # bulk phase: the longest prefix of the removal order that keeps h >= hi.
    # entropy only falls as edges go, so bisection reproduces the greedy walk.
    lo_k, hi_k = 0, len(order)
    while hi_k - lo_k > 1:
        mid = (lo_k + hi_k) // 2
        trial = alive.copy()
        trial[order[:mid]] = False
        if g.core(trial)[0] >= hi:
            lo_k = mid
        else:
            hi_k = mid
    alive[order[:lo_k]] = False
    # fine phase: single removals, backtracking any that undershoot or lose mixing
    for e in order[lo_k:]:
        trial = alive.copy()
        trial[e] = False
        h, prim, kept = g.core(trial)
        if h <= lo:
            continue
        if h < hi:
            if prim:
                return kept
            continue
        alive = trial
    return None


def find_sft(lo, hi, max_memory=12, seed=0) -> Sft:
    """A mixing SFT whose entropy (bits) lies strictly inside (lo, hi)."""
    lo, hi = float(lo), float(hi)
    if not (0 < lo < hi <= 1):
        raise ValueError("need 0 < lo < hi <= 1")
    margin = MARGIN * (hi - lo)
    tlo, thi = lo + margin, hi - margin
    start = max(1, math.ceil(math.log2(1.0 / (hi - lo))))
    need = required_memory(lo, hi)
    if start > max_memory:
        raise Unreachable(
            f"interval ({lo}, {hi}) needs memory ~{need} > max_memory={max_memory}", required_memory=need
        )
    for m in range(start, max_memory + 1):
        rng = np.random.default_rng([int(seed), m])
        kept = _search_memory(m, tlo, thi, rng)
        if kept is not None:
            forbidden = np.nonzero(~kept)[0].tolist()
            try:
                sft = Sft(m, forbidden)
            except (NotPrimitive, Degenerate):
                continue
            if tlo < sft.h < thi:
                return sft
    raise Unreachable(
        f"no SFT with entropy in ({lo}, {hi}) up to memory {max_memory}; estimate {need}",
        required_memory=need,
    )


def label_seed(seed, label) -> int:
    return int(np.random.SeedSequence([int(seed), len(label), int(label, 2)]).generate_state(1)[0])


@dataclass
class SftFamily:
    a: Fraction
    b: Fraction
    J_max: int
    max_memory: int
    seed: int
    assignments: dict = field(default_factory=dict)

    def __getitem__(self, label) -> Sft:
        return self.assignments[label]

    def labels(self, J=None):
        if J is None:
            return sorted(self.assignments, key=lambda y: (len(y), y))
        return [format(k, f"0{J}b") for k in range(2**J)]

    def interval(self, label) -> LabelInterval:
        return label_interval(label, self.a, self.b)

    def entropy(self, label) -> float:
        return self.assignments[label].h

    def validate(self):
        for y, s in self.assignments.items():
            if s.h not in self.interval(y):
                raise AssertionError(f"entropy of {y} outside its label interval")
        for J in range(1, self.J_max + 1):
            hs = [self.entropy(y) for y in self.labels(J)]
            if any(x >= y for x, y in zip(hs, hs[1:])):
                raise AssertionError(f"entropies not increasing at level {J}")

    def manifest(self) -> dict:
        return {
            "a": str(self.a),
            "b": str(self.b),
            "J_max": self.J_max,
            "max_memory": self.max_memory,
            "seed": self.seed,
            "labels": {
                y: {"sft": self.assignments[y].descriptor(), "entropy": self.assignments[y].h}
                for y in self.labels()
            },
        }

    @classmethod
    def from_manifest(cls, d: dict) -> "SftFamily":
        fam = cls(Fraction(d["a"]), Fraction(d["b"]), int(d["J_max"]), int(d["max_memory"]), int(d["seed"]))
        for y, rec in d["labels"].items():
            fam.assignments[y] = Sft.from_descriptor(rec["sft"])
        fam.validate()
        return fam

    def save(self, path):
        from .core import _atomic_write_text

        _atomic_write_text(path, json.dumps(self.manifest(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_manifest(json.loads(Path(path).read_text(encoding="utf-8")))


def build_family(a, b, J_max=4, max_memory=12, seed=0) -> SftFamily:
    a, b = exact(a), exact(b)
    if not (0 < a < b <= 1):
        raise ValueError("need 0 < a < b <= 1")
    if J_max < 1:
        raise ValueError("J_max must be >= 1")
    fam = SftFamily(a, b, int(J_max), int(max_memory), int(seed))
    for J in range(1, J_max + 1):
        for y in fam.labels(J):
            iv = fam.interval(y)
            try:
                fam.assignments[y] = find_sft(float(iv.lo), float(iv.hi), max_memory, label_seed(seed, y))
            except Unreachable as exc:
                raise Unreachable(f"label {y}: {exc}", exc.required_memory, label=y) from exc
    fam.validate()
    return fam
