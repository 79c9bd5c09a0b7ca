"""Dyadic cylinders, the cylinder-measure interface and analytic control measures.

Every mass in the package is a base-2 logarithm; ``-inf`` means zero mass.
Sums of masses go through :func:`logsumexp2`.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import BudgetExceeded, GenerationTooDeep, NotHalfSupported

DEFAULT_BUDGET = 50_000_000
MAX_INDEX_GENERATION = 62


def enumeration_budget(budget=None):
    """Resolve an enumeration budget: explicit value, then MFORGE_BUDGET, then default."""
    if budget is not None:
        return int(budget)
    env = os.environ.get("MFORGE_BUDGET")
    if env:
        return int(float(env))
    return DEFAULT_BUDGET


def logsumexp2(x, axis=None):
    """log2 of sum of 2**x, exact -inf for empty or all -inf input."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        if axis is None:
            return -math.inf
        shape = list(x.shape)
        del shape[axis]
        return np.full(shape, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log2(np.sum(np.exp2(x - safe), axis=axis, keepdims=True)) + safe
    out = np.where(np.isneginf(m), -np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class DyadicCylinder:
    """The interval [k 2^-j, (k+1) 2^-j) named by its j-bit binary prefix."""

    bits: str = ""

    def __post_init__(self):
        if any(c not in "01" for c in self.bits):
            raise ValueError(f"not a binary string: {self.bits!r}")

    @classmethod
    def from_index(cls, k, generation):
        if generation == 0:
            return cls("")
        return cls(format(int(k), f"0{generation}b"))

    @property
    def generation(self):
        return len(self.bits)

    @property
    def index(self):
        return int(self.bits, 2) if self.bits else 0

    @property
    def left(self):
        return math.ldexp(self.index, -self.generation)

    @property
    def width(self):
        return math.ldexp(1.0, -self.generation)

    def child(self, bit):
        return DyadicCylinder(self.bits + str(int(bit)))

    def parent(self):
        if not self.bits:
            raise ValueError("the unit interval has no parent")
        return DyadicCylinder(self.bits[:-1])

    def __add__(self, other):
        return DyadicCylinder(self.bits + _bits(other))

    def __str__(self):
        return self.bits or "<root>"


def _bits(c) -> str:
    if isinstance(c, DyadicCylinder):
        return c.bits
    if any(ch not in "01" for ch in c):
        raise ValueError(f"not a binary string: {c!r}")
    return c


@dataclass
class Support:
    """Owned snapshot of the positive-mass cylinders of one generation, in lexicographic order."""

    generation: int
    index: np.ndarray
    log2_mass: np.ndarray

    def __len__(self):
        return len(self.index)

    def __iter__(self) -> Iterator[tuple[DyadicCylinder, float]]:
        for k, m in zip(self.index.tolist(), self.log2_mass.tolist()):
            yield DyadicCylinder.from_index(k, self.generation), m

    def bits(self, i):
        return DyadicCylinder.from_index(self.index[i], self.generation).bits


class CylinderMeasure:
    """A probability measure on [0,1) queried through dyadic cylinders.

    Subclasses implement ``_log2_mass(bits)``; the public methods check the
    generation against ``max_generation`` (``None`` means unbounded).
    Enumeration, partition sums and histograms have generic fallbacks that
    subclasses override with faster exact routes.
    """

    max_generation: int | None = None
    descriptor = "measure"

    def params(self) -> dict:
        return {}

    def _check_generation(self, j):
        if j < 0:
            raise ValueError("generation must be non-negative")
        if self.max_generation is not None and j > self.max_generation:
            raise GenerationTooDeep(
                f"generation {j} exceeds max_generation {self.max_generation}"
            )

    def log2_mass(self, c) -> float:
        bits = _bits(c)
        self._check_generation(len(bits))
        if not bits:
            return 0.0
        return self._log2_mass(bits)

    def _log2_mass(self, bits: str) -> float:
        raise NotImplementedError

    def log2_prefix_masses(self, bits) -> np.ndarray:
        """Masses of every prefix of ``bits``, generations 0..len(bits)."""
        bits = _bits(bits)
        self._check_generation(len(bits))
        return np.array([self.log2_mass(bits[:k]) for k in range(len(bits) + 1)])

    def support_size_log2(self, j) -> float | None:
        """log2 of the number of positive-mass cylinders at generation j, if known."""
        return None

    def log2_partition_sum(self, q, j):
        """Exact log2 sum of mass**q over positive-mass generation-j cylinders, if available."""
        raise NotImplementedError

    @property
    def has_partition_sum(self):
        return type(self).log2_partition_sum is not CylinderMeasure.log2_partition_sum

    def enumerate_support(self, j, budget=None) -> Support:
        self._check_generation(j)
        budget = enumeration_budget(budget)
        est = self.support_size_log2(j)
        if est is not None and est > math.log2(budget):
            raise BudgetExceeded(j, est, budget)
        if j > MAX_INDEX_GENERATION:
            raise BudgetExceeded(j, float(j), budget)
        return self._enumerate(j, budget)

    def _enumerate(self, j, budget) -> Support:
        # breadth-first expansion through the mass oracle
        idx, mass = [0], [0.0]
        for g in range(j):
            nidx, nmass = [], []
            for k, _ in zip(idx, mass):
                for b in (0, 1):
                    c = (k << 1) | b
                    m = self.log2_mass(DyadicCylinder.from_index(c, g + 1))
                    if m > -math.inf:
                        nidx.append(c)
                        nmass.append(m)
            if len(nidx) > budget:
                raise BudgetExceeded(g + 1, math.log2(len(nidx)), budget)
            idx, mass = nidx, nmass
        return Support(j, np.array(idx, dtype=np.int64), np.array(mass, dtype=float))


# -- operations ---------------------------------------------------------------


def mass(measure: CylinderMeasure, c) -> float:
    """log2 of the measure of cylinder ``c``; -inf off the support."""
    return measure.log2_mass(c)


def enumerate_support(measure: CylinderMeasure, j, budget=None) -> Support:
    return measure.enumerate_support(j, budget)


def check_normalization(measure: CylinderMeasure, j, budget=None, method="auto") -> float:
    """|log2 of the total generation-j mass|.

    ``method`` is ``"enumerate"``, ``"partition"`` (exact partition sum at
    q=1, for measures that provide one) or ``"auto"``, which enumerates when
    the support fits the budget and falls back to the partition sum.
    """
    measure._check_generation(j)
    if method == "auto":
        est = measure.support_size_log2(j)
        fits = est is None or est <= math.log2(enumeration_budget(budget))
        method = "enumerate" if fits or not measure.has_partition_sum else "partition"
    if method == "enumerate":
        total = logsumexp2(measure.enumerate_support(j, budget).log2_mass)
    elif method == "partition":
        total = float(np.asarray(measure.log2_partition_sum(1.0, j)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return abs(total)


# -- control measures ---------------------------------------------------------


class BernoulliMeasure(CylinderMeasure):
    """Binary Bernoulli measure; digit 0 carries mass ``p``."""

    descriptor = "bernoulli"

    def __init__(self, p):
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        self.p = float(p)
        self._w = (math.log2(self.p), math.log2(1.0 - self.p))

    def params(self):
        return {"p": self.p}

    def _log2_mass(self, bits):
        ones = bits.count("1")
        return (len(bits) - ones) * self._w[0] + ones * self._w[1]

    def log2_prefix_masses(self, bits):
        bits = _bits(bits)
        self._check_generation(len(bits))
        steps = np.where(np.frombuffer(bits.encode(), np.uint8) == ord("1"), self._w[1], self._w[0])
        return np.concatenate([[0.0], np.cumsum(steps)])

    def support_size_log2(self, j):
        return float(j)

    def log2_partition_sum(self, q, j):
        q = np.asarray(q, dtype=float)
        return j * np.logaddexp2(q * self._w[0], q * self._w[1])

    def _enumerate(self, j, budget):
        idx = np.arange(2**j, dtype=np.int64)
        ones = np.bitwise_count(idx).astype(float)
        return Support(j, idx, (j - ones) * self._w[0] + ones * self._w[1])

    def dimension(self):
        """Entropy in bits, which is the dimension of the measure."""
        p = self.p
        return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))

    def tau_exact(self, q):
        q = np.asarray(q, dtype=float)
        return -np.logaddexp2(q * self._w[0], q * self._w[1])


def bernoulli(p) -> BernoulliMeasure:
    return BernoulliMeasure(p)


def lebesgue() -> BernoulliMeasure:
    return BernoulliMeasure(0.5)


class ConditionedMeasure(CylinderMeasure):
    """``base`` restricted to the cylinder ``prefix`` and renormalised."""

    descriptor = "conditioned"

    def __init__(self, base: CylinderMeasure, prefix):
        self.base = base
        self.prefix = _bits(prefix)
        self.max_generation = base.max_generation
        self._norm = base.log2_mass(self.prefix)
        if self._norm == -math.inf:
            raise ValueError("cannot condition on a null cylinder")

    def params(self):
        return {"base": self.base.descriptor, "base_params": self.base.params(), "prefix": self.prefix}

    def _log2_mass(self, bits):
        p = self.prefix
        if bits.startswith(p):
            return self.base.log2_mass(bits) - self._norm
        if p.startswith(bits):
            return 0.0
        return -math.inf

    def support_size_log2(self, j):
        if j <= len(self.prefix):
            return 0.0
        est = self.base.support_size_log2(j)
        return est

    def _enumerate(self, j, budget):
        p = self.prefix
        if j <= len(p):
            return Support(j, np.array([int(p[:j], 2) if j else 0], dtype=np.int64), np.zeros(1))
        s = self.base.enumerate_support(j, budget)
        lo = int(p, 2) << (j - len(p)) if p else 0
        hi = lo + (1 << (j - len(p)))
        keep = (s.index >= lo) & (s.index < hi)
        return Support(j, s.index[keep], s.log2_mass[keep] - self._norm)


class RotationExtension(CylinderMeasure):
    """Invariant measure of x -> x + 1/2 (mod 1) built from a measure on [0, 1/2).

    mu(c) = nu(c & [0,1/2))/2 + nu((c - 1/2) & [0,1/2))/2.
    """

    descriptor = "rotation_extension"

    def __init__(self, nu: CylinderMeasure):
        if nu.log2_mass("1") > -math.inf:
            raise NotHalfSupported("nu gives positive mass to [1/2, 1)")
        self.nu = nu
        self.max_generation = nu.max_generation

    def params(self):
        return {"nu": self.nu.descriptor, "nu_params": self.nu.params()}

    def _log2_mass(self, bits):
        return self.nu.log2_mass("0" + bits[1:]) - 1.0

    def log2_prefix_masses(self, bits):
        bits = _bits(bits)
        self._check_generation(len(bits))
        if not bits:
            return np.zeros(1)
        out = self.nu.log2_prefix_masses("0" + bits[1:]) - 1.0
        out[0] = 0.0
        return out

    def support_size_log2(self, j):
        est = self.nu.support_size_log2(j)
        return None if est is None else est + (1.0 if j > 0 else 0.0)

    def _enumerate(self, j, budget):
        if j == 0:
            return Support(0, np.zeros(1, dtype=np.int64), np.zeros(1))
        s = self.nu.enumerate_support(j, budget)
        shift = np.int64(1) << np.int64(j - 1)
        return Support(
            j,
            np.concatenate([s.index, s.index + shift]),
            np.concatenate([s.log2_mass - 1.0, s.log2_mass - 1.0]),
        )


def rotation_extend(nu: CylinderMeasure) -> RotationExtension:
    return RotationExtension(nu)


# -- MeasureDump --------------------------------------------------------------


@dataclass
class MeasureDump:
    generation: int
    measure: str
    params: dict
    bits: list
    log2_mass: np.ndarray

    def defect(self):
        return abs(logsumexp2(self.log2_mass))


def _atomic_write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def dump_lines(measure: CylinderMeasure, j, params=None, budget=None) -> list[str]:
    s = measure.enumerate_support(j, budget)
    header = {"generation": j, "measure": measure.descriptor, "params": params if params is not None else measure.params()}
    lines = [json.dumps(header, sort_keys=True)]
    for k, m in zip(s.index.tolist(), s.log2_mass.tolist()):
        bits = format(k, f"0{j}b") if j else ""
        lines.append(json.dumps({"bits": bits, "log2_mass": float(format(m, ".12g"))}))
    return lines


def write_dump(measure: CylinderMeasure, j, path, params=None, budget=None):
    _atomic_write_text(path, "\n".join(dump_lines(measure, j, params, budget)) + "\n")


def read_dump(path) -> MeasureDump:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        bits, masses = [], []
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                bits.append(rec["bits"])
                masses.append(rec["log2_mass"])
    j = header["generation"]
    if any(len(b) != j for b in bits):
        raise ValueError("record generation does not match header")
    if bits != sorted(bits):
        raise ValueError("records are not in lexicographic order")
    return MeasureDump(j, header["measure"], header.get("params", {}), bits, np.array(masses, dtype=float))
