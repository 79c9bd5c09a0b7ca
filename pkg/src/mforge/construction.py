"""The labelled Cantor construction and its product measure.

Block layout of a prefix: block 1 is the single leading bit, block k >= 2
has length ``L[k-1]`` and is an admissible word of the SFT attached to the
label ``y_1 .. y_{k-1}`` collected so far.  Whether block k falls in the
lower or the upper half of the extent of its SFT's words decides the next
label bit ``y_k``.  The mass of a cylinder is ``1/2`` times the Parry masses
of its blocks, each under the SFT the block was drawn from.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import CylinderMeasure, Support, _atomic_write_text, _bits, logsumexp2
from .errors import InadmissiblePrefix, OverflowFaithful
from .sft import Sft, burn_in
from .targeting import LabelInterval, SftFamily, exact, label_interval

FAITHFUL_LIMIT = 2**63
HIST_RESOLUTION = 2.0**-7


def delta(J, a, b) -> Fraction:
    return (exact(b) - exact(a)) / (6 * 2**J)


@dataclass(frozen=True)
class Violation:
    level: int
    constraint: str
    lhs: float
    rhs: float


@dataclass
class ConstructionPlan:
    """All construction constants.  Lists are indexed from level 1:
    ``delta[J-1]``, ``N[J-1]``, ``M[J-1]`` and ``L[J-1]`` (with ``L[0] == 1``)."""

    a: Fraction
    b: Fraction
    family: SftFamily
    mode: str
    delta: list
    N: list
    M: list
    L: list
    violations: list = field(default_factory=list)
    family_path: str | None = None

    @property
    def J_max(self):
        return self.family.J_max

    @property
    def n_blocks(self):
        return len(self.L)

    @property
    def boundaries(self):
        """Generations 1 + L_2 + ... + L_J for J = 1 .. J_max + 1."""
        return np.cumsum(self.L).tolist()

    @property
    def max_generation(self):
        return int(sum(self.L))

    def to_json(self) -> dict:
        return {
            "a": str(self.a),
            "b": str(self.b),
            "mode": self.mode,
            "L": [int(x) for x in self.L],
            "delta": [str(d) for d in self.delta],
            "N": self.N,
            "M": self.M,
            "family": self.family_path,
            "violations": [asdict(v) for v in self.violations],
        }

    def save(self, path, family_path=None):
        if family_path is not None:
            self.family_path = str(family_path)
        _atomic_write_text(path, json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path, family: SftFamily | None = None) -> "ConstructionPlan":
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        if family is None:
            fpath = Path(d["family"])
            if not fpath.is_absolute():
                fpath = path.parent / fpath
            family = SftFamily.load(fpath)
        return cls(
            Fraction(d["a"]), Fraction(d["b"]), family, d["mode"],
            [Fraction(x) for x in d["delta"]], d["N"], d["M"], d["L"],
            [Violation(**v) for v in d["violations"]], d.get("family"),
        )


def step3_constant(prev: Sft, cur: Sft, d: Fraction, N: int) -> int:
    """Smallest m such that, for every length j <= N, every word C_j of ``cur`` and
    every word C'_m' (m' >= m) of ``prev``, the product of their Parry masses lies
    in (2^-(h'+d)(m'+j), 2^-(h'-d)(m'+j)), h' the entropy of ``prev``."""
    cert = prev.certificate
    h = prev.h
    d = float(d)
    lo, hi = cur.log2_mass_extremes(N)
    j = np.arange(1, N + 1)
    need = np.maximum(cert.mass_hi_log2 + hi + (h - d) * j, -(cert.mass_lo_log2 + lo + (h + d) * j))
    r = float(need.max())
    m = 1 if r < 0 else math.floor(r / d) + 1
    return max(m, cert.mass_lo_ok_from, cert.mass_hi_ok_from)


def plan(a, b, family: SftFamily, mode="scaled", L_override=None) -> ConstructionPlan:
    """Construction constants for ``family``.

    ``L_override`` lists the block lengths L_2 .. L_{J_max+1} (required in
    scaled mode).  Faithful mode computes the smallest lengths meeting
        L_J >= 2 * sum_{j<=J} (M_j + N_j)   and   L_J >= (2 / delta_J) * L_{J-1},
    the sum running over the levels the family defines.
    """
    a, b = exact(a), exact(b)
    if (a, b) != (family.a, family.b):
        raise ValueError("family was built for a different (a, b)")
    J_max = family.J_max
    deltas = [delta(J, a, b) for J in range(1, J_max + 2)]
    N = [max(burn_in(family[y], deltas[J - 1]) for y in family.labels(J)) for J in range(1, J_max + 1)]
    M = [0]
    for J in range(2, J_max + 1):
        M.append(max(step3_constant(family[y[:-1]], family[y], deltas[J - 1], N[J - 1]) for y in family.labels(J)))
    mn = np.cumsum([M[j] + N[j] for j in range(J_max)]).tolist()

    def floor_a(k):  # block k = 2 .. J_max+1
        return 2 * mn[min(k, J_max) - 1]

    if mode == "faithful":
        L = [1]
        for k in range(2, J_max + 2):
            need = max(floor_a(k), math.ceil(Fraction(2) / deltas[k - 1] * L[-1]))
            if need >= FAITHFUL_LIMIT:
                rate = " * ".join(str(Fraction(2) / d) for d in deltas[1:k])
                raise OverflowFaithful(f"L_{k} = {need} exceeds 2^63; lengths grow like {rate}")
            L.append(int(need))
    elif mode == "scaled":
        if L_override is None or len(L_override) != J_max:
            raise ValueError(f"scaled mode needs {J_max} block lengths L_2 .. L_{J_max + 1}")
        L = [1] + [int(x) for x in L_override]
        if any(x < 1 for x in L):
            raise ValueError("block lengths must be positive")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    violations = []
    for k in range(2, J_max + 2):
        if L[k - 1] < floor_a(k):
            violations.append(Violation(k, "L_over_sum_MN", L[k - 1] / mn[min(k, J_max) - 1], 2.0))
        ratio = Fraction(L[k - 1], L[k - 2])
        bound = Fraction(2) / deltas[k - 1]
        if ratio < bound:
            violations.append(Violation(k, "lacunary", float(ratio), float(bound)))
    if mode == "faithful" and violations:
        raise AssertionError("faithful lengths violate their own constraints")
    return ConstructionPlan(a, b, family, mode, deltas, N, M, L, violations)


# -- decomposition -------------------------------------------------------------


@dataclass
class BlockDecomposition:
    blocks: list
    labels: str
    partial: bool

    def bits(self):
        return "".join(self.blocks)


@dataclass
class KPoint:
    labels: str
    digits: str
    h_estimates: list


class ConstructedMeasure(CylinderMeasure):
    """The product measure of a plan, queried lazily on dyadic prefixes."""

    descriptor = "constructed"

    def __init__(self, plan: ConstructionPlan):
        self.plan = plan
        self.family = plan.family
        self.L = list(plan.L)
        self.starts = np.concatenate([[0], np.cumsum(self.L)]).tolist()
        self.max_generation = plan.max_generation
        self._bound_cache = {}
        self._hcache = {}
        self._histcache = {}

    def params(self):
        return self.plan.to_json()

    # -- labels ---------------------------------------------------------------

    def bound(self, y: str) -> str:
        """Largest word of the lower half for the block drawn from Sigma(y).

        The lower half is the set of words whose cylinder starts strictly
        before min + diam/2 of the union of the SFT's words of that length.
        """
        if y not in self._bound_cache:
            sft = self.family[y]
            n = self.L[len(y)]
            wmin = int(sft.lex_extreme_word(n), 2)
            wmax = int(sft.lex_extreme_word(n, largest=True), 2)
            self._bound_cache[y] = format((wmin + wmax) // 2, f"0{n}b")
        return self._bound_cache[y]

    def decompose(self, prefix) -> BlockDecomposition:
        prefix = _bits(prefix)
        if len(prefix) > self.max_generation:
            raise InadmissiblePrefix(f"prefix longer than {self.max_generation}")
        blocks, labels = [], ""
        for k, start in enumerate(self.starts[:-1]):
            if start >= len(prefix):
                break
            blk = prefix[start:start + self.L[k]]
            blocks.append(blk)
            if k == 0:
                labels = blk
                continue
            sft = self.family[labels]
            if not sft.is_admissible(blk):
                raise InadmissiblePrefix(f"block {k + 1} ({blk}) is not a word of Sigma({labels})")
            if len(blk) == self.L[k] and k < self.plan.J_max:
                labels += "0" if blk <= self.bound(labels) else "1"
        partial = bool(blocks) and len(blocks[-1]) < self.L[len(blocks) - 1]
        return BlockDecomposition(blocks, labels, partial)

    # -- masses ----------------------------------------------------------------

    def _log2_mass(self, bits):
        total = -1.0
        labels = bits[0]
        for k in range(1, self.n_blocks_in(len(bits))):
            start = self.starts[k]
            blk = bits[start:start + self.L[k]]
            total += self.family[labels].log2_mass(blk)
            if total == -math.inf:
                return total
            if len(blk) == self.L[k] and k < self.plan.J_max:
                labels += "0" if blk <= self.bound(labels) else "1"
        return total

    def n_blocks_in(self, j):
        return int(np.searchsorted(self.starts, j, side="left"))

    def log2_prefix_masses(self, bits):
        bits = _bits(bits)
        self._check_generation(len(bits))
        out = np.full(len(bits) + 1, -np.inf)
        out[0] = 0.0
        if not bits:
            return out
        out[1] = -1.0
        labels = bits[0]
        for k in range(1, self.n_blocks_in(len(bits))):
            start = self.starts[k]
            blk = bits[start:start + self.L[k]]
            pm = self.family[labels].log2_prefix_masses(blk)
            out[start + 1:start + 1 + len(blk)] = out[start] + pm[1:]
            if not np.isfinite(out[start + len(blk)]):
                break
            if len(blk) == self.L[k] and k < self.plan.J_max:
                labels += "0" if blk <= self.bound(labels) else "1"
        return out

    # -- exact block-product sums -------------------------------------------------

    def _split(self, j):
        """(number of full blocks J, trailing partial length n) for generation j."""
        J = int(np.searchsorted(self.starts, j, side="right")) - 1
        return J, j - self.starts[J]

    def _half_sum(self, y, side, qs):
        key = (y, side, qs.tobytes())
        if key not in self._hcache:
            sft = self.family[y]
            self._hcache[key] = sft.bounded_partition_sum_log2(qs, self.L[len(y)], self.bound(y), side)
        return self._hcache[key]

    def _path_weights(self, depth, qs):
        """log2 W(y) for all labels of length ``depth``: 2^-q times the half sums along y."""
        w = {"0": -qs, "1": -qs}
        for level in range(1, depth):
            nw = {}
            for y, val in w.items():
                nw[y + "0"] = val + self._half_sum(y, "le", qs)
                nw[y + "1"] = val + self._half_sum(y, "gt", qs)
            w = nw
        return w

    def log2_partition_sum(self, q, j):
        """log2 of the sum of mu(C)**q over positive-mass cylinders of generation j."""
        q = np.asarray(q, dtype=float)
        qs = np.atleast_1d(q).astype(float)
        self._check_generation(j)
        if j == 0:
            out = np.zeros_like(qs)
        else:
            J, n = self._split(j)
            J_max = self.plan.J_max
            if J > J_max:  # final boundary: last block is complete
                J, n = J_max, self.L[J_max]
            w = self._path_weights(J, qs)
            terms = []
            for y, val in w.items():
                if n > 0:
                    val = val + self.family[y].partition_sum_log2(qs, n)
                terms.append(val)
            out = logsumexp2(np.array(terms), axis=0)
        return float(out[0]) if q.ndim == 0 else out

    def support_size_log2(self, j):
        return float(self.log2_partition_sum(0.0, j)) if j > 0 else 0.0

    # -- mass histograms ------------------------------------------------------------

    def _block_hist(self, y, length, side, r):
        """Histogram (first bin, log2 counts) of log2 mu over the words of Sigma(y) of
        ``length`` on ``side`` of the bound (None for all words), bin width r."""
        key = (y, length, side, r)
        if key in self._histcache:
            return self._histcache[key]
        sft = self.family[y]
        m = sft.memory
        if length <= m:
            codes, masses = sft.enumerate_words(length)
            if side is not None:
                T = int(self.bound(y), 2)
                keep = codes <= T if side == "le" else codes > T
                masses = masses[keep]
            idx = np.rint(masses / r).astype(np.int64)
            logc = np.zeros(len(idx))
        else:
            if side is None:
                C = sft.log2_count_matrix(length - m)
            else:
                start = np.where(np.eye(sft.n_states) > 0, 0.0, -np.inf)
                F, scale = sft.word_flow(length, start, self.bound(y), side)
                with np.errstate(divide="ignore"):
                    C = (np.log2(F) + scale[None, :]).T  # (start, end)
            ub = np.rint(sft.log2_u / r).astype(np.int64)
            vb = np.rint(sft.log2_v / r).astype(np.int64)
            cb = int(round(-(length - m) * sft.h / r))
            idx = (ub[:, None] + vb[None, :] + cb).ravel()
            logc = C.ravel()
            keep = np.isfinite(logc)
            idx, logc = idx[keep], logc[keep]
        out = _bin(idx, logc)
        self._histcache[key] = out
        return out

    def log2_mass_histogram(self, j, resolution=HIST_RESOLUTION):
        """Binned distribution of log2 mu(C) over positive-mass generation-j cylinders.

        Returns ``(values, log2_counts)``: bin centres (multiples of
        ``resolution``) and log2 of the number of cylinders in each bin.
        Each block's value is rounded to the grid, so bins are exact up to
        1.5 * resolution per block.
        """
        self._check_generation(j)
        r = float(resolution)
        if j == 0:
            return np.zeros(1), np.zeros(1)
        J, n = self._split(j)
        J_max = self.plan.J_max
        if J > J_max:
            J, n = J_max, self.L[J_max]
        first = int(round(-1.0 / r))
        hists = {"0": (first, np.zeros(1)), "1": (first, np.zeros(1))}
        for level in range(1, J):
            nh = {}
            for y, hist in hists.items():
                nh[y + "0"] = _convolve(hist, self._block_hist(y, self.L[level], "le", r))
                nh[y + "1"] = _convolve(hist, self._block_hist(y, self.L[level], "gt", r))
            hists = nh
        if n > 0:
            hists = {y: _convolve(h, self._block_hist(y, n, None, r)) for y, h in hists.items()}
        lo = min(h[0] for h in hists.values())
        hi = max(h[0] + len(h[1]) for h in hists.values())
        total = np.full(hi - lo, -np.inf)
        for off, lc in hists.values():
            seg = slice(off - lo, off - lo + len(lc))
            total[seg] = np.logaddexp2(total[seg], lc)
        values = (np.arange(lo, hi) * r)
        keep = np.isfinite(total)
        return values[keep], total[keep]

    # -- enumeration ------------------------------------------------------------------

    def _enumerate(self, j, budget):
        if j == 0:
            return Support(0, np.zeros(1, dtype=np.int64), np.zeros(1))
        J, n = self._split(j)
        J_max = self.plan.J_max
        groups = {"0": (np.array([0], dtype=np.int64), np.array([-1.0])),
                  "1": (np.array([1], dtype=np.int64), np.array([-1.0]))}
        for k in range(1, self.n_blocks_in(j)):
            length = min(self.L[k], j - self.starts[k])
            split = length == self.L[k] and k < J_max
            ng = {}
            for y, (idx, mass) in groups.items():
                codes, wm = self.family[y].enumerate_words(length)
                if split:
                    T = int(self.bound(y), 2)
                    parts = [("0", codes <= T), ("1", codes > T)]
                else:
                    parts = [("", np.ones(len(codes), dtype=bool))]
                for bit, sel in parts:
                    ni = ((idx[:, None] << np.int64(length)) | codes[sel][None, :]).ravel()
                    nm = (mass[:, None] + wm[sel][None, :]).ravel()
                    ng[y + bit] = (ni, nm)
            groups = ng
        idx = np.concatenate([g[0] for g in groups.values()])
        mass = np.concatenate([g[1] for g in groups.values()])
        order = np.argsort(idx, kind="stable")
        del J, n
        return Support(j, idx[order], mass[order])


def _bin(idx, logc):
    lo = int(idx.min())
    out = np.full(int(idx.max()) - lo + 1, -np.inf)
    order = np.argsort(idx, kind="stable")
    idx, logc = idx[order] - lo, logc[order]
    bounds = np.flatnonzero(np.diff(idx)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(idx)]])
    for s, e in zip(starts, ends):
        out[idx[s]] = logsumexp2(logc[s:e])
    return lo, out


def _convolve(h1, h2):
    """Log-space convolution of two binned histograms."""
    (o1, a), (o2, b) = h1, h2
    if len(a) < len(b):
        (o1, a), (o2, b) = (o2, b), (o1, a)
    out = np.full(len(a) + len(b) - 1, -np.inf)
    for i, bv in enumerate(b):
        if bv == -np.inf:
            continue
        seg = slice(i, i + len(a))
        out[seg] = np.logaddexp2(out[seg], a + bv)
    return o1 + o2, out


# -- module-level operations -----------------------------------------------------


def decompose(plan: ConstructionPlan, prefix) -> BlockDecomposition:
    return ConstructedMeasure(plan).decompose(prefix)


def mu_mass(plan_or_measure, prefix) -> float:
    measure = plan_or_measure if isinstance(plan_or_measure, ConstructedMeasure) else ConstructedMeasure(plan_or_measure)
    return measure.log2_mass(prefix)


def sample_point(measure: ConstructedMeasure, labels: str, depth=None) -> KPoint:
    """Concrete digits realising ``labels``: in each block the lexicographically
    smallest admissible word in the requested half (the smallest word when no
    label bit is requested)."""
    if isinstance(measure, ConstructionPlan):
        measure = ConstructedMeasure(measure)
    fam = measure.family
    depth = measure.max_generation if depth is None else int(depth)
    if not labels or len(labels) > measure.plan.J_max:
        raise ValueError(f"need 1 .. {measure.plan.J_max} labels")
    digits = labels[0]
    y = labels[0]
    for k in range(1, measure.n_blocks_in(depth)):
        sft = fam[y]
        n = measure.L[k]
        want = labels[k] if k < len(labels) else None
        if want == "1":
            blk = sft.smallest_word_above(measure.bound(y))
        else:
            blk = sft.lex_extreme_word(n)
        digits += blk
        if k < measure.plan.J_max:
            y += "0" if blk <= measure.bound(y) else "1"
    digits = digits[:depth]
    dec = measure.decompose(digits)
    got = dec.labels[: len(labels)]
    if got != labels[: len(got)]:
        raise AssertionError(f"sample point carries labels {got}, wanted {labels}")
    return KPoint(labels, digits, [fam.entropy(labels[:j]) for j in range(1, len(labels) + 1)])


def h_limit(plan: ConstructionPlan, point: KPoint) -> tuple[float, float]:
    """Midpoint of the deepest label interval of the point, with its half width."""
    iv = label_interval(point.labels, plan.a, plan.b)
    return float(iv.mid), float(iv.width / 2)


def local_dim_envelope(plan: ConstructionPlan, labels: str) -> tuple[float, float]:
    """Label interval of ``labels`` widened by 2 delta_J on both sides."""
    iv: LabelInterval = label_interval(labels, plan.a, plan.b)
    d = 2 * plan.delta[len(labels) - 1]
    return float(iv.lo - d), float(iv.hi + d)


def boundary_envelope(plan: ConstructionPlan, labels: str, generation: int) -> tuple[float, float]:
    """Advisory sandwich for -log2 mu(C)/|C| of a boundary cylinder whose last
    block was drawn from Sigma(labels):
    [(h - 2 d)(1 - d), (h + 2 d)(1 + d)], h its entropy and d = delta_|labels|."""
    h = plan.family.entropy(labels)
    d = float(plan.delta[len(labels) - 1])
    del generation
    return (h - 2 * d) * (1 - d), (h + 2 * d) * (1 + d)
