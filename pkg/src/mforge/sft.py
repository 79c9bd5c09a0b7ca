"""Mixing subshifts of finite type on {0,1} and their Parry measures.

An Sft of memory ``m`` is a subgraph of the de Bruijn graph whose vertices
are m-bit words.  The edge ``s --b--> t`` realises the (m+1)-word ``s b`` and
has id ``2*s + b``.  Entropies are stored in bits.

For a word ``w`` of length ``j >= m`` starting in state ``s0`` and ending in
``se`` the Parry mass telescopes to ``u[s0] * v[se] * lam**-(j-m)``, with
``A v = lam v``, ``u A = lam u`` and ``u . v = 1``.  Shorter words get the
sum over their admissible completions to length m.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .core import CylinderMeasure, Support, _bits, logsumexp2
from .errors import Degenerate, Inadmissible, NotPrimitive

DENSE_LIMIT = 512
RESCALE_EVERY = 16


def edge_id(src: str, dst: str) -> int:
    """Edge id from the pair of m-bit state words it connects."""
    if len(src) != len(dst) or src[1:] != dst[:-1]:
        raise ValueError(f"{src!r} -> {dst!r} is not a de Bruijn edge")
    return 2 * int(src, 2) + int(dst[-1])


def edge_pair(e: int, memory: int) -> tuple[str, str]:
    s, b = divmod(int(e), 2)
    t = ((s << 1) | b) & ((1 << memory) - 1)
    return format(s, f"0{memory}b"), format(t, f"0{memory}b")


def _period(n, src, dst):
    """gcd of cycle lengths of a strongly connected digraph."""
    adj = [[] for _ in range(n)]
    for a, b in zip(src.tolist(), dst.tolist()):
        adj[a].append(b)
    level = [-1] * n
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for a in frontier:
            for b in adj[a]:
                if level[b] < 0:
                    level[b] = level[a] + 1
                    nxt.append(b)
        frontier = nxt
    g = 0
    for a, b in zip(src.tolist(), dst.tolist()):
        g = math.gcd(g, abs(level[a] + 1 - level[b]))
    return g


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square nonnegative matrix."""
    n = A.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        return float(np.max(np.abs(np.linalg.eigvals(dense))))
    vals = spla.eigs(sp.csr_matrix(A, dtype=float), k=1, which="LM", v0=np.ones(n),
                     return_eigenvectors=False, tol=1e-13, maxiter=20000)
    return float(np.max(np.abs(vals)))


def _inverse_iteration(A, lam, transpose=False, tol=1e-13, maxiter=50):
    n = A.shape[0]
    M = (A.T if transpose else A).tocsc().astype(float)
    shift = lam * (1.0 + 1e-10) + 1e-300
    lu = spla.splu((M - shift * sp.identity(n, format="csc")).tocsc())
    x = np.ones(n) / n
    for _ in range(maxiter):
        y = lu.solve(x)
        y = np.abs(y)
        y /= y.sum()
        if np.max(np.abs(y - x)) < tol * np.max(y):
            x = y
            break
        x = y
    return x


@dataclass(frozen=True)
class DistortionCertificate:
    """M with M^-1 2^(-h j) < mu(C_j) < M 2^(-h j) and the same for word counts.

    The ``*_log2`` fields are the tight constants the bounds come from:
    ``mass_lo_log2 <= log2 mu(C_j) + h j <= mass_hi_log2`` and the same for
    ``log2 #words - h j``, valid from the corresponding ``ok_from`` on.
    """

    M: float
    mass_lo_ok_from: int
    mass_hi_ok_from: int
    count_lo_ok_from: int
    count_hi_ok_from: int
    mass_lo_log2: float
    mass_hi_log2: float
    count_lo_log2: float
    count_hi_log2: float

    @property
    def ok_from(self):
        return max(self.mass_lo_ok_from, self.mass_hi_ok_from, self.count_lo_ok_from, self.count_hi_ok_from)

    @property
    def tight_log2(self):
        """log2 of the smallest constant consistent with the tight bounds."""
        return max(0.0, -self.mass_lo_log2, self.mass_hi_log2, -self.count_lo_log2, self.count_hi_log2)


class Sft:
    """Immutable mixing SFT with cached Perron data.

    Use :func:`build_sft`; the constructor trusts its arguments less than it
    should be trusted and validates everything.
    """

    def __init__(self, memory: int, forbidden_edges=()):
        if memory < 1:
            raise ValueError("memory must be >= 1")
        self.memory = m = int(memory)
        forb = set()
        for e in forbidden_edges:
            forb.add(edge_id(*e) if isinstance(e, (tuple, list)) else int(e))
        nall = 1 << m
        if any(e < 0 or e >= 2 * nall for e in forb):
            raise ValueError("edge id out of range")
        self.forbidden = frozenset(forb)

        alive = np.ones(2 * nall, dtype=bool)
        alive[list(forb)] = False
        eids = np.nonzero(alive)[0]
        src = eids // 2
        dst = ((src << 1) | (eids % 2)) & (nall - 1)
        used = np.zeros(nall, dtype=bool)
        used[src] = True
        used[dst] = True
        codes = np.nonzero(used)[0]
        if len(codes) == 0:
            raise Degenerate("no edges left")
        index = np.full(nall, -1, dtype=np.int64)
        index[codes] = np.arange(len(codes))
        self.codes = codes
        self.index = index
        n = len(codes)
        csrc, cdst = index[src], index[dst]
        self.n_states = n
        self.A = sp.csr_matrix((np.ones(len(eids)), (csrc, cdst)), shape=(n, n))
        self.AT = self.A.T.tocsr()
        succ = np.full((n, 2), -1, dtype=np.int64)
        succ[csrc, eids % 2] = cdst
        self.succ = succ

        ncomp, _ = csgraph.connected_components(self.A, directed=True, connection="strong")
        if ncomp != 1:
            raise NotPrimitive(f"transition graph has {ncomp} strongly connected components")
        if _period(n, csrc, cdst) != 1:
            raise NotPrimitive("transition graph is periodic")

        lam = spectral_radius(self.A)
        if lam <= 1.0 + 1e-12:
            raise Degenerate(f"Perron eigenvalue {lam} <= 1")
        v = _inverse_iteration(self.A, lam)
        u = _inverse_iteration(self.A, lam, transpose=True)
        lam = float((self.A @ v).sum() / v.sum())
        for _ in range(3):
            res = np.max(np.abs(self.A @ v - lam * v)) / (lam * np.max(v))
            resu = np.max(np.abs(self.AT @ u - lam * u)) / (lam * np.max(u))
            if max(res, resu) <= 1e-12:
                break
            v = _inverse_iteration(self.A, lam)
            u = _inverse_iteration(self.A, lam, transpose=True)
            lam = float((self.A @ v).sum() / v.sum())
        self.residual = float(max(res, resu))
        u = u / (u @ v)
        self.lam = lam
        self.u = u
        self.v = v
        self.log2_u = np.log2(u)
        self.log2_v = np.log2(v)
        self.log2_pi = self.log2_u + self.log2_v
        self.h = math.log2(lam)

    # -- descriptors ---------------------------------------------------------

    def descriptor(self) -> dict:
        pairs = sorted(edge_pair(e, self.memory) for e in self.forbidden)
        return {"memory": self.memory, "forbidden_edges": [list(p) for p in pairs]}

    @classmethod
    def from_descriptor(cls, d: dict) -> "Sft":
        return cls(d["memory"], [tuple(p) for p in d["forbidden_edges"]])

    def save(self, path):
        Path(path).write_text(json.dumps(self.descriptor(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_descriptor(json.loads(Path(path).read_text(encoding="utf-8")))

    def __repr__(self):
        return f"Sft(memory={self.memory}, states={self.n_states}, h={self.h:.6f})"

    # -- words ---------------------------------------------------------------

    def _state(self, word: str) -> int:
        return int(self.index[int(word, 2)])

    def path(self, word: str):
        """Compact state indices visited by ``word`` (len >= m), or None if inadmissible."""
        m = self.memory
        s = self._state(word[:m])
        if s < 0:
            return None
        states = [s]
        succ = self.succ
        for ch in word[m:]:
            s = succ[s, 1 if ch == "1" else 0]
            if s < 0:
                return None
            states.append(int(s))
        return states

    def is_admissible(self, word) -> bool:
        word = _bits(word)
        if len(word) >= self.memory:
            return self.path(word) is not None
        return self._short_log2_mass(word) > -math.inf

    def _short_range(self, word):
        k = self.memory - len(word)
        lo = (int(word, 2) << k) if word else 0
        return lo, lo + (1 << k)

    def _short_log2_mass(self, word):
        lo, hi = self._short_range(word)
        a, b = np.searchsorted(self.codes, [lo, hi])
        if a == b:
            return -math.inf
        return logsumexp2(self.log2_pi[a:b])

    def log2_mass(self, word) -> float:
        word = _bits(word)
        m = self.memory
        if len(word) < m:
            return self._short_log2_mass(word) if word else 0.0
        p = self.path(word)
        if p is None:
            return -math.inf
        return float(self.log2_u[p[0]] + self.log2_v[p[-1]] - (len(word) - m) * self.h)

    def log2_prefix_masses(self, word) -> np.ndarray:
        """Masses of all prefixes of ``word`` (generations 0..len); -inf after leaving the shift."""
        word = _bits(word)
        m, n = self.memory, len(word)
        out = np.full(n + 1, -np.inf)
        out[0] = 0.0
        for k in range(1, min(m, n + 1)):
            out[k] = self._short_log2_mass(word[:k])
            if out[k] == -math.inf:
                return out
        if n < m:
            return out
        s = self._state(word[:m])
        if s < 0:
            return out
        lu = self.log2_u[s]
        out[m] = lu + self.log2_v[s]
        succ = self.succ
        for k in range(m, n):
            s = succ[s, 1 if word[k] == "1" else 0]
            if s < 0:
                break
            out[k + 1] = lu + self.log2_v[s] - (k + 1 - m) * self.h
        return out

    def lex_extreme_word(self, length, largest=False) -> str:
        """Lexicographically smallest (or largest) admissible word of ``length``."""
        m = self.memory
        codes = self.codes
        if length <= m:
            c = int(codes[-1] if largest else codes[0])
            return format(c, f"0{m}b")[:length]
        word = [format(int(codes[-1] if largest else codes[0]), f"0{m}b")]
        st = self._state(word[0])
        pref = (1, 0) if largest else (0, 1)
        for _ in range(length - m):
            for b in pref:
                nxt = self.succ[st, b]
                if nxt >= 0:
                    word.append(str(b))
                    st = nxt
                    break
        return "".join(word)

    def smallest_word_above(self, bound: str) -> str | None:
        """Lexicographically smallest admissible word of len(bound) strictly above ``bound``."""
        L, m = len(bound), self.memory
        if L <= m:
            lo = int(bound, 2) + 1
            k = m - L
            pos = np.searchsorted(self.codes, lo << k)
            if pos == len(self.codes):
                return None
            return format(int(self.codes[pos]), f"0{m}b")[:L]
        p = self.path_prefix_states(bound)
        # deepest position i >= m where bound[i] == '0' and the tight state can step with 1
        for i in range(min(len(p), L) - 1, m - 1, -1):
            if i < len(p) and bound[i] == "0" and self.succ[p[i - m], 1] >= 0:
                st = int(self.succ[p[i - m], 1])
                return bound[:i] + "1" + self._min_completion(st, L - i - 1)
        head = self.smallest_word_above(bound[:m])
        if head is None:
            return None
        return head + self._min_completion(self._state(head), L - m)

    def path_prefix_states(self, word):
        """States along the longest admissible prefix of ``word`` (index k-m for prefix length k)."""
        m = self.memory
        s = self._state(word[:m])
        if s < 0:
            return []
        states = [s]
        for ch in word[m:]:
            s = self.succ[s, 1 if ch == "1" else 0]
            if s < 0:
                break
            states.append(int(s))
        return states

    def _min_completion(self, st, n):
        out = []
        for _ in range(n):
            nxt = self.succ[st, 0]
            if nxt >= 0:
                out.append("0")
            else:
                nxt = self.succ[st, 1]
                out.append("1")
            st = nxt
        return "".join(out)

    # -- enumeration ---------------------------------------------------------

    def enumerate_words(self, length):
        """All admissible words of ``length`` as (sorted int codes, log2 masses)."""
        m = self.memory
        if length == 0:
            return np.zeros(1, dtype=np.int64), np.zeros(1)
        if length <= m:
            k = m - length
            pref = self.codes >> k
            uniq, start = np.unique(pref, return_index=True)
            bounds = np.append(start, len(pref))
            masses = np.array([logsumexp2(self.log2_pi[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
            return uniq.astype(np.int64), masses
        words = self.codes.astype(np.int64)
        states = np.arange(self.n_states)
        for _ in range(length - m):
            nxt = self.succ[states]  # (k, 2)
            w2 = np.stack([words << 1, (words << 1) | 1], axis=1)
            keep = nxt >= 0
            words, states = w2[keep], nxt[keep]
        order = np.argsort(words, kind="stable")
        words, states = words[order], states[order]
        start_state = self.index[(words >> (length - m)).astype(np.int64)]
        return words, self.log2_u[start_state] + self.log2_v[states] - (length - m) * self.h

    # -- spectral quantities ---------------------------------------------------

    def word_count_log2(self, j) -> float:
        m = self.memory
        if j < 1:
            raise ValueError("j must be >= 1")
        if j <= m:
            return math.log2(len(np.unique(self.codes >> (m - j))))
        x = np.ones(self.n_states)
        scale = 0.0
        for i in range(j - m):
            x = self.A @ x
            if (i + 1) % RESCALE_EVERY == 0:
                mx = x.max()
                x /= mx
                scale += math.log2(mx)
        return scale + math.log2(x.sum())

    def partition_sum_log2(self, q, j):
        """log2 sum over admissible words of length j of mu(w)**q (vectorised over q)."""
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        qs = np.atleast_1d(q)
        m = self.memory
        if j < 1:
            raise ValueError("j must be >= 1")
        if j <= m:
            _, masses = self.enumerate_words(j)
            out = logsumexp2(qs[:, None] * masses[None, :], axis=1)
        else:
            # left weights u^q propagated by A, closed with v^q
            lx = qs[None, :] * self.log2_u[:, None]
            base = lx.max(axis=0)
            x = np.exp2(lx - base)
            scale = base.copy()
            for i in range(j - m):
                x = self.AT @ x
                if (i + 1) % RESCALE_EVERY == 0:
                    mx = x.max(axis=0)
                    x /= mx
                    scale += np.log2(mx)
            ly = qs[None, :] * self.log2_v[:, None]
            yb = ly.max(axis=0)
            tot = (x * np.exp2(ly - yb)).sum(axis=0)
            out = scale + yb + np.log2(tot) - qs * (j - m) * self.h
        return float(out[0]) if scalar else out

    @cached_property
    def certificate(self) -> DistortionCertificate:
        m, h = self.memory, self.h
        mlo = float(self.log2_u.min() + self.log2_v.min() + m * h)
        mhi = float(self.log2_u.max() + self.log2_v.max() + m * h)
        sv = math.log2(self.v.sum())
        clo = float(sv - self.log2_v.max() - m * h)
        chi = float(sv - self.log2_v.min() - m * h)
        # exact check of the short words decides how early the bounds start
        mass_lo_from = mass_hi_from = count_lo_from = count_hi_from = m
        for j in range(m - 1, 0, -1):
            _, masses = self.enumerate_words(j)
            mm = masses + j * h
            cnt = math.log2(len(masses)) - j * h
            if mass_lo_from == j + 1 and mm.min() >= mlo:
                mass_lo_from = j
            if mass_hi_from == j + 1 and mm.max() <= mhi:
                mass_hi_from = j
            if count_lo_from == j + 1 and cnt >= clo:
                count_lo_from = j
            if count_hi_from == j + 1 and cnt <= chi:
                count_hi_from = j
        ratio = max(
            float(np.max(self.log2_pi) - np.min(self.log2_pi)),
            float(np.max(self.log2_v) - np.min(self.log2_v)),
            float(np.max(self.log2_u) - np.min(self.log2_u)),
            -mlo, mhi, -clo, chi,
        )
        return DistortionCertificate(
            M=2.0 * 2.0**ratio,
            mass_lo_ok_from=mass_lo_from,
            mass_hi_ok_from=mass_hi_from,
            count_lo_ok_from=count_lo_from,
            count_hi_ok_from=count_hi_from,
            mass_lo_log2=mlo,
            mass_hi_log2=mhi,
            count_lo_log2=clo,
            count_hi_log2=chi,
        )

    def log2_mass_extremes(self, n):
        """Arrays (lo, hi) with the min and max of log2 mu(w) over admissible
        words of each length j = 1..n (index j-1)."""
        m = self.memory
        lo_out, hi_out = np.empty(n), np.empty(n)
        for j in range(1, min(n, m) + 1):
            _, masses = self.enumerate_words(j)
            lo_out[j - 1], hi_out[j - 1] = masses.min(), masses.max()
        src, dst = self.A.nonzero()
        lo = self.log2_u.copy()
        hi = self.log2_u.copy()
        for j in range(m + 1, n + 1):
            nlo = np.full(self.n_states, np.inf)
            nhi = np.full(self.n_states, -np.inf)
            np.minimum.at(nlo, dst, lo[src])
            np.maximum.at(nhi, dst, hi[src])
            lo, hi = nlo, nhi
            lo_out[j - 1] = np.min(lo + self.log2_v) - (j - m) * self.h
            hi_out[j - 1] = np.max(hi + self.log2_v) - (j - m) * self.h
        return lo_out, hi_out

    def log2_count_matrix(self, k):
        """log2 of A**k entrywise (path counts of length k between states)."""
        n = self.n_states
        result = np.eye(n)
        rscale = 0.0
        base = self.A.toarray()
        bscale = 0.0
        while k:
            if k & 1:
                result = result @ base
                mx = result.max()
                result /= mx
                rscale += bscale + math.log2(mx)
            k >>= 1
            if k:
                base = base @ base
                mx = base.max()
                base /= mx
                bscale = 2 * bscale + math.log2(mx)
        with np.errstate(divide="ignore"):
            return np.log2(result) + rscale

    # -- constrained flows -------------------------------------------------------

    def word_flow(self, length, start_log2w, bound=None, side=None):
        """Weighted path flow over admissible words of ``length`` (>= memory).

        ``start_log2w`` is an (n_states, K) array of log2 weights attached to
        the start state.  Returns ``(F, scale)`` with
        ``F[t, k] * 2**scale[k] = sum of 2**start_log2w[s0(w), k]`` over words
        ``w`` ending in state ``t`` that satisfy the optional bound:
        ``side == "le"`` keeps ``w <= bound``, ``side == "gt"`` keeps
        ``w > bound`` (``bound`` is a binary string of ``length``).
        """
        m = self.memory
        if length < m:
            raise ValueError("word_flow needs length >= memory")
        lw = np.asarray(start_log2w, dtype=float)
        base = lw.max(axis=0)
        base = np.where(np.isfinite(base), base, 0.0)
        S = np.exp2(lw - base)
        scale = base.copy()
        F = S.copy()
        tight = -1
        if side is not None:
            top = int(bound[:m], 2)
            if side == "le":
                F[self.codes >= top] = 0.0
            elif side == "gt":
                F[self.codes <= top] = 0.0
            else:
                raise ValueError(f"unknown side {side!r}")
            tight = self._state(bound[:m])
            tw = S[tight].copy() if tight >= 0 else None
            tscale = base.copy()
        succ = self.succ
        for i in range(m, length):
            F = self.AT @ F
            if (i - m + 1) % RESCALE_EVERY == 0:
                mx = F.max(axis=0)
                mx = np.where(mx > 0, mx, 1.0)
                F /= mx
                scale += np.log2(mx)
            if tight >= 0:
                bit = 1 if bound[i] == "1" else 0
                branch = 0 if side == "le" and bit == 1 else (1 if side == "gt" and bit == 0 else -1)
                if branch >= 0 and succ[tight, branch] >= 0:
                    F[succ[tight, branch]] += tw * np.exp2(tscale - scale)
                tight = int(succ[tight, bit])
        if tight >= 0 and side == "le":
            F[tight] += tw * np.exp2(tscale - scale)
        return F, scale

    def bounded_partition_sum_log2(self, q, length, bound=None, side=None):
        """log2 sum of mu(w)**q over admissible words of ``length`` on one side of ``bound``."""
        qs = np.atleast_1d(np.asarray(q, dtype=float))
        m = self.memory
        if length < m:
            codes, masses = self.enumerate_words(length)
            keep = _side_mask(codes, bound, side)
            return logsumexp2(qs[:, None] * masses[None, keep], axis=1)
        F, scale = self.word_flow(length, qs[None, :] * self.log2_u[:, None], bound, side)
        ly = qs[None, :] * self.log2_v[:, None]
        yb = ly.max(axis=0)
        with np.errstate(divide="ignore"):
            tot = np.log2((F * np.exp2(ly - yb)).sum(axis=0))
        return scale + yb + tot - qs * (length - m) * self.h


def _side_mask(codes, bound, side):
    if side is None:
        return np.ones(len(codes), dtype=bool)
    T = int(bound, 2)
    return codes <= T if side == "le" else codes > T


# -- module-level operations ----------------------------------------------------


def build_sft(memory, forbidden_edges=()) -> Sft:
    return Sft(memory, forbidden_edges)


def full_shift() -> Sft:
    return Sft(1)


def golden_mean() -> Sft:
    return Sft(1, [("1", "1")])


def entropy_bits(sft: Sft) -> float:
    return sft.h


def word_count_log2(sft: Sft, j) -> float:
    return sft.word_count_log2(j)


def parry_mass(sft: Sft, word, strict=False) -> float:
    """log2 Parry mass of ``word``; -inf (or Inadmissible when ``strict``) off the shift."""
    val = sft.log2_mass(word)
    if strict and val == -math.inf:
        raise Inadmissible(f"{word!r} is not admissible")
    return val


def partition_sum_log2(sft: Sft, q, j):
    return sft.partition_sum_log2(q, j)


def distortion_constant(sft: Sft) -> DistortionCertificate:
    return sft.certificate


def burn_in(sft: Sft, delta) -> int:
    """First generation from which both delta-loosened sandwiches hold for every longer word."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    cert = sft.certificate
    t = cert.tight_log2
    n = 1 if t <= 0 else math.floor(t / delta) + 1
    return max(1, cert.ok_from, n)


class ParryMeasure(CylinderMeasure):
    """The Parry measure of an SFT seen as a measure on [0,1)."""

    descriptor = "parry"

    def __init__(self, sft: Sft):
        self.sft = sft

    def params(self):
        return self.sft.descriptor()

    def _log2_mass(self, bits):
        return self.sft.log2_mass(bits)

    def log2_prefix_masses(self, bits):
        return self.sft.log2_prefix_masses(_bits(bits))

    def support_size_log2(self, j):
        return 0.0 if j == 0 else self.sft.word_count_log2(j)

    def log2_partition_sum(self, q, j):
        if j == 0:
            return np.zeros_like(np.asarray(q, dtype=float))
        return self.sft.partition_sum_log2(q, j)

    def _enumerate(self, j, budget):
        codes, masses = self.sft.enumerate_words(j)
        return Support(j, codes, masses)

    def sample_point(self, length, rng) -> str:
        """Random admissible word drawn from the Parry Markov chain."""
        sft = self.sft
        m = sft.memory
        pi = np.exp2(sft.log2_pi)
        s = int(rng.choice(sft.n_states, p=pi / pi.sum()))
        out = [format(int(sft.codes[s]), f"0{m}b")]
        for _ in range(length - m):
            nxt = sft.succ[s]
            w = np.where(nxt >= 0, sft.v[np.maximum(nxt, 0)], 0.0)
            b = int(rng.choice(2, p=w / w.sum()))
            out.append(str(b))
            s = int(nxt[b])
        return "".join(out)[:length]
