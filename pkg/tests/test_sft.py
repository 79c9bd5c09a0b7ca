from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import all_words, brute_logsum
from mforge.errors import Inadmissible, NotPrimitive
from mforge.sft import (
    ParryMeasure,
    build_sft,
    burn_in,
    distortion_constant,
    edge_id,
    edge_pair,
    entropy_bits,
    full_shift,
    golden_mean,
    parry_mass,
    partition_sum_log2,
    word_count_log2,
)

PHI = (1 + math.sqrt(5)) / 2
TRIB = 1.839286755214161


def tribonacci():
    return build_sft(2, [("11", "11")])


SHIFTS = {
    "full": (full_shift, [], 1.0),
    "golden": (golden_mean, ["11"], math.log2(PHI)),
    "no111": (tribonacci, ["111"], math.log2(TRIB)),
}


class Oracle:
    """Brute-force words and Parry masses from the Markov chain
    P(i, k) = A(i, k) v(k) / (lambda v(i)), stationary law u(i) v(i) / <u, v>."""

    def __init__(self, forbidden_words, m):
        self.bad = forbidden_words
        self.m = m
        states = [w for w in all_words(m) if self.ok(w)]
        self.states = {s: i for i, s in enumerate(states)}
        n = len(states)
        A = np.zeros((n, n))
        for s in states:
            for b in "01":
                t = (s + b)[1:]
                if self.ok(s + b):
                    A[self.states[s], self.states[t]] = 1
        w, V = np.linalg.eig(A)
        k = np.argmax(w.real)
        self.lam = w[k].real
        v = np.abs(V[:, k].real)
        wl, U = np.linalg.eig(A.T)
        u = np.abs(U[:, np.argmax(wl.real)].real)
        self.P = A * v[None, :] / (self.lam * v[:, None])
        self.pi = u * v / (u @ v)

    def ok(self, w):
        return not any(b in w for b in self.bad)

    def words(self, j):
        return [w for w in all_words(j) if self.ok(w)]

    def mass(self, w):
        if not self.ok(w):
            return 0.0
        if len(w) < self.m:
            return sum(self.mass(w + t) for t in all_words(self.m - len(w)) if self.ok(w + t))
        p = self.pi[self.states[w[: self.m]]]
        for i in range(len(w) - self.m):
            p *= self.P[self.states[w[i : i + self.m]], self.states[w[i + 1 : i + 1 + self.m]]]
        return p


ORACLES = {k: Oracle(bad, make().memory) for k, (make, bad, _) in SHIFTS.items()}


@pytest.mark.parametrize("name", SHIFTS)
def test_entropy_closed_form(name):
    make, _, h = SHIFTS[name]
    assert abs(entropy_bits(make()) - h) <= 1e-9


@pytest.mark.parametrize("name", SHIFTS)
def test_counts_and_masses_against_brute_force(name):
    sft = SHIFTS[name][0]()
    orc = ORACLES[name]
    for j in range(1, 13):
        words = orc.words(j)
        assert abs(word_count_log2(sft, j) - math.log2(len(words))) <= 1e-9
        got = np.array([parry_mass(sft, w) for w in words])
        want = np.log2([orc.mass(w) for w in words])
        assert np.max(np.abs(got - want)) <= 1e-9
        for q in (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0):
            assert abs(partition_sum_log2(sft, q, j) - brute_logsum(q * want)) <= 1e-9


@pytest.mark.parametrize("name", SHIFTS)
def test_enumerate_words_matches_brute_force(name):
    sft = SHIFTS[name][0]()
    for j in (1, 2, 5, 9):
        codes, masses = sft.enumerate_words(j)
        assert [format(c, f"0{j}b") for c in codes] == ORACLES[name].words(j)
        assert np.allclose(masses, [parry_mass(sft, format(c, f"0{j}b")) for c in codes], atol=1e-12)


def test_golden_mean_values():
    g = golden_mean()
    assert parry_mass(g, "0") == pytest.approx(math.log2(PHI**2 / (PHI**2 + 1)), abs=1e-12)
    assert parry_mass(g, "11") == -np.inf
    assert 2 ** word_count_log2(g, 10) == pytest.approx(144)
    with pytest.raises(Inadmissible):
        parry_mass(g, "0110", strict=True)


def test_full_shift_is_lebesgue():
    f = full_shift()
    assert f.lam == pytest.approx(2.0)
    for w in ("0", "1", "0110", "1" * 20):
        assert parry_mass(f, w) == pytest.approx(-len(w), abs=1e-12)
    assert distortion_constant(f).M == pytest.approx(2.0)
    assert burn_in(f, 0.01) == 1


def test_perron_residual_and_normalisation():
    for make, _, _ in SHIFTS.values():
        s = make()
        assert s.residual <= 1e-12
        assert abs(np.sum(2.0**s.log2_pi) - 1) <= 1e-12


def test_edge_ids():
    assert edge_id("01", "11") == 3
    assert edge_pair(3, 2) == ("01", "11")
    with pytest.raises(ValueError):
        edge_id("01", "00")


def test_non_mixing_rejected():
    # forbidding 00 and 11 leaves the period-2 orbit (01)^infinity
    with pytest.raises(NotPrimitive):
        build_sft(1, [("0", "0"), ("1", "1")])


@pytest.mark.parametrize("name", SHIFTS)
def test_distortion_certificate_holds(name):
    sft = SHIFTS[name][0]()
    cert = distortion_constant(sft)
    h = sft.h
    for j in range(cert.ok_from, 16):
        count = 2 ** word_count_log2(sft, j)
        assert 2 ** (h * j) / cert.M <= count <= cert.M * 2 ** (h * j)
        lo, hi = sft.log2_mass_extremes(j)
        assert 2 ** (-h * j) / cert.M <= 2 ** lo[-1] and 2 ** hi[-1] <= cert.M * 2 ** (-h * j)


@pytest.mark.parametrize("delta", [0.2, 0.1, 0.05])
def test_burn_in_sandwich(delta):
    g = golden_mean()
    h, N = g.h, burn_in(g, delta)
    lo, hi = g.log2_mass_extremes(N + 60)
    j = np.arange(1, N + 61)
    sel = j >= N
    assert np.all(hi[sel] <= -(h - delta) * j[sel]) and np.all(lo[sel] >= -(h + delta) * j[sel])
    counts = np.array([word_count_log2(g, k) for k in j[sel]])
    assert np.all(counts >= (h - delta) * j[sel]) and np.all(counts <= (h + delta) * j[sel])
    assert burn_in(g, delta / 2) >= 2 * N - 1


def test_descriptor_roundtrip(tmp_path):
    s = tribonacci()
    s.save(tmp_path / "s.json")
    t = type(s).load(tmp_path / "s.json")
    assert t.forbidden == s.forbidden and t.h == s.h


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**20))
def test_parry_additivity(seed):
    sft = tribonacci()
    rng = np.random.default_rng(seed)
    w = ParryMeasure(sft).sample_point(int(rng.integers(1, 30)), rng)
    kids = [parry_mass(sft, w + b) for b in "01"]
    assert abs(np.logaddexp2(*kids) - parry_mass(sft, w)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**20))
def test_sampled_points_admissible(seed):
    g = golden_mean()
    x = ParryMeasure(g).sample_point(200, np.random.default_rng(seed))
    assert "11" not in x and g.is_admissible(x)


@given(st.integers(1, 40))
def test_lex_extremes(n):
    g = golden_mean()
    lo, hi = g.lex_extreme_word(n), g.lex_extreme_word(n, largest=True)
    assert lo == "0" * n
    assert hi == ("10" * n)[:n]
    assert g.smallest_word_above(lo) == "0" * (n - 1) + "1"


def test_bounded_partition_sums_split_total():
    s = tribonacci()
    codes, masses = s.enumerate_words(10)
    bound = format(int(codes[len(codes) // 3]), "010b")
    for q in (0.0, 1.0, 2.0):
        le = s.bounded_partition_sum_log2(q, 10, bound, "le")
        gt = s.bounded_partition_sum_log2(q, 10, bound, "gt")
        T = int(bound, 2)
        assert le == pytest.approx(brute_logsum(q * masses[codes <= T]), abs=1e-9)
        assert gt == pytest.approx(brute_logsum(q * masses[codes > T]), abs=1e-9)


def test_count_matrix_matches_matrix_power():
    s = tribonacci()
    A = s.A.toarray()
    for k in (1, 5, 17):
        got = s.log2_count_matrix(k)
        want = np.linalg.matrix_power(A.astype(np.int64), k)
        with np.errstate(divide="ignore"):
            assert np.allclose(got, np.log2(want), atol=1e-9)
