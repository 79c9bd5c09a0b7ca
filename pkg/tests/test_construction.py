from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_logsum
from mforge.construction import (
    ConstructionPlan,
    decompose,
    h_limit,
    local_dim_envelope,
    mu_mass,
    plan,
    sample_point,
)
from mforge.core import check_normalization
from mforge.errors import GenerationTooDeep, InadmissiblePrefix
from mforge.targeting import build_family


def test_scaled_plan_reports_violations(small_plan):
    assert small_plan.L == [1, 12, 36]
    assert small_plan.max_generation == 49
    assert small_plan.boundaries == [1, 13, 49]
    lac = [v for v in small_plan.violations if v.constraint == "lacunary"]
    assert {v.level for v in lac} == {2, 3}
    assert any(v.rhs == 160 for v in lac)


def test_faithful_plan_meets_its_constraints(small_plan):
    p = plan(0.2, 0.8, small_plan.family, "faithful")
    assert p.violations == []
    for k in range(2, len(p.L)):
        assert p.L[k] * p.delta[k] >= 2 * p.L[k - 1]


def test_plan_roundtrip(small_plan, tmp_path):
    small_plan.family.save(tmp_path / "fam.json")
    small_plan.save(tmp_path / "plan.json", "fam.json")
    again = ConstructionPlan.load(tmp_path / "plan.json")
    assert again.to_json() == small_plan.to_json()


def test_scaled_plan_needs_lengths(small_plan):
    with pytest.raises(ValueError):
        plan(0.2, 0.8, small_plan.family, "scaled")


def test_generation_cap(small_measure):
    with pytest.raises(GenerationTooDeep):
        small_measure.log2_mass("0" * 50)


@pytest.mark.parametrize("j", list(range(0, 50)))
def test_normalization_every_generation(small_measure, j):
    assert check_normalization(small_measure, j) <= 1e-9
    assert check_normalization(small_measure, j, method="partition") <= 1e-9


@pytest.mark.parametrize("j", [1, 2, 7, 13, 14, 18, 21])
def test_partition_sums_match_enumeration(small_measure, j):
    s = small_measure.enumerate_support(j)
    assert 2 ** small_measure.support_size_log2(j) == pytest.approx(len(s))
    for q in (-1.0, 0.0, 0.5, 1.0, 2.0):
        assert small_measure.log2_partition_sum(q, j) == pytest.approx(brute_logsum(q * s.log2_mass), abs=1e-9)
    lazy = np.array([small_measure.log2_mass(s.bits(i)) for i in range(0, len(s), max(1, len(s) // 300))])
    assert np.allclose(lazy, s.log2_mass[:: max(1, len(s) // 300)], atol=1e-12)


@pytest.mark.parametrize("j", [5, 13, 20])
def test_histogram_matches_enumeration(small_measure, j):
    r = 2.0**-7
    v, c = small_measure.log2_mass_histogram(j, r)
    s = small_measure.enumerate_support(j)
    assert brute_logsum(c) == pytest.approx(np.log2(len(s)), abs=1e-9)
    # each block is rounded to the grid: bin centres are within 1.5 r per block of the truth
    nblocks = small_measure.n_blocks_in(j)
    assert v.min() >= s.log2_mass.min() - 1.5 * r * nblocks
    assert v.max() <= s.log2_mass.max() + 1.5 * r * nblocks


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_prefix_additivity(small_measure, seed):
    rng = np.random.default_rng(seed)
    s = small_measure.enumerate_support(13)
    prefix = s.bits(int(rng.integers(len(s))))
    for _ in range(int(rng.integers(0, 35))):
        kids = [prefix + b for b in "01"]
        ok = [k for k in kids if small_measure.log2_mass(k) > -np.inf]
        prefix = ok[int(rng.integers(len(ok)))]
    total = np.logaddexp2(small_measure.log2_mass(prefix + "0"), small_measure.log2_mass(prefix + "1"))
    assert abs(total - small_measure.log2_mass(prefix)) <= 1e-9


def test_decompose_and_labels(small_plan, small_measure):
    pt = sample_point(small_measure, "10")
    dec = decompose(small_plan, pt.digits)
    assert [len(b) for b in dec.blocks] == [1, 12, 36]
    assert dec.labels == "10"
    assert not dec.partial
    assert decompose(small_plan, pt.digits[:20]).partial
    assert mu_mass(small_plan, pt.digits) == pytest.approx(small_measure.log2_mass(pt.digits))


def test_inadmissible_block_detected(small_plan):
    sft = small_plan.family["0"]
    bad = next(
        w for w in (format(k, "012b") for k in range(4096)) if not sft.is_admissible(w)
    )
    with pytest.raises(InadmissiblePrefix):
        decompose(small_plan, "0" + bad)
    assert mu_mass(small_plan, "0" + bad) == -np.inf


def test_halves_split_the_words(small_measure):
    for y in ("0", "1"):
        sft = small_measure.family[y]
        codes, _ = sft.enumerate_words(12)
        T = int(small_measure.bound(y), 2)
        assert 0 < np.count_nonzero(codes <= T) < len(codes)


def test_sample_points_and_limits(deep_plan, deep_measure):
    ys = [format(k, "04b") for k in range(16)]
    pts = [sample_point(deep_measure, y) for y in ys]
    for y, pt in zip(ys, pts):
        assert decompose(deep_plan, pt.digits).labels == y
        assert deep_measure.log2_mass(pt.digits) > -np.inf
        mid, half = h_limit(deep_plan, pt)
        assert 0.2 - 1e-12 <= mid - half < mid + half <= 0.8 + 1e-12
        lo, hi = local_dim_envelope(deep_plan, y)
        assert lo < pt.h_estimates[-1] < hi
    mids = [h_limit(deep_plan, pt)[0] for pt in pts]
    assert all(a < b for a, b in zip(mids, mids[1:]))


def test_deep_normalization(deep_measure):
    for j in deep_measure.plan.boundaries + [100, 1000, 4000]:
        assert check_normalization(deep_measure, j, method="partition") <= 1e-9
