import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from approxmram.memory import (
    ApproxWeightStore,
    FixedPointFormat,
    ProgrammingProfile,
    TwoTier,
    Uniform,
    dequantize,
    make_profile,
    naive_failure_mask,
    quantize,
    sample_failure_mask,
)

SM = FixedPointFormat()
TC = FixedPointFormat(encoding="twos_complement")


@pytest.mark.parametrize("fmt", [SM, TC])
@pytest.mark.parametrize("x,pattern", [(0.0, 0x0000), (1.0, 0x1000), (100.0, 0x7FFF), (0.5 / 4096, 0x0000),
                                       (1.5 / 4096, 0x0002)])
def test_quantize_examples(fmt, x, pattern):
    assert quantize(x, fmt) == pattern


def test_negative_encodings():
    assert quantize(-1.0, TC) == 0xF000
    assert quantize(-100.0, TC) == 0x8000
    assert dequantize(0x8000, TC) == -8.0
    assert quantize(-1.0, SM) == 0x9000
    assert quantize(-100.0, SM) == 0xFFFF
    assert dequantize(0xFFFF, SM) == SM.min_value == -SM.max_value
    # negative zero never appears in stored words
    assert quantize(-0.0, SM) == 0 and quantize(-1e-6, SM) == 0
    assert dequantize(0x8000, SM) == 0.0


def test_nan_maps_to_zero():
    assert quantize(np.nan) == 0
    assert np.array_equal(quantize(np.array([np.nan, 1.0])), [0, 0x1000])


def test_format_bounds():
    assert TC.min_value == -8.0 and TC.max_value == 8.0 - 2**-12
    assert SM.step == 2**-12
    with pytest.raises(ValueError):
        FixedPointFormat(fractional_bits=16)
    with pytest.raises(ValueError):
        FixedPointFormat(total_bits=8)
    with pytest.raises(ValueError):
        FixedPointFormat(encoding="ones_complement")


@pytest.mark.parametrize("fmt", [SM, TC, FixedPointFormat(fractional_bits=5)])
def test_grid_points_round_trip(fmt):
    codes = np.arange(fmt.min_code, fmt.max_code + 1)
    values = codes * fmt.step
    assert np.array_equal(dequantize(quantize(values, fmt), fmt), values)


@settings(max_examples=300, deadline=None)
@given(st.floats(-20.0, 20.0, allow_nan=False))
def test_quantize_nearest_and_saturating(x):
    for fmt in (SM, TC):
        y = dequantize(quantize(x, fmt), fmt)
        clipped = min(max(x, fmt.min_value), fmt.max_value)
        assert abs(y - clipped) <= fmt.step / 2


def test_round_half_to_even():
    assert quantize(2.5 * 2**-12) == 2
    assert quantize(3.5 * 2**-12) == 4


def ideal(ber):
    return ProgrammingProfile.ideal(ber)


def test_profile_shapes(models):
    base = make_profile(Uniform(1e-10), models)
    assert base.word_energy_pj == pytest.approx(16 * models.energy_for_ber(1e-10))
    tier = make_profile(TwoTier(10, 1e-2, 0.5), models)
    assert tier.ber == (0.5,) * 10 + (1e-2,) * 6
    assert tier.descriptor == ("two_tier", 10, 1e-2, 0.5)
    assert 1 - tier.word_energy_pj / base.word_energy_pj == pytest.approx(0.746, abs=0.03)
    same = make_profile(TwoTier(0, 1e-3, 0.7), models)
    assert same.ber == make_profile(Uniform(1e-3), models).ber
    assert same.word_energy_pj == make_profile(Uniform(1e-3), models).word_energy_pj
    frozen = make_profile(TwoTier(8, 1e-2, 1.0), models)
    assert frozen.energy_pj[:8] == (0.0,) * 8


def test_profile_errors(models):
    with pytest.raises(ValueError):
        make_profile(Uniform(0.0), models)
    with pytest.raises(ValueError):
        make_profile(Uniform(1.5), models)
    with pytest.raises(ValueError):
        make_profile(TwoTier(17, 1e-2, 0.5), models)
    with pytest.raises(ValueError):
        ProgrammingProfile((0.0,) * 15, (0.0,) * 15, (0.0,) * 15)


def test_sampler_trivial_cases():
    rng = np.random.default_rng(0)
    relevant = np.array([0xFFFF, 0x1234, 0], dtype=np.uint16)
    assert not sample_failure_mask(rng, np.zeros(16), relevant).any()
    assert np.array_equal(sample_failure_mask(rng, np.ones(16), relevant), relevant)
    assert not naive_failure_mask(rng, np.ones(16), np.zeros(4, dtype=np.uint16)).any()


def _pattern_histogram(sampler, ber, relevant, n, seed):
    rng = np.random.default_rng(seed)
    bers = np.full(16, ber)
    bers[:4] = ber  # four relevant low bits: 16 outcome classes
    counts = np.zeros(16, dtype=np.int64)
    remaining = n
    while remaining:
        m = min(remaining, 200_000)
        mask = sampler(rng, bers, np.full(m, relevant, dtype=np.uint16))
        counts += np.bincount(mask & 0xF, minlength=16)
        remaining -= m
    return counts


@pytest.mark.parametrize("ber", [1e-4, 1e-2, 0.5, 0.9])
def test_fast_sampler_matches_naive(ber):
    n = 1_000_000
    fast = _pattern_histogram(sample_failure_mask, ber, 0x000F, n, 1)
    naive = _pattern_histogram(naive_failure_mask, ber, 0x000F, n, 2)
    keep = (fast + naive) > 0
    table = np.vstack([fast[keep], naive[keep]])
    if table.shape[1] < 2:
        return
    _, p, _, _ = stats.chi2_contingency(table)
    assert p > 0.001


@pytest.mark.parametrize("ber", [1e-4, 1e-2, 0.5, 0.9])
def test_fast_sampler_matches_bernoulli_law(ber):
    # per-bit failure counts against the exact binomial over mixed relevance patterns
    rng = np.random.default_rng(5)
    relevant = np.random.default_rng(6).integers(0, 1 << 16, size=400_000).astype(np.uint16)
    mask = sample_failure_mask(rng, np.full(16, ber), relevant)
    assert not np.any(mask & ~relevant)
    for bit in (0, 7, 15):
        n = np.count_nonzero(relevant >> bit & 1)
        k = np.count_nonzero(mask >> bit & 1)
        assert abs(k - n * ber) <= 4 * math.sqrt(n * ber * (1 - ber)) + 1


def test_single_bit_failure_fraction():
    store = ApproxWeightStore(np.zeros(1_000_000, dtype=np.uint16), ideal(np.r_[0.25, np.zeros(15)]), seed=3)
    store.program(np.ones(1_000_000, dtype=np.uint16))
    failed = np.mean(store.words == 0)
    assert abs(failed - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / 1e6)


def test_mixed_groups_cover_both_paths():
    bers = np.r_[np.full(8, 0.5), np.full(8, 1e-4)]
    rng = np.random.default_rng(9)
    relevant = np.full(300_000, 0xFFFF, dtype=np.uint16)
    mask = sample_failure_mask(rng, bers, relevant)
    n = relevant.size
    for bit, p in ((0, 0.5), (5, 0.5), (8, 1e-4), (15, 1e-4)):
        k = np.count_nonzero(mask >> bit & 1)
        assert abs(k - n * p) <= 4 * math.sqrt(n * p * (1 - p))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=64), st.lists(st.integers(0, 0xFFFF), min_size=1,
       max_size=64), st.sampled_from([1e-4, 0.05, 0.5, 0.95]), st.integers(0, 2**32 - 1))
def test_failed_bits_retain_previous_value(old, new, ber, seed):
    n = min(len(old), len(new))
    old = np.array(old[:n], dtype=np.uint16)
    new = np.array(new[:n], dtype=np.uint16)
    store = ApproxWeightStore(old, ideal(ber), seed=seed)
    store.program(new)
    got = store.words
    # every bit is either its previous value or its target
    assert not np.any((got ^ old) & (got ^ new))


def test_ber_zero_and_one_limits():
    rng = np.random.default_rng(0)
    init = rng.integers(0, 1 << 16, 1000).astype(np.uint16)
    target = rng.integers(0, 1 << 16, 1000).astype(np.uint16)
    exact = ApproxWeightStore(init, ideal(0.0), seed=1)
    exact.program(target)
    assert np.array_equal(exact.words, target)
    frozen = ApproxWeightStore(init, ideal(1.0), seed=1)
    for _ in range(5):
        frozen.program(target)
    assert np.array_equal(frozen.words, init)
    assert frozen.writes == 5000


def test_ledger_exact(models):
    profile = make_profile(TwoTier(10, 1e-2, 0.5), models)
    store = ApproxWeightStore(np.zeros(997, dtype=np.uint16), profile, seed=4)
    rng = np.random.default_rng(4)
    calls = 0
    for _ in range(3000):
        store.program(rng.integers(0, 1 << 16, 997).astype(np.uint16))
        calls += 997
    for i in range(500):
        store.program_word(i % 997, 0x1234)
        calls += 1
    expected = calls * profile.word_energy_pj
    assert store.writes == calls
    assert abs(store.energy_pj - expected) <= 1e-9 * expected


def test_program_word_bounds():
    store = ApproxWeightStore(np.zeros(4, dtype=np.uint16), ideal(0.0))
    store.program_word(3, 0xABCD)
    assert store.words[3] == 0xABCD
    with pytest.raises(IndexError):
        store.program_word(4, 1)
    with pytest.raises(ValueError):
        store.program(np.zeros(3, dtype=np.uint16))


def test_words_view_is_read_only():
    store = ApproxWeightStore(np.zeros(4, dtype=np.uint16), ideal(0.0))
    with pytest.raises(ValueError):
        store.words[0] = 1


def test_determinism(models):
    profile = make_profile(Uniform(0.1), models)
    rng = np.random.default_rng(0)
    targets = [rng.integers(0, 1 << 16, 5000).astype(np.uint16) for _ in range(20)]

    def run():
        store = ApproxWeightStore(np.zeros(5000, dtype=np.uint16), profile, seed=42)
        for t in targets:
            store.program(t)
        return store.words.tobytes(), store.energy_pj

    assert run() == run()


@pytest.mark.parametrize("fmt", [SM, TC, FixedPointFormat(fractional_bits=9)])
def test_snapshot_round_trip(tmp_path, fmt):
    words = np.random.default_rng(1).integers(0, 1 << 16, 257).astype(np.uint16)
    store = ApproxWeightStore(words, ideal(0.0), fmt)
    path = tmp_path / "store.amem"
    store.dump(path)
    raw = path.read_bytes()
    assert raw[:4] == b"AMEM" and len(raw) == 16 + 2 * 257
    back = ApproxWeightStore.restore(path, ideal(0.0))
    assert np.array_equal(back.words, words)
    assert back.fmt == fmt


def test_snapshot_errors(tmp_path):
    path = tmp_path / "bad.amem"
    path.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError, match="magic"):
        ApproxWeightStore.restore(path, ideal(0.0))
    store = ApproxWeightStore(np.zeros(8, dtype=np.uint16), ideal(0.0))
    store.dump(path)
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(ValueError, match="header says"):
        ApproxWeightStore.restore(path, ideal(0.0))
