import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.interpolate import CubicSpline

from modesep.emd import (Decomposition, InsufficientExtrema, SiftConfig, count_zero_crossings,
                         emd, envelope, extract_imf, find_local_extrema, first_imf, is_imf,
                         sd_criterion, sift_once)
from modesep.metrics import assign_imfs
from modesep.signal_io import Signal, synth_sine


def extrema_oracle(x):
    """Collapse flat runs, then compare each run with its neighbours."""
    runs = [(k, list(g)) for k, g in itertools.groupby(enumerate(x), key=lambda p: p[1])]
    starts = [g[0][0] for _, g in runs]
    vals = [k for k, _ in runs]
    imax, imin = [], []
    for r in range(1, len(runs) - 1):
        if vals[r] > vals[r - 1] and vals[r] > vals[r + 1]:
            imax.append(starts[r])
        if vals[r] < vals[r - 1] and vals[r] < vals[r + 1]:
            imin.append(starts[r])
    return imax, imin


def zc_oracle(x):
    nz = [v for v in x if v != 0]
    return sum(1 for a, b in zip(nz, nz[1:]) if (a > 0) != (b > 0))


def mirrored(idx, val, n):
    idx, val = list(idx), list(val)
    left = [(-i, v) for i, v in zip(idx[:2], val[:2])][::-1]
    right = [(2 * (n - 1) - i, v) for i, v in zip(idx[-2:], val[-2:])][::-1]
    pts = left + list(zip(idx, val)) + right
    return np.array([p[0] for p in pts], float), np.array([p[1] for p in pts])


@pytest.mark.parametrize("x", list(itertools.product([0.0, 1.0], repeat=4)))
def test_extrema_all_binary_length4(x):
    ext = find_local_extrema(np.array(x))
    imax, imin = extrema_oracle(x)
    assert list(ext.max_idx) == imax and list(ext.min_idx) == imin


@given(arrays(float, st.integers(1, 60), elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0])))
def test_extrema_match_oracle(x):
    ext = find_local_extrema(x)
    imax, imin = extrema_oracle(list(x))
    assert list(ext.max_idx) == imax and list(ext.min_idx) == imin
    np.testing.assert_array_equal(ext.max_val, x[imax])


def test_extrema_plateau_and_endpoints():
    ext = find_local_extrema([5.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0, 0.0, 2.0, 9.0])
    assert list(ext.max_idx) == [2]
    assert list(ext.min_idx) == [1, 6]


def test_extrema_monotone_and_shoulder():
    assert find_local_extrema(np.arange(10.0)).count == 0
    # a plateau that continues the trend is not an extremum
    assert find_local_extrema([0.0, 1.0, 1.0, 2.0]).count == 0


@given(arrays(float, st.integers(1, 80), elements=st.sampled_from([-2.0, -0.5, 0.0, 1.0])))
def test_zero_crossings_match_oracle(x):
    assert count_zero_crossings(x) == zc_oracle(list(x))


def test_zero_crossing_examples():
    assert count_zero_crossings([1.0, 0.0, -1.0]) == 1
    assert count_zero_crossings([1.0, 0.0, 1.0]) == 0
    assert count_zero_crossings([0.0, 0.0]) == 0
    assert count_zero_crossings(synth_sine(1, 1.0, 0.25, 4.0, 400)) == 8


def test_envelope_matches_scipy_spline(rng):
    n = 200
    x = rng.standard_normal(n)
    ext = find_local_extrema(x)
    ours = envelope(x, ext.max_idx, ext.max_val)
    kx, ky = mirrored(ext.max_idx, ext.max_val, n)
    ref = CubicSpline(kx, ky, bc_type="natural", extrapolate=True)(np.arange(n))
    np.testing.assert_allclose(ours, ref, atol=1e-9)


@given(st.lists(st.integers(1, 98), min_size=1, max_size=30, unique=True),
       st.integers(0, 2 ** 32 - 1))
def test_envelope_property_vs_scipy(idx, seed):
    n = 100
    idx = sorted(idx)
    vals = np.random.default_rng(seed).uniform(-3, 3, len(idx))
    ours = envelope(np.zeros(n), idx, vals)
    kx, ky = mirrored(idx, vals, n)
    if np.any(np.diff(kx) <= 0):
        return
    ref = CubicSpline(kx, ky, bc_type="natural")(np.arange(n))
    np.testing.assert_allclose(ours, ref, atol=1e-8)


def test_envelope_pairs_form_and_constant():
    env = envelope(np.zeros(50), [(10, 2.0), (20, 2.0), (30, 2.0)])
    np.testing.assert_allclose(env, 2.0, atol=1e-12)


def test_envelope_two_knots_is_line():
    env = envelope(np.zeros(11), [0, 10], [1.0, 3.0], boundary="none")
    np.testing.assert_allclose(env, 1.0 + 0.2 * np.arange(11), atol=1e-12)


def test_envelope_errors():
    with pytest.raises(InsufficientExtrema):
        envelope(np.zeros(10), [], [])
    with pytest.raises(InsufficientExtrema):
        envelope(np.zeros(10), [3], [1.0], boundary="none")
    with pytest.raises(ValueError):
        envelope(np.zeros(10), [3, 5], [1.0, 2.0], boundary="periodic")


def test_sine_envelopes_near_unit():
    x = synth_sine(50, 1.0, 0.3, 1.0, 8000).samples
    ext = find_local_extrema(x)
    up = envelope(x, ext.max_idx, ext.max_val)
    lo = envelope(x, ext.min_idx, ext.min_val)
    assert np.max(np.abs(up - 1)) < 0.05 and np.max(np.abs(lo + 1)) < 0.05


def test_sift_once_sine_barely_changes():
    x = synth_sine(50, 1.0, 0.3, 1.0, 8000).samples
    assert np.max(np.abs(sift_once(x) - x)) < 0.05


def test_sift_once_removes_offset():
    x = synth_sine(50, 1.0, 0.3, 1.0, 8000).samples
    h = sift_once(x + 3.0)
    assert abs(np.mean(h[500:-500])) < 0.01


def test_sift_once_insufficient():
    with pytest.raises(InsufficientExtrema):
        sift_once(np.arange(20.0))


def test_is_imf_examples():
    assert is_imf(synth_sine(50, 1.0, 0.3, 1.0, 8000))
    # sine riding on an offset: many extrema, no crossings
    assert not is_imf(synth_sine(50, 1.0, 0.3, 1.0, 8000).samples + 2.0)


def test_sd_criterion_closed_form():
    # a relative change of 0.01 on every one of 100 samples
    prev = np.full(100, 2.0)
    assert sd_criterion(prev, prev * 0.99) == pytest.approx(100 * 0.01 ** 2)
    assert sd_criterion(prev, prev) == 0.0


sd_vals = st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-3)


@given(arrays(float, 30, elements=sd_vals), arrays(float, 30, elements=sd_vals))
def test_sd_criterion_direct_loop(p, c):
    total = 0.0
    for a, b in zip(p, c):
        if a != 0:
            total += (a - b) ** 2 / a ** 2
    assert sd_criterion(p, c) == pytest.approx(total, rel=1e-12, abs=1e-300)


def test_sd_criterion_length_mismatch():
    with pytest.raises(ValueError):
        sd_criterion([1.0, 2.0], [1.0])


def test_sift_config_validation():
    with pytest.raises(ValueError):
        SiftConfig(sd_threshold=0)
    with pytest.raises(ValueError):
        SiftConfig(max_sift_iterations=0)
    with pytest.raises(ValueError):
        SiftConfig(mean_tol=0.6, mean_tol_max=0.5)
    with pytest.raises(ValueError):
        SiftConfig(envelope_boundary="none")


def test_ramp_has_no_imfs():
    d = emd(np.linspace(-1, 1, 500))
    assert d.n_imfs == 0
    np.testing.assert_array_equal(d.residue, np.linspace(-1, 1, 500))


def test_emd_rejects_nan():
    with pytest.raises(ValueError):
        emd(np.array([0.0, np.nan, 1.0]))


def test_first_imf_of_monotone_is_zero():
    assert np.all(first_imf(np.arange(30.0)) == 0)


def test_extract_imf_returns_unchanged_when_flat():
    x = np.arange(30.0)
    np.testing.assert_array_equal(extract_imf(x), x)


def test_single_tone_first_imf_carries_energy():
    x = synth_sine(440, 1.0, 0.0, 1.0).samples
    d = emd(x)
    share = np.sum(d.imfs[0] ** 2) / np.sum(x ** 2)
    assert 0.99 <= share <= 1.01


def test_emd_two_tones_separates():
    x = synth_sine(700).samples + synth_sine(300).samples
    d = emd(Signal(x))
    a = assign_imfs(d, [synth_sine(700), synth_sine(300)])
    assert a.mean_sdr_db >= 15


def test_emd_modes_order_by_crossings():
    d = emd(synth_sine(700).samples + synth_sine(300).samples)
    zc = [count_zero_crossings(r) for r in d.imfs[:2]]
    assert zc[0] > zc[1]


@given(st.integers(0, 2 ** 32 - 1), st.integers(20, 400))
def test_emd_reconstruction_and_imf_property(seed, n):
    x = np.random.default_rng(seed).standard_normal(n)
    d = emd(x)
    assert d.reconstruction_error(x) <= 1e-10
    assert all(is_imf(row) for row in d.imfs)
    ext = find_local_extrema(d.residue)
    assert ext.n_max < 2 or ext.n_min < 2


def test_emd_max_imfs_cap(rng):
    x = rng.standard_normal(500)
    d = emd(x, max_imfs=2)
    assert d.n_imfs == 2
    assert d.reconstruction_error(x) <= 1e-10


def test_emd_deterministic(rng):
    x = rng.standard_normal(1000)
    a, b = emd(x), emd(x)
    assert np.array_equal(a.imfs, b.imfs) and np.array_equal(a.residue, b.residue)


def test_decomposition_helpers(tmp_path):
    d = emd(synth_sine(700).samples[:800] + 0.5 * synth_sine(300).samples[:800])
    assert d.modes().shape == (d.n_imfs + 1, 800)
    d.to_csv(tmp_path / "m.csv")
    header = (tmp_path / "m.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "imf1" and header[-1] == "residue"
    assert len(header) == d.n_imfs + 1


def test_decomposition_zero_signal_error():
    d = Decomposition(np.empty((0, 4)), np.zeros(4))
    assert d.reconstruction_error(np.zeros(4)) == 0.0
