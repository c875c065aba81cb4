import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import find_peaks, peak_prominences

from symplan.errors import InvalidParameter, KeyFrameMismatch
from symplan.features import PlayTrajectory, cosine_similarity
from symplan.segmentation import (KeyFrameSet, find_keyframes, nms_peaks, segment_skills,
                                  smooth, temporal_similarity)

series_st = arrays(np.float64, st.integers(3, 60), elements=st.floats(-3, 3))


def test_constant_trajectory_similarity():
    tr = PlayTrajectory("c", np.tile(np.arange(1.0, 13.0).reshape(1, 3, 4), (20, 1, 1)))
    np.testing.assert_allclose(temporal_similarity(tr), 3.0, atol=1e-12)


def test_flip_drops_similarity():
    f = np.ones((30, 1, 3))
    f[11:] = [[1.0, -1.0, 2.0]]
    s = temporal_similarity(PlayTrajectory("f", f))
    assert s[10] < s[9] and s[10] < s[11]


def test_similarity_matches_bruteforce(rng):
    f = rng.normal(size=(40, 2, 4))
    s = temporal_similarity(PlayTrajectory("r", f))
    assert s.shape == (39,)
    expected = [sum(cosine_similarity(f[t, k], f[t + 1, k]) for k in range(2))
                for t in range(39)]
    np.testing.assert_allclose(s, expected, atol=1e-12)


def test_smooth_impulse_is_gaussian():
    x = np.zeros(41)
    x[20] = 1.0
    sigma, k = 2.0, 7
    out = smooth(x, sigma_t=sigma, sigma_v=math.inf, k=k)
    for t in range(41):
        offs = [i - t for i in range(t - k, t + k + 1) if 0 <= i < 41]
        weights = {o: math.exp(-o * o / (2 * sigma * sigma)) for o in offs}
        want = weights.get(20 - t, 0.0) / sum(weights.values())
        assert out[t] == pytest.approx(want, abs=1e-12)
    assert int(np.argmax(out)) == 20


def test_smooth_bilateral_matches_definition(rng):
    x = rng.normal(size=25)
    out = smooth(x, sigma_t=1.5, sigma_v=0.7, k=3)
    for t in range(25):
        num = den = 0.0
        for i in range(max(0, t - 3), min(25, t + 4)):
            w = math.exp(-(t - i) ** 2 / (2 * 1.5 ** 2)) * \
                math.exp(-(x[t] - x[i]) ** 2 / (2 * 0.7 ** 2))
            num += w * x[i]
            den += w
        assert out[t] == pytest.approx(num / den, abs=1e-12)


def test_smooth_parameters():
    np.testing.assert_array_equal(smooth(np.full(10, 2.5)), 2.5)
    with pytest.raises(InvalidParameter):
        smooth(np.ones(5), k=0)
    with pytest.raises(InvalidParameter):
        smooth(np.ones(5), sigma_t=0.0)


@given(series_st, st.floats(0.3, 5), st.one_of(st.just(math.inf), st.floats(0.05, 5)),
       st.integers(1, 8))
def test_smooth_bounded(x, sigma_t, sigma_v, k):
    out = smooth(x, sigma_t, sigma_v, k)
    assert out.min() >= x.min() and out.max() <= x.max()


@given(st.floats(-3, 3), st.integers(2, 40), st.integers(1, 8))
def test_smooth_constant_idempotent(c, n, k):
    np.testing.assert_array_equal(smooth(np.full(n, c), k=k), c)


def _bump(T, center, width=3.0, height=1.0):
    t = np.arange(T - 1)
    return height * np.exp(-(t - center) ** 2 / (2 * width ** 2))


def test_nms_single_bump():
    kf = nms_peaks(_bump(50, 25), w=5)
    assert {0, 25, 49} <= set(kf.indices)


def test_nms_monotone():
    assert nms_peaks(np.linspace(0, 1, 40), w=5).indices == (0, 40)
    assert nms_peaks(np.linspace(1, 0, 40), w=5).indices == (0, 40)


def test_nms_equal_bumps_lower_index_wins():
    s = np.zeros(40)
    s[[10, 13]] = 1.0
    s[[11, 12]] = 0.5
    kf = nms_peaks(s, w=5)
    assert kf.indices == (0, 10, 40)


def test_nms_plateau_peak_picked_once():
    s = np.zeros(30)
    s[10:15] = 1.0
    kf = nms_peaks(s, w=3)
    assert kf.indices == (0, 10, 30)   # T = len(series) + 1
    s[15:18] = 0.5   # shoulder on the way down, not a peak
    assert nms_peaks(s, w=3).indices == (0, 10, 30)


def _oracle_nms(s, w, min_prom):
    peaks, _ = find_peaks(s)
    prom = peak_prominences(s, peaks)[0]
    order = sorted(range(len(peaks)), key=lambda i: (-s[peaks[i]], peaks[i]))
    kept = []
    for i in order:
        p = peaks[i]
        if prom[i] > 0 and prom[i] >= min_prom and all(abs(p - q) > w for q in kept):
            kept.append(p)
    return sorted(set(kept) | {0, len(s)})


@settings(max_examples=200)
@given(st.lists(st.integers(0, 300), min_size=5, max_size=80, unique=True),
       st.integers(1, 10), st.floats(0, 0.5))
def test_nms_matches_scipy_oracle(levels, w, min_prom):
    # distinct, well-separated values so plateau conventions play no role
    s = np.array(levels, dtype=np.float64) / 100.0
    assert list(nms_peaks(s, w, min_prom).indices) == _oracle_nms(s, w, min_prom)


@given(series_st, st.integers(1, 12), st.floats(0, 1))
def test_nms_spacing(s, w, min_prom):
    idx = nms_peaks(s, w, min_prom).indices
    interior = idx[1:-1]
    assert idx[0] == 0 and idx[-1] == len(s)
    assert all(b - a > w for a, b in zip(interior, interior[1:]))


def test_segment_skills():
    tr = PlayTrajectory("x", np.ones((50, 1, 2)))
    subs = segment_skills(tr, KeyFrameSet("x", (0, 25, 49)))
    assert [(s.start, s.end) for s in subs] == [(0, 25), (25, 49)]
    assert list(subs[0].intermediate) == list(range(1, 25))
    whole = segment_skills(tr, KeyFrameSet("x", (0, 49)))
    assert [(s.start, s.end) for s in whole] == [(0, 49)]
    with pytest.raises(KeyFrameMismatch):
        segment_skills(tr, KeyFrameSet("y", (0, 49)))


def test_synthetic_boundaries(small_world):
    _, ds, truth = small_world
    w = 10
    for tr, tt in zip(ds, truth.trajectories):
        kf, _ = find_keyframes(tr, w=w)
        # first and last dwell touch the trajectory ends and are covered by 0, T-1
        interior = [g for g, (a, b) in zip(tt.stable_frames, tt.dwell_segments)
                    if a > 0 and b < tr.num_frames - 1]
        assert len(kf.indices) - 2 == len(interior)
        for g in tt.stable_frames:
            assert min(abs(g - i) for i in kf.indices) <= w
