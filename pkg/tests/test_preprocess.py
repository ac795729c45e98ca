import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motiontape.core import Dataset, MovementLabel, MTSample
from motiontape.errors import AlignmentError, ConfigError, DataError
from motiontape.preprocess import (
    PreprocessParams, RawTrial, align_and_trim, baseline_normalize,
    exclude_noisy_trials, hampel_filter, minmax_normalize, resample_to,
    run_pipeline,
)
from motiontape.synthdata import SimulatorConfig, generate_dataset


# ------------------------------------------------------------------ #
#  baseline_normalize                                                 #
# ------------------------------------------------------------------ #

def make_trial(resistance, r0):
    res = np.asarray(resistance, dtype=float)
    if res.ndim == 1:
        res = np.tile(res, (6, 1))
    r0 = np.full(6, r0) if np.isscalar(r0) else np.asarray(r0)
    return RawTrial(res, r0)


def test_baseline_normalize_examples():
    out = baseline_normalize(make_trial([11_000.0, 10_000.0], 10_000.0))
    np.testing.assert_allclose(out[:, 0], 0.1)
    np.testing.assert_allclose(out[:, 1], 0.0)
    # paper's unstrained 10 kOhm baseline, compressed reading
    out = baseline_normalize(make_trial([9_500.0, 10_000.0], 10_000.0))
    np.testing.assert_allclose(out[:, 0], -0.05)


def test_baseline_normalize_rejects_bad_baseline():
    r0 = np.array([1.0, 1.0, 0.0, 1.0, 1.0, 1.0])
    with pytest.raises(DataError) as err:
        baseline_normalize(make_trial([1.0, 2.0], r0))
    assert "channel 3" in str(err.value)


def test_baseline_normalize_is_invertible():
    rng = np.random.default_rng(0)
    r0 = rng.uniform(5_000, 15_000, size=6)
    res = r0[:, None] * rng.uniform(0.5, 1.5, size=(6, 40))
    out = baseline_normalize(RawTrial(res, r0))
    recovered = r0[:, None] * (out + 1.0)
    np.testing.assert_allclose(recovered, res, rtol=1e-12)


# ------------------------------------------------------------------ #
#  hampel_filter                                                      #
# ------------------------------------------------------------------ #

def hampel_reference(x, w, k):
    """Independent per-window median/MAD oracle with explicit loops."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    for i in range(len(x)):
        win = x[max(0, i - w):min(len(x), i + w + 1)]
        med = np.median(win)
        mad = np.median(np.abs(win - med))
        if abs(x[i] - med) > k * 1.4826 * mad:
            out[i] = med
    return out


def test_hampel_constant_series_is_fixpoint():
    x = np.ones(5)
    np.testing.assert_array_equal(hampel_filter(x, 2, 3.0), x)


def test_hampel_replaces_isolated_spike():
    x = np.array([1.0, 1, 1, 100, 1, 1, 1])
    out = hampel_filter(x, 3, 3.0)
    np.testing.assert_array_equal(out, hampel_reference(x, 3, 3.0))
    assert out[3] == 1.0


def test_hampel_keeps_monotone_ramp():
    x = np.array([0.0, 1, 2, 3, 4])
    out = hampel_filter(x, 1, 3.0)
    np.testing.assert_array_equal(out, hampel_reference(x, 1, 3.0))
    np.testing.assert_array_equal(out, x)


def test_hampel_short_series_passthrough():
    x = np.array([5.0])
    np.testing.assert_array_equal(hampel_filter(x, 3, 3.0), x)


def test_hampel_matches_reference_on_random_series():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = rng.integers(2, 60)
        x = rng.normal(size=n)
        x[rng.integers(0, n)] += 50  # plant one spike
        for w in (1, 3, 5):
            np.testing.assert_array_equal(hampel_filter(x, w, 3.0),
                                          hampel_reference(x, w, 3.0))


def test_hampel_inliers_are_bitwise_unchanged():
    rng = np.random.default_rng(2)
    x = rng.normal(size=80)
    out = hampel_filter(x, 5, 3.0)
    changed = out != x
    # every replaced value equals its own window median
    for i in np.flatnonzero(changed):
        win = x[max(0, i - 5):min(len(x), i + 6)]
        assert out[i] == np.median(win)
    # untouched values are bit-identical
    assert np.array_equal(out[~changed], x[~changed])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=40))
def test_hampel_commutes_with_sign_flip(xs):
    x = np.array(xs)
    flipped = hampel_filter(-x, 3, 3.0)
    np.testing.assert_array_equal(flipped, -hampel_filter(x, 3, 3.0))


# ------------------------------------------------------------------ #
#  exclude_noisy_trials                                               #
# ------------------------------------------------------------------ #

def test_exclusion_keeps_clean_synthetic_data():
    d = generate_dataset(SimulatorConfig(n_subjects=3, T=60, noise_sigma=0.1,
                                         spike_rate=0.0, seed=3))
    kept, excluded = exclude_noisy_trials(d)
    assert excluded == []
    assert len(kept) == len(d)


def test_exclusion_catches_injected_outlier():
    # A single outlier's within-sample z-score is capped at sqrt(T-1), so a
    # length-300 sample is needed for an 11-sigma exceedance to be possible.
    d = generate_dataset(SimulatorConfig(n_subjects=2, T=300, noise_sigma=0.1,
                                         spike_rate=0.0, seed=4))
    target = d.samples[5]
    vals = target.values.copy()
    # bisect for an injected value that lands ~11 sigma above the mean under
    # the sample's own post-injection statistics
    lo, hi = vals[2].max(), vals[2].max() + 1e6
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        vals[2, 30] = mid
        z = (mid - vals[2].mean()) / vals[2].std()
        if z < 11.0:
            lo = mid
        else:
            hi = mid
    vals[2, 30] = hi
    samples = list(d.samples)
    samples[5] = MTSample(target.subject_id, target.repetition, target.label, vals)
    kept, excluded = exclude_noisy_trials(Dataset(tuple(samples), d.kinematics))
    assert len(excluded) == 1
    assert excluded[0].key == target.key
    assert excluded[0].channel == 3
    assert excluded[0].max_z > 10.0
    assert len(kept) == len(d) - 1


# ------------------------------------------------------------------ #
#  align_and_trim                                                     #
# ------------------------------------------------------------------ #

def test_align_equal_lengths_zero_offsets_unchanged():
    mt = np.arange(12.0).reshape(2, 6)
    kin = np.arange(12.0).reshape(2, 6) + 100
    a, b = align_and_trim(mt, kin)
    np.testing.assert_array_equal(a, mt)
    np.testing.assert_array_equal(b, kin)


def test_align_trims_to_shorter_stream():
    mt = np.zeros((2, 300))
    kin = np.zeros((2, 310))
    a, b = align_and_trim(mt, kin)
    assert a.shape[1] == b.shape[1] == 300


def test_align_offset_drops_leading_steps():
    # strain stream starts 0.1 s late; 5 kinematics steps must be dropped
    mt = np.tile(np.arange(20.0), (2, 1))
    kin = np.tile(np.arange(25.0), (2, 1))
    a, b = align_and_trim(mt, kin, offsets=(0.1, 0.0), dt=0.02)
    assert b[0, 0] == 5.0
    assert a[0, 0] == 0.0
    assert a.shape[1] == b.shape[1] == 20


def test_align_empty_overlap_raises():
    mt = np.zeros((2, 3))
    kin = np.zeros((2, 3))
    with pytest.raises(AlignmentError):
        align_and_trim(mt, kin, offsets=(1.0, 0.0), dt=0.02)


# ------------------------------------------------------------------ #
#  resample_to                                                        #
# ------------------------------------------------------------------ #

def test_resample_identity():
    x = np.random.default_rng(5).normal(size=(3, 300))
    np.testing.assert_array_equal(resample_to(x, 300), x)


def test_resample_preserves_linear_ramps():
    x = np.linspace(0.0, 1.0, 250)[None, :] * np.array([[2.0], [-3.0]])
    for T in (100, 250, 300, 777):
        out = resample_to(x, T)
        expected = np.linspace(0.0, 1.0, T)[None, :] * np.array([[2.0], [-3.0]])
        np.testing.assert_allclose(out, expected, atol=1e-12)


def test_resample_sinusoid_against_analytic_oracle():
    t = np.arange(250)
    x = np.sin(2 * np.pi * 3 * t / 249)[None, :]
    out = resample_to(x, 300)
    t_new = np.linspace(0, 249, 300)
    oracle = np.sin(2 * np.pi * 3 * t_new / 249)
    assert np.max(np.abs(out[0] - oracle)) < 1e-3


def test_resample_rejects_tiny_target():
    with pytest.raises(ConfigError):
        resample_to(np.zeros((2, 10)), 1)


# ------------------------------------------------------------------ #
#  minmax_normalize                                                   #
# ------------------------------------------------------------------ #

def test_minmax_examples():
    out, = minmax_normalize([np.array([[0.0, 5.0, 10.0]])])
    np.testing.assert_allclose(out, [[-1.0, 0.0, 1.0]])
    out, = minmax_normalize([np.array([[3.0, 3.0, 3.0]])])
    np.testing.assert_array_equal(out, [[0.0, 0.0, 0.0]])


def test_minmax_attains_extremes_at_argmin_argmax():
    rng = np.random.default_rng(6)
    for _ in range(50):
        x = rng.normal(size=(1, 30))
        out, = minmax_normalize([x])
        assert out[0, np.argmax(x)] == 1.0
        assert out[0, np.argmin(x)] == -1.0
        assert out.min() >= -1.0 and out.max() <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=30),
       st.floats(0.01, 50), st.floats(-50, 50))
def test_minmax_invariant_under_positive_affine_map(xs, gain, offset):
    x = np.array(xs)[None, :]
    base, = minmax_normalize([x])
    mapped, = minmax_normalize([gain * x + offset])
    np.testing.assert_allclose(mapped, base, atol=1e-9)


def test_minmax_groups_share_scale_across_repetitions():
    a = np.array([[0.0, 1.0]])
    b = np.array([[0.0, 3.0]])
    na, nb = minmax_normalize([a, b])
    # min/max pooled over the group: 0 -> -1, 3 -> 1, 1 -> -1/3
    np.testing.assert_allclose(na, [[-1.0, -1.0 / 3.0]])
    np.testing.assert_allclose(nb, [[-1.0, 1.0]])


# ------------------------------------------------------------------ #
#  full pipeline                                                      #
# ------------------------------------------------------------------ #

def test_pipeline_output_is_processed_and_in_range():
    d = generate_dataset(SimulatorConfig(n_subjects=3, T=80, seed=7))
    out, excluded = run_pipeline(d, PreprocessParams(target_T=50))
    assert out.processed
    assert all(s.n_steps == 50 for s in out.samples)
    for s in out.samples:
        assert s.values.min() >= -1.0 and s.values.max() <= 1.0
    for k in out.kinematics:
        assert k.values.min() >= -1.0 and k.values.max() <= 1.0


def test_pipeline_is_deterministic_and_order_independent():
    d = generate_dataset(SimulatorConfig(n_subjects=2, T=60, seed=8))
    out1, _ = run_pipeline(d)
    shuffled = d.subset(list(reversed(range(len(d)))))
    out2, _ = run_pipeline(shuffled)
    by_key = {s.key: s for s in out2.samples}
    for s in out1.samples:
        np.testing.assert_array_equal(s.values, by_key[s.key].values)
