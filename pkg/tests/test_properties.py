"""Property tests for invariants that hold for every valid input."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ecgnet import kernels
from ecgnet.dsp import moving_average, resample_linear, resampled_length, standardize
from ecgnet.engine import Tensor, attention_pool, conv1d, dense, gradient_check, softmax
from ecgnet.engine.gradcheck import as_leaf
from ecgnet.evaluation import METRIC_NAMES, ConfusionMatrix, class_metrics
from ecgnet.introspection import unpool_reconstruct
from ecgnet.record_io import decode_format212, encode_format212
from ecgnet.segmentation import SEVERITY_ORDER, AamiClass, SegmentSet, label_segment

from oracles import decode_212_oracle, median_oracle, metrics_from_counts_oracle

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

twelve_bit = st.integers(-2048, 2047)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def sample_pairs(draw):
    n = draw(st.integers(0, 64))
    a = draw(st.lists(twelve_bit, min_size=n, max_size=n))
    b = draw(st.lists(twelve_bit, min_size=n, max_size=n))
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)


@SETTINGS
@given(sample_pairs())
def test_format212_round_trip(pair):
    a, b = pair
    data = encode_format212(a, b)
    assert len(data) == 3 * a.size
    got_a, got_b = decode_format212(data, a.size)
    np.testing.assert_array_equal(got_a, a)
    np.testing.assert_array_equal(got_b, b)
    if a.size:
        oa, ob = decode_212_oracle(data, a.size)
        np.testing.assert_array_equal(oa, a)
        np.testing.assert_array_equal(ob, b)


@SETTINGS
@given(hnp.arrays(np.float64, st.integers(1, 120), elements=finite),
       st.integers(0, 12).map(lambda k: 2 * k + 1))
def test_median_backends_agree_with_oracle(x, window):
    if window > x.size:
        window = x.size if x.size % 2 else x.size - 1
    expect = median_oracle(x, window)
    for name in kernels.BACKENDS:
        np.testing.assert_array_equal(kernels.get_backend(name).median_filter(x, window), expect)


@SETTINGS
@given(hnp.arrays(np.float64, st.integers(7, 200), elements=finite), finite)
def test_moving_average_preserves_constants_and_shifts(x, c):
    np.testing.assert_allclose(moving_average(np.full(x.size, c)), c, rtol=0, atol=1e-9 * max(1, abs(c)))
    np.testing.assert_allclose(moving_average(x + c), moving_average(x) + c, atol=1e-9 * (1 + abs(c)))


@SETTINGS
@given(hnp.arrays(np.float64, st.integers(2, 300), elements=finite),
       st.sampled_from([(360, 180), (128, 180), (250, 180), (180, 180)]))
def test_resample_bounded_by_input(x, rates):
    y = resample_linear(x, *rates)
    assert y.size == resampled_length(x.size, *rates)
    assert y.min() >= x.min() - 1e-9 and y.max() <= x.max() + 1e-9


@SETTINGS
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 30)), elements=finite),
       st.floats(0.1, 100), finite)
def test_standardize_idempotent_and_affine_invariant(x, a, b):
    if x.std() <= 1e-6 * max(1.0, abs(x.mean())):
        return
    segs = SegmentSet(x, np.zeros(x.shape[0], dtype=np.int64), ["r"] * x.shape[0], np.arange(x.shape[0]))
    once, _, _ = standardize(segs)
    assert abs(once.samples.mean()) < 1e-9
    assert once.samples.std() == pytest.approx(1.0, abs=1e-9)
    twice, mean, std = standardize(once)
    assert mean == pytest.approx(0.0, abs=1e-9) and std == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(twice.samples, once.samples, atol=1e-9)
    moved, _, _ = standardize(segs.replace(samples=a * x + b))
    np.testing.assert_allclose(moved.samples, once.samples, atol=1e-6)


class TestLabelRules:
    counts = hnp.arrays(np.int64, 5, elements=st.integers(0, 20))

    @SETTINGS
    @given(counts)
    def test_label_has_maximal_abnormal_count(self, c):
        if c.sum() == 0:
            return
        label = label_segment(c)
        if c[1:].sum() == 0:
            assert label == AamiClass.N
        else:
            assert label != AamiClass.N
            assert c[label] == c[1:].max()
            # no more severe class shares the maximum
            for cls in SEVERITY_ORDER[: SEVERITY_ORDER.index(label)]:
                assert c[cls] < c[label]

    @SETTINGS
    @given(counts, st.randoms(use_true_random=False))
    def test_order_of_beats_irrelevant(self, c, rnd):
        if c.sum() == 0:
            return
        beats = [cls for cls in range(5) for _ in range(c[cls])]
        rnd.shuffle(beats)
        assert label_segment(beats) == label_segment(c)

    @SETTINGS
    @given(counts)
    def test_adding_normal_beats_never_changes_abnormal_label(self, c):
        if c[1:].sum() == 0:
            return
        more = c.copy()
        more[0] += 50
        assert label_segment(more) == label_segment(c)


confusions = hnp.arrays(np.int64, (5, 5), elements=st.integers(0, 500))


@SETTINGS
@given(confusions, st.integers(0, 4))
def test_confusion_identities(counts, cls):
    m = class_metrics(ConfusionMatrix(counts), cls)
    assert m.tp + m.fn == counts[cls].sum()
    assert m.tp + m.fp == counts[:, cls].sum()
    assert m.tp + m.fp + m.tn + m.fn == counts.sum()
    o = metrics_from_counts_oracle(m.tp, m.fp, m.tn, m.fn)
    for name in METRIC_NAMES:
        assert getattr(m, name) == o[name]
        assert 0.0 <= getattr(m, name) <= 1.0


@SETTINGS
@given(confusions, st.integers(2, 9), st.integers(0, 4))
def test_metrics_invariant_under_count_scaling(counts, k, cls):
    a = class_metrics(ConfusionMatrix(counts), cls)
    b = class_metrics(ConfusionMatrix(k * counts), cls)
    for name in METRIC_NAMES:
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-12, abs=1e-15)


@SETTINGS
@given(hnp.arrays(np.float64, 28, elements=finite))
def test_unpool_then_sample_recovers_bins(bins):
    out = unpool_reconstruct(bins)
    assert out.shape == (1800,)
    np.testing.assert_array_equal(out[::64][:28], bins)
    np.testing.assert_array_equal(out[1728:], np.full(72, bins[-1]))


@SETTINGS
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 8)), elements=st.floats(-50, 50)))
def test_softmax_rows_on_simplex(z):
    p = softmax(Tensor(z)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax(Tensor(z + 7.5)).data, p, atol=1e-12)
    top = np.sort(z, axis=1)
    clear = top[:, -1] - top[:, -2] > 1e-9
    assert np.array_equal(p.argmax(axis=1)[clear], z.argmax(axis=1)[clear])


def _wsum(t, w):
    return Tensor.from_op(np.asarray((t.data * w).sum()), (t,), lambda g: t.accumulate(g * w))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(3, 9), st.integers(1, 3), st.integers(1, 3),
       st.sampled_from([1, 3]), st.integers(0, 2**16))
def test_gradcheck_random_shapes(b, length, c_in, c_out, k, seed):
    rng = np.random.default_rng(seed)
    x = as_leaf(rng.standard_normal((b, length, c_in)))
    w = as_leaf(rng.standard_normal((k, c_in, c_out)) * 0.5)
    bias = as_leaf(rng.standard_normal(c_out))
    dw = as_leaf(rng.standard_normal((c_out, 3)) * 0.5)
    db = as_leaf(rng.standard_normal(3))
    aw = as_leaf(rng.standard_normal(c_out))
    ab = as_leaf(rng.standard_normal(1))
    proj = rng.standard_normal((b, 3))

    def fn():
        h = conv1d(x, w, bias)
        pooled, _ = attention_pool(h, aw, ab)
        return _wsum(softmax(dense(pooled, dw, db)), proj)

    assert gradient_check(fn, [x, w, bias, dw, db, aw, ab]) <= 1e-4
