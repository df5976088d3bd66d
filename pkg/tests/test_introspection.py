import csv
import math

import numpy as np
import pytest

from ecgnet.errors import UnknownLayerTag, WrongBinCount
from ecgnet.introspection import activation_map, unpool_reconstruct, write_activation_csv
from ecgnet.model import ModelSpec, build_model

# a narrow trunk that still maps 1800 samples onto 28 bins: 1800 -> 225 -> 28
SMALL = ModelSpec(filter_size=3, initial_filters=4, growth_rate=4, convs_per_block=1, n_blocks=2,
                  transition_strides=(8, 8), gru_units=4, gru_seq_len=28)


@pytest.fixture(scope="module")
def small_model():
    return build_model(SMALL, seed=3)


def _segment(seed=0):
    return np.random.default_rng(seed).standard_normal((1800, 1))


class TestUnpool:
    def test_constant(self):
        np.testing.assert_array_equal(unpool_reconstruct(np.full(28, 2.5)), np.full(1800, 2.5))

    def test_first_bin(self):
        bins = np.zeros(28)
        bins[0] = 1.0
        out = unpool_reconstruct(bins)
        assert np.flatnonzero(out).tolist() == list(range(64))

    def test_last_bin_spans_72(self):
        bins = np.zeros(28)
        bins[-1] = 1.0
        out = unpool_reconstruct(bins)
        assert np.flatnonzero(out).tolist() == list(range(1728, 1800))

    def test_block_first_sample_recovers_bins(self):
        bins = np.random.default_rng(0).standard_normal(28)
        out = unpool_reconstruct(bins)
        assert out.shape == (1800,)
        np.testing.assert_array_equal(out[np.arange(28) * 64], bins)

    def test_sum_weighted_by_span(self):
        bins = np.random.default_rng(1).random(28)
        spans = np.array([64] * 27 + [72])
        assert unpool_reconstruct(bins).sum() == pytest.approx((bins * spans).sum(), rel=1e-12)

    def test_wrong_bin_count(self):
        with pytest.raises(WrongBinCount):
            unpool_reconstruct(np.zeros(27), n_bins=28)
        with pytest.raises(WrongBinCount):
            unpool_reconstruct(np.zeros((2, 14)))


class TestActivationMap:
    def test_trunk_bins_nonnegative(self, small_model):
        amap = activation_map(small_model, _segment(1), "trunk_last_conv")
        assert amap.bins.shape == (28,)
        assert np.all(amap.bins >= 0)
        assert amap.reconstructed.shape == (1800,)

    def test_default_model_bins(self):
        amap = activation_map(build_model(ModelSpec()), _segment(2), "gru")
        assert amap.bins.shape == (28,)

    def test_gru_bin_sum_bound(self, small_model):
        x = _segment(3)
        taps = {}
        small_model.forward(x[None], taps=taps)
        per_step = np.abs(taps["gru_states"][0]).sum(axis=1)
        amap = activation_map(small_model, x, "gru")
        assert amap.bins.sum() <= per_step.max() + 1e-12

    def test_unknown_tag(self, small_model):
        with pytest.raises(UnknownLayerTag):
            activation_map(small_model, _segment(), "dense")

    def test_hand_set_weights(self):
        model = build_model(SMALL, seed=0)
        for name, p in model.params.items():
            if name.endswith((".conv.w", ".conv.b")) or name.startswith(("gru.", "attn.")):
                p.data[...] = 0.0
        # with zero convs every batch norm emits its beta; the last transition's survive the ReLU
        beta = np.array([0.7, -0.3, 1.1, 0.0, -2.0, 0.25, 0.9, -0.01])
        model.params["trans1.bn.beta"].data[...] = beta
        cand_bias = np.array([0.4, -0.9, 1.5, 0.05])
        model.params["gru.bias"].data[8:] = cand_bias

        trunk = activation_map(model, _segment(4), "trunk_last_conv")
        expect_trunk = sum(max(b, 0.0) for b in beta)
        np.testing.assert_allclose(trunk.bins, np.full(28, expect_trunk), atol=1e-12)

        # zero weights: z = 0.5, candidate tanh(c), so h_t = tanh(c) * (1 - 0.5**(t+1)); attention is uniform
        gru = activation_map(model, _segment(4), "gru")
        mag = sum(abs(math.tanh(c)) for c in cand_bias)
        expect_gru = [mag * (1 - 0.5 ** (t + 1)) / 28 for t in range(28)]
        np.testing.assert_allclose(gru.bins, expect_gru, atol=1e-12)


class TestCsv:
    @pytest.mark.parametrize("normalized,rows", [(False, 3), (True, 5)])
    def test_rows(self, tmp_path, small_model, normalized, rows):
        x = _segment(5)
        trunk = activation_map(small_model, x, "trunk_last_conv")
        gru = activation_map(small_model, x, "gru")
        path = tmp_path / "a.csv"
        write_activation_csv(path, x[:, 0], trunk, gru, normalized=normalized)
        table = list(csv.reader(path.open()))
        assert [r[0] for r in table][:3] == ["signal", "trunk_last_conv", "gru"]
        assert len(table) == rows
        assert all(len(r) == 1801 for r in table)
        np.testing.assert_array_equal([float(v) for v in table[0][1:]], x[:, 0])
        if normalized:
            assert max(abs(float(v)) for v in table[3][1:]) == pytest.approx(1.0)
