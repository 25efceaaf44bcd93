"""Summary statistics and recurrent embedding tests."""

import numpy as np
import pytest

import simcal.diffcore as dc
from simcal.embeddings import EmbeddingNet
from simcal.summaries import (EmbeddingSummarizer, NaiveSummarizer, Standardizer,
                              naive_summaries)


class TestNaiveSummaries:
    def test_three_point_series(self):
        s = naive_summaries(np.array([1.0, 2.0, 3.0, 4.0]))
        assert s[0] == 2.5            # mean
        assert s[1] == pytest.approx(5.0 / 3.0)  # unbiased variance
        assert s[2] == 4.0 and s[3] == 1.0
        assert s[4] == 2.5            # median

    def test_small_known_values(self):
        s = naive_summaries(np.array([1.0, 2.0, 3.0, 3.0]))
        assert s[0] == pytest.approx(2.25)
        assert s[2] == 3.0 and s[3] == 1.0
        assert s[4] == 2.5

    def test_constant_series_degenerate_case(self):
        s = naive_summaries(np.full(50, 3.7))
        assert s[1] == pytest.approx(0.0, abs=1e-25)
        assert np.array_equal(s[7:10], np.zeros(3))

    def test_alternating_series_lag1_acf(self):
        x = np.tile([1.0, -1.0], 5000)
        assert naive_summaries(x)[7] == pytest.approx(-1.0, abs=1e-9)

    def test_first_seven_statistics_permutation_invariant(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(200)
        a = naive_summaries(x)
        b = naive_summaries(rng.permutation(x))
        assert np.allclose(a[:7], b[:7])

    def test_multivariate_concatenates_per_dimension(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((100, 3))
        s = naive_summaries(x)
        assert s.shape == (30,)
        for k in range(3):
            assert np.allclose(s[10 * k:10 * (k + 1)], naive_summaries(x[:, k]))

    def test_too_short_series_rejected(self):
        with pytest.raises(ValueError, match="at least 4"):
            naive_summaries(np.array([1.0, 2.0, 3.0]))


class TestStandardizer:
    def test_identity_until_fitted(self):
        std = Standardizer(3)
        x = np.array([1.0, -2.0, 5.0])
        assert np.array_equal(std.transform(x), x)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((50, 4)) * [1, 10, 0.1, 3] + [0, 5, -2, 1]
        std = Standardizer(4).fit(data)
        z = std.transform(data)
        assert np.allclose(z.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(z.std(axis=0), 1, atol=1e-12)
        assert np.allclose(std.inverse(z), data)

    def test_constant_feature_kept_finite(self):
        data = np.ones((10, 2))
        data[:, 1] = np.arange(10)
        std = Standardizer(2).fit(data)
        assert np.all(np.isfinite(std.transform(data)))


class TestEmbeddingNet:
    @pytest.mark.parametrize("cell", ["elman", "gru"])
    def test_zero_weights_give_constant_output(self, cell):
        store = dc.ParamStore()
        net = EmbeddingNet(store, input_dim=2, cell=cell,
                           rng=np.random.default_rng(0))
        for p in store.params.values():
            p.value[...] = 0.0
        rng = np.random.default_rng(1)
        a = net.forward(rng.standard_normal((3, 20, 2))).value
        b = net.forward(rng.standard_normal((3, 20, 2))).value
        assert np.array_equal(a, b)
        assert np.allclose(a, a[0])

    @pytest.mark.parametrize("cell", ["elman", "gru"])
    def test_output_dim_16_for_any_length(self, cell):
        store = dc.ParamStore()
        net = EmbeddingNet(store, input_dim=1, cell=cell,
                           rng=np.random.default_rng(0))
        for t_len in (5, 37, 100):
            out = net.forward(np.random.default_rng(2).standard_normal((4, t_len, 1)))
            assert out.value.shape == (4, 16)

    @pytest.mark.parametrize("cell", ["elman", "gru"])
    def test_gradient_matches_finite_differences(self, cell):
        store = dc.ParamStore()
        rng = np.random.default_rng(3)
        net = EmbeddingNet(store, input_dim=2, cell=cell, hidden=6, layers=2,
                           out_dim=4, rng=rng)
        x = rng.standard_normal((3, 15, 2))

        def loss_value():
            out = net.forward(x)
            return float((out * out).mean().value)

        store.zero_grad()
        out = net.forward(x)
        dc.backward((out * out).mean())
        direction = {n: rng.standard_normal(p.value.shape)
                     for n, p in store.params.items()}
        analytic = sum(float((p.grad * direction[n]).sum())
                       for n, p in store.params.items() if p.grad is not None)
        h = 1e-6
        for n, p in store.params.items():
            p.value += h * direction[n]
        f_plus = loss_value()
        for n, p in store.params.items():
            p.value -= 2 * h * direction[n]
        f_minus = loss_value()
        fd = (f_plus - f_minus) / (2 * h)
        assert abs(fd - analytic) / max(abs(fd), 1e-12) < 1e-3

    def test_distinct_inputs_distinct_outputs(self):
        store = dc.ParamStore()
        net = EmbeddingNet(store, input_dim=1, cell="gru",
                           rng=np.random.default_rng(4))
        rng = np.random.default_rng(5)
        a = net.forward(rng.standard_normal((1, 30, 1))).value
        b = net.forward(rng.standard_normal((1, 30, 1))).value
        assert not np.allclose(a, b)

    def test_gru_parameter_count_order_1e4(self):
        store = dc.ParamStore()
        net = EmbeddingNet(store, input_dim=1, cell="gru",
                           rng=np.random.default_rng(0))
        assert 5_000 < net.param_count() < 20_000

    def test_one_training_step_changes_recurrent_weights(self):
        store = dc.ParamStore()
        net = EmbeddingNet(store, input_dim=1, cell="gru", hidden=8,
                           rng=np.random.default_rng(6))
        x = np.random.default_rng(7).standard_normal((5, 20, 1))
        before = {n: p.value.copy() for n, p in store.params.items()
                  if "w_hh" in n}
        store.zero_grad()
        dc.backward((net.forward(x) * net.forward(x)).mean())
        store.adam_step(1e-3)
        changed = any(not np.array_equal(before[n], store.params[n].value)
                      for n in before)
        assert changed


class TestSummarizers:
    def test_naive_summarizer_features(self):
        rng = np.random.default_rng(8)
        xs = rng.standard_normal((40, 50, 2))
        summ = NaiveSummarizer(2)
        summ.fit(xs)
        cached = summ.cache(xs)
        assert cached.shape == (40, 20)
        assert np.allclose(cached.mean(axis=0), 0, atol=1e-10)
        single = summ.features_np(xs[3])
        assert np.allclose(single, cached[3])

    def test_embedding_summarizer_roundtrip_state(self):
        rng = np.random.default_rng(9)
        store = dc.ParamStore()
        summ = EmbeddingSummarizer(store, series_dim=1, cell="gru", hidden=8,
                                   rng=rng)
        xs = rng.standard_normal((10, 25, 1))
        summ.fit(xs)
        feats = summ.features_np(xs[0])
        state = summ.state()

        store2 = dc.ParamStore()
        summ2 = EmbeddingSummarizer(store2, series_dim=1, cell="gru", hidden=8,
                                    rng=np.random.default_rng(1))
        summ2.load_state(state)
        assert np.array_equal(summ2.features_np(xs[0]), feats)
