import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chainsim.predictors import (Ewma, ForecasterConfig, LinearTrend, LogisticTrend,
                                 LstmForecaster, MovingWindowAverage, NotTrainedError,
                                 evaluate_rmse, forecast, global_max_rate, make_forecaster,
                                 rate_series, sample_windows)

CFG = ForecasterConfig(kind="ewma")  # W_s=5s, history=100s -> 20 windows


class TestSampleWindows:
    def test_constant_stream_close_to_rate(self):
        # 50 req/s deterministic-ish stream: one arrival every 20 ms
        log = [t * 20.0 for t in range(1, 10_000)]
        samples = sample_windows(log, now=150_000.0, cfg=CFG)
        assert len(samples) == 20
        bound = 3 * math.sqrt(50)
        for s in samples:
            assert abs(s.max_rate - 50.0) <= bound

    def test_brute_force_bin_oracle(self):
        rng = np.random.default_rng(0)
        log = sorted(rng.uniform(0, 200_000.0, size=5000))
        samples = sample_windows(log, now=200_000.0, cfg=CFG)
        for s in samples:
            best = 0
            for j in range(5):
                lo, hi = s.window_start + j * 1000.0, s.window_start + (j + 1) * 1000.0
                best = max(best, sum(1 for t in log if lo <= t < hi))
            assert s.max_rate == best

    def test_empty_log_all_zero(self):
        samples = sample_windows([], now=200_000.0, cfg=CFG)
        assert [s.max_rate for s in samples] == [0.0] * 20

    def test_short_history_padded_with_zeros(self):
        log = [50_001.0, 50_002.0]
        samples = sample_windows(log, now=51_000.0, cfg=CFG)
        assert len(samples) == 20
        assert sum(1 for s in samples if s.max_rate > 0) == 1

    def test_single_burst_single_window(self):
        log = [100_400.0 + i for i in range(30)]
        samples = sample_windows(log, now=200_000.0, cfg=CFG)
        nonzero = [s for s in samples if s.max_rate > 0]
        assert len(nonzero) == 1
        assert nonzero[0].max_rate == 30.0

    def test_global_max(self):
        log = [100_400.0 + i for i in range(30)]
        samples = sample_windows(log, now=200_000.0, cfg=CFG)
        assert global_max_rate(samples) == 30.0
        assert global_max_rate([]) == 0.0

    def test_history_must_be_multiple_of_window(self):
        with pytest.raises(ValueError):
            ForecasterConfig(kind="ewma", window_ms=7000.0, history_ms=100_000.0)


class TestClosedFormForecasters:
    def test_mwa_example(self):
        assert MovingWindowAverage(window=3).forecast([10.0, 20.0, 30.0]) == pytest.approx(20.0)

    def test_ewma_example(self):
        assert Ewma(alpha=0.5).forecast([10.0, 20.0]) == pytest.approx(15.0)

    def test_linreg_example(self):
        assert LinearTrend().forecast([10.0, 20.0, 30.0]) == pytest.approx(40.0)

    def test_linreg_clamped_nonnegative(self):
        assert LinearTrend().forecast([30.0, 20.0, 10.0, 0.0]) == 0.0

    def test_ewma_alpha_one_is_last_sample(self):
        assert Ewma(alpha=1.0).forecast([3.0, 9.0, 27.0]) == 27.0

    def test_logreg_constant_series(self):
        assert LogisticTrend().forecast([12.0, 12.0, 12.0]) == pytest.approx(12.0)

    def test_logreg_monotone_series_stays_in_range(self):
        out = LogisticTrend().forecast([10.0, 20.0, 30.0, 40.0])
        assert 0.0 <= out <= 41.0

    def test_empty_samples_rejected(self):
        for f in (MovingWindowAverage(), Ewma(), LinearTrend(), LogisticTrend()):
            with pytest.raises(ValueError):
                f.forecast([])

    @given(st.lists(st.floats(0.0, 500.0), min_size=1, max_size=30),
           st.sampled_from(["mwa", "ewma", "linreg", "logreg"]))
    @settings(max_examples=60, deadline=None)
    def test_forecasts_nonnegative(self, rates, kind):
        f = make_forecaster(ForecasterConfig(kind=kind))
        assert forecast(f, rates) >= 0.0


class TestLstm:
    def test_untrained_raises(self):
        m = LstmForecaster(hidden=4, layers=2)
        with pytest.raises(NotTrainedError, match="train"):
            m.forecast([1.0, 2.0])

    def test_gradient_check_against_central_differences(self):
        m = LstmForecaster(hidden=3, layers=2, lookback=2, seed=1)
        seq = np.array([0.2, 0.7])
        target = 0.5
        _, grads, dWy, dby = m._loss_and_grads(seq, target)
        eps = 1e-4
        worst = 0.0

        def numeric(get, put):
            old = get()
            put(old + eps)
            lp, *_ = m._loss_and_grads(seq, target)
            put(old - eps)
            lm, *_ = m._loss_and_grads(seq, target)
            put(old)
            return (lp - lm) / (2 * eps)

        for layer in range(m.layers):
            W, b = m.W[layer], m.b[layer]
            for idx in np.ndindex(W.shape):
                n = numeric(lambda: W[idx], lambda v: W.__setitem__(idx, v))
                worst = max(worst, abs(grads[layer].dW[idx] - n) / max(1e-6, abs(grads[layer].dW[idx]) + abs(n)))
            for i in range(b.size):
                n = numeric(lambda: b[i], lambda v: b.__setitem__(i, v))
                worst = max(worst, abs(grads[layer].db[i] - n) / max(1e-6, abs(grads[layer].db[i]) + abs(n)))
        for i in range(m.Wy.size):
            n = numeric(lambda: m.Wy[i], lambda v: m.Wy.__setitem__(i, v))
            worst = max(worst, abs(dWy[i] - n) / max(1e-6, abs(dWy[i]) + abs(n)))
        n = numeric(lambda: m.by, lambda v: setattr(m, "by", v))
        worst = max(worst, abs(dby - n) / max(1e-6, abs(dby) + abs(n)))
        assert worst < 1e-4

    def test_gate_activations_in_range(self):
        m = LstmForecaster(hidden=8, layers=2, lookback=4, seed=3)
        _, caches, _ = m._forward(np.array([0.1, 0.9, 0.4, 0.2]))
        for step in caches:
            for _, _, i, f, o, g, _ in step:
                assert np.all((i > 0) & (i < 1))
                assert np.all((f > 0) & (f < 1))
                assert np.all((o > 0) & (o < 1))
                assert np.all((g > -1) & (g < 1))

    def test_training_determinism(self):
        series = [10.0, 30.0, 10.0, 30.0] * 10
        def train():
            m = LstmForecaster(hidden=8, layers=2, epochs=5, lookback=6, seed=11)
            m.train(series)
            return m
        a, b = train(), train()
        for l in range(2):
            assert np.array_equal(a.W[l], b.W[l])
            assert np.array_equal(a.b[l], b.b[l])
        assert a.forecast(series[-6:]) == b.forecast(series[-6:])

    def test_save_load_roundtrip(self, tmp_path):
        series = [10.0, 30.0, 10.0, 30.0] * 8
        m = LstmForecaster(hidden=6, layers=2, epochs=5, lookback=4, seed=2)
        m.train(series)
        path = str(tmp_path / "model.bin")
        m.save(path)
        again = LstmForecaster.load(path)
        assert again.forecast(series[-4:]) == m.forecast(series[-4:])
        assert again.hidden == 6 and again.layers == 2 and again.lookback == 4

    def test_save_untrained_refused(self, tmp_path):
        m = LstmForecaster(hidden=4)
        with pytest.raises(NotTrainedError):
            m.save(str(tmp_path / "x.bin"))

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not a model")
        with pytest.raises(ValueError):
            LstmForecaster.load(str(path))

    def test_forecast_nonnegative(self):
        m = LstmForecaster(hidden=4, layers=1, epochs=3, lookback=3, seed=5)
        m.train([5.0, 0.0, 5.0, 0.0, 5.0, 0.0, 5.0])
        assert m.forecast([0.0, 0.0, 0.0]) >= 0.0


class TestEvaluateRmse:
    def test_constant_load_mwa_near_zero(self):
        series = [40.0] * 60
        rmse, _ = evaluate_rmse(ForecasterConfig(kind="mwa"), series, split=0.5)
        assert rmse == pytest.approx(0.0, abs=1e-9)

    def test_ewma_alpha_one_equals_persistence(self):
        rng = np.random.default_rng(4)
        series = list(rng.uniform(10, 90, size=80))
        cfg = ForecasterConfig(kind="ewma", ewma_alpha=1.0)
        rmse, _ = evaluate_rmse(cfg, series, split=0.5)
        cut = int(len(series) * 0.5)
        persist = math.sqrt(np.mean([(series[t] - series[t + 1]) ** 2
                                     for t in range(cut, len(series) - 1)]))
        assert rmse == pytest.approx(persist)

    def test_lstm_beats_mwa_on_square_wave(self):
        series = ([20.0] * 6 + [80.0] * 6) * 12
        lstm_rmse, _ = evaluate_rmse(
            ForecasterConfig(kind="lstm", lstm_hidden=16, lstm_epochs=60, lstm_lookback=12),
            series, split=0.6)
        mwa_rmse, _ = evaluate_rmse(ForecasterConfig(kind="mwa"), series, split=0.6)
        assert lstm_rmse < mwa_rmse

    def test_predictions_returned(self):
        series = [10.0] * 40
        rmse, preds = evaluate_rmse(ForecasterConfig(kind="ewma"), series, split=0.5)
        assert len(preds) == 19

    def test_bad_split_rejected(self):
        with pytest.raises(ValueError):
            evaluate_rmse(ForecasterConfig(kind="ewma"), [1.0] * 10, split=1.5)


class TestRateSeries:
    def test_matches_sample_windows_semantics(self):
        times = [t * 10.0 for t in range(2000)]  # 100 req/s for 20 s
        series = rate_series(times, horizon=20_000.0, window_ms=5000.0)
        assert len(series) == 4
        assert all(s == 100.0 for s in series)

    def test_empty(self):
        assert rate_series([], horizon=10_000.0) == [0.0, 0.0]
