import math

import numpy as np
import pytest
from scipy import stats

from chainsim.workload import (ArrivalTrace, TraceError, WorkloadMix, gen_diurnal,
                               gen_poisson, gen_spike, load_trace_csv, save_trace_csv)

MIX = WorkloadMix("half", (("A", 0.5), ("B", 0.5)))
SINGLE = WorkloadMix("solo", (("A", 1.0),))


class TestPoisson:
    def test_count_within_3_sigma(self):
        trace = gen_poisson(50.0, 600_000.0, MIX, seed=1)
        expected, sigma = 30_000, math.sqrt(30_000)
        assert abs(len(trace) - expected) <= 3 * sigma

    def test_zero_horizon_empty(self):
        assert len(gen_poisson(50.0, 0.0, MIX, seed=1)) == 0

    def test_same_seed_identical(self):
        a = gen_poisson(50.0, 60_000.0, MIX, seed=9)
        b = gen_poisson(50.0, 60_000.0, MIX, seed=9)
        assert a.events == b.events

    def test_different_seed_differs(self):
        a = gen_poisson(50.0, 60_000.0, MIX, seed=9)
        b = gen_poisson(50.0, 60_000.0, MIX, seed=10)
        assert a.events != b.events

    def test_mix_proportions_converge(self):
        trace = gen_poisson(50.0, 600_000.0, MIX, seed=3)
        n = len(trace)
        n_a = trace.chain_counts()["A"]
        sigma = math.sqrt(n * 0.25)
        assert abs(n_a - 0.5 * n) <= 3 * sigma

    def test_rate_must_be_positive(self):
        with pytest.raises(TraceError):
            gen_poisson(0.0, 1000.0, MIX, seed=1)


class TestDiurnal:
    def test_amplitude_zero_matches_homogeneous(self):
        flat = gen_diurnal(50.0, 0.0, 60_000.0, 250_000.0, SINGLE, seed=4)
        homog = gen_poisson(50.0, 250_000.0, SINGLE, seed=5)
        gaps = lambda tr: np.diff([t for t, _ in tr.events])
        _, p = stats.ks_2samp(gaps(flat), gaps(homog))
        assert p > 0.01

    def test_no_empty_long_windows(self):
        period = 30_000.0
        trace = gen_diurnal(40.0, 30.0, period, 300_000.0, SINGLE, seed=6)
        times = [t for t, _ in trace.events]
        for start in range(0, 240_000, 60_000):
            inside = [t for t in times if start <= t < start + 2 * period]
            assert inside, f"no arrivals in [{start}, {start + 2 * period})"

    def test_same_seed_identical(self):
        a = gen_diurnal(40.0, 20.0, 60_000.0, 120_000.0, MIX, seed=7)
        b = gen_diurnal(40.0, 20.0, 60_000.0, 120_000.0, MIX, seed=7)
        assert a.events == b.events

    def test_parameter_validation(self):
        with pytest.raises(TraceError):
            gen_diurnal(10.0, 10.0, 60_000.0, 1000.0, MIX, seed=1)  # base must exceed amplitude


class TestSpike:
    def test_peak_to_median_ratio(self):
        trace = gen_spike(300.0, 1200.0, [100_000.0], 40_000.0, 300_000.0, SINGLE, seed=8)
        times = np.array([t for t, _ in trace.events])
        bins = np.histogram(times, bins=np.arange(0, 300_001, 1000))[0]
        ratio = bins.max() / np.median(bins)
        assert 3.5 <= ratio <= 5.5

    def test_peak_equal_base_is_homogeneous(self):
        a = gen_spike(100.0, 100.0, [50_000.0], 10_000.0, 200_000.0, SINGLE, seed=9)
        rate = len(a) / 200.0
        assert abs(rate - 100.0) <= 3 * math.sqrt(100.0 * 200) / 200

    def test_no_spikes_is_homogeneous(self):
        a = gen_spike(100.0, 900.0, [], 10_000.0, 200_000.0, SINGLE, seed=10)
        rate = len(a) / 200.0
        assert abs(rate - 100.0) <= 3 * math.sqrt(100.0 * 200) / 200

    def test_peak_below_base_rejected(self):
        with pytest.raises(TraceError):
            gen_spike(100.0, 50.0, [], 1000.0, 10_000.0, SINGLE, seed=1)


class TestCsvReplay:
    def test_per_row_schema_roundtrip(self, tmp_path):
        trace = gen_poisson(20.0, 30_000.0, SINGLE, seed=11)
        path = tmp_path / "trace.csv"
        save_trace_csv(trace, str(path))
        again = load_trace_csv(str(path), SINGLE, seed=11)
        assert [t for t, _ in again.events] == [t for t, _ in trace.events]

    def test_counts_schema_expands_within_second(self, tmp_path):
        path = tmp_path / "counts.csv"
        path.write_text("timestamp_s,count\n0,3\n1,0\n2,2\n")
        trace = load_trace_csv(str(path), SINGLE, seed=12)
        assert len(trace) == 5
        times = [t for t, _ in trace.events]
        assert all(0 <= t < 1000 for t in times[:3])
        assert all(2000 <= t < 3000 for t in times[3:])
        assert times == sorted(times)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("timestamp_ms\n100\nnot-a-number\n")
        with pytest.raises(TraceError, match="bad.csv:3"):
            load_trace_csv(str(path), SINGLE, seed=1)

    def test_unknown_header_rejected(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("when,how_many\n1,2\n")
        with pytest.raises(TraceError, match="unrecognized header"):
            load_trace_csv(str(path), SINGLE, seed=1)

    def test_counts_schema_determinism(self, tmp_path):
        path = tmp_path / "counts.csv"
        path.write_text("timestamp_s,count\n0,50\n1,50\n")
        a = load_trace_csv(str(path), SINGLE, seed=3)
        b = load_trace_csv(str(path), SINGLE, seed=3)
        assert a.events == b.events


class TestInvariants:
    def test_trace_must_be_sorted(self):
        with pytest.raises(TraceError):
            ArrivalTrace(events=((5.0, "A"), (1.0, "A")), horizon=10.0, source="replay")

    def test_mix_weights_must_sum_to_one(self):
        with pytest.raises(TraceError):
            WorkloadMix("bad", (("A", 0.5), ("B", 0.4)))

    def test_average_rate(self):
        trace = ArrivalTrace(events=((0.0, "A"), (500.0, "A")), horizon=1000.0, source="replay")
        assert trace.average_rate() == pytest.approx(2.0)
