import json
import math
import os

import pytest
from hypothesis import given, strategies as st

from chainsim.cluster import Cluster, make_nodes
from chainsim.engine import Engine, EngineConfig
from chainsim.metrics import (atomic_write, build_report, classify_slo, comparison_csv,
                              decompose_latency, nearest_rank, rpc, write_report)
from chainsim.policies import PolicyKind, assemble
from chainsim.workload import WorkloadMix, gen_poisson

from test_engine import make_catalog, run


class TestClassifySlo:
    def test_over_budget_violates(self):
        assert classify_slo(1200.0, 1000.0)

    def test_exactly_on_budget_passes(self):
        assert not classify_slo(1000.0, 1000.0)

    def test_under_budget_passes(self):
        assert not classify_slo(900.0, 1000.0)


class TestNearestRank:
    def test_simple(self):
        vals = [1.0, 2.0, 3.0, 4.0]
        assert nearest_rank(vals, 50) == 2.0
        assert nearest_rank(vals, 100) == 4.0
        assert nearest_rank(vals, 1) == 1.0

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=200),
           st.sampled_from([50, 95, 99]))
    def test_rank_definition(self, vals, pct):
        vals = sorted(vals)
        q = nearest_rank(vals, pct)
        at_most = sum(1 for v in vals if v <= q)
        assert at_most >= math.ceil(pct / 100 * len(vals))

    def test_quantiles_monotone_in_report(self):
        cat = make_catalog([("A", 10.0)], total_slack=500.0)
        events = [(float(i * 5), "C") for i in range(200)]
        stats = run(cat, events, PolicyKind.RSCALE, preprovision={"A": 2})
        rep = build_report(stats, "rscale", 0, 1000.0)
        assert rep.latency_p50 <= rep.latency_p95 <= rep.latency_p99


class TestDecomposition:
    def test_warm_no_queue_is_pure_exec(self):
        cat = make_catalog([("A", 50.0), ("B", 80.0)], total_slack=400.0)
        stats = run(cat, [(0.0, "C")], PolicyKind.RSCALE, preprovision={"A": 1, "B": 1})
        (req,) = stats.completed
        e, c, b = decompose_latency(req)
        assert (e, c, b) == (pytest.approx(130.0), 0.0, pytest.approx(0.0))

    def test_single_cold_spawn_all_cold_wait(self):
        cat = make_catalog([("A", 100.0)], total_slack=500.0, cold=(3000.0, 3000.0))
        stats = run(cat, [(0.0, "C")], PolicyKind.BLINE)
        (req,) = stats.completed
        e, c, b = decompose_latency(req)
        assert e == pytest.approx(100.0)
        assert c == pytest.approx(3000.0)
        assert b == pytest.approx(0.0)

    def test_second_batched_request_waits_one_met(self):
        cat = make_catalog([("A", 100.0)], total_slack=250.0)  # batch 2
        stats = run(cat, [(0.0, "C"), (0.0, "C")], PolicyKind.RSCALE, preprovision={"A": 1})
        second = max(stats.completed, key=lambda r: r.completion)
        e, c, b = decompose_latency(second)
        assert (e, c, b) == (pytest.approx(100.0), 0.0, pytest.approx(100.0))

    def test_components_always_sum_to_latency(self):
        mix = WorkloadMix("m", (("C", 1.0),))
        cat = make_catalog([("A", 20.0), ("B", 5.0)], total_slack=800.0, cold=(2000.0, 4000.0))
        trace = gen_poisson(40.0, 20_000.0, mix, seed=9)
        cfg = EngineConfig(horizon=trace.horizon, initial_provision="average",
                           transition_delay=7.0)
        cluster = Cluster(make_nodes(4, 16.0, 1 << 40, 100.0, 5.0))
        stats = Engine(cat, ["C"], trace, assemble(PolicyKind.BLINE), cluster, cfg, seed=2).run()
        for r in stats.completed:
            e, c, b = decompose_latency(r, transition_delay=7.0)
            assert e + c + b + 7.0 * (len(r.visits) - 1) == pytest.approx(r.latency)
            assert b >= -1e-9


class TestRpc:
    def test_plain_division(self):
        assert rpc(100, 10) == 10.0
        assert rpc(0, 0) == 0.0

    def test_one_to_one_burst_rpc_near_one(self):
        cat = make_catalog([("A", 10.0)], total_slack=500.0, cold=(1000.0, 1000.0))
        events = [(float(i), "C") for i in range(6)]
        stats = run(cat, events, PolicyKind.BLINE)
        rep = build_report(stats, "bline", 0, 1000.0)
        assert rep.rpc_per_stage["A"] == pytest.approx(1.0)

    def test_doubling_batch_never_reduces_rpc(self):
        mix = WorkloadMix("m", (("C", 1.0),))
        trace = gen_poisson(30.0, 20_000.0, mix, seed=10)

        def run_with_slack(total_slack):
            cat = make_catalog([("A", 50.0)], total_slack=total_slack, cold=(2000.0, 2000.0))
            cfg = EngineConfig(horizon=trace.horizon, initial_provision="average")
            cluster = Cluster(make_nodes(4, 16.0, 1 << 40, 100.0, 5.0))
            stats = Engine(cat, ["C"], trace, assemble(PolicyKind.RSCALE), cluster, cfg,
                           seed=3).run()
            rep = build_report(stats, "rscale", 3, 1000.0)
            return rep.rpc_per_stage["A"]

        assert run_with_slack(200.0) <= run_with_slack(400.0)  # batch 4 -> 8


class TestReportTotals:
    def _report(self):
        mix = WorkloadMix("m", (("C", 1.0),))
        cat = make_catalog([("A", 20.0), ("B", 5.0)], total_slack=800.0, cold=(2000.0, 4000.0))
        trace = gen_poisson(40.0, 30_000.0, mix, seed=11)
        cfg = EngineConfig(horizon=trace.horizon, initial_provision="average")
        cluster = Cluster(make_nodes(4, 16.0, 1 << 40, 100.0, 5.0))
        stats = Engine(cat, ["C"], trace, assemble(PolicyKind.BLINE), cluster, cfg, seed=4).run()
        return stats, build_report(stats, "bline", 4, 1000.0)

    def test_cold_start_count_matches_spawn_events(self):
        stats, rep = self._report()
        assert rep.cold_start_count == sum(st.cold_spawned for st in stats.stages.values())

    def test_per_stage_containers_reconcile(self):
        stats, rep = self._report()
        assert sum(rep.containers_per_stage.values()) == sum(
            st.spawned_total for st in stats.stages.values())

    def test_sampled_average_close_to_integral(self):
        stats, rep = self._report()
        # one 10 s sampling interval of error over the run duration
        n = len(rep.timeseries)
        peak = rep.peak_containers
        assert abs(rep.avg_containers - rep.avg_containers_sampled) <= peak / max(1, n - 1) + 1e-6

    def test_violation_pct_in_range(self):
        _, rep = self._report()
        assert 0.0 <= rep.slo_violation_pct <= 100.0


class TestSerialization:
    def test_json_is_canonical_and_stable(self):
        cat = make_catalog([("A", 10.0)], total_slack=500.0)
        stats = run(cat, [(0.0, "C")], PolicyKind.RSCALE, preprovision={"A": 1})
        rep = build_report(stats, "rscale", 0, 1000.0)
        a, b = rep.to_json(), rep.to_json()
        assert a == b
        parsed = json.loads(a)
        assert parsed["policy"] == "rscale"

    def test_write_report_files(self, tmp_path):
        cat = make_catalog([("A", 10.0)], total_slack=500.0)
        stats = run(cat, [(0.0, "C")], PolicyKind.RSCALE, preprovision={"A": 1})
        rep = build_report(stats, "rscale", 0, 1000.0)
        paths = write_report(rep, str(tmp_path), "cell")
        for p in paths.values():
            assert os.path.exists(p)
        assert "time_ms,live_containers" in open(paths["timeseries"]).read()

    def test_atomic_write_replaces(self, tmp_path):
        path = str(tmp_path / "f.txt")
        atomic_write(path, "one")
        atomic_write(path, "two")
        assert open(path).read() == "two"
        assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]

    def test_comparison_csv_normalizes_to_baseline(self):
        cat = make_catalog([("A", 10.0)], total_slack=500.0)
        stats = run(cat, [(0.0, "C")], PolicyKind.RSCALE, preprovision={"A": 1})
        r1 = build_report(stats, "bline", 0, 1000.0)
        r2 = build_report(stats, "fifer", 0, 1000.0)
        csv_text = comparison_csv([r1, r2])
        lines = csv_text.strip().splitlines()
        assert lines[0].endswith("avg_containers_vs_bline,energy_joules_vs_bline")
        assert len(lines) == 3
