import logging

import pytest

from chainsim.domain import SlackPolicy
from chainsim.policies import (Policy, PolicyKind, assemble, demand_slots,
                               proactive_spawn_count, reactive_spawn_count, sbatch_count,
                               warm_start_count)
from chainsim.predictors import ForecasterConfig


class TestAssemble:
    def test_bline_is_one_to_one_without_batching(self):
        p = assemble(PolicyKind.BLINE)
        assert p.batch_one and p.spawn_on_demand
        assert not p.reactive and p.predictor is None and not p.lsf
        assert p.scales

    def test_sbatch_is_static_equal_division(self):
        p = assemble(PolicyKind.SBATCH)
        assert p.fixed_pool and not p.scales
        assert p.slack_policy is SlackPolicy.EQUAL_DIVISION
        assert not p.spawn_on_demand and not p.reactive and p.predictor is None

    def test_rscale_is_reactive_batching(self):
        p = assemble(PolicyKind.RSCALE)
        assert p.reactive and not p.batch_one and p.lsf
        assert p.predictor is None
        assert p.slack_policy is SlackPolicy.PROPORTIONAL

    def test_bpred_is_proactive_non_batching(self):
        p = assemble(PolicyKind.BPRED)
        assert p.batch_one and p.lsf and not p.reactive
        assert p.predictor is not None and p.predictor.kind == "ewma"

    def test_fifer_combines_batching_reactive_and_forecasting(self):
        p = assemble(PolicyKind.FIFER)
        assert not p.batch_one and p.reactive and p.lsf
        assert p.predictor is not None and p.predictor.kind == "lstm"
        assert p.slack_policy is SlackPolicy.PROPORTIONAL

    def test_bpred_with_other_forecaster_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            p = assemble(PolicyKind.BPRED, ForecasterConfig(kind="lstm"))
        assert p.predictor.kind == "lstm"
        assert any("ewma" in r.message for r in caplog.records)

    def test_string_kind_accepted(self):
        assert assemble("bline").kind is PolicyKind.BLINE


class TestReactiveTick:
    ARGS = dict(response_budget=200.0, container_batch_sizes=[4, 4], batch_size=4,
                cold_start_mid=3000.0)

    def test_queuing_cheaper_than_cold_start_no_spawn(self):
        # L=8, T_d=20*200=4000, D_f=500 < 3000
        n = reactive_spawn_count(pq_len=20, delay=600.0, slack=500.0, **self.ARGS)
        assert n == 0

    def test_queuing_beyond_cold_start_spawns(self):
        args = dict(self.ARGS, response_budget=2000.0)
        # T_d=40000, D_f=5000 > 3000 -> ceil(20/4)
        n = reactive_spawn_count(pq_len=20, delay=600.0, slack=500.0, **args)
        assert n == 5

    def test_delay_below_slack_never_spawns(self):
        args = dict(self.ARGS, response_budget=2000.0)
        assert reactive_spawn_count(pq_len=500, delay=499.0, slack=500.0, **args) == 0

    def test_no_containers_bootstraps(self):
        n = reactive_spawn_count(pq_len=20, response_budget=200.0, container_batch_sizes=[],
                                 batch_size=4, cold_start_mid=3000.0, delay=0.0, slack=500.0)
        assert n == 5
        n1 = reactive_spawn_count(pq_len=1, response_budget=200.0, container_batch_sizes=[],
                                  batch_size=4, cold_start_mid=3000.0, delay=0.0, slack=500.0)
        assert n1 == 1

    def test_no_containers_no_work_no_spawn(self):
        n = reactive_spawn_count(pq_len=0, response_budget=200.0, container_batch_sizes=[],
                                 batch_size=4, cold_start_mid=3000.0, delay=0.0, slack=500.0)
        assert n == 0


class TestProactiveTick:
    def test_exact_fit_no_spawn(self):
        assert proactive_spawn_count(40.0, 40.0, 4) == 0

    def test_shortfall_rounded_up(self):
        assert proactive_spawn_count(55.0, 40.0, 4) == 4

    def test_zero_forecast_never_scales_in(self):
        assert proactive_spawn_count(0.0, 40.0, 4) == 0

    def test_demand_conversion_is_littles_law(self):
        assert demand_slots(50.0, 300.0) == pytest.approx(15.0)
        assert demand_slots(0.0, 300.0) == 0.0
        with pytest.raises(ValueError):
            demand_slots(-1.0, 300.0)


class TestOfflineSizing:
    def test_fixed_pool_from_average_rate(self):
        assert sbatch_count(50.0, 300.0, 3) == 5

    def test_zero_rate_keeps_one_container(self):
        assert sbatch_count(0.0, 300.0, 3) == 1

    def test_doubling_rate_doubles_count(self):
        base = sbatch_count(50.0, 300.0, 3)
        assert sbatch_count(100.0, 300.0, 3) == 2 * base

    def test_warm_start_has_headroom(self):
        # occupancy 25*0.1512=3.78, batch 3 -> ceil(1.26)+1
        assert warm_start_count(25.0, 151.2, 3) == 3
        assert warm_start_count(0.0, 151.2, 3) == 1
