"""Acceptance suites: trend and property checks at desk scale.

Desk scale means the default 80-core cluster, 10-minute horizons and three
fixed seeds.  Absolute percentages from large production traces are not
reproducible at this scale, so the checks assert orderings and bounded gaps
between policies, plus exact arithmetic and engine-versus-reference
equivalence.

Latency-shape and cold-start checks run on the bursty trace (the latency
tables they mirror come from trace-driven runs); container-count, SLO-parity,
utilization and energy checks run on the steady Poisson workload.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import reference
from .config import default_config, resolve
from .domain import SlackPolicy, batch_size, split_slack
from .metrics import MetricsReport
from .policies import (PolicyKind, demand_slots, proactive_spawn_count,
                       reactive_spawn_count, sbatch_count)
from .predictors import ForecasterConfig, evaluate_rmse, rate_series
from .runner import build_trace, run_cell
from .workload import gen_diurnal

ACCEPTANCE_SEEDS = [11, 22, 33]

SUITES = ("trends-poisson", "trends-spike", "predictor", "oracle", "formulas",
          "determinism", "all")


@dataclass
class CriterionResult:
    criterion: str
    passed: bool
    details: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.criterion}: {self.details}"


class AcceptanceContext:
    """Runs and caches the shared simulation cells."""

    def __init__(self, seeds: list[int] | None = None):
        self.seeds = seeds or ACCEPTANCE_SEEDS
        self._poisson: dict[tuple[str, int], MetricsReport] | None = None
        self._spike: dict[tuple[str, int], MetricsReport] | None = None

    def _run_set(self, workload_kind: str) -> dict[tuple[str, int], MetricsReport]:
        cfg = default_config()
        cfg["workload"]["kind"] = workload_kind
        cfg["seeds"] = list(self.seeds)
        rc = resolve(cfg)
        out = {}
        for seed in self.seeds:
            trace = build_trace(cfg, rc.mixes, seed)
            for kind in PolicyKind:
                out[(kind.value, seed)] = run_cell(rc, kind, seed, trace=trace)
        return out

    def poisson(self) -> dict[tuple[str, int], MetricsReport]:
        if self._poisson is None:
            self._poisson = self._run_set("poisson")
        return self._poisson

    def spike(self) -> dict[tuple[str, int], MetricsReport]:
        if self._spike is None:
            self._spike = self._run_set("spike")
        return self._spike


# ---------------------------------------------------------------------------
# criteria


def criterion_1_container_ordering(ctx: AcceptanceContext) -> CriterionResult:
    """Average live containers: fifer < rscale < bpred < bline, fifer well below bline."""
    reports = ctx.poisson()
    ok, parts = True, []
    for seed in ctx.seeds:
        vals = {p: reports[(p, seed)].avg_containers
                for p in ("fifer", "rscale", "bpred", "bline")}
        ordered = vals["fifer"] < vals["rscale"] < vals["bpred"] < vals["bline"]
        reduction = 1.0 - vals["fifer"] / vals["bline"]
        ok &= ordered and reduction >= 0.40
        parts.append(f"seed {seed}: F={vals['fifer']:.1f} R={vals['rscale']:.1f} "
                     f"P={vals['bpred']:.1f} B={vals['bline']:.1f} (-{100 * reduction:.0f}%)")
    return CriterionResult("1-container-ordering", ok, "; ".join(parts))


def criterion_2_slo_parity(ctx: AcceptanceContext) -> CriterionResult:
    reports = ctx.poisson()
    ok, parts = True, []
    for seed in ctx.seeds:
        f = reports[("fifer", seed)].slo_violation_pct
        b = reports[("bline", seed)].slo_violation_pct
        ok &= f <= b + 3.0
        parts.append(f"seed {seed}: fifer={f:.2f}% bline={b:.2f}%")
    return CriterionResult("2-slo-parity", ok, "; ".join(parts))


def criterion_3_sbatch_dynamism(ctx: AcceptanceContext) -> CriterionResult:
    reports = ctx.spike()
    ok, parts = True, []
    for seed in ctx.seeds:
        s = reports[("sbatch", seed)].slo_violation_pct
        f = reports[("fifer", seed)].slo_violation_pct
        ok &= s >= f + 10.0
        parts.append(f"seed {seed}: sbatch={s:.1f}% fifer={f:.1f}%")
    return CriterionResult("3-sbatch-under-dynamism", ok, "; ".join(parts))


def criterion_4_cold_starts(ctx: AcceptanceContext) -> CriterionResult:
    reports = ctx.spike()
    ok, parts = True, []
    for seed in ctx.seeds:
        f = reports[("fifer", seed)].cold_start_count
        r = reports[("rscale", seed)].cold_start_count
        p = reports[("bpred", seed)].cold_start_count
        ok &= f <= 0.5 * r and f <= p / 3.0
        parts.append(f"seed {seed}: fifer={f} rscale={r} bpred={p}")
    return CriterionResult("4-cold-start-counts", ok, "; ".join(parts))


def criterion_5_latency_shape(ctx: AcceptanceContext) -> CriterionResult:
    reports = ctx.spike()
    ok, parts = True, []
    for seed in ctx.seeds:
        f, b = reports[("fifer", seed)], reports[("bline", seed)]
        r, s = reports[("rscale", seed)], reports[("sbatch", seed)]
        this = (f.latency_p50 > b.latency_p50
                and f.latency_p99 <= r.latency_p99
                and f.latency_p99 <= s.latency_p99)
        ok &= this
        parts.append(f"seed {seed}: P50 f={f.latency_p50:.0f}>b={b.latency_p50:.0f}, "
                     f"P99 f={f.latency_p99:.0f} r={r.latency_p99:.0f} s={s.latency_p99:.0f}")
    return CriterionResult("5-latency-shape", ok, "; ".join(parts))


def criterion_6_rpc_ordering(ctx: AcceptanceContext) -> CriterionResult:
    """Container utilization (requests executed per container over the whole
    run) must order fifer >= rscale >= bline on the heavy mix."""
    reports = ctx.poisson()

    def overall_rpc(rep: MetricsReport) -> float:
        return sum(rep.executions_per_stage.values()) / sum(rep.containers_per_stage.values())

    ok, parts = True, []
    for seed in ctx.seeds:
        f = overall_rpc(reports[("fifer", seed)])
        r = overall_rpc(reports[("rscale", seed)])
        b = overall_rpc(reports[("bline", seed)])
        ok &= f >= r >= b
        parts.append(f"seed {seed}: F={f:.0f} R={r:.0f} B={b:.0f}")
    return CriterionResult("6-rpc-ordering", ok, "; ".join(parts))


def criterion_7_energy(ctx: AcceptanceContext) -> CriterionResult:
    reports = ctx.poisson()
    ok, parts = True, []
    for seed in ctx.seeds:
        f = reports[("fifer", seed)].energy_joules
        b = reports[("bline", seed)].energy_joules
        ok &= f <= 0.85 * b
        parts.append(f"seed {seed}: fifer/bline={f / b:.2f}")
    return CriterionResult("7-energy-direction", ok, "; ".join(parts))


def criterion_8_predictor_quality() -> CriterionResult:
    """On a seeded diurnal trace, the recurrent model beats the smoother, which
    beats the worst of the suite; training stays under five minutes."""
    from .defaults import DEFAULT_MIXES
    from .workload import WorkloadMix

    mix = WorkloadMix("heavy", tuple(DEFAULT_MIXES["heavy"]))
    trace = gen_diurnal(base_rate=60.0, amplitude=45.0, period=240_000.0,
                        horizon=1_200_000.0, mix=mix, seed=5)
    series = rate_series([t for t, _ in trace.events], trace.horizon, 5000.0)
    rmse = {}
    t0 = time.perf_counter()
    for kind in ("lstm", "ewma", "mwa", "linreg", "logreg"):
        rmse[kind], _ = evaluate_rmse(ForecasterConfig(kind=kind), series, split=0.6)
    train_s = time.perf_counter() - t0
    worst = max(v for k, v in rmse.items() if k not in ("lstm",))
    ok = rmse["lstm"] < rmse["ewma"] < worst and train_s < 300.0
    detail = (", ".join(f"{k}={v:.2f}" for k, v in sorted(rmse.items()))
              + f"; suite wall time {train_s:.1f}s")
    return CriterionResult("8-predictor-quality", ok, detail)


def criterion_9_oracle_equivalence() -> CriterionResult:
    problems = reference.compare_on_instances(n_instances=50, seed=2024)
    return CriterionResult("9-oracle-equivalence", not problems,
                           "50 instances match" if not problems else "; ".join(problems[:3]))


def criterion_10_formulas() -> CriterionResult:
    failures = []

    # proportional slack split, frozen from hand arithmetic 572 * met / 193.1
    mets = [151.2, 30.3, 6.1, 5.5]
    expected = [447.8840, 89.7545, 18.0694, 16.2921]
    got = split_slack(572.0, mets, SlackPolicy.PROPORTIONAL)
    if any(abs(g - e) > 0.01 for g, e in zip(got, expected)):
        failures.append(f"slack split {got}")
    if abs(sum(got) - 572.0) > 0.01:
        failures.append("slack sum not preserved")

    if batch_size(447.87, 151.2) != 2:
        failures.append("batch_size(447.87, 151.2)")
    if batch_size(0, 50) != 1 or batch_size(500, 100) != 5:
        failures.append("batch_size trivial cases")

    # queuing-delay threshold pipeline
    if reactive_spawn_count(20, 200.0, [4, 4], 4, 3000.0, delay=600.0, slack=500.0) != 0:
        failures.append("reactive: D_f below cold cost should not spawn")
    if reactive_spawn_count(20, 2000.0, [4, 4], 4, 3000.0, delay=600.0, slack=500.0) != 5:
        failures.append("reactive: D_f above cold cost should spawn ceil(20/4)")
    if reactive_spawn_count(20, 2000.0, [4, 4], 4, 3000.0, delay=100.0, slack=500.0) != 0:
        failures.append("reactive: delay below slack must not spawn")

    # proactive sizing arithmetic
    if proactive_spawn_count(40.0, 40.0, 4) != 0:
        failures.append("proactive exact fit")
    if proactive_spawn_count(55.0, 40.0, 4) != 4:
        failures.append("proactive ceil(15/4)")
    if sbatch_count(50.0, 300.0, 3) != 5:
        failures.append("fixed-pool sizing ceil(15/3)")
    if abs(demand_slots(50.0, 300.0) - 15.0) > 1e-12:
        failures.append("demand conversion")

    return CriterionResult("10-formula-unit-tests", not failures,
                           "all derived examples exact" if not failures else "; ".join(failures))


def criterion_11_determinism(ctx: AcceptanceContext) -> CriterionResult:
    cfg = default_config()
    cfg["seeds"] = [ctx.seeds[0]]
    rc = resolve(cfg)
    mismatches = []
    for kind in (PolicyKind.BLINE, PolicyKind.FIFER):
        a = run_cell(rc, kind, ctx.seeds[0]).to_json()
        b = run_cell(rc, kind, ctx.seeds[0]).to_json()
        if a != b:
            mismatches.append(kind.value)
    return CriterionResult("11-determinism", not mismatches,
                           "byte-identical reports" if not mismatches
                           else f"mismatch for {mismatches}")


# ---------------------------------------------------------------------------
# suite runner


def run_suite(name: str, ctx: AcceptanceContext | None = None) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown acceptance suite {name!r} (choose from {', '.join(SUITES)})")
    ctx = ctx or AcceptanceContext()
    results: list[CriterionResult] = []
    if name in ("trends-poisson", "all"):
        results += [criterion_1_container_ordering(ctx), criterion_2_slo_parity(ctx),
                    criterion_6_rpc_ordering(ctx), criterion_7_energy(ctx)]
    if name in ("trends-spike", "all"):
        results += [criterion_3_sbatch_dynamism(ctx), criterion_4_cold_starts(ctx),
                    criterion_5_latency_shape(ctx)]
    if name in ("predictor", "all"):
        results.append(criterion_8_predictor_quality())
    if name in ("oracle", "all"):
        results.append(criterion_9_oracle_equivalence())
    if name in ("formulas", "all"):
        results.append(criterion_10_formulas())
    if name in ("determinism", "all"):
        results.append(criterion_11_determinism(ctx))
    if name == "all":
        order = {f"{i}-": i for i in range(1, 12)}
        results.sort(key=lambda r: next((v for k, v in order.items()
                                         if r.criterion.startswith(k)), 99))
    return results
