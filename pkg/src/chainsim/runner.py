"""Experiment orchestration: build trace, train forecasters, run cells, write reports.

A "cell" is one (policy, seed) simulation.  All policies at a given seed see
the identical arrival trace, so cross-policy comparisons are paired.  The
recurrent forecaster is trained offline on the leading fraction of that same
trace before the simulation starts, mirroring a pre-trained deployment.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from . import workload
from .cluster import Cluster, make_nodes
from .config import ResolvedConfig, forecaster_config, resolve
from .engine import Engine, EngineConfig
from .metrics import MetricsReport, atomic_write, build_report, comparison_csv, write_report
from .policies import PolicyKind, assemble
from .predictors import LstmForecaster, make_forecaster, rate_series


def build_trace(cfg: dict, mixes, seed: int) -> workload.ArrivalTrace:
    wl = cfg["workload"]
    mix = mixes[wl["mix"]]
    kind = wl["kind"]
    if kind == "poisson":
        return workload.gen_poisson(float(wl["rate"]), float(wl["horizon_ms"]), mix, seed)
    if kind == "diurnal":
        return workload.gen_diurnal(float(wl["base_rate"]), float(wl["amplitude"]),
                                    float(wl["period_ms"]), float(wl["horizon_ms"]), mix, seed)
    if kind == "spike":
        scale = float(wl["spike_scale"])
        return workload.gen_spike(float(wl["spike_base_rate"]) * scale,
                                  float(wl["spike_peak_rate"]) * scale,
                                  [float(s) for s in wl["spike_starts_ms"]],
                                  float(wl["spike_len_ms"]), float(wl["horizon_ms"]), mix, seed)
    if kind == "csv":
        return workload.load_trace_csv(wl["csv_path"], mix, seed)
    raise ValueError(f"unknown workload kind {kind!r}")


def _build_cluster(cfg: dict) -> Cluster:
    cl = cfg["cluster"]
    nodes = make_nodes(int(cl["nodes"]), float(cl["cores_per_node"]),
                       int(cl["mem_per_node_bytes"]), float(cl["power_idle_w"]),
                       float(cl["power_per_core_w"]))
    return Cluster(nodes, idle_timeout=float(cfg["engine"]["idle_timeout_ms"]),
                   node_off_delay=float(cl["node_off_delay_ms"]))


def _engine_config(cfg: dict) -> EngineConfig:
    en = cfg["engine"]
    return EngineConfig(
        horizon=float(cfg["workload"]["horizon_ms"]),
        monitor_interval=float(en["monitor_interval_ms"]),
        idle_timeout=float(en["idle_timeout_ms"]),
        transition_delay=float(en["transition_delay_ms"]),
        jitter_sigma=float(en["jitter_sigma_ms"]),
        lsf_mode=en["lsf_mode"],
        initial_provision=en["initial_provision"],
    )


def _prepare_forecaster(rc: ResolvedConfig, policy, trace, seed: int):
    """Train learned forecasters on the leading fraction of the trace."""
    if policy.predictor is None:
        return None
    f = make_forecaster(policy.predictor)
    if isinstance(f, LstmForecaster):
        series = rate_series([t for t, _ in trace.events], trace.horizon,
                             policy.predictor.window_ms)
        cut = max(2, int(len(series) * policy.predictor.train_fraction))
        f.train(series[:cut])
    return f


def run_cell(rc: ResolvedConfig, policy_kind: PolicyKind, seed: int,
             trace: Optional[workload.ArrivalTrace] = None) -> MetricsReport:
    cfg = rc.raw
    if trace is None:
        trace = build_trace(cfg, rc.mixes, seed)
    pred_cfg = forecaster_config(cfg, "lstm" if policy_kind is PolicyKind.FIFER else "ewma",
                                 seed=cfg["predictor"].get("seed", 7))
    policy = assemble(policy_kind, pred_cfg if policy_kind in (PolicyKind.FIFER, PolicyKind.BPRED) else None)
    forecaster = _prepare_forecaster(rc, policy, trace, seed)
    mix = rc.mixes[cfg["workload"]["mix"]]
    chain_ids = [cid for cid, w in mix.chains if w > 0]
    engine = Engine(rc.catalog, chain_ids, trace, policy, _build_cluster(cfg),
                    _engine_config(cfg), seed=seed, forecaster=forecaster)
    stats = engine.run()
    return build_report(stats, policy_kind.value, seed, float(cfg["catalog"]["slo_ms"]))


def _cell_task(args):
    raw_cfg, policy_value, seed = args
    rc = resolve(raw_cfg)
    return run_cell(rc, PolicyKind(policy_value), seed)


@dataclass
class ExperimentResult:
    reports: list[MetricsReport]
    out_dir: str
    files: list[str]


def run_experiment(rc: ResolvedConfig, parallel: int = 0) -> ExperimentResult:
    """One report per (policy x seed) cell plus a cross-policy comparison CSV."""
    cfg = rc.raw
    out_dir = cfg["output_dir"]
    cells = [(cfg, p.value, s) for s in rc.seeds for p in rc.policies]
    if parallel and parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            reports = list(pool.map(_cell_task, cells))
    else:
        reports = []
        for s in rc.seeds:
            trace = build_trace(cfg, rc.mixes, s)
            for p in rc.policies:
                reports.append(run_cell(rc, p, s, trace=trace))

    files = []
    for rep in reports:
        paths = write_report(rep, out_dir, f"{rep.policy}_seed{rep.seed}")
        files.extend(paths.values())
    by_seed: dict[int, list[MetricsReport]] = {}
    for rep in reports:
        by_seed.setdefault(rep.seed, []).append(rep)
    for seed, reps in sorted(by_seed.items()):
        path = os.path.join(out_dir, f"comparison_seed{seed}.csv")
        atomic_write(path, comparison_csv(reps))
        files.append(path)
    return ExperimentResult(reports=reports, out_dir=out_dir, files=files)
