"""Experiment configuration: JSON file schema, defaults, validation.

One human-editable JSON document describes catalog, workload, cluster,
engine, predictor, policies and seeds.  CLI flags override file values.
Parsing then serializing a config is the identity, which keeps configs
reproducible alongside their reports.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

from . import defaults
from .domain import Catalog, MicroserviceProfile, SlackError, build_chain
from .policies import PolicyKind
from .predictors import FORECASTER_KINDS, ForecasterConfig
from .workload import WorkloadMix


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending entry."""


def default_config() -> dict[str, Any]:
    return {
        "catalog": {
            "slo_ms": defaults.DEFAULT_SLO_MS,
            "overhead_margin_ms": defaults.DEFAULT_OVERHEAD_MARGIN_MS,
            "microservices": [
                {
                    "id": ms_id, "met_ms": met,
                    "cold_start_min_ms": cold[0], "cold_start_max_ms": cold[1],
                    "cpu_demand": defaults.CONTAINER_CPU_CORES,
                    "mem_demand_bytes": defaults.CONTAINER_MEM_BYTES,
                }
                for ms_id, met, cold in defaults._MICROSERVICES
            ],
            "chains": [
                {"id": cid, "stages": stages}
                for cid, stages in defaults._CHAINS.items()
            ],
        },
        "workload": {
            "kind": "poisson",          # poisson | diurnal | spike | csv
            "rate": 50.0,
            "horizon_ms": 600_000.0,
            "mix": "heavy",
            # diurnal
            "base_rate": 50.0,
            "amplitude": 30.0,
            "period_ms": 240_000.0,
            # spike: canonical burst trace scaled down to this cluster
            "spike_base_rate": 300.0,
            "spike_peak_rate": 1200.0,
            "spike_scale": 0.1,
            "spike_starts_ms": [120_000.0, 300_000.0, 480_000.0],
            "spike_len_ms": 60_000.0,
            # csv
            "csv_path": "",
        },
        "cluster": {
            "nodes": 5,
            "cores_per_node": 16.0,
            "mem_per_node_bytes": 64 << 30,
            "power_idle_w": 100.0,
            "power_per_core_w": 5.0,
            "node_off_delay_ms": 60_000.0,
        },
        "engine": {
            "monitor_interval_ms": 10_000.0,
            "idle_timeout_ms": 600_000.0,
            "transition_delay_ms": 0.0,
            "jitter_sigma_ms": 0.0,
            "lsf_mode": "dynamic",
            "initial_provision": "average",
        },
        "predictor": {
            "window_ms": 5_000.0,
            "history_ms": 100_000.0,
            "horizon_ms": 600_000.0,
            "ewma_alpha": 0.5,
            "mwa_window": 5,
            "lstm_hidden": 32,
            "lstm_layers": 2,
            "lstm_epochs": 100,
            "lstm_lr": 0.05,
            "lstm_lookback": 20,
            "train_fraction": 0.6,
            "seed": 7,
        },
        "policies": ["bline", "sbatch", "rscale", "bpred", "fifer"],
        "seeds": [11, 22, 33],
        "output_dir": "out",
    }


def merge_overrides(cfg: dict, overrides: dict[str, Any]) -> dict:
    """Apply dotted-path overrides, e.g. {'workload.rate': 80}."""
    out = copy.deepcopy(cfg)
    for path, value in overrides.items():
        node = out
        parts = path.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config section {path!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {path!r}")
        node[parts[-1]] = value
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
    base = default_config()
    _deep_update(base, user, path="")
    return base


def _deep_update(base: dict, user: Any, path: str) -> None:
    if not isinstance(user, dict):
        raise ConfigError(f"config section {path or '<root>'!r} must be an object")
    for k, v in user.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            _deep_update(base[k], v, path + k + ".")
        else:
            base[k] = v


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


@dataclass
class ResolvedConfig:
    raw: dict
    catalog: Catalog
    mixes: dict[str, WorkloadMix]
    policies: list[PolicyKind]
    seeds: list[int]


def resolve(cfg: dict) -> ResolvedConfig:
    """Validate referential integrity and construct the domain objects."""
    cat = cfg["catalog"]
    micro: dict[str, MicroserviceProfile] = {}
    for m in cat["microservices"]:
        if m["id"] in micro:
            raise ConfigError(f"duplicate microservice {m['id']!r}")
        micro[m["id"]] = MicroserviceProfile(
            id=m["id"], met_ref=float(m["met_ms"]),
            cold_start_min=float(m["cold_start_min_ms"]),
            cold_start_max=float(m["cold_start_max_ms"]),
            cpu_demand=float(m["cpu_demand"]),
            mem_demand=int(m["mem_demand_bytes"]))
    chains = {}
    for ch in cat["chains"]:
        cid = ch["id"]
        missing = [s for s in ch["stages"] if s not in micro]
        if missing:
            raise ConfigError(f"chain {cid!r} references unknown microservice(s) {missing}")
        try:
            chains[cid] = build_chain(cid, list(ch["stages"]), micro,
                                      float(cat["slo_ms"]), float(cat["overhead_margin_ms"]))
        except SlackError as e:
            raise ConfigError(str(e)) from None
    catalog = Catalog(microservices=micro, chains=chains)

    mixes = {}
    for name, pairs in defaults.DEFAULT_MIXES.items():
        mixes[name] = WorkloadMix(name=name, chains=tuple(pairs))
    wl_mix = cfg["workload"]["mix"]
    if isinstance(wl_mix, dict):
        pairs = tuple((cid, float(w)) for cid, w in sorted(wl_mix.items()))
        mixes["custom"] = WorkloadMix(name="custom", chains=pairs)
        cfg["workload"]["mix"] = "custom"
        wl_mix = "custom"
    if wl_mix not in mixes:
        raise ConfigError(f"unknown workload mix {wl_mix!r}")
    for cid, _ in mixes[wl_mix].chains:
        if cid not in chains:
            raise ConfigError(f"workload mix references unknown chain {cid!r}")

    try:
        policies = [PolicyKind(p) for p in cfg["policies"]]
    except ValueError as e:
        raise ConfigError(str(e)) from None
    seeds = [int(s) for s in cfg["seeds"]]
    if not seeds:
        raise ConfigError("at least one seed is required")

    pred = cfg["predictor"]
    if cfg["workload"]["kind"] not in ("poisson", "diurnal", "spike", "csv"):
        raise ConfigError(f"unknown workload kind {cfg['workload']['kind']!r}")
    if pred["history_ms"] % pred["window_ms"] != 0:
        raise ConfigError("predictor.history_ms must be a multiple of window_ms")
    if not 0.0 <= float(cfg["engine"]["jitter_sigma_ms"]) <= 20.0:
        raise ConfigError("engine.jitter_sigma_ms must be within [0, 20]")

    return ResolvedConfig(raw=cfg, catalog=catalog, mixes=mixes,
                          policies=policies, seeds=seeds)


def forecaster_config(cfg: dict, kind: str, seed: int) -> ForecasterConfig:
    if kind not in FORECASTER_KINDS:
        raise ConfigError(f"unknown forecaster kind {kind!r}")
    p = cfg["predictor"]
    return ForecasterConfig(
        kind=kind, window_ms=float(p["window_ms"]), history_ms=float(p["history_ms"]),
        horizon_ms=float(p["horizon_ms"]), ewma_alpha=float(p["ewma_alpha"]),
        mwa_window=int(p["mwa_window"]), lstm_hidden=int(p["lstm_hidden"]),
        lstm_layers=int(p["lstm_layers"]), lstm_epochs=int(p["lstm_epochs"]),
        lstm_lr=float(p["lstm_lr"]), lstm_lookback=int(p["lstm_lookback"]),
        train_fraction=float(p["train_fraction"]), seed=seed)
