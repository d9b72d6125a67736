"""Per-request statistics and the run report.

The latency decomposition is exact by construction: execution time and
cold-start-attributable waiting are measured from timestamps, transition
delays are counted, and whatever remains is batching/queuing wait, so the
three components plus transitions always sum back to end-to-end latency.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from .engine import Request, RunStats


def classify_slo(latency: float, slo: float) -> bool:
    """True when the request violated its SLO; hitting the bound exactly passes."""
    return latency > slo


def nearest_rank(sorted_values: list[float], pct: float) -> float:
    """Nearest-rank percentile over an ascending list."""
    if not sorted_values:
        return math.nan
    if not 0 < pct <= 100:
        raise ValueError("pct must be in (0, 100]")
    rank = math.ceil(pct / 100.0 * len(sorted_values))
    return sorted_values[rank - 1]


def decompose_latency(req: Request, transition_delay: float = 0.0) -> tuple[float, float, float]:
    """Split one request's latency into (exec, cold-start wait, batching wait)."""
    exec_ms = sum(v.exec_end - v.exec_start for v in req.visits)
    cold_ms = sum(max(0.0, v.cold_ready - v.dispatch) for v in req.visits if v.cold_ready > 0)
    transitions = transition_delay * (len(req.visits) - 1)
    batch_ms = req.latency - exec_ms - cold_ms - transitions
    return exec_ms, cold_ms, batch_ms


def rpc(executions: int, containers_spawned: int) -> float:
    """Requests executed per container over a whole run, reaped included."""
    if containers_spawned == 0:
        return 0.0
    return executions / containers_spawned


@dataclass
class MetricsReport:
    policy: str
    seed: int
    n_requests: int
    n_completed: int
    slo_ms: float
    slo_violation_pct: float
    avg_containers: float          # time-weighted mean of the live container count
    avg_containers_sampled: float  # mean of the 10 s samples
    peak_containers: int
    latency_p50: float
    latency_p95: float
    latency_p99: float
    latency_mean: float
    exec_ms_mean: float
    cold_wait_ms_mean: float
    batch_wait_ms_mean: float
    transition_ms_mean: float
    cold_start_count: int
    energy_joules: float
    duration_ms: float
    rpc_per_stage: dict[str, float]
    containers_per_stage: dict[str, int]
    executions_per_stage: dict[str, int]
    deferred_spawns: int
    timeseries: list[tuple[float, int]] = field(repr=False, default_factory=list)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "timeseries"}
        d["policy"] = str(self.policy)
        return d

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, fixed layout, so equal runs are equal bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        rows = [
            ("policy", self.policy),
            ("seed", self.seed),
            ("requests completed", f"{self.n_completed}/{self.n_requests}"),
            ("SLO violations", f"{self.slo_violation_pct:.3f} %"),
            ("avg containers", f"{self.avg_containers:.2f}"),
            ("peak containers", self.peak_containers),
            ("latency P50/P95/P99", f"{self.latency_p50:.1f} / {self.latency_p95:.1f} / {self.latency_p99:.1f} ms"),
            ("mean exec / cold / batch", f"{self.exec_ms_mean:.1f} / {self.cold_wait_ms_mean:.1f} / {self.batch_wait_ms_mean:.1f} ms"),
            ("cold starts", self.cold_start_count),
            ("energy", f"{self.energy_joules:.0f} J"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def build_report(stats: RunStats, policy_name: str, seed: int, slo: float) -> MetricsReport:
    completed = stats.completed
    latencies = sorted(r.latency for r in completed)
    violations = sum(1 for r in completed if classify_slo(r.latency, r.chain.slo))

    exec_sum = cold_sum = batch_sum = 0.0
    for r in completed:
        e, c, b = decompose_latency(r, stats.transition_delay)
        exec_sum += e
        cold_sum += c
        batch_sum += b
    n = len(completed) or 1

    duration = stats.end_time
    avg_live = stats.live_integral / duration if duration > 0 else 0.0
    samples = [c for _, c in stats.timeseries]

    return MetricsReport(
        policy=policy_name,
        seed=seed,
        n_requests=len(completed),
        n_completed=len(completed),
        slo_ms=slo,
        slo_violation_pct=100.0 * violations / n,
        avg_containers=avg_live,
        avg_containers_sampled=sum(samples) / len(samples) if samples else 0.0,
        peak_containers=max(samples, default=0),
        latency_p50=nearest_rank(latencies, 50),
        latency_p95=nearest_rank(latencies, 95),
        latency_p99=nearest_rank(latencies, 99),
        latency_mean=sum(latencies) / n if latencies else math.nan,
        exec_ms_mean=exec_sum / n,
        cold_wait_ms_mean=cold_sum / n,
        batch_wait_ms_mean=batch_sum / n,
        transition_ms_mean=stats.transition_delay * (sum(len(r.visits) for r in completed) / n - 1) if completed else 0.0,
        cold_start_count=stats.cold_start_count,
        energy_joules=stats.energy_joules,
        duration_ms=duration,
        rpc_per_stage={k: rpc(st.executions, st.spawned_total) for k, st in sorted(stats.stages.items())},
        containers_per_stage={k: st.spawned_total for k, st in sorted(stats.stages.items())},
        executions_per_stage={k: st.executions for k, st in sorted(stats.stages.items())},
        deferred_spawns=sum(st.deferred_spawns for st in stats.stages.values()),
        timeseries=list(stats.timeseries),
    )


# ---------------------------------------------------------------------------
# file output


def atomic_write(path: str, data: str) -> None:
    """Write via temp file + rename so interrupted runs never truncate reports."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: MetricsReport, out_dir: str, stem: str) -> dict[str, str]:
    paths = {
        "json": os.path.join(out_dir, f"{stem}.json"),
        "txt": os.path.join(out_dir, f"{stem}.txt"),
        "timeseries": os.path.join(out_dir, f"{stem}.containers.csv"),
    }
    atomic_write(paths["json"], report.to_json())
    atomic_write(paths["txt"], report.to_text())
    lines = ["time_ms,live_containers"]
    lines += [f"{t:.0f},{c}" for t, c in report.timeseries]
    atomic_write(paths["timeseries"], "\n".join(lines) + "\n")
    return paths


COMPARISON_FIELDS = ["slo_violation_pct", "avg_containers", "latency_p50", "latency_p99",
                     "cold_start_count", "energy_joules"]


def comparison_csv(reports: list[MetricsReport], baseline: str = "bline") -> str:
    """Cross-policy table with columns normalized to the baseline policy."""
    base = {r.policy: r for r in reports}.get(baseline)
    out = []
    header = ["policy", "seed"] + COMPARISON_FIELDS
    if base is not None:
        header += [f"{f}_vs_{baseline}" for f in ("avg_containers", "energy_joules")]
    out.append(",".join(header))
    for r in reports:
        row = [r.policy, str(r.seed)]
        row += [f"{getattr(r, f):.4f}" for f in COMPARISON_FIELDS]
        if base is not None:
            for f in ("avg_containers", "energy_joules"):
                denom = getattr(base, f)
                row.append(f"{getattr(r, f) / denom:.4f}" if denom else "nan")
        out.append(",".join(row))
    return "\n".join(out) + "\n"
