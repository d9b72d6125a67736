"""Arrival-trace generators and CSV replay.

All generators are pure functions of (parameters, seed): the same inputs
always produce byte-identical traces.  Rates are cluster-wide requests per
second; times are milliseconds from simulation start.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadMix:
    """Named distribution over application chains; weights must sum to 1."""

    name: str
    chains: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if not self.chains:
            raise TraceError("workload mix has no chains")
        total = sum(w for _, w in self.chains)
        if abs(total - 1.0) > 1e-9:
            raise TraceError(f"mix {self.name!r}: weights sum to {total}, expected 1")
        if any(w < 0 for _, w in self.chains):
            raise TraceError(f"mix {self.name!r}: negative weight")

    def cumulative(self) -> list[float]:
        acc, out = 0.0, []
        for _, w in self.chains:
            acc += w
            out.append(acc)
        return out


@dataclass(frozen=True)
class ArrivalTrace:
    events: tuple[tuple[float, str], ...]  # (arrival_time_ms, chain_id), time-ordered
    horizon: float
    source: str

    def __post_init__(self) -> None:
        last = -math.inf
        for t, _ in self.events:
            if t < last:
                raise TraceError("arrival times must be non-decreasing")
            last = t

    def __len__(self) -> int:
        return len(self.events)

    def chain_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, cid in self.events:
            counts[cid] = counts.get(cid, 0) + 1
        return counts

    def average_rate(self) -> float:
        """Mean arrival rate in req/s over the horizon."""
        if self.horizon <= 0:
            return 0.0
        return len(self.events) / (self.horizon / 1000.0)


def _assign_chains(times: list[float], mix: WorkloadMix, rng: np.random.Generator,
                   horizon: float, source: str) -> ArrivalTrace:
    cum = mix.cumulative()
    ids = [cid for cid, _ in mix.chains]
    events = tuple((t, ids[bisect.bisect_left(cum, u)]) for t, u in zip(times, rng.random(len(times))))
    return ArrivalTrace(events=events, horizon=horizon, source=source)


def gen_poisson(rate: float, horizon: float, mix: WorkloadMix, seed: int) -> ArrivalTrace:
    """Homogeneous Poisson arrivals: i.i.d. exponential gaps, mean 1000/rate ms."""
    if rate <= 0:
        raise TraceError("rate must be > 0")
    if horizon < 0:
        raise TraceError("horizon must be >= 0")
    rng = np.random.default_rng(seed)
    times = []
    t = rng.exponential(1000.0 / rate)
    while t < horizon:
        times.append(t)
        t += rng.exponential(1000.0 / rate)
    return _assign_chains(times, mix, rng, horizon, "poisson")


def gen_diurnal(base_rate: float, amplitude: float, period: float, horizon: float,
                mix: WorkloadMix, seed: int) -> ArrivalTrace:
    """Sinusoid-modulated Poisson via thinning: rate(t) = base + amp*sin(2*pi*t/period).

    Stands in for day/night request patterns; amplitude 0 reduces exactly to
    the homogeneous generator in distribution.
    """
    if not base_rate > amplitude >= 0:
        raise TraceError("need base_rate > amplitude >= 0")
    if period <= 0:
        raise TraceError("period must be > 0")
    rng = np.random.default_rng(seed)
    lam_max = base_rate + amplitude
    times = []
    t = rng.exponential(1000.0 / lam_max)
    while t < horizon:
        rate_t = base_rate + amplitude * math.sin(2.0 * math.pi * t / period)
        if rng.random() <= rate_t / lam_max:
            times.append(t)
        t += rng.exponential(1000.0 / lam_max)
    return _assign_chains(times, mix, rng, horizon, "diurnal")


def gen_spike(base_rate: float, peak_rate: float, spike_starts: list[float],
              spike_len: float, horizon: float, mix: WorkloadMix, seed: int) -> ArrivalTrace:
    """Piecewise-homogeneous Poisson: peak_rate inside spike windows, base elsewhere.

    Models flash-crowd traffic where short windows run several times above the
    sustained rate.
    """
    if peak_rate < base_rate:
        raise TraceError("peak_rate must be >= base_rate")
    if base_rate <= 0:
        raise TraceError("base_rate must be > 0")
    rng = np.random.default_rng(seed)
    # Segment boundaries; Poisson memorylessness lets each segment be drawn
    # independently at its own rate.
    cuts = {0.0, horizon}
    for s in spike_starts:
        cuts.add(min(max(s, 0.0), horizon))
        cuts.add(min(max(s + spike_len, 0.0), horizon))
    bounds = sorted(cuts)
    windows = [(s, min(s + spike_len, horizon)) for s in spike_starts]

    def in_spike(t: float) -> bool:
        return any(a <= t < b for a, b in windows)

    times = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        rate = peak_rate if in_spike(a) else base_rate
        t = a + rng.exponential(1000.0 / rate)
        while t < b:
            times.append(t)
            t += rng.exponential(1000.0 / rate)
    return _assign_chains(times, mix, rng, horizon, "spike")


def load_trace_csv(path: str, mix: WorkloadMix, seed: int) -> ArrivalTrace:
    """Replay a recorded trace.

    Two schemas, auto-detected from the header row:
      * ``timestamp_ms`` - one arrival per row;
      * ``timestamp_s,count`` - per-second counts, expanded to uniformly
        jittered arrivals within each second (seeded).
    """
    rng = np.random.default_rng(seed)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise TraceError(f"{path}: empty trace file")
    header = [h.strip() for h in lines[0].split(",")]
    times: list[float] = []
    if header == ["timestamp_ms"]:
        for lineno, ln in enumerate(lines[1:], start=2):
            try:
                times.append(float(ln.split(",")[0]))
            except ValueError:
                raise TraceError(f"{path}:{lineno}: cannot parse timestamp {ln!r}") from None
    elif header == ["timestamp_s", "count"]:
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split(",")
            if len(parts) != 2:
                raise TraceError(f"{path}:{lineno}: expected 'timestamp_s,count'")
            try:
                second, count = float(parts[0]), int(parts[1])
            except ValueError:
                raise TraceError(f"{path}:{lineno}: cannot parse row {ln!r}") from None
            if count < 0:
                raise TraceError(f"{path}:{lineno}: negative count")
            jitter = np.sort(rng.random(count))
            times.extend((second + u) * 1000.0 for u in jitter)
    else:
        raise TraceError(f"{path}: unrecognized header {lines[0]!r}")
    times.sort()
    horizon = math.ceil(times[-1]) + 1.0 if times else 0.0
    trace = _assign_chains(times, mix, rng, horizon, "replay")
    return trace


def save_trace_csv(trace: ArrivalTrace, path: str) -> None:
    """Export arrivals in the one-per-row schema accepted by load_trace_csv."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp_ms\n")
        for t, _ in trace.events:
            fh.write(f"{t!r}\n")
