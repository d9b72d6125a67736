"""Discrete-event simulation core.

Single-threaded and fully deterministic: events are ordered by (time, kind
priority, sequence number), with completions before container readiness
before arrivals before monitor work at equal timestamps.  A run processes
every trace arrival to completion, then quiesces.

Request flow: an arrival enqueues at its chain's first stage.  Stage queues
are shared by microservice identity, popped least-slack-first (or in arrival
order for the non-LSF policies), and drained into the container with the
fewest free slots.  A container holds at most batch-size commitments and
serves them one at a time; a cold-starting container accepts commitments but
begins service only once it is ready.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cluster import Cluster, Container, ContainerState, select_container
from .domain import AppChain, Catalog, MET_FLOOR_MS, stage_runtime_profiles
from .policies import (DELAY_WINDOW_MS, MONITOR_INTERVAL_MS, Policy, demand_slots,
                       proactive_spawn_count, reactive_spawn_count, sbatch_count,
                       warm_start_count)
from .predictors import Forecaster, make_forecaster, sample_windows
from .workload import ArrivalTrace

# Tie-break order for simultaneous events.
EXEC_COMPLETE, CONTAINER_READY, ARRIVAL, MONITOR_TICK, IDLE_SWEEP, TRACE_END = range(6)


@dataclass
class StageVisit:
    enqueue: float
    dispatch: float = math.nan
    exec_start: float = math.nan
    exec_end: float = math.nan
    container_id: int = -1
    cold_ready: float = 0.0  # container ready_at at assignment when it was still cold


@dataclass
class Request:
    id: int
    chain: AppChain
    arrival: float
    stage_idx: int = 0
    exec_done: float = 0.0
    completion: float = math.nan
    visits: list[StageVisit] = field(default_factory=list)
    spawn_triggered: bool = False  # one-to-one policies: at most one spawn per request per stage

    @property
    def latency(self) -> float:
        return self.completion - self.arrival


@dataclass
class StageState:
    """Engine-side view of one shared stage (keyed by microservice)."""

    microservice_id: str
    met: float
    slack: float
    batch: int
    response_budget: float
    cold_mid: float
    avg_rate: float = 0.0
    traffic_share: float = 1.0  # fraction of trace arrivals that visit this stage
    queue: list = field(default_factory=list)       # (key, arrival, seq, request)
    containers: list[Container] = field(default_factory=list)
    arrival_log: list[float] = field(default_factory=list)
    dispatch_log: deque = field(default_factory=deque)  # (dispatch_time, queue_wait)
    executions: int = 0
    spawned_total: int = 0
    cold_spawned: int = 0
    reactive_spawns: int = 0
    proactive_spawns: int = 0
    deferred_spawns: int = 0

    def live_containers(self) -> list[Container]:
        return [c for c in self.containers if c.live]

    def capacity_slots(self) -> int:
        return sum(c.batch_size for c in self.containers if c.live)


@dataclass(frozen=True)
class EngineConfig:
    horizon: float = 600_000.0
    monitor_interval: float = MONITOR_INTERVAL_MS
    delay_window: float = DELAY_WINDOW_MS
    idle_timeout: float = 600_000.0
    transition_delay: float = 0.0
    jitter_sigma: float = 0.0          # optional Gaussian execution noise, ms
    lsf_mode: str = "dynamic"          # dynamic: decayed remaining slack; static: chain slack
    initial_provision: str = "average"  # average | none


@dataclass
class RunStats:
    """Raw engine output handed to the metrics module."""

    completed: list[Request]
    stages: dict[str, StageState]
    timeseries: list[tuple[float, int]]
    live_integral: float          # container-count * ms
    end_time: float
    energy_joules: float
    cold_start_count: int
    horizon: float
    transition_delay: float


class Engine:
    def __init__(self, catalog: Catalog, chain_ids: list[str], trace: ArrivalTrace,
                 policy: Policy, cluster: Cluster, cfg: EngineConfig, seed: int,
                 forecaster: Optional[Forecaster] = None,
                 preprovision_counts: Optional[dict[str, int]] = None):
        self.catalog = catalog
        self.trace = trace
        self.policy = policy
        self.cluster = cluster
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.forecaster = forecaster
        if policy.predictor is not None and self.forecaster is None:
            self.forecaster = make_forecaster(policy.predictor)
        self._preprovision_counts = preprovision_counts

        self.chains = {cid: catalog.chain(cid) for cid in chain_ids}
        self.stages = self._build_stages()
        self._stage_order = sorted(self.stages)

        self._heap: list = []
        self._seq = 0
        self._now = 0.0
        self.in_flight = 0
        self.completed: list[Request] = []
        self._timeseries: list[tuple[float, int]] = []
        self._live_integral = 0.0
        self._live_t = 0.0
        self._live_count = 0

    # -- setup ----------------------------------------------------------------

    def _build_stages(self) -> dict[str, StageState]:
        """Resolve per-stage runtime numbers; shared stages take the tightest
        batch and budget across the chains that use them."""
        stages: dict[str, StageState] = {}
        for cid in sorted(self.chains):
            chain = self.chains[cid]
            profiles = stage_runtime_profiles(chain, self.policy.slack_policy,
                                              force_batch_one=self.policy.batch_one)
            for prof in profiles:
                st = stages.get(prof.microservice_id)
                if st is None:
                    ms = self.catalog.profile(prof.microservice_id)
                    stages[prof.microservice_id] = StageState(
                        microservice_id=prof.microservice_id, met=prof.met,
                        slack=prof.slack, batch=prof.batch_size,
                        response_budget=prof.response_budget,
                        cold_mid=ms.cold_start_mid)
                else:
                    st.slack = min(st.slack, prof.slack)
                    st.batch = min(st.batch, prof.batch_size)
                    st.response_budget = min(st.response_budget, prof.response_budget)
        # Per-stage average arrival rate over the trace, for offline sizing,
        # and each stage's share of total traffic, which maps stage-local
        # samples into the global scale the forecaster was trained on.
        counts = self.trace.chain_counts()
        n_total = max(1, len(self.trace.events))
        horizon_s = self.trace.horizon / 1000.0 if self.trace.horizon > 0 else 1.0
        for ms_id, st in stages.items():
            total = 0
            for cid, chain in self.chains.items():
                hits = sum(1 for s in chain.stages if s == ms_id)
                total += hits * counts.get(cid, 0)
            st.avg_rate = total / horizon_s
            st.traffic_share = total / n_total
        return stages

    def _provision_initial(self) -> None:
        for ms_id in self._stage_order:
            st = self.stages[ms_id]
            if self._preprovision_counts is not None:
                n = self._preprovision_counts.get(ms_id, 0)
            elif self.policy.fixed_pool:
                n = sbatch_count(st.avg_rate, st.response_budget, st.batch)
            elif self.cfg.initial_provision == "average":
                n = warm_start_count(st.avg_rate, st.met, st.batch)
            else:
                n = 0
            for _ in range(n):
                self._spawn(st, 0.0, warm=True, static=self.policy.fixed_pool)

    # -- event plumbing ---------------------------------------------------------

    def _push(self, time: float, kind: int, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, kind, self._seq, payload))

    def _note_live_change(self, now: float, delta: int) -> None:
        self._live_integral += self._live_count * (now - self._live_t)
        self._live_t = now
        self._live_count += delta

    # -- container operations ----------------------------------------------------

    def _spawn(self, st: StageState, now: float, warm: bool = False,
               static: bool = False) -> Optional[Container]:
        profile = self.catalog.profile(st.microservice_id)
        c = self.cluster.spawn_container(profile, st.batch, now, self.rng,
                                         warm=warm, static=static)
        if c is None:
            st.deferred_spawns += 1
            return None
        st.containers.append(c)
        st.spawned_total += 1
        self._note_live_change(now, +1)
        if not warm:
            st.cold_spawned += 1
            self._push(c.ready_at, CONTAINER_READY, c)
        return c

    def _start_exec(self, st: StageState, c: Container, req: Request, now: float) -> None:
        c.executing = True
        visit = req.visits[-1]
        visit.exec_start = now
        service = st.met
        if self.cfg.jitter_sigma > 0:
            service = max(MET_FLOOR_MS, service + self.rng.normal(0.0, self.cfg.jitter_sigma))
        self._push(now + service, EXEC_COMPLETE, (c, req))

    # -- queue operations --------------------------------------------------------

    def _queue_key(self, req: Request) -> float:
        if not self.policy.lsf:
            return self._now  # arrival order at the stage
        if self.cfg.lsf_mode == "static":
            return req.chain.total_slack
        # Decayed remaining slack: all queued requests lose slack at the same
        # wall-clock rate, so this static key preserves the dynamic ordering.
        return req.chain.total_slack + req.exec_done + req.arrival

    def _enqueue(self, req: Request, stage_idx: int, now: float) -> None:
        req.stage_idx = stage_idx
        req.spawn_triggered = False
        req.visits.append(StageVisit(enqueue=now))
        st = self.stages[req.chain.stages[stage_idx]]
        st.arrival_log.append(now)
        self._seq += 1
        heapq.heappush(st.queue, (self._queue_key(req), req.arrival, self._seq, req))
        self._dispatch(st, now)

    def _dispatch(self, st: StageState, now: float) -> None:
        """Drain the stage queue into containers until slots run out.

        One-to-one policies spawn for queued requests that cannot be placed,
        at most one spawn per request; anything else waits for the monitor.
        """
        while st.queue:
            c = select_container(st.containers)
            if c is None:
                if not self.policy.spawn_on_demand:
                    return
                # trigger on behalf of the least-slack request that has not
                # already caused a spawn this stage (pop order, not heap order)
                untriggered = [e for e in st.queue if not e[3].spawn_triggered]
                if not untriggered:
                    return
                pending = min(untriggered)[3]
                c = self._spawn(st, now)
                if c is None:
                    return  # capacity exhausted; retried at the next monitor tick
                st.reactive_spawns += 1
                pending.spawn_triggered = True
                continue
            _, _, _, req = heapq.heappop(st.queue)
            visit = req.visits[-1]
            visit.dispatch = now
            visit.container_id = c.id
            if c.ready_at > now:
                visit.cold_ready = c.ready_at
            st.dispatch_log.append((now, now - visit.enqueue))
            c.occupancy += 1
            if c.state is ContainerState.WARM and not c.executing:
                self._start_exec(st, c, req, now)
            else:
                c.local_queue.append(req)

    # -- event handlers -----------------------------------------------------------

    def _on_arrival(self, payload) -> None:
        req, stage_idx = payload
        self._enqueue(req, stage_idx, self._now)

    def _on_container_ready(self, c: Container) -> None:
        if not c.live:
            return
        c.state = ContainerState.WARM
        st = self.stages[c.microservice_id]
        if c.local_queue and not c.executing:
            req = c.local_queue.popleft()
            self._start_exec(st, c, req, self._now)
        self._dispatch(st, self._now)

    def _on_exec_complete(self, payload) -> None:
        c, req = payload
        now = self._now
        st = self.stages[c.microservice_id]
        visit = req.visits[-1]
        visit.exec_end = now
        req.exec_done += visit.exec_end - visit.exec_start
        c.executing = False
        c.occupancy -= 1
        c.last_used = now
        c.executions += 1
        st.executions += 1

        if req.stage_idx + 1 >= req.chain.n_stages:
            req.completion = now
            self.completed.append(req)
            self.in_flight -= 1
        elif self.cfg.transition_delay > 0:
            self._push(now + self.cfg.transition_delay, ARRIVAL, (req, req.stage_idx + 1))
        else:
            self._enqueue(req, req.stage_idx + 1, now)

        if c.local_queue:
            nxt = c.local_queue.popleft()
            self._start_exec(st, c, nxt, now)
        self._dispatch(st, now)

    def _on_monitor_tick(self) -> None:
        now = self._now
        for ms_id in self._stage_order:
            st = self.stages[ms_id]
            self._trim_logs(st, now)
            if not self.policy.scales:
                continue
            # Proactive first: capacity being provisioned ahead of demand is
            # visible to the reactive threshold check below, which keeps the
            # two mechanisms from double-spawning for the same backlog.
            if self.policy.predictor is not None and st.traffic_share > 0:
                samples = sample_windows(st.arrival_log, now, self.policy.predictor)
                # Map stage-local rates into the trace-wide scale the model
                # saw during training, forecast, and map back.  Exactly the
                # identity for the scale-equivariant closed-form kinds.
                scaled = [s.max_rate / st.traffic_share for s in samples]
                fc = self.forecaster.forecast(scaled) * st.traffic_share
                demand = demand_slots(fc, st.response_budget)
                for _ in range(proactive_spawn_count(demand, st.capacity_slots(), st.batch)):
                    if self._spawn(st, now) is None:
                        break
                    st.proactive_spawns += 1
            if self.policy.reactive:
                delay = max((w for _, w in st.dispatch_log), default=0.0)
                live = st.live_containers()
                n = reactive_spawn_count(
                    pq_len=len(st.queue), response_budget=st.response_budget,
                    container_batch_sizes=[c.batch_size for c in live],
                    batch_size=st.batch, cold_start_mid=st.cold_mid,
                    delay=delay, slack=st.slack)
                for _ in range(n):
                    if self._spawn(st, now) is None:
                        break
                    st.reactive_spawns += 1
            # Fresh capacity (even cold) accepts queued work immediately;
            # one-to-one policies also retry spawns deferred by a full cluster.
            self._dispatch(st, now)
        self._timeseries.append((now, self._live_count))
        nxt = now + self.cfg.monitor_interval
        if nxt <= self.cfg.horizon or self.in_flight > 0:
            self._push(nxt, MONITOR_TICK)

    def _on_idle_sweep(self) -> None:
        now = self._now
        reaped = self.cluster.reap_idle(now, self.cfg.idle_timeout)
        if reaped:
            for _ in reaped:
                self._note_live_change(now, -1)
        self.cluster.power_down_idle_nodes(now)
        nxt = now + self.cfg.monitor_interval
        if nxt <= self.cfg.horizon or self.in_flight > 0:
            self._push(nxt, IDLE_SWEEP)

    def _trim_logs(self, st: StageState, now: float) -> None:
        cutoff = now - self.cfg.delay_window
        while st.dispatch_log and st.dispatch_log[0][0] <= cutoff:
            st.dispatch_log.popleft()
        # arrival log only needs the sampling history
        lo = bisect_left(st.arrival_log, now - 120_000.0)
        if lo > 1024:
            del st.arrival_log[:lo]

    # -- run ------------------------------------------------------------------------

    def run(self) -> RunStats:
        self._provision_initial()
        for rid, (t, cid) in enumerate(self.trace.events):
            req = Request(id=rid, chain=self.chains[cid], arrival=t)
            self._push(t, ARRIVAL, (req, 0))
        self.in_flight = len(self.trace.events)
        self._push(0.0, MONITOR_TICK)
        self._push(0.0, IDLE_SWEEP)
        self._push(self.cfg.horizon, TRACE_END)

        handlers = {
            EXEC_COMPLETE: self._on_exec_complete,
            CONTAINER_READY: self._on_container_ready,
            ARRIVAL: self._on_arrival,
        }
        while self._heap:
            t, kind, _, payload = heapq.heappop(self._heap)
            self._now = t
            if kind == MONITOR_TICK:
                self._on_monitor_tick()
            elif kind == IDLE_SWEEP:
                self._on_idle_sweep()
            elif kind == TRACE_END:
                continue
            else:
                handlers[kind](payload)

        end = max(self._now, self.cfg.horizon)
        self._note_live_change(end, 0)
        return RunStats(
            completed=self.completed,
            stages=self.stages,
            timeseries=self._timeseries,
            live_integral=self._live_integral,
            end_time=end,
            energy_joules=self.cluster.energy_joules(end),
            cold_start_count=self.cluster.cold_spawn_count,
            horizon=self.cfg.horizon,
            transition_delay=self.cfg.transition_delay,
        )
