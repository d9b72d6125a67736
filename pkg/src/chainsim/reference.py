"""Brute-force time-stepped reference simulator.

Validates the event engine on small instances: time advances on a fixed
0.01 ms grid held in integer centi-milliseconds, and every tick runs the same
scan -- finish executions, promote ready containers, take arrivals, drain
queues, start work.  No event calendar, no heap; agreement with the engine on
completion times and spawn counts is therefore meaningful evidence.

Instances are kept to a few requests, at most two stages, uniform batch size
and execution time within a stage, and distinct arrival times, so that
same-instant processing-order permutations cannot change completion times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TICK_MS = 0.01  # one grid step


@dataclass(frozen=True)
class MicroInstance:
    """One randomized scenario shared by the reference and the event engine."""

    chains: dict[str, tuple[tuple[str, int], ...]]  # chain -> ((ms_id, met_cms), ...)
    chain_slack_cms: dict[str, int]
    arrivals: tuple[tuple[int, str], ...]           # (t_cms, chain_id), distinct times
    warm_containers: dict[str, int]                 # ms_id -> warm containers at t=0
    batch: dict[str, int]                           # ms_id -> per-container batch size
    cold_cms: dict[str, int]                        # fixed cold-start per microservice
    spawn_on_demand: bool                           # one-to-one reactive spawning


@dataclass
class _Cont:
    id: int
    ms: str
    batch: int
    ready: int           # cms; 0 for pre-warmed
    occupancy: int = 0
    exec_req: int = -1   # request id currently executing, -1 if idle
    finish: int = -1
    local: list[int] = field(default_factory=list)


@dataclass
class _Req:
    id: int
    chain: str
    arrival: int
    stage: int = 0
    exec_done: int = 0
    enqueued: bool = False
    spawn_triggered: bool = False
    completion: int = -1


def run_reference(inst: MicroInstance) -> tuple[dict[int, int], int]:
    """Returns ({request_id: completion_cms}, total containers spawned)."""
    reqs = [_Req(id=i, chain=cid, arrival=t) for i, (t, cid) in enumerate(inst.arrivals)]
    conts: list[_Cont] = []
    next_cid = 1
    for ms in sorted(inst.warm_containers):
        for _ in range(inst.warm_containers[ms]):
            conts.append(_Cont(id=next_cid, ms=ms, batch=inst.batch[ms], ready=0))
            next_cid += 1
    spawned = 0
    queues: dict[str, list[int]] = {}

    def key(r: _Req) -> tuple:
        # least remaining slack first; arrival times are distinct so no ties
        return (inst.chain_slack_cms[r.chain] + r.exec_done + r.arrival, r.arrival, r.id)

    def stage_ms(r: _Req) -> str:
        return inst.chains[r.chain][r.stage][0]

    def stage_met(r: _Req) -> int:
        return inst.chains[r.chain][r.stage][1]

    pending_arrivals = sorted(reqs, key=lambda r: r.arrival)
    arrive_i = 0
    done = 0
    # Generous bound: all work serialized end to end plus every cold start.
    bound = (max((t for t, _ in inst.arrivals), default=0)
             + sum(met for ch in inst.chains.values() for _, met in ch) * (len(reqs) + 1)
             + sum(inst.cold_cms.values()) * (len(reqs) + 1) * 2 + 1000)

    t = 0
    while done < len(reqs):
        if t > bound:
            raise RuntimeError("reference simulator exceeded its time bound")

        # 1. finish executions
        for c in conts:
            if c.exec_req >= 0 and c.finish == t:
                r = reqs[c.exec_req]
                r.exec_done += stage_met(r)
                c.exec_req = -1
                c.finish = -1
                c.occupancy -= 1
                if r.stage + 1 >= len(inst.chains[r.chain]):
                    r.completion = t
                    done += 1
                else:
                    r.stage += 1
                    r.spawn_triggered = False
                    queues.setdefault(stage_ms(r), []).append(r.id)

        # 2. cold containers come online
        #    (nothing to flip; readiness is checked below as ready <= t)

        # 3. arrivals
        while arrive_i < len(pending_arrivals) and pending_arrivals[arrive_i].arrival == t:
            r = pending_arrivals[arrive_i]
            queues.setdefault(stage_ms(r), []).append(r.id)
            arrive_i += 1

        # 4. drain queues: least slack first into the fullest non-full container
        for ms in sorted(queues):
            q = queues[ms]
            while q:
                q.sort(key=lambda rid: key(reqs[rid]))
                candidates = [c for c in conts if c.ms == ms and c.batch - c.occupancy > 0]
                if candidates:
                    c = min(candidates, key=lambda c: (c.batch - c.occupancy, c.id))
                elif inst.spawn_on_demand:
                    trigger = next((rid for rid in q if not reqs[rid].spawn_triggered), None)
                    if trigger is None:
                        break
                    c = _Cont(id=next_cid, ms=ms, batch=inst.batch[ms],
                              ready=t + inst.cold_cms[ms])
                    next_cid += 1
                    conts.append(c)
                    spawned += 1
                    reqs[trigger].spawn_triggered = True
                    continue
                else:
                    break
                rid = q.pop(0)
                c.occupancy += 1
                c.local.append(rid)

        # 5. start service wherever a ready container sits idle with queued work
        for c in conts:
            if c.exec_req < 0 and c.local and c.ready <= t:
                rid = c.local.pop(0)
                c.exec_req = rid
                c.finish = t + stage_met(reqs[rid])

        # jump to the next instant anything can happen (pure optimization:
        # skipped ticks repeat the identical no-op scan)
        nxt = []
        if arrive_i < len(pending_arrivals):
            nxt.append(pending_arrivals[arrive_i].arrival)
        for c in conts:
            if c.exec_req >= 0:
                nxt.append(c.finish)
            elif c.local and c.ready > t:
                nxt.append(c.ready)
        t = min(x for x in nxt if x > t) if any(x > t for x in nxt) else t + 1

    return {r.id: r.completion for r in reqs}, spawned


# ---------------------------------------------------------------------------
# randomized instances and the engine-side adapter


def random_instance(rng: np.random.Generator) -> MicroInstance:
    n_chains = int(rng.integers(1, 3))
    micro_pool = [f"m{k}" for k in range(4)]
    chains: dict[str, tuple[tuple[str, int], ...]] = {}
    slack: dict[str, int] = {}
    batch: dict[str, int] = {}
    used: list[str] = []
    spawn_on_demand = bool(rng.integers(0, 2))
    # one-to-one mode pins batch size 1, matching the non-batching policy
    b = 1 if spawn_on_demand else int(rng.integers(1, 4))
    met_of = {ms: int(rng.integers(500, 3000)) for ms in micro_pool}  # 5-30 ms
    for k in range(n_chains):
        n_stages = int(rng.integers(1, 3))
        stage_ids = list(rng.choice(micro_pool, size=n_stages, replace=False))
        mets = [met_of[ms] for ms in stage_ids]
        chains[f"c{k}"] = tuple(zip(stage_ids, mets))
        # slack chosen so floor(slack_i / met_i) == b for proportional split
        slack[f"c{k}"] = int(sum(mets) * b + sum(mets) // 2)
        used.extend(stage_ids)
    for ms in micro_pool:
        batch[ms] = b
    arrivals_n = int(rng.integers(1, 21))
    times = sorted(rng.choice(np.arange(0, 20000, 7), size=arrivals_n, replace=False))
    chain_ids = list(chains)
    arrivals = tuple((int(t), chain_ids[int(rng.integers(0, len(chain_ids)))]) for t in times)
    warm = {}
    for ms in sorted(set(used)):
        lo = 0 if spawn_on_demand else 1
        warm[ms] = int(rng.integers(lo, 4))
    cold = {ms: int(rng.integers(5000, 20000)) for ms in sorted(set(used))}  # 50-200 ms
    return MicroInstance(chains=chains, chain_slack_cms=slack, arrivals=arrivals,
                         warm_containers=warm, batch=batch, cold_cms=cold,
                         spawn_on_demand=spawn_on_demand)


def run_engine_on_instance(inst: MicroInstance) -> tuple[dict[int, float], int]:
    """Run the event engine on the same scenario; times come back in ms."""
    from .cluster import Cluster, make_nodes
    from .domain import Catalog, MicroserviceProfile, build_chain
    from .engine import Engine, EngineConfig
    from .policies import PolicyKind, assemble
    from .workload import ArrivalTrace

    micro = {}
    for ms in sorted({s for ch in inst.chains.values() for s, _ in ch}):
        met = next(m for ch in inst.chains.values() for s, m in ch if s == ms)
        cold = inst.cold_cms[ms]
        micro[ms] = MicroserviceProfile(
            id=ms, met_ref=met / 100.0,
            cold_start_min=cold / 100.0, cold_start_max=cold / 100.0,
            cpu_demand=0.5, mem_demand=1)
    catalog_chains = {}
    for cid, stages in inst.chains.items():
        catalog_chains[cid] = build_chain(
            cid, [s for s, _ in stages], micro, slo=10_000.0, overhead_margin=0.0,
            total_slack_override=inst.chain_slack_cms[cid] / 100.0)
    catalog = Catalog(microservices=micro, chains=catalog_chains)

    if inst.spawn_on_demand:
        policy = assemble(PolicyKind.BLINE)
    else:
        policy = assemble(PolicyKind.RSCALE)
    # Instances with uneven per-stage batches are not generated; the engine's
    # derived batch must equal the instance's.
    trace = ArrivalTrace(
        events=tuple((t / 100.0, cid) for t, cid in inst.arrivals),
        horizon=max(t for t, _ in inst.arrivals) / 100.0 + 1.0, source="replay")
    cluster = Cluster(make_nodes(4, 16.0, 1 << 40, 100.0, 5.0))
    cfg = EngineConfig(horizon=trace.horizon, initial_provision="none")
    eng = Engine(catalog, list(catalog_chains), trace, policy, cluster, cfg, seed=0,
                 preprovision_counts=dict(inst.warm_containers))
    for ms, st in eng.stages.items():
        if st.batch != inst.batch[ms]:
            raise AssertionError(f"derived batch {st.batch} != instance batch {inst.batch[ms]} for {ms}")
    stats = eng.run()
    completions = {r.id: r.completion for r in stats.completed}
    spawned = sum(st.cold_spawned for st in stats.stages.values())
    return completions, spawned


def compare_on_instances(n_instances: int = 50, seed: int = 2024,
                         tol_ms: float = TICK_MS) -> list[str]:
    """Run both simulators on randomized instances; returns mismatch messages."""
    rng = np.random.default_rng(seed)
    problems = []
    for k in range(n_instances):
        inst = random_instance(rng)
        ref_completions, ref_spawned = run_reference(inst)
        eng_completions, eng_spawned = run_engine_on_instance(inst)
        if ref_spawned != eng_spawned:
            problems.append(f"instance {k}: spawn count {eng_spawned} != reference {ref_spawned}")
            continue
        for rid, cms in ref_completions.items():
            diff = abs(eng_completions[rid] - cms / 100.0)
            if diff > tol_ms + 1e-9:
                problems.append(f"instance {k}: request {rid} completion differs by {diff:.5f} ms")
                break
    return problems
