"""Containers, nodes, greedy placement, idle reaping, and energy accounting.

Cluster state is owned by the simulation engine and mutated only through
engine events; nothing here is thread-safe and nothing needs to be.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .domain import MicroserviceProfile


class ContainerState(Enum):
    COLD_STARTING = "cold_starting"
    WARM = "warm"
    REAPED = "reaped"


IDLE_TIMEOUT_MS = 600_000.0   # idle containers are removed after 10 minutes
NODE_OFF_DELAY_MS = 60_000.0  # fully idle nodes power down after a minute


@dataclass
class Container:
    id: int
    microservice_id: str
    batch_size: int
    node_id: int
    state: ContainerState
    ready_at: float           # when a cold container can begin service
    spawned_at: float
    last_used: float
    cpu_demand: float
    mem_demand: int
    static: bool = False      # fixed-pool containers are never reaped
    occupancy: int = 0        # queued commitments + the executing request
    executing: bool = False
    local_queue: deque = field(default_factory=deque)
    executions: int = 0

    @property
    def free_slots(self) -> int:
        return self.batch_size - self.occupancy

    @property
    def live(self) -> bool:
        return self.state is not ContainerState.REAPED


@dataclass
class Node:
    id: int
    total_cores: float
    mem_total: int
    power_idle: float      # watts drawn while powered, independent of load
    power_per_core: float  # watts per allocated core
    allocated_cores: float = 0.0
    mem_allocated: int = 0
    powered: bool = True
    zero_since: float = 0.0  # when allocation last dropped to zero

    @property
    def available_cores(self) -> float:
        return self.total_cores - self.allocated_cores

    def fits(self, cpu: float, mem: int) -> bool:
        return self.available_cores >= cpu - 1e-9 and self.mem_total - self.mem_allocated >= mem

    def power_watts(self) -> float:
        if not self.powered:
            return 0.0
        return self.power_idle + self.power_per_core * self.allocated_cores


def select_container(containers: list[Container]) -> Optional[Container]:
    """Greedy pick: the live container with the fewest free slots, but at least one.

    Ties break toward the lowest container id so placement is deterministic.
    Returns None when every container is full or reaped.
    """
    best = None
    for c in containers:
        if not c.live or c.free_slots <= 0:
            continue
        if best is None or (c.free_slots, c.id) < (best.free_slots, best.id):
            best = c
    return best


def select_node(nodes: list[Node], cpu: float, mem: int = 0) -> Optional[Node]:
    """Pick the node with the least available cores that still fits the demand.

    Powered-on nodes are preferred; a powered-off node is chosen only when no
    powered-on node fits.  Ties break toward the lowest node id.
    """
    if cpu <= 0:
        raise ValueError("demand must be > 0")
    best = None
    for powered_only in (True, False):
        for n in nodes:
            if n.powered is not powered_only:
                continue
            if not n.fits(cpu, mem):
                continue
            if best is None or (n.available_cores, n.id) < (best.available_cores, best.id):
                best = n
        if best is not None:
            return best
    return None


class Cluster:
    """A set of nodes hosting containers, with lazy exact energy integration."""

    def __init__(self, nodes: list[Node], idle_timeout: float = IDLE_TIMEOUT_MS,
                 node_off_delay: float = NODE_OFF_DELAY_MS):
        self.nodes = nodes
        self.idle_timeout = idle_timeout
        self.node_off_delay = node_off_delay
        self.containers: dict[int, Container] = {}
        self._next_id = 1
        self._energy_joules = 0.0
        self._energy_t = 0.0
        self.cold_spawn_count = 0

    # -- energy ------------------------------------------------------------

    def _checkpoint(self, now: float) -> None:
        """Integrate power draw up to `now` before any state change."""
        dt = now - self._energy_t
        if dt > 0:
            watts = sum(n.power_watts() for n in self.nodes)
            self._energy_joules += watts * dt / 1000.0
            self._energy_t = now

    def energy_joules(self, now: float) -> float:
        self._checkpoint(now)
        return self._energy_joules

    # -- lifecycle ----------------------------------------------------------

    def spawn_container(self, profile: MicroserviceProfile, batch_size: int, now: float,
                        rng: np.random.Generator, warm: bool = False,
                        static: bool = False) -> Optional[Container]:
        """Place and start a new container; None means capacity is exhausted.

        A cold spawn draws its start-up delay uniformly from the
        microservice's cold-start range.  Callers treat a None result as
        "defer and re-evaluate at the next monitor tick".
        """
        node = select_node(self.nodes, profile.cpu_demand, profile.mem_demand)
        if node is None:
            return None
        self._checkpoint(now)
        if not node.powered:
            node.powered = True
        node.allocated_cores += profile.cpu_demand
        node.mem_allocated += profile.mem_demand
        if warm:
            state, ready = ContainerState.WARM, now
        else:
            state = ContainerState.COLD_STARTING
            ready = now + rng.uniform(profile.cold_start_min, profile.cold_start_max)
            self.cold_spawn_count += 1
        c = Container(
            id=self._next_id, microservice_id=profile.id, batch_size=batch_size,
            node_id=node.id, state=state, ready_at=ready, spawned_at=now,
            last_used=now, cpu_demand=profile.cpu_demand, mem_demand=profile.mem_demand,
            static=static)
        self._next_id += 1
        self.containers[c.id] = c
        return c

    def _release(self, c: Container, now: float) -> None:
        self._checkpoint(now)
        node = self.nodes[c.node_id - 1]
        node.allocated_cores -= c.cpu_demand
        node.mem_allocated -= c.mem_demand
        if node.allocated_cores < 1e-9:
            node.allocated_cores = 0.0
            node.zero_since = now

    def reap_idle(self, now: float, timeout: float | None = None) -> list[int]:
        """Remove warm containers idle for at least the timeout; free their cores."""
        timeout = self.idle_timeout if timeout is None else timeout
        reaped = []
        for c in self.containers.values():
            if c.static or c.state is not ContainerState.WARM:
                continue
            if c.occupancy == 0 and now - c.last_used >= timeout:
                c.state = ContainerState.REAPED
                self._release(c, now)
                reaped.append(c.id)
        return reaped

    def power_down_idle_nodes(self, now: float) -> list[int]:
        """Power off nodes that have held zero allocation for node_off_delay."""
        out = []
        for n in self.nodes:
            if n.powered and n.allocated_cores == 0.0 and now - n.zero_since >= self.node_off_delay:
                self._checkpoint(now)
                n.powered = False
                out.append(n.id)
        return out

    # -- views --------------------------------------------------------------

    def live_count(self) -> int:
        return sum(1 for c in self.containers.values() if c.live)

    def allocation_balanced(self) -> bool:
        """Conservation check: node allocations equal the live containers' demand."""
        per_node: dict[int, float] = {n.id: 0.0 for n in self.nodes}
        for c in self.containers.values():
            if c.live:
                per_node[c.node_id] += c.cpu_demand
        return all(abs(per_node[n.id] - n.allocated_cores) < 1e-6 for n in self.nodes)


def energy_step(nodes: list[Node], interval: float) -> float:
    """Joules consumed over an interval (ms) at the nodes' current draw."""
    if interval <= 0:
        raise ValueError("interval must be > 0")
    return sum(n.power_watts() for n in nodes) * interval / 1000.0


def make_nodes(count: int, cores_per_node: float, mem_per_node: int,
               power_idle: float, power_per_core: float) -> list[Node]:
    return [Node(id=i + 1, total_cores=cores_per_node, mem_total=mem_per_node,
                 power_idle=power_idle, power_per_core=power_per_core)
            for i in range(count)]
