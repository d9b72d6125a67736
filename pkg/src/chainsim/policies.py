"""The five resource-management strategies and their scaling arithmetic.

A policy is a static recipe: how slack turns into batch sizes, whether
containers are spawned per unplaceable request (one-to-one), on queuing-delay
thresholds (reactive), ahead of forecast load (proactive), or never after the
initial fixed pool.  The engine drives these decisions; everything here is a
pure function so the arithmetic is directly testable.

Units note: the proactive rule compares a forecast (req/s) against container
slot capacity.  Those are different dimensions, so the forecast is converted
to expected concurrent requests via Little's law -- demand_slots =
forecast_rate * per-stage response budget -- before the comparison.  This
interpretation is deliberate and documented in the README.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .domain import SlackPolicy
from .predictors import ForecasterConfig

log = logging.getLogger(__name__)

MONITOR_INTERVAL_MS = 10_000.0
DELAY_WINDOW_MS = 10_000.0  # reactive scaling inspects requests scheduled in the last 10 s


class PolicyKind(str, Enum):
    BLINE = "bline"
    SBATCH = "sbatch"
    RSCALE = "rscale"
    BPRED = "bpred"
    FIFER = "fifer"


@dataclass(frozen=True)
class Policy:
    """Composed behavior flags for one resource manager."""

    kind: PolicyKind
    slack_policy: SlackPolicy
    batch_one: bool            # force batch size 1 at every stage
    spawn_on_demand: bool      # one container per request that cannot be placed
    reactive: bool             # delay-threshold scaling at monitor ticks
    predictor: Optional[ForecasterConfig]  # proactive scaling when set
    lsf: bool                  # least-slack-first dispatch (else arrival order)
    fixed_pool: bool           # container count frozen at the initial provision

    @property
    def scales(self) -> bool:
        return not self.fixed_pool


def assemble(kind: PolicyKind | str, predictor: ForecasterConfig | None = None) -> Policy:
    """Build one of the five named policies.

    ``predictor`` overrides the forecaster for the predictive policies, which
    is allowed for ablation; a non-standard pairing logs a warning.
    """
    kind = PolicyKind(kind)
    if kind is PolicyKind.BLINE:
        return Policy(kind, SlackPolicy.PROPORTIONAL, batch_one=True, spawn_on_demand=True,
                      reactive=False, predictor=None, lsf=False, fixed_pool=False)
    if kind is PolicyKind.SBATCH:
        return Policy(kind, SlackPolicy.EQUAL_DIVISION, batch_one=False, spawn_on_demand=False,
                      reactive=False, predictor=None, lsf=False, fixed_pool=True)
    if kind is PolicyKind.RSCALE:
        return Policy(kind, SlackPolicy.PROPORTIONAL, batch_one=False, spawn_on_demand=False,
                      reactive=True, predictor=None, lsf=True, fixed_pool=False)
    if kind is PolicyKind.BPRED:
        cfg = predictor or ForecasterConfig(kind="ewma")
        if cfg.kind != "ewma":
            log.warning("bpred normally pairs with the ewma forecaster, got %r", cfg.kind)
        return Policy(kind, SlackPolicy.PROPORTIONAL, batch_one=True, spawn_on_demand=False,
                      reactive=False, predictor=cfg, lsf=True, fixed_pool=False)
    if kind is PolicyKind.FIFER:
        cfg = predictor or ForecasterConfig(kind="lstm")
        return Policy(kind, SlackPolicy.PROPORTIONAL, batch_one=False, spawn_on_demand=False,
                      reactive=True, predictor=cfg, lsf=True, fixed_pool=False)
    raise ValueError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# scaling arithmetic


def reactive_spawn_count(pq_len: int, response_budget: float,
                         container_batch_sizes: Sequence[int], batch_size: int,
                         cold_start_mid: float, delay: float, slack: float) -> int:
    """Delay-threshold reactive sizing for one stage at a monitor tick.

    With no containers yet and work pending, the queuing-delay threshold is
    treated as infinite and at least one container is always started.
    Otherwise nothing happens unless the worst queue wait observed among
    recently scheduled requests has reached the stage's slack; then the
    stage spawns ceil(pending / batch) containers only when the estimated
    drain time per capacity slot exceeds the expected cold-start cost.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    capacity = sum(container_batch_sizes)
    if capacity == 0:
        if pq_len <= 0:
            return 0
        return max(1, math.ceil(pq_len / batch_size))
    if delay < slack:
        return 0
    drain_ms = pq_len * response_budget / capacity
    if drain_ms > cold_start_mid:
        return math.ceil(pq_len / batch_size)
    return 0


def demand_slots(forecast_rate: float, response_budget: float) -> float:
    """Forecast req/s -> expected concurrent requests (Little's law)."""
    if forecast_rate < 0:
        raise ValueError("forecast must be >= 0")
    return forecast_rate * response_budget / 1000.0


def proactive_spawn_count(demand: float, capacity_slots: float, batch_size: int) -> int:
    """Containers to add so slot capacity covers forecast concurrency."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if demand <= capacity_slots:
        return 0
    return math.ceil((demand - capacity_slots) / batch_size)


def sbatch_count(avg_rate: float, response_budget: float, batch_size: int) -> int:
    """Offline fixed-pool sizing from the trace's average arrival rate."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if avg_rate <= 0:
        return 1
    return max(1, math.ceil(demand_slots(avg_rate, response_budget) / batch_size))


def warm_start_count(avg_rate: float, met: float, batch_size: int) -> int:
    """Initial per-stage pool for the scaling policies.

    Sized from execution occupancy (rate x MET) plus one headroom container,
    so runs begin from the modest steady pool a continuously operating
    cluster would hold rather than from an empty cluster whose one-time
    cold-boot burst would swamp every container metric at short horizons.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    busy = avg_rate * met / 1000.0
    return math.ceil(busy / batch_size) + 1
