"""Microservice catalog and application chains.

Execution-time estimates, end-to-end slack, per-stage slack distribution and
per-stage batch sizes are all derived here.  Everything is immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

MET_FLOOR_MS = 0.01
SLACK_SUM_TOL_MS = 0.01


class SlackPolicy(Enum):
    PROPORTIONAL = "proportional"
    EQUAL_DIVISION = "equal_division"


class SlackError(ValueError):
    """Raised when a chain's SLO leaves no positive waiting budget."""


@dataclass(frozen=True)
class MicroserviceProfile:
    """One serverless function: execution-time model plus resource demand."""

    id: str
    met_ref: float            # mean execution time (ms) at the reference input size
    met_slope: float = 0.0    # ms per input-size unit
    input_ref: float = 0.0
    cold_start_min: float = 2000.0
    cold_start_max: float = 4000.0
    cpu_demand: float = 0.5   # fractional cores
    mem_demand: int = 1 << 30  # bytes

    def __post_init__(self) -> None:
        if self.met_ref <= 0:
            raise ValueError(f"microservice {self.id!r}: met_ref must be > 0")
        if self.cold_start_min > self.cold_start_max:
            raise ValueError(f"microservice {self.id!r}: cold_start_min > cold_start_max")
        if not 0 < self.cpu_demand <= 1:
            raise ValueError(f"microservice {self.id!r}: cpu_demand must be in (0, 1]")

    @property
    def cold_start_mid(self) -> float:
        return 0.5 * (self.cold_start_min + self.cold_start_max)


def estimate_met(profile: MicroserviceProfile, input_size: float | None = None,
                 met_floor: float = MET_FLOOR_MS) -> float:
    """Linear execution-time model, clamped below at ``met_floor``.

    ``input_size=None`` means "reference input", which is what the default
    fixed-input experiments use.
    """
    if input_size is None:
        return max(profile.met_ref, met_floor)
    if input_size < 0:
        raise ValueError("input_size must be >= 0")
    met = profile.met_ref + profile.met_slope * (input_size - profile.input_ref)
    return max(met, met_floor)


def split_slack(total_slack: float, mets: list[float], policy: SlackPolicy) -> list[float]:
    """Distribute a chain's total slack over its stages.

    Proportional weighting follows each stage's share of the summed execution
    time; equal division splits evenly.  Either way the parts sum back to the
    total (up to float rounding).
    """
    if total_slack <= 0:
        raise SlackError(f"total slack {total_slack:.2f} ms is not positive; SLO infeasible")
    if not mets:
        raise ValueError("chain has no stages")
    if policy is SlackPolicy.EQUAL_DIVISION:
        return [total_slack / len(mets)] * len(mets)
    met_sum = sum(mets)
    return [total_slack * met / met_sum for met in mets]


def batch_size(stage_slack: float, met: float) -> int:
    """Maximum commitments a stage container may hold: floor(slack/MET), min 1."""
    if met <= 0:
        raise ValueError("met must be > 0")
    if stage_slack < 0:
        raise ValueError("stage_slack must be >= 0")
    return max(1, math.floor(stage_slack / met))


@dataclass(frozen=True)
class StageRuntimeProfile:
    """Resolved numbers one chain stage runs with under a given slack policy."""

    chain_id: str
    stage_index: int
    microservice_id: str
    met: float
    slack: float
    batch_size: int

    @property
    def response_budget(self) -> float:
        """Per-stage response latency budget: allocated slack plus execution time."""
        return self.slack + self.met


@dataclass(frozen=True)
class AppChain:
    """An ordered pipeline of microservices with an end-to-end latency target."""

    id: str
    stages: tuple[str, ...]
    slo: float
    overhead_margin: float
    mets: tuple[float, ...]
    total_slack: float
    stage_slack: tuple[float, ...]
    stage_batch_size: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError(f"chain {self.id!r} has no stages")
        if self.total_slack <= 0:
            raise SlackError(
                f"chain {self.id!r}: slack {self.total_slack:.2f} ms is not positive "
                f"(slo={self.slo}, mets={sum(self.mets):.2f}, margin={self.overhead_margin})")
        if abs(sum(self.stage_slack) - self.total_slack) > SLACK_SUM_TOL_MS:
            raise ValueError(f"chain {self.id!r}: stage slacks do not sum to total slack")

    @property
    def n_stages(self) -> int:
        return len(self.stages)


def build_chain(chain_id: str, stage_ids: list[str], catalog: dict[str, MicroserviceProfile],
                slo: float, overhead_margin: float,
                policy: SlackPolicy = SlackPolicy.PROPORTIONAL,
                total_slack_override: float | None = None) -> AppChain:
    """Resolve a chain definition against the catalog.

    Total slack defaults to SLO minus summed stage METs minus the overhead
    margin; an explicit override lets configs pin reported slack values
    directly.
    """
    missing = [s for s in stage_ids if s not in catalog]
    if missing:
        raise KeyError(f"chain {chain_id!r} references unknown microservice(s): {missing}")
    mets = [estimate_met(catalog[s]) for s in stage_ids]
    if total_slack_override is not None:
        total = total_slack_override
    else:
        total = slo - sum(mets) - overhead_margin
    if total <= 0:
        raise SlackError(f"chain {chain_id!r}: slack {total:.2f} ms is not positive")
    stage_slack = split_slack(total, mets, policy)
    batches = [batch_size(sl, met) for sl, met in zip(stage_slack, mets)]
    return AppChain(
        id=chain_id,
        stages=tuple(stage_ids),
        slo=slo,
        overhead_margin=overhead_margin,
        mets=tuple(mets),
        total_slack=total,
        stage_slack=tuple(stage_slack),
        stage_batch_size=tuple(batches),
    )


def allocate_slack(chain: AppChain, policy: SlackPolicy) -> list[float]:
    """Re-distribute an existing chain's total slack under the given policy."""
    return split_slack(chain.total_slack, list(chain.mets), policy)


def stage_runtime_profiles(chain: AppChain, policy: SlackPolicy,
                           force_batch_one: bool = False) -> list[StageRuntimeProfile]:
    """Per-stage runtime numbers for a chain under a slack policy.

    ``force_batch_one`` models non-batching resource managers: slack is still
    allocated (the response budget and least-slack ordering need it) but every
    container holds a single request.
    """
    slacks = allocate_slack(chain, policy)
    profiles = []
    for i, (ms_id, met, slack) in enumerate(zip(chain.stages, chain.mets, slacks)):
        b = 1 if force_batch_one else batch_size(slack, met)
        profiles.append(StageRuntimeProfile(
            chain_id=chain.id, stage_index=i, microservice_id=ms_id,
            met=met, slack=slack, batch_size=b))
    return profiles


@dataclass(frozen=True)
class Catalog:
    """Validated bundle of microservices and the chains built over them."""

    microservices: dict[str, MicroserviceProfile]
    chains: dict[str, AppChain] = field(default_factory=dict)

    def chain(self, chain_id: str) -> AppChain:
        try:
            return self.chains[chain_id]
        except KeyError:
            raise KeyError(f"unknown chain {chain_id!r}") from None

    def profile(self, ms_id: str) -> MicroserviceProfile:
        return self.microservices[ms_id]
