"""RA opportunity resolution and the episode-level access metrics.

Plane choices use 0 for BACKOFF and 1..K for the orbital planes. Preambles are
1..P, with 0 meaning "no preamble" (backoff).
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import kernels

BACKOFF = 0


@dataclass(frozen=True)
class SlotTiming:
    signaling_duration: float = 0.010
    data_duration: float = 0.090
    subslot: float = 0.010
    # None derives round(T / (I * opportunity_duration))
    opportunities: int | None = None

    def __post_init__(self):
        if self.signaling_duration <= 0 or self.data_duration <= 0 or self.subslot <= 0:
            raise ValueError("durations must be positive")
        for name in ("signaling_duration", "data_duration"):
            ratio = getattr(self, name) / self.subslot
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"{name} must be a whole number of sub-slots")
        if self.opportunities is not None and self.opportunities < 1:
            raise ValueError("opportunities must be >= 1")

    @property
    def opportunity_duration(self) -> float:
        return self.signaling_duration + self.data_duration

    @property
    def signaling_slots(self) -> int:
        return round(self.signaling_duration / self.subslot)

    @property
    def data_slots(self) -> int:
        return round(self.data_duration / self.subslot)

    def opportunities_per_pass(self, period: float, sats_per_plane: int) -> int:
        if self.opportunities is not None:
            return self.opportunities
        return round(period / (sats_per_plane * self.opportunity_duration))


@dataclass(frozen=True)
class RaAction:
    choice: int
    preamble: int | None = None

    def __post_init__(self):
        if (self.choice == BACKOFF) != (self.preamble is None):
            raise ValueError("a preamble is required iff the action is not BACKOFF")

    @property
    def is_backoff(self) -> bool:
        return self.choice == BACKOFF


@dataclass
class SlotOutcome:
    choices: np.ndarray
    preambles: np.ndarray
    collided: np.ndarray
    accessed: np.ndarray
    throughput: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.throughput is None:
            self.throughput = np.zeros(len(self.choices))

    @property
    def attempts(self) -> np.ndarray:
        return self.choices != BACKOFF


def action_arrays(actions: Sequence[RaAction]) -> tuple[np.ndarray, np.ndarray]:
    choices = np.array([a.choice for a in actions], dtype=np.int64)
    preambles = np.array([0 if a.preamble is None else a.preamble for a in actions], dtype=np.int64)
    return choices, preambles


def resolve_slot(actions, preambles=None, num_preambles: int | None = None) -> SlotOutcome:
    """Resolve one opportunity.

    A UT collides iff another UT picked the same (plane, preamble) pair. Accepts
    either a sequence of :class:`RaAction` or parallel ``choices``/``preambles``
    integer arrays.
    """
    if preambles is None:
        choices, preambles = action_arrays(actions)
    else:
        choices = np.asarray(actions, dtype=np.int64)
        preambles = np.asarray(preambles, dtype=np.int64)
    if num_preambles is None:
        num_preambles = int(preambles.max(initial=0)) or 1
    collided = kernels.resolve_collisions(choices, preambles, num_preambles)
    accessed = (choices != BACKOFF) & ~collided
    return SlotOutcome(choices, preambles, collided, accessed)


@dataclass
class EpisodeMetrics:
    collision_rate: float | None
    access_delay: float | None
    network_throughput: float
    per_ut_throughput: np.ndarray
    jains_index: float | None
    resource_utilization: float
    attempt_collision_rate: float | None = None
    backoff_fraction: np.ndarray | None = None

    def row(self) -> dict:
        return {
            "throughput_bps": self.network_throughput,
            "collision_rate": self.collision_rate,
            "access_delay_s": self.access_delay,
            "jain": self.jains_index,
            "resource_util": self.resource_utilization,
        }


class MetricsAccumulator:
    """Streaming per-episode counters; one owner per simulation run."""

    def __init__(self, num_uts: int, num_planes: int, num_preambles: int, timing: SlotTiming):
        self.num_uts = num_uts
        self.capacity = num_planes * num_preambles
        self.timing = timing
        self.opportunities = 0
        self.attempts = 0
        self.collisions = 0
        self.successes = np.zeros(num_uts, dtype=np.int64)
        self.backoffs = np.zeros(num_uts, dtype=np.int64)
        self.bits = np.zeros(num_uts)
        self.utilization_sum = 0.0

    def add(self, outcome: SlotOutcome):
        self.opportunities += 1
        attempts = outcome.attempts
        self.attempts += int(attempts.sum())
        self.collisions += int(outcome.collided.sum())
        self.successes += outcome.accessed
        self.backoffs += ~attempts
        self.bits += outcome.throughput
        self.utilization_sum += min(int(outcome.accessed.sum()), self.capacity) / self.capacity

    def metrics(self) -> EpisodeMetrics:
        n, J = self.opportunities, self.num_uts
        n_a = self.successes.sum() / J
        per_ut = self.bits / (n * self.timing.opportunity_duration)
        return EpisodeMetrics(
            collision_rate=self.collisions / (J * n) if n else None,
            access_delay=access_delay(n, n_a, self.timing) if n else None,
            network_throughput=float(per_ut.sum()),
            per_ut_throughput=per_ut,
            jains_index=jains_fairness(per_ut),
            resource_utilization=self.utilization_sum / n if n else 0.0,
            attempt_collision_rate=self.collisions / self.attempts if self.attempts else None,
            backoff_fraction=self.backoffs / n if n else None,
        )


def collision_rate(outcomes: Sequence[SlotOutcome], per: str = "opportunity") -> float | None:
    """Collisions normalised per UT-opportunity (default) or per access attempt.

    Returns None when the denominator is zero.
    """
    collisions = sum(int(o.collided.sum()) for o in outcomes)
    if per == "opportunity":
        denom = sum(len(o.choices) for o in outcomes)
    elif per == "attempt":
        denom = sum(int(o.attempts.sum()) for o in outcomes)
    else:
        raise ValueError(f"unknown normalisation {per!r}")
    return collisions / denom if denom else None


def access_delay(num_opportunities: float, mean_accesses: float, timing: SlotTiming) -> float | None:
    """Average access delay in seconds from the mean successful accesses per UT.

    Each failed opportunity costs a whole opportunity; the final success costs
    its signaling phase.
    """
    if mean_accesses <= 0:
        return None
    failed_per_success = (num_opportunities - mean_accesses) / mean_accesses
    return float(failed_per_success * timing.opportunity_duration + timing.signaling_duration)


def network_throughput(outcomes: Sequence[SlotOutcome], timing: SlotTiming) -> tuple[float, np.ndarray]:
    """Time-average network throughput (bit/s) and per-UT throughputs."""
    if not outcomes:
        raise ValueError("need at least one opportunity")
    per_ut = np.sum([o.throughput for o in outcomes], axis=0) / (len(outcomes) * timing.opportunity_duration)
    return float(per_ut.sum()), per_ut


def jains_fairness(x) -> float | None:
    x = np.asarray(x, dtype=float)
    if x.size == 0 or np.any(x < 0):
        raise ValueError("throughputs must be a non-empty non-negative vector")
    sq = float(np.sum(x * x))
    if sq == 0.0:
        return None
    return float(np.sum(x)) ** 2 / (x.size * sq)


def resource_utilization(outcomes: Sequence[SlotOutcome], num_planes: int, num_preambles: int) -> float:
    capacity = num_planes * num_preambles
    if capacity < 1:
        raise ValueError("need at least one (plane, preamble) resource")
    if not outcomes:
        return 0.0
    return float(np.mean([int(o.accessed.sum()) / capacity for o in outcomes]))


def summarize(values) -> tuple[float, float]:
    """Mean and maximum absolute deviation from the mean."""
    v = np.asarray([x for x in values if x is not None and not (isinstance(x, float) and math.isnan(x))], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    m = float(v.mean())
    return m, float(np.max(np.abs(v - m)))
