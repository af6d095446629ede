"""Baseline access policies: slotted ALOHA and RACH with uniform backoff.

Every policy exposes ``act(observation, rng) -> RaAction`` and
``notify(outcome)``, where ``outcome`` is the UT's own
``(collided, accessed)`` pair. Learned eRACH policies implement the same
surface (see :mod:`erach.marl`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .access import BACKOFF, RaAction, SlotTiming, resolve_slot

PROTOCOLS = ("aloha", "rach", "erach", "erach-coop")


class Policy(Protocol):
    def act(self, observation, rng: np.random.Generator) -> RaAction: ...

    def notify(self, collided: bool, accessed: bool) -> None: ...


def aloha_act(rng: np.random.Generator, num_planes: int) -> RaAction:
    """Uniform plane, no preamble resource split (every UT uses preamble 1)."""
    return RaAction(int(rng.integers(1, num_planes + 1)), 1)


@dataclass
class RachAgentState:
    window: int = 10
    backoff_remaining: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("backoff window must be >= 1")
        if not 0 <= self.backoff_remaining <= self.window:
            raise ValueError("backoff_remaining must lie in [0, window]")


def rach_act(state: RachAgentState, rng: np.random.Generator, num_planes: int, num_preambles: int) -> RaAction:
    if state.backoff_remaining > 0:
        state.backoff_remaining -= 1
        return RaAction(BACKOFF)
    plane = int(rng.integers(1, num_planes + 1))
    return RaAction(plane, int(rng.integers(1, num_preambles + 1)))


def rach_notify(state: RachAgentState, collided: bool, rng: np.random.Generator) -> RachAgentState:
    """After a collision wait DU(1, W) opportunities; otherwise keep counting down."""
    if collided:
        state.backoff_remaining = int(rng.integers(1, state.window + 1))
    return state


class AlohaAgent:
    def __init__(self, num_planes: int):
        self.num_planes = num_planes

    def act(self, observation, rng):
        return aloha_act(rng, self.num_planes)

    def notify(self, collided, accessed):
        pass


class RachAgent:
    def __init__(self, num_planes: int, num_preambles: int, window: int, rng: np.random.Generator):
        self.num_planes = num_planes
        self.num_preambles = num_preambles
        self.state = RachAgentState(window=window)
        # backoff draws come from the agent's own stream
        self._rng = rng

    def act(self, observation, rng):
        return rach_act(self.state, rng, self.num_planes, self.num_preambles)

    def notify(self, collided, accessed):
        rach_notify(self.state, collided, self._rng)


def make_baseline(protocol: str, index: int, num_planes: int, num_preambles: int, window: int, rng):
    if protocol == "aloha":
        return AlohaAgent(num_planes)
    if protocol == "rach":
        return RachAgent(num_planes, num_preambles, window, rng)
    raise ValueError(f"{protocol!r} is not a baseline protocol")


def simulate_aloha_collisions(num_uts: int, num_planes: int, num_slots: int, rng: np.random.Generator):
    """Vectorised slotted-ALOHA contention over many opportunities.

    Returns per-slot counts ``(collided, accessed)`` of shape (num_slots,).
    Channels are not simulated.
    """
    picks = rng.integers(1, num_planes + 1, size=(num_slots, num_uts))
    counts = np.zeros((num_slots, num_planes + 1), dtype=np.int64)
    np.add.at(counts, (np.arange(num_slots)[:, None], picks), 1)
    crowd = np.take_along_axis(counts, picks, axis=1)
    collided = (crowd > 1).sum(axis=1)
    return collided, num_uts - collided


def simulate_rach_collisions(num_uts, num_planes, num_preambles, window, num_slots, rng):
    """Slot-by-slot RACH contention (no channels); returns (attempts, collisions, successes) totals."""
    states = [RachAgentState(window=window) for _ in range(num_uts)]
    attempts = collisions = successes = 0
    for _ in range(num_slots):
        actions = [rach_act(s, rng, num_planes, num_preambles) for s in states]
        out = resolve_slot(actions, num_preambles=num_preambles)
        for s, c in zip(states, out.collided):
            rach_notify(s, bool(c), rng)
        attempts += int(out.attempts.sum())
        collisions += int(out.collided.sum())
        successes += int(out.accessed.sum())
    return attempts, collisions, successes
