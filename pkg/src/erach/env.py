"""Multi-UT random-access environment stepped once per RA opportunity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel, constellation
from .access import MetricsAccumulator, SlotOutcome, SlotTiming, resolve_slot
from .channel import LinkBudget
from .constellation import ConstellationConfig
from .seeding import children


@dataclass(frozen=True)
class Scenario:
    constellation: ConstellationConfig
    link: LinkBudget
    timing: SlotTiming
    ut_positions: np.ndarray
    num_preambles: int = 2

    def __post_init__(self):
        if self.num_preambles < 1:
            raise ValueError("num_preambles must be >= 1")
        if self.ut_positions.ndim != 2 or self.ut_positions.shape[1] != 3 or len(self.ut_positions) < 1:
            raise ValueError("ut_positions must be a non-empty (J, 3) array")

    @property
    def num_uts(self) -> int:
        return len(self.ut_positions)

    @property
    def num_planes(self) -> int:
        return self.constellation.num_planes

    @property
    def opportunities(self) -> int:
        return self.timing.opportunities_per_pass(self.constellation.period, self.constellation.sats_per_plane)


class RandomAccessEnv:
    """Replays the same orbital pass every episode.

    Randomness is split into independent streams: ``channel`` (LoS uniforms and
    fading, drawn for every UT every opportunity whether or not it transmits)
    and ``position`` (satellite position error). Policies never touch them, so
    two protocols run with the same seed see the same channel tape.
    """

    def __init__(self, scenario: Scenario, seed: np.random.SeedSequence | int):
        self.scenario = scenario
        channel_ss, position_ss = children(seed, 2)
        self.channel_rng = np.random.default_rng(channel_ss)
        self.position_rng = np.random.default_rng(position_ss)
        cfg = scenario.constellation
        self.N = scenario.opportunities
        self.dt = scenario.timing.opportunity_duration
        # expected (noiseless) nearest-satellite positions, (N, K, 3)
        self.expected_positions = constellation.nearest_positions(cfg, np.arange(self.N), self.dt)
        self._subslots = scenario.timing.data_slots if scenario.link.per_subslot_draws else 1
        self.n = 0

    def reset(self) -> int:
        self.n = 0
        return self.n

    @property
    def done(self) -> bool:
        return self.n >= self.N

    def actual_positions(self) -> np.ndarray:
        cfg = self.scenario.constellation
        return constellation.perturb(cfg, self.expected_positions[self.n], self.position_rng)

    def step(self, choices, preambles) -> SlotOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        sc = self.scenario
        J = sc.num_uts
        choices = np.asarray(choices, dtype=np.int64)
        outcome = resolve_slot(choices, preambles, sc.num_preambles)
        sats = self.actual_positions()
        u_los = self.channel_rng.random(J)
        fading = channel.fading_power(sc.link, self.channel_rng, (J, self._subslots))
        plane = np.maximum(choices, 1) - 1
        diff = sats[plane] - sc.ut_positions
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        theta = np.degrees(np.arcsin(diff[:, 2] / dist))
        _, gains = channel.gains_from_uniforms(dist[:, None], theta[:, None], sc.link, u_los[:, None], fading)
        bits = channel.rate(gains, sc.link).mean(axis=1) * sc.timing.data_duration
        outcome.throughput = np.where(outcome.accessed, bits, 0.0)
        self.n += 1
        return outcome

    def accumulator(self) -> MetricsAccumulator:
        sc = self.scenario
        return MetricsAccumulator(sc.num_uts, sc.num_planes, sc.num_preambles, sc.timing)
