"""LoS-probability ground-to-satellite channel and uplink throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SMALL_SCALE_MODELS = ("rayleigh", "none")


@dataclass(frozen=True)
class LinkBudget:
    """Channel and link parameters.

    Only the composite ``tx_power * ref_gain / noise_variance`` reaches the
    rate expression. ``ref_gain`` ships at the value that calibrates the RACH
    baseline to roughly 47.7 Mbps (see ``erach.harness.calibrate_link_budget``).
    """

    bandwidth: float = 1e8
    pathloss_exponent: float = 2.1
    los_l1: float = 10.0
    los_l2: float = 0.6
    nlos_attenuation: float = 0.2
    ref_gain: float = 0.3156505446038489
    tx_power: float = 1.0
    noise_variance: float = 4.0e-13
    small_scale: str = "rayleigh"
    per_subslot_draws: bool = False

    def __post_init__(self):
        if not 0 < self.nlos_attenuation <= 1:
            raise ValueError("nlos_attenuation must lie in (0, 1]")
        if self.pathloss_exponent <= 0 or self.bandwidth <= 0:
            raise ValueError("pathloss_exponent and bandwidth must be positive")
        if not self.snr_scale > 0:
            raise ValueError("tx_power * ref_gain / noise_variance must be positive")
        if self.small_scale not in SMALL_SCALE_MODELS:
            raise ValueError(f"small_scale must be one of {SMALL_SCALE_MODELS}")

    @property
    def snr_scale(self) -> float:
        return self.tx_power * self.ref_gain / self.noise_variance


@dataclass(frozen=True)
class ChannelDraw:
    is_los: bool
    gain: float
    elevation: float


def elevation_angle(sat_pos, ut_pos):
    """Elevation in degrees of the satellite seen from the UT.

    Broadcasts over leading dimensions of ``sat_pos`` and ``ut_pos``.
    """
    diff = np.asarray(sat_pos, dtype=float) - np.asarray(ut_pos, dtype=float)
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist == 0):
        raise ValueError("satellite and UT positions coincide")
    if np.any(diff[..., 2] < 0):
        raise ValueError("satellite must not be below the UT")
    theta = np.degrees(np.arcsin(np.clip(diff[..., 2] / dist, -1.0, 1.0)))
    return float(theta) if np.ndim(theta) == 0 else theta


def los_probability(theta, l1: float = 10.0, l2: float = 0.6):
    return 1.0 / (1.0 + l1 * np.exp(-l2 * (np.asarray(theta, dtype=float) - l1)))


def large_scale_gain(dist, is_los, budget: LinkBudget):
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("distance must be positive")
    g = budget.ref_gain * dist ** (-budget.pathloss_exponent)
    return np.where(is_los, g, budget.nlos_attenuation * g)


def expected_gain(dist, theta, budget: LinkBudget):
    """Mean power gain over LoS state and small-scale fading."""
    p = los_probability(theta, budget.los_l1, budget.los_l2)
    mix = p + budget.nlos_attenuation * (1.0 - p)
    return mix * budget.ref_gain * np.asarray(dist, dtype=float) ** (-budget.pathloss_exponent)


def fading_power(budget: LinkBudget, rng: np.random.Generator, size=None):
    """Unit-mean small-scale power factor |h~|^2."""
    if budget.small_scale == "none":
        return np.ones(size) if size is not None else 1.0
    return rng.standard_exponential(size)


def gains_from_uniforms(dist, theta, budget: LinkBudget, u_los, fading):
    """Channel power gains from pre-drawn LoS uniforms and fading powers.

    Splitting the draw from its use keeps random streams aligned across
    policies: every UT consumes the same numbers whichever plane it picks.
    """
    is_los = np.asarray(u_los) < los_probability(theta, budget.los_l1, budget.los_l2)
    return is_los, large_scale_gain(dist, is_los, budget) * fading


def sample_channel(dist: float, theta: float, budget: LinkBudget, rng: np.random.Generator) -> ChannelDraw:
    u = rng.random()
    fade = fading_power(budget, rng)
    is_los, gain = gains_from_uniforms(dist, theta, budget, u, fade)
    return ChannelDraw(is_los=bool(is_los), gain=float(gain), elevation=float(theta))


def rate(gain, budget: LinkBudget):
    """Shannon rate in bit/s for channel power gain(s) ``gain`` (which already include ``ref_gain``)."""
    snr = budget.tx_power / budget.noise_variance * np.asarray(gain, dtype=float)
    return budget.bandwidth * np.log2(1.0 + snr)


def slot_throughput(gains, budget: LinkBudget, data_duration: float, accessed: bool = True) -> float:
    """Bits delivered in one opportunity's data phase.

    ``gains`` holds one gain per data sub-slot; the data phase is split evenly
    among them. A single gain covers the whole ``data_duration``.
    """
    if not accessed:
        return 0.0
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    return float(np.sum(rate(gains, budget)) * data_duration / gains.size)
