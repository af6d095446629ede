"""LEO constellation geometry on line-segment orbital planes.

Each orbital plane is flattened to a straight line at constant altitude over
the UT area. Along-track coordinates are taken modulo the orbit circumference
and centred on the UT area, so the nearest satellite of a plane always sits
within half an inter-satellite spacing of the origin.

Coordinates: x is cross-track, y is along-track, z is altitude. The UT area is
centred on the origin at z = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS = 6.371e6


@dataclass(frozen=True)
class ConstellationConfig:
    """Orbital geometry shared by all planes.

    ``speeds`` carries one signed along-track speed per plane; only the sign is
    used for propagation, the magnitude being ``circumference / period`` so that
    trajectories are exactly periodic.
    """

    num_planes: int = 2
    sats_per_plane: int = 22
    altitude: float = 550e3
    orbit_radius: float = 6.921e6
    circumference: float = 4.3486e7
    speeds: tuple[float, ...] = (7590.0, -7590.0)
    inter_sat_distance: float = 1.977e6
    period: float = 5728.0
    grav_const: float = 6.673e-11
    earth_mass: float = 5.98e24
    position_noise_variance: float = 0.0
    # fraction of one spacing, per plane
    phase_offsets: tuple[float, ...] = (0.0, 0.25)
    cross_track_offsets: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        K, I = self.num_planes, self.sats_per_plane
        if K < 1 or I < 1:
            raise ValueError("num_planes and sats_per_plane must be >= 1")
        for name in ("speeds", "phase_offsets", "cross_track_offsets"):
            if len(getattr(self, name)) != K:
                raise ValueError(f"{name} must have one entry per plane ({K})")
        if any(s == 0 for s in self.speeds):
            raise ValueError("plane speeds must be non-zero")
        if self.altitude <= 0 or self.circumference <= 0 or self.period <= 0:
            raise ValueError("altitude, circumference and period must be positive")
        if self.position_noise_variance < 0:
            raise ValueError("position_noise_variance must be >= 0")
        if abs(I * self.inter_sat_distance - self.circumference) > 0.005 * self.circumference:
            raise ValueError("sats_per_plane * inter_sat_distance must match circumference within 0.5%")
        for s in self.speeds:
            if abs(abs(s) * self.period - self.circumference) > 0.005 * self.circumference:
                raise ValueError("|speed| * period must match circumference within 0.5%")

    @property
    def spacing(self) -> float:
        """Along-track distance between neighbouring satellites (c_E / I)."""
        return self.circumference / self.sats_per_plane

    @property
    def handover_interval(self) -> float:
        """Seconds for which one satellite stays nearest on its plane (T / I)."""
        return self.period / self.sats_per_plane

    def direction(self, plane: int) -> float:
        return math.copysign(1.0, self.speeds[plane])


@dataclass(frozen=True)
class SatPosition:
    plane: int
    sat: int
    slot: int
    position: np.ndarray
    velocity: np.ndarray = field(repr=False)


def derive_orbit(orbit_radius: float, grav_const: float, earth_mass: float) -> tuple[float, float]:
    """Circular-orbit period and speed from 4*pi^2*r^3 = T^2*G*M and V^2*r = G*M."""
    if orbit_radius <= 0 or grav_const <= 0 or earth_mass <= 0:
        raise ValueError("orbit radius, G and M must be positive")
    if orbit_radius <= EARTH_RADIUS:
        raise ValueError(f"orbit radius {orbit_radius} m is inside the Earth")
    gm = grav_const * earth_mass
    period = 2.0 * math.pi * math.sqrt(orbit_radius**3 / gm)
    speed = math.sqrt(gm / orbit_radius)
    return period, speed


def _wrap(s, circumference):
    return (np.asarray(s) + 0.5 * circumference) % circumference - 0.5 * circumference


def along_track(cfg: ConstellationConfig, plane: int, sat, t):
    """Wrapped along-track coordinate(s) of ``sat`` on ``plane`` at time ``t`` seconds."""
    frac = np.asarray(t, dtype=float) / cfg.period
    s = (np.asarray(sat) + cfg.phase_offsets[plane]) * cfg.spacing
    s = s + cfg.direction(plane) * frac * cfg.circumference
    return _wrap(s, cfg.circumference)


def sat_position(
    cfg: ConstellationConfig,
    plane: int,
    sat: int,
    slot: int,
    dt: float = 0.1,
    rng: np.random.Generator | None = None,
) -> SatPosition:
    """Position of one satellite at the start of RA opportunity ``slot``.

    With ``rng`` given, i.i.d. zero-mean Gaussian noise of variance
    ``cfg.position_noise_variance`` is added to each axis, redrawn per call.
    """
    if not (0 <= plane < cfg.num_planes and 0 <= sat < cfg.sats_per_plane):
        raise IndexError(f"no satellite ({plane}, {sat})")
    y = float(along_track(cfg, plane, sat, slot * dt))
    pos = np.array([cfg.cross_track_offsets[plane], y, cfg.altitude])
    if rng is not None and cfg.position_noise_variance > 0:
        pos = pos + rng.normal(0.0, math.sqrt(cfg.position_noise_variance), 3)
    vel = np.array([0.0, cfg.direction(plane) * cfg.circumference / cfg.period, 0.0])
    return SatPosition(plane=plane, sat=sat, slot=slot, position=pos, velocity=vel)


def nearest_sat(cfg: ConstellationConfig, plane: int, slot, dt: float = 0.1):
    """Index of the satellite on ``plane`` closest to the UT-area centre.

    Works on scalar or array ``slot``. Cross-track offset and altitude are
    common to the plane, so the nearest satellite minimises |along-track|.
    """
    t = np.asarray(slot, dtype=float) * dt
    I = cfg.sats_per_plane
    u = cfg.phase_offsets[plane] + cfg.direction(plane) * (t / cfg.period) * I
    idx = np.mod(np.rint(-u), I).astype(np.int64)
    return int(idx) if idx.ndim == 0 else idx


def nearest_positions(cfg: ConstellationConfig, slots, dt: float = 0.1) -> np.ndarray:
    """Noiseless nearest-satellite positions, shape ``(len(slots), K, 3)``."""
    slots = np.atleast_1d(np.asarray(slots))
    out = np.empty((slots.size, cfg.num_planes, 3))
    for k in range(cfg.num_planes):
        idx = nearest_sat(cfg, k, slots, dt)
        out[:, k, 0] = cfg.cross_track_offsets[k]
        out[:, k, 1] = along_track(cfg, k, idx, slots * dt)
        out[:, k, 2] = cfg.altitude
    return out


def perturb(cfg: ConstellationConfig, positions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Add per-axis Gaussian position error; identity when the variance is zero."""
    if cfg.position_noise_variance <= 0:
        return positions
    return positions + rng.normal(0.0, math.sqrt(cfg.position_noise_variance), positions.shape)
