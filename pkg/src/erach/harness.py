"""Experiment orchestration: configuration, seeding, runs, sweeps and persistence."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import marl
from .access import EpisodeMetrics, SlotTiming, summarize
from .agents import PROTOCOLS, make_baseline
from .channel import LinkBudget
from .constellation import ConstellationConfig
from .env import RandomAccessEnv, Scenario
from .marl import ObservationConfig, RewardConfig, TrainingConfig
from .neural import save_checkpoint
from .seeding import children

ENV_PREFIX = "ERACH_CFG__"
REQUIRED_KEYS = ("protocol", "seed")
LEARNED = ("erach", "erach-coop")
TARGET_RACH_THROUGHPUT = 47.7e6

EPISODE_COLUMNS = (
    "replica", "phase", "episode", "protocol", "throughput_bps", "collision_rate", "access_delay_s",
    "jain", "resource_util", "attempt_collision_rate", "mean_backoff", "mean_reward",
)
TRAINING_COLUMNS = ("replica", "episode", "agent", "cumulative_reward", "actor_loss", "critic_loss", "entropy")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlacementConfig:
    """UTs uniform over an ``area_side`` square, or rescaled to ``mean_spacing``."""

    mode: str = "area"
    area_side: float = 1000.0
    mean_spacing: float | None = None

    def __post_init__(self):
        if self.mode not in ("area", "spacing"):
            raise ValueError("mode must be 'area' or 'spacing'")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        if self.mode == "spacing" and (self.mean_spacing is None or self.mean_spacing <= 0):
            raise ValueError("spacing mode needs a positive mean_spacing")


@dataclass(frozen=True)
class SweepConfig:
    sigma2: tuple[float, ...] = (0.0, 1e2, 1e3, 1e4)
    rho: tuple[float, ...] = (0.0, 1.0, 2.0)
    state_masks: tuple[tuple[str, ...], ...] = (
        marl.STATE_COMPONENTS,
        ("positions", "collision"),
        ("time", "throughput", "collision", "prev_action"),
        (),
    )
    density: tuple[float, ...] = (10.0, 100.0, 1000.0)
    trailing_window: int = 50
    convergence_tolerance: float = 0.05

    def __post_init__(self):
        if any(s < 0 for s in self.sigma2) or any(r < 0 for r in self.rho):
            raise ValueError("sigma2 and rho entries must be >= 0")
        if any(d <= 0 for d in self.density):
            raise ValueError("density spacings must be positive")
        for mask in self.state_masks:
            unknown = set(mask) - set(marl.STATE_COMPONENTS)
            if unknown:
                raise ValueError(f"unknown state components {sorted(unknown)}")
        if self.trailing_window < 1 or self.convergence_tolerance <= 0:
            raise ValueError("trailing_window and convergence_tolerance must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    seed: int
    num_uts: int = 5
    num_preambles: int = 2
    backoff_window: int = 10
    replicas: int = 5
    eval_episodes: int = 5
    calibration_episodes: int = 5
    state_components: tuple[str, ...] = marl.STATE_COMPONENTS
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    link: LinkBudget = field(default_factory=LinkBudget)
    timing: SlotTiming = field(default_factory=SlotTiming)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.num_uts < 1 or self.num_preambles < 1 or self.replicas < 1:
            raise ValueError("num_uts, num_preambles and replicas must be >= 1")
        if self.backoff_window < 1 or self.eval_episodes < 1 or self.calibration_episodes < 1:
            raise ValueError("backoff_window, eval_episodes and calibration_episodes must be >= 1")
        unknown = set(self.state_components) - set(marl.STATE_COMPONENTS)
        if unknown:
            raise ValueError(f"unknown state components {sorted(unknown)}")


# configuration I/O


def _hints(cls):
    return typing.get_type_hints(cls)


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, f"{path}.")
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        item = args[0] if args else typing.Any
        return tuple(_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, path: str = ""):
    hints = _hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        where = ", ".join(f"{path}{k}" for k in unknown)
        raise ConfigError(f"unknown config key(s): {where}")
    kwargs = {k: _coerce(v, hints[k], f"{path}{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def _set_path(data: dict, keys: list[str], value):
    for k in keys[:-1]:
        node = data.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{'.'.join(keys)}: parent is not a mapping")
        data = node
    data[keys[-1]] = value


def env_overrides(environ=None) -> dict:
    """``ERACH_CFG__training__learning_rate=1e-3`` style overrides, values parsed as YAML."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        keys = [k.lower() for k in name[len(ENV_PREFIX):].split("__") if k]
        if keys:
            _set_path(out, keys, yaml.safe_load(raw))
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return _build(ExperimentConfig, data)


def load_config(path, overrides: dict | None = None, environ=None) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    data = _merge(data or {}, env_overrides(environ))
    if overrides:
        data = _merge(data, overrides)
    return config_from_dict(data)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def replace(cfg, **changes):
    """``dataclasses.replace`` that accepts dotted keys, e.g. ``{"training.episodes": 10}``."""
    nested: dict = {}
    flat = {}
    for key, value in changes.items():
        head, _, rest = key.partition(".")
        if rest:
            nested.setdefault(head, {})[rest] = value
        else:
            flat[key] = value
    for head, sub in nested.items():
        flat[head] = replace(flat.get(head, getattr(cfg, head)), **sub)
    return dataclasses.replace(cfg, **flat)


# scenario construction and calibration


def replica_seed(cfg: ExperimentConfig, replica: int) -> np.random.SeedSequence:
    """Child ``replica`` of the master seed; equal to ``SeedSequence(seed).spawn(n)[replica]``."""
    return np.random.SeedSequence(cfg.seed, spawn_key=(replica,))


@dataclass
class ReplicaStreams:
    placement: np.random.SeedSequence
    calibration: np.random.SeedSequence
    train_env: np.random.SeedSequence
    team: np.random.SeedSequence
    eval_env: np.random.SeedSequence
    policies: np.random.SeedSequence

    @classmethod
    def for_replica(cls, cfg: ExperimentConfig, replica: int) -> "ReplicaStreams":
        return cls(*children(replica_seed(cfg, replica), 6))


def place_uts(placement: PlacementConfig, num_uts: int, rng: np.random.Generator) -> np.ndarray:
    """UT positions (J, 3) on the ground plane z = 0, centred on the origin."""
    half = placement.area_side / 2
    xy = rng.uniform(-half, half, size=(num_uts, 2))
    if placement.mode == "spacing":
        if num_uts == 1:
            xy = np.zeros((1, 2))
        else:
            xy -= xy.mean(axis=0)
            iu = np.triu_indices(num_uts, 1)
            d = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)[iu].mean()
            xy *= placement.mean_spacing / d
    return np.column_stack([xy, np.zeros(num_uts)])


def build_scenario(cfg: ExperimentConfig, seed: np.random.SeedSequence) -> Scenario:
    uts = place_uts(cfg.placement, cfg.num_uts, np.random.default_rng(seed))
    return Scenario(cfg.constellation, cfg.link, cfg.timing, uts, cfg.num_preambles)


def _baseline_policies(cfg: ExperimentConfig, protocol: str, seed: np.random.SeedSequence):
    per_ut = children(seed, cfg.num_uts)
    policies, rngs = [], []
    for j, ss in enumerate(per_ut):
        act_ss, backoff_ss = children(ss, 2)
        policies.append(make_baseline(protocol, j, cfg.constellation.num_planes, cfg.num_preambles,
                                      cfg.backoff_window, np.random.default_rng(backoff_ss)))
        rngs.append(np.random.default_rng(act_ss))
    return policies, rngs


def run_baseline(cfg: ExperimentConfig, scenario: Scenario, protocol: str, env_seed, policy_seed,
                 episodes: int, reward_cfg: RewardConfig | None = None, observer=None):
    env = RandomAccessEnv(scenario, env_seed)
    policies, rngs = _baseline_policies(cfg, protocol, policy_seed)
    return marl.run_policies(env, policies, rngs, episodes, reward_cfg, observer)


def calibrate_reward(cfg: ExperimentConfig, scenario: Scenario, streams: ReplicaStreams) -> RewardConfig:
    """Fill unset ``mu`` (RACH per-UT mean bits per opportunity), ``scale``
    (max |R - mu|) and ``penalty`` (mean bits of a successful RACH access)."""
    if cfg.reward.mu is not None and cfg.reward.scale is not None and cfg.reward.penalty is not None:
        return cfg.reward
    env_ss, pol_ss = children(streams.calibration, 2)
    bits, wins = [], []

    def observe(o):
        bits.append(o.throughput.copy())
        wins.append(o.accessed.copy())

    run_baseline(cfg, scenario, "rach", env_ss, pol_ss, cfg.calibration_episodes, observer=observe)
    bits_a, wins_a = np.concatenate(bits), np.concatenate(wins)
    mu = float(bits_a.mean())
    fitted = {
        "mu": mu,
        "scale": float(np.max(np.abs(bits_a - mu))),
        "penalty": float(bits_a[wins_a].mean()) if wins_a.any() else mu,
    }
    return dataclasses.replace(cfg.reward, **{k: v for k, v in fitted.items() if getattr(cfg.reward, k) is None})


def calibrate_link_budget(cfg: ExperimentConfig, target_bps: float = TARGET_RACH_THROUGHPUT,
                          episodes: int = 2, rel_tol: float = 1e-4, max_iter: int = 60) -> tuple[float, float]:
    """Bisect ``ref_gain`` (log scale) until RACH network throughput hits ``target_bps``.

    RACH decisions never depend on the channel and the channel tape is shared,
    so throughput is monotone in ``ref_gain`` and bisection is exact.
    Returns (ref_gain, achieved throughput).
    """
    streams = ReplicaStreams.for_replica(cfg, 0)
    base = build_scenario(cfg, streams.placement)

    def throughput(gain):
        sc = dataclasses.replace(base, link=dataclasses.replace(cfg.link, ref_gain=gain))
        res = run_baseline(cfg, sc, "rach", streams.eval_env, streams.policies, episodes)
        return float(np.mean([m.network_throughput for m, _ in res]))

    lo, hi = -6.0, 6.0
    mid = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        got = throughput(10**mid)
        if abs(got - target_bps) <= rel_tol * target_bps:
            break
        if got < target_bps:
            lo = mid
        else:
            hi = mid
    return 10**mid, got


def observation_config(cfg: ExperimentConfig, scenario: Scenario, reward_cfg: RewardConfig,
                       components=None) -> ObservationConfig:
    return ObservationConfig(
        num_planes=scenario.num_planes,
        opportunities=scenario.opportunities,
        position_scale=cfg.constellation.circumference,
        throughput_scale=reward_cfg.scale,
        components=tuple(cfg.state_components if components is None else components),
        coop=cfg.protocol == "erach-coop",
    )


def _reward_for(cfg: ExperimentConfig, calibrated: RewardConfig) -> RewardConfig:
    mode = "coop" if cfg.protocol == "erach-coop" else ("rate_max" if cfg.reward.rho == 0 else calibrated.mode)
    return dataclasses.replace(calibrated, rho=cfg.reward.rho, mode=mode)


# runs


@dataclass
class ReplicaResult:
    replica: int
    train_logs: list
    eval_metrics: list[EpisodeMetrics]
    eval_rewards: list[np.ndarray]
    team: marl.AgentTeam | None = None
    reward_cfg: RewardConfig | None = None
    diverged: str | None = None


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    protocol: str
    replicas: list[ReplicaResult]
    summary: dict
    wall_clock: float

    @property
    def ok(self) -> bool:
        return not any(r.diverged for r in self.replicas)


def run_replica(cfg: ExperimentConfig, replica: int, calibration_cfg: ExperimentConfig | None = None,
                callback=None) -> ReplicaResult:
    """Train (learned protocols) and evaluate one replica.

    ``calibration_cfg`` lets sweeps share one reward normalisation across
    sweep points; it defaults to ``cfg``.
    """
    streams = ReplicaStreams.for_replica(cfg, replica)
    scenario = build_scenario(cfg, streams.placement)
    if cfg.protocol not in LEARNED:
        res = run_baseline(cfg, scenario, cfg.protocol, streams.eval_env, streams.policies, cfg.eval_episodes)
        return ReplicaResult(replica, [], [m for m, _ in res], [c for _, c in res])
    cal = calibration_cfg or cfg
    cal_scenario = build_scenario(cal, streams.placement)
    reward_cfg = _reward_for(cfg, calibrate_reward(cal, cal_scenario, streams))
    obs_cfg = observation_config(cfg, scenario, reward_cfg)
    team = marl.AgentTeam(cfg.num_uts, obs_cfg.dim, scenario.num_planes, cfg.num_preambles, cfg.training,
                          streams.team)
    seen: list = []
    try:
        logs = marl.train(RandomAccessEnv(scenario, streams.train_env), team, obs_cfg, reward_cfg,
                          callback=lambda log: (seen.append(log), callback and callback(replica, log)))
    except marl.TrainingDiverged as exc:
        return ReplicaResult(replica, seen, [], [], team, reward_cfg, diverged=str(exc))
    ro = marl.evaluate(RandomAccessEnv(scenario, streams.eval_env), team, obs_cfg, reward_cfg,
                       cfg.eval_episodes, greedy=cfg.training.greedy_eval)
    return ReplicaResult(replica, logs, [r.metrics for r in ro], [r.rewards.sum(axis=0) for r in ro],
                         team, reward_cfg)


def _metric_row(replica, phase, episode, protocol, m: EpisodeMetrics, mean_reward):
    return {
        "replica": replica, "phase": phase, "episode": episode, "protocol": protocol,
        **m.row(),
        "attempt_collision_rate": m.attempt_collision_rate,
        "mean_backoff": float(np.mean(m.backoff_fraction)),
        "mean_reward": mean_reward,
    }


def episode_rows(cfg: ExperimentConfig, results: list[ReplicaResult]) -> list[dict]:
    rows = []
    for res in results:
        for log in res.train_logs:
            rows.append(_metric_row(res.replica, "train", log.episode, cfg.protocol, log.metrics,
                                    float(log.cumulative_reward.mean())))
        for e, (m, cum) in enumerate(zip(res.eval_metrics, res.eval_rewards)):
            mean_reward = float(np.mean(cum)) if res.reward_cfg is not None else None
            rows.append(_metric_row(res.replica, "eval", e, cfg.protocol, m, mean_reward))
    return rows


def training_rows(results: list[ReplicaResult]) -> list[dict]:
    rows = []
    for res in results:
        for log in res.train_logs:
            for j in range(len(log.cumulative_reward)):
                rows.append({
                    "replica": res.replica, "episode": log.episode, "agent": j,
                    "cumulative_reward": float(log.cumulative_reward[j]),
                    "actor_loss": float(log.actor_loss[j]), "critic_loss": float(log.critic_loss[j]),
                    "entropy": float(log.entropy[j]),
                })
    return rows


SUMMARY_METRICS = ("throughput_bps", "collision_rate", "access_delay_s", "jain", "resource_util",
                   "attempt_collision_rate", "mean_backoff")


def summarize_rows(rows: list[dict]) -> dict:
    """Per-replica means of the eval rows, then mean and max deviation across replicas."""
    evals = [r for r in rows if r["phase"] == "eval"]
    replicas = sorted({r["replica"] for r in evals})
    out = {}
    for key in SUMMARY_METRICS:
        per_rep = []
        for rep in replicas:
            vals = [r[key] for r in evals if r["replica"] == rep and r[key] is not None]
            per_rep.append(float(np.mean(vals)) if vals else None)
        mean, dev = summarize(per_rep)
        out[key] = {"mean": mean, "max_dev": dev, "per_replica": per_rep}
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_checkpoints(out: Path, results: list[ReplicaResult]):
    for res in results:
        if res.team is None:
            continue
        d = out / "checkpoints" if res.replica == 0 else out / "checkpoints" / f"replica_{res.replica}"
        d.mkdir(parents=True, exist_ok=True)
        for j in range(res.team.num_agents):
            save_checkpoint(d / f"agent_{j}.bin", res.team.actors[j])
            save_checkpoint(d / f"critic_{j}.bin", res.team.critics[j])


def run(cfg: ExperimentConfig, out=None, callback=None) -> RunRecord:
    """Run every replica, then persist episodes.csv, training.csv, summary.json and checkpoints."""
    t0 = time.perf_counter()
    results = [run_replica(cfg, r, callback=callback) for r in range(cfg.replicas)]
    rows = episode_rows(cfg, results)
    summary = summarize_rows(rows)
    summary["backoff_fraction_per_ut"] = [
        [float(x) for x in np.mean([m.backoff_fraction for m in res.eval_metrics], axis=0)]
        for res in results if res.eval_metrics
    ]
    record = RunRecord(config_hash(cfg), cfg.seed, cfg.protocol, results, summary, time.perf_counter() - t0)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "episodes.csv", EPISODE_COLUMNS, rows)
        if cfg.protocol in LEARNED:
            write_csv(out / "training.csv", TRAINING_COLUMNS, training_rows(results))
        write_checkpoints(out, results)
        (out / "config.yaml").write_text(dump_config(cfg))
        doc = {
            "config_hash": record.config_hash,
            "seed": cfg.seed,
            "protocol": cfg.protocol,
            "ok": record.ok,
            "diverged": {str(r.replica): r.diverged for r in results if r.diverged},
            "reward_calibration": [
                {"replica": r.replica, "mu": r.reward_cfg.mu, "scale": r.reward_cfg.scale,
                 "penalty": r.reward_cfg.penalty, "mode": r.reward_cfg.mode}
                for r in results if r.reward_cfg is not None
            ],
            "summary": summary,
            "wall_clock_s": record.wall_clock,
            "config": config_to_dict(cfg),
        }
        (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    return record


# sweeps


def final_reward(curve, window: int) -> float:
    curve = np.asarray(curve, dtype=float)
    return float(curve[-window:].mean())


def convergence_episode(curve, window: int = 50, tol: float = 0.05) -> int | None:
    """First episode whose trailing-``window`` mean is within ``tol`` of the final trailing mean."""
    curve = np.asarray(curve, dtype=float)
    if curve.size < window:
        return None
    trailing = np.convolve(curve, np.ones(window) / window, mode="valid")
    target = trailing[-1]
    band = tol * max(abs(target), 1e-12)
    hits = np.flatnonzero(np.abs(trailing - target) <= band)
    return int(hits[0] + window - 1)


def _learned(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg if cfg.protocol in LEARNED else dataclasses.replace(cfg, protocol="erach")


@dataclass
class SweepResult:
    name: str
    rows: list[dict]
    curves: list[dict]
    ok: bool

    def table(self, key: str, value: str) -> dict:
        """Mean and max deviation of ``value`` across replicas, per sweep point ``key``."""
        points = []
        for r in self.rows:
            if r[key] not in points:
                points.append(r[key])
        return {p: summarize([r[value] for r in self.rows if r[key] == p]) for p in points}


def _sweep(name: str, base: ExperimentConfig, points, key: str, make_cfg, out=None,
           share_calibration: bool = True) -> SweepResult:
    base = _learned(base)
    rows, curves = [], []
    ok = True
    w = base.sweeps.trailing_window
    for point in points:
        cfg = make_cfg(point)
        for rep in range(cfg.replicas):
            res = run_replica(cfg, rep, calibration_cfg=base if share_calibration else None)
            curve = [float(log.cumulative_reward.mean()) for log in res.train_logs]
            ok &= res.diverged is None
            m = res.eval_metrics
            label = point if not isinstance(point, tuple) else "+".join(point) or "none"
            rows.append({
                key: label,
                "replica": rep,
                "final_reward": final_reward(curve, w) if curve and not res.diverged else None,
                "convergence_episode": convergence_episode(curve, w, base.sweeps.convergence_tolerance)
                if not res.diverged else None,
                "throughput_bps": float(np.mean([x.network_throughput for x in m])) if m else None,
                "collision_rate": float(np.mean([x.collision_rate for x in m])) if m else None,
                "jain": float(np.mean([x.jains_index for x in m])) if m else None,
                "mean_backoff": float(np.mean([x.backoff_fraction for x in m])) if m else None,
                "diverged": res.diverged or "",
            })
            curves.extend({key: label, "replica": rep, "episode": e, "mean_cumulative_reward": c}
                          for e, c in enumerate(curve))
    result = SweepResult(name, rows, curves, ok)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        cols = (key, "replica", "final_reward", "convergence_episode", "throughput_bps", "collision_rate",
                "jain", "mean_backoff", "diverged")
        write_csv(out / f"{name}.csv", cols, rows)
        write_csv(out / f"{name}_curves.csv", (key, "replica", "episode", "mean_cumulative_reward"), curves)
        (out / "config.yaml").write_text(dump_config(base))
    return result


def sweep_position_error(cfg: ExperimentConfig, sigma2=None, out=None) -> SweepResult:
    """Train per sigma^2; observations stay noiseless, dynamics use noisy positions.

    Reward normalisation is calibrated once at the base configuration so
    rewards are comparable across rows.
    """
    sigma2 = cfg.sweeps.sigma2 if sigma2 is None else sigma2
    base = _learned(replace(cfg, **{"constellation.position_noise_variance": 0.0}))
    return _sweep("sweep_sigma", base, sigma2, "sigma2",
                  lambda s: replace(base, **{"constellation.position_noise_variance": float(s)}), out)


def sweep_rho(cfg: ExperimentConfig, rhos=None, out=None) -> SweepResult:
    """One training per rho; rho = 0 switches to the rate-max reward."""
    rhos = cfg.sweeps.rho if rhos is None else rhos
    base = _learned(cfg)
    return _sweep("sweep_rho", base, rhos, "rho", lambda r: replace(base, **{"reward.rho": float(r)}), out)


def sweep_state_mask(cfg: ExperimentConfig, masks=None, out=None) -> SweepResult:
    masks = cfg.sweeps.state_masks if masks is None else masks
    base = _learned(cfg)
    return _sweep("sweep_state", base, [tuple(m) for m in masks], "mask",
                  lambda m: dataclasses.replace(base, state_components=tuple(m)), out)


def sweep_density(cfg: ExperimentConfig, spacings=None, out=None) -> SweepResult:
    """Mean pairwise UT distance sweep; each point calibrates its own normalisation."""
    spacings = cfg.sweeps.density if spacings is None else spacings
    base = _learned(cfg)
    return _sweep("sweep_density", base, spacings, "mean_spacing",
                  lambda d: replace(base, **{"placement.mode": "spacing", "placement.mean_spacing": float(d)}),
                  out, share_calibration=False)
