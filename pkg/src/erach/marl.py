"""Distributed advantage actor-critic for learned random access (eRACH).

Each UT owns an actor and a critic MLP. During an episode the UTs act once per
RA opportunity from local observations; after the episode every agent runs a
backward pass over its own trajectory and applies one RMSprop update to each
network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .access import BACKOFF, EpisodeMetrics, RaAction
from .env import RandomAccessEnv
from .seeding import children
from .neural import (
    GradientSet,
    MlpParams,
    RmsPropState,
    backward,
    entropy_grad,
    forward,
    init_mlp,
    policy_head,
    rmsprop_step,
)

STATE_COMPONENTS = ("time", "positions", "throughput", "collision", "prev_action")
REWARD_MODES = ("standard", "coop", "rate_max")


@dataclass(frozen=True)
class AgentObservation:
    """What one UT sees before acting at opportunity ``slot``.

    ``throughput``, ``collided`` and ``prev_action`` refer to the UT's own
    previous opportunity. There is deliberately no field for other UTs.
    """

    slot: int
    sat_positions: np.ndarray
    throughput: float
    collided: bool
    prev_action: int


@dataclass(frozen=True)
class CoopObservation(AgentObservation):
    total_throughput: float = 0.0
    total_collisions: int = 0


@dataclass(frozen=True)
class ObservationConfig:
    num_planes: int
    opportunities: int
    position_scale: float
    throughput_scale: float
    components: tuple[str, ...] = STATE_COMPONENTS
    coop: bool = False

    def __post_init__(self):
        unknown = set(self.components) - set(STATE_COMPONENTS)
        if unknown:
            raise ValueError(f"unknown state components {sorted(unknown)}")
        if self.position_scale <= 0 or self.throughput_scale <= 0 or self.opportunities < 1:
            raise ValueError("observation scales must be positive")

    @property
    def dim(self) -> int:
        K = self.num_planes
        return 1 + 3 * K + 1 + 1 + (K + 1) + (2 if self.coop else 0)

    def _slices(self):
        K = self.num_planes
        return {
            "time": slice(0, 1),
            "positions": slice(1, 1 + 3 * K),
            "throughput": slice(1 + 3 * K, 2 + 3 * K),
            "collision": slice(2 + 3 * K, 3 + 3 * K),
            "prev_action": slice(3 + 3 * K, 4 + 4 * K),
        }


def encode_batch(cfg: ObservationConfig, slot, sat_positions, throughput, collided, prev_action, totals=None):
    """Encode one opportunity's observations for all UTs at once, shape (J, dim).

    Masked components are zero-filled so the width never changes.
    """
    throughput = np.asarray(throughput, dtype=float)
    J = throughput.shape[0]
    K = cfg.num_planes
    X = np.zeros((J, cfg.dim))
    sl = cfg._slices()
    inc = cfg.components
    if "time" in inc:
        X[:, 0] = slot / cfg.opportunities
    if "positions" in inc:
        X[:, sl["positions"]] = np.asarray(sat_positions, dtype=float).reshape(-1) / cfg.position_scale
    if "throughput" in inc:
        X[:, sl["throughput"].start] = throughput / cfg.throughput_scale
    if "collision" in inc:
        X[:, sl["collision"].start] = np.asarray(collided, dtype=float)
    if "prev_action" in inc:
        X[np.arange(J), sl["prev_action"].start + np.asarray(prev_action, dtype=np.int64)] = 1.0
    if cfg.coop:
        total_R, total_c = totals if totals is not None else (0.0, 0)
        X[:, 4 + 4 * K] = total_R / cfg.throughput_scale
        X[:, 5 + 4 * K] = total_c
    return X


def encode_observation(raw: AgentObservation, cfg: ObservationConfig) -> np.ndarray:
    totals = None
    if cfg.coop:
        if not isinstance(raw, CoopObservation):
            raise TypeError("cooperative encoding needs a CoopObservation")
        totals = (raw.total_throughput, raw.total_collisions)
    return encode_batch(
        cfg, raw.slot, raw.sat_positions, [raw.throughput], [raw.collided], [raw.prev_action], totals
    )[0]


PENALTY_UNITS = ("success", "scale")


@dataclass(frozen=True)
class RewardConfig:
    """Reward normalisation and collision penalty, all in bits per opportunity.

    ``mu``, ``scale`` and ``penalty`` left as None are calibrated from a RACH
    run. ``penalty_unit`` picks what one unit of ``rho`` costs: the mean bits of
    a successful access ("success") or the normalisation ``scale``.
    """

    rho: float = 1.0
    mu: float | None = None
    scale: float | None = None
    penalty: float | None = None
    penalty_unit: str = "success"
    mode: str = "standard"

    def __post_init__(self):
        if self.mode not in REWARD_MODES:
            raise ValueError(f"reward mode must be one of {REWARD_MODES}")
        if self.penalty_unit not in PENALTY_UNITS:
            raise ValueError(f"penalty_unit must be one of {PENALTY_UNITS}")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.scale is not None and self.scale <= 0:
            raise ValueError("reward scale must be positive")
        if self.penalty is not None and self.penalty < 0:
            raise ValueError("penalty must be >= 0")

    @property
    def calibrated(self) -> bool:
        need_penalty = self.penalty_unit == "success" and self.mode == "standard"
        return self.mu is not None and self.scale is not None and (self.penalty is not None or not need_penalty)

    @property
    def collision_cost(self) -> float:
        """Bits subtracted per collision."""
        return self.rho * (self.scale if self.penalty_unit == "scale" else self.penalty)


def normalize(y, mu: float, scale: float):
    return (np.asarray(y, dtype=float) - mu) / scale


def reward(throughput, collided, cfg: RewardConfig, total_throughput=None, num_uts: int = 1):
    """Per-UT reward.

    standard: g(R - c * collision_cost); rate_max: g(R); coop: g(sum of all R),
    centred on the network-level mean ``num_uts * mu``.
    """
    if not cfg.calibrated:
        raise ValueError("reward normalisation is not calibrated")
    R = np.asarray(throughput, dtype=float)
    if cfg.mode == "rate_max":
        out = normalize(R, cfg.mu, cfg.scale)
    elif cfg.mode == "coop":
        total = R.sum() if total_throughput is None else total_throughput
        out = np.full(R.shape, (total - num_uts * cfg.mu) / cfg.scale)
    else:
        out = normalize(R - np.asarray(collided, dtype=float) * cfg.collision_cost, cfg.mu, cfg.scale)
    return float(out) if out.ndim == 0 else out


def advantage(r_next: float, v_now: float, v_next: float, gamma: float, terminal: bool) -> float:
    """One-step TD advantage r + gamma * V(s') - V(s), with V(s') = 0 at a terminal state."""
    return r_next + gamma * v_next * (0.0 if terminal else 1.0) - v_now


def discounted_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Backward accumulation R <- r + gamma * R, seeded with ``bootstrap``."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    R = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        R = rewards[i] + gamma * R
        out[i] = R
    return out


@dataclass(frozen=True)
class TrainingConfig:
    gamma: float = 1.0
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes: int = 1000
    learning_rate: float = 1e-4
    rms_decay: float = 0.99
    rms_epsilon: float = 1e-8
    hidden: tuple[int, ...] = (128, 128)
    greedy_eval: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("loss coefficients must be >= 0")
        if self.episodes < 0 or self.learning_rate < 0:
            raise ValueError("episodes and learning_rate must be >= 0")


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray | None = None
    terminal: bool = True
    final_observation: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.observations)
        if not (len(self.actions) == len(self.rewards) == n) or n == 0:
            raise ValueError("trajectory sequences must be non-empty and of equal length")


@dataclass
class LossInfo:
    actor_loss: float
    critic_loss: float
    entropy: float


def actor_critic_losses(
    actor: MlpParams, critic: MlpParams, traj: Trajectory, gamma: float, entropy_coef: float, value_coef: float
) -> tuple[GradientSet, GradientSet, LossInfo]:
    """Gradients of the summed actor and critic losses over one trajectory.

    actor:  sum_i -(R_i - V_i) * log pi(a_i | s_i) - entropy_coef * H(pi(.|s_i))
    critic: sum_i 0.5 * value_coef * (R_i - V_i)^2

    R_i are the bootstrapped returns accumulated backwards from the final
    state. The advantage is held constant in the actor term.
    """
    logits, a_cache = forward(actor, traj.observations)
    v, c_cache = forward(critic, traj.observations)
    v = v[:, 0]
    bootstrap = 0.0
    if not traj.terminal:
        bootstrap = float(forward(critic, traj.final_observation)[0][0])
    returns = discounted_returns(traj.rewards, gamma, bootstrap)
    adv = returns - v
    p, logp, H = policy_head(logits)
    idx = np.arange(len(traj.actions))
    onehot = np.zeros_like(p)
    onehot[idx, traj.actions] = 1.0
    d_logits = -adv[:, None] * (onehot - p) - entropy_coef * entropy_grad(p, logp, H)
    d_value = (-value_coef * adv)[:, None]
    info = LossInfo(
        actor_loss=float(np.sum(-adv * logp[idx, traj.actions] - entropy_coef * H)),
        critic_loss=float(0.5 * value_coef * np.sum(adv * adv)),
        entropy=float(H.mean()),
    )
    return backward(actor, a_cache, d_logits), backward(critic, c_cache, d_value), info


class TrainingDiverged(RuntimeError):
    def __init__(self, episode: int, agent: int, step: int | None, what: str):
        self.episode, self.agent, self.step = episode, agent, step
        where = f"episode {episode}, agent {agent}" + (f", step {step}" if step is not None else "")
        super().__init__(f"non-finite {what} at {where}")


def _stack_params(params: list[MlpParams]):
    """Stack per-agent parameters into (J, ...) arrays and rebind agents to views."""
    Ws = [np.stack([p.weights[l] for p in params]) for l in range(len(params[0].weights))]
    bs = [np.stack([p.biases[l] for p in params]) for l in range(len(params[0].biases))]
    views = [MlpParams([W[j] for W in Ws], [b[j] for b in bs]) for j in range(len(params))]
    return Ws, bs, views


class AgentTeam:
    """Per-UT actor/critic networks, optimisers and action streams.

    Parameters live in stacked arrays so one opportunity's forward pass for all
    agents is a single kernel call; ``actors[j]`` and ``critics[j]`` are views
    into agent j's slice and never alias another agent's memory.
    """

    def __init__(self, num_agents: int, obs_dim: int, num_planes: int, num_preambles: int,
                 cfg: TrainingConfig, seed: np.random.SeedSequence):
        self.num_agents = num_agents
        self.num_planes = num_planes
        self.num_preambles = num_preambles
        self.cfg = cfg
        init_ss, action_ss = children(seed, 2)
        init_rngs = [np.random.default_rng(s) for s in children(init_ss, num_agents)]
        self.action_rngs = [np.random.default_rng(s) for s in children(action_ss, num_agents)]
        dims_a = [obs_dim, *cfg.hidden, num_planes + 1]
        dims_c = [obs_dim, *cfg.hidden, 1]
        actors = [init_mlp(dims_a, r) for r in init_rngs]
        critics = [init_mlp(dims_c, r) for r in init_rngs]
        self.actor_w, self.actor_b, self.actors = _stack_params(actors)
        self.critic_w, self.critic_b, self.critics = _stack_params(critics)
        opt = dict(learning_rate=cfg.learning_rate, decay=cfg.rms_decay, epsilon=cfg.rms_epsilon)
        self.actor_opt = [RmsPropState.for_params(p, **opt) for p in self.actors]
        self.critic_opt = [RmsPropState.for_params(p, **opt) for p in self.critics]

    def load(self, actors: list[MlpParams], critics: list[MlpParams] | None = None):
        for j, p in enumerate(actors):
            for dst, src in zip(self.actors[j].arrays(), p.arrays()):
                dst[...] = src
        for j, p in enumerate(critics or []):
            for dst, src in zip(self.critics[j].arrays(), p.arrays()):
                dst[...] = src

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in [*self.actor_w, *self.actor_b, *self.critic_w, *self.critic_b]:
            h.update(a.tobytes())
        return h.hexdigest()

    def initial_actions(self) -> np.ndarray:
        return np.array([r.integers(0, self.num_planes + 1) for r in self.action_rngs], dtype=np.int64)

    def act(self, X: np.ndarray, greedy: bool = False):
        logits = kernels.stacked_logits(X, self.actor_w, self.actor_b)
        probs = policy_head(logits)[0]
        if greedy:
            choices = probs.argmax(axis=1).astype(np.int64)
        else:
            u = np.array([r.random() for r in self.action_rngs])
            choices = kernels.sample_categorical(probs, u)
        preambles = np.zeros(self.num_agents, dtype=np.int64)
        for j in np.flatnonzero(choices != BACKOFF):
            preambles[j] = self.action_rngs[j].integers(1, self.num_preambles + 1)
        return choices, preambles

    def policy(self, j: int, obs_cfg: ObservationConfig, greedy: bool = False) -> "ErachPolicy":
        return ErachPolicy(self.actors[j], obs_cfg, self.num_preambles, greedy)


class ErachPolicy:
    """Single-UT view of a trained actor behind the common policy interface."""

    def __init__(self, actor: MlpParams, obs_cfg: ObservationConfig, num_preambles: int, greedy: bool = False):
        self.actor = actor
        self.obs_cfg = obs_cfg
        self.num_preambles = num_preambles
        self.greedy = greedy

    def probabilities(self, observation) -> np.ndarray:
        x = observation if isinstance(observation, np.ndarray) else encode_observation(observation, self.obs_cfg)
        return policy_head(forward(self.actor, x)[0])[0]

    def act(self, observation, rng: np.random.Generator) -> RaAction:
        p = self.probabilities(observation)
        if self.greedy:
            choice = int(np.argmax(p))
        else:
            choice = int(kernels.sample_categorical(p[None, :], np.array([rng.random()]))[0])
        if choice == BACKOFF:
            return RaAction(BACKOFF)
        return RaAction(choice, int(rng.integers(1, self.num_preambles + 1)))

    def notify(self, collided, accessed):
        pass


@dataclass
class EpisodeRollout:
    observations: np.ndarray  # (N, J, dim)
    actions: np.ndarray  # (N, J)
    rewards: np.ndarray  # (N, J)
    metrics: EpisodeMetrics


def rollout(env: RandomAccessEnv, team: AgentTeam, obs_cfg: ObservationConfig,
            reward_cfg: RewardConfig, greedy: bool = False) -> EpisodeRollout:
    """Play one full episode with every agent sampling from its current policy."""
    N, J = env.N, team.num_agents
    X_all = np.empty((N, J, obs_cfg.dim))
    A_all = np.empty((N, J), dtype=np.int64)
    r_all = np.empty((N, J))
    acc = env.accumulator()
    env.reset()
    prev_a = team.initial_actions()
    prev_R = np.zeros(J)
    prev_c = np.zeros(J, dtype=bool)
    totals = (0.0, 0)
    for n in range(N):
        X = encode_batch(obs_cfg, n, env.expected_positions[n], prev_R, prev_c, prev_a, totals)
        choices, preambles = team.act(X, greedy)
        out = env.step(choices, preambles)
        acc.add(out)
        X_all[n], A_all[n] = X, choices
        r_all[n] = reward(out.throughput, out.collided, reward_cfg, num_uts=J)
        prev_a, prev_R, prev_c = choices, out.throughput, out.collided
        totals = (float(out.throughput.sum()), int(out.collided.sum()))
    return EpisodeRollout(X_all, A_all, r_all, acc.metrics())


@dataclass
class EpisodeLog:
    episode: int
    cumulative_reward: np.ndarray
    actor_loss: np.ndarray
    critic_loss: np.ndarray
    entropy: np.ndarray
    metrics: EpisodeMetrics


def update_team(team: AgentTeam, ro: EpisodeRollout, episode: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cfg = team.cfg
    J = team.num_agents
    stats = np.zeros((3, J))
    for j in range(J):
        traj = Trajectory(ro.observations[:, j], ro.actions[:, j], ro.rewards[:, j])
        ga, gc, info = actor_critic_losses(team.actors[j], team.critics[j], traj,
                                           cfg.gamma, cfg.entropy_coef, cfg.value_coef)
        if not (math.isfinite(info.actor_loss) and math.isfinite(info.critic_loss)):
            bad = np.flatnonzero(~np.isfinite(ro.rewards[:, j]))
            raise TrainingDiverged(episode, j, int(bad[0]) if bad.size else None, "loss")
        if not (ga.all_finite() and gc.all_finite()):
            raise TrainingDiverged(episode, j, None, "gradient")
        rmsprop_step(team.actors[j], ga, team.actor_opt[j])
        rmsprop_step(team.critics[j], gc, team.critic_opt[j])
        if not (team.actors[j].all_finite() and team.critics[j].all_finite()):
            raise TrainingDiverged(episode, j, None, "parameter")
        stats[:, j] = info.actor_loss, info.critic_loss, info.entropy
    return stats[0], stats[1], stats[2]


def train(env: RandomAccessEnv, team: AgentTeam, obs_cfg: ObservationConfig, reward_cfg: RewardConfig,
          episodes: int | None = None, callback=None) -> list[EpisodeLog]:
    """Run the episodic actor-critic loop; one update per agent per episode."""
    episodes = team.cfg.episodes if episodes is None else episodes
    logs = []
    for e in range(episodes):
        ro = rollout(env, team, obs_cfg, reward_cfg)
        actor_loss, critic_loss, entropy = update_team(team, ro, e)
        log = EpisodeLog(e, ro.rewards.sum(axis=0), actor_loss, critic_loss, entropy, ro.metrics)
        logs.append(log)
        if callback is not None:
            callback(log)
    return logs


def evaluate(env: RandomAccessEnv, team: AgentTeam, obs_cfg: ObservationConfig, reward_cfg: RewardConfig,
             episodes: int, greedy: bool = False) -> list[EpisodeRollout]:
    """Roll frozen policies; parameters and optimiser state are untouched."""
    return [rollout(env, team, obs_cfg, reward_cfg, greedy) for _ in range(episodes)]


def run_policies(env: RandomAccessEnv, policies, rngs, episodes: int, reward_cfg: RewardConfig | None = None,
                 observer=None):
    """Roll arbitrary per-UT :class:`~erach.agents.Policy` objects.

    Observations handed to ``act`` are :class:`AgentObservation` records, so
    baselines and learned policies share one evaluation path. Returns the
    per-episode metrics and, when ``reward_cfg`` is calibrated, cumulative
    rewards per UT. ``observer(outcome)`` is called after every step.
    """
    J = len(policies)
    out = []
    for _ in range(episodes):
        env.reset()
        acc = env.accumulator()
        prev_a = np.zeros(J, dtype=np.int64)
        prev_R = np.zeros(J)
        prev_c = np.zeros(J, dtype=bool)
        cum = np.zeros(J)
        for n in range(env.N):
            acts = []
            for j, (pol, rng) in enumerate(zip(policies, rngs)):
                obs = AgentObservation(n, env.expected_positions[n], prev_R[j], bool(prev_c[j]), int(prev_a[j]))
                acts.append(pol.act(obs, rng))
            choices = np.array([a.choice for a in acts], dtype=np.int64)
            preambles = np.array([a.preamble or 0 for a in acts], dtype=np.int64)
            o = env.step(choices, preambles)
            for j, pol in enumerate(policies):
                pol.notify(bool(o.collided[j]), bool(o.accessed[j]))
            acc.add(o)
            if observer is not None:
                observer(o)
            if reward_cfg is not None and reward_cfg.calibrated:
                cum += reward(o.throughput, o.collided, reward_cfg, num_uts=J)
            prev_a, prev_R, prev_c = choices, o.throughput, o.collided
        out.append((acc.metrics(), cum))
    return out
