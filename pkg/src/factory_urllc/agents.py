"""Multi-agent deep Q-learning for Phase-I resource allocation.

Each cluster leader is an agent with its own Q-network. Agents pick an AP
subset (one or two APs), a sub-band and a power level every slot, and all of
them are trained on the same common reward: the sum over leaders of the
per-slot rate in Mbps, with a leader contributing the fixed bonus ``U``
once its payload has been delivered.
"""
from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import channel, dqn
from .config import ExperimentConfig
from .env import EpisodeMetrics, FactoryEnv, LeaderAction, SlotOutcome

log = logging.getLogger(__name__)


class ActionCodec:
    """Bijection between action indices and (AP subset, sub-band, power).

    Indices are ordered subset-major, then sub-band, then power level.
    Subsets list all single APs first, then all pairs in lexicographic order.
    """

    def __init__(self, n_aps: int, n_subbands: int, power_levels_dbm, multi_connectivity=True):
        self.n_aps = int(n_aps)
        self.n_subbands = int(n_subbands)
        self.power_levels_dbm = tuple(float(p) for p in power_levels_dbm)
        self.multi_connectivity = bool(multi_connectivity)
        subsets = [(k,) for k in range(self.n_aps)]
        if self.multi_connectivity:
            subsets += list(itertools.combinations(range(self.n_aps), 2))
        self.ap_subsets = subsets
        self._subset_index = {s: i for i, s in enumerate(subsets)}
        self._power_index = {p: i for i, p in enumerate(self.power_levels_dbm)}

    def __len__(self):
        return len(self.ap_subsets) * self.n_subbands * len(self.power_levels_dbm)

    @property
    def n_actions(self) -> int:
        return len(self)

    def decode(self, index: int) -> LeaderAction:
        if not 0 <= index < len(self):
            raise IndexError(f"action index {index} out of range [0, {len(self)})")
        n_pow = len(self.power_levels_dbm)
        subset, rest = divmod(int(index), self.n_subbands * n_pow)
        subband, power = divmod(rest, n_pow)
        return LeaderAction(self.ap_subsets[subset], subband, self.power_levels_dbm[power])

    def encode(self, action: LeaderAction) -> int:
        try:
            s = self._subset_index[tuple(action.ap_subset)]
            p = self._power_index[float(action.power_dbm)]
        except KeyError:
            raise ValueError(f"action {action} not representable in this codec") from None
        if not 0 <= action.subband < self.n_subbands:
            raise ValueError(f"sub-band {action.subband} out of range")
        n_pow = len(self.power_levels_dbm)
        return (s * self.n_subbands + action.subband) * n_pow + p

    def descriptor(self) -> dict:
        return {
            "n_aps": self.n_aps,
            "n_subbands": self.n_subbands,
            "power_levels_dbm": list(self.power_levels_dbm),
            "multi_connectivity": self.multi_connectivity,
        }

    @classmethod
    def from_config(cls, config: ExperimentConfig, multi_connectivity=None) -> "ActionCodec":
        multi = config.rl.multi_connectivity if multi_connectivity is None else multi_connectivity
        return cls(len(config.topology.ap_positions), config.n_subbands,
                   config.power_levels_dbm, multi)


# ------------------------------------------------------------------ observations

GAIN_SHIFT_DB = -60.0
GAIN_SCALE = 0.1
IPN_SHIFT_DBM = -70.0
IPN_SCALE = 0.05
PAYLOAD_FLOOR = -1.0


def observation_normalizer(n_aps: int, n_subbands: int) -> dqn.AffineNormalizer:
    shift = np.concatenate([np.full(n_aps, GAIN_SHIFT_DB), np.full(n_subbands, IPN_SHIFT_DBM),
                            np.zeros(4)])
    scale = np.concatenate([np.full(n_aps, GAIN_SCALE), np.full(n_subbands, IPN_SCALE),
                            np.ones(4)])
    return dqn.AffineNormalizer(shift, scale)


@dataclass
class AgentObservation:
    direct_gain_db: np.ndarray
    interference_plus_noise_dbm: np.ndarray
    remaining_payload: float
    remaining_time: float
    episode_index_norm: float
    epsilon: float

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([
            self.direct_gain_db, self.interference_plus_noise_dbm,
            [self.remaining_payload, self.remaining_time, self.episode_index_norm, self.epsilon],
        ])


def encode_observation(env: FactoryEnv, leader: int, episode_feature: float,
                       epsilon_feature: float) -> AgentObservation:
    """Raw (pre-normalization) features of one agent's state.

    Direct gains are taken on the sub-band the agent used in the previous
    slot (sub-band 0 at the start of an episode); interference-plus-noise
    is what the leader measured on every sub-band during the previous slot.
    """
    prev_band = env.last_actions[leader].subband if env.last_actions else 0
    gain = env.direct_gain(leader)[:, prev_band]
    remaining = float(env.remaining_fraction()[leader])
    return AgentObservation(
        direct_gain_db=10.0 * np.log10(gain),
        interference_plus_noise_dbm=channel.watts_to_dbm(env.last_ipn[leader]),
        remaining_payload=max(remaining, PAYLOAD_FLOOR),
        remaining_time=env.remaining_time_fraction(),
        episode_index_norm=float(episode_feature),
        epsilon=float(epsilon_feature),
    )


def observation_dim(n_aps: int, n_subbands: int) -> int:
    return n_aps + n_subbands + 4


def common_reward(outcome: SlotOutcome, reward_u: float = 40.0, rate_unit: float = 1e6) -> float:
    """Sum over leaders of rate (Mbps) while pending, ``reward_u`` once delivered."""
    pending = outcome.remaining_before > 0
    per_leader = np.where(pending, outcome.rate_bps / rate_unit, reward_u)
    return float(per_leader.sum())


# ------------------------------------------------------------------ training


TRAIN_COLUMNS = ("episode", "mean_loss", "sum_reward", "epsilon", "wall_ms")


class MarlTrainer:
    """Runs the centralized-training loop; every agent keeps its own network."""

    def __init__(self, config: ExperimentConfig, multi_connectivity=None):
        self.config = config
        self.rl = config.rl
        self.env = FactoryEnv(config, stream_label="train")
        self.codec = ActionCodec.from_config(config, multi_connectivity)
        self.obs_dim = observation_dim(self.codec.n_aps, self.codec.n_subbands)
        dims = (self.obs_dim, *self.rl.hidden, self.codec.n_actions)
        norm = observation_normalizer(self.codec.n_aps, self.codec.n_subbands)
        streams = self.env.streams
        n_agents = self.env.n_leaders
        self.nets = [
            dqn.QNetwork(dims, streams.generator("init", n), dqn.AffineNormalizer(norm.shift, norm.scale))
            for n in range(n_agents)
        ]
        self.targets = [net.copy() for net in self.nets]
        self.optimizers = [
            dqn.RMSProp(net.params(), self.rl.lr, self.rl.rmsprop_decay, self.rl.rmsprop_eps)
            for net in self.nets
        ]
        self.replays = [dqn.ReplayMemory(self.rl.replay_capacity, self.obs_dim) for _ in range(n_agents)]
        self.schedule = dqn.EpsilonSchedule(
            self.rl.episodes, self.rl.eps_start, self.rl.eps_end, self.rl.anneal_fraction
        )
        self.episode = 0
        self.train_steps = 0

    @property
    def n_agents(self) -> int:
        return len(self.nets)

    def _observe(self, eps: float):
        e_feat = self.episode / self.rl.episodes
        return [encode_observation(self.env, n, e_feat, eps).vector for n in range(self.n_agents)]

    def run_episode(self) -> dict:
        t0 = time.perf_counter()
        e = self.episode
        eps = dqn.epsilon_at(self.schedule, e)
        streams = self.env.streams
        explore = [streams.generator("explore", n, e) for n in range(self.n_agents)]
        self.env.reset_episode(self.rl.train_payload_bytes)
        obs = self._observe(eps)
        total_reward = 0.0
        while not self.env.phase1_done:
            idx = [dqn.select_action(self.nets[n], obs[n], eps, explore[n]) for n in range(self.n_agents)]
            outcome = self.env.phase1_step([self.codec.decode(i) for i in idx])
            reward = common_reward(outcome, self.rl.reward_u)
            total_reward += reward
            nxt = self._observe(eps)
            scaled = reward / self.rl.q_scale
            for n in range(self.n_agents):
                self.replays[n].push(obs[n], idx[n], scaled, nxt[n], self.env.phase1_done)
            obs = nxt
        losses = []
        for _ in range(self.rl.train_steps_per_episode):
            losses.extend(self._train_agents(e))
        self.episode += 1
        return {
            "episode": e,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "sum_reward": total_reward,
            "epsilon": eps,
            "wall_ms": 1000.0 * (time.perf_counter() - t0),
        }

    def _train_agents(self, e: int):
        if len(self.replays[0]) < self.rl.batch_size:
            return []
        losses = []
        for n in range(self.n_agents):
            rng = self.env.streams.generator("replay", n, e, self.train_steps)
            batch = self.replays[n].sample(self.rl.batch_size, rng)
            try:
                loss = dqn.train_step(self.nets[n], self.targets[n], batch, self.optimizers[n], self.rl.gamma)
            except dqn.DivergenceError as exc:
                raise dqn.DivergenceError(f"agent {n}, episode {e}: {exc}") from None
            losses.append(loss)
        self.train_steps += 1
        if self.train_steps % self.rl.target_sync == 0:
            for net, target in zip(self.nets, self.targets):
                target.load_params_from(net)
        return losses

    def train(self, on_episode=None, until: int | None = None) -> list[dict]:
        """Train up to ``until`` episodes (default: the configured total)."""
        stop = self.rl.episodes if until is None else min(until, self.rl.episodes)
        rows = []
        while self.episode < stop:
            row = self.run_episode()
            rows.append(row)
            if on_episode is not None:
                on_episode(row)
        return rows

    # -- persistence ------------------------------------------------------

    def meta(self) -> dqn.CheckpointMeta:
        return dqn.CheckpointMeta(self.codec.descriptor(), self.episode, self.config.config_hash())

    def save_checkpoints(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for n, net in enumerate(self.nets):
            p = directory / f"agent_{n}.qnet"
            dqn.save_checkpoint(p, net, self.meta())
            paths.append(p)
        return paths

    def save_state(self, directory) -> Path:
        """Everything needed to resume training bit-exactly."""
        directory = Path(directory)
        self.save_checkpoints(directory)
        arrays = {}
        for n in range(self.n_agents):
            for i, p in enumerate(self.targets[n].params()):
                arrays[f"target{n}_{i}"] = p
            for i, c in enumerate(self.optimizers[n].cache):
                arrays[f"rms{n}_{i}"] = c
            for key, value in self.replays[n].state_dict().items():
                arrays[f"replay{n}_{key}"] = value
        arrays["leader_positions"] = self.env.leader_positions
        path = directory / "trainer_state.npz"
        np.savez(path, **arrays)
        (directory / "trainer_state.json").write_text(json.dumps({
            "episode": self.episode,
            "train_steps": self.train_steps,
            "env_episode": self.env.episode,
            "config_hash": self.config.config_hash(),
        }))
        return path

    def load_state(self, directory) -> None:
        directory = Path(directory)
        info = json.loads((directory / "trainer_state.json").read_text())
        if info["config_hash"] != self.config.config_hash():
            # the episode budget may differ when extending a run; everything else must match
            log.warning("resuming from a run with a different config hash")
        for n in range(self.n_agents):
            net, _ = dqn.load_checkpoint(directory / f"agent_{n}.qnet", self.nets[n].layer_dims)
            self.nets[n].load_params_from(net)
        with np.load(directory / "trainer_state.npz") as data:
            for n in range(self.n_agents):
                for i, p in enumerate(self.targets[n].params()):
                    p[...] = data[f"target{n}_{i}"]
                for i, c in enumerate(self.optimizers[n].cache):
                    c[...] = data[f"rms{n}_{i}"]
                self.replays[n].load_state_dict({
                    k: data[f"replay{n}_{k}"]
                    for k in ("states", "actions", "rewards", "next_states", "terminals")
                })
            positions = data["leader_positions"]
        self.env.reset_episode(self.rl.train_payload_bytes, episode=info["env_episode"])
        for c, pos in zip(self.env.clusters, positions):
            c.leader_position = pos.copy()
        self.episode = info["episode"]
        self.train_steps = info["train_steps"]


def train(config: ExperimentConfig, multi_connectivity=None, on_episode=None):
    trainer = MarlTrainer(config, multi_connectivity)
    rows = trainer.train(on_episode)
    return trainer, rows


# ------------------------------------------------------------------ evaluation


class MarlPolicy:
    """Greedy joint policy from per-agent Q-networks."""

    def __init__(self, nets, codec: ActionCodec, name="marl", episode_feature=1.0,
                 epsilon_feature=0.02):
        self.nets = list(nets)
        self.codec = codec
        self.name = name
        self.episode_feature = episode_feature
        self.epsilon_feature = epsilon_feature

    def reset(self, env):
        if len(self.nets) != env.n_leaders:
            raise ValueError(f"{len(self.nets)} agent networks for {env.n_leaders} clusters")

    def act(self, env: FactoryEnv):
        actions = []
        for n, net in enumerate(self.nets):
            obs = encode_observation(env, n, self.episode_feature, self.epsilon_feature).vector
            actions.append(self.codec.decode(int(np.argmax(net.forward(obs)))))
        return actions

    @classmethod
    def from_trainer(cls, trainer: MarlTrainer, name=None):
        cfg = trainer.config.rl
        label = name or ("marl2" if trainer.codec.multi_connectivity else "marl1")
        return cls(trainer.nets, trainer.codec, label, cfg.test_episode_feature, cfg.test_epsilon_feature)


class CheckpointMismatch(ValueError):
    pass


def load_marl_policy(directory, config: ExperimentConfig, multi_connectivity=None, name=None):
    codec = ActionCodec.from_config(config, multi_connectivity)
    dims = (observation_dim(codec.n_aps, codec.n_subbands), *config.rl.hidden, codec.n_actions)
    directory = Path(directory)
    nets = []
    for n in range(config.topology.n_clusters):
        path = directory / f"agent_{n}.qnet"
        if not path.exists():
            raise CheckpointMismatch(f"missing checkpoint {path} for cluster {n}")
        try:
            net, meta = dqn.load_checkpoint(path, dims)
        except dqn.CheckpointError as exc:
            raise CheckpointMismatch(str(exc)) from None
        if meta.action_space != codec.descriptor():
            raise CheckpointMismatch(
                f"{path.name}: action space {meta.action_space} does not match {codec.descriptor()}"
            )
        nets.append(net)
    extra = directory / f"agent_{config.topology.n_clusters}.qnet"
    if extra.exists():
        raise CheckpointMismatch(f"{directory} holds more agents than the {config.topology.n_clusters} clusters")
    label = name or ("marl2" if codec.multi_connectivity else "marl1")
    return MarlPolicy(nets, codec, label, config.rl.test_episode_feature, config.rl.test_epsilon_feature)


@dataclass
class EvalSummary:
    payload_bytes: float
    n_clusters: int
    policy_name: str
    delivery_probability: float
    n_episodes: int
    seed: int

    def row(self) -> dict:
        return {
            "payload_bytes": self.payload_bytes,
            "n_clusters": self.n_clusters,
            "policy_name": self.policy_name,
            "delivery_probability": self.delivery_probability,
            "n_episodes": self.n_episodes,
            "seed": self.seed,
        }


def run_episode(env: FactoryEnv, policy, payload_bytes: float, reward_u: float = 40.0,
                members_only: bool = False) -> EpisodeMetrics:
    env.reset_episode(payload_bytes)
    total = 0.0
    while not env.phase1_done:
        outcome = env.phase1_step(policy.act(env))
        total += common_reward(outcome, reward_u)
    env.phase2_run()
    metrics = env.robot_delivery_outcome(members_only)
    metrics.sum_reward = total
    return metrics


def evaluate(policy, config: ExperimentConfig, payload_bytes: float, episodes: int | None = None,
             seed: int | None = None, trace: bool = False):
    """Test-phase episodes (Phase I then Phase II) for one payload size.

    Returns the per-episode metrics and the summary row. All policies see the
    same placements and channel draws for a given seed.
    """
    episodes = config.eval.episodes if episodes is None else episodes
    env = FactoryEnv(config, seed=seed, stream_label="eval", trace=trace)
    policy.reset(env)
    metrics = [
        run_episode(env, policy, payload_bytes, config.rl.reward_u, config.eval.members_only)
        for _ in range(episodes)
    ]
    prob = float(np.mean([m.delivery_probability for m in metrics]))
    summary = EvalSummary(payload_bytes, env.n_leaders, policy.name, prob, episodes,
                          env.streams.seed)
    if trace:
        summary.trace_rows = env.trace_rows
    return metrics, summary
