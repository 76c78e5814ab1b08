"""Experiment configuration.

Defaults reproduce the factory scenario: 40x40 m floor, four APs on a 20 m
grid, 3 GHz carrier, 1 MHz sub-bands, four power levels and a 1 ms budget
split 0.667/0.333 ms between the AP->leader and leader->member phases.

Configs are YAML files whose keys mirror the dataclass tree below. Single
values can be overridden with dotted paths (``rl.gamma=0.9``).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values; the message names the key."""


@dataclass
class PathLossConfig:
    a_coeff: float = 18.7
    b_coeff: float = 46.8
    c_coeff: float = 20.0
    min_distance_m: float = 1.0


@dataclass
class TopologyConfig:
    floor_size_m: tuple[float, float] = (40.0, 40.0)
    ap_positions: tuple[tuple[float, float], ...] = (
        (10.0, 10.0),
        (10.0, 30.0),
        (30.0, 10.0),
        (30.0, 30.0),
    )
    n_clusters: int = 4
    members_per_cluster: int = 4
    # None means n_clusters // 2
    n_subbands: int | None = None
    max_member_distance_m: float = 3.0
    speed_mps: float = 1.0
    # permit layouts that break the M = N/2 sharing regime
    allow_any_subbands: bool = False


@dataclass
class ChannelConfig:
    carrier_freq_ghz: float = 3.0
    path_loss: PathLossConfig = field(default_factory=PathLossConfig)
    d2d_path_loss: PathLossConfig = field(default_factory=PathLossConfig)
    shadowing_std_db: float = 3.0
    bandwidth_hz: float = 1e6
    noise_psd_dbm_per_hz: float = -169.0
    noise_figure_db: float = 5.0


@dataclass
class TimingConfig:
    latency_s: float = 1e-3
    phase1_s: float = 0.667e-3
    phase2_s: float = 0.333e-3
    slot_s: float = 1e-3 / 6


@dataclass
class RLConfig:
    episodes: int = 6000
    # None means the Phase-I slot count
    episode_slots: int | None = None
    train_payload_bytes: float = 100.0
    hidden: tuple[int, ...] = (83, 41, 20)
    lr: float = 1e-3
    gamma: float = 0.9
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    eps_start: float = 1.0
    eps_end: float = 0.02
    anneal_fraction: float = 0.8
    # about 500 episodes: old transitions describe partners' stale policies
    replay_capacity: int = 2_000
    batch_size: int = 256
    train_steps_per_episode: int = 1
    target_sync: int = 100
    reward_u: float = 40.0
    # Q-networks learn returns divided by this factor; greedy actions are unaffected
    q_scale: float = 100.0
    multi_connectivity: bool = True
    test_episode_feature: float = 1.0
    test_epsilon_feature: float = 0.02


@dataclass
class EvalConfig:
    episodes: int = 1000
    members_only: bool = False
    trace: bool = False


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    power_levels_dbm: tuple[float, ...] = (-100.0, 20.0, 25.0, 30.0)
    d2d_power_dbm: float = 20.0
    payload_bytes: tuple[float, ...] = (20.0, 40.0, 60.0, 80.0, 100.0)
    rl: RLConfig = field(default_factory=RLConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    policy: str = "marl2"
    seed: int = 0
    output_dir: str = "runs/default"
    checkpoint_dir: str | None = None

    @property
    def n_subbands(self) -> int:
        t = self.topology
        return t.n_subbands if t.n_subbands is not None else t.n_clusters // 2

    @property
    def phase1_slots(self) -> int:
        return int(round(self.timing.phase1_s / self.timing.slot_s))

    @property
    def phase2_slots(self) -> int:
        return int(round(self.timing.phase2_s / self.timing.slot_s))

    @property
    def episode_slots(self) -> int:
        return self.rl.episode_slots if self.rl.episode_slots is not None else self.phase1_slots

    def validate(self) -> "ExperimentConfig":
        t = self.topology
        if t.n_clusters < 1:
            raise ConfigError("topology.n_clusters must be >= 1")
        if t.members_per_cluster < 0:
            raise ConfigError("topology.members_per_cluster must be >= 0")
        if not t.allow_any_subbands:
            if t.n_clusters % 2 or self.n_subbands != t.n_clusters // 2:
                raise ConfigError(
                    "topology.n_subbands must equal n_clusters/2 with n_clusters even "
                    "(set topology.allow_any_subbands to override)"
                )
        if self.n_subbands < 1:
            raise ConfigError("topology.n_subbands must be >= 1")
        w, h = t.floor_size_m
        if 2 * t.max_member_distance_m >= min(w, h):
            raise ConfigError("topology.max_member_distance_m too large for the floor")
        for x, y in t.ap_positions:
            if not (0 <= x <= w and 0 <= y <= h):
                raise ConfigError(f"topology.ap_positions: ({x}, {y}) outside the floor")
        if len(self.power_levels_dbm) < 1:
            raise ConfigError("power_levels_dbm must not be empty")
        if self.timing.slot_s <= 0:
            raise ConfigError("timing.slot_s must be positive")
        if self.phase1_slots < 1:
            raise ConfigError("timing.phase1_s shorter than one slot")
        if self.rl.reward_u <= 0:
            raise ConfigError("rl.reward_u must be positive")
        if self.rl.q_scale <= 0:
            raise ConfigError("rl.q_scale must be positive")
        if self.rl.replay_capacity < 1 or self.rl.batch_size < 1:
            raise ConfigError("rl.replay_capacity and rl.batch_size must be >= 1")
        if not 0 < self.rl.anneal_fraction <= 1:
            raise ConfigError("rl.anneal_fraction must be in (0, 1]")
        if self.rl.episodes < 1:
            raise ConfigError("rl.episodes must be >= 1")
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"policy: unknown policy {self.policy!r}")
        return self

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


POLICY_NAMES = ("random", "central", "greedy1", "greedy2", "marl1", "marl2")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(value, annotation: str, key: str):
    ann = annotation.replace(" ", "")
    if value is None:
        if "None" in ann:
            return None
        raise ConfigError(f"{key}: null not allowed")
    try:
        if ann.startswith("tuple[tuple[float,float]"):
            return tuple(tuple(float(v) for v in p) for p in value)
        if ann.startswith("tuple[float"):
            if isinstance(value, (int, float)):
                value = [value]
            return tuple(float(v) for v in value)
        if ann.startswith("tuple[int"):
            if isinstance(value, int):
                value = [value]
            return tuple(int(v) for v in value)
        if ann.startswith("bool"):
            if not isinstance(value, bool):
                raise TypeError("expected a boolean")
            return value
        if ann.startswith("int"):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError("expected an integer")
            return int(value)
        if ann.startswith("float"):
            return float(value)
        if ann.startswith("str"):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: invalid value {value!r} ({exc})") from None
    raise ConfigError(f"{key}: unsupported type {annotation}")


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(f"unknown config key: {dotted}")
        f = known[key]
        sub = _SECTIONS.get(f.type if isinstance(f.type, str) else f.type.__name__)
        if sub is not None:
            kwargs[key] = _build(sub, value, dotted + ".")
        elif isinstance(value, dict) and value:
            raise ConfigError(f"unknown config key: {dotted}.{next(iter(value))}")
        else:
            kwargs[key] = _coerce(value, str(f.type), dotted)
    return cls(**kwargs)


_SECTIONS = {
    "PathLossConfig": PathLossConfig,
    "TopologyConfig": TopologyConfig,
    "ChannelConfig": ChannelConfig,
    "TimingConfig": TimingConfig,
    "RLConfig": RLConfig,
    "EvalConfig": EvalConfig,
}


def _set_dotted(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"unknown config key: {dotted}")
        node = nxt
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``"rl.gamma=0.5"`` -> ``("rl.gamma", 0.5)``; values are parsed as YAML."""
    text = text[2:] if text.startswith("--") else text
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def from_dict(data: dict | None, overrides=()) -> ExperimentConfig:
    tree = json.loads(json.dumps(data or {}))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_dotted(tree, key, value)
    return _build(ExperimentConfig, tree).validate()


def load_config(path=None, overrides=()) -> ExperimentConfig:
    data = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return from_dict(data, overrides)
