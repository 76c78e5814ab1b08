"""Deep Q-learning in plain numpy.

A ReLU multilayer perceptron with hand-written backpropagation, an RMSProp
optimizer, a FIFO replay buffer and the epsilon-greedy / TD-target pieces
of a DQN agent.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"FQNET\x00"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class AffineNormalizer:
    """Fixed ``(x - shift) * scale`` applied to raw observations."""

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "AffineNormalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, x):
        return (np.asarray(x, dtype=float) - self.shift) * self.scale

    def to_dict(self):
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["shift"], dtype=float), np.asarray(d["scale"], dtype=float))


class QNetwork:
    """MLP: affine + ReLU on hidden layers, identity on the output layer."""

    def __init__(self, layer_dims, rng: np.random.Generator | None = None,
                 normalizer: AffineNormalizer | None = None):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"bad layer dims {layer_dims}")
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self.normalizer = normalizer or AffineNormalizer.identity(self.layer_dims[0])

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_actions(self) -> int:
        return self.layer_dims[-1]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "QNetwork":
        other = QNetwork(self.layer_dims, normalizer=AffineNormalizer(
            self.normalizer.shift.copy(), self.normalizer.scale.copy()))
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def load_params_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def _forward(self, obs):
        x = np.asarray(obs, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"observation has dim {x.shape[-1]}, network expects {self.input_dim}")
        a = self.normalizer(x)
        cache = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.maximum(z, 0.0)
            cache.append(a)
        return a, cache, single

    def forward(self, obs):
        q, _, single = self._forward(obs)
        return q[0] if single else q

    __call__ = forward

    def backward(self, cache, grad_out):
        """Parameter gradients given dLoss/dOutput, in ``params()`` order."""
        grads = [None] * (2 * len(self.weights))
        delta = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache[i] > 0)
        return grads

    def loss_and_grads(self, states, actions, targets):
        """Mean squared TD error on the taken actions and its gradients."""
        q, cache, _ = self._forward(np.atleast_2d(states))
        idx = np.arange(len(actions))
        err = q[idx, actions] - targets
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            return loss, None
        grad_out = np.zeros_like(q)
        grad_out[idx, actions] = 2.0 * err / len(actions)
        return loss, self.backward(cache, grad_out)


class RMSProp:
    def __init__(self, params, lr=1e-3, decay=0.9, eps=1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.cache = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, c in zip(params, grads, self.cache):
            c *= self.decay
            c += (1.0 - self.decay) * g * g
            p -= self.lr * g / (np.sqrt(c) + self.eps)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        if np.shape(self.state) != np.shape(self.next_state):
            raise ValueError("state and next_state must have the same shape")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions):
        return cls(
            np.array([t.state for t in transitions], dtype=float),
            np.array([t.action for t in transitions], dtype=int),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([t.next_state for t in transitions], dtype=float),
            np.array([t.terminal for t in transitions], dtype=bool),
        )


class ReplayMemory:
    """Fixed-capacity ring buffer; the oldest transition is evicted first."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, state, action, reward, next_state, terminal=False):
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add(self, t: Transition):
        self.push(t.state, t.action, t.reward, t.next_state, t.terminal)

    def _ordered_index(self):
        start = (self._next - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def _take(self, idx) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx])

    def contents(self) -> Batch:
        """Everything stored, oldest first."""
        return self._take(self._ordered_index())

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        idx = rng.integers(self.size, size=batch_size)
        return self._take(self._ordered_index()[idx])

    def state_dict(self):
        b = self.contents()
        return {"states": b.states, "actions": b.actions, "rewards": b.rewards,
                "next_states": b.next_states, "terminals": b.terminals}

    def load_state_dict(self, d):
        self.size = 0
        self._next = 0
        for row in zip(d["states"], d["actions"], d["rewards"], d["next_states"], d["terminals"]):
            self.push(*row)


@dataclass
class EpsilonSchedule:
    total_episodes: int
    eps_start: float = 1.0
    eps_end: float = 0.02
    anneal_fraction: float = 0.8

    def __call__(self, episode: int) -> float:
        return epsilon_at(self, episode)


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    """Linear decay over the first ``anneal_fraction`` of training, then flat."""
    if episode < 0:
        raise ValueError("episode index must be non-negative")
    horizon = schedule.anneal_fraction * schedule.total_episodes
    if horizon <= 0:
        return schedule.eps_end
    frac = min(episode / horizon, 1.0)
    eps = schedule.eps_start - (schedule.eps_start - schedule.eps_end) * frac
    return float(max(eps, schedule.eps_end))


def td_targets(batch: Batch, target_net: QNetwork, gamma: float) -> np.ndarray:
    if len(batch) == 0:
        raise ValueError("empty batch")
    next_q = target_net.forward(batch.next_states).max(axis=1)
    return batch.rewards + gamma * next_q * (~batch.terminals)


def train_step(net: QNetwork, target_net: QNetwork, batch: Batch, optimizer: RMSProp,
               gamma: float) -> float:
    targets = td_targets(batch, target_net, gamma)
    loss, grads = net.loss_and_grads(batch.states, batch.actions, targets)
    if not np.isfinite(loss):
        raise DivergenceError(
            f"non-finite TD loss ({loss}); max |target| = {np.max(np.abs(targets)):.3g}"
        )
    optimizer.step(net.params(), grads)
    return loss


def select_action(net: QNetwork, obs, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    explore = rng.random() < epsilon
    if explore:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(net.forward(obs)))


# ------------------------------------------------------------------ checkpoints


@dataclass
class CheckpointMeta:
    action_space: dict = field(default_factory=dict)
    episodes_trained: int = 0
    config_hash: str = ""


def save_checkpoint(path, net: QNetwork, meta: CheckpointMeta | None = None) -> None:
    meta = meta or CheckpointMeta()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "layer_dims": list(net.layer_dims),
        "action_space": meta.action_space,
        "normalization": net.normalizer.to_dict(),
        "episodes_trained": int(meta.episodes_trained),
        "config_hash": meta.config_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path, expected_dims=None) -> tuple[QNetwork, CheckpointMeta]:
    data = Path(path).read_bytes()
    name = Path(path).name
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{name}: not a Q-network checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + 8:
        raise CheckpointError(f"{name}: truncated header")
    version, hlen = struct.unpack_from("<II", data, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{name}: unsupported format version {version}")
    off += 8
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{name}: corrupt header ({exc})") from None
    off += hlen
    dims = tuple(header["layer_dims"])
    if expected_dims is not None and tuple(expected_dims) != dims:
        raise CheckpointError(f"{name}: layer dims {dims} do not match expected {tuple(expected_dims)}")
    net = QNetwork(dims, normalizer=AffineNormalizer.from_dict(header["normalization"]))
    n_values = sum(p.size for p in net.params())
    if len(data) - off != 8 * n_values:
        raise CheckpointError(
            f"{name}: expected {8 * n_values} bytes of parameters, found {len(data) - off}"
        )
    for p in net.params():
        p[...] = np.frombuffer(data, dtype="<f8", count=p.size, offset=off).reshape(p.shape)
        off += 8 * p.size
    if not all(np.all(np.isfinite(p)) for p in net.params()):
        raise CheckpointError(f"{name}: non-finite parameters")
    meta = CheckpointMeta(header.get("action_space", {}), header.get("episodes_trained", 0),
                          header.get("config_hash", ""))
    return net, meta
