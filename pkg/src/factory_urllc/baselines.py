"""Benchmark allocators and the common policy interface.

A policy exposes ``name``, ``reset(env)`` and ``act(env) -> list[LeaderAction]``;
``act`` sees the environment's current channel state.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import agents, channel
from .env import FactoryEnv, LeaderAction, phase1_sinr_arrays


class PolicyKind(str, Enum):
    random_nearest = "random"
    centralized_exhaustive = "central"
    greedy_single = "greedy1"
    greedy_multi = "greedy2"
    marl_single = "marl1"
    marl_multi = "marl2"


def nearest_aps(leader_positions, ap_positions) -> np.ndarray:
    """Index of the closest AP per leader; ties go to the lowest index."""
    d = np.linalg.norm(np.asarray(ap_positions)[None, :, :] - np.asarray(leader_positions)[:, None, :], axis=-1)
    return np.argmin(d, axis=1)


def sum_rate(tx, subbands, gains, noise_w, bandwidth_hz) -> float:
    sinr, _ = phase1_sinr_arrays(tx, subbands, gains, noise_w)
    return float(np.sum(bandwidth_hz * np.log2(1.0 + sinr)))


def random_nearest(env: FactoryEnv, rng: np.random.Generator):
    aps = nearest_aps(env.leader_positions, env.topology.ap_positions)
    bands = rng.integers(env.n_subbands, size=env.n_leaders)
    powers = rng.integers(len(env.power_levels_dbm), size=env.n_leaders)
    return [
        LeaderAction((int(aps[n]),), int(bands[n]), float(env.power_levels_dbm[powers[n]]))
        for n in range(env.n_leaders)
    ]


def _profile_rates(aps, gains, noise_w, bandwidth_hz, bands, powers_w):
    """Sum-rate of many (sub-band, power) profiles at once.

    ``bands`` and ``powers_w`` have shape (profiles, leaders); leader j is
    served only by AP ``aps[j]``.
    """
    n = len(aps)
    # h[j, n, m]: gain from leader j's AP to leader n
    h = gains[aps, :, :]
    band_n = bands[:, None, :]  # (P, 1, n) sub-band of the receiving leader
    h_sel = np.take_along_axis(
        np.broadcast_to(h[None], (bands.shape[0], n, n, h.shape[2])),
        np.broadcast_to(band_n[..., None], (bands.shape[0], n, n, 1)),
        axis=3,
    )[..., 0]
    idx = np.arange(n)
    signal = powers_w * h_sel[:, idx, idx]
    cochannel = (bands[:, :, None] == bands[:, None, :]) & ~np.eye(n, dtype=bool)
    interference = np.einsum("pj,pjn->pn", powers_w, h_sel * cochannel)
    rates = bandwidth_hz * np.log2(1.0 + signal / (interference + noise_w))
    return rates.sum(axis=1)


MAX_ENUMERATION = 10 ** 6
MAX_SWEEPS = 50


def centralized_exhaustive(env: FactoryEnv, rng: np.random.Generator | None = None,
                           max_profiles: int = MAX_ENUMERATION, chunk: int = 65536):
    """Nearest AP per leader; joint (sub-band, power) maximizing the sum-rate.

    Exact enumeration when the joint space is small enough, otherwise
    best-response coordinate ascent from a random profile.
    """
    aps = nearest_aps(env.leader_positions, env.topology.ap_positions)
    gains = env.gains
    levels_w = channel.dbm_to_watts(env.power_levels_dbm)
    n, m, p = env.n_leaders, env.n_subbands, len(levels_w)
    per_leader = m * p
    if per_leader ** n <= max_profiles:
        best_val, best_idx = -np.inf, 0
        total = per_leader ** n
        for start in range(0, total, chunk):
            flat = np.arange(start, min(start + chunk, total))
            choice = _digits(flat, per_leader, n)
            vals = _profile_rates(aps, gains, env.noise_w, env.bandwidth_hz,
                                  choice // p, levels_w[choice % p])
            i = int(np.argmax(vals))
            # strict > keeps the lowest profile index on ties
            if vals[i] > best_val:
                best_val, best_idx = vals[i], start + i
        choice = _digits(np.array([best_idx]), per_leader, n)[0]
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        choice = best_response(aps, gains, env.noise_w, env.bandwidth_hz, levels_w, m, rng)
    return [
        LeaderAction((int(aps[j]),), int(choice[j] // p), float(env.power_levels_dbm[choice[j] % p]))
        for j in range(n)
    ]


def _digits(flat, base, n):
    """Profile index -> per-leader choice, leader 0 most significant."""
    out = np.empty((len(flat), n), dtype=int)
    rem = flat.copy()
    for j in range(n - 1, -1, -1):
        rem, out[:, j] = np.divmod(rem, base)
    return out


def best_response(aps, gains, noise_w, bandwidth_hz, levels_w, n_subbands, rng,
                  max_sweeps=MAX_SWEEPS):
    n, p = len(aps), len(levels_w)
    per_leader = n_subbands * p
    choice = rng.integers(per_leader, size=n)
    options = np.arange(per_leader)
    for _ in range(max_sweeps):
        changed = False
        for j in range(n):
            profiles = np.repeat(choice[None, :], per_leader, axis=0)
            profiles[:, j] = options
            vals = _profile_rates(aps, gains, noise_w, bandwidth_hz, profiles // p, levels_w[profiles % p])
            best = int(np.argmax(vals))
            if vals[best] > vals[choice[j]] * (1 + 1e-12) and best != choice[j]:
                choice[j] = best
                changed = True
        if not changed:
            break
    return choice


def greedy_single(env: FactoryEnv):
    """Strongest (AP, sub-band) link per leader at the top power level."""
    p_max = float(np.max(env.power_levels_dbm))
    actions = []
    for n in range(env.n_leaders):
        g = env.direct_gain(n)  # (K, M); argmax picks the lowest (AP, sub-band) on ties
        k, m = np.unravel_index(int(np.argmax(g)), g.shape)
        actions.append(LeaderAction((int(k),), int(m), p_max))
    return actions


def greedy_multi(env: FactoryEnv):
    """Two strongest APs on the leader's best sub-band, both at the top power level."""
    p_max = float(np.max(env.power_levels_dbm))
    actions = []
    for n in range(env.n_leaders):
        g = env.direct_gain(n)
        if g.shape[0] < 2:
            raise ValueError("greedy multi-connectivity needs at least two APs")
        best_k, m = np.unravel_index(int(np.argmax(g)), g.shape)
        order = np.argsort(-g[:, m], kind="stable")
        pair = tuple(sorted(int(k) for k in order[:2]))
        actions.append(LeaderAction(pair, int(m), p_max))
    return actions


class _FnPolicy:
    def __init__(self, name, fn, needs_rng=False, seed=0):
        self.name = name
        self._fn = fn
        self._needs_rng = needs_rng
        self._seed = seed
        self._rng = None

    def reset(self, env):
        self._rng = env.streams.generator("policy/" + self.name, self._seed)

    def act(self, env):
        if self._rng is None:
            self.reset(env)
        return self._fn(env, self._rng) if self._needs_rng else self._fn(env)


def make_policy(kind, config=None, checkpoint_dir=None):
    kind = PolicyKind(kind)
    if kind is PolicyKind.random_nearest:
        return _FnPolicy(kind.value, random_nearest, needs_rng=True)
    if kind is PolicyKind.centralized_exhaustive:
        return _FnPolicy(kind.value, centralized_exhaustive, needs_rng=True)
    if kind is PolicyKind.greedy_single:
        return _FnPolicy(kind.value, greedy_single)
    if kind is PolicyKind.greedy_multi:
        return _FnPolicy(kind.value, greedy_multi)
    if checkpoint_dir is None:
        raise ValueError(f"policy {kind.value} needs a checkpoint directory")
    multi = kind is PolicyKind.marl_multi
    return agents.load_marl_policy(checkpoint_dir, config, multi_connectivity=multi, name=kind.value)
