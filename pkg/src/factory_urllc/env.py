"""Factory floor simulator for the two-phase downlink protocol.

Phase I: APs deliver each cluster's combined payload to its leader over
``phase1_slots`` slots, with co-channel interference between leaders that
pick the same sub-band. Phase II: every leader broadcasts the payload to its
members on its own (slot, sub-band) pair, so there is no interference.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .config import ExperimentConfig
from .streams import SeedStreams

HEADINGS = ("north", "south", "east", "west")
_HEADING_VECTORS = np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class LeaderAction:
    ap_subset: tuple[int, ...]
    subband: int
    power_dbm: float

    def __post_init__(self):
        subset = tuple(sorted(int(k) for k in self.ap_subset))
        if len(subset) not in (1, 2) or len(set(subset)) != len(subset):
            raise ValueError(f"ap_subset must hold 1 or 2 distinct APs, got {self.ap_subset}")
        object.__setattr__(self, "ap_subset", subset)
        if self.subband < 0:
            raise ValueError("subband must be non-negative")


@dataclass
class Topology:
    floor_size_m: tuple[float, float]
    ap_positions: np.ndarray
    n_clusters: int
    members_per_cluster: int
    n_subbands: int
    max_member_distance_m: float

    @property
    def n_aps(self) -> int:
        return len(self.ap_positions)

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Topology":
        t = config.topology
        return cls(
            floor_size_m=tuple(t.floor_size_m),
            ap_positions=np.asarray(t.ap_positions, dtype=float),
            n_clusters=t.n_clusters,
            members_per_cluster=t.members_per_cluster,
            n_subbands=config.n_subbands,
            max_member_distance_m=t.max_member_distance_m,
        )


@dataclass
class ClusterState:
    leader_position: np.ndarray
    member_positions: np.ndarray
    heading: str
    speed_mps: float


@dataclass
class PayloadLedger:
    initial_bits: float
    remaining_bits: np.ndarray
    slot_duration_s: float
    phase1_slots: int
    phase2_slots: int
    delivered_history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, payload_bytes, members_per_cluster, n_clusters, slot_s, p1, p2):
        bits = 8.0 * payload_bytes * (members_per_cluster + 1)
        return cls(bits, np.full(n_clusters, bits), slot_s, p1, p2)


@dataclass
class SlotOutcome:
    sinr: np.ndarray
    rate_bps: np.ndarray
    delivered_bits: np.ndarray
    interference_plus_noise: np.ndarray
    remaining_before: np.ndarray
    remaining_after: np.ndarray


@dataclass
class EpisodeMetrics:
    episode: int
    payload_bytes: float
    leader_success: np.ndarray
    member_success: np.ndarray
    delivery_probability: float
    sum_reward: float = 0.0


# ---------------------------------------------------------------- Phase I


def actions_to_arrays(actions, n_aps: int, power_w=None):
    """Transmit-power matrix ``tx[k, n]`` (watts) and per-leader sub-bands."""
    n = len(actions)
    tx = np.zeros((n_aps, n))
    subbands = np.empty(n, dtype=int)
    for j, a in enumerate(actions):
        p = channel.dbm_to_watts(a.power_dbm) if power_w is None else power_w[j]
        for k in a.ap_subset:
            if not 0 <= k < n_aps:
                raise ValueError(f"AP index {k} out of range")
            tx[k, j] = p
        subbands[j] = a.subband
    return tx, subbands


def phase1_sinr_arrays(tx_power_w, subbands, gains, noise_w):
    """SINR at every leader plus the interference-plus-noise on every sub-band.

    ``gains[k, n, m]`` is the composite AP k -> leader n gain on sub-band m.
    Signals from the serving APs add coherently in power; every AP serving
    another leader on the same sub-band counts as interference.
    """
    n_aps, n_leaders, n_sub = gains.shape
    if tx_power_w.shape != (n_aps, n_leaders) or len(subbands) != n_leaders:
        raise ValueError("one action per leader required")
    if np.any(subbands < 0) or np.any(subbands >= n_sub):
        raise ValueError("sub-band index out of range")
    # rx[j, n, m]: power meant for leader j that reaches leader n on sub-band m
    rx = np.einsum("kj,knm->jnm", tx_power_w, gains)
    on_band = subbands[:, None] == np.arange(n_sub)[None, :]
    others = ~np.eye(n_leaders, dtype=bool)
    # summing without the own term avoids cancellation when the signal dwarfs the noise
    ipn = np.einsum("jm,jn,jnm->nm", on_band, others, rx) + noise_w
    idx = np.arange(n_leaders)
    signal = rx[idx, idx, subbands]
    return signal / ipn[idx, subbands], ipn


def phase1_sinr(actions, gains, noise_w):
    """SINR per leader for a joint action profile (list of :class:`LeaderAction`)."""
    if len(actions) != gains.shape[1]:
        raise ValueError(f"expected {gains.shape[1]} actions, got {len(actions)}")
    tx, subbands = actions_to_arrays(actions, gains.shape[0])
    sinr, _ = phase1_sinr_arrays(tx, subbands, gains, noise_w)
    return sinr


def shannon_rate(sinr, bandwidth_hz):
    return bandwidth_hz * np.log2(1.0 + sinr)


# ---------------------------------------------------------------- Phase II


def phase2_schedule(n_clusters: int, n_subbands: int, phase2_slots: int):
    """Row-major assignment of clusters to (slot, sub-band) pairs."""
    capacity = n_subbands * phase2_slots
    if n_clusters > capacity:
        raise ValueError(
            f"infeasible Phase-II schedule: {n_clusters} clusters but only "
            f"{phase2_slots} slots x {n_subbands} sub-bands"
        )
    grid = itertools.product(range(phase2_slots), range(n_subbands))
    return [pair for _, pair in zip(range(n_clusters), grid)]


def phase2_sinr(schedule, d2d_gains, d2d_power_w, noise_w):
    """SINR at every member, and the co-channel interference it sees.

    ``d2d_gains[s][i, n, o, m]`` is the leader i -> member (n, o) composite gain
    on sub-band m during Phase-II slot s.
    """
    n_leaders = len(schedule)
    sinr = None
    interference = None
    for n, (slot, sb) in enumerate(schedule):
        g = d2d_gains[slot]
        if sinr is None:
            sinr = np.zeros(g.shape[1:3])
            interference = np.zeros(g.shape[1:3])
        for i in range(n_leaders):
            if i != n and schedule[i] == (slot, sb):
                interference[n] += d2d_power_w * g[i, n, :, sb]
        sinr[n] = d2d_power_w * g[n, n, :, sb] / (interference[n] + noise_w)
    return sinr, interference


def phase2_run(schedule, d2d_gains, d2d_power_w, noise_w, bandwidth_hz, slot_s,
               payload_bits, leader_success):
    """Per-member success: full combined payload in the one assigned slot."""
    sinr, _ = phase2_sinr(schedule, d2d_gains, d2d_power_w, noise_w)
    delivered = slot_s * shannon_rate(sinr, bandwidth_hz)
    ok = delivered >= payload_bits
    return ok & np.asarray(leader_success, dtype=bool)[:, None]


def robot_delivery_probability(leader_success, member_success, members_only=False):
    leader_success = np.asarray(leader_success, dtype=bool)
    member_success = np.asarray(member_success, dtype=bool)
    if members_only:
        return float(member_success.mean()) if member_success.size else 1.0
    total = leader_success.size + member_success.size
    return float((leader_success.sum() + member_success.sum()) / total)


# ---------------------------------------------------------------- environment


class FactoryEnv:
    """Clustered robots on a factory floor served by fixed APs.

    ``stream_label`` separates the randomness of e.g. training and
    evaluation runs; the initial robot placement depends only on the seed.
    """

    def __init__(self, config: ExperimentConfig, seed: int | None = None,
                 stream_label: str = "train", trace: bool = False):
        self.config = config
        self.topology = Topology.from_config(config)
        self.streams = SeedStreams(config.seed if seed is None else seed)
        self.stream_label = stream_label
        ch = config.channel
        self.pl_ap = channel.PathLossParams(ch.carrier_freq_ghz, **_pl_kwargs(ch.path_loss))
        self.pl_d2d = channel.PathLossParams(ch.carrier_freq_ghz, **_pl_kwargs(ch.d2d_path_loss))
        self.shadowing = channel.ShadowingParams(ch.shadowing_std_db)
        self.noise = channel.NoiseModel(ch.noise_psd_dbm_per_hz, ch.noise_figure_db, ch.bandwidth_hz)
        self.noise_w = float(channel.dbm_to_watts(channel.noise_power_dbm(self.noise)))
        self.bandwidth_hz = ch.bandwidth_hz
        self.slot_s = config.timing.slot_s
        self.phase1_slots = config.episode_slots
        self.phase2_slots = config.phase2_slots
        self.power_levels_dbm = np.asarray(config.power_levels_dbm, dtype=float)
        self.d2d_power_w = float(channel.dbm_to_watts(config.d2d_power_dbm))
        self.step_m = config.topology.speed_mps * config.timing.latency_s
        self.trace_enabled = trace
        self.trace_rows: list[dict] = []

        topo = self.topology
        self.n_aps = topo.n_aps
        self.n_leaders = topo.n_clusters
        self.n_members = topo.members_per_cluster
        self.n_subbands = topo.n_subbands
        self.schedule = phase2_schedule(self.n_leaders, self.n_subbands, self.phase2_slots)

        self.episode = -1
        self.slot = 0
        self.clusters: list[ClusterState] = []
        self.ledger: PayloadLedger | None = None
        self.phase1_done = False
        self.phase2_done = False

    # -- positions ------------------------------------------------------

    @property
    def leader_positions(self) -> np.ndarray:
        return np.array([c.leader_position for c in self.clusters])

    @property
    def member_positions(self) -> np.ndarray:
        return np.array([c.member_positions for c in self.clusters]).reshape(
            self.n_leaders, self.n_members, 2
        )

    def _inner_box(self):
        d = self.topology.max_member_distance_m
        w, h = self.topology.floor_size_m
        return np.array([d, d]), np.array([w - d, h - d])

    def _place_leaders(self):
        lo, hi = self._inner_box()
        rng = self.streams.generator("placement")
        pos = rng.uniform(lo, hi, size=(self.n_leaders, 2))
        speed = self.config.topology.speed_mps
        self.clusters = [
            ClusterState(pos[n].copy(), np.zeros((self.n_members, 2)), HEADINGS[0], speed)
            for n in range(self.n_leaders)
        ]

    def _move_leaders(self):
        lo, hi = self._inner_box()
        rng = self.streams.generator(self.stream_label + "/mobility", self.episode)
        for c in self.clusters:
            choice = int(rng.integers(4))
            nxt = c.leader_position + self.step_m * _HEADING_VECTORS[choice]
            if np.any(nxt < lo) or np.any(nxt > hi):
                moves = c.leader_position + self.step_m * _HEADING_VECTORS
                valid = np.flatnonzero(np.all((moves >= lo) & (moves <= hi), axis=1))
                choice = int(valid[rng.integers(len(valid))])
                nxt = moves[choice]
            c.leader_position = nxt
            c.heading = HEADINGS[choice]

    def _place_members(self):
        rng = self.streams.generator(self.stream_label + "/members", self.episode)
        d = self.topology.max_member_distance_m
        r = d * np.sqrt(rng.random((self.n_leaders, self.n_members)))
        theta = rng.uniform(0.0, 2 * np.pi, size=(self.n_leaders, self.n_members))
        offsets = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        for n, c in enumerate(self.clusters):
            c.member_positions = c.leader_position + offsets[n]

    # -- channels -------------------------------------------------------

    def _update_large_scale(self):
        rng = self.streams.generator(self.stream_label + "/shadowing", self.episode)
        leaders = self.leader_positions
        dist = np.linalg.norm(self.topology.ap_positions[:, None, :] - leaders[None, :, :], axis=-1)
        pl = channel.path_loss_db(self.pl_ap, dist)
        shadow = channel.draw_shadowing_db(self.shadowing, rng, size=pl.shape)
        self.large_ap = channel.large_scale_linear(pl, shadow)

        members = self.member_positions
        dd = np.linalg.norm(leaders[:, None, None, :] - members[None, :, :, :], axis=-1)
        pl_d = channel.path_loss_db(self.pl_d2d, dd)
        shadow_d = channel.draw_shadowing_db(self.shadowing, rng, size=pl_d.shape)
        self.large_d2d = channel.large_scale_linear(pl_d, shadow_d)

    def _draw_fading(self, slot: int):
        rng = self.streams.generator(self.stream_label + "/fading", self.episode, slot)
        self.fading_ap = channel.draw_rayleigh_power(
            rng, size=(self.n_aps, self.n_leaders, self.n_subbands)
        )
        self.gains = self.large_ap[:, :, None] * self.fading_ap

    def _d2d_gains(self, phase2_slot: int):
        rng = self.streams.generator(
            self.stream_label + "/d2d_fading", self.episode, phase2_slot
        )
        fading = channel.draw_rayleigh_power(
            rng, size=(self.n_leaders, self.n_leaders, self.n_members, self.n_subbands)
        )
        return self.large_d2d[..., None] * fading

    # -- episode API -----------------------------------------------------

    def reset_episode(self, payload_bytes: float, episode: int | None = None):
        """Start a new episode; positions and large-scale fading are refreshed."""
        first = not self.clusters
        self.episode = self.episode + 1 if episode is None else int(episode)
        if first:
            self._place_leaders()
        else:
            self._move_leaders()
        self._place_members()
        self._update_large_scale()
        self.payload_bytes = float(payload_bytes)
        self.ledger = PayloadLedger.fresh(
            payload_bytes, self.n_members, self.n_leaders,
            self.slot_s, self.phase1_slots, self.phase2_slots,
        )
        self.slot = 0
        self.phase1_done = False
        self.phase2_done = False
        self.last_ipn = np.full((self.n_leaders, self.n_subbands), self.noise_w)
        self.last_actions = None
        self.leader_success = None
        self.member_success = None
        self._draw_fading(0)
        return self

    def direct_gain(self, leader: int) -> np.ndarray:
        """Composite gain from every AP to ``leader`` on every sub-band, (K, M)."""
        return self.gains[:, leader, :]

    def remaining_fraction(self) -> np.ndarray:
        if self.ledger.initial_bits == 0:
            return np.zeros(self.n_leaders)
        return self.ledger.remaining_bits / self.ledger.initial_bits

    def remaining_time_fraction(self) -> float:
        return (self.phase1_slots - self.slot) / self.phase1_slots

    def phase1_step(self, actions) -> SlotOutcome:
        if self.ledger is None:
            raise RuntimeError("reset_episode() must be called first")
        if self.phase1_done:
            raise RuntimeError("Phase I already finished for this episode")
        if len(actions) != self.n_leaders:
            raise ValueError(f"expected {self.n_leaders} actions, got {len(actions)}")
        tx, subbands = actions_to_arrays(actions, self.n_aps)
        sinr, ipn = phase1_sinr_arrays(tx, subbands, self.gains, self.noise_w)
        rate = shannon_rate(sinr, self.bandwidth_hz)
        delivered = self.slot_s * rate
        before = self.ledger.remaining_bits.copy()
        self.ledger.remaining_bits = before - delivered
        self.ledger.delivered_history.append(delivered)
        outcome = SlotOutcome(sinr, rate, delivered, ipn, before, self.ledger.remaining_bits.copy())
        if self.trace_enabled:
            self._record_trace(actions, outcome)
        self.last_ipn = ipn
        self.last_actions = list(actions)
        self.slot += 1
        if self.slot >= self.phase1_slots:
            self.phase1_done = True
            self.leader_success = self.ledger.remaining_bits <= 0
        else:
            self._draw_fading(self.slot)
        return outcome

    def phase2_run(self) -> np.ndarray:
        if not self.phase1_done:
            raise RuntimeError("Phase II needs a finished Phase I")
        gains = [self._d2d_gains(s) for s in range(self.phase2_slots)]
        self.member_success = phase2_run(
            self.schedule, gains, self.d2d_power_w, self.noise_w, self.bandwidth_hz,
            self.slot_s, self.ledger.initial_bits, self.leader_success,
        )
        self.phase2_done = True
        return self.member_success

    def robot_delivery_outcome(self, members_only: bool = False) -> EpisodeMetrics:
        if not self.phase2_done:
            raise RuntimeError("both phases must be complete")
        prob = robot_delivery_probability(self.leader_success, self.member_success, members_only)
        return EpisodeMetrics(
            self.episode, self.payload_bytes, self.leader_success.copy(),
            self.member_success.copy(), prob,
        )

    def _record_trace(self, actions, outcome: SlotOutcome):
        for n, a in enumerate(actions):
            sinr_db = 10 * np.log10(outcome.sinr[n]) if outcome.sinr[n] > 0 else -np.inf
            self.trace_rows.append({
                "episode": self.episode,
                "slot": self.slot,
                "leader": n,
                "aps": "|".join(str(k) for k in a.ap_subset),
                "subband": a.subband,
                "power_dbm": a.power_dbm,
                "sinr_db": sinr_db,
                "rate_mbps": outcome.rate_bps[n] / 1e6,
                "remaining_bits": outcome.remaining_after[n],
            })


TRACE_COLUMNS = (
    "episode", "slot", "leader", "aps", "subband", "power_dbm",
    "sinr_db", "rate_mbps", "remaining_bits",
)


def _pl_kwargs(cfg):
    return {
        "a_coeff": cfg.a_coeff,
        "b_coeff": cfg.b_coeff,
        "c_coeff": cfg.c_coeff,
        "min_distance_m": cfg.min_distance_m,
    }
