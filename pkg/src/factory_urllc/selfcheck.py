"""Fast consistency checks of the numerical core against slow references.

Each check returns ``(passed, detail)``. The references here are written as
plain loops so they share no code with the vectorized implementations.
"""
from __future__ import annotations

import itertools
import tempfile
import time
from pathlib import Path

import numpy as np

from . import dqn
from .agents import ActionCodec
from .env import LeaderAction, phase1_sinr, phase2_schedule

LEVELS = (-100.0, 20.0, 25.0, 30.0)


def _loop_sinr(actions, gains, noise_w):
    n_aps, n_leaders, _ = gains.shape
    watts = lambda dbm: 10 ** ((dbm - 30) / 10)
    out = []
    for n in range(n_leaders):
        m = actions[n].subband
        signal = sum(watts(actions[n].power_dbm) * gains[k, n, m] for k in actions[n].ap_subset)
        interf = 0.0
        for j in range(n_leaders):
            if j != n and actions[j].subband == m:
                for k in actions[j].ap_subset:
                    interf += watts(actions[j].power_dbm) * gains[k, n, m]
        out.append(signal / (interf + noise_w))
    return np.array(out)


def check_sinr(instances=1000, seed=0):
    rng = np.random.default_rng(seed)
    noise = 10 ** ((-104 - 30) / 10)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 4))
        gains = rng.exponential(size=(4, n, 2)) * 10 ** rng.uniform(-8, -4, size=(4, n, 1))
        acts = []
        for _ in range(n):
            subset = tuple(int(k) for k in rng.choice(4, size=int(rng.integers(1, 3)), replace=False))
            acts.append(LeaderAction(subset, int(rng.integers(2)), float(rng.choice(LEVELS))))
        ref = _loop_sinr(acts, gains, noise)
        got = phase1_sinr(acts, gains, noise)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.abs(ref))))
    return worst < 1e-9, f"max rel err {worst:.1e} over {instances} instances"


def check_gradients(networks=100, seed=0, h=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(networks):
        dims = tuple(int(d) for d in rng.integers(1, 6, size=int(rng.integers(2, 4)) + 1))
        net = dqn.QNetwork(dims, rng)
        for b in net.biases:
            # nonzero biases keep pre-activations off the ReLU kink at exactly 0
            b[...] = rng.normal(scale=0.5, size=b.shape)
        states = rng.normal(size=(4, dims[0]))
        actions = rng.integers(dims[-1], size=4)
        targets = rng.normal(size=4)
        _, grads = net.loss_and_grads(states, actions, targets)

        def loss():
            q = net.forward(states)
            return np.mean((q[np.arange(4), actions] - targets) ** 2)

        for p, g in zip(net.params(), grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = loss()
                flat[i] = old - h
                down = loss()
                flat[i] = old
                num = (up - down) / (2 * h)
                # the 1e-6 floor keeps roundoff on near-zero gradients from counting as error
                err = abs(num - gflat[i]) / max(abs(num) + abs(gflat[i]), 1e-6)
                worst = max(worst, err)
    return worst < 1e-4, f"max rel err {worst:.1e} over {networks} networks"


def check_codec():
    sizes = []
    for k, m, multi in itertools.product((2, 4), (1, 2, 4), (True, False)):
        codec = ActionCodec(k, m, LEVELS, multi)
        triples = {(a.ap_subset, a.subband, a.power_dbm) for a in map(codec.decode, range(len(codec)))}
        if len(triples) != len(codec):
            return False, f"duplicate actions for K={k} M={m}"
        if any(codec.encode(codec.decode(i)) != i for i in range(len(codec))):
            return False, f"round trip broken for K={k} M={m}"
        sizes.append(len(codec))
    ok = len(ActionCodec(4, 2, LEVELS)) == 80
    return ok, f"{len(sizes)} codecs round-trip; K=4 M=2 P=4 -> {len(ActionCodec(4, 2, LEVELS))} actions"


def check_schedule():
    for n in range(1, 17):
        m = (n + 1) // 2
        sched = phase2_schedule(n, m, 2)
        if len(set(sched)) != n or any(not (0 <= s < 2 and 0 <= b < m) for s, b in sched):
            return False, f"overlapping or out-of-range schedule for N={n}"
    return True, "N=1..16: every cluster owns a distinct (slot, sub-band)"


def check_checkpoint(paths=()):
    """Round trip of a fresh network, rejection of a corrupted file, then ``paths``."""
    net = dqn.QNetwork((10, 8, 5), np.random.default_rng(0))
    with tempfile.TemporaryDirectory() as tmp:
        good = Path(tmp) / "good.qnet"
        dqn.save_checkpoint(good, net)
        loaded, _ = dqn.load_checkpoint(good)
        if any(not np.array_equal(a, b) for a, b in zip(net.params(), loaded.params())):
            return False, "round trip changed parameters"
        bad = Path(tmp) / "bad.qnet"
        bad.write_bytes(good.read_bytes()[:-7])
        try:
            dqn.load_checkpoint(bad)
            return False, "truncated checkpoint was accepted"
        except dqn.CheckpointError:
            pass
    for p in paths:
        try:
            dqn.load_checkpoint(p)
        except (dqn.CheckpointError, OSError) as exc:
            return False, f"{p}: {exc}"
    extra = f"; {len(paths)} user checkpoint(s) valid" if paths else ""
    return True, "round trip exact, corruption detected" + extra


def run(checkpoints=(), out=print) -> bool:
    checks = [
        ("sinr-brute-force", check_sinr),
        ("gradient-check", check_gradients),
        ("codec-bijection", check_codec),
        ("schedule-orthogonality", check_schedule),
        ("checkpoint-io", lambda: check_checkpoint(checkpoints)),
    ]
    ok_all = True
    out(f"{'check':<24} {'result':<6} {'time':>7}  detail")
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        out(f"{name:<24} {'PASS' if ok else 'FAIL':<6} {time.perf_counter() - t0:6.2f}s  {detail}")
    return ok_all
