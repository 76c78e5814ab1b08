"""A single Phase-I slot on the factory floor, computed by hand.

Places four clusters, prints the large-scale picture, then compares a few
hand-written allocations against the benchmark allocators on the same slot.
"""
import numpy as np

from factory_urllc import baselines, channel
from factory_urllc.config import from_dict
from factory_urllc.env import FactoryEnv, LeaderAction, phase1_sinr, shannon_rate

# %% geometry and path loss
cfg = from_dict({}, ["seed=3"])
env = FactoryEnv(cfg)
env.reset_episode(payload_bytes=60)

print("leaders (m):")
print(np.round(env.leader_positions, 2))
aps = np.asarray(cfg.topology.ap_positions)
dist = np.linalg.norm(env.leader_positions[:, None, :] - aps[None], axis=-1)
pl = channel.path_loss_db(channel.PathLossParams(), dist)
print("path loss leader x AP (dB):")
print(np.round(pl, 1))
print("noise power: %.1f dBm" % channel.watts_to_dbm(env.noise_w))


# %% rates for a handful of allocations
def report(name, actions):
    sinr = phase1_sinr(actions, env.gains, env.noise_w)
    rate = shannon_rate(sinr, env.bandwidth_hz) / 1e6
    bits = rate * 1e6 * env.slot_s
    print(f"{name:>22}: SINR dB {np.round(10 * np.log10(sinr), 1)}  "
          f"Mbps {np.round(rate, 1)}  sum {rate.sum():6.1f}  bits/slot {np.round(bits).astype(int)}")


near = baselines.nearest_aps(env.leader_positions, aps)
report("nearest AP, all on 0", [LeaderAction((int(k),), 0, 30.0) for k in near])
report("nearest AP, split", [LeaderAction((int(k),), n % 2, 30.0) for n, k in enumerate(near)])
report("greedy single", baselines.greedy_single(env))
report("greedy dual", baselines.greedy_multi(env))
report("centralized search", baselines.centralized_exhaustive(env))

# two clusters silent: the other two get a clean sub-band each
half = [LeaderAction((int(k),), n % 2, 30.0 if n < 2 else -100.0) for n, k in enumerate(near)]
report("time-shared (n<2 on)", half)

need = env.ledger.initial_bits
print(f"\ncombined payload per cluster: {need:.0f} bits over {env.phase1_slots} slots")
