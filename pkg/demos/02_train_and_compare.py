"""Train the dual-connectivity agents and compare them with the benchmarks.

    python demos/02_train_and_compare.py            # paper-scale run, a few minutes
    python demos/02_train_and_compare.py 500        # quick look

Writes training.csv, results.csv and plot_data.csv under runs/demo/.
"""
import sys
from pathlib import Path

import numpy as np

from factory_urllc import experiment
from factory_urllc.config import from_dict

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
out = Path("runs/demo")
cfg = from_dict({}, [("rl.episodes", episodes), ("output_dir", str(out))])

# %% training; one row per episode lands in training.csv
rewards = []
manifest = experiment.run_train(cfg, policy="marl2", on_episode=lambda r: rewards.append(r["sum_reward"]))
curve = np.convolve(rewards, np.ones(100) / 100, mode="valid") if len(rewards) >= 100 else rewards
print(f"trained {episodes} episodes in {manifest.artifacts['wall_s']:.0f} s")
for e in np.linspace(0, len(curve) - 1, 7).astype(int):
    print(f"  episode {e:5d}: mean reward {curve[e]:6.1f}")

# %% test phase: Phase I by the agents, then the fixed Phase-II schedule
ckpt = manifest.artifacts["checkpoints"]
rows = []
for policy in ("marl2", "random", "greedy1", "greedy2", "central"):
    m = experiment.run_eval(cfg, policy, out / policy, checkpoint_dir=ckpt, episodes=300, workers=1)
    rows.extend(m.rows)
experiment.write_rows(out / "results.csv", experiment.RESULT_COLUMNS, rows)
cols, table = experiment.plot_table(rows)
experiment.write_rows(out / "plot_data.csv", cols, table)

print("\npayload  " + "  ".join(f"{c:>8}" for c in cols[1:]))
for line in table:
    print(f"{line['payload_bytes']:7.0f}  " + "  ".join(f"{line[c]:8.4f}" for c in cols[1:]))
