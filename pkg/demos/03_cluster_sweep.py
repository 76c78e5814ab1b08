"""Delivery probability versus the number of clusters (N = 4, 6, 8).

Sub-bands scale as N/2, so every pair of clusters shares one sub-band in
Phase I. MARL agents are trained once per N and reused on later runs.

    python demos/03_cluster_sweep.py [episodes]
"""
import sys

from factory_urllc import experiment
from factory_urllc.config import from_dict

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
cfg = from_dict({}, [("rl.episodes", episodes), ("output_dir", "runs/clusters")])

manifest = experiment.run_sweep(
    cfg, ["marl2", "greedy1", "random"], payloads=[40, 60], cluster_counts=[4, 6, 8], episodes=300,
)
for name, path in sorted(manifest.artifacts.items()):
    if name.startswith("plot_clusters"):
        print(f"\n{name}")
        for row in experiment.read_rows(path):
            print("  " + "  ".join(f"{k}={float(v):.4f}" if k != "n_clusters" else f"N={float(v):.0f}"
                                   for k, v in row.items()))

# %% optional figure, only if matplotlib is around
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    rows = experiment.read_rows(manifest.artifacts["plot_clusters_B40.csv"])
    n = [float(r["n_clusters"]) for r in rows]
    for policy in ("marl2", "greedy1", "random"):
        plt.plot(n, [float(r[policy]) for r in rows], marker="o", label=policy)
    plt.xlabel("number of clusters")
    plt.ylabel("delivery probability (B = 40 bytes)")
    plt.legend()
    plt.savefig("runs/clusters/clusters_B40.png", dpi=120)
    print("\nfigure: runs/clusters/clusters_B40.png")
