"""Experiment orchestration: training runs, evaluation sweeps and their artifacts.

Every run writes its resolved config (``config.yaml``) and a ``manifest.json``
next to its CSV outputs. Results from evaluation, baselines and sweeps share
one schema, so curves from different policies overlay without special cases.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, agents, baselines
from .config import ExperimentConfig, from_dict
from .env import TRACE_COLUMNS

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("payload_bytes", "n_clusters", "policy_name", "delivery_probability",
                  "n_episodes", "seed")
WORKERS_ENV = "FACTORY_URLLC_WORKERS"
MARL_KINDS = ("marl1", "marl2")


def worker_count() -> int:
    """Pool size: ``$FACTORY_URLLC_WORKERS`` if set, else the CPU count."""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
    return os.cpu_count() or 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    started: str
    finished: str | None = None
    artifacts: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=str) + "\n")
        return path


def freeze_config(config: ExperimentConfig, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "config.yaml"
    config.dump(path)
    return path


def write_rows(path, columns, rows, append=False) -> Path:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if not new else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        if new:
            writer.writeheader()
        writer.writerows(rows)
    return path


def read_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ training

def _multi_for(policy: str) -> bool:
    if policy not in MARL_KINDS:
        raise ValueError(f"policy {policy!r} is not trainable; use one of {MARL_KINDS}")
    return policy == "marl2"


def run_train(config: ExperimentConfig, output_dir=None, policy=None, resume=False,
              state_every: int = 500, on_episode=None) -> RunManifest:
    """Train one MARL policy; returns the manifest of the written artifacts.

    Trainer state is saved every ``state_every`` episodes so an interrupted
    run can continue with ``resume=True`` and end bit-identical to a run that
    was never interrupted.
    """
    policy = policy or (config.policy if config.policy in MARL_KINDS else "marl2")
    out = Path(output_dir or config.output_dir)
    ckpt = Path(config.checkpoint_dir) if config.checkpoint_dir else out / "checkpoints"
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("train", config.config_hash(), config.seed, _now())
    freeze_config(config, out)

    trainer = agents.MarlTrainer(config, _multi_for(policy))
    csv_path = out / "training.csv"
    if resume and (ckpt / "trainer_state.json").exists():
        trainer.load_state(ckpt)
        kept = [r for r in read_rows(csv_path) if int(r["episode"]) < trainer.episode] if csv_path.exists() else []
        write_rows(csv_path, agents.TRAIN_COLUMNS, kept)
        log.info("resuming %s at episode %d", policy, trainer.episode)
    else:
        if resume:
            log.warning("nothing to resume in %s; starting from scratch", ckpt)
        write_rows(csv_path, agents.TRAIN_COLUMNS, [])

    t0 = time.perf_counter()
    with csv_path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(agents.TRAIN_COLUMNS))

        def record(row):
            writer.writerow(row)
            if on_episode is not None:
                on_episode(row)

        while trainer.episode < config.rl.episodes:
            trainer.train(record, until=trainer.episode + state_every)
            fh.flush()
            trainer.save_state(ckpt)

    manifest.finished = _now()
    manifest.artifacts = {
        "checkpoints": str(ckpt),
        "training_csv": str(csv_path),
        "config": str(out / "config.yaml"),
        "policy": policy,
        "wall_s": round(time.perf_counter() - t0, 3),
    }
    manifest.write(out)
    return manifest


# ------------------------------------------------------------------ evaluation

@dataclass(frozen=True)
class EvalJob:
    """One sweep point: a policy on one config at one payload size."""
    config: dict
    policy: str
    payload_bytes: float
    checkpoint_dir: str | None = None
    episodes: int | None = None
    trace: bool = False

    def key(self):
        cfg = self.config
        return (cfg["topology"]["n_clusters"], cfg["seed"], self.policy, self.payload_bytes)


def run_job(job: EvalJob):
    config = from_dict(job.config)
    policy = baselines.make_policy(job.policy, config, job.checkpoint_dir)
    _, summary = agents.evaluate(policy, config, job.payload_bytes, job.episodes, trace=job.trace)
    return summary.row(), getattr(summary, "trace_rows", None)


def run_jobs(jobs, workers=None):
    """Evaluate jobs, in a process pool when more than one worker is allowed.

    Results come back in job order whatever the completion order.
    """
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(run_job, jobs))


def plot_table(rows, x="payload_bytes") -> tuple[list[str], list[dict]]:
    """Wide table: one line per x value, one column per policy (mean over seeds)."""
    policies = sorted({r["policy_name"] for r in rows})
    xs = sorted({float(r[x]) for r in rows})
    table = []
    for xv in xs:
        line = {x: xv}
        for p in policies:
            vals = [float(r["delivery_probability"]) for r in rows
                    if r["policy_name"] == p and float(r[x]) == xv]
            line[p] = float(np.mean(vals)) if vals else ""
        table.append(line)
    return [x, *policies], table


def _payloads(config: ExperimentConfig, payloads):
    return tuple(float(b) for b in (payloads if payloads is not None else config.payload_bytes))


def run_eval(config: ExperimentConfig, policy: str, output_dir=None, payloads=None,
             checkpoint_dir=None, episodes=None, workers=None, command="eval") -> RunManifest:
    """Evaluate one policy over the payload sweep and write results + plot data."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, config.config_hash(), config.seed, _now())
    freeze_config(config, out)
    ckpt = checkpoint_dir or config.checkpoint_dir
    if policy in MARL_KINDS and ckpt is None:
        raise ValueError(f"policy {policy} needs a checkpoint directory")
    # fail fast on a topology mismatch before any worker starts
    baselines.make_policy(policy, config, ckpt)
    jobs = [EvalJob(config.to_dict(), policy, b, str(ckpt) if ckpt else None, episodes, config.eval.trace)
            for b in _payloads(config, payloads)]
    results = run_jobs(jobs, workers)
    rows = [r for r, _ in results]
    artifacts = {"results_csv": str(write_rows(out / "results.csv", RESULT_COLUMNS, rows))}
    cols, table = plot_table(rows)
    artifacts["plot_csv"] = str(write_rows(out / "plot_data.csv", cols, table))
    if config.eval.trace:
        trace = []
        for job, (_, t) in zip(jobs, results):
            trace.extend(dict(row, payload_bytes=job.payload_bytes) for row in t or [])
        artifacts["trace_csv"] = str(write_rows(out / "trace.csv", ("payload_bytes", *TRACE_COLUMNS), trace))
    manifest.finished = _now()
    manifest.artifacts = artifacts
    manifest.write(out)
    manifest.rows = rows
    return manifest


def run_sweep(config: ExperimentConfig, policies, output_dir=None, payloads=None,
              cluster_counts=None, seeds=None, episodes=None, workers=None) -> RunManifest:
    """Policies x cluster counts x seeds x payloads, training MARL agents as needed.

    Checkpoints live under ``<output>/checkpoints/N<clusters>_s<seed>_<policy>``
    and are reused when a previous sweep already produced them.
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("sweep", config.config_hash(), config.seed, _now())
    freeze_config(config, out)
    cluster_counts = tuple(cluster_counts or (config.topology.n_clusters,))
    seeds = tuple(seeds if seeds is not None else (config.seed,))
    payloads = _payloads(config, payloads)

    jobs = []
    for n in cluster_counts:
        for s in seeds:
            variant = from_dict(config.to_dict(), [("topology.n_clusters", n), ("seed", s),
                                                   ("topology.n_subbands", None)])
            for policy in policies:
                ckpt = None
                if policy in MARL_KINDS:
                    ckpt = out / "checkpoints" / f"N{n}_s{s}_{policy}"
                    if not (ckpt / f"agent_{n - 1}.qnet").exists():
                        log.info("training %s for N=%d seed=%d", policy, n, s)
                        run_train(from_dict(variant.to_dict(), [("checkpoint_dir", str(ckpt))]),
                                  ckpt, policy)
                    ckpt = str(ckpt)
                jobs.extend(EvalJob(variant.to_dict(), policy, b, ckpt, episodes) for b in payloads)

    jobs.sort(key=EvalJob.key)
    rows = [r for r, _ in run_jobs(jobs, workers)]
    artifacts = {"results_csv": str(write_rows(out / "results.csv", RESULT_COLUMNS, rows))}
    cols, table = plot_table(rows)
    artifacts["plot_payload_csv"] = str(write_rows(out / "plot_payload.csv", cols, table))
    if len(cluster_counts) > 1:
        for b in payloads:
            sub = [r for r in rows if float(r["payload_bytes"]) == b]
            cols, table = plot_table(sub, x="n_clusters")
            name = f"plot_clusters_B{b:g}.csv"
            artifacts[name] = str(write_rows(out / name, cols, table))
    manifest.finished = _now()
    manifest.artifacts = artifacts
    manifest.write(out)
    manifest.rows = rows
    return manifest
