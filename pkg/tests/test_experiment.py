import json

import pytest

from factory_urllc import cli, experiment
from factory_urllc.config import from_dict, load_config

SMOKE = ["rl.episodes=10", "rl.batch_size=8", "rl.target_sync=3"]


def smoke_config(tmp_path, *extra):
    return from_dict({}, [*SMOKE, f"output_dir={tmp_path}", *extra])


def test_train_writes_artifacts(tmp_path):
    cfg = smoke_config(tmp_path)
    manifest = experiment.run_train(cfg)
    rows = experiment.read_rows(tmp_path / "training.csv")
    assert len(rows) == 10
    assert tuple(rows[0]) == ("episode", "mean_loss", "sum_reward", "epsilon", "wall_ms")
    assert [int(r["episode"]) for r in rows] == list(range(10))
    assert load_config(tmp_path / "config.yaml").config_hash() == cfg.config_hash()
    saved = json.loads((tmp_path / "manifest.json").read_text())
    assert saved["config_hash"] == cfg.config_hash() == manifest.config_hash
    assert saved["seed"] == 0 and saved["finished"] and saved["version"]
    assert sorted(p.name for p in (tmp_path / "checkpoints").glob("*.qnet")) == [
        f"agent_{n}.qnet" for n in range(4)]


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted((directory / "checkpoints").glob("*.qnet"))}


def test_same_seed_gives_identical_checkpoints(tmp_path):
    cfg = smoke_config(tmp_path)
    experiment.run_train(cfg)
    first = snapshot(tmp_path)
    experiment.run_train(cfg)
    assert snapshot(tmp_path) == first and len(first) == 4


class Interrupt(Exception):
    pass


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg = smoke_config(tmp_path, "rl.episodes=12")
    experiment.run_train(cfg)
    full = snapshot(tmp_path)
    full_rows = experiment.read_rows(tmp_path / "training.csv")

    def stop(row):
        if row["episode"] == 7:
            raise Interrupt

    with pytest.raises(Interrupt):
        experiment.run_train(cfg, state_every=3, on_episode=stop)
    experiment.run_train(cfg, resume=True, state_every=3)
    assert snapshot(tmp_path) == full
    rows = experiment.read_rows(tmp_path / "training.csv")
    drop = lambda rs: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rs]
    assert drop(rows) == drop(full_rows)


def test_eval_payload_sweep(tmp_path):
    cfg = smoke_config(tmp_path / "train")
    experiment.run_train(cfg)
    manifest = experiment.run_eval(cfg, "marl2", tmp_path / "eval",
                                   checkpoint_dir=tmp_path / "train" / "checkpoints", episodes=10, workers=1)
    rows = experiment.read_rows(tmp_path / "eval" / "results.csv")
    assert [float(r["payload_bytes"]) for r in rows] == [20, 40, 60, 80, 100]
    assert all(0.0 <= float(r["delivery_probability"]) <= 1.0 for r in rows)
    assert tuple(rows[0]) == experiment.RESULT_COLUMNS
    plot = experiment.read_rows(manifest.artifacts["plot_csv"])
    assert list(plot[0]) == ["payload_bytes", "marl2"] and len(plot) == 5


def test_all_policies_share_the_schema(tmp_path):
    cfg = smoke_config(tmp_path / "train")
    experiment.run_train(cfg)
    ckpt = tmp_path / "train" / "checkpoints"
    experiment.run_train(smoke_config(tmp_path / "train1", f"checkpoint_dir={tmp_path / 'c1'}"), policy="marl1")
    headers = set()
    for policy in ("random", "central", "greedy1", "greedy2", "marl2", "marl1"):
        path = tmp_path / "c1" if policy == "marl1" else ckpt
        out = tmp_path / policy
        experiment.run_eval(cfg, policy, out, payloads=[60], checkpoint_dir=path, episodes=3, workers=1)
        rows = experiment.read_rows(out / "results.csv")
        assert len(rows) == 1 and rows[0]["policy_name"] == policy
        headers.add(tuple(rows[0]))
    assert headers == {experiment.RESULT_COLUMNS}


def test_cluster_sweep_matches_figure_axes(tmp_path):
    cfg = smoke_config(tmp_path)
    manifest = experiment.run_sweep(cfg, ["greedy1"], payloads=[40, 60], cluster_counts=[4, 6, 8],
                                    episodes=3, workers=1)
    rows = experiment.read_rows(tmp_path / "results.csv")
    assert len(rows) == 6
    assert sorted({int(r["n_clusters"]) for r in rows}) == [4, 6, 8]
    plot = experiment.read_rows(manifest.artifacts["plot_clusters_B40.csv"])
    assert [float(r["n_clusters"]) for r in plot] == [4, 6, 8]


def test_parallel_jobs_keep_order(tmp_path):
    cfg = smoke_config(tmp_path)
    serial = experiment.run_eval(cfg, "random", tmp_path / "s", payloads=[20, 60, 100], episodes=4, workers=1)
    pooled = experiment.run_eval(cfg, "random", tmp_path / "p", payloads=[20, 60, 100], episodes=4, workers=2)
    assert serial.rows == pooled.rows


def test_worker_env_var(monkeypatch):
    monkeypatch.setenv(experiment.WORKERS_ENV, "3")
    assert experiment.worker_count() == 3
    monkeypatch.setenv(experiment.WORKERS_ENV, "junk")
    assert experiment.worker_count() >= 1


def test_trace_output(tmp_path):
    cfg = smoke_config(tmp_path, "eval.trace=true")
    experiment.run_eval(cfg, "greedy2", payloads=[60], episodes=2, workers=1)
    rows = experiment.read_rows(tmp_path / "trace.csv")
    assert len(rows) == 2 * cfg.phase1_slots * 4
    assert rows[0]["aps"].count("|") == 1


# ------------------------------------------------------------------ CLI

def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["train", "--output-dir", out, "--rl.episodes=4", "--rl.batch_size=8"]) == 0
    assert "trained marl2 for 4 episodes" in capsys.readouterr().out
    assert cli.main(["train", "--rl.nope=1"]) == 1
    assert "rl.nope" in capsys.readouterr().err
    assert cli.main(["baseline", "--policy", "marl1", "--output-dir", out]) == 1
    assert cli.main(["eval", "--checkpoint-dir", f"{out}/checkpoints", "--output-dir", out,
                     "--topology.n_clusters=6", "--episodes", "1"]) == 2
    assert cli.main(["baseline", "--policy", "greedy2", "--output-dir", str(tmp_path / "b"),
                     "--episodes", "2", "--payloads", "20,40"]) == 0
    assert len(experiment.read_rows(tmp_path / "b" / "results.csv")) == 2
    assert cli.main(["selfcheck"]) == 0


def test_cli_selfcheck_rejects_corrupted_checkpoint(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--output-dir", str(out), "--rl.episodes=2"]) == 0
    good = out / "checkpoints" / "agent_0.qnet"
    assert cli.main(["selfcheck", "--checkpoint", str(good)]) == 0
    bad = tmp_path / "bad.qnet"
    data = bytearray(good.read_bytes())
    data[-3] ^= 0xFF
    bad.write_bytes(bytes(data[:-8]))
    capsys.readouterr()
    assert cli.main(["selfcheck", "--checkpoint", str(bad)]) == 3
    assert "bad.qnet" in capsys.readouterr().out


def test_cli_unknown_argument():
    assert cli.main(["baseline", "stray"]) == 1
    with pytest.raises(SystemExit):
        cli.main(["baseline", "--policy", "oracle"])
