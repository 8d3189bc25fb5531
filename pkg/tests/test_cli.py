import json
import subprocess
import sys

import numpy as np
import pytest

from dyncomm import cli, rescal, synth, temporal


def write_benchmark(tmp_path, seed=0, nodes=50, communities=3, slices=3):
    cfg = synth.DsbmConfig(num_nodes=nodes, num_communities=communities,
                           num_slices=slices, p_in=0.4, p_out=0.04,
                           churn=0.1, seed=seed)
    g, truth = synth.generate(cfg)
    events = tmp_path / "events.tsv"
    gt = tmp_path / "truth.csv"
    temporal.write_events_tsv(events, g)
    synth.write_ground_truth_csv(gt, truth)
    return events, gt


def detect_args(events, out_dir, **extra):
    args = ["detect", "--input", str(events), "--out-dir", str(out_dir),
            "--rank", "4", "--communities", "3", "--seed", "1"]
    for key, value in extra.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    return args


def test_detect_writes_everything(tmp_path, capsys):
    events, _ = write_benchmark(tmp_path)
    out = tmp_path / "run"
    assert cli.main(detect_args(events, out)) == 0
    printed = capsys.readouterr().out
    assert "avg" in printed

    doc = json.loads((out / "result.json").read_text())
    assert set(doc) == {"per_slice", "avg_Q"}
    assert len(doc["per_slice"]) == 3
    assert len(doc["per_slice"][0]["labels"]) == 50
    qs = [entry["Q"] for entry in doc["per_slice"]]
    assert doc["avg_Q"] == pytest.approx(sum(qs) / len(qs), abs=1e-15)

    for name in ("q_per_slice.csv", "factors.json", "mapper_params.json",
                 "rescal_loss.csv", "mapper_loss.csv", "memberships_t0.csv",
                 "memberships_t2.csv"):
        assert (out / name).exists(), name
    assert not (out / "embeddings_t0.csv").exists()

    assert (out / "rescal_loss.csv").read_text().splitlines()[0] == "sweep,loss"
    assert (out / "mapper_loss.csv").read_text().splitlines()[0] == "epoch,loss"

    f = rescal.load_factors(out / "factors.json")
    assert f.rank == 4 and f.num_nodes == 50


def test_detect_is_deterministic(tmp_path):
    events, _ = write_benchmark(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(detect_args(events, out1)) == 0
    assert cli.main(detect_args(events, out2)) == 0
    for name in ("result.json", "factors.json", "mapper_params.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_detect_parallel_matches_serial(tmp_path):
    events, _ = write_benchmark(tmp_path, slices=4)
    out1, out2 = tmp_path / "serial", tmp_path / "par"
    assert cli.main(detect_args(events, out1)) == 0
    assert cli.main(detect_args(events, out2) + ["--parallel"]) == 0
    assert (out1 / "result.json").read_bytes() == \
        (out2 / "result.json").read_bytes()


def test_detect_embeddings_flag(tmp_path):
    events, _ = write_benchmark(tmp_path)
    out = tmp_path / "run"
    assert cli.main(detect_args(events, out) + ["--export-embeddings"]) == 0
    header = (out / "embeddings_t0.csv").read_text().splitlines()[0]
    assert header == "node," + ",".join(f"z_{k}" for k in range(4))


def test_config_file_and_flag_precedence(tmp_path):
    events, _ = write_benchmark(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# pipeline settings\n"
        f"input = {events}\n"
        "rank = 6\n"
        "communities = 3\n"
        "epochs = 40\n"
        "binarize = true\n")
    out = tmp_path / "fromcfg"
    assert cli.main(["detect", "--config", str(cfg),
                     "--out-dir", str(out)]) == 0
    assert rescal.load_factors(out / "factors.json").rank == 6

    # a flag on the command line beats the file
    out2 = tmp_path / "flagwins"
    assert cli.main(["detect", "--config", str(cfg), "--out-dir", str(out2),
                     "--rank", "2"]) == 0
    assert rescal.load_factors(out2 / "factors.json").rank == 2


def test_eval_with_ground_truth(tmp_path, capsys):
    events, gt = write_benchmark(tmp_path)
    out = tmp_path / "run"
    assert cli.main(detect_args(events, out)) == 0
    capsys.readouterr()
    report_path = tmp_path / "report.json"
    assert cli.main(["eval", "--results", str(out / "result.json"),
                     "--ground-truth", str(gt),
                     "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert "mean_NMI" in report
    assert len(report["per_slice"]) == 3
    assert all("NMI" in entry for entry in report["per_slice"])
    assert "NMI" in capsys.readouterr().out


def test_eval_without_ground_truth(tmp_path, capsys):
    events, _ = write_benchmark(tmp_path)
    out = tmp_path / "run"
    assert cli.main(detect_args(events, out)) == 0
    capsys.readouterr()
    assert cli.main(["eval", "--results", str(out / "result.json")]) == 0
    printed = capsys.readouterr().out
    doc = json.loads(printed[printed.index("{"):])
    assert "mean_NMI" not in doc


def test_eval_slice_count_mismatch(tmp_path):
    events, gt = write_benchmark(tmp_path, slices=3)
    out = tmp_path / "run"
    assert cli.main(detect_args(events, out)) == 0
    short_dir = tmp_path / "short"
    short_dir.mkdir()
    short_events, short_gt = write_benchmark(short_dir, slices=2)
    assert cli.main(["eval", "--results", str(out / "result.json"),
                     "--ground-truth", str(short_gt)]) == 2


def test_synth_subcommand(tmp_path):
    out = tmp_path / "bench"
    assert cli.main(["synth", "--out-dir", str(out), "--nodes", "30",
                     "--communities", "3", "--slices", "2", "--p-in", "0.4",
                     "--p-out", "0.05", "--churn", "0.2", "--seed", "4"]) == 0
    events = temporal.read_events_tsv(out / "events.tsv")
    g = temporal.from_edge_events(events)
    assert g.num_slices == 2
    truth = synth.read_ground_truth_csv(out / "ground_truth.csv")
    assert len(truth) == 2 and len(truth[0]) == 30


def test_exit_codes(tmp_path):
    events, _ = write_benchmark(tmp_path)
    # missing required option
    assert cli.main(["detect", "--out-dir", str(tmp_path / "x"),
                     "--communities", "3"]) == 2
    # unreadable input file
    assert cli.main(detect_args(tmp_path / "missing.tsv", tmp_path / "x")) == 4
    # malformed input
    bad = tmp_path / "bad.tsv"
    bad.write_text("0\tzero\t1\n")
    assert cli.main(detect_args(bad, tmp_path / "x")) == 2
    # self loop caught at graph construction
    loop = tmp_path / "loop.tsv"
    loop.write_text("0\t2\t2\n")
    assert cli.main(detect_args(loop, tmp_path / "x")) == 2
    # bad community count
    assert cli.main(["detect", "--input", str(events), "--out-dir",
                     str(tmp_path / "x"), "--communities", "1"]) == 2
    # unknown config key
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("turbo = yes\n")
    assert cli.main(["detect", "--config", str(cfg), "--input", str(events),
                     "--out-dir", str(tmp_path / "x"),
                     "--communities", "3"]) == 2
    # config file with a syntax error
    cfg.write_text("rank 8\n")
    assert cli.main(["detect", "--config", str(cfg), "--input", str(events),
                     "--out-dir", str(tmp_path / "x"),
                     "--communities", "3"]) == 2
    # missing results file for eval
    assert cli.main(["eval", "--results", str(tmp_path / "nope.json")]) == 4


def test_console_entry_point(tmp_path):
    out = tmp_path / "bench"
    proc = subprocess.run(
        [sys.executable, "-m", "dyncomm.cli", "synth", "--out-dir", str(out),
         "--nodes", "20", "--communities", "2", "--slices", "2",
         "--p-in", "0.5", "--p-out", "0.1"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    run = tmp_path / "run"
    proc = subprocess.run(
        [sys.executable, "-m", "dyncomm.cli", "detect",
         "--input", str(out / "events.tsv"), "--out-dir", str(run),
         "--rank", "3", "--communities", "2", "--epochs", "30"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "avg" in proc.stdout
    assert (run / "result.json").exists()
