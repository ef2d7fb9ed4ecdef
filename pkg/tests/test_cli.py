"""End-to-end checks of the command line: generate, train, evaluate, inspect."""

import json
import os

import numpy as np
import pytest

import vnfscale
from vnfscale.cli import main
from vnfscale.params import load_checkpoint


def read(path):
    with open(path) as f:
        return f.read()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def ds_dir(ws):
    out = ws / "ds"
    rc = main([
        "gen-dataset", "--topology", "internet2", "--entries", "10",
        "--requests-per-entry", "2", "--seed", "5", "--out", str(out),
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def run_dir(ws, ds_dir):
    out = ws / "run"
    rc = main([
        "train", "--dataset", str(ds_dir), "--algo", "ppg",
        "--episodes", "8", "--eval-every", "8", "--n-ppo", "4",
        "--n-ppg", "8", "--minibatch", "2", "--pretrain-steps", "8",
        "--seed", "3", "--out", str(out),
    ])
    assert rc == 0
    return out


def entry_in_test_split(ds_dir):
    doc = json.loads(read(ds_dir / "manifest.json"))
    return doc["splits"]["test"][0]


class TestGenDataset:
    def test_layout(self, ds_dir):
        assert (ds_dir / "topology.json").exists()
        assert (ds_dir / "manifest.json").exists()
        assert (ds_dir / "run_manifest.json").exists()
        assert len(os.listdir(ds_dir / "entries" / "train")) == 8
        assert len(os.listdir(ds_dir / "entries" / "val")) == 1
        assert len(os.listdir(ds_dir / "entries" / "test")) == 1

    def test_deterministic(self, ws, ds_dir):
        out2 = ws / "ds2"
        rc = main([
            "gen-dataset", "--topology", "internet2", "--entries", "10",
            "--requests-per-entry", "2", "--seed", "5", "--out", str(out2),
        ])
        assert rc == 0
        assert read(out2 / "manifest.json") == read(ds_dir / "manifest.json")
        for split in ("train", "val", "test"):
            names = sorted(os.listdir(ds_dir / "entries" / split))
            assert sorted(os.listdir(out2 / "entries" / split)) == names
            for n in names:
                assert read(out2 / "entries" / split / n) == read(
                    ds_dir / "entries" / split / n
                )

    def test_run_manifest_fields(self, ds_dir):
        doc = json.loads(read(ds_dir / "run_manifest.json"))
        assert doc["command"] == "gen-dataset"
        assert doc["seeds"] == [5]
        assert doc["version"] == vnfscale.__version__
        assert doc["outputs"] == sorted(doc["outputs"])
        assert doc["config"]["entries"] == 10
        assert doc["config_hash"]
        assert doc["started"] <= doc["finished"]


class TestTrain:
    def test_outputs_exist(self, run_dir):
        for name in ("checkpoint.json", "rewards.csv", "losses.csv", "run_manifest.json"):
            assert (run_dir / name).exists()

    def test_rewards_csv(self, run_dir):
        lines = read(run_dir / "rewards.csv").splitlines()
        assert lines[0] == "episode,reward"
        assert len(lines) == 1 + 8
        for i, line in enumerate(lines[1:], start=1):
            ep, r = line.split(",")
            assert int(ep) == i
            assert np.isfinite(float(r))

    def test_losses_csv_aux_column(self, run_dir):
        # updates at episodes 4 and 8; the aux phase only fires at 8
        lines = read(run_dir / "losses.csv").splitlines()
        assert lines[0] == "update,policy_loss,value_loss,aux_loss"
        assert len(lines) == 1 + 2
        first, second = lines[1].split(","), lines[2].split(",")
        assert first[3] == ""
        assert second[3] != ""
        assert np.isfinite(float(second[3]))

    def test_checkpoint_readable(self, run_dir):
        doc = load_checkpoint(run_dir / "checkpoint.json")
        assert doc["config"]["train"]["algorithm"] == "ppg"
        assert doc["extra"]["best_val_reward"] >= doc["extra"]["final_val_reward"]

    def test_reinforce_losses_have_no_value_column(self, ws, ds_dir):
        out = ws / "run-reinforce"
        rc = main([
            "train", "--dataset", str(ds_dir), "--algo", "reinforce",
            "--episodes", "4", "--eval-every", "4", "--n-ppo", "4",
            "--no-pretrain", "--seed", "3", "--out", str(out),
        ])
        assert rc == 0
        lines = read(out / "losses.csv").splitlines()
        assert len(lines) == 2
        cells = lines[1].split(",")
        assert cells[2] == "" and cells[3] == ""


class TestEval:
    def test_stdout_and_files(self, ds_dir, run_dir, ws, capsys):
        out = ws / "eval"
        rc = main([
            "eval", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--out", str(out),
        ])
        assert rc == 0
        got = capsys.readouterr().out.splitlines()
        assert got[0] == "reward,avg_vnf,avg_delay_ms,avg_slav"
        mean = [float(x) for x in got[1].split(",")]
        assert len(mean) == 4
        lines = read(out / "metrics.csv").splitlines()
        assert lines[0] == "reward,avg_vnf,avg_delay_ms,avg_slav"
        assert [float(x) for x in lines[1].split(",")] == mean
        per = read(out / "per_entry.csv").splitlines()
        assert per[0] == "entry,reward,avg_vnf,avg_delay_ms,avg_slav"
        assert len(per) == 1 + 1
        assert int(per[1].split(",")[0]) == entry_in_test_split(ds_dir)
        assert (out / "run_manifest.json").exists()

    def test_reference_scores_meet_slas(self, ds_dir, run_dir, capsys):
        rc = main([
            "eval", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--reference",
        ])
        assert rc == 0
        row = capsys.readouterr().out.splitlines()[1]
        reward, avg_vnf, _, avg_slav = (float(x) for x in row.split(","))
        assert avg_slav == 0.0
        assert reward < 0 and avg_vnf > 0

    def test_alpha_override_changes_reward(self, ds_dir, run_dir, capsys):
        args = ["eval", "--dataset", str(ds_dir), "--checkpoint",
                str(run_dir / "checkpoint.json"), "--reference"]
        assert main(args + ["--alpha", "0.1"]) == 0
        low = float(capsys.readouterr().out.splitlines()[1].split(",")[0])
        assert main(args + ["--alpha", "0.9"]) == 0
        high = float(capsys.readouterr().out.splitlines()[1].split(",")[0])
        assert high < low

    def test_missing_dataset_is_pipeline_error(self, run_dir):
        rc = main([
            "eval", "--dataset", "/nonexistent/ds", "--checkpoint",
            str(run_dir / "checkpoint.json"),
        ])
        assert rc == 2


class TestBenchTime:
    def test_timings(self, ds_dir, run_dir, ws, capsys):
        out = ws / "bench"
        rc = main([
            "bench-time", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--n", "2", "--out", str(out),
        ])
        assert rc == 0
        assert "ratio" in capsys.readouterr().out
        lines = read(out / "timings.csv").splitlines()
        assert lines[0] == "entry,policy_s,solver_s"
        assert len(lines) == 1 + 2 + 1
        assert lines[-1].startswith("mean,")
        _, ps, ss = lines[-1].split(",")
        assert float(ps) > 0 and float(ss) > 0


class TestDumpDeployment:
    def test_sections(self, ds_dir, run_dir, ws, capsys):
        out = ws / "dump"
        rc = main([
            "dump-deployment", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--entry", str(entry_in_test_split(ds_dir)),
            "--out", str(out),
        ])
        assert rc == 0
        text = capsys.readouterr().out
        for section in ("scaling grid:", "instances:", "requests:", "reward "):
            assert section in text
        grid = text.split("scaling grid:\n")[1].split("\n\n")[0].splitlines()
        assert grid[0] == "node_id,vnf,action"
        assert len(grid) == 1 + 9 * 5
        assert all(r.split(",")[2] in ("In", "Keep", "Out") for r in grid[1:])
        assert read(out / "deployment.txt") == text

    def test_unknown_entry(self, ds_dir, run_dir):
        rc = main([
            "dump-deployment", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--entry", "9999",
        ])
        assert rc == 2


class TestExportEmbeddings:
    def test_dims(self, ds_dir, run_dir, ws):
        out = ws / "emb"
        rc = main([
            "export-embeddings", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--entry", str(entry_in_test_split(ds_dir)),
            "--out", str(out),
        ])
        assert rc == 0
        lines = read(out / "embeddings.csv").splitlines()
        assert len(lines) == 12
        assert lines[0].split(",")[0] == "0"
        # node id plus one column per hidden dimension, no header row
        assert all(len(line.split(",")) == 65 for line in lines)


class TestUsage:
    def test_no_subcommand(self):
        assert main([]) == 1

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert main(["train"]) == 1

    def test_bad_choice(self, ws):
        rc = main(["gen-dataset", "--out", str(ws / "x"), "--solver-mode", "bogus"])
        assert rc == 1

    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        assert vnfscale.__version__ in capsys.readouterr().out


class TestConfigFile:
    def test_flags_from_file(self, ws, ds_dir):
        cfg = ws / "gen.json"
        cfg.write_text(json.dumps({
            "topology": "internet2", "entries": 10,
            "requests_per_entry": 2, "seed": 5,
        }))
        out = ws / "ds3"
        rc = main(["gen-dataset", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        assert read(out / "manifest.json") == read(ds_dir / "manifest.json")

    def test_argv_wins(self, ws, ds_dir):
        cfg = ws / "gen2.json"
        cfg.write_text(json.dumps({
            "topology": "internet2", "entries": 10,
            "requests_per_entry": 2, "seed": 999,
        }))
        out = ws / "ds4"
        rc = main([
            "gen-dataset", "--config", str(cfg), "--seed", "5", "--out", str(out),
        ])
        assert rc == 0
        assert read(out / "manifest.json") == read(ds_dir / "manifest.json")

    def test_bool_flag(self, ws, ds_dir, run_dir, capsys):
        cfg = ws / "eval.json"
        cfg.write_text(json.dumps({"reference": True}))
        rc = main([
            "eval", "--dataset", str(ds_dir), "--checkpoint",
            str(run_dir / "checkpoint.json"), "--config", str(cfg),
        ])
        assert rc == 0
        row = capsys.readouterr().out.splitlines()[1]
        assert float(row.split(",")[3]) == 0.0

    def test_missing_file(self):
        assert main(["gen-dataset", "--config", "/nonexistent.json", "--out", "x"]) == 1

    def test_not_an_object(self, ws):
        cfg = ws / "bad.json"
        cfg.write_text("[1, 2]")
        assert main(["gen-dataset", "--config", str(cfg), "--out", "x"]) == 1
