"""
命令列測試
Tests for the main.py command line
"""

import json

import pytest

from main import cli

HEADER = "step,samples,batch_reward,running_avg,wnorm_1,wnorm_2,wnorm_3"


class TestShowConfig:

    def test_wm_direct_reg_betas(self, capsys):
        assert cli(["show-config", "wm_direct_reg"]) == 0
        out = capsys.readouterr().out
        assert "β=(0, 1e-05, 0.001)" in out

    def test_lists_full_scale_presets(self, capsys):
        assert cli(["show-config"]) == 0
        out = capsys.readouterr().out
        for name in ("global_reinforce", "wm_reinforce", "wm_reinforce_reg", "wm_direct", "wm_direct_reg"):
            assert f"📋 {name}:" in out

    def test_unknown_preset(self):
        assert cli(["show-config", "nope"]) == 2


class TestUsage:

    def test_unknown_flag(self):
        assert cli(["train", "--bogus"]) == 2

    def test_missing_command(self):
        assert cli([]) == 2

    def test_help(self):
        assert cli(["--help"]) == 0


class TestTrain:

    def test_train_preset_writes_csv(self, tmp_path):
        out = tmp_path / "run.csv"
        code = cli(["train", "--preset", "wm_direct_reg", "--total-samples", "256", "--out", str(out)])
        assert code == 0
        assert out.read_text(encoding="utf-8").splitlines()[0] == HEADER

    def test_train_config_file(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"env": "mux:k=1", "hidden_sizes": [3], "batch_size": 4,
                                    "total_samples": 40, "output": "run.csv"}), encoding="utf-8")
        assert cli(["train", "--config", str(path), "--seed", "5"]) == 0
        assert (tmp_path / "run.csv").exists()

    def test_invalid_total_samples(self):
        assert cli(["train", "--preset", "wm_direct", "--total-samples", "100"]) == 2

    def test_checkpoint_and_resume(self, tmp_path):
        ckpt = tmp_path / "ckpt.json"
        args = ["train", "--preset", "desk_wm_reinforce_reg", "--out", str(tmp_path / "a.csv")]
        assert cli(args + ["--total-samples", "640", "--checkpoint", str(ckpt)]) == 0
        assert cli(args + ["--total-samples", "1280", "--resume", str(ckpt)]) == 0
        lines = (tmp_path / "a.csv").read_text(encoding="utf-8").splitlines()
        assert lines[1].startswith("6,768,")


class TestVerify:

    def test_verify_passes(self, tmp_path):
        report = tmp_path / "report.json"
        assert cli(["verify", "--report", str(report)]) == 0
        data = json.loads(report.read_text(encoding="utf-8"))
        assert data["passed"] is True

    def test_budget_too_small_fails(self):
        assert cli(["verify", "--budget", "hidden_bits=1"]) == 1

    def test_bad_budget(self):
        assert cli(["verify", "--budget", "bits=3"]) == 2


class TestSweep:

    def test_sweep_presets(self, tmp_path, capsys):
        code = cli(["sweep", "--preset", "desk_global_reinforce", "--preset", "desk_wm_direct_reg",
                    "--seeds", "0,1", "--total-samples", "256", "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "desk_wm_direct_reg_seed1.csv").exists()
        assert "📊 desk_global_reinforce" in capsys.readouterr().out

    def test_bad_seeds(self, tmp_path):
        assert cli(["sweep", "--preset", "wm_direct", "--seeds", "a,b", "--out-dir", str(tmp_path)]) == 2
