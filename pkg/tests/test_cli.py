import csv
import math
import os

import numpy as np
import pytest

from dbnmix.cli import (build_train_config, main, parse_gamma, read_config_file,
                        reproduce_fig1)
from dbnmix.errors import ConfigError


def run(args):
    return main(args)


@pytest.fixture()
def moons_prefix(tmp_path):
    prefix = str(tmp_path / "moons")
    code = run(["synth", "--kind", "moons", "--n-majority", "200", "--ratio", "20",
                "--noise-sd", "0.15", "--test-per-class", "50", "--seed", "0",
                "--out", prefix])
    assert code == 0
    return prefix


class TestParsing:
    def test_parse_gamma_inf(self):
        assert parse_gamma("inf") == math.inf
        assert parse_gamma("2.5") == 2.5
        with pytest.raises(ConfigError):
            parse_gamma("zero")

    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_unknown_flag_exits_two(self, capsys):
        assert run(["train", "--frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand_exits_two(self):
        assert run(["dance"]) == 2

    def test_invalid_gamma_value_exits_one(self, moons_prefix, capsys):
        code = run(["train", "--dataset", moons_prefix, "--method", "dbn-mix",
                    "--gamma", "-1", "--epochs", "1"])
        assert code == 1
        assert "gamma" in capsys.readouterr().err

    def test_config_file_merge_and_cli_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("method=dbn\nepochs=7\nlr=0.05\ngamma=inf\n# comment\n")
        values = read_config_file(str(cfg))
        assert values == {"method": "dbn", "epochs": 7, "learning_rate": 0.05,
                          "gamma": math.inf}

        class Args:
            config = str(cfg)
            lr = None
            epochs = 9  # CLI flag wins

        for field in ("method", "batch_size", "momentum", "weight_decay",
                      "decay_epochs", "decay_factor", "alpha", "gamma", "eta",
                      "epsilon", "hidden", "head_hidden", "seed", "drop_last",
                      "per_example_lambda", "bilateral_mixup",
                      "temperature_scaling"):
            setattr(Args, field, None)
        config = build_train_config(Args)
        assert config.method == "dbn"
        assert config.epochs == 9
        assert config.learning_rate == 0.05

    def test_config_file_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_speed=9\n")
        with pytest.raises(ConfigError):
            read_config_file(str(cfg))


class TestSynth:
    def test_moons_writes_train_and_test(self, moons_prefix):
        assert os.path.exists(moons_prefix + "_train.csv")
        assert os.path.exists(moons_prefix + "_test.csv")

    def test_blobs_binary_format(self, tmp_path):
        prefix = str(tmp_path / "blobs")
        code = run(["synth", "--kind", "blobs", "--classes", "4", "--n-max", "60",
                    "--ratio", "10", "--test-per-class", "20", "--format", "binary",
                    "--out", prefix])
        assert code == 0
        assert os.path.exists(prefix + "_train.bin")
        from dbnmix.datasets import load_dataset
        ds = load_dataset(prefix + "_train.bin", "binary")
        assert ds.num_classes == 4
        assert ds.class_counts[0] == 60

    def test_impossible_profile_exits_one(self, tmp_path, capsys):
        code = run(["synth", "--kind", "moons", "--n-majority", "10",
                    "--ratio", "100", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrainEvalPipeline:
    def test_train_eval_boundary_round_trip(self, moons_prefix, tmp_path, capsys):
        out = str(tmp_path / "run")
        code = run(["train", "--dataset", moons_prefix, "--method", "dbn-mix",
                    "--gamma", "inf", "--epochs", "3", "--batch-size", "64",
                    "--hidden", "8", "--seed", "1", "--out", out])
        assert code == 0
        assert os.path.exists(os.path.join(out, "model.ckpt"))
        assert os.path.exists(os.path.join(out, "record.csv"))
        assert os.path.exists(os.path.join(out, "summary.json"))

        code = run(["eval", "--checkpoint", os.path.join(out, "model.ckpt"),
                    "--test-file", moons_prefix + "_test.csv",
                    "--groups-from", moons_prefix + "_train.csv",
                    "--out", str(tmp_path / "acc.csv")])
        assert code == 0
        assert "all=" in capsys.readouterr().out

        grid_path = str(tmp_path / "grid.csv")
        code = run(["export-boundary", "--checkpoint", os.path.join(out, "model.ckpt"),
                    "--data", moons_prefix + "_train.csv",
                    "--resolution", "4", "--out", grid_path])
        assert code == 0
        with open(grid_path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "y", "pred", "p0"]
        assert len(rows) == 1 + 16

    def test_branch_eval_mode(self, moons_prefix, tmp_path):
        out = str(tmp_path / "run")
        run(["train", "--dataset", moons_prefix, "--method", "dbn", "--epochs", "2",
             "--hidden", "8", "--out", out])
        code = run(["eval", "--checkpoint", os.path.join(out, "model.ckpt"),
                    "--test-file", moons_prefix + "_test.csv",
                    "--mode", "rebalancing-branch"])
        assert code == 0

    def test_missing_dataset_arguments_exit_one(self, capsys):
        assert run(["train", "--method", "erm", "--epochs", "1"]) == 1
        assert "dataset" in capsys.readouterr().err


class TestSweepCommand:
    def test_sweep_csv_written(self, moons_prefix, tmp_path):
        out = str(tmp_path / "sweep.csv")
        code = run(["sweep", "--dataset", moons_prefix, "--method", "dbn-mix",
                    "--epochs", "1", "--hidden", "8",
                    "--sweep-gamma", "1,inf", "--sweep-eta", "1,3",
                    "--out", out])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["eta", "epsilon", "alpha", "gamma", "seed",
                           "accuracy", "error"]
        assert len(rows) == 1 + 4
        gammas = {row[3] for row in rows[1:]}
        assert gammas == {"1.0", "inf"}


class TestReproduceFig1:
    def test_file_count_and_summary_schema(self, tmp_path):
        out = str(tmp_path / "fig1")
        seeds = [0, 1]
        rows = reproduce_fig1(out, seeds, epochs=3, noise_sd=0.15, resolution=3,
                              n_majority=120, imbalance_ratio=20.0,
                              test_per_class=30)
        grids = [f for f in os.listdir(out) if f.startswith("boundary_")]
        assert len(grids) == 3 * len(seeds)
        assert os.path.exists(os.path.join(out, "summary.csv"))
        with open(os.path.join(out, "summary.csv")) as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == ["method", "seed", "majority_recall",
                                         "minority_recall"]
            parsed = list(reader)
        assert len(parsed) == len(rows) == 3 * len(seeds)
        for row in parsed:
            assert row["method"] in ("erm", "mixup", "sbn-mix")
            assert 0.0 <= float(row["minority_recall"]) <= 1.0

    def test_cli_entry(self, tmp_path):
        out = str(tmp_path / "fig1")
        code = run(["reproduce-fig1", "--out", out, "--seeds", "0",
                    "--epochs", "2", "--resolution", "2"])
        assert code == 0
        assert len([f for f in os.listdir(out) if f.startswith("boundary_")]) == 3
