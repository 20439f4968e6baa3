import json

import pytest
from click.testing import CliRunner

from compembed.cli import main

# three hand-built partitions over {0..4}: every pair of categories is
# separated by at least one of them, so verification must pass
HAND_PARTITIONS = [
    [[0], [1, 3, 4], [2]],
    [[0, 1, 3], [2, 4]],
    [[0, 3], [1, 2, 4]],
]


@pytest.fixture
def runner():
    return CliRunner()


class TestVerify:
    def test_hand_example_passes(self, runner, tmp_path):
        p = tmp_path / "classes.json"
        p.write_text(json.dumps(HAND_PARTITIONS))
        res = runner.invoke(
            main, ["verify", "--kind", "explicit", "--domain-size", "5", "--classes-file", str(p)]
        )
        assert res.exit_code == 0, res.output
        assert "PASS" in res.output
        assert "injective" in res.output

    def test_hash_fails_with_witness(self, runner):
        res = runner.invoke(main, ["verify", "--kind", "hash", "--domain-size", "10", "--moduli", "4"])
        assert res.exit_code == 1
        assert "FAIL" in res.output and "witness" in res.output

    def test_crt_coprime_passes(self, runner):
        res = runner.invoke(main, ["verify", "--kind", "crt", "--domain-size", "35", "--moduli", "5,7"])
        assert res.exit_code == 0, res.output

    def test_crt_non_coprime_rejected(self, runner):
        res = runner.invoke(main, ["verify", "--kind", "crt", "--domain-size", "24", "--moduli", "4,6"])
        assert res.exit_code == 2
        assert "FAIL construction" in res.output

    def test_qr_passes(self, runner):
        res = runner.invoke(main, ["verify", "--kind", "qr", "--domain-size", "1000", "--moduli", "32"])
        assert res.exit_code == 0, res.output

    def test_large_domain_requires_sampled_flag(self, runner):
        args = ["verify", "--kind", "qr", "--domain-size", "1000000", "--moduli", "997"]
        res = runner.invoke(main, args)
        assert res.exit_code == 2
        res2 = runner.invoke(main, args + ["--sampled"])
        assert res2.exit_code == 0
        assert "sampled" in res2.output


class TestParams:
    def test_table_and_ratio(self, runner):
        full = runner.invoke(
            main, ["params", "--scheme", "full", "--cardinalities", "10000,10000"]
        )
        qr = runner.invoke(
            main,
            ["params", "--scheme", "qr_mult", "--collisions", "4", "--cardinalities", "10000,10000"],
        )
        assert full.exit_code == 0 and qr.exit_code == 0
        total_full = int(full.output.strip().splitlines()[-1].split(",")[-1])
        total_qr = int(qr.output.strip().splitlines()[-1].split(",")[-1])
        assert total_full == 2 * 10000 * 16
        # rows m=2500 and 4 per feature: compression just under 4x
        assert total_qr == 2 * (2500 + 4) * 16
        assert 3.5 < total_full / total_qr < 4.5

    def test_threshold_sweep_monotone(self, runner):
        res = runner.invoke(
            main,
            [
                "params",
                "--scheme",
                "qr_mult",
                "--cardinalities",
                "15,150,1500,15000",
                "--threshold-sweep",
                "1,20,200,2000,20000",
            ],
        )
        assert res.exit_code == 0, res.output
        lines = res.output.strip().splitlines()
        assert lines[0] == "threshold,total_embedding_params"
        totals = [int(line.split(",")[1]) for line in lines[1:]]
        assert totals == sorted(totals)
        assert totals[-1] == (15 + 150 + 1500 + 15000) * 16  # all-full at huge threshold


class TestGradcheckCommand:
    def test_passes(self, runner):
        res = runner.invoke(main, ["gradcheck", "--seed", "1"])
        assert res.exit_code == 0, res.output
        assert "FAIL" not in res.output
        assert res.output.count("PASS") >= 8

    def test_inject_bug_self_test(self, runner):
        res = runner.invoke(main, ["gradcheck", "--inject-bug"])
        # exit 0 means the checker correctly flagged the corrupted gradients
        assert res.exit_code == 0, res.output
        assert "FAIL" in res.output


class TestBench:
    def test_zero_iterations_empty_report(self, runner):
        res = runner.invoke(main, ["bench", "--iterations", "0"])
        assert res.exit_code == 0
        assert json.loads(res.output) == {}

    def test_small_report_structure(self, runner):
        res = runner.invoke(
            main,
            ["bench", "--scheme", "qr_mult", "--domain-size", "10000", "--iterations", "3",
             "--batch-size", "256"],
        )
        assert res.exit_code == 0, res.output
        report = json.loads(res.output)
        assert report["params"] == (2500 + 4) * 16
        assert report["resident_bytes_f32"] == report["params"] * 4
        for stats in report["backends"].values():
            assert stats["lookups_per_sec"] > 0


class TestTrain:
    def test_quick_smoke_summary(self, runner, tmp_path):
        out = tmp_path / "run"
        res = runner.invoke(
            main,
            ["train", "--quick", "--scheme", "qr_mult", "--trials", "1", "--seed", "3",
             "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["schema_version"] == 1
        assert 0.0 < summary["test_loss_mean"] < 2.0
        assert 0.0 <= summary["test_accuracy_mean"] <= 1.0
        assert summary["params"] > 0
        head = (out / "metrics.csv").read_text().splitlines()[0]
        assert head == "trial,epoch,step,train_loss,val_loss,val_accuracy"
        assert (out / "run_config.json").exists()

    def test_op_shorthand_maps_to_scheme(self, runner, tmp_path):
        out = tmp_path / "run"
        res = runner.invoke(
            main,
            ["train", "--quick", "--op", "mult", "--trials", "1", "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        cfg = json.loads((out / "run_config.json").read_text())
        assert cfg["model"]["scheme"] == "comp_mult"

    def test_deterministic_reruns_byte_identical(self, runner, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = runner.invoke(
                main,
                ["train", "--quick", "--scheme", "hash", "--trials", "2", "--seed", "11",
                 "--out", str(out)],
            )
            assert res.exit_code == 0, res.output
            outputs.append((out / "metrics.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_config_file_with_flag_override(self, runner, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "dataset": "synthetic",
            "synthetic": {"n": 1400, "cardinality": 60, "num_features": 2},
            "model": {"scheme": "full", "divisor": 16},
            "trials": 1,
            "eval_every": 5,
        }))
        out = tmp_path / "run"
        res = runner.invoke(
            main,
            ["train", "--config", str(cfg_path), "--scheme", "comp_add", "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        cfg = json.loads((out / "run_config.json").read_text())
        assert cfg["model"]["scheme"] == "comp_add"  # flag wins
        assert cfg["synthetic"]["n"] == 1400

    def test_missing_criteo_path_errors(self, runner):
        res = runner.invoke(main, ["train", "--dataset", "criteo", "--trials", "1"])
        assert res.exit_code != 0
