import json

import numpy as np
import pytest

from bayeshead.cli import main


def run(argv, capsys=None):
    code = main(argv)
    return code


@pytest.fixture
def blob_files(tmp_path):
    """Synthesized train/dev pair plus a trained linear checkpoint."""
    data = tmp_path / "data.csv"
    assert main([
        "synth", "--kind", "blobs", "--n", "200", "--d", "8", "--k", "2",
        "--separation", "10", "--noise", "0.5", "--seed", "7",
        "--out", str(data),
    ]) == 0
    ckpt = tmp_path / "linear.json"
    assert main([
        "train", "--head", "linear", "--data", str(data), "--dev-fraction", "0.25",
        "--epochs", "20", "--seed", "7", "--out", str(ckpt),
    ]) == 0
    return tmp_path, data, ckpt


class TestPipeline:
    def test_train_eval_perfect_uar(self, blob_files, capsys):
        tmp_path, data, ckpt = blob_files
        assert main(["eval", "--data", str(data), "--ckpt", str(ckpt)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["uar"] == 1.0

    def test_bayes_train_predict_rows_sum_to_one(self, blob_files):
        tmp_path, data, ckpt = blob_files
        bckpt = tmp_path / "bayes.json"
        assert main([
            "train", "--head", "bayes", "--data", str(data), "--epochs", "10",
            "--prior-from", str(ckpt), "--seed", "7", "--out", str(bckpt),
        ]) == 0
        table = tmp_path / "pred.csv"
        assert main([
            "predict", "--ckpt", str(bckpt), "--data", str(data),
            "--samples", "500", "--seed", "11", "--out", str(table),
        ]) == 0
        rows = np.loadtxt(table, delimiter=",", skiprows=1, usecols=(1, 2))
        assert np.max(np.abs(rows.sum(axis=1) - 1.0)) < 1e-6

    def test_fuse_matches_module_example(self, tmp_path):
        for name, row in (("a", "0.6,0.4"), ("b", "0.2,0.8")):
            (tmp_path / f"{name}.csv").write_text(f"id,p0,p1\ne0,{row}\n")
            (tmp_path / f"{name}.manifest.json").write_text(
                '{"kind": "probabilities", "source": "t"}'
            )
        out = tmp_path / "fused.csv"
        assert main([
            "fuse", "--tables", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
            "--weights", "1.0", "0.5", "--out", str(out),
        ]) == 0
        row = out.read_text().splitlines()[1].split(",")
        assert float(row[2]) > float(row[1])  # class 1 wins

    def test_ensemble_vote(self, tmp_path):
        for name, row in (("a", "0.9,0.1"), ("b", "0.8,0.2"), ("c", "0.1,0.9")):
            (tmp_path / f"{name}.csv").write_text(f"id,p0,p1\ne0,{row}\n")
            (tmp_path / f"{name}.manifest.json").write_text(
                '{"kind": "probabilities", "source": "t"}'
            )
        out = tmp_path / "vote.csv"
        assert main([
            "ensemble", "--mode", "vote", "--tables",
            *(str(tmp_path / f"{n}.csv") for n in "abc"), "--out", str(out),
        ]) == 0
        assert out.read_text().splitlines()[1] == "e0,1,0"

    def test_merge_labels_and_concat(self, tmp_path):
        for name, manifest_names in (("a", ["no", "yes"]), ("b", ["affil", "presta"])):
            (tmp_path / f"{name}.csv").write_text("id,f0,y\nr0,1,0\nr1,2,1\n")
            (tmp_path / f"{name}.manifest.json").write_text(json.dumps({
                "task": "classification", "num_features": 1, "num_outputs": 2,
                "class_names": manifest_names, "provenance": {},
            }))
        merged = tmp_path / "merged.csv"
        assert main(["merge-labels", "--a", str(tmp_path / "a.csv"),
                     "--b", str(tmp_path / "b.csv"), "--out", str(merged)]) == 0
        manifest = json.loads((tmp_path / "merged.manifest.json").read_text())
        assert manifest["class_names"] == [
            "no_affil", "yes_affil", "no_presta", "yes_presta"
        ]
        joint = tmp_path / "joint.csv"
        assert main(["concat", "--a", str(tmp_path / "a.csv"),
                     "--b", str(tmp_path / "b.csv"), "--out", str(joint)]) == 0
        assert json.loads((tmp_path / "joint.manifest.json").read_text())["num_features"] == 2

    def test_uncertainty_outputs(self, blob_files):
        tmp_path, data, ckpt = blob_files
        bckpt = tmp_path / "bayes.json"
        main(["train", "--head", "bayes", "--data", str(data), "--epochs", "5",
              "--prior-from", str(ckpt), "--seed", "7", "--out", str(bckpt)])
        report = tmp_path / "unc.json"
        svg = tmp_path / "unc.svg"
        code = main(["uncertainty", "--ckpt", str(bckpt), "--data", str(data),
                     "--samples", "20", "--seed", "3", "--out", str(report),
                     "--svg", str(svg)])
        assert code == 0
        payload = json.loads(report.read_text())
        assert payload["num_samples"] == 20
        # separable data: likely single-sided, svg only for two-sided reports
        assert payload["single_sided"] == (not svg.exists())

    def test_tune_fusion(self, tmp_path, capsys):
        n = 20
        labels = [i % 2 for i in range(n)]
        good_rows = "\n".join(
            f"e{i},{0.9 if y == 0 else 0.1:.1f},{0.1 if y == 0 else 0.9:.1f}"
            for i, y in enumerate(labels)
        )
        bad_rows = "\n".join(
            f"e{i},{0.1 if y == 0 else 0.9:.1f},{0.9 if y == 0 else 0.1:.1f}"
            for i, y in enumerate(labels)
        )
        for name, rows in (("good", good_rows), ("bad", bad_rows)):
            (tmp_path / f"{name}.csv").write_text(f"id,p0,p1\n{rows}\n")
            (tmp_path / f"{name}.manifest.json").write_text(
                '{"kind": "probabilities", "source": "t"}'
            )
        dev_rows = "\n".join(f"e{i},0,{y}" for i, y in enumerate(labels))
        (tmp_path / "dev.csv").write_text(f"id,f0,y\n{dev_rows}\n")
        (tmp_path / "dev.manifest.json").write_text(json.dumps({
            "task": "classification", "num_features": 1, "num_outputs": 2,
            "class_names": ["a", "b"], "provenance": {},
        }))
        code = main(["tune-fusion", "--tables", str(tmp_path / "good.csv"),
                     str(tmp_path / "bad.csv"), "--grid", "0,1", "0,1",
                     "--data", str(tmp_path / "dev.csv")])
        assert code == 0
        out = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert out["best_weights"] == [1.0, 0.0]
        assert out["best_uar"] == 1.0


class TestContracts:
    def test_user_error_exit_code(self, tmp_path, capsys):
        assert main(["eval", "--data", str(tmp_path / "missing.csv"),
                     "--ckpt", str(tmp_path / "nope.json")]) == 1
        assert "error" in capsys.readouterr().err

    def test_eval_needs_exactly_one_source(self, tmp_path, capsys):
        assert main(["eval", "--data", "x.csv"]) == 1

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_unknown_flag_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus", "1"])
        assert exc.value.code != 0

    def test_train_config_file_with_flag_override(self, blob_files):
        tmp_path, data, ckpt = blob_files
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"epochs": 2, "learning_rate": 0.05}')
        out = tmp_path / "from_cfg.json"
        assert main(["train", "--head", "linear", "--data", str(data),
                     "--config", str(cfg), "--epochs", "3",
                     "--seed", "1", "--out", str(out)]) == 0
        report = json.loads(out.with_suffix(".report.json").read_text())
        assert len(report["epochs"]) == 3  # flag overrides config file

    def test_byte_identical_reruns(self, tmp_path):
        def pipeline(root):
            root.mkdir()
            data = root / "d.csv"
            main(["synth", "--kind", "blobs", "--n", "80", "--d", "4", "--k", "2",
                  "--separation", "5", "--noise", "0.5", "--seed", "3",
                  "--out", str(data)])
            ckpt = root / "l.json"
            main(["train", "--head", "linear", "--data", str(data), "--epochs", "5",
                  "--seed", "3", "--out", str(ckpt)])
            table = root / "p.csv"
            main(["predict", "--ckpt", str(ckpt), "--data", str(data),
                  "--out", str(table)])
            return [data, data.with_suffix(""), ckpt, table]

        r1, r2 = tmp_path / "run1", tmp_path / "run2"
        pipeline(r1)
        pipeline(r2)
        for f1 in sorted(r1.iterdir()):
            f2 = r2 / f1.name
            assert f1.read_bytes() == f2.read_bytes(), f1.name
