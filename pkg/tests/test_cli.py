import csv
import json

import numpy as np
import pytest
import yaml

from bqkit import bench
from bqkit.algorithms import ALGORITHMS, get_algorithm
from bqkit.bench import (
    RESULT_COLUMNS,
    ResultRow,
    build_biquality,
    emit_results,
    ingest_csv,
    load_config,
    read_results,
    run_benchmark,
)
from bqkit.cli import main
from bqkit.modelsel import MetricReport, evaluate, kfold_splits, make_biquality_cv
from oracles import gaussian_blobs


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        out.writerows(rows)
    return path


def gaussian_csv(path, n=600, seed=0, sep=1.0):
    rng = np.random.default_rng(seed)
    X, y = gaussian_blobs(rng, n, sep=sep)
    names = np.array(["neg", "pos"])
    rows = [[format(a, ".17g"), format(b, ".17g"), names[k]] for (a, b), k in zip(X, y)]
    return write_csv(path, ["f1", "f2", "target"], rows)


def write_config(path, data_path, algorithms, corruption=None, seeds=(0, 1), folds=3, fraction=0.2):
    cfg = {
        "dataset": {"path": str(data_path), "label_column": "target", "trusted_fraction": fraction},
        "corruption": corruption or {"type": "label_noise", "noise_ratio": 0.3},
        "algorithms": algorithms,
        "seeds": list(seeds),
        "cv_folds": folds,
    }
    path.write_text(yaml.safe_dump(cfg))
    return path


def strip_wall_time(path):
    lines = path.read_text().splitlines()
    at = lines[0].split(",").index("wall_time")
    return [",".join(c for i, c in enumerate(line.split(",")) if i != at) for line in lines]


class TestIngest:
    def test_factorization_order(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", ["x", "y"], [[1, "a"], [2, "b"], [3, "a"]])
        ds = ingest_csv(p, "y")
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.n_classes == 2 and ds.class_names == ["a", "b"]
        assert ds.n_trusted == 3

    def test_missing_column(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", ["x", "y"], [[1, "a"]])
        with pytest.raises(ValueError, match="'label'"):
            ingest_csv(p, "label")

    def test_bad_quality(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", ["x", "y", "q"], [[1, "a", 1], [2, "b", 2]])
        with pytest.raises(ValueError, match="sample_quality must be 0 or 1"):
            ingest_csv(p, "y", "q")

    def test_non_numeric_feature(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", ["x", "y"], [[1, "a"], ["oops", "b"]])
        with pytest.raises(ValueError, match="non-numeric"):
            ingest_csv(p, "y")

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="empty"):
            ingest_csv(p, "y")


def make_row(h="abc", acc=0.1 + 0.2):
    return ResultRow("naive_all", 0, 1, MetricReport(acc, 1 / 3, np.pi, 7), 0.5, h)


class TestEmit:
    def test_single_row_csv(self, tmp_path):
        emit_results([make_row()], "csv", tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 2
        assert tuple(lines[0].split(",")) == RESULT_COLUMNS

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip_exact(self, tmp_path, fmt):
        row = make_row()
        emit_results([row], fmt, tmp_path / ("r." + fmt))
        (back,) = read_results(tmp_path / ("r." + fmt), fmt)
        assert list(back) == list(RESULT_COLUMNS)
        assert float(back["accuracy"]) == row.metrics.accuracy
        assert float(back["balanced_accuracy"]) == 1 / 3
        assert float(back["log_loss"]) == np.pi

    def test_json_is_valid(self, tmp_path):
        emit_results([make_row(), make_row()], "json", tmp_path / "r.json")
        assert len(json.loads((tmp_path / "r.json").read_text())) == 2

    def test_mixed_hash(self, tmp_path):
        with pytest.raises(ValueError, match="mixed config_hash"):
            emit_results([make_row("a"), make_row("b")], "csv", tmp_path / "r.csv")

    def test_unwritable(self, tmp_path):
        with pytest.raises(ValueError, match="cannot write"):
            emit_results([make_row()], "csv", tmp_path / "missing" / "r.csv")


class TestConfig:
    def test_registry(self):
        assert len(ALGORITHMS) == 11
        with pytest.raises(ValueError, match="unknown algorithm"):
            get_algorithm("svm")

    def test_unknown_algorithm_fails_before_running(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        cfg = write_config(tmp_path / "c.yaml", data, ["naive_all", "nope"])
        with pytest.raises(ValueError, match="unknown algorithm"):
            load_config(cfg)

    def test_exactly_one_quality_source(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        raw = {"dataset": {"path": str(data), "label_column": "target"}, "algorithms": ["naive_all"]}
        with pytest.raises(ValueError, match="exactly one"):
            bench.resolve_config(raw)
        raw["dataset"].update(trusted_fraction=0.2, quality_column="q")
        with pytest.raises(ValueError, match="exactly one"):
            bench.resolve_config(raw)

    def test_defaults_share_hash(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        a = write_config(tmp_path / "a.yaml", data, ["naive_all"], {"type": "label_noise"})
        b = write_config(tmp_path / "b.yaml", data, ["naive_all"], {"type": "label_noise", "noise_ratio": 0.3})
        assert bench.config_hash(load_config(a)) == bench.config_hash(load_config(b))

    def test_grid_expansion(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        cfg = write_config(tmp_path / "c.yaml", data, [{"name": "naive_all", "params": {"l2_penalty": [0.1, 1.0]}}])
        labels = [v["label"] for v in load_config(cfg)["algorithms"]]
        assert labels == ["naive_all[l2_penalty=0.1]", "naive_all[l2_penalty=1.0]"]


class TestBenchmark:
    def test_summary_matches_rows(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        config = load_config(write_config(tmp_path / "c.yaml", data, ["naive_all", "trusted_only"]))
        result = run_benchmark(config)
        assert len(result.rows) == 2 * 2 * 3
        assert len({r.config_hash for r in result.rows}) == 1
        for s in result.summary:
            acc = [r.metrics.accuracy for r in result.rows if r.algorithm == s["algorithm"]]
            assert s["accuracy_mean"] == pytest.approx(np.mean(acc), abs=1e-15)

    def test_trusted_only_matches_library(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        config = load_config(write_config(tmp_path / "c.yaml", data, ["trusted_only"], {"type": "none"}, seeds=[4]))
        rows = run_benchmark(config).rows
        clean = ingest_csv(data, "target")
        ds = build_biquality(clean, config, 4)
        base = kfold_splits(ds.n_samples, 3, bench._seed(4, bench._FOLDS), labels=ds.labels)
        for row, split in zip(rows, make_biquality_cv(base, ds.sample_quality)):
            model = get_algorithm("trusted_only")(ds.subset(split.train_indices))
            assert row.metrics.accuracy == evaluate(model, ds, split.test_indices).accuracy

    def test_failures_are_recorded(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv")
        config = load_config(write_config(
            tmp_path / "c.yaml", data,
            [{"name": "naive_all", "params": {"l2_penalty": -1.0}}, "naive_all"]))
        rows = run_benchmark(config).rows
        bad = [r for r in rows if r.algorithm.startswith("naive_all[")]
        assert all(r.error and r.metrics is None for r in bad)
        assert all(not r.error for r in rows if r.algorithm == "naive_all")

    @staticmethod
    def _irbl_margin(tmp_path):
        data = gaussian_csv(tmp_path / "d.csv", n=1000, sep=1.0)
        config = load_config(write_config(
            tmp_path / "c.yaml", data, ["naive_all", "irbl"], seeds=range(5)))
        summary = {s["algorithm"]: s for s in run_benchmark(config).summary}
        return summary["irbl"]["accuracy_mean"] - summary["naive_all"]["accuracy_mean"]

    @pytest.mark.xfail(
        reason="uniform noise keeps the Bayes boundary, so naive_all is already consistent; "
        "the measured margin is a tie whose sign depends on the draw (-0.0036 here)",
        strict=False,
    )
    def test_irbl_beats_naive_under_uniform_noise(self, tmp_path):
        assert self._irbl_margin(tmp_path) >= 0

    def test_irbl_ties_naive_under_uniform_noise(self, tmp_path):
        margin = self._irbl_margin(tmp_path)
        print("irbl - naive_all mean accuracy: %+.4f" % margin)
        assert abs(margin) < 0.01


class TestCommands:
    @pytest.fixture
    def setup(self, tmp_path):
        data = gaussian_csv(tmp_path / "d.csv", n=300)
        cfg = write_config(tmp_path / "c.yaml", data, ["naive_all", "irbl", "kkmm"], seeds=[0, 1])
        return tmp_path, cfg

    def test_benchmark_byte_identical_and_jobs_invariant(self, setup):
        tmp, cfg = setup
        outs = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp / ("%s.csv" % name)
            assert main(["benchmark", "--config", str(cfg), "--output", str(out), "--jobs", str(jobs)]) == 0
            outs.append(strip_wall_time(out))
        assert outs[0] == outs[1] == outs[2]
        assert (tmp / "a.summary.csv").exists()

    def test_json_output(self, setup):
        tmp, cfg = setup
        out = tmp / "r.json"
        assert main(["benchmark", "--config", str(cfg), "--output", str(out), "--format", "json"]) == 0
        rows = json.loads(out.read_text())
        assert len(rows) == 3 * 2 * 3 and list(rows[0]) == list(RESULT_COLUMNS)

    def test_seed_override(self, setup):
        tmp, cfg = setup
        out = tmp / "r.csv"
        assert main(["benchmark", "--config", str(cfg), "--output", str(out), "--seed-override", "7"]) == 0
        assert {r["seed"] for r in read_results(out, "csv")} == {"7"}

    def test_print_config(self, setup, capsys):
        _, cfg = setup
        assert main(["validate", "--config", str(cfg), "--print-config"]) == 0
        resolved = yaml.safe_load(capsys.readouterr().out)
        assert resolved["corruption"] == {"type": "label_noise", "noise_ratio": 0.3, "noise_matrix": None}
        assert len(resolved["dataset"]["sha256"]) == 64

    def test_validate(self, setup, capsys):
        _, cfg = setup
        assert main(["validate", "--config", str(cfg)]) == 0
        assert "trusted: 60, untrusted: 240" in capsys.readouterr().out

    def test_corrupt_round_trips_through_ingest(self, setup):
        tmp, cfg = setup
        out = tmp / "corrupt.csv"
        assert main(["corrupt", "--config", str(cfg), "--output", str(out)]) == 0
        ds = ingest_csv(out, "target", "sample_quality")
        assert (ds.n_trusted, ds.n_untrusted) == (60, 240)
        clean = ingest_csv(tmp / "d.csv", "target")
        np.testing.assert_array_equal(ds.features, clean.features)
        assert 0 < np.mean(ds.labels != clean.labels) < 0.5

    def test_train_writes_predictions(self, setup):
        tmp, cfg = setup
        out = tmp / "pred.csv"
        assert main(["train", "--config", str(cfg), "--output", str(out), "--algorithm", "irbl"]) == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 300 and set(rows[0]) == {"row", "prediction", "proba_neg", "proba_pos"}
        assert main(["train", "--config", str(cfg), "--output", str(out), "--algorithm", "plugin"]) == 1

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("dataset: {path: nowhere.csv, label_column: y, trusted_fraction: 0.1}\nalgorithms: [irbl]\n")
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "not found" in capsys.readouterr().err
