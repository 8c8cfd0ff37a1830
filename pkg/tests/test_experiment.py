"""Tests for the benchmark runner, report files, and the CLI."""

import csv
import json
import os

import numpy as np
import pytest

from pairq.cli import main
from pairq.datasets import SyntheticSpec, gen_synthetic, read_ivecs, write_fvecs
from pairq.experiment import (
    ExperimentConfig,
    run_experiment,
    write_report_csv,
    write_report_json,
)


def tiny_spec(**kw):
    defaults = dict(dim=8, num_database=400, num_train_queries=200,
                    num_eval_queries=16, database_decay=1.5, query_decay=3.0)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


def tiny_config(**kw):
    defaults = dict(
        task="scalar",
        methods=("opq", "pairq"),
        block_counts=(2,),
        codebook_size=8,
        outer_iters=1,
        kmeans_iters=8,
        seed=0,
        synthetic=tiny_spec(),
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_unknown_task(self):
        with pytest.raises(ValueError, match="task"):
            run_experiment(tiny_config(task="l1"))

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            run_experiment(tiny_config(methods=("opq", "aq")))

    def test_bias_correction_needs_sqdist(self):
        with pytest.raises(ValueError, match="sqdist"):
            run_experiment(tiny_config(methods=("opq-bc",)))

    def test_requires_exactly_one_source(self):
        with pytest.raises(ValueError, match="synthetic spec or"):
            run_experiment(tiny_config(synthetic=None))
        with pytest.raises(ValueError, match="not both"):
            run_experiment(tiny_config(database_path="x.fvecs"))


class TestRunExperiment:
    def test_scalar_grid(self):
        report = run_experiment(tiny_config(block_counts=(2, 4)))
        assert len(report.cells) == 4
        for cell in report.cells:
            assert cell.error is None
            assert cell.scalar_mse is not None and cell.scalar_mse > 0
            assert cell.rel_dist_error is None
            assert cell.num_pairs == 16 * 400
            assert "eval" in cell.timings
        pairq_cell = report.cell("pairq", 2)
        assert pairq_cell.error_reduction_vs_opq_pct is not None
        assert report.query_moment_condition > 2.0

    def test_sqdist_grid_with_bias_correction(self):
        report = run_experiment(
            tiny_config(task="sqdist", methods=("opq", "opq-bc", "pairq"))
        )
        assert len(report.cells) == 3
        for cell in report.cells:
            assert cell.error is None, cell.error
            assert cell.scalar_mse is None
            assert cell.rel_dist_error is not None
        raw = report.cell("opq", 2)
        corrected = report.cell("opq-bc", 2)
        # Correction removes most of the negative bias.
        assert abs(corrected.mean_signed_error) < abs(raw.mean_signed_error)
        assert raw.mean_signed_error < 0

    def test_cosine_task_normalizes(self):
        report = run_experiment(tiny_config(task="cosine", methods=("opq",)))
        cell = report.cells[0]
        assert cell.error is None
        # Cosine values live in [-1, 1]; the squared error must too.
        assert cell.scalar_mse < 1.0

    def test_failed_cell_is_isolated(self):
        # No training queries: the transform cannot be learned, so pairq
        # cells fail while the plain quantizer cells survive.
        config = tiny_config(synthetic=tiny_spec(num_train_queries=0))
        report = run_experiment(config)
        opq_cell = report.cell("opq", 2)
        pairq_cell = report.cell("pairq", 2)
        assert opq_cell.error is None
        assert opq_cell.scalar_mse is not None
        assert pairq_cell.error is not None
        assert "query" in pairq_cell.error

    def test_file_based_run(self, tmp_path):
        data = gen_synthetic(tiny_spec(), seed=3)
        db = str(tmp_path / "db.fvecs")
        tq = str(tmp_path / "tq.fvecs")
        eq = str(tmp_path / "eq.fvecs")
        write_fvecs(db, data.database)
        write_fvecs(tq, data.train_queries)
        write_fvecs(eq, data.eval_queries)
        config = tiny_config(synthetic=None, database_path=db,
                             train_queries_path=tq, eval_queries_path=eq)
        report = run_experiment(config)
        assert all(c.error is None for c in report.cells)


class TestReportFiles:
    def test_csv_is_byte_identical_across_reruns(self, tmp_path):
        config = tiny_config()
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        write_report_csv(run_experiment(config), a)
        write_report_csv(run_experiment(config), b)
        assert a.read_bytes() == b.read_bytes()

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "r.csv"
        write_report_csv(run_experiment(tiny_config()), path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[0]["method"] == "opq"
        assert rows[1]["method"] == "pairq"
        assert float(rows[0]["scalar_mse"]) > 0
        assert rows[0]["rel_dist_error"] == ""
        assert int(rows[0]["bytes_per_vector"]) == 2
        assert float(rows[0]["compression_ratio"]) == 16.0

    def test_json_sidecar_holds_config_and_timings(self, tmp_path):
        path = tmp_path / "r.json"
        write_report_json(run_experiment(tiny_config()), path)
        with open(path) as fh:
            payload = json.load(fh)
        assert payload["config"]["task"] == "scalar"
        assert payload["config"]["synthetic"]["dim"] == 8
        assert payload["environment"]["numpy"] == np.__version__
        assert len(payload["cells"]) == 2
        for cell in payload["cells"]:
            assert cell["timings"]["train_encode"] > 0


@pytest.fixture
def workdir(tmp_path):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    yield tmp_path
    os.chdir(cwd)


def run_cli(*args):
    return main([str(a) for a in args])


class TestCli:
    def test_synth_writes_three_files(self, workdir, capsys):
        code = run_cli("synth", "--dim", 6, "--database-size", 50,
                       "--train-queries", 30, "--eval-queries", 10,
                       "--query-decay", 2.0, "--seed", 1, "--out-dir", "data")
        assert code == 0
        for name in ("database", "train_queries", "eval_queries"):
            assert os.path.exists(f"data/{name}.fvecs")
        out = capsys.readouterr().out
        assert "database.fvecs (50 x 6)" in out

    def test_full_workflow_scalar(self, workdir, capsys):
        run_cli("synth", "--dim", 8, "--database-size", 300,
                "--train-queries", 200, "--eval-queries", 12,
                "--query-decay", 3.0, "--out-dir", "data")
        code = run_cli(
            "train", "--mode", "scalar", "--method", "pairq",
            "--database", "data/database.fvecs",
            "--train-queries", "data/train_queries.fvecs",
            "-M", 2, "-K", 8, "--outer-iters", 1, "--kmeans-iters", 8,
            "--out", "model.pairq",
        )
        assert code == 0
        assert "converged" in capsys.readouterr().out
        code = run_cli("encode", "--model", "model.pairq",
                       "--database", "data/database.fvecs",
                       "--mode", "scalar", "--out", "codes.ivecs")
        assert code == 0
        codes = read_ivecs("codes.ivecs")
        assert codes.shape == (300, 2)
        code = run_cli("eval", "--model", "model.pairq",
                       "--database", "data/database.fvecs",
                       "--codes", "codes.ivecs",
                       "--eval-queries", "data/eval_queries.fvecs",
                       "--mode", "scalar", "--out", "metrics.json")
        assert code == 0
        with open("metrics.json") as fh:
            metrics = json.load(fh)
        assert metrics["kind"] == "scalar"
        assert metrics["num_pairs"] == 12 * 300
        assert metrics["mse"] > 0

    def test_sqdist_workflow_with_bias_correction(self, workdir):
        run_cli("synth", "--dim", 6, "--database-size", 200,
                "--train-queries", 100, "--eval-queries", 8,
                "--out-dir", "data")
        code = run_cli(
            "train", "--mode", "sqdist", "--method", "opq", "--mse",
            "--database", "data/database.fvecs",
            "-M", 2, "-K", 8, "--outer-iters", 1, "--kmeans-iters", 8,
            "--out", "opq.pairq",
        )
        assert code == 0
        run_cli("encode", "--model", "opq.pairq",
                "--database", "data/database.fvecs",
                "--mode", "sqdist", "--out", "codes.ivecs")
        code = run_cli("eval", "--model", "opq.pairq",
                       "--database", "data/database.fvecs",
                       "--codes", "codes.ivecs",
                       "--eval-queries", "data/eval_queries.fvecs",
                       "--mode", "sqdist", "--bias-correct",
                       "--out", "m.json")
        assert code == 0
        with open("m.json") as fh:
            corrected = json.load(fh)
        run_cli("eval", "--model", "opq.pairq",
                "--database", "data/database.fvecs",
                "--codes", "codes.ivecs",
                "--eval-queries", "data/eval_queries.fvecs",
                "--mode", "sqdist", "--out", "raw.json")
        with open("raw.json") as fh:
            raw = json.load(fh)
        assert abs(corrected["mean_signed_error"]) < abs(raw["mean_signed_error"])

    def test_train_pairq_requires_queries(self, workdir, capsys):
        run_cli("synth", "--dim", 4, "--database-size", 50,
                "--train-queries", 10, "--eval-queries", 5, "--out-dir", "d")
        code = run_cli("train", "--mode", "scalar", "--method", "pairq",
                       "--database", "d/database.fvecs", "--out", "m.pairq")
        assert code == 2
        assert "train-queries" in capsys.readouterr().err

    def test_eval_mode_mismatch(self, workdir, capsys):
        run_cli("synth", "--dim", 4, "--database-size", 60,
                "--train-queries", 40, "--eval-queries", 5, "--out-dir", "d")
        run_cli("train", "--mode", "scalar", "--method", "pairq",
                "--database", "d/database.fvecs",
                "--train-queries", "d/train_queries.fvecs",
                "-M", 2, "-K", 4, "--outer-iters", 0, "--kmeans-iters", 5,
                "--out", "m.pairq")
        run_cli("encode", "--model", "m.pairq",
                "--database", "d/database.fvecs",
                "--mode", "scalar", "--out", "c.ivecs")
        code = run_cli("eval", "--model", "m.pairq",
                       "--database", "d/database.fvecs", "--codes", "c.ivecs",
                       "--eval-queries", "d/eval_queries.fvecs",
                       "--mode", "sqdist")
        assert code == 2
        assert "mode" in capsys.readouterr().err

    def test_bench_grid(self, workdir, capsys):
        code = run_cli("bench", "--task", "sqdist",
                       "--methods", "opq,opq-bc,pairq", "--blocks", "2",
                       "-K", 8, "--outer-iters", 1, "--kmeans-iters", 8,
                       "--synth-dim", 6, "--synth-database", 200,
                       "--synth-train-queries", 100,
                       "--synth-eval-queries", 8,
                       "--out-csv", "r.csv", "--out-json", "r.json")
        assert code == 0
        out = capsys.readouterr().out
        assert "rel_err=" in out
        assert "vs-opq=" in out
        with open("r.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["method"] for r in rows] == ["opq", "opq-bc", "pairq"]
        with open("r.json") as fh:
            payload = json.load(fh)
        assert payload["config"]["task"] == "sqdist"

    def test_bench_reports_cell_failures(self, workdir, capsys):
        code = run_cli("bench", "--task", "scalar", "--methods", "opq,pairq",
                       "--blocks", "2", "-K", 4,
                       "--outer-iters", 0, "--kmeans-iters", 5,
                       "--synth-dim", 4, "--synth-database", 50,
                       "--synth-train-queries", 0, "--synth-eval-queries", 4)
        assert code == 1
        assert "FAILED" in capsys.readouterr().out

    def test_missing_file_is_reported(self, workdir, capsys):
        code = run_cli("encode", "--model", "missing.pairq",
                       "--database", "nope.fvecs", "--mode", "scalar",
                       "--out", "c.ivecs")
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_subcommand_exits(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
