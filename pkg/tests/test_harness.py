"""Tests for experiment orchestration and table emission."""

import json

import numpy as np
import pytest

from causalpairs.datagen import FunctionClass, GraphKind
from causalpairs.harness import (
    METHODS,
    ExperimentConfig,
    ResultTable,
    _evaluate_cell,
    emit,
    parse_table,
    run_adv_ablation,
    run_consistency_suite,
    run_epoch_curves,
    run_lofo,
    run_overfit_probe,
    run_sample_complexity,
)

CLASS_COLS = [f.name.lower() for f in FunctionClass]


def tiny_config(**overrides):
    base = dict(
        seed=5,
        runs=2,
        epochs=1,
        samples_per_epoch=64,
        batch_size=32,
        test_size=12,
        val_size=12,
        dim=4,
        pairs=16,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestExperimentConfig:
    def test_json_roundtrip(self):
        cfg = tiny_config(methods=("reci", "ncc"), out_dir="/tmp/x")
        again = ExperimentConfig.from_json(cfg.to_json())
        assert again == cfg

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("reci", "nope"))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(runs=0)
        with pytest.raises(ValueError):
            ExperimentConfig(test_size=2)

    def test_train_config_overrides(self):
        cfg = tiny_config()
        tcfg = cfg.train_config(99, pairs=7, lam_adv=0.25)
        assert tcfg.seed == 99
        assert tcfg.gen.pairs == 7
        assert tcfg.lam_adv == 0.25
        assert tcfg.gen.dim == cfg.dim
        assert cfg.train_config(1).gen.pairs == cfg.pairs


class TestResultTable:
    def _table(self):
        means = [[10.123, 20.456], [30.789, 40.001]]
        stds = [[1.111, 2.222], [3.333, 4.444]]
        return ResultTable("demo", ["a", "b"], ["c1", "c2"], means, stds)

    def test_cells_rounded_to_two_decimals(self):
        t = self._table()
        assert t.cell("a", "c1") == (10.12, 1.11)
        assert t.cell("b", "c2") == (40.0, 4.44)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ResultTable("demo", ["a"], ["c1", "c2"], np.zeros((2, 2)), np.zeros((2, 2)))

    def test_equality_including_nan(self):
        m = np.array([[1.0, np.nan]])
        s = np.zeros((1, 2))
        t1 = ResultTable("t", ["r"], ["c1", "c2"], m, s)
        t2 = ResultTable("t", ["r"], ["c1", "c2"], m.copy(), s.copy())
        assert t1 == t2
        t3 = ResultTable("t", ["r"], ["c1", "c2"], np.array([[1.0, 2.0]]), s)
        assert t1 != t3


class TestEmission:
    def _table(self):
        rng = np.random.default_rng(0)
        ncol = len(CLASS_COLS) + 1
        means = rng.uniform(0, 100, size=(3, ncol))
        stds = rng.uniform(0, 10, size=(3, ncol))
        return ResultTable("lofo", ["m1", "m2", "m3"], CLASS_COLS + ["average"], means, stds)

    def test_csv_roundtrip(self, tmp_path):
        t = self._table()
        path = tmp_path / "t.csv"
        emit(t, path, "csv")
        assert parse_table(path) == t

    def test_csv_reemission_byte_identical(self, tmp_path):
        t = self._table()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit(t, p1, "csv")
        emit(parse_table(p1), p2, "csv")
        assert p1.read_bytes() == p2.read_bytes()

    def test_markdown_format(self, tmp_path):
        t = self._table()
        path = tmp_path / "t.md"
        emit(t, path, "markdown")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("| lofo |")
        assert set(lines[1]) <= {"|", "-"}
        assert len(lines) == 2 + len(t.row_names)
        m, s = t.cell("m1", "average")
        assert f"{m:.2f}±{s:.2f}" in lines[2]

    def test_empty_table_emits_header_only(self, tmp_path):
        cols = CLASS_COLS + ["average"]
        empty = ResultTable("lofo", [], cols,
                            np.zeros((0, len(cols))), np.zeros((0, len(cols))))
        path = tmp_path / "t.csv"
        emit(empty, path, "csv")
        assert len(path.read_text().splitlines()) == 1
        assert parse_table(path) == empty

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit(self._table(), tmp_path / "t.x", "yaml")


class TestEvaluateCell:
    def test_reports_requested_methods_only(self):
        cfg = tiny_config(methods=("reci", "bfit"))
        cell = _evaluate_cell(cfg, 0, FunctionClass.LINEAR)
        assert set(cell) == {"reci", "bfit"}
        for v in cell.values():
            assert 0.0 <= v <= 100.0

    def test_deterministic(self):
        cfg = tiny_config(methods=("reci", "ncc"))
        a = _evaluate_cell(cfg, 1, FunctionClass.HADAMARD)
        b = _evaluate_cell(cfg, 1, FunctionClass.HADAMARD)
        assert a == b

    def test_method_order_does_not_change_cells(self):
        a = _evaluate_cell(tiny_config(methods=("reci", "bfit")), 0, FunctionClass.LINEAR)
        b = _evaluate_cell(tiny_config(methods=("bfit", "reci")), 0, FunctionClass.LINEAR)
        assert a == b

    def test_supervised_cell_runs(self):
        cfg = tiny_config(methods=("ncinet",))
        cell = _evaluate_cell(cfg, 0, FunctionClass.MLP)
        assert 0.0 <= cell["ncinet"] <= 100.0


@pytest.fixture(scope="module")
def table():
    return run_lofo(tiny_config(methods=("reci", "ncc")))


class TestLofo:
    def test_shape(self, table):
        assert table.row_names == ["reci", "ncc"]
        assert table.col_names == CLASS_COLS + ["average"]

    def test_average_column_is_mean_of_class_means(self, table):
        for i in range(len(table.row_names)):
            expected = round(float(np.mean(table.means[i, :-1])), 2)
            # class means are already rounded, so allow half a rounding unit
            assert abs(table.means[i, -1] - expected) <= 0.01

    def test_std_uses_sample_estimator(self):
        cfg = tiny_config(methods=("reci",), runs=1)
        table = run_lofo(cfg)
        assert np.all(table.stds == 0.0)

    def test_deterministic_csv(self, table, tmp_path):
        again = run_lofo(tiny_config(methods=("reci", "ncc")))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit(table, p1, "csv")
        emit(again, p2, "csv")
        assert p1.read_bytes() == p2.read_bytes()


class TestAblations:
    def test_adv_ablation_rows_and_deltas(self):
        cfg = tiny_config(runs=2)
        table, deltas = run_adv_ablation(cfg, lams=(0.0, 1.0))
        assert table.row_names == ["lam_adv=0", "lam_adv=1"]
        assert table.col_names == CLASS_COLS + ["average"]
        assert len(deltas) == 2
        assert all(np.isfinite(d) for d in deltas)

    def test_adv_ablation_no_deltas_without_baseline(self):
        cfg = tiny_config(runs=1)
        _, deltas = run_adv_ablation(cfg, lams=(0.5,))
        assert deltas is None

    def test_sample_complexity_rows(self):
        cfg = tiny_config(runs=1)
        table = run_sample_complexity(cfg, ms=(8, 16))
        assert table.row_names == ["m=8", "m=16"]
        assert np.all(np.isfinite(table.means))


class TestConsistencySuite:
    def test_score_method_suite(self):
        cfg = tiny_config(pairs=50)
        reports = run_consistency_suite(
            cfg,
            graphs=(GraphKind.G1,),
            presets=("high",),
            methods=("reci",),
            n_labels=200,
            predictor_epochs=3,
        )
        assert len(reports) == 1
        rep = reports[0]
        assert rep.graph == "G1"
        assert rep.method == "reci-high"
        assert 0.0 <= rep.mean <= 1.0
        assert rep.subset_size == 50
        assert rep.subset_count == 4

    def test_deterministic(self):
        cfg = tiny_config(pairs=50)
        kwargs = dict(
            graphs=(GraphKind.G3,),
            presets=("low",),
            methods=("bfit",),
            n_labels=200,
            predictor_epochs=2,
        )
        r1 = run_consistency_suite(cfg, **kwargs)
        r2 = run_consistency_suite(cfg, **kwargs)
        assert r1[0].per_epoch == r2[0].per_epoch

    def test_reports_carry_validation_accuracy(self):
        cfg = tiny_config(pairs=50)
        reports = run_consistency_suite(
            cfg, graphs=(GraphKind.G1,), presets=("high",), methods=("reci",),
            n_labels=200, predictor_epochs=2,
        )
        assert 0.0 <= reports[0].val_acc <= 1.0

    def test_epoch_curves_one_report_per_seed(self):
        cfg = tiny_config(pairs=50)
        reports = run_epoch_curves(
            cfg, seeds=(0, 1), method="reci", n_labels=200, predictor_epochs=3,
        )
        assert [r.method for r in reports] == ["reci-high-seed0", "reci-high-seed1"]
        assert all(len(r.per_epoch) == 3 for r in reports)

    def test_overfit_probe_covers_both_splits(self):
        cfg = tiny_config()
        train_rep, val_rep = run_overfit_probe(
            cfg, method="reci", n_labels=250, predictor_epochs=3, subset_size=25,
        )
        assert train_rep.method.endswith("train")
        assert val_rep.method.endswith("validation")
        # 80/20 split of 250 observations at subset size 25
        assert train_rep.subset_count == 8
        assert val_rep.subset_count == 2
