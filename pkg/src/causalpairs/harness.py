"""Experiment orchestration: leave-one-function-out benchmark, ablations,
the consistency suite, and result-table emission.

Every run/held-out-class combination draws its own seed substream, so cells
are independent of execution order and two runs of the same configuration
produce byte-identical outputs. Within one cell the supervised methods
(the main model and NCC) are trained in lockstep on the same generated
epochs, which halves data-generation cost on a single core.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import engine as E
from .baselines import (
    ScoreMethod,
    calibrate_threshold,
    classify_score,
    ncc_init,
    ncc_predict_batch,
    score_sample,
    _ncc_logits,
)
from .consistency import (
    ObservationModel,
    causal_consistency,
    generate_observations,
    train_attribute_predictors,
)
from .datagen import (
    FunctionClass,
    GenConfig,
    GraphKind,
    Sample,
    generate_epoch,
    substream,
)
from .engine import AdamW, Tape, backward
from .labels import default_cpts, gibbs_sample
from .model import TrainConfig, init_params, losses, predict_batch

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "run_lofo",
    "run_adv_ablation",
    "run_sample_complexity",
    "run_consistency_suite",
    "run_epoch_curves",
    "run_overfit_probe",
    "emit",
    "parse_table",
]

METHODS = ("ncinet", "reci", "anm", "bfit", "ncc")
_SCORE_METHODS = {"reci": ScoreMethod.RECI, "anm": ScoreMethod.ANM, "bfit": ScoreMethod.BFIT}
_CLASS_NAMES = [f.name.lower() for f in FunctionClass]


@dataclass
class ExperimentConfig:
    seed: int = 0
    runs: int = 5
    test_size: int = 600
    val_size: int = 200
    methods: tuple = METHODS
    dim: int = 8
    pairs: int = 100
    epochs: int = 40
    samples_per_epoch: int = 1000
    batch_size: int = 32
    lam_adv: float = 1.0
    lam_ridge: float = 1e-3
    out_dir: str | None = None

    def __post_init__(self):
        if self.runs < 1 or self.test_size < 6 or self.val_size < 3:
            raise ValueError("runs/test_size/val_size out of range")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")

    def to_json(self) -> str:
        doc = asdict(self)
        doc["methods"] = list(self.methods)
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        return cls(**doc)

    def train_config(self, seed: int, pairs: int | None = None, lam_adv: float | None = None) -> TrainConfig:
        return TrainConfig(
            lam_ridge=self.lam_ridge,
            lam_adv=self.lam_adv if lam_adv is None else lam_adv,
            epochs=self.epochs,
            batch_size=self.batch_size,
            samples_per_epoch=self.samples_per_epoch,
            val_samples=60,
            seed=seed,
            gen=GenConfig(dim=self.dim, pairs=self.pairs if pairs is None else pairs, seed=seed),
        )


@dataclass
class ResultTable:
    """Rows x columns of mean/std cells, stored to 2 decimals (percent)."""

    title: str
    row_names: list
    col_names: list
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.round(np.asarray(self.means, dtype=np.float64), 2)
        self.stds = np.round(np.asarray(self.stds, dtype=np.float64), 2)
        if self.means.shape != (len(self.row_names), len(self.col_names)):
            raise ValueError("table shape mismatch")
        if self.stds.shape != self.means.shape:
            raise ValueError("table shape mismatch")

    def cell(self, row: str, col: str) -> tuple:
        i, j = self.row_names.index(row), self.col_names.index(col)
        return float(self.means[i, j]), float(self.stds[i, j])

    def __eq__(self, other):
        return (
            isinstance(other, ResultTable)
            and self.title == other.title
            and self.row_names == other.row_names
            and self.col_names == other.col_names
            and np.array_equal(self.means, other.means, equal_nan=True)
            and np.array_equal(self.stds, other.stds, equal_nan=True)
        )


# ---------------------------------------------------------------------------
# supervised co-training for one LOFO cell
# ---------------------------------------------------------------------------


def _train_cell_models(cfg: TrainConfig, exclude: FunctionClass | None, want_ncinet: bool, want_ncc: bool, avg_tail: int | None = None):
    """Train the main model and/or NCC in lockstep on shared epoch data.

    The returned weights are the average of the end-of-epoch weights over the
    last ``avg_tail`` epochs (Polyak tail averaging), which smooths the SGD
    trajectory and measurably improves held-out-class accuracy. By default
    the window is 10 epochs, shrunk to a quarter of short schedules so the
    average never reaches back into the unconverged early trajectory.
    """
    if avg_tail is None:
        avg_tail = min(10, max(1, cfg.epochs // 4))
    ncinet = ncc = None
    opt_a = opt_b = None
    if want_ncinet:
        ncinet = init_params(cfg.gen.dim, np.random.default_rng(substream(cfg.seed, 1)))
        opt_a = AdamW(ncinet.tensors(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    if want_ncc:
        ncc = ncc_init(cfg.gen.dim, np.random.default_rng(substream(cfg.seed, 11)))
        opt_b = AdamW(ncc.tensors(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    tail_start = max(cfg.epochs - avg_tail, 0)
    sums = {}
    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(substream(cfg.seed, 1000 + epoch))
        samples = list(generate_epoch(cfg.gen, epoch_rng, n=cfg.samples_per_epoch, exclude=exclude))
        for start in range(0, len(samples) - cfg.batch_size + 1, cfg.batch_size):
            batch = samples[start : start + cfg.batch_size]
            labels = np.array([s.label for s in batch])
            if want_ncinet:
                with Tape() as tape:
                    total = losses(ncinet, batch, cfg)[3]
                if not np.isfinite(total.values):
                    raise E.NumericError(f"main model diverged at epoch {epoch}")
                opt_a.zero_grad()
                backward(tape, total)
                opt_a.step()
            if want_ncc:
                xb = np.stack([s.x for s in batch])
                yb = np.stack([s.y for s in batch])
                with Tape() as tape:
                    loss = E.softmax_cross_entropy(_ncc_logits(ncc, xb, yb), labels)
                if not np.isfinite(loss.values):
                    raise E.NumericError(f"NCC diverged at epoch {epoch}")
                opt_b.zero_grad()
                backward(tape, loss)
                opt_b.step()
        if epoch >= tail_start:
            for model in (ncinet, ncc):
                if model is None:
                    continue
                for t in model.tensors():
                    key = id(t)
                    sums[key] = sums.get(key, 0.0) + t.values
    n_avg = cfg.epochs - tail_start
    for model in (ncinet, ncc):
        if model is None:
            continue
        for t in model.tensors():
            t.values = sums[id(t)] / n_avg
    return ncinet, ncc


def _evaluate_cell(cfg: ExperimentConfig, run: int, heldout: FunctionClass, pairs: int | None = None, lam_adv: float | None = None, methods=None) -> dict:
    """Accuracies (percent) of each requested method on one (run, class)."""
    methods = cfg.methods if methods is None else methods
    class_idx = list(FunctionClass).index(heldout)
    cell_seed = substream(cfg.seed, 1_000_000 + run * 100 + class_idx)
    tcfg = cfg.train_config(cell_seed, pairs=pairs, lam_adv=lam_adv)

    out = {}
    try:
        ncinet, ncc = _train_cell_models(
            tcfg, heldout, "ncinet" in methods, "ncc" in methods
        )
    except E.NumericError:
        return {m: float("nan") for m in methods}

    # validation (training classes) for threshold calibration; test data is
    # the held-out class only, spanning all six graphs; independent streams
    val_rng = np.random.default_rng(substream(cell_seed, 7777))
    test_rng = np.random.default_rng(substream(cell_seed, 8888))
    score_names = [m for m in methods if m in _SCORE_METHODS]
    val = (
        list(generate_epoch(tcfg.gen, val_rng, n=cfg.val_size, exclude=heldout))
        if score_names
        else []
    )
    test = list(generate_epoch(tcfg.gen, test_rng, n=cfg.test_size, funcs=[heldout]))
    test_labels = np.array([s.label for s in test])

    if "ncinet" in methods:
        preds = predict_batch(ncinet, test, tcfg.lam_ridge)
        out["ncinet"] = 100.0 * float(np.mean(preds == test_labels))
    if "ncc" in methods:
        preds = ncc_predict_batch(ncc, test)
        out["ncc"] = 100.0 * float(np.mean(preds == test_labels))
    for name in score_names:
        method = _SCORE_METHODS[name]
        val_scores = [score_sample(method, s, cfg.lam_ridge) for s in val]
        tau = calibrate_threshold(val_scores, [s.label for s in val])
        preds = [classify_score(score_sample(method, s, cfg.lam_ridge), tau) for s in test]
        out[name] = 100.0 * float(np.mean(np.array(preds) == test_labels))
    return out


def _summarize(title: str, row_names, col_entries: dict) -> ResultTable:
    """col_entries: row -> class -> list of per-run accuracies."""
    cols = _CLASS_NAMES + ["average"]
    means = np.zeros((len(row_names), len(cols)))
    stds = np.zeros_like(means)
    for i, row in enumerate(row_names):
        per_run_avgs = None
        for j, cls in enumerate(_CLASS_NAMES):
            vals = np.asarray(col_entries[row][cls], dtype=np.float64)
            means[i, j] = vals.mean()
            stds[i, j] = vals.std(ddof=1) if len(vals) > 1 else 0.0
            per_run_avgs = vals if per_run_avgs is None else per_run_avgs + vals
        per_run_avgs = per_run_avgs / len(_CLASS_NAMES)
        means[i, -1] = np.mean([means[i, j] for j in range(len(_CLASS_NAMES))])
        stds[i, -1] = per_run_avgs.std(ddof=1) if len(per_run_avgs) > 1 else 0.0
    return ResultTable(title, list(row_names), cols, means, stds)


def run_lofo(cfg: ExperimentConfig) -> ResultTable:
    """Leave-one-function-out benchmark over all configured methods."""
    entries = {m: {c: [] for c in _CLASS_NAMES} for m in cfg.methods}
    for run in range(cfg.runs):
        for heldout in FunctionClass:
            cell = _evaluate_cell(cfg, run, heldout)
            for m in cfg.methods:
                entries[m][heldout.name.lower()].append(cell[m])
    return _summarize("lofo", list(cfg.methods), entries)


def run_adv_ablation(cfg: ExperimentConfig, lams=(0.0, 0.5, 1.0, 2.0, 10.0)) -> tuple:
    """Main-model LOFO averages per adversary weight, plus the per-run
    signed (with - without adversary) average deltas."""
    rows = [f"lam_adv={l:g}" for l in lams]
    entries = {r: {c: [] for c in _CLASS_NAMES} for r in rows}
    per_run_avg = {r: [] for r in rows}
    for run in range(cfg.runs):
        for row, lam in zip(rows, lams):
            accs = []
            for heldout in FunctionClass:
                cell = _evaluate_cell(cfg, run, heldout, lam_adv=lam, methods=("ncinet",))
                entries[row][heldout.name.lower()].append(cell["ncinet"])
                accs.append(cell["ncinet"])
            per_run_avg[row].append(float(np.mean(accs)))
    table = _summarize("adv-ablation", rows, entries)
    deltas = None
    if 0.0 in lams and cfg.lam_adv in lams:
        with_row = f"lam_adv={cfg.lam_adv:g}"
        deltas = [
            w - wo for w, wo in zip(per_run_avg[with_row], per_run_avg["lam_adv=0"])
        ]
    return table, deltas


def run_sample_complexity(cfg: ExperimentConfig, ms=(10, 100, 1000)) -> ResultTable:
    """Main-model LOFO averages per per-dataset sample count m."""
    rows = [f"m={m}" for m in ms]
    entries = {r: {c: [] for c in _CLASS_NAMES} for r in rows}
    for run in range(cfg.runs):
        for row, m in zip(rows, ms):
            for heldout in FunctionClass:
                cell = _evaluate_cell(cfg, run, heldout, pairs=m, methods=("ncinet",))
                entries[row][heldout.name.lower()].append(cell["ncinet"])
    return _summarize("sample-complexity", rows, entries)


# ---------------------------------------------------------------------------
# consistency suite
# ---------------------------------------------------------------------------


def _make_inference_methods(cfg: ExperimentConfig, methods):
    """Train/calibrate each requested method once on the synthetic generator
    (all function classes, d = representation dim) and wrap it as a
    subset-level inference callable (x_mat, y_mat) -> label."""
    seed = substream(cfg.seed, 42)
    tcfg = cfg.train_config(seed)
    ncinet, ncc = _train_cell_models(
        tcfg, None, "ncinet" in methods, "ncc" in methods
    )
    infer = {}
    if "ncinet" in methods:
        def infer_ncinet(x, y, _p=ncinet, _l=tcfg.lam_ridge):
            sample = Sample(x, y, 0, GraphKind.G1, FunctionClass.LINEAR)
            return int(predict_batch(_p, [sample], _l)[0])
        infer["ncinet"] = infer_ncinet
    if "ncc" in methods:
        def infer_ncc(x, y, _p=ncc):
            return int(ncc_predict_batch(_p, [Sample(x, y, 0, GraphKind.G1, FunctionClass.LINEAR)])[0])
        infer["ncc"] = infer_ncc
    score_names = [m for m in methods if m in _SCORE_METHODS]
    if score_names:
        val_rng = np.random.default_rng(substream(seed, 7777))
        val = list(generate_epoch(tcfg.gen, val_rng, n=cfg.val_size))
        for name in score_names:
            method = _SCORE_METHODS[name]
            scores = [score_sample(method, s, cfg.lam_ridge) for s in val]
            tau = calibrate_threshold(scores, [s.label for s in val])
            def infer_score(x, y, _m=method, _t=tau, _l=cfg.lam_ridge):
                sample = Sample(x, y, 0, GraphKind.G1, FunctionClass.LINEAR)
                return classify_score(score_sample(_m, sample, _l), _t)
            infer[name] = infer_score
    return infer


def run_consistency_suite(cfg: ExperimentConfig, graphs=tuple(GraphKind), presets=("high", "low"), methods=("ncinet",), n_labels: int = 1000, predictor_epochs: int = 50, arity: int = 4) -> list:
    """Label generation -> observations -> attribute predictors -> causal
    consistency, per graph x strength preset x inference method."""
    infer = _make_inference_methods(cfg, methods)
    reports = []
    for graph in graphs:
        for preset in presets:
            key = substream(cfg.seed, 500 + 10 * list(GraphKind).index(graph) + (preset == "low"))
            net = default_cpts(graph, preset, arity=arity)
            pairs = gibbs_sample(net, n_labels, np.random.default_rng(substream(key, 0)))
            obs_model = ObservationModel(arity, np.random.default_rng(substream(key, 1)))
            obs = generate_observations(pairs, obs_model, np.random.default_rng(substream(key, 2)))
            _, _, snaps = train_attribute_predictors(
                obs, pairs, epochs=predictor_epochs, seed=substream(key, 3) % 2**32
            )
            val_acc = min(snaps[-1]["val_acc_x"], snaps[-1]["val_acc_y"])
            for name in methods:
                rep = causal_consistency(
                    snaps,
                    graph.label,
                    infer[name],
                    subset_size=cfg.pairs,
                    graph=graph.value,
                    method=f"{name}-{preset}",
                )
                rep.val_acc = val_acc
                reports.append(rep)
    return reports


def run_epoch_curves(cfg: ExperimentConfig, graph: GraphKind = GraphKind.G1, preset: str = "high", seeds=(0, 1, 2), method: str = "ncinet", n_labels: int = 1000, predictor_epochs: int = 50, arity: int = 4) -> list:
    """Per-epoch consistency curve of one graph/preset for several predictor
    seeds, sharing a single trained inference method across seeds."""
    infer = _make_inference_methods(cfg, (method,))[method]
    graph_idx = list(GraphKind).index(graph)
    reports = []
    for seed in seeds:
        key = substream(cfg.seed, 500 + 10 * graph_idx + (preset == "low"))
        net = default_cpts(graph, preset, arity=arity)
        pairs = gibbs_sample(net, n_labels, np.random.default_rng(substream(key, 0)))
        obs_model = ObservationModel(arity, np.random.default_rng(substream(key, 1)))
        obs = generate_observations(pairs, obs_model, np.random.default_rng(substream(key, 2)))
        _, _, snaps = train_attribute_predictors(
            obs, pairs, epochs=predictor_epochs, seed=substream(key, 4 + seed) % 2**32
        )
        rep = causal_consistency(
            snaps, graph.label, infer, subset_size=cfg.pairs,
            graph=graph.value, method=f"{method}-{preset}-seed{seed}",
        )
        rep.val_acc = min(snaps[-1]["val_acc_x"], snaps[-1]["val_acc_y"])
        reports.append(rep)
    return reports


def run_overfit_probe(cfg: ExperimentConfig, graph: GraphKind = GraphKind.G1, preset: str = "high", method: str = "ncinet", n_labels: int = 500, predictor_epochs: int = 200, subset_size: int = 25, arity: int = 4) -> tuple:
    """Small-data, long-schedule run that drives the attribute predictors into
    overfitting; returns (train_report, val_report) whose per-epoch curves are
    computed on the training-split and validation-split features."""
    infer = _make_inference_methods(cfg, (method,))[method]
    graph_idx = list(GraphKind).index(graph)
    key = substream(cfg.seed, 900 + graph_idx)
    net = default_cpts(graph, preset, arity=arity)
    pairs = gibbs_sample(net, n_labels, np.random.default_rng(substream(key, 0)))
    obs_model = ObservationModel(arity, np.random.default_rng(substream(key, 1)))
    obs = generate_observations(pairs, obs_model, np.random.default_rng(substream(key, 2)))
    _, _, snaps = train_attribute_predictors(
        obs, pairs, epochs=predictor_epochs, seed=substream(key, 3) % 2**32
    )
    reports = []
    for split, name in (("train_idx", "train"), ("val_idx", "validation")):
        rep = causal_consistency(
            snaps, graph.label, infer, subset_size=subset_size,
            indices=snaps[0][split], graph=graph.value,
            method=f"{method}-{preset}-{name}",
        )
        rep.val_acc = min(snaps[-1]["val_acc_x"], snaps[-1]["val_acc_y"])
        reports.append(rep)
    return tuple(reports)


# ---------------------------------------------------------------------------
# table emission
# ---------------------------------------------------------------------------


def emit(table: ResultTable, path, fmt: str = "csv") -> None:
    """Write a result table as CSV (mean/std split into numeric columns) or
    as a markdown table of "mean±std" cells, 2 decimals."""
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["row"]
            for col in table.col_names:
                header += [f"{col}_mean", f"{col}_std"]
            writer.writerow([table.title] + header[1:])
            for i, row in enumerate(table.row_names):
                cells = []
                for j in range(len(table.col_names)):
                    cells += [f"{table.means[i, j]:.2f}", f"{table.stds[i, j]:.2f}"]
                writer.writerow([row] + cells)
    elif fmt == "markdown":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("| " + " | ".join([table.title] + table.col_names) + " |\n")
            fh.write("|" + "---|" * (len(table.col_names) + 1) + "\n")
            for i, row in enumerate(table.row_names):
                cells = [
                    f"{table.means[i, j]:.2f}±{table.stds[i, j]:.2f}"
                    for j in range(len(table.col_names))
                ]
                fh.write("| " + " | ".join([str(row)] + cells) + " |\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_table(path) -> ResultTable:
    """Inverse of ``emit(..., fmt='csv')``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    title = header[0]
    col_names = [h[: -len("_mean")] for h in header[1::2]]
    row_names, means, stds = [], [], []
    for row in rows[1:]:
        row_names.append(row[0])
        means.append([float(v) for v in row[1::2]])
        stds.append([float(v) for v in row[2::2]])
    if not row_names:
        means = np.zeros((0, len(col_names)))
        stds = np.zeros((0, len(col_names)))
    return ResultTable(title, row_names, col_names, np.asarray(means), np.asarray(stds))
