"""Synthetic Gaussian classification experiment.

A linear softmax classifier is trained by full-batch gradient descent on
the masked half of each supersample and scored with the zero-one loss on
both halves. Every (draw, mask) job owns an RNG stream derived from
``(seed, n, draw, mask)``, so results do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import BoundReport, evaluate_report
from .errors import TrainingDivergedError, ValidationError
from .supersample import StatisticsConfig, SupersampleLossTensor, compute_statistics

# cmi_oracle here is the disintegrated (per-supersample) form; the pooled one
# is kept alongside for comparison.
CSV_BOUNDS = ("cmi_oracle", "sh_oracle", "sh_var", "sh_worst", "js_oracle", "baseline_ldcmi", "cmi_oracle_pooled")
CSV_COLUMNS = ("n", "gen_err", "gen_err_stderr") + CSV_BOUNDS
_REPORT_SOURCE = {"cmi_oracle": "dis_mi_oracle", "cmi_oracle_pooled": "cmi_oracle"}
REPORT_BOUNDS = ("cmi_oracle", "dis_mi_oracle", "sh_oracle", "sh_var", "sh_worst", "js_oracle", "baseline_ldcmi")

# stream tags keep the generator, supersample and mask streams disjoint
_MEANS, _DRAW, _MASK = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 5
    classes: int = 2
    class_sep: float = 1.0
    n_grid: tuple = (25, 50, 100, 250, 500)
    k1: int = 50
    k2: int = 100
    lr: float = 0.01
    epochs: int = 300
    early_stop_train_error: float = 0.005
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        if self.dim < 1:
            raise ValidationError("dim: must be positive")
        if self.classes not in (2, 10):
            raise ValidationError("classes: must be 2 or 10")
        # 0 is allowed: the no-signal baseline
        if not (math.isfinite(self.class_sep) and self.class_sep >= 0):
            raise ValidationError("class_sep: must be finite and >= 0")
        if not self.n_grid or any(v < 1 for v in self.n_grid):
            raise ValidationError("n_grid: must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValidationError("n_grid: must be strictly increasing")
        if self.k1 < 1 or self.k2 < 1:
            raise ValidationError("k1/k2: must be positive")
        if not self.lr > 0:
            raise ValidationError("lr: must be > 0")
        if self.epochs < 1:
            raise ValidationError("epochs: must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed: must fit in an unsigned 64-bit integer")


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def class_means(config: ExperimentConfig) -> np.ndarray:
    """One Gaussian mean per class, fixed for the whole experiment."""
    return config.class_sep * _rng(config.seed, _MEANS).standard_normal((config.classes, config.dim))


def generate_task(config: ExperimentConfig, n: int, draw: int, means=None):
    """Supersample of 2n labelled points as arrays X[n, 2, dim], y[n, 2]."""
    means = class_means(config) if means is None else means
    rng = _rng(config.seed, _DRAW, n, draw)
    y = rng.integers(0, config.classes, size=(n, 2))
    x = means[y] + rng.standard_normal((n, 2, config.dim))
    return x, y


def _augment(x):
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def softmax_xent(weights, xa, y):
    """Mean cross-entropy and its gradient for a linear softmax model.

    ``xa`` already carries the bias column.
    """
    logits = xa @ weights.T
    logits = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(logits).sum(axis=1))
    probs = np.exp(logits - logz[:, None])
    m = y.shape[0]
    loss = float(np.mean(logz - logits[np.arange(m), y]))
    probs[np.arange(m), y] -= 1.0
    return loss, probs.T @ xa / m


def predict(weights, xa):
    return np.argmax(xa @ weights.T, axis=1)


@dataclass
class LinearModel:
    weights: np.ndarray  # [classes, dim + 1]
    steps: int = 0
    train_error: float = field(default=math.nan)

    def predict(self, x):
        return predict(self.weights, _augment(np.asarray(x, dtype=float)))

    def zero_one(self, x, y):
        return (self.predict(x) != np.asarray(y)).astype(float)


def train(x, y, config: ExperimentConfig, classes: int | None = None) -> LinearModel:
    """Full-batch gradient descent from zero weights with early stopping."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if y.size == 0:
        raise ValidationError("train: empty training set")
    classes = classes or config.classes
    xa = _augment(x)
    w = np.zeros((classes, xa.shape[1]))
    err = math.nan
    for step in range(config.epochs):
        err = float(np.mean(predict(w, xa) != y))
        if err < config.early_stop_train_error:
            return LinearModel(w, step, err)
        # overflow is detected just below, so numpy's warning adds nothing
        with np.errstate(over="ignore", invalid="ignore"):
            _, grad = softmax_xent(w, xa, y)
            w = w - config.lr * grad
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(w))):
            raise TrainingDivergedError(step)
    err = float(np.mean(predict(w, xa) != y))
    return LinearModel(w, config.epochs, err)


def mask_bits(config: ExperimentConfig, n: int, draw: int, mask: int) -> np.ndarray:
    return _rng(config.seed, _MASK, n, draw, mask).integers(0, 2, size=n)


def run_protocol(config: ExperimentConfig, n: int, threads: int = 1) -> SupersampleLossTensor:
    """Train on k2 masks for each of k1 supersamples and record zero-one losses."""
    means = class_means(config)
    losses = np.zeros((config.k1, config.k2, n, 2))
    masks = np.zeros((config.k1, config.k2, n), dtype=np.int8)
    rows = np.arange(n)

    def job(draw):
        x, y = generate_task(config, n, draw, means)
        flat_x = x.reshape(2 * n, -1)
        flat_y = y.reshape(2 * n)
        for m in range(config.k2):
            u = mask_bits(config, n, draw, m)
            try:
                model = train(x[rows, u], y[rows, u], config)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(exc.step, draw, m) from exc
            losses[draw, m] = model.zero_one(flat_x, flat_y).reshape(n, 2)
            masks[draw, m] = u

    if threads <= 1:
        for d in range(config.k1):
            job(d)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # list() surfaces the first failure in draw order
            list(pool.map(job, range(config.k1)))
    return SupersampleLossTensor(losses, masks, "zero_one")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tensors: dict  # n -> SupersampleLossTensor
    reports: dict  # n -> BoundReport
    rows: list  # CSV rows as dicts

    def csv_text(self) -> str:
        return rows_to_csv(self.rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def csv_row(n: int, report: BoundReport) -> dict:
    row = {"n": n, "gen_err": report.gen_error[0], "gen_err_stderr": report.gen_error[1]}
    for col in CSV_BOUNDS:
        src = _REPORT_SOURCE.get(col, col)
        row[col] = report.results[src].value if src in report.results else math.nan
    return row


def run_experiment(config: ExperimentConfig, threads: int = 1, stats_config: StatisticsConfig | None = None) -> ExperimentResult:
    """Run the protocol for each n and evaluate the experiment's bound set."""
    stats_config = stats_config or StatisticsConfig(on_empty="ceiling")
    tensors, reports, rows = {}, {}, []
    for n in config.n_grid:
        tensor = run_protocol(config, n, threads)
        stats = compute_statistics(tensor, stats_config)
        report = evaluate_report(stats, REPORT_BOUNDS)
        report.settings["experiment"] = {
            "dim": config.dim,
            "classes": config.classes,
            "class_sep": config.class_sep,
            "lr": config.lr,
            "epochs": config.epochs,
            "early_stop_train_error": config.early_stop_train_error,
            "seed": config.seed,
        }
        cells = {f.mode: len(f.substituted_cells) for f in stats.finfo.values()}
        report.settings["ceiling_substituted_cells"] = cells
        tensors[n], reports[n] = tensor, report
        rows.append(csv_row(n, report))
    return ExperimentResult(config, tensors, reports, rows)


def write_outputs(result: ExperimentResult, out_dir, svg: bool = False) -> list:
    """Write tensors, reports, the CSV and optionally an SVG chart. Returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in result.config.n_grid:
        p = out / f"tensor_n{n}.json"
        result.tensors[n].save(p)
        q = out / f"report_n{n}.json"
        result.reports[n].save(q)
        paths += [p, q]
    csv_path = out / "bounds.csv"
    csv_path.write_text(result.csv_text())
    paths.append(csv_path)
    if svg:
        from .plotting import plot_bounds

        svg_path = out / "bounds.svg"
        plot_bounds(result.rows, svg_path, title=f"{result.config.classes}-class Gaussian, linear classifier")
        paths.append(svg_path)
    return paths
