import numpy as np
import pytest

from fgen.errors import TrainingDivergedError, ValidationError
from fgen.experiment import (
    CSV_COLUMNS,
    ExperimentConfig,
    LinearModel,
    class_means,
    generate_task,
    mask_bits,
    run_experiment,
    run_protocol,
    softmax_xent,
    train,
    write_outputs,
    _augment,
)


def small(**kw):
    base = dict(n_grid=(20,), k1=2, k2=10, seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


def numeric_grad(w, xa, y, h=1e-5):
    g = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        e = np.zeros_like(w)
        e[idx] = h
        g[idx] = (softmax_xent(w + e, xa, y)[0] - softmax_xent(w - e, xa, y)[0]) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        classes = int(rng.choice([2, 10]))
        dim, m = int(rng.integers(1, 6)), int(rng.integers(1, 20))
        xa = _augment(rng.standard_normal((m, dim)))
        y = rng.integers(0, classes, m)
        w = rng.standard_normal((classes, dim + 1))
        analytic = softmax_xent(w, xa, y)[1]
        numeric = numeric_grad(w, xa, y)
        worst = max(worst, np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))
    assert worst <= 1e-6


def test_softmax_loss_at_zero_weights():
    xa = _augment(np.ones((3, 2)))
    loss, _ = softmax_xent(np.zeros((10, 3)), xa, np.array([0, 4, 9]))
    assert loss == pytest.approx(np.log(10))


@pytest.mark.parametrize(
    "kw",
    [
        dict(classes=3),
        dict(dim=0),
        dict(class_sep=-1.0),
        dict(class_sep=float("nan")),
        dict(n_grid=()),
        dict(n_grid=(50, 25)),
        dict(n_grid=(0,)),
        dict(k1=0),
        dict(lr=0.0),
        dict(epochs=0),
        dict(seed=-1),
        dict(seed=2**64),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        ExperimentConfig(**kw)


def test_defaults():
    c = ExperimentConfig()
    assert (c.dim, c.classes, c.class_sep, c.k1, c.k2, c.lr, c.epochs, c.early_stop_train_error) == (
        5, 2, 1.0, 50, 100, 0.01, 300, 0.005,
    )
    assert c.n_grid == (25, 50, 100, 250, 500)


def test_generate_task_deterministic():
    c = small()
    x1, y1 = generate_task(c, 20, 3)
    x2, y2 = generate_task(c, 20, 3)
    assert x1.shape == (20, 2, 5) and y1.shape == (20, 2)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    x3, _ = generate_task(c, 20, 4)
    assert not np.array_equal(x1, x3)


def test_class_means_scale():
    a = class_means(small(class_sep=1.0))
    assert np.allclose(class_means(small(class_sep=3.0)), 3 * a)
    assert np.all(class_means(small(class_sep=0.0)) == 0)


def test_separable_pair_trains_to_zero():
    m = train(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0, 1]), small())
    assert isinstance(m, LinearModel)
    assert m.train_error == 0 and m.steps < 300


def test_no_signal_training_error():
    c = small(class_sep=0.0, classes=2)
    x, y = generate_task(c, 2000, 0)
    m = train(x[:, 0], y[:, 0], c)
    assert m.steps == c.epochs
    assert abs(m.train_error - 0.5) < 0.05


def test_well_separated_task():
    c = small(class_sep=10.0)
    x, y = generate_task(c, 100, 0)
    m = train(x[:, 0], y[:, 0], c)
    assert m.train_error == 0
    # held-out Monte Carlo estimate of the test error
    xt, yt = generate_task(c, 5000, 99)
    assert m.zero_one(xt[:, 0], yt[:, 0]).mean() < 0.05


def test_empty_training_set():
    with pytest.raises(ValidationError):
        train(np.zeros((0, 5)), np.zeros(0, dtype=int), small())


def test_divergence_is_reported():
    c = small(lr=1e308, class_sep=5.0)
    x, y = generate_task(c, 20, 0)
    with pytest.raises(TrainingDivergedError) as info:
        train(x[:, 0] * 1e10, y[:, 0], c)
    assert info.value.step >= 0


def test_protocol_separable_case():
    c = small(k1=1, k2=1, class_sep=10.0)
    t = run_protocol(c, 2)
    rows = np.arange(2)
    train_losses = t.losses[0, 0, rows, t.masks[0, 0]]
    assert np.all(train_losses == 0)
    assert t.loss_kind == "zero_one"


def test_mask_marginal():
    c = ExperimentConfig()
    bits = np.array([mask_bits(c, 10, 0, m) for m in range(1000)])
    assert np.all(np.abs(bits.mean(axis=0) - 0.5) <= 0.05)


def test_protocol_thread_independent():
    c = small()
    a, b = run_protocol(c, 20, threads=1), run_protocol(c, 20, threads=4)
    assert np.array_equal(a.losses, b.losses) and np.array_equal(a.masks, b.masks)


def test_no_signal_experiment():
    # without signal the classifier still memorizes its training half, so the
    # gap is positive at small n and shrinks as n grows
    c = small(class_sep=0.0, k1=3, k2=20, n_grid=(30, 300))
    rows = run_experiment(c, threads=4).rows
    for row in rows:
        mean, se = row["gen_err"], row["gen_err_stderr"]
        for col in CSV_COLUMNS[3:]:
            assert row[col] >= mean - 3 * se
    assert rows[1]["gen_err"] < rows[0]["gen_err"]


def test_outputs(tmp_path):
    c = small()
    res = run_experiment(c)
    paths = write_outputs(res, tmp_path, svg=True)
    names = sorted(p.name for p in paths)
    assert names == ["bounds.csv", "bounds.svg", "report_n20.json", "tensor_n20.json"]
    lines = (tmp_path / "bounds.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 2
    svg = (tmp_path / "bounds.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    again = tmp_path / "again"
    write_outputs(run_experiment(c, threads=3), again, svg=True)
    for name in names:
        assert (again / name).read_bytes() == (tmp_path / name).read_bytes()


def test_ten_class_schema(tmp_path):
    res = run_experiment(small(classes=10, k2=8))
    assert list(res.rows[0]) == list(CSV_COLUMNS)
