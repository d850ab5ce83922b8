import json
import math

import numpy as np
import pytest
from conftest import bernoulli_tensor
from hypothesis import given, settings
from hypothesis import strategies as st

from fgen.divergences import CHI2, JS, KL, LN2, SH, TV, phi_alpha
from fgen.errors import EmptyStratumError, ValidationError
from fgen.supersample import (
    StatisticsConfig,
    SupersampleLossTensor,
    compute_statistics,
    delta_and_g,
    empirical_gen_error,
    estimate_f_information,
)


def random_tensor(rng, k1=3, k2=12, n=4, kind="zero_one"):
    losses = rng.integers(0, 2, (k1, k2, n, 2)).astype(float) if kind == "zero_one" else rng.random((k1, k2, n, 2))
    masks = np.zeros((k1, k2, n), dtype=int)
    masks[:, 1::2] = 1  # both strata present in every cell
    masks = rng.permuted(masks, axis=1)
    return SupersampleLossTensor(losses, masks, kind)


def channel_tensor(rng, k1, k2, flip):
    """Row 0: dL = (-1)^U with probability 1 - flip, else the opposite sign."""
    masks = rng.integers(0, 2, (k1, k2, 1))
    sign = np.where(rng.random((k1, k2, 1)) < flip, -1, 1) * np.where(masks == 0, 1, -1)
    losses = np.stack([(sign < 0).astype(float), (sign > 0).astype(float)], axis=-1)
    return SupersampleLossTensor(losses, masks)


def test_delta_and_g_examples():
    t = SupersampleLossTensor(np.array([[[[0.3, 0.3], [0.0, 1.0], [0.0, 1.0]]]]), np.array([[[0, 0, 1]]]), "bounded_unit")
    dl, g = delta_and_g(t)
    assert dl.ravel().tolist() == [0.0, 1.0, 1.0]
    assert g.ravel().tolist() == [0.0, 1.0, -1.0]


def test_gen_error_examples():
    t = SupersampleLossTensor(np.ones((2, 3, 4, 2)), np.zeros((2, 3, 4), dtype=int))
    assert empirical_gen_error(t) == (0.0, 0.0)
    t = SupersampleLossTensor(np.array([[[[0, 1], [0, 0]]]]), np.array([[[0, 0]]]))
    assert empirical_gen_error(t) == (0.5, 0.0)


def test_gen_error_std_err():
    g = np.array([0.0, 1.0, 1.0, 0.0])
    losses = np.zeros((1, 4, 1, 2))
    losses[0, :, 0, 1] = g
    t = SupersampleLossTensor(losses, np.zeros((1, 4, 1), dtype=int))
    mean, se = empirical_gen_error(t)
    assert mean == 0.5 and se == pytest.approx(np.std(g, ddof=1) / 2)


def test_bernoulli_gen_error_converges():
    rng = np.random.default_rng(0)
    masks = rng.integers(0, 2, (10, 1000, 1))
    hit = rng.random((10, 1000, 1)) < 0.25
    test_col = 1 - masks
    losses = np.zeros((10, 1000, 1, 2))
    np.put_along_axis(losses, test_col[..., None], hit[..., None].astype(float), axis=3)
    mean, se = empirical_gen_error(SupersampleLossTensor(losses, masks))
    assert abs(mean - 0.25) < 4 * se + 1e-3


def test_deterministic_row():
    t = channel_tensor(np.random.default_rng(1), 2, 40, 0.0)
    for mode in ("pooled", "disintegrated"):
        kl = estimate_f_information(t, KL, mode).values
        assert np.allclose(kl, LN2, atol=1e-15)
        assert np.allclose(estimate_f_information(t, TV, mode).values, 0.5)
        assert np.allclose(estimate_f_information(t, CHI2, mode).values, 1.0)
        assert np.allclose(estimate_f_information(t, SH, mode).values, 2 - math.sqrt(2))


def test_zero_delta_row_has_no_information():
    rng = np.random.default_rng(2)
    t = random_tensor(rng)
    t.losses[:, :, 0, 1] = t.losses[:, :, 0, 0]
    for mode in ("pooled", "disintegrated"):
        for kind in (KL, CHI2, SH, JS, TV):
            est = estimate_f_information(t, kind, mode)
            assert np.all(est.values[..., 0] == 0.0)


def test_sample_counts_and_shapes():
    t = random_tensor(np.random.default_rng(3), k1=3, k2=12, n=4)
    pooled = estimate_f_information(t, KL, "pooled")
    dis = estimate_f_information(t, KL, "disintegrated")
    assert pooled.values.shape == (4,) and np.all(pooled.sample_counts == 36)
    assert dis.values.shape == (3, 4) and np.all(dis.sample_counts == 12)
    with pytest.raises(ValidationError):
        estimate_f_information(t, KL, "sideways")


def test_empty_stratum_reported():
    t = random_tensor(np.random.default_rng(4), k1=2, k2=6, n=3)
    t.masks[1, :, 2] = 0
    with pytest.raises(EmptyStratumError) as info:
        estimate_f_information(t, KL, "disintegrated")
    assert info.value.cells == [(1, 2)]
    est = estimate_f_information(t, KL, "disintegrated", on_empty="ceiling")
    assert est.values[1, 2] == pytest.approx(LN2)
    assert est.substituted_cells == [(1, 2)]
    # pooled mode still sees both mask values
    estimate_f_information(t, KL, "pooled")


def test_permutation_invariance():
    rng = np.random.default_rng(5)
    t = random_tensor(rng)
    perm = rng.permutation(t.k2)
    p = SupersampleLossTensor(t.losses[:, perm], t.masks[:, perm])
    for mode in ("pooled", "disintegrated"):
        a = estimate_f_information(t, JS, mode).values
        b = estimate_f_information(p, JS, mode).values
        assert np.array_equal(a, b)
    draws = rng.permutation(t.k1)
    p = SupersampleLossTensor(t.losses[draws], t.masks[draws])
    assert np.array_equal(estimate_f_information(t, KL).values, estimate_f_information(p, KL).values)


def test_pooled_below_mean_disintegrated():
    rng = np.random.default_rng(6)
    for flip in (0.0, 0.1, 0.3, 0.5):
        t = channel_tensor(rng, 5, 200, flip)
        pooled = estimate_f_information(t, KL, "pooled").values[0]
        dis = estimate_f_information(t, KL, "disintegrated").values[:, 0].mean()
        assert pooled <= dis + 5e-2


def test_bernoulli_statistics():
    s = compute_statistics(bernoulli_tensor())
    m = s.pooled
    assert m.e_g[0] == 0.25 and m.e_dl2[0] == 0.25
    assert s.info(KL, "pooled")[0] == pytest.approx(0.25 * LN2, abs=1e-15)
    assert s.info(KL, "pooled")[0] == pytest.approx(0.1732868, abs=5e-8)
    assert m.min_g[0] == 0.0


def test_constant_tensor_statistics():
    t = SupersampleLossTensor(np.full((2, 4, 3, 2), 0.5), np.tile([0, 1], (2, 2, 3)).reshape(2, 4, 3), "bounded_unit")
    s = compute_statistics(t)
    for m in (s.pooled, s.disintegrated):
        for arr in (m.e_g, m.e_dl2, m.var_lplus, m.tv_term, m.max_abs, m.min_g):
            assert np.all(arr == 0)
        assert all(np.all(v == 0) for v in m.tail_prob.values())
        assert all(np.all(v == 0) for v in m.lp_norms.values())


def test_truncation_at_one_is_inactive_for_zero_one():
    s = compute_statistics(random_tensor(np.random.default_rng(7)))
    for m in (s.pooled, s.disintegrated):
        assert np.array_equal(m.trunc_dl2[1.0], m.e_dl2)
        assert np.array_equal(m.trunc_g[1.0], m.e_g)
        assert np.all(m.tail_prob[1.0] == 0)


def test_statistics_invariants():
    rng = np.random.default_rng(8)
    for kind in ("zero_one", "bounded_unit"):
        s = compute_statistics(random_tensor(rng, kind=kind))
        for mode in ("pooled", "disintegrated"):
            m = s.moments(mode)
            assert np.all(m.e_dl2 >= 0) and np.all(m.var_lplus >= 0)
            tails = np.array([m.tail_prob[c] for c in sorted(m.tail_prob)])
            assert np.all((tails >= 0) & (tails <= 1))
            assert np.all(np.diff(tails, axis=0) <= 1e-15)
            for k in s.config.all_kinds():
                assert np.all(s.info(k, mode) >= 0)
            assert np.all(s.info(KL, mode) <= LN2 + 1e-9)
            assert np.all(s.info(TV, mode) <= 0.5 + 1e-9)
            assert np.all(s.info(JS, mode) <= 2 * LN2)
            for a in (1.0, 1.25, 1.5, 2.0):
                assert np.all(s.info(phi_alpha(a), mode) < 1 + 2 ** (a - 1))


def test_observed_max_joins_c_grid():
    t = SupersampleLossTensor(np.array([[[[0.0, 0.37]], [[0.1, 0.0]]]]), np.array([[[0], [1]]]), "bounded_unit")
    s = compute_statistics(t, StatisticsConfig(c_grid=(0.0, 0.5)))
    assert s.config.c_grid == (0.0, 0.37, 0.5)
    assert s.pooled.tail_prob[0.37][0] == 0.0


def test_second_moment_vs_single_loss_variance():
    # both columns i.i.d. Bernoulli(0.3): E[dL^2] = 2 Var <= 4 Var
    rng = np.random.default_rng(9)
    losses = (rng.random((4, 500, 1, 2)) < 0.3).astype(float)
    t = SupersampleLossTensor(losses, rng.integers(0, 2, (4, 500, 1)))
    m = compute_statistics(t, StatisticsConfig(modes=("pooled",))).pooled
    dl2 = (losses[..., 1] - losses[..., 0]).ravel() ** 2
    se = dl2.std(ddof=1) / math.sqrt(dl2.size)
    assert m.e_dl2[0] <= 4 * m.var_lplus[0] + 3 * se


def test_tensor_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    for kind in ("zero_one", "bounded_unit"):
        t = random_tensor(rng, kind=kind)
        path = tmp_path / f"{kind}.json"
        t.save(path)
        back = SupersampleLossTensor.load(path)
        assert np.array_equal(back.losses, t.losses) and np.array_equal(back.masks, t.masks)
        assert back.loss_kind == kind
    obj = json.loads((tmp_path / "zero_one.json").read_text())
    assert obj["version"] == 1 and isinstance(obj["losses"][0][0][0][0], int)


def test_general_tensor_range():
    t = SupersampleLossTensor(np.full((1, 2, 1, 2), 3.0), np.array([[[0], [1]]]), "general", (2.0, 3.0))
    assert t.delta_bounded_by_one()
    assert not SupersampleLossTensor(t.losses, t.masks, "general").delta_bounded_by_one()
    assert SupersampleLossTensor.from_dict(t.to_dict()).loss_range == (2.0, 3.0)


def _base_obj():
    return {"version": 1, "n": 1, "k1": 1, "k2": 2, "loss_kind": "zero_one", "losses": [[[[0, 1]], [[1, 1]]]], "masks": [[[0], [1]]]}


@pytest.mark.parametrize(
    "path,value,match",
    [
        (("masks", 0, 0, 0), 2, r"masks\[0\]\[0\]\[0\]: mask must be 0 or 1"),
        (("losses", 0, 1, 0, 0), 0.5, r"losses\[0\]\[1\]\[0\]\[0\]: zero_one"),
        (("losses", 0, 1, 0, 1), -1, r"losses\[0\]\[1\]\[0\]\[1\]: losses must be >= 0"),
        (("losses", 0, 1, 0, 1), "x", "expected a finite number"),
        (("k2",), 3, r"losses\[0\]: expected an array of length 3"),
        (("version",), 2, "version"),
        (("n",), 0, "n: expected a positive integer"),
        (("loss_kind",), "huge", "loss_kind"),
    ],
)
def test_tensor_validation_names_field(path, value, match):
    obj = _base_obj()
    target = obj
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    with pytest.raises(ValidationError, match=match):
        SupersampleLossTensor.from_dict(obj)


def test_tensor_missing_field_and_bad_file(tmp_path):
    obj = _base_obj()
    del obj["masks"]
    with pytest.raises(ValidationError, match="masks: missing"):
        SupersampleLossTensor.from_dict(obj)
    with pytest.raises(ValidationError, match="cannot read"):
        SupersampleLossTensor.load(tmp_path / "none.json")


def test_tensor_constructor_validation():
    with pytest.raises(ValidationError):
        SupersampleLossTensor(np.zeros((1, 1, 1, 3)), np.zeros((1, 1, 1)))
    with pytest.raises(ValidationError):
        SupersampleLossTensor(np.full((1, 1, 1, 2), 2.0), np.zeros((1, 1, 1)), "bounded_unit")
    with pytest.raises(ValidationError):
        SupersampleLossTensor(np.zeros((1, 1, 1, 2)), np.zeros((1, 1, 1)), "general", (1.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(2, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_statistics_on_random_zero_one(k1, k2, n, seed):
    t = random_tensor(np.random.default_rng(seed), k1, k2, n)
    s = compute_statistics(t)
    assert s.gen_error == empirical_gen_error(t)
    assert np.all(s.info(KL, "disintegrated") <= LN2 + 1e-9)
    assert np.all(s.pooled.max_abs <= 1)
