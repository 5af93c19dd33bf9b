"""Metric suite vs independent dense/naive oracles."""

import numpy as np
import pytest

from cmwnet import metrics as M
from cmwnet.data import save_image
from cmwnet.errors import DataError, EmptyForegroundError, InputError

import oracles


def _random_pair(rng, h, w, quantized=False):
    s = rng.random((h, w))
    if quantized:
        s = np.floor(s * 256).clip(0, 255) / 255.0
    g = rng.random((h, w)) > rng.uniform(0.2, 0.8)
    if not g.any():
        g[rng.integers(h), rng.integers(w)] = True
    if g.all():
        g[rng.integers(h), rng.integers(w)] = False
    return s, g.astype(np.uint8)


def test_mae_hand_cases():
    g = np.array([[0.0, 0.0, 1.0, 1.0]])
    s = np.array([[0.2, 0.4, 0.6, 0.8]])
    np.testing.assert_allclose(M.mae(s, g), 0.3, rtol=1e-15)
    assert M.mae(g, g) == 0.0
    assert M.mae(1.0 - g, g) == 1.0


def test_mae_complement_identity():
    rng = np.random.default_rng(0)
    for _ in range(25):
        s, g = _random_pair(rng, 6, 7)
        np.testing.assert_allclose(M.mae(s, g) + M.mae(1.0 - s, g), 1.0, rtol=1e-12)


def test_pr_perfect_prediction():
    rng = np.random.default_rng(1)
    _, g = _random_pair(rng, 8, 8)
    p, r = M.pr_curve(g.astype(float), g)
    np.testing.assert_array_equal(p[1:], 1.0)
    np.testing.assert_array_equal(r[1:], 1.0)
    assert r[0] == 1.0  # threshold 0 predicts everything


def test_pr_uniform_prediction():
    rng = np.random.default_rng(2)
    _, g = _random_pair(rng, 8, 8)
    p, r = M.pr_curve(np.ones_like(g, dtype=float), g)
    np.testing.assert_array_equal(r, 1.0)
    np.testing.assert_allclose(p, g.mean())


def test_pr_empty_foreground_errors():
    with pytest.raises(EmptyForegroundError):
        M.pr_curve(np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(EmptyForegroundError):
        M.weighted_f(np.zeros((4, 4)), np.zeros((4, 4)))


def test_pr_and_f_match_bruteforce_small():
    rng = np.random.default_rng(3)
    for _ in range(25):
        h, w = rng.integers(1, 9, size=2)
        s, g = _random_pair(rng, h, w)
        p, r = M.pr_curve(s, g)
        po, ro = oracles.naive_pr_curve(s, g)
        np.testing.assert_array_equal(p, po)
        np.testing.assert_array_equal(r, ro)
        assert M.max_f(p, r) == oracles.naive_max_f(po, ro)


def test_max_f_complement_zero_interior():
    rng = np.random.default_rng(4)
    _, g = _random_pair(rng, 6, 6)
    p, r = M.pr_curve(1.0 - g.astype(float), g)
    f = M.f_curve(p, r)
    assert np.all(f[1:255][r[1:255] == 0] == 0.0)


def test_max_e_matches_bruteforce():
    rng = np.random.default_rng(5)
    for _ in range(25):
        h, w = rng.integers(1, 9, size=2)
        s, g = _random_pair(rng, h, w)
        curve = oracles.naive_e_curve(s, g)
        assert M.max_e(s, g) == curve.max()


def test_max_e_trivial_cases():
    rng = np.random.default_rng(6)
    _, g = _random_pair(rng, 8, 8)
    assert abs(M.max_e(g.astype(float), g) - 1.0) < 1e-6
    # complement: interior thresholds align anti-perfectly
    curve = oracles.naive_e_curve(1.0 - g.astype(float), g)
    assert curve[128] < 1e-12


def test_weighted_f_trivial_cases():
    rng = np.random.default_rng(7)
    g = np.zeros((12, 12), dtype=np.uint8)
    g[4:8, 4:8] = 1  # fg margin > kernel radius so border effects vanish
    assert abs(M.weighted_f(g.astype(float), g) - 1.0) < 1e-9
    assert M.weighted_f(1.0 - g.astype(float), g) < 1e-6


def test_weighted_f_matches_dense_oracle():
    rng = np.random.default_rng(8)
    for i in range(12):
        s, g = _random_pair(rng, 16, 16)
        got = M.weighted_f(s, g)
        want = oracles.dense_weighted_f(s, g)
        assert abs(got - want) < 1e-9, i


def test_weighted_f_single_pixel_neighbor_case():
    g = np.zeros((5, 5), dtype=np.uint8)
    g[2, 2] = 1
    s = g.astype(float)
    s[2, 3] = 0.5
    got = M.weighted_f(s, g)
    want = oracles.dense_weighted_f(s, g)
    assert abs(got - want) < 1e-9


def test_s_measure_trivial_and_oracle():
    rng = np.random.default_rng(9)
    for i in range(12):
        s, g = _random_pair(rng, 16, 16)
        assert abs(M.s_measure(g.astype(float), g) - 1.0) < 1e-6
        got = M.s_measure(s, g)
        want = oracles.dense_s_measure(s, g)
        assert abs(got - want) < 1e-9, i
        # lambda endpoint: object term alone
        np.testing.assert_allclose(M.s_measure(s, g, lam=1.0),
                                   max(M._s_object(s, g.astype(bool)), 0.0), rtol=1e-12)


def test_s_measure_degenerate_gt():
    s = np.full((4, 4), 0.25)
    assert M.s_measure(s, np.zeros((4, 4))) == 0.75
    assert M.s_measure(s, np.ones((4, 4))) == 0.25


def test_s_measure_halfplane_uniform_value():
    g = np.zeros((16, 16))
    g[:, 8:] = 1.0
    s = np.full((16, 16), 0.5)
    got = M.s_measure(s, g)
    want = oracles.dense_s_measure(s, g)
    assert abs(got - want) < 1e-9


def test_threshold_metrics_invariant_under_grid_preserving_requantization():
    rng = np.random.default_rng(10)
    s, g = _random_pair(rng, 8, 8, quantized=True)
    k = np.rint(s * 255).astype(int)
    # strictly monotone per-level remap that keeps every tau/255 comparison
    s2 = (k + rng.uniform(0.0, 0.9, size=k.shape)) / 255.0
    s2 = np.clip(s2, 0.0, 1.0)
    p1, r1 = M.pr_curve(s, g)
    p2, r2 = M.pr_curve(s2, g)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_array_equal(r1, r2)
    assert M.max_e(s, g) == M.max_e(s2, g)


def test_counting_metrics_equivariant_under_isometries():
    rng = np.random.default_rng(11)
    s, g = _random_pair(rng, 7, 7)
    for op in (lambda a: np.rot90(a, 1), lambda a: np.rot90(a, 2),
               lambda a: a[::-1], lambda a: a[:, ::-1]):
        s2, g2 = op(s).copy(), op(g).copy()
        np.testing.assert_allclose(M.mae(s2, g2), M.mae(s, g), rtol=1e-12)
        p1, r1 = M.pr_curve(s, g)
        p2, r2 = M.pr_curve(s2, g2)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_allclose(M.max_e(s2, g2), M.max_e(s, g), atol=1e-12)


def test_all_scalar_metrics_in_unit_interval():
    rng = np.random.default_rng(12)
    for _ in range(10):
        s, g = _random_pair(rng, 10, 10)
        rep = M.compute_report(s, g)
        for v in rep.to_dict().values():
            assert 0.0 <= v <= 1.0
        assert rep.pr_curve.shape == (256, 2)
        assert rep.f_curve.shape == (256,)


def test_input_validation():
    with pytest.raises(InputError):
        M.mae(np.zeros((3, 3)), np.zeros((4, 4)))
    with pytest.raises(InputError):
        M.mae(np.full((3, 3), 1.5), np.zeros((3, 3)))
    with pytest.raises(InputError):
        M.mae(np.zeros((3, 3)), np.full((3, 3), 0.5))


def _write_pair_dirs(tmp_path, pairs):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    for i, (s, g) in enumerate(pairs):
        save_image(pred / f"{i:03d}.png", s)
        save_image(gt / f"{i:03d}.png", g.astype(float))
    return pred, gt


def test_evaluate_dataset_perfect_scores(tmp_path):
    rng = np.random.default_rng(13)
    _, g = _random_pair(rng, 16, 16)
    pred, gt = _write_pair_dirs(tmp_path, [(g.astype(float), g)])
    report, rows = M.evaluate_dataset(pred, gt)
    assert report.mae == 0.0
    for key in ("Smeasure", "maxF", "weightedF", "maxE"):
        assert abs(report.to_dict()[key] - 1.0) < 1e-6
    assert len(rows) == 1


def test_evaluate_dataset_mae_is_mean(tmp_path):
    rng = np.random.default_rng(14)
    pairs = [_random_pair(rng, 8, 8, quantized=True) for _ in range(2)]
    pred, gt = _write_pair_dirs(tmp_path, pairs)
    report, rows = M.evaluate_dataset(pred, gt)
    np.testing.assert_allclose(report.mae, np.mean([r["MAE"] for r in rows]), rtol=1e-12)


def test_evaluate_dataset_matches_per_image_oracles(tmp_path):
    rng = np.random.default_rng(15)
    pairs = [_random_pair(rng, 10, 10, quantized=True) for _ in range(10)]
    pred, gt = _write_pair_dirs(tmp_path, pairs)
    report, rows = M.evaluate_dataset(pred, gt)
    per_img = []
    for s, g in pairs:
        per_img.append(oracles.dense_weighted_f(s, g))
    np.testing.assert_allclose(report.weighted_f, np.mean(per_img), atol=1e-9)


def test_evaluate_dataset_unmatched_files(tmp_path):
    rng = np.random.default_rng(16)
    s, g = _random_pair(rng, 8, 8)
    pred, gt = _write_pair_dirs(tmp_path, [(s, g)])
    save_image(pred / "extra.png", s)
    with pytest.raises(DataError):
        M.evaluate_dataset(pred, gt)
    report, rows = M.evaluate_dataset(pred, gt, skip_missing=True)
    assert len(rows) == 1


def test_write_report_files(tmp_path):
    rng = np.random.default_rng(17)
    s, g = _random_pair(rng, 8, 8)
    rep = M.compute_report(s, g)
    path = M.write_report(rep, [{"image": "x.png", **rep.to_dict()}], tmp_path / "out")
    import json

    data = json.loads(path.read_text())
    assert set(data) == {"Smeasure", "maxF", "weightedF", "maxE", "MAE"}
    curves = (tmp_path / "out" / "curves.csv").read_text().strip().splitlines()
    assert len(curves) == 257  # header + 256 thresholds


def test_nearest_foreground_backends_agree():
    from cmwnet import backend

    if not backend.have_numba():
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(18)
    fg = rng.random((17, 13)) > 0.85
    fg[0, 0] = True
    prev = backend.set_backend("numba")
    try:
        d1, n1 = M._nearest_foreground(fg)
        backend.set_backend("numpy")
        d2, n2 = M._nearest_foreground(fg)
    finally:
        backend.set_backend(prev)
    np.testing.assert_array_equal(d1, d2)
    np.testing.assert_array_equal(n1, n2)
