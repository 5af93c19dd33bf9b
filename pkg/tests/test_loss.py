"""Composite loss: hand values, scaling behavior, GT pyramid, gradients."""

import numpy as np
import pytest

from cmwnet import autodiff as ad
from cmwnet.core import AblationSpec
from cmwnet.errors import ConfigurationError, InputError
from cmwnet.loss import LossConfig, downscale_gt, scaled_ground_truth, softmax_loss, total_loss

import oracles


def test_downscale_identity_and_ones():
    g = (np.arange(16).reshape(4, 4) % 3 == 0).astype(float)
    np.testing.assert_array_equal(downscale_gt(g, (4, 4)), g)
    np.testing.assert_array_equal(downscale_gt(np.ones((8, 8)), (2, 2)), np.ones((2, 2)))


def test_downscale_checkerboard_samples_even_offsets():
    board = np.indices((4, 4)).sum(axis=0) % 2 == 0
    out = downscale_gt(board.astype(float), (2, 2))
    # sampling grid at rows/cols {0, 2} picks the 'even' corners, all ones
    np.testing.assert_array_equal(out, np.ones((2, 2)))


def test_downscale_requires_integer_factor():
    with pytest.raises(InputError):
        downscale_gt(np.ones((6, 6)), (4, 4))


def test_downscale_stays_binary():
    rng = np.random.default_rng(0)
    g = (rng.random((16, 16)) > 0.5).astype(float)
    for size in (8, 4, 2):
        out = downscale_gt(g, (size, size))
        assert set(np.unique(out)) <= {0.0, 1.0}


def test_scaled_ground_truth_matches_prediction_shapes():
    g = (np.random.default_rng(1).random((1, 32, 32)) > 0.5).astype(float)
    shapes = {1: (32, 32), 2: (8, 8), 3: (2, 2), 4: (2, 2)}
    pyramid = scaled_ground_truth(g, shapes)
    for t, hw in shapes.items():
        assert pyramid[t].shape == (1,) + hw


def test_softmax_loss_uniform_ln2():
    gt = (np.random.default_rng(2).random((5, 5)) > 0.3).astype(float)
    loss = softmax_loss(ad.Tensor(np.zeros((2, 5, 5))), gt)
    np.testing.assert_allclose(loss.item(), np.log(2.0), rtol=1e-15)


def test_softmax_loss_saturated_correct():
    gt = (np.random.default_rng(3).random((6, 6)) > 0.5).astype(float)
    z = np.zeros((2, 6, 6))
    z[0] = np.where(gt > 0, 50.0, -50.0)
    z[1] = -z[0]
    assert softmax_loss(ad.Tensor(z), gt).item() < 1e-3


def test_softmax_loss_single_pixel():
    z = np.array([[[1.0]], [[0.0]]])
    val = softmax_loss(ad.Tensor(z), np.ones((1, 1))).item()
    np.testing.assert_allclose(val, 0.31326168751822286, rtol=1e-12)


def test_total_loss_weighting():
    rng = np.random.default_rng(4)
    preds = {t: ad.Tensor(rng.standard_normal((2,) + hw))
             for t, hw in {1: (8, 8), 2: (4, 4), 3: (2, 2), 4: (2, 2)}.items()}
    gts = {t: (rng.random((1,) + p.data.shape[1:]) > 0.5).astype(float)
           for t, p in preds.items()}
    zero, _ = total_loss(preds, gts, LossConfig(alphas=(0, 0, 0, 0)))
    assert zero.item() == 0.0
    only1, _ = total_loss(preds, gts, LossConfig(alphas=(1, 0, 0, 0)))
    np.testing.assert_allclose(only1.item(), softmax_loss(preds[1], gts[1]).item())
    total, terms = total_loss(preds, gts)
    np.testing.assert_allclose(total.item(), sum(terms.values()), rtol=1e-12)


def test_total_loss_equal_terms_scale_linearly():
    z = np.zeros((2, 4, 4))
    gt = np.ones((1, 4, 4))
    preds = {t: ad.Tensor(z.copy()) for t in (1, 2, 3, 4)}
    gts = {t: gt.copy() for t in (1, 2, 3, 4)}
    total, _ = total_loss(preds, gts)
    np.testing.assert_allclose(total.item(), 4 * np.log(2.0), rtol=1e-12)


def test_total_loss_without_ds_single_term():
    z = ad.Tensor(np.zeros((2, 4, 4)))
    gts = {1: np.ones((1, 4, 4))}
    total, terms = total_loss({1: z}, gts, ablation=AblationSpec(deep_supervision=False))
    assert list(terms) == [1]
    np.testing.assert_allclose(total.item(), np.log(2.0))


def test_total_loss_missing_prediction_with_weight():
    z = ad.Tensor(np.zeros((2, 4, 4)))
    with pytest.raises(ConfigurationError):
        total_loss({1: z}, {1: np.ones((1, 4, 4))}, LossConfig())


def test_loss_nonnegative_and_zero_only_when_saturated():
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.standard_normal((2, 4, 4))
        gt = (rng.random((4, 4)) > 0.5).astype(float)
        assert softmax_loss(ad.Tensor(z), gt).item() > 0.0


def test_loss_permutation_invariant():
    rng = np.random.default_rng(6)
    z = rng.standard_normal((2, 1, 16))
    gt = (rng.random((1, 16)) > 0.5).astype(float)
    perm = rng.permutation(16)
    a = softmax_loss(ad.Tensor(z), gt).item()
    b = softmax_loss(ad.Tensor(z[:, :, perm]), gt[:, perm]).item()
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_total_loss_gradient_matches_fd():
    rng = np.random.default_rng(7)
    shapes = {1: (8, 8), 2: (4, 4), 3: (2, 2), 4: (2, 2)}
    zs = {t: rng.standard_normal((2,) + hw) for t, hw in shapes.items()}
    gts = {t: (rng.random((1,) + hw) > 0.5).astype(float) for t, hw in shapes.items()}

    def value():
        preds = {t: ad.Tensor(z) for t, z in zs.items()}
        return total_loss(preds, gts)[0].item()

    preds = {t: ad.Tensor(z, requires_grad=True) for t, z in zs.items()}
    total, _ = total_loss(preds, gts)
    total.backward()
    for t, z in zs.items():
        idx = rng.choice(z.size, size=min(10, z.size), replace=False)
        fd = oracles.finite_diff_grad(value, z, idx)
        for i in idx:
            analytic = preds[t].grad.reshape(-1)[i]
            assert oracles.rel_err(analytic, fd[i], floor=1e-8) < 1e-6
