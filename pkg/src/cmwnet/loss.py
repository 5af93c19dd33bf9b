"""Deeply supervised composite loss with multi-scale ground truth."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import AblationSpec
from .errors import ConfigurationError, InputError


@dataclass
class LossConfig:
    alphas: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        if len(self.alphas) != 4 or any(a < 0 or not np.isfinite(a) for a in self.alphas):
            raise ConfigurationError("alphas must be 4 finite non-negative weights")


def downscale_gt(gt, target):
    """Nearest-neighbor downscale of a binary mask, sampling grid anchored
    at even offsets (out[i,j] = in[i*f, j*f]), then re-binarized at 0.5."""
    g = np.asarray(gt)
    squeeze = g.ndim == 3
    if squeeze:
        g = g[0]
    h, w = g.shape
    th, tw = (target, target) if np.isscalar(target) else target
    if h % th or w % tw:
        raise InputError(f"target {th}x{tw} must divide source {h}x{w}")
    out = g[:: h // th, :: w // tw]
    out = (out >= 0.5).astype(g.dtype)
    return out[None] if squeeze else out


def scaled_ground_truth(gt, pred_shapes):
    """{t: G^(t)} with each mask at its prediction's resolution."""
    return {t: downscale_gt(gt, hw) for t, hw in pred_shapes.items()}


def softmax_loss(logits, gt):
    """Mean per-pixel 2-class softmax cross entropy (channel 0 = fg)."""
    t = logits if isinstance(logits, ad.Tensor) else ad.as_tensor(logits)
    return ad.softmax_cross_entropy_mean(t, gt)


def total_loss(predictions, scaled_gt, loss_config=None, ablation=None):
    """Weighted sum of per-scale losses.

    Returns (scalar Tensor, {t: float per-term value}). Without deep
    supervision only the final prediction's term exists.
    """
    cfg = loss_config or LossConfig()
    ab = ablation or AblationSpec()
    terms_t = (1,) if not ab.deep_supervision else (1, 2, 3, 4)
    total = None
    per_term = {}
    for t in terms_t:
        alpha = cfg.alphas[t - 1]
        if t not in predictions:
            if alpha != 0.0:
                raise ConfigurationError(f"missing prediction S^({t}) for alpha={alpha}")
            continue
        term = softmax_loss(predictions[t], scaled_gt[t])
        per_term[t] = term.item()
        weighted = ad.scale(term, alpha)
        total = weighted if total is None else ad.add(total, weighted)
    if total is None:
        total = ad.Tensor(np.zeros((), dtype=np.float64))
    return total, per_term
