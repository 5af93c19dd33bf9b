"""Three-level decoder with deep supervision heads.

D5 consumes the level-5 enhanced feature; each following level receives the
previous level 4x-deconvolved and concatenated with the matching pairwise
CMW output. Heads: S3 on D5, S2 on D34, S1 on D12, and S4 directly on the
consumed stream's block-5 feature. Each level is two 3x3 conv+ReLU layers.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import AblationSpec, FeatureMap
from .errors import InputError
from .netops import as_tensor_params


@dataclass
class DecoderOutput:
    predictions: dict  # {t: Tensor of 2-channel logits}; only {1} without DS
    levels: dict       # {"5"|"34"|"12": Tensor} decoder level outputs

    @property
    def saliency(self):
        return to_saliency(self.predictions[1])


def to_saliency(logits):
    """Per-pixel foreground probability from 2-channel logits
    (channel 0 = foreground)."""
    z = logits.data if isinstance(logits, ad.Tensor) else np.asarray(logits)
    if z.ndim != 3 or z.shape[0] != 2:
        raise InputError(f"saliency expects (2,H,W) logits, got {z.shape}")
    d = z[0] - z[1]  # fg prob = sigmoid(z0 - z1), computed stably
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ed = np.exp(d[~pos])
    out[~pos] = ed / (1.0 + ed)
    return out


def _t(x):
    if isinstance(x, ad.Tensor):
        return x
    if isinstance(x, FeatureMap):
        return _t(x.data)
    return ad.as_tensor(x)


def _level(params, name, x):
    x = ad.relu(params.apply(f"decoder.{name}.conv1", x))
    return ad.relu(params.apply(f"decoder.{name}.conv2", x))


def _up_and_cat(params, up_key, x, skip, what):
    up = params.apply(up_key, x)
    if up.shape[1:] != skip.shape[1:]:
        raise InputError(
            f"{what}: upsampled {up.shape} does not align with skip {skip.shape}")
    return ad.concat_channels([up, skip])


def decode(f_de5, f_cmw2, f_cmw1, block5, params, config, ablation=None):
    """Full decoder pass; block5 is the consumed stream's raw fifth block
    (carries the S4 head)."""
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    preds = {}

    d5 = _level(params, "d5", _t(f_de5))
    d34 = _level(params, "d34", _up_and_cat(params, "decoder.up5", d5, _t(f_cmw2), "D5->D34"))
    d12 = _level(params, "d12", _up_and_cat(params, "decoder.up34", d34, _t(f_cmw1), "D34->D12"))

    preds[1] = params.apply("decoder.head_s1", d12)
    if ab.deep_supervision:
        preds[2] = params.apply("decoder.head_s2", d34)
        preds[3] = params.apply("decoder.head_s3", d5)
        preds[4] = params.apply("decoder.head_s4", _t(block5))
    return DecoderOutput(preds, {"5": d5, "34": d34, "12": d12})
