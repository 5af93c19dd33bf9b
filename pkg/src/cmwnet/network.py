"""Full forward pass: encoder -> CMW modules -> decoder."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import cmw as cmw_mod
from .core import AblationSpec
from .decoder import decode
from .encoder import encode, encode_rgb_only
from .netops import as_tensor_params


@dataclass
class ForwardResult:
    rgb_blocks: dict
    depth_blocks: dict   # None without depth
    f_cmw1: object
    f_cmw2: object
    f_de5: object
    decoder: object
    intermediates: dict  # None unless requested

    @property
    def predictions(self):
        return self.decoder.predictions

    @property
    def saliency(self):
        return self.decoder.saliency

    def measured_shapes(self):
        """Shape table in the same key scheme as core.expected_shapes."""
        table = {}
        for l, fm in self.rgb_blocks.items():
            table[f"rgb/{l}"] = fm.shape
        if self.depth_blocks is not None:
            for l, fm in self.depth_blocks.items():
                table[f"depth/{l}"] = fm.shape
        if self.intermediates:
            for key, val in self.intermediates.items():
                if key.startswith(("lg/", "rdw/", "rrw/", "de/")):
                    table[key] = val.shape
        table["cmw/1"] = self.f_cmw1.shape
        table["cmw/2"] = self.f_cmw2.shape
        table["de/5"] = self.f_de5.shape
        for name, t in self.decoder.levels.items():
            table[f"dec/{name}"] = tuple(t.shape)
        for t, logits in self.decoder.predictions.items():
            table[f"pred/{t}"] = tuple(logits.shape[1:])
        return table


def forward(rgb, depth, params, config, ablation=None, keep_intermediates=False,
            validate=True):
    """Run the whole network on one RGB(+depth) input."""
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    if ab.use_depth:
        enc = encode(rgb, depth, params, config, validate=validate)
        rgb_blocks, depth_blocks = enc.rgb_blocks, enc.depth_blocks
    else:
        rgb_blocks = encode_rgb_only(rgb, params, config, ab, validate=validate)
        depth_blocks = None

    if ab.direction == "DeR" or depth_blocks is None:
        modulated, guide = rgb_blocks, depth_blocks
    else:
        modulated, guide = depth_blocks, rgb_blocks

    f_cmw1, f_cmw2, f_de5, inter = cmw_mod.cmw_forward(
        modulated, guide, params, ab, keep_intermediates=keep_intermediates)
    dec = decode(f_de5, f_cmw2, f_cmw1, modulated[5], params, config, ab)
    return ForwardResult(rgb_blocks, depth_blocks, f_cmw1, f_cmw2, f_de5, dec, inter)


def predict(rgb, depth, params, config, ablation=None):
    """Inference: saliency map at the input's original resolution.

    Inputs of any size are resized to the network resolution; the final
    prediction's foreground probabilities are resized back.
    """
    from .data import bilinear_resize  # local import: data <-> network layering

    ab = ablation or AblationSpec()
    rgb = np.asarray(rgb, dtype=config.np_dtype)
    h, w = rgb.shape[1:]
    res = config.input_resolution
    if (h, w) != (res, res):
        rgb_in = bilinear_resize(rgb, res, res).astype(config.np_dtype)
        depth_in = (bilinear_resize(np.asarray(depth), res, res).astype(config.np_dtype)
                    if depth is not None else None)
    else:
        rgb_in = rgb
        depth_in = None if depth is None else np.asarray(depth, dtype=config.np_dtype)
    with ad.no_grad():
        result = forward(rgb_in, depth_in, params, config, ab, validate=False)
    sal = result.saliency
    if (h, w) != (res, res):
        sal = np.clip(bilinear_resize(sal, h, w), 0.0, 1.0)
    return sal
