"""Siamese two-stream VGG16-shaped encoder.

Both streams run the same 13-conv stack with shared kernels; the depth
stream only owns its first convolution (1 input channel). Block l's output
is the last ReLU of the block, taken before the following 2x2 max-pool, so
spatial size halves per block: R, R/2, R/4, R/8, R/16.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import CONVS_PER_BLOCK, AblationSpec, FeatureMap
from .errors import ConfigurationError, InputError
from .netops import as_tensor_params


@dataclass
class EncoderOutput:
    rgb_blocks: dict    # {1..5: FeatureMap}
    depth_blocks: dict  # {1..5: FeatureMap} or None for the rgb-only variant


def _check_input(x, channels, res, name):
    a = x.data if isinstance(x, ad.Tensor) else np.asarray(x)
    if a.shape != (channels, res, res):
        raise InputError(f"{name} must be ({channels},{res},{res}), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise InputError(f"{name} must lie in [0, 1]")


def _run_stream(x, params, config, stream, first_conv_key):
    t = x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=config.np_dtype))
    blocks = {}
    for b in range(1, 6):
        for i in range(1, CONVS_PER_BLOCK[b - 1] + 1):
            key = first_conv_key if (b, i) == (1, 1) else f"encoder.conv{b}_{i}"
            t = ad.relu(params.apply(key, t))
        blocks[b] = FeatureMap(t, b, stream)
        if b < 5:
            t = ad.maxpool2x2(t)
    return blocks


def encode(rgb, depth, params, config, validate=True):
    """Run both streams; returns the 10 block feature maps."""
    params = as_tensor_params(params)
    if "encoder.depth_conv1_1.weight" not in params.store:
        raise ConfigurationError("parameters were built without a depth stream")
    if validate:
        res = config.input_resolution
        _check_input(rgb, 3, res, "rgb")
        _check_input(depth, 1, res, "depth")
    rgb_blocks = _run_stream(rgb, params, config, "rgb", "encoder.conv1_1")
    depth_blocks = _run_stream(depth, params, config, "depth", "encoder.depth_conv1_1")
    return EncoderOutput(rgb_blocks, depth_blocks)


def encode_rgb_only(rgb, params, config, ablation=None, validate=True):
    """Single-stream variant for the no-depth ablation."""
    ab = ablation or AblationSpec()
    if ab.use_depth:
        raise ConfigurationError("encode_rgb_only requires an ablation with use_depth=False")
    params = as_tensor_params(params)
    if validate:
        _check_input(rgb, 3, config.input_resolution, "rgb")
    return _run_stream(rgb, params, config, "rgb", "encoder.conv1_1")
