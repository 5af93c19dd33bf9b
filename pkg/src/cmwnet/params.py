"""Parameter layout and deterministic initialization.

`layer_layout` is the single source of truth for which layers exist under a
given (config, ablation) and what their kernels look like; the forward code
reads strides/padding from the same table, so init and wiring cannot drift
apart. Every tensor is drawn from an rng seeded by (config.seed, key), which
makes initialization a pure function of (config, ablation, seed) and keeps
shared keys identical across ablation variants.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from .core import CONVS_PER_BLOCK, AblationSpec, branch_channels, dw_target_level
from .errors import ConfigurationError, MissingPretrainedError


@dataclass(frozen=True)
class LayerSpec:
    kind: str            # conv | deconv
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0
    dilation: int = 1
    init: str = "xavier"  # xavier | gaussian_0.01 | vgg16

    @property
    def weight_shape(self):
        if self.kind == "conv":
            return (self.out_channels, self.in_channels, self.kernel, self.kernel)
        return (self.in_channels, self.out_channels, self.kernel, self.kernel)

    @property
    def n_params(self):
        return int(np.prod(self.weight_shape)) + self.out_channels


def _conv3(cin, cout, **kw):
    return LayerSpec("conv", cin, cout, 3, pad=1, **kw)


def _dw_fuse_spec(level, scale_mode, f_lg_channels, block_channels):
    """Fusion layer mapping f_lg to the target block's channel count/resolution."""
    ch = block_channels
    target = dw_target_level(level, scale_mode)
    cout = ch[target - 1]
    if level == 5 or scale_mode == "same_scale":
        return _conv3(f_lg_channels, cout)
    if scale_mode == "cross_adjacent":
        if level in (1, 3):   # 2x downsampling
            return LayerSpec("conv", f_lg_channels, cout, 3, stride=2, pad=1)
        return LayerSpec("deconv", f_lg_channels, cout, 2, stride=2)  # 2x upsampling
    if level in (1, 2):       # cross_two: 4x down / 4x up
        return LayerSpec("conv", f_lg_channels, cout, 5, stride=4, pad=2)
    return LayerSpec("deconv", f_lg_channels, cout, 4, stride=4)


def layer_layout(config, ablation=None):
    """Ordered mapping of layer key -> LayerSpec for (config, ablation)."""
    ab = ablation or AblationSpec()
    ch = config.block_channels
    dch = config.decoder_channels
    layout = {}

    # Siamese encoder: both streams share these kernels; only the depth
    # stream's first convolution is its own tensor (1 input channel).
    # Without pretrained weights the backbone uses He init: Xavier collapses
    # activations through 13 ReLU convs at desk-scale widths.
    for b in range(1, 6):
        for i in range(1, CONVS_PER_BLOCK[b - 1] + 1):
            if b == 1 and i == 1:
                cin = 3
            elif i == 1:
                cin = ch[b - 2]
            else:
                cin = ch[b - 1]
            layout[f"encoder.conv{b}_{i}"] = _conv3(cin, ch[b - 1], init="he_relu")
    if ab.use_depth:
        layout["encoder.depth_conv1_1"] = _conv3(1, ch[0], init="gaussian_0.01")

    for l in range(1, 6):
        cl = ch[l - 1]
        bc = branch_channels(cl)
        if ab.dw_active(l):
            layout[f"cmw.l{l}.dw.loc1"] = _conv3(cl, bc)
            layout[f"cmw.l{l}.dw.loc2"] = _conv3(cl, bc)
            n_branches = 2
            if ab.dw_global_filters:
                layout[f"cmw.l{l}.dw.glo7"] = LayerSpec("conv", cl, bc, 7, pad=3)
                layout[f"cmw.l{l}.dw.glod"] = LayerSpec("conv", cl, bc, 3, pad=5, dilation=5)
                n_branches = 4
            layout[f"cmw.l{l}.dw.fuse"] = _dw_fuse_spec(l, ab.scale_mode, n_branches * bc, ch)
        if ab.rw_active(l):
            layout[f"cmw.l{l}.rw.loc1"] = _conv3(cl, bc)
            layout[f"cmw.l{l}.rw.loc2"] = _conv3(cl, bc)
            n_branches = 2
            if ab.rw_global_filters:
                layout[f"cmw.l{l}.rw.glo7"] = LayerSpec("conv", cl, bc, 7, pad=3)
                layout[f"cmw.l{l}.rw.glod"] = LayerSpec("conv", cl, bc, 3, pad=5, dilation=5)
                n_branches = 4
            layout[f"cmw.l{l}.rw.fuse"] = _conv3(n_branches * bc, cl)
        if ab.wei_fuse_active(l):
            layout[f"cmw.l{l}.wei_fuse"] = LayerSpec("conv", 2 * cl, cl, 1)

    # pairwise combine: high block deconvolved 2x, concatenated onto low block
    layout["cmw.k1.combine"] = LayerSpec("deconv", ch[1], ch[1], 2, stride=2)
    layout["cmw.k2.combine"] = LayerSpec("deconv", ch[3], ch[3], 2, stride=2)

    layout["decoder.d5.conv1"] = _conv3(ch[4], dch[0])
    layout["decoder.d5.conv2"] = _conv3(dch[0], dch[0])
    layout["decoder.up5"] = LayerSpec("deconv", dch[0], dch[0], 4, stride=4)
    layout["decoder.d34.conv1"] = _conv3(dch[0] + ch[2] + ch[3], dch[1])
    layout["decoder.d34.conv2"] = _conv3(dch[1], dch[1])
    layout["decoder.up34"] = LayerSpec("deconv", dch[1], dch[1], 4, stride=4)
    layout["decoder.d12.conv1"] = _conv3(dch[1] + ch[0] + ch[1], dch[2])
    layout["decoder.d12.conv2"] = _conv3(dch[2], dch[2])
    layout["decoder.head_s1"] = _conv3(dch[2], 2)
    if ab.deep_supervision:
        layout["decoder.head_s2"] = _conv3(dch[1], 2)
        layout["decoder.head_s3"] = _conv3(dch[0], 2)
        layout["decoder.head_s4"] = _conv3(ch[4], 2)
    return layout


class ParameterStore:
    """Named tensors keyed by '<layer>.weight' / '<layer>.bias'."""

    def __init__(self, arrays, init_record, layout):
        self._arrays = arrays
        self.init_record = init_record
        self.layout = layout

    def __getitem__(self, key):
        return self._arrays[key]

    def __setitem__(self, key, value):
        if key not in self._arrays:
            raise KeyError(key)
        self._arrays[key] = value

    def __contains__(self, key):
        return key in self._arrays

    def __len__(self):
        return len(self._arrays)

    def keys(self):
        return self._arrays.keys()

    def items(self):
        return self._arrays.items()

    def layer(self, key):
        return self.layout[key]

    def total_parameters(self, prefix=None):
        return sum(int(a.size) for k, a in self._arrays.items()
                   if prefix is None or k.startswith(prefix))

    def copy(self):
        return ParameterStore({k: a.copy() for k, a in self._arrays.items()},
                              dict(self.init_record), dict(self.layout))

    def allclose(self, other, **kw):
        return set(self.keys()) == set(other.keys()) and all(
            np.allclose(a, other[k], **kw) for k, a in self.items())


def _key_rng(seed, key):
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(key.encode()))))


def _xavier(rng, shape, dtype):
    fan_in = shape[1] * shape[2] * shape[3]
    fan_out = shape[0] * shape[2] * shape[3]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def _he_relu(rng, shape, dtype):
    fan_in = shape[1] * shape[2] * shape[3]
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def _load_vgg16(path, config):
    if path is None:
        raise MissingPretrainedError("source='vgg16' requires vgg16_path")
    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise MissingPretrainedError(f"cannot read pretrained weights {path}: {exc}") from exc
    if tuple(config.block_channels) != (64, 128, 256, 512, 512):
        raise ConfigurationError("pretrained backbone requires the default block widths")
    return archive


def init_parameters(config, ablation=None, source="random", vgg16_path=None,
                    fallback_to_random=False):
    """Build a fully initialized ParameterStore.

    source='random': backbone and new layers Xavier, depth first conv
    Gaussian(0, 0.01^2). source='vgg16': backbone from an .npz of VGG16
    kernels ('conv1_1.weight', ...); missing file raises
    MissingPretrainedError unless fallback_to_random is set.
    """
    if source not in ("random", "vgg16"):
        raise ConfigurationError(f"unknown init source {source!r}")
    ab = ablation or AblationSpec()
    layout = layer_layout(config, ab)
    dtype = config.np_dtype
    vgg = None
    if source == "vgg16":
        try:
            vgg = _load_vgg16(vgg16_path, config)
        except MissingPretrainedError:
            if not fallback_to_random:
                raise
            vgg = None

    arrays, record = {}, {}
    for key, spec in layout.items():
        rng = _key_rng(config.seed, key)
        shape = spec.weight_shape
        if vgg is not None and key.startswith("encoder.conv"):
            name = key.split(".", 1)[1]
            try:
                w = np.asarray(vgg[f"{name}.weight"], dtype=dtype)
                b = np.asarray(vgg[f"{name}.bias"], dtype=dtype)
            except KeyError as exc:
                raise MissingPretrainedError(f"pretrained archive lacks {exc}") from exc
            if w.shape != shape:
                raise ConfigurationError(
                    f"pretrained {name}.weight has shape {w.shape}, expected {shape}")
            arrays[f"{key}.weight"] = w
            arrays[f"{key}.bias"] = b
            record[f"{key}.weight"] = record[f"{key}.bias"] = "vgg16"
            continue
        if spec.init == "gaussian_0.01":
            w = rng.normal(0.0, 0.01, size=shape).astype(dtype)
        elif spec.init == "he_relu":
            w = _he_relu(rng, shape, dtype)
        else:
            w = _xavier(rng, shape, dtype)
        arrays[f"{key}.weight"] = w
        arrays[f"{key}.bias"] = np.zeros(spec.out_channels, dtype=dtype)
        record[f"{key}.weight"] = spec.init
        record[f"{key}.bias"] = "zeros"

    for key, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise ConfigurationError(f"non-finite values in initialized tensor {key}")
    return ParameterStore(arrays, record, layout)
