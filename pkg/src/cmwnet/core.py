"""Domain types, network/ablation configuration, and shape algebra.

Everything downstream (encoder, weighting modules, decoder, trainer) is a
pure function of these configs plus a ParameterStore, so the types here pin
the whole artifact's contracts: tensor layouts are CHW, depth is a single
channel, ground truth is strictly binary.
"""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigurationError, InputError

# convs per VGG16 block; block output = last ReLU, pools sit between blocks
CONVS_PER_BLOCK = (2, 2, 3, 3, 3)

DTYPES = {"f32": np.float32, "f64": np.float64}


def _as_array(data):
    return data.data if isinstance(data, Tensor) else np.asarray(data)


@dataclass
class FeatureMap:
    """One block's activations: `data` is (C, H, W), autodiff Tensor or array."""

    data: object
    block_index: int
    stream: str  # rgb | depth | fused

    @property
    def array(self):
        return _as_array(self.data)

    @property
    def shape(self):
        return tuple(self.array.shape)

    def validate(self):
        a = self.array
        if a.ndim != 3 or min(a.shape) < 1:
            raise InputError(f"FeatureMap needs CxHxW with positive dims, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("FeatureMap contains non-finite entries")
        if self.stream not in ("rgb", "depth", "fused"):
            raise InputError(f"unknown stream {self.stream!r}")
        return self


@dataclass
class ResponseMap:
    """Sigmoid gate in [0,1] with the shape of the feature it modulates."""

    data: object
    kind: str  # dw | rw

    @property
    def array(self):
        return _as_array(self.data)

    @property
    def shape(self):
        return tuple(self.array.shape)

    def validate(self):
        a = self.array
        if a.ndim != 3:
            raise InputError(f"ResponseMap needs CxHxW, got {a.shape}")
        if a.min() < 0.0 or a.max() > 1.0:
            raise InputError("ResponseMap entries must lie in [0, 1]")
        if self.kind not in ("dw", "rw"):
            raise InputError(f"unknown response kind {self.kind!r}")
        return self


@dataclass
class RGBDTriplet:
    rgb: np.ndarray    # (3, H, W) in [0, 1]
    depth: np.ndarray  # (1, H, W) in [0, 1]
    gt: np.ndarray     # (1, H, W) in {0, 1}
    id: str = ""

    @property
    def resolution(self):
        return self.rgb.shape[1:]

    def validate(self):
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise InputError(f"rgb must be (3,H,W), got {self.rgb.shape}")
        if self.depth.shape != (1,) + self.rgb.shape[1:]:
            raise InputError(f"depth shape {self.depth.shape} does not match rgb {self.rgb.shape}")
        if self.gt.shape != self.depth.shape:
            raise InputError(f"gt shape {self.gt.shape} does not match depth {self.depth.shape}")
        vals = np.unique(self.gt)
        if not np.all(np.isin(vals, (0, 1))):
            raise InputError("gt must be strictly binary")
        return self


@dataclass
class NetworkConfig:
    input_resolution: int = 288
    block_channels: tuple = (64, 128, 256, 512, 512)
    decoder_channels: tuple = (256, 128, 64)
    seed: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        self.block_channels = tuple(int(c) for c in self.block_channels)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        if self.input_resolution % 16 != 0:
            raise ConfigurationError(
                f"input_resolution must be divisible by 16, got {self.input_resolution}")
        if len(self.block_channels) != 5 or min(self.block_channels) < 1:
            raise ConfigurationError("block_channels needs 5 integers >= 1")
        if len(self.decoder_channels) != 3 or min(self.decoder_channels) < 1:
            raise ConfigurationError("decoder_channels needs 3 integers >= 1")
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]


@dataclass
class AblationSpec:
    """On/off switches for the paper-variant grid; default = full model."""

    direction: str = "DeR"          # DeR | ReD
    use_depth: bool = True
    use_cmw_lm: bool = True
    use_cmw_h: bool = True
    use_rw: bool = True
    use_weighting: bool = True      # False => concatenation fusion
    dw_global_filters: bool = True
    rw_global_filters: bool = False
    scale_mode: str = "cross_adjacent"  # cross_adjacent | same_scale | cross_two
    deep_supervision: bool = True

    def __post_init__(self):
        if self.direction not in ("DeR", "ReD"):
            raise ConfigurationError(f"direction must be DeR or ReD, got {self.direction!r}")
        if self.scale_mode not in ("cross_adjacent", "same_scale", "cross_two"):
            raise ConfigurationError(f"unknown scale_mode {self.scale_mode!r}")
        if not self.use_depth:
            if self.direction == "ReD":
                raise ConfigurationError("use_depth=False cannot enhance depth (direction=ReD)")
            if not self.use_weighting:
                raise ConfigurationError("use_depth=False has no depth features to concatenate")

    def dw_active(self, level):
        if not (self.use_depth and self.use_weighting):
            return False
        return self.use_cmw_h if level == 5 else self.use_cmw_lm

    def rw_active(self, level):
        if not (self.use_rw and self.use_weighting):
            return False
        return self.use_cmw_h if level == 5 else self.use_cmw_lm

    def wei_fuse_active(self, level):
        if self.use_weighting or not self.use_depth:
            return False
        return self.use_cmw_h if level == 5 else self.use_cmw_lm


# ablation variants of the paper's experiment grid, by their table names
ABLATION_VARIANTS = {
    "full": AblationSpec(),
    "ReD": AblationSpec(direction="ReD"),
    "w/o depth": AblationSpec(use_depth=False),
    "w/o CMW-L&M": AblationSpec(use_cmw_lm=False),
    "w/o CMW-H": AblationSpec(use_cmw_h=False),
    "w/o RW": AblationSpec(use_rw=False),
    "w/o Wei": AblationSpec(use_weighting=False),
    "DW w/o GF": AblationSpec(dw_global_filters=False),
    "RW w/ GF": AblationSpec(rw_global_filters=True),
    "w/o CS": AblationSpec(scale_mode="same_scale"),
    "C2S": AblationSpec(scale_mode="cross_two"),
    "w/o DS": AblationSpec(deep_supervision=False),
}


def _normalize_variant(name):
    s = name.strip().lower().replace("w/o", "wo").replace("w/", "w")
    for ch in " _&/-":
        s = s.replace(ch, "")
    return s


_VARIANT_LOOKUP = {_normalize_variant(k): k for k in ABLATION_VARIANTS}


def ablation_from_name(name):
    """Resolve a variant name ('w/o RW', 'wo-rw', 'C2S', ...) to its spec."""
    key = _VARIANT_LOOKUP.get(_normalize_variant(name))
    if key is None:
        raise ConfigurationError(
            f"unknown ablation variant {name!r}; known: {sorted(ABLATION_VARIANTS)}")
    return dataclasses.replace(ABLATION_VARIANTS[key])


def branch_channels(c_in):
    """Width of one DW/RW filter branch for a block of c_in channels."""
    return max(c_in // 2, 4)


def dw_target_level(level, scale_mode):
    """Block whose features the level-`level` depth response modulates."""
    if level == 5 or scale_mode == "same_scale":
        return level
    if scale_mode == "cross_adjacent":
        return level + 1 if level in (1, 3) else level - 1
    return level + 2 if level in (1, 2) else level - 2  # cross_two


def expected_shapes(config, ablation=None):
    """Deterministic table of every tensor shape a full forward pass produces.

    Keys: rgb/l, depth/l, lg/l, rdw/l, rrw/l, de/l, cmw/k, dec/5|34|12,
    pred/t. Feature entries are (C, H, W); pred entries are (H, W).
    """
    ab = ablation or AblationSpec()
    res = config.input_resolution
    ch = config.block_channels
    dch = config.decoder_channels
    table = {}
    hw = [res // (2 ** (l - 1)) for l in range(1, 6)]
    for l in range(1, 6):
        table[f"rgb/{l}"] = (ch[l - 1], hw[l - 1], hw[l - 1])
        if ab.use_depth:
            table[f"depth/{l}"] = (ch[l - 1], hw[l - 1], hw[l - 1])
    for l in range(1, 6):
        bc = branch_channels(ch[l - 1])
        if ab.dw_active(l):
            n_branches = 4 if ab.dw_global_filters else 2
            table[f"lg/{l}"] = (n_branches * bc, hw[l - 1], hw[l - 1])
            tl = dw_target_level(l, ab.scale_mode)
            table[f"rdw/{l}"] = (ch[tl - 1], hw[tl - 1], hw[tl - 1])
        if ab.rw_active(l):
            table[f"rrw/{l}"] = (ch[l - 1], hw[l - 1], hw[l - 1])
        table[f"de/{l}"] = (ch[l - 1], hw[l - 1], hw[l - 1])
    table["cmw/1"] = (ch[0] + ch[1], hw[0], hw[0])
    table["cmw/2"] = (ch[2] + ch[3], hw[2], hw[2])
    table["dec/5"] = (dch[0], hw[4], hw[4])
    table["dec/34"] = (dch[1], hw[2], hw[2])
    table["dec/12"] = (dch[2], hw[0], hw[0])
    table["pred/1"] = (res, res)
    if ab.deep_supervision:
        table["pred/2"] = (hw[2], hw[2])
        table["pred/3"] = (hw[4], hw[4])
        table["pred/4"] = (hw[4], hw[4])
    return table


_CONFIG_SECTIONS = ("network", "ablation", "train")


def config_from_dict(raw):
    """Build (NetworkConfig, AblationSpec, train overrides) from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    unknown = set(raw) - set(_CONFIG_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")

    def build(cls, section):
        data = raw.get(section, {})
        names = {f.name for f in dataclasses.fields(cls)}
        bad = set(data) - names
        if bad:
            raise ConfigurationError(f"unknown keys in '{section}': {sorted(bad)}")
        return cls(**data)

    net = build(NetworkConfig, "network")
    ab = build(AblationSpec, "ablation")
    return net, ab, dict(raw.get("train", {}))


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(config, ablation, train=None):
    out = {"network": dataclasses.asdict(config), "ablation": dataclasses.asdict(ablation)}
    out["network"]["block_channels"] = list(config.block_channels)
    out["network"]["decoder_channels"] = list(config.decoder_channels)
    if train is not None:
        out["train"] = train if isinstance(train, dict) else dataclasses.asdict(train)
    return out
