"""Cross-modal weighting modules.

Two weighting mechanisms modulate the stream the decoder consumes
(RGB by default, depth when direction='ReD'):

* DW: response maps derived from the other stream through a multi-branch
  local/global filter stack, fused down/up to the paired block's
  resolution (cross-scale between adjacent blocks at levels 1-4, same
  scale at level 5).
* RW: self-derived response maps at the block's own scale.

Each weighted feature is a plain elementwise product, and both products
are summed back onto the original feature, so the enhanced feature equals
F + r_dw*F + r_rw*F. Levels 1&2 and 3&4 are then pairwise combined by a
2x transposed conv on the higher block plus channel concatenation; level
5's enhanced feature feeds the decoder directly.
"""

from dataclasses import dataclass

from . import autodiff as ad
from .core import AblationSpec, FeatureMap, ResponseMap, dw_target_level
from .errors import ConfigurationError, InputError
from .netops import as_tensor_params


def _t(x):
    if isinstance(x, ad.Tensor):
        return x
    if isinstance(x, (FeatureMap, ResponseMap)):
        return _t(x.data)
    return ad.as_tensor(x)


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise InputError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def enhance(feature, r1, r2):
    """F + r1*F + r2*F, the generic double-weighting principle."""
    f = _t(feature)
    t1, t2 = _t(r1), _t(r2)
    _same_shape(f, t1, "enhance(r1)")
    _same_shape(f, t2, "enhance(r2)")
    out = ad.add(ad.add(f, ad.mul(t1, f)), ad.mul(t2, f))
    block = feature.block_index if isinstance(feature, FeatureMap) else 0
    return FeatureMap(out, block, "fused")


def _branch_stack(x, params, prefix, with_global):
    names = ["loc1", "loc2"] + (["glo7", "glod"] if with_global else [])
    outs = [params.apply(f"{prefix}.{name}", x) for name in names]
    return ad.concat_channels(outs)


def local_global_features(f_d, params, ablation=None):
    """Multi-branch filter stack over a guide block's features (two 3x3
    local branches, plus 7x7 and rate-5 dilated global branches)."""
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    l = f_d.block_index
    lg = _branch_stack(_t(f_d), params, f"cmw.l{l}.dw", ab.dw_global_filters)
    return FeatureMap(lg, l, f_d.stream)


def depth_response(f_lg, l, params, ablation=None):
    """Fuse local/global features into a sigmoid response map sized for the
    paired block (downsampled for levels 1/3, upsampled for 2/4)."""
    if l not in (1, 2, 3, 4):
        raise ConfigurationError("depth_response handles levels 1-4; level 5 uses cmw_high")
    params = as_tensor_params(params)
    r = ad.sigmoid(params.apply(f"cmw.l{l}.dw.fuse", _t(f_lg)))
    return ResponseMap(r, "dw")


def depth_to_rgb(f_r_blocks, r_dw_maps, levels, scale_mode="cross_adjacent"):
    """Apply each level's paired response to its target block's features.

    The pairing is an involution: within (1,2) or (3,4) each block's
    response modulates the partner (itself for same_scale, two apart for
    cross_two). Returns {level: weighted FeatureMap}.
    """
    out = {}
    for l in levels:
        src = dw_target_level(l, scale_mode)  # involution: source of l's response
        if src not in r_dw_maps:
            raise InputError(f"missing response map for level {src} (target {l})")
        r, f = r_dw_maps[src], f_r_blocks[l]
        tr, tf = _t(r), _t(f)
        _same_shape(tf, tr, f"depth_to_rgb level {l} (response from {src})")
        out[l] = FeatureMap(ad.mul(tr, tf), l, "fused")
    return out


def rgb_response(f_r, params, ablation=None):
    """Self-weighting response map, same scale as the block itself."""
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    l = f_r.block_index
    stack = _branch_stack(_t(f_r), params, f"cmw.l{l}.rw", ab.rw_global_filters)
    r = ad.sigmoid(params.apply(f"cmw.l{l}.rw.fuse", stack))
    return ResponseMap(r, "rw")


def rgb_to_rgb(f_r, r_rw):
    tf, tr = _t(f_r), _t(r_rw)
    _same_shape(tf, tr, f"rgb_to_rgb level {f_r.block_index}")
    return FeatureMap(ad.mul(tr, tf), f_r.block_index, "fused")


def aggregate(f_r, f_dw=None, f_rw=None):
    """f_de = f_r + f_dw + f_rw; terms absent under ablations are exact zeros."""
    acc = _t(f_r)
    for term in (f_dw, f_rw):
        if term is not None:
            tt = _t(term)
            _same_shape(acc, tt, "aggregate")
            acc = ad.add(acc, tt)
    return FeatureMap(acc, f_r.block_index, "fused")


@dataclass
class CMWPairOutput:
    f_cmw: FeatureMap
    intermediates: dict = None


def cmw_pair(f_de_low, f_de_high, k, params):
    """Combine a level pair: 2x-deconvolve the high block onto the low
    block's grid and concatenate channels."""
    if k not in (1, 2):
        raise ConfigurationError(f"pair index must be 1 or 2, got {k}")
    params = as_tensor_params(params)
    low, high = _t(f_de_low), _t(f_de_high)
    up = params.apply(f"cmw.k{k}.combine", high)
    if up.shape[1:] != low.shape[1:]:
        raise InputError(
            f"pair {k}: upsampled high block {up.shape} does not match low block {low.shape}")
    f_cmw = ad.concat_channels([low, up])
    return CMWPairOutput(FeatureMap(f_cmw, 2 * k - 1, "fused"))


def _wei_fuse(modulated, guide, l, params):
    cat = ad.concat_channels([_t(modulated), _t(guide)])
    return FeatureMap(params.apply(f"cmw.l{l}.wei_fuse", cat), l, "fused")


def cmw_high(f_r5, f_d5, params, ablation=None, collect=None):
    """Level-5 module: same-scale DW plus RW, aggregated like the others.

    With use_cmw_h off the block-5 feature passes through unweighted; with
    use_weighting off the two streams are concatenated and fused by 1x1 conv.
    `collect`, when given, receives the lg/rdw/rrw intermediates.
    """
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    if not ab.use_cmw_h:
        return FeatureMap(_t(f_r5), 5, f_r5.stream if isinstance(f_r5, FeatureMap) else "fused")
    if ab.wei_fuse_active(5):
        return _wei_fuse(f_r5, f_d5, 5, params)
    f_dw = None
    if ab.dw_active(5):
        lg = local_global_features(f_d5, params, ab)
        r = ResponseMap(ad.sigmoid(params.apply("cmw.l5.dw.fuse", _t(lg))), "dw")
        tf = _t(f_r5)
        _same_shape(tf, _t(r), "cmw_high dw")
        f_dw = FeatureMap(ad.mul(_t(r), tf), 5, "fused")
        if collect is not None:
            collect["lg/5"] = lg
            collect["rdw/5"] = r
    f_rw = None
    if ab.rw_active(5):
        r_rw = rgb_response(f_r5, params, ab)
        f_rw = rgb_to_rgb(f_r5, r_rw)
        if collect is not None:
            collect["rrw/5"] = r_rw
    return aggregate(f_r5, f_dw, f_rw)


def cmw_forward(modulated, guide, params, ablation=None, keep_intermediates=False):
    """Run all three weighting modules over the encoder blocks.

    modulated: {1..5: FeatureMap} of the stream the decoder consumes;
    guide: the other stream's blocks, or None without depth.
    Returns (f_cmw1, f_cmw2, f_de5, intermediates).
    """
    ab = ablation or AblationSpec()
    params = as_tensor_params(params)
    inter = {}
    de = {}

    r_dw = {}
    for l in (1, 2, 3, 4):
        if ab.dw_active(l):
            lg = local_global_features(guide[l], params, ab)
            r_dw[l] = depth_response(lg, l, params, ab)
            if keep_intermediates:
                inter[f"lg/{l}"] = lg
                inter[f"rdw/{l}"] = r_dw[l]

    f_dw = {}
    if r_dw:
        f_dw = depth_to_rgb(modulated, r_dw, (1, 2, 3, 4), ab.scale_mode)

    for l in (1, 2, 3, 4):
        if ab.wei_fuse_active(l):
            de[l] = _wei_fuse(modulated[l], guide[l], l, params)
        elif ab.use_weighting and ab.use_cmw_lm:
            f_rw = None
            if ab.rw_active(l):
                r_rw = rgb_response(modulated[l], params, ab)
                f_rw = rgb_to_rgb(modulated[l], r_rw)
                if keep_intermediates:
                    inter[f"rrw/{l}"] = r_rw
            de[l] = aggregate(modulated[l], f_dw.get(l), f_rw)
        else:
            de[l] = FeatureMap(_t(modulated[l]), l, modulated[l].stream)
        if keep_intermediates:
            inter[f"de/{l}"] = de[l]

    f_cmw1 = cmw_pair(de[1], de[2], 1, params).f_cmw
    f_cmw2 = cmw_pair(de[3], de[4], 2, params).f_cmw
    f_de5 = cmw_high(modulated[5], guide[5] if guide else None, params, ab,
                     collect=inter if keep_intermediates else None)
    if keep_intermediates:
        inter["de/5"] = f_de5
        inter["cmw/1"] = f_cmw1
        inter["cmw/2"] = f_cmw2
    return f_cmw1, f_cmw2, f_de5, (inter if keep_intermediates else None)
