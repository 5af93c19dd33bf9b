"""Dataset ingestion, resizing/augmentation, and a synthetic RGB-D generator.

Dataset layout on disk: root/{RGB,depth,GT}/<id>.png. RGB loads to [0,1],
depth is min-max normalized per image (constant depth maps collapse to
zeros; optional inversion per manifest), GT binarizes at 128/255.

The synthetic generator draws 1-3 convex shapes per image that are both
brighter in RGB and strictly nearer (larger) in depth than the background,
so depth carries learnable saliency signal at desk scale.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import RGBDTriplet
from .errors import ConfigurationError, DataError, InputError


def save_image(path, arr):
    """uint8 PNG from float [0,1]; (3,H,W) -> RGB, (H,W)/(1,H,W) -> grayscale."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    data = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 3:
        img = Image.fromarray(data.transpose(1, 2, 0), mode="RGB")
    else:
        img = Image.fromarray(data, mode="L")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def _read(path, mode):
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(mode), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc


def read_rgb01(path):
    return _read(path, "RGB").transpose(2, 0, 1)


def read_gray01(path):
    return _read(path, "L")


def normalize_depth(depth, invert=False):
    """Per-image min-max normalization; a constant map becomes all zeros."""
    d = np.asarray(depth, dtype=np.float64)
    lo, hi = d.min(), d.max()
    d = np.zeros_like(d) if hi <= lo else (d - lo) / (hi - lo)
    return 1.0 - d if invert else d


@dataclass
class DatasetManifest:
    root: Path
    items: list
    invert_depth: bool = False

    @staticmethod
    def from_dir(root, invert_depth=None):
        """Scan root/{RGB,depth,GT}; an optional manifest.json may pin
        invert_depth and the item list."""
        root = Path(root)
        override = {}
        mpath = root / "manifest.json"
        if mpath.exists():
            with open(mpath, "r", encoding="utf-8") as fh:
                override = json.load(fh)
            unknown = set(override) - {"invert_depth", "items"}
            if unknown:
                raise ConfigurationError(f"unknown manifest keys: {sorted(unknown)}")
        for sub in ("RGB", "depth", "GT"):
            if not (root / sub).is_dir():
                raise DataError(f"dataset {root} lacks subdirectory {sub}/")
        ids = override.get("items")
        if ids is None:
            ids = sorted(p.stem for p in (root / "RGB").glob("*.png"))
        if not ids:
            raise DataError(f"no items found under {root}/RGB")
        missing = [f"{sub}/{i}.png" for sub in ("RGB", "depth", "GT")
                   for i in ids if not (root / sub / f"{i}.png").exists()]
        if missing:
            raise DataError(f"dataset {root} is missing files: {missing}")
        if invert_depth is None:
            invert_depth = bool(override.get("invert_depth", False))
        return DatasetManifest(root, list(ids), invert_depth)

    def load(self, item):
        rgb = read_rgb01(self.root / "RGB" / f"{item}.png")
        depth = normalize_depth(read_gray01(self.root / "depth" / f"{item}.png"),
                                self.invert_depth)[None]
        gt = (read_gray01(self.root / "GT" / f"{item}.png") >= 128.0 / 255.0)
        gt = gt.astype(np.float64)[None]
        t = RGBDTriplet(rgb, depth, gt, id=item)
        if rgb.shape[1:] != depth.shape[1:] or rgb.shape[1:] != gt.shape[1:]:
            raise DataError(f"{item}: RGB/depth/GT sizes differ")
        return t.validate()

    def __iter__(self):
        for item in self.items:
            yield self.load(item)

    def __len__(self):
        return len(self.items)


def load(manifest):
    """Stream the manifest's triplets (normalized, validated)."""
    yield from manifest


def nearest_resize(arr, out_h, out_w):
    """Nearest-neighbor with the sampling grid anchored at index 0
    (src = floor(i * in/out)); binary inputs stay binary."""
    a = np.asarray(arr)
    h, w = a.shape[-2:]
    ys = (np.arange(out_h) * h) // out_h
    xs = (np.arange(out_w) * w) // out_w
    return a[..., ys[:, None], xs[None, :]]


def bilinear_resize(arr, out_h, out_w):
    """Half-pixel-center bilinear resize with edge clamping."""
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape[-2:]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    top = a[..., y0c[:, None], x0c[None, :]] * (1 - wx) + a[..., y0c[:, None], x1c[None, :]] * wx
    bot = a[..., y1c[:, None], x0c[None, :]] * (1 - wx) + a[..., y1c[:, None], x1c[None, :]] * wx
    return top * (1 - wy) + bot * wy


def resize_triplet(t, size=288):
    """Resize to size x size: bilinear for RGB/depth, nearest for GT."""
    if size % 16 != 0:
        raise ConfigurationError(f"target size must be divisible by 16, got {size}")
    return RGBDTriplet(
        rgb=bilinear_resize(t.rgb, size, size),
        depth=bilinear_resize(t.depth, size, size),
        gt=nearest_resize(t.gt, size, size).astype(np.float64),
        id=t.id,
    )


def augment(t):
    """{original, rot90, rot180, rot270, horizontal mirror}, all three
    tensors transformed identically. Requires a square triplet."""
    h, w = t.rgb.shape[1:]
    if h != w:
        raise InputError(f"augmentation requires square triplets, got {h}x{w}")

    def rot(a, k):
        return np.ascontiguousarray(np.rot90(a, k, axes=(1, 2)))

    def mirror(a):
        return np.ascontiguousarray(a[:, :, ::-1])

    out = [RGBDTriplet(t.rgb.copy(), t.depth.copy(), t.gt.copy(), t.id)]
    for k, tag in ((1, "rot90"), (2, "rot180"), (3, "rot270")):
        out.append(RGBDTriplet(rot(t.rgb, k), rot(t.depth, k), rot(t.gt, k),
                               f"{t.id}_{tag}"))
    out.append(RGBDTriplet(mirror(t.rgb), mirror(t.depth), mirror(t.gt),
                           f"{t.id}_mirror"))
    return out


@dataclass
class SynthSpec:
    seed: int = 0
    count: int = 8
    resolution: int = 64
    shapes_min: int = 1
    shapes_max: int = 3
    contrast_min: float = 0.35
    contrast_max: float = 0.6

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if self.resolution % 16 != 0:
            raise ConfigurationError(
                f"resolution must be divisible by 16, got {self.resolution}")
        if not (1 <= self.shapes_min <= self.shapes_max):
            raise ConfigurationError("need 1 <= shapes_min <= shapes_max")
        if not (0.0 < self.contrast_min <= self.contrast_max <= 0.7):
            raise ConfigurationError("need 0 < contrast_min <= contrast_max <= 0.7")


def _smooth_field(rng, res, lo, hi):
    corners = rng.uniform(lo, hi, size=(2, 2))
    return bilinear_resize(corners[None], res, res)[0]


def _ellipse_mask(rng, res):
    yy, xx = np.mgrid[0:res, 0:res]
    cy, cx = rng.uniform(0.25 * res, 0.75 * res, size=2)
    ry = rng.uniform(0.08 * res, 0.28 * res)
    rx = rng.uniform(0.08 * res, 0.28 * res)
    theta = rng.uniform(0, math.pi)
    ct, st = math.cos(theta), math.sin(theta)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _box_mask(rng, res):
    yy, xx = np.mgrid[0:res, 0:res]
    cy, cx = rng.uniform(0.25 * res, 0.75 * res, size=2)
    hy = rng.uniform(0.06 * res, 0.22 * res)
    hx = rng.uniform(0.06 * res, 0.22 * res)
    theta = rng.uniform(0, math.pi)
    ct, st = math.cos(theta), math.sin(theta)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    return (np.abs(u) <= hx) & (np.abs(v) <= hy)


def _one_sample(rng, spec, idx):
    res = spec.resolution
    for _ in range(20):
        n_shapes = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
        mask = np.zeros((res, res), dtype=bool)
        rgb = np.stack([_smooth_field(rng, res, 0.02, 0.35) for _ in range(3)])
        rgb += rng.uniform(-0.02, 0.02, size=rgb.shape)
        rgb = np.clip(rgb, 0.0, 0.4)
        for _ in range(n_shapes):
            shape = _ellipse_mask(rng, res) if rng.random() < 0.5 else _box_mask(rng, res)
            mask |= shape
            color = rng.uniform(0.6, 1.0, size=3)
            rgb[:, shape] = color[:, None]
        frac = mask.mean()
        if 0.0 < frac < 0.9:
            break
    else:
        raise DataError("synthetic generator failed to produce a usable mask")
    depth = _smooth_field(rng, res, 0.05, 0.25)
    contrast = rng.uniform(spec.contrast_min, spec.contrast_max)
    # foreground sits strictly above the background band by >= contrast
    depth[mask] = 0.25 + contrast + rng.uniform(0.0, 0.04, size=int(mask.sum()))
    return RGBDTriplet(rgb, depth[None].copy(), mask.astype(np.float64)[None],
                       id=f"synth_{idx:04d}").validate()


def synth_generate(spec):
    """Seed-deterministic list of synthetic triplets."""
    return [_one_sample(np.random.default_rng(np.random.SeedSequence((spec.seed, i))),
                        spec, i)
            for i in range(spec.count)]


def write_dataset(root, triplets):
    """Write triplets in the standard root/{RGB,depth,GT}/<id>.png layout."""
    root = Path(root)
    for t in triplets:
        save_image(root / "RGB" / f"{t.id}.png", t.rgb)
        save_image(root / "depth" / f"{t.id}.png", t.depth)
        save_image(root / "GT" / f"{t.id}.png", t.gt)
    return root
