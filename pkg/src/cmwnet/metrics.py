"""Saliency evaluation metrics.

Scalar metrics (MAE, max F, weighted F, S-measure, max E) plus the 256-point
PR and F curves. Threshold metrics binarize at S >= t/255 for t in 0..255.
Conventions that affect reproducibility are pinned here:

* precision is defined as 1 when nothing is predicted positive;
* the weighted-F error propagation uses a 7x7 Gaussian (sigma 5) and the
  pixel-importance decay exp(ln(0.5)/5 * d); nearest-foreground ties break
  to the first foreground pixel in row-major order;
* the enhanced-alignment score is averaged over all pixels (a plain mean);
* S-measure centroids round half up (1-based grid), empty quadrants carry
  zero weight, and degenerate all-fg/all-bg ground truth falls back to the
  mean-based score.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DataError, EmptyForegroundError, InputError

EPS = float(np.finfo(np.float64).eps)
N_THRESHOLDS = 256

if backend.have_numba():
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _nearest_fg_scan(bg_coords, fg_coords):
        n = bg_coords.shape[0]
        m = fg_coords.shape[0]
        d2 = np.empty(n, dtype=np.int64)
        idx = np.empty(n, dtype=np.int64)
        for b in prange(n):
            by, bx = bg_coords[b, 0], bg_coords[b, 1]
            best = np.int64(2 ** 62)
            arg = np.int64(0)
            for f in range(m):
                dy = by - fg_coords[f, 0]
                dx = bx - fg_coords[f, 1]
                d = dy * dy + dx * dx
                if d < best:  # strict: first fg pixel in row-major order wins
                    best = d
                    arg = f
            d2[b] = best
            idx[b] = arg
        return d2, idx
else:  # pragma: no cover
    _nearest_fg_scan = None


def _nearest_fg_numpy(bg_coords, fg_coords):
    n, m = bg_coords.shape[0], fg_coords.shape[0]
    d2 = np.empty(n, dtype=np.int64)
    idx = np.empty(n, dtype=np.int64)
    step = max(1, 4_000_000 // max(m, 1))
    for s in range(0, n, step):
        e = min(s + step, n)
        dy = bg_coords[s:e, 0:1] - fg_coords[None, :, 0]
        dx = bg_coords[s:e, 1:2] - fg_coords[None, :, 1]
        dist = dy * dy + dx * dx
        a = dist.argmin(axis=1)  # first minimum: row-major fg order
        idx[s:e] = a
        d2[s:e] = dist[np.arange(e - s), a]
    return d2, idx


def _nearest_foreground(fg):
    """Per-background-pixel squared distance to, and flat index of, the
    nearest foreground pixel (row-major tie-break)."""
    h, w = fg.shape
    fg_coords = np.argwhere(fg).astype(np.int64)
    bg_coords = np.argwhere(~fg).astype(np.int64)
    if backend.active_backend() == "numba" and _nearest_fg_scan is not None:
        d2, idx = _nearest_fg_scan(bg_coords, fg_coords)
    else:
        d2, idx = _nearest_fg_numpy(bg_coords, fg_coords)
    dist = np.zeros((h, w), dtype=np.float64)
    nearest = np.arange(h * w, dtype=np.int64).reshape(h, w)
    bg_flat = bg_coords[:, 0] * w + bg_coords[:, 1]
    fg_flat = fg_coords[:, 0] * w + fg_coords[:, 1]
    dist.flat[bg_flat] = np.sqrt(d2.astype(np.float64))
    nearest.flat[bg_flat] = fg_flat[idx]
    return dist, nearest


def _check_pair(s, g):
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g)
    if s.ndim == 3 and s.shape[0] == 1:
        s = s[0]
    if g.ndim == 3 and g.shape[0] == 1:
        g = g[0]
    if s.shape != g.shape or s.ndim != 2:
        raise InputError(f"prediction {s.shape} and ground truth {g.shape} must be 2-D and equal")
    if s.min() < 0.0 or s.max() > 1.0:
        raise InputError("saliency values must lie in [0, 1]")
    vals = np.unique(g)
    if not np.all(np.isin(vals, (0, 1))):
        raise InputError("ground truth must be binary")
    return s, g.astype(bool)


def mae(s, g):
    s, gb = _check_pair(s, g)
    return float(np.abs(s - gb.astype(np.float64)).mean())


def pr_curve(s, g):
    """(precision[256], recall[256]) for thresholds t/255, t = 0..255."""
    s, gb = _check_pair(s, g)
    n_fg = int(gb.sum())
    if n_fg == 0:
        raise EmptyForegroundError("ground truth has no foreground pixels")
    sf = s.reshape(-1)
    gf = gb.reshape(-1)
    precision = np.empty(N_THRESHOLDS, dtype=np.float64)
    recall = np.empty(N_THRESHOLDS, dtype=np.float64)
    for t in range(N_THRESHOLDS):
        pos = sf >= t / 255.0
        tp = int(np.count_nonzero(pos & gf))
        npos = int(np.count_nonzero(pos))
        precision[t] = tp / npos if npos > 0 else 1.0
        recall[t] = tp / n_fg
    return precision, recall


def f_curve(precision, recall, beta2=0.3):
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    denom = beta2 * p + r
    out = np.zeros_like(p)
    nz = denom > 0
    out[nz] = (1.0 + beta2) * p[nz] * r[nz] / denom[nz]
    return out


def max_f(precision, recall, beta2=0.3):
    return float(f_curve(precision, recall, beta2).max())


_GAUSS7 = None


def _gauss_kernel7(sigma=5.0):
    global _GAUSS7
    if _GAUSS7 is None:
        ax = np.arange(7, dtype=np.float64) - 3.0
        k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
        _GAUSS7 = k / k.sum()
    return _GAUSS7


def _correlate_same_zero(img, kernel):
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)))
    out = np.zeros_like(img)
    h, w = img.shape
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def weighted_f(s, g, beta2=1.0):
    """Dependency-weighted F-score: errors on background count at their
    nearest foreground pixel, smoothed by a Gaussian, and discounted with
    distance from the object."""
    s, gb = _check_pair(s, g)
    n_fg = int(gb.sum())
    if n_fg == 0:
        raise EmptyForegroundError("ground truth has no foreground pixels")
    gd = gb.astype(np.float64)
    err = np.abs(s - gd)
    dist, nearest = _nearest_foreground(gb)
    et = err.copy()
    bg = ~gb
    et[bg] = err.reshape(-1)[nearest[bg]]
    ea = _correlate_same_zero(et, _gauss_kernel7())
    min_e_ea = err.copy()
    adoption = gb & (ea < err)
    min_e_ea[adoption] = ea[adoption]
    b = np.ones_like(err)
    b[bg] = 2.0 - np.exp(np.log(0.5) / 5.0 * dist[bg])
    ew = min_e_ea * b
    tpw = n_fg - ew[gb].sum()
    fpw = ew[bg].sum()
    r = 1.0 - ew[gb].mean()
    p = tpw / (EPS + tpw + fpw)
    return float((1.0 + beta2) * r * p / (EPS + r + beta2 * p))


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def _region_ssim(p, gq):
    n = p.size
    if n == 0:
        return 0.0  # paired with zero area weight
    x = p.mean()
    y = gq.mean()
    sx = ((p - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((gq - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((p - x) * (gq - y)).sum() / (n - 1 + EPS)
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0.0:
        return float(alpha / (beta + EPS))
    if beta == 0.0:
        return 1.0
    return 0.0


def _object_score(values):
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return float(2.0 * x / (x * x + 1.0 + sigma + EPS))


def _s_object(s, gb):
    mu = gb.mean()
    o_fg = _object_score(s[gb])
    o_bg = _object_score((1.0 - s)[~gb])
    return mu * o_fg + (1.0 - mu) * o_bg


def _s_region(s, gb):
    rows, cols = gb.shape
    gd = gb.astype(np.float64)
    total = gd.sum()
    # centroid on the 1-based grid, rounded half up
    xc = _round_half_up((gd.sum(axis=0) * np.arange(1, cols + 1)).sum() / total)
    yc = _round_half_up((gd.sum(axis=1) * np.arange(1, rows + 1)).sum() / total)
    area = rows * cols
    w1 = (xc * yc) / area
    w2 = ((cols - xc) * yc) / area
    w3 = (xc * (rows - yc)) / area
    w4 = 1.0 - w1 - w2 - w3
    quads = (
        (s[:yc, :xc], gd[:yc, :xc], w1),
        (s[:yc, xc:], gd[:yc, xc:], w2),
        (s[yc:, :xc], gd[yc:, :xc], w3),
        (s[yc:, xc:], gd[yc:, xc:], w4),
    )
    return sum(w * _region_ssim(p, gq) for p, gq, w in quads)


def s_measure(s, g, lam=0.5):
    """Structure similarity: lam * object score + (1-lam) * region score."""
    s, gb = _check_pair(s, g)
    mu = gb.mean()
    if mu == 0.0:  # degenerate: score the amount of predicted background
        return float(1.0 - s.mean())
    if mu == 1.0:
        return float(s.mean())
    q = lam * _s_object(s, gb) + (1.0 - lam) * _s_region(s, gb)
    return float(max(q, 0.0))


def e_score(fm, gb):
    """Enhanced-alignment score of one binarized map."""
    fd = fm.astype(np.float64)
    gd = gb.astype(np.float64)
    if gd.sum() == 0.0:
        enhanced = 1.0 - fd
    elif gd.sum() == gd.size:
        enhanced = fd
    else:
        df = fd - fd.mean()
        dg = gd - gd.mean()
        align = 2.0 * dg * df / (dg * dg + df * df + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def max_e(s, g):
    s, gb = _check_pair(s, g)
    best = 0.0
    for t in range(N_THRESHOLDS):
        best = max(best, e_score(s >= t / 255.0, gb))
    return float(best)


@dataclass
class MetricReport:
    s_measure: float
    max_f: float
    weighted_f: float
    max_e: float
    mae: float
    pr_curve: np.ndarray  # (256, 2) precision, recall
    f_curve: np.ndarray   # (256,)

    def to_dict(self):
        return {
            "Smeasure": self.s_measure,
            "maxF": self.max_f,
            "weightedF": self.weighted_f,
            "maxE": self.max_e,
            "MAE": self.mae,
        }


def compute_report(s, g):
    """All metrics for one prediction/ground-truth pair."""
    p, r = pr_curve(s, g)
    fc = f_curve(p, r)
    return MetricReport(
        s_measure=s_measure(s, g),
        max_f=float(fc.max()),
        weighted_f=weighted_f(s, g),
        max_e=max_e(s, g),
        mae=mae(s, g),
        pr_curve=np.stack([p, r], axis=1),
        f_curve=fc,
    )


def aggregate_reports(reports):
    """Per-dataset averages: scalars averaged, curves averaged pointwise."""
    if not reports:
        raise DataError("no image pairs to aggregate")
    return MetricReport(
        s_measure=float(np.mean([r.s_measure for r in reports])),
        max_f=float(np.mean([r.max_f for r in reports])),
        weighted_f=float(np.mean([r.weighted_f for r in reports])),
        max_e=float(np.mean([r.max_e for r in reports])),
        mae=float(np.mean([r.mae for r in reports])),
        pr_curve=np.mean([r.pr_curve for r in reports], axis=0),
        f_curve=np.mean([r.f_curve for r in reports], axis=0),
    )


def _read_gray01(path):
    from PIL import Image

    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc
    return arr / 255.0


def evaluate_dataset(pred_dir, gt_dir, skip_missing=False):
    """Evaluate every matching prediction/GT file pair (8-bit grayscale).

    Returns (dataset MetricReport, per-image rows sorted by filename).
    Unmatched filenames abort with DataError unless skip_missing.
    """
    from pathlib import Path

    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    preds = {p.name: p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in exts}
    gts = {p.name: p for p in sorted(gt_dir.iterdir()) if p.suffix.lower() in exts}
    common = sorted(set(preds) & set(gts))
    unmatched = sorted(set(preds) ^ set(gts))
    if unmatched and not skip_missing:
        raise DataError(f"unmatched prediction/GT files: {unmatched}")
    if not common:
        raise DataError(f"no matching image pairs between {pred_dir} and {gt_dir}")
    reports, rows = [], []
    for name in common:
        s = _read_gray01(preds[name])
        g = _read_gray01(gts[name]) >= (128.0 / 255.0)
        if s.shape != g.shape:
            raise DataError(f"{name}: prediction {s.shape} vs GT {g.shape}")
        if not g.any():
            raise EmptyForegroundError(f"{name}: ground truth has no foreground")
        rep = compute_report(s, g.astype(np.uint8))
        reports.append(rep)
        rows.append({"image": name, **rep.to_dict()})
    return aggregate_reports(reports), rows


def write_report(report, rows, out_dir):
    """report.json (dataset scalars), curves.csv (256 rows), per_image.csv."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "curves.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["threshold", "precision", "recall", "f"])
        for t in range(N_THRESHOLDS):
            wr.writerow([t, repr(report.pr_curve[t, 0]), repr(report.pr_curve[t, 1]),
                         repr(report.f_curve[t])])
    if rows:
        with open(out / "per_image.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            wr.writeheader()
            wr.writerows(rows)
    return out / "report.json"
