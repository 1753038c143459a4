"""Saliency evaluation measures.

Every per-image function takes ``pred`` (float map in [0, 1]) and ``gt``
(binary map of the same shape) as numpy arrays and returns a float.

Conventions worth knowing:

* adaptive binarisation keeps pixels with ``pred >= min(2 * mean(pred), 1)``
  and ``pred > 0`` (a zero-saliency pixel is never foreground);
* the PR sweep keeps pixels with ``pred > t`` for t in {0, 1/255, ..., 1};
* F/S/E are undefined-by-protocol on empty ground truth and are skipped in
  dataset aggregates (MAE still counts those images).
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ShapeError

EPS = np.finfo(np.float64).eps
BETA2_MEAN_F = 0.3
BETA2_WEIGHTED_F = 1.0
S_ALPHA = 0.5
N_THRESHOLDS = 256
PR_THRESHOLDS = np.arange(N_THRESHOLDS) / 255.0


def _prepare(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred, gt > 0.5


def mae(pred, gt):
    pred, gt = _prepare(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def adaptive_threshold(pred):
    return min(2.0 * float(np.mean(pred)), 1.0)


def adaptive_binarize(pred):
    pred = np.asarray(pred, dtype=np.float64)
    return (pred >= adaptive_threshold(pred)) & (pred > 0)


def mean_f_measure(pred, gt, beta2=BETA2_MEAN_F):
    """Adaptive-threshold F-measure; NaN when gt is empty."""
    pred, gt = _prepare(pred, gt)
    if not gt.any():
        return math.nan
    binary = adaptive_binarize(pred)
    tp = np.count_nonzero(binary & gt)
    if tp == 0:
        return 0.0
    precision = tp / np.count_nonzero(binary)
    recall = tp / np.count_nonzero(gt)
    return float((1 + beta2) * precision * recall / (beta2 * precision + recall))


def gaussian_kernel(size=7, sigma=5.0):
    r = np.arange(size) - (size - 1) / 2
    k = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def nearest_foreground(gt):
    """Euclidean distance to, and flat index of, the nearest foreground pixel.

    Ties are broken toward the smallest row-major index so the result does not
    depend on the search structure.
    """
    h, w = gt.shape
    fg = np.flatnonzero(gt)
    dist = ndimage.distance_transform_edt(~gt)
    idx = np.arange(h * w)
    bg = np.flatnonzero(~gt)
    if bg.size == 0:
        return dist, idx
    fg_rc = np.column_stack(np.unravel_index(fg, gt.shape))
    bg_rc = np.column_stack(np.unravel_index(bg, gt.shape))
    tree = cKDTree(fg_rc)
    k = min(16, fg.size)
    while True:
        d, j = tree.query(bg_rc, k=k)
        d = np.asarray(d).reshape(len(bg), -1)
        j = np.asarray(j).reshape(len(bg), -1)
        best = d[:, :1]
        tied = np.abs(d - best) <= 1e-9
        # all k neighbours tied -> there may be more; widen the search
        if k < fg.size and tied[:, -1].any():
            k = min(fg.size, 4 * k)
            continue
        cand = np.where(tied, fg[j], np.iinfo(np.int64).max)
        idx[bg] = cand.min(axis=1)
        return dist, idx


def weighted_f_measure(pred, gt, beta2=BETA2_WEIGHTED_F):
    """Dependency/importance weighted F-measure; NaN when gt is empty."""
    pred, gt = _prepare(pred, gt)
    if not gt.any():
        return math.nan
    g = gt.astype(np.float64)
    err = np.abs(pred - g)
    dist, nearest = nearest_foreground(gt)
    # background errors take the error of their nearest foreground pixel
    err_t = err.ravel()[nearest].reshape(err.shape)
    err_a = ndimage.correlate(err_t, gaussian_kernel(), mode="constant", cval=0.0)
    min_e = np.where(gt & (err_a < err), err_a, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    ew = min_e * importance
    tp_w = g.sum() - ew[gt].sum()
    fp_w = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tp_w / (EPS + tp_w + fp_w)
    return float((1 + beta2) * recall * precision / (EPS + recall + beta2 * precision))


def _object_score(values):
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def _s_object(pred, gt):
    u = gt.mean()
    fg = _object_score(pred[gt])
    bg = _object_score(1.0 - pred[~gt])
    return u * fg + (1 - u) * bg


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def gt_centroid(gt):
    """1-based (column, row) centroid, rounded half away from zero."""
    h, w = gt.shape
    total = gt.sum()
    if total == 0:
        return _round_half_up(w / 2), _round_half_up(h / 2)
    rows, cols = np.nonzero(gt)
    return _round_half_up((cols + 1).sum() / total), _round_half_up((rows + 1).sum() / total)


def _block_ssim(x, y):
    n = x.size
    mx, my = x.mean(), y.mean()
    vx = ((x - mx) ** 2).sum() / (n - 1 + EPS)
    vy = ((y - my) ** 2).sum() / (n - 1 + EPS)
    cxy = ((x - mx) * (y - my)).sum() / (n - 1 + EPS)
    a = 4 * mx * my * cxy
    b = (mx ** 2 + my ** 2) * (vx + vy)
    if a != 0:
        return a / (b + EPS)
    return 1.0 if b == 0 else 0.0


def _s_region(pred, gt):
    h, w = gt.shape
    cx, cy = gt_centroid(gt)
    g = gt.astype(np.float64)
    area = h * w
    blocks = [
        (slice(0, cy), slice(0, cx), cx * cy),
        (slice(0, cy), slice(cx, w), (w - cx) * cy),
        (slice(cy, h), slice(0, cx), cx * (h - cy)),
        (slice(cy, h), slice(cx, w), (w - cx) * (h - cy)),
    ]
    score = 0.0
    for rs, cs, n in blocks:
        if n == 0:
            continue
        score += n / area * _block_ssim(pred[rs, cs], g[rs, cs])
    return score


def s_measure(pred, gt, alpha=S_ALPHA):
    """Structure measure: object-aware + region-aware similarity."""
    pred, gt = _prepare(pred, gt)
    y = gt.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    return float(max(0.0, alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)))


def e_measure(pred, gt, binarize=True):
    """Enhanced-alignment measure, mean over pixels.

    ``binarize=True`` (default) scores the adaptive-threshold binary map;
    ``False`` uses the continuous prediction.
    """
    pred, gt = _prepare(pred, gt)
    fm = adaptive_binarize(pred).astype(np.float64) if binarize else pred
    if not gt.any():
        enhanced = 1.0 - fm
    elif gt.all():
        enhanced = fm
    else:
        g = gt.astype(np.float64)
        d_fm = fm - fm.mean()
        d_gt = g - g.mean()
        align = 2.0 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def pr_counts(pred, gt):
    """(tp, predicted-positive) counts at each of the 256 thresholds, plus #positives."""
    pred, gt = _prepare(pred, gt)
    fg = np.sort(pred[gt])
    bg = np.sort(pred[~gt])
    tp = fg.size - np.searchsorted(fg, PR_THRESHOLDS, side="right")
    fp = bg.size - np.searchsorted(bg, PR_THRESHOLDS, side="right")
    return tp, tp + fp, fg.size


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def pr_curve_single(pred, gt):
    tp, pp, npos = pr_counts(pred, gt)
    return _safe_div(tp, pp), _safe_div(tp, np.full_like(tp, npos))


def pr_curve(preds, gts, pooled=False):
    """256 x 2 array of (precision, recall), averaged over images with non-empty gt.

    ``pooled=True`` accumulates counts over the whole set instead.
    """
    if len(preds) == 0 or len(preds) != len(gts):
        raise ValueError("pr_curve needs equal-length, non-empty prediction/gt lists")
    tp_sum = np.zeros(N_THRESHOLDS)
    pp_sum = np.zeros(N_THRESHOLDS)
    npos_sum = 0
    curves = []
    for pred, gt in zip(preds, gts):
        tp, pp, npos = pr_counts(pred, gt)
        if npos == 0:
            continue
        if pooled:
            tp_sum += tp
            pp_sum += pp
            npos_sum += npos
        else:
            curves.append(np.column_stack([_safe_div(tp, pp), tp / npos]))
    if pooled:
        return np.column_stack([_safe_div(tp_sum, pp_sum), tp_sum / max(npos_sum, 1)])
    if not curves:
        return np.zeros((N_THRESHOLDS, 2))
    return np.mean(curves, axis=0)


# -- dataset aggregation -------------------------------------------------------

SCALAR_KEYS = ("mae", "f_beta", "f_beta_w", "s_measure", "e_measure")


@dataclass
class MetricReport:
    mae: float
    f_beta: float
    f_beta_w: float
    s_measure: float
    e_measure: float
    pr_curve: np.ndarray = field(repr=False)
    n_samples: int = 0
    n_skipped: int = 0

    def scalars(self):
        return {k: getattr(self, k) for k in SCALAR_KEYS}

    def write(self, out_dir, stem="metrics"):
        """Write <stem>.txt (key = value), <stem>.csv and <stem>_pr.csv into out_dir."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pr_path = out / f"{stem}_pr.csv"
        write_pr_csv(self.pr_curve, pr_path)
        items = dict(self.scalars(), n_samples=self.n_samples, n_skipped=self.n_skipped)
        lines = [f"{k} = {v!r}" for k, v in items.items()] + [f"pr_curve = {pr_path.name}"]
        (out / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(items))
            writer.writerow([repr(v) for v in items.values()])
        return out / f"{stem}.txt"

    @classmethod
    def read(cls, path):
        path = Path(path)
        values = {}
        for line in path.read_text().splitlines():
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                values[k] = v
        curve = read_pr_csv(path.parent / values.pop("pr_curve"))
        return cls(
            **{k: float(values[k]) for k in SCALAR_KEYS},
            pr_curve=curve,
            n_samples=int(values.get("n_samples", 0)),
            n_skipped=int(values.get("n_skipped", 0)),
        )


def write_pr_csv(curve, path):
    curve = np.asarray(curve)
    if curve.size == 0:
        raise ValueError("empty PR curve")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for t, (p, r) in zip(PR_THRESHOLDS, curve):
            writer.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


def read_pr_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["precision"]), float(r["recall"])] for r in rows])


class MetricAccumulator:
    """Collects per-image scores; ``report()`` reduces them to a MetricReport."""

    def __init__(self, e_binarize=True, pooled_pr=False):
        self.e_binarize = e_binarize
        self.pooled_pr = pooled_pr
        self.rows = []
        self.preds, self.gts = [], []

    def add(self, pred, gt, name=""):
        pred, gt = _prepare(pred, gt)
        row = {"id": name, "mae": mae(pred, gt)}
        if gt.any():
            row.update(
                f_beta=mean_f_measure(pred, gt),
                f_beta_w=weighted_f_measure(pred, gt),
                s_measure=s_measure(pred, gt),
                e_measure=e_measure(pred, gt, self.e_binarize),
            )
        else:
            row.update(f_beta=math.nan, f_beta_w=math.nan, s_measure=math.nan, e_measure=math.nan)
        self.rows.append(row)
        self.preds.append(pred)
        self.gts.append(gt)
        return row

    def report(self):
        if not self.rows:
            raise ValueError("no samples were evaluated")

        def mean_of(key):
            vals = [r[key] for r in self.rows if not math.isnan(r[key])]
            return float(np.mean(vals)) if vals else math.nan

        skipped = sum(math.isnan(r["f_beta"]) for r in self.rows)
        return MetricReport(
            **{k: mean_of(k) for k in SCALAR_KEYS},
            pr_curve=pr_curve(self.preds, self.gts, pooled=self.pooled_pr),
            n_samples=len(self.rows),
            n_skipped=skipped,
        )
