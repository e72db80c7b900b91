"""Detection and localization metrics.

Image-level scoring averages the top-N most anomalous pixels. ROC-AUC is
computed exactly (tie-grouped trapezoid over integer TP/FP counts, which
equals the normalized Mann-Whitney U with half-credit for ties). Region
overlap uses the saturated per-region overlap: each ground-truth region
contributes min(flagged_pixels / saturation_area, 1), averaged over all
regions of the dataset, while the false-positive rate pools all anomaly-free
pixels dataset-wide. The overlap-vs-FPR curve is swept over score
thresholds, clipped at an FPR limit with linear interpolation, integrated by
trapezoid, and normalized by the limit.

Pixels are flagged by strict inequality (score > threshold), which makes the
all-flagged and none-flagged limits exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class GtRegion:
    """One connected ground-truth defect region.

    pixels: (n, 2) int array of (row, col) coordinates.
    saturation_area: overlap cap; defaults to the region's own pixel count.
    """

    pixels: np.ndarray
    saturation_area: Optional[float] = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64)
        if px.ndim != 2 or px.shape[1] != 2 or px.shape[0] == 0:
            raise ValueError(f"pixels must be a non-empty (n, 2) array, got {px.shape}")
        object.__setattr__(self, "pixels", px)
        if self.saturation_area is None:
            object.__setattr__(self, "saturation_area", float(px.shape[0]))
        elif self.saturation_area <= 0:
            raise ValueError("saturation_area must be positive")


@dataclass(frozen=True)
class ScoredCurve:
    """Ordered (threshold, fpr, spro) triples with fpr ascending."""

    thresholds: np.ndarray
    fprs: np.ndarray
    spros: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fprs.tolist(), self.spros.tolist()))


def regions_from_mask(mask, saturations: Optional[dict[int, float]] = None) -> list[GtRegion]:
    """Split a 0/1 mask into 8-connected regions.

    ``saturations`` optionally maps the 1-based region label (as assigned by
    the connected-component pass) to a saturation area.
    """
    m = np.asarray(mask)
    labeled, count = ndimage.label(m, structure=np.ones((3, 3), dtype=int))
    regions = []
    for rid in range(1, count + 1):
        coords = np.argwhere(labeled == rid)
        sat = saturations.get(rid) if saturations else None
        regions.append(GtRegion(pixels=coords, saturation_area=sat))
    return regions


def image_score(score_map, top_n: int = 100) -> float:
    """Mean of the top_n largest pixel scores (all pixels if fewer)."""
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    flat = np.asarray(score_map, dtype=np.float64).ravel()
    if flat.size == 0:
        raise ValueError("empty score map")
    if top_n >= flat.size:
        return float(flat.mean())
    return float(np.partition(flat, flat.size - top_n)[flat.size - top_n :].mean())


def roc_auc(scores, labels) -> float:
    """Exact ROC-AUC: P(score_pos > score_neg) + P(tie) / 2.

    Computed as the trapezoidal integral of the tie-grouped ROC curve using
    integer TP/FP counts, so the result is bit-identical to brute-force pair
    counting. Raises if only one class is present.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must contain only 0/1 entries")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            "ROC-AUC needs both classes present; got "
            f"{n_pos} positive and {n_neg} negative samples"
        )

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order].astype(np.int64)
    # indices closing each tie group of equal score
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = np.cumsum(y_sorted)[ends]
    fp = np.cumsum(1 - y_sorted)[ends]
    tp_prev = np.r_[0, tp[:-1]]
    fp_prev = np.r_[0, fp[:-1]]
    area2 = int(((fp - fp_prev) * (tp + tp_prev)).sum())
    return area2 / (2.0 * n_pos * n_neg)


def pixel_roc_auc(maps: Sequence, gt_pixel_labels: Sequence) -> float:
    """ROC-AUC over all pixels of all maps pooled together."""
    if len(maps) != len(gt_pixel_labels):
        raise ValueError(f"{len(maps)} maps vs {len(gt_pixel_labels)} label maps")
    scores = np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in maps])
    labels = np.concatenate([np.asarray(g).ravel() for g in gt_pixel_labels])
    return roc_auc(scores, labels)


def _check_aligned(maps, gts):
    if len(maps) != len(gts):
        raise ValueError(f"{len(maps)} score maps vs {len(gts)} ground truths")
    for m, (regions, normal_mask) in zip(maps, gts):
        if np.asarray(m).shape != np.asarray(normal_mask).shape:
            raise ValueError(
                f"score map shape {np.asarray(m).shape} != normal mask shape "
                f"{np.asarray(normal_mask).shape}"
            )
        for r in regions:
            px = r.pixels
            hh, ww = np.asarray(m).shape
            if (px[:, 0] >= hh).any() or (px[:, 1] >= ww).any():
                raise ValueError("region pixel outside its score map")


def spro_at_threshold(maps: Sequence, gts: Sequence, t: float) -> tuple[float, float]:
    """(fpr, mean saturated region overlap) when flagging score > t.

    ``gts`` pairs each map with (regions, normal_mask) where normal_mask is 1
    on anomaly-free pixels.
    """
    _check_aligned(maps, gts)
    contributions = []
    fp = 0
    free = 0
    for m, (regions, normal_mask) in zip(maps, gts):
        arr = np.asarray(m, dtype=np.float64)
        flagged = arr > t
        nm = np.asarray(normal_mask).astype(bool)
        fp += int(flagged[nm].sum())
        free += int(nm.sum())
        for r in regions:
            overlap = int(flagged[r.pixels[:, 0], r.pixels[:, 1]].sum())
            contributions.append(min(overlap / r.saturation_area, 1.0))
    if not contributions:
        raise ValueError("no ground-truth regions in the dataset")
    if free == 0:
        raise ValueError("no anomaly-free pixels in the dataset")
    return fp / free, float(np.mean(contributions))


def _sweep_thresholds(maps, n_thresholds: int) -> np.ndarray:
    uniq = np.unique(np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in maps]))
    if uniq.size > n_thresholds:
        qs = np.quantile(uniq, np.linspace(0.0, 1.0, n_thresholds), method="nearest")
        uniq = np.unique(np.r_[qs, uniq[-1]])
    # -inf flags everything, giving the (1, 1) end of the curve
    return np.r_[-np.inf, uniq]


def spro_curve(maps: Sequence, gts: Sequence, n_thresholds: int = 200) -> ScoredCurve:
    """Sweep thresholds (descending) and collect (threshold, fpr, spro) points."""
    thresholds = _sweep_thresholds(maps, n_thresholds)[::-1]
    fprs = np.empty(thresholds.size)
    spros = np.empty(thresholds.size)
    for i, t in enumerate(thresholds):
        fprs[i], spros[i] = spro_at_threshold(maps, gts, t)
    return ScoredCurve(thresholds=thresholds, fprs=fprs, spros=spros)


def spro_auc(
    maps: Sequence,
    gts: Sequence,
    fpr_limit: float = 0.05,
    n_thresholds: int = 200,
) -> float:
    """Area under the overlap-vs-FPR curve up to fpr_limit, normalized to [0, 1]."""
    if not 0.0 < fpr_limit <= 1.0:
        raise ValueError(f"fpr_limit must be in (0, 1], got {fpr_limit}")
    curve = spro_curve(maps, gts, n_thresholds)
    fpr, spro = curve.fprs, curve.spros
    # thresholds descend, so fpr and spro ascend; keep the best spro per fpr
    keep = np.r_[fpr[1:] != fpr[:-1], True]
    fpr, spro = fpr[keep], spro[keep]

    inside = fpr <= fpr_limit
    xs = fpr[inside]
    ys = spro[inside]
    if xs.size == 0 or xs[-1] < fpr_limit:
        boundary = np.interp(fpr_limit, fpr, spro)
        xs = np.r_[xs, fpr_limit]
        ys = np.r_[ys, boundary]
    area = float(0.5 * ((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1])).sum())
    return area / fpr_limit
