"""Evaluation metrics for the three dense tasks, plus the multi-task delta.

Conventions that matter for comparability:

* mIoU averages over the classes that actually appear in the ground truth
  (absent classes neither help nor hurt); an ignore index drops pixels
  before anything is counted.
* Depth threshold accuracies delta_n use max(pred/gt, gt/pred) < 1.25^n
  with a strict inequality, and ground truth must be positive wherever it
  is evaluated.
* Normal angles come from arccos of the clamped dot product of defensively
  re-normalized vectors; percentile thresholds are strict as well.
* An empty evaluation mask makes a metric undefined (None), never zero.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def semseg_miou(pred, gt, num_classes: int, ignore_index=None):
    """Mean IoU over classes present in the ground truth.

    Returns ``(miou, per_class)`` where ``per_class`` maps class index to
    IoU for every class that occurs in ``gt`` (after removing the ignore
    index).  ``miou`` is None when nothing is left to evaluate.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    keep = np.ones(gt.shape, dtype=bool)
    if ignore_index is not None:
        keep = gt != ignore_index
    p = pred[keep].astype(np.int64)
    g = gt[keep].astype(np.int64)
    if p.size == 0:
        return None, {}
    for name, arr in (("pred", p), ("gt", g)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise DataError(
                f"{name} contains class index outside [0, {num_classes})")
    confusion = np.bincount(g * num_classes + p,
                            minlength=num_classes * num_classes)
    confusion = confusion.reshape(num_classes, num_classes)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    present = np.nonzero(confusion.sum(axis=1) > 0)[0]
    per_class = {}
    for cls in present:
        union = tp[cls] + fp[cls] + fn[cls]
        per_class[int(cls)] = float(tp[cls] / union) if union > 0 else 0.0
    miou = float(np.mean([per_class[c] for c in per_class]))
    return miou, per_class


def depth_metrics(pred, gt, mask=None):
    """AbsRel, RMSE and threshold accuracies on masked pixels.

    ``mask`` defaults to gt > 0; explicit masks must stay inside positive
    ground truth (ratios are undefined otherwise).  Accuracies are
    percentages in [0, 100].
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if mask is None:
        mask = np.isfinite(gt) & (gt > 0.0)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise DataError("mask shape mismatch")
    count = int(mask.sum())
    if count == 0:
        return {"abs_rel": None, "rmse": None, "delta1": None,
                "delta2": None, "delta3": None, "valid_pixel_count": 0}
    p = pred[mask]
    g = gt[mask]
    if np.any(g <= 0.0) or not np.isfinite(g).all():
        raise DataError("ground-truth depth must be positive on the mask")
    if np.any(p <= 0.0) or not np.isfinite(p).all():
        raise DataError("predicted depth must be positive on the mask")
    abs_rel = float(np.mean(np.abs(p - g) / g))
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    ratio = np.maximum(p / g, g / p)
    out = {"abs_rel": abs_rel, "rmse": rmse, "valid_pixel_count": count}
    for n in (1, 2, 3):
        out[f"delta{n}"] = float(np.mean(ratio < 1.25 ** n) * 100.0)
    return out


def normal_metrics(pred, gt, mask=None):
    """Angular error statistics between predicted and reference normals.

    Vectors are re-normalized defensively; pixels whose ground truth (or
    prediction) has no direction at all are dropped from the evaluation.
    Angles are degrees; percentile accuracies use strict < thresholds.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise DataError("normals must be (..., 3) and shapes must match")
    if mask is None:
        mask = np.ones(gt.shape[:-1], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape[:-1]:
            raise DataError("mask shape mismatch")
    pn = np.linalg.norm(pred, axis=-1)
    gn = np.linalg.norm(gt, axis=-1)
    usable = mask & (pn > 0.0) & (gn > 0.0) & np.isfinite(pn) & np.isfinite(gn)
    count = int(usable.sum())
    if count == 0:
        return {"mean_deg": None, "median_deg": None, "pct_11_5": None,
                "pct_22_5": None, "pct_30": None, "valid_pixel_count": 0}
    p = pred[usable] / pn[usable][:, None]
    g = gt[usable] / gn[usable][:, None]
    dot = np.clip(np.sum(p * g, axis=-1), -1.0, 1.0)
    angles = np.degrees(np.arccos(dot))
    return {
        "mean_deg": float(angles.mean()),
        "median_deg": float(np.median(angles)),
        "pct_11_5": float(np.mean(angles < 11.5) * 100.0),
        "pct_22_5": float(np.mean(angles < 22.5) * 100.0),
        "pct_30": float(np.mean(angles < 30.0) * 100.0),
        "valid_pixel_count": count,
    }


# The standard comparison panel: (mIoU %, depth RMSE, normal mean error deg),
# where only the first improves by going up.
PANEL_HIGHER_IS_BETTER = (True, False, False)


def delta_mtl(baseline, candidate, higher_is_better=PANEL_HIGHER_IS_BETTER):
    """Average signed relative improvement over a metric panel, in percent.

    delta = (100 / T) * sum_t s_t * (m_t - b_t) / b_t with s_t = +1 for
    higher-is-better metrics and -1 otherwise.  Identical panels give 0;
    positive means the candidate improves on the baseline overall.
    """
    baseline = [float(b) for b in baseline]
    candidate = [float(m) for m in candidate]
    if len(baseline) != len(candidate) or len(baseline) != len(higher_is_better):
        raise DataError("panel lengths do not match")
    if not baseline:
        raise DataError("empty metric panel")
    total = 0.0
    for b, m, up in zip(baseline, candidate, higher_is_better):
        if b == 0.0:
            raise DataError("zero baseline makes relative improvement undefined")
        sign = 1.0 if up else -1.0
        total += sign * (m - b) / b
    return 100.0 * total / len(baseline)
