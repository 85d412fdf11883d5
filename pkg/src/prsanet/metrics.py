"""Proposal and detection evaluation: tIoU, AR@AN, AUC, mAP.

Proposals are (t_start, t_end, score) triples grouped by video id; detections
additionally carry a class label.  Recall aggregation is instance-weighted by
default, matching the public evaluation conventions of the temporal proposal
benchmarks; AUC integrates the AR-vs-AN curve over AN in [1, 100].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

Interval = tuple[float, float]

THUMOS_TIOUS = tuple(np.round(np.arange(0.5, 1.0 + 1e-9, 0.05), 2))
ANET_TIOUS = tuple(np.round(np.arange(0.5, 0.95 + 1e-9, 0.05), 2))
DEFAULT_AN_VALUES = (1, 5, 10, 20, 50, 100)


@dataclass(frozen=True)
class EvalConfig:
    tiou_set: tuple[float, ...] = THUMOS_TIOUS
    an_values: tuple[int, ...] = DEFAULT_AN_VALUES
    mode: str = "thumos"
    video_weighted: bool = False

    def __post_init__(self):
        if any(not (0.0 < t <= 1.0) for t in self.tiou_set):
            raise ValueError("tIoU thresholds must lie in (0, 1]")
        if any(an < 1 for an in self.an_values):
            raise ValueError("AN values must be positive")

    @classmethod
    def for_mode(cls, mode: str, **kwargs) -> "EvalConfig":
        if mode == "thumos":
            return cls(tiou_set=THUMOS_TIOUS, mode="thumos", **kwargs)
        if mode == "anet":
            return cls(tiou_set=ANET_TIOUS, mode="anet", **kwargs)
        raise ValueError(f"unknown eval mode {mode!r}")


def tiou(a: Interval, b: Interval) -> float:
    """Temporal intersection over union; 0 for disjoint or degenerate input."""
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0:
        return 0.0
    return inter / union


def tiou_matrix(proposals: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Pairwise tIoU between (n, 2) proposal and (m, 2) ground-truth arrays."""
    if proposals.size == 0 or gts.size == 0:
        return np.zeros((len(proposals), len(gts)))
    inter = np.clip(
        np.minimum(proposals[:, None, 1], gts[None, :, 1])
        - np.maximum(proposals[:, None, 0], gts[None, :, 0]),
        0.0,
        None,
    )
    union = (
        (proposals[:, 1] - proposals[:, 0])[:, None]
        + (gts[:, 1] - gts[:, 0])[None, :]
        - inter
    )
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def _top_proposals(proposals: Sequence[tuple[float, float, float]], an: int) -> np.ndarray:
    arr = np.asarray(sorted(proposals, key=lambda p: -p[2]), dtype=np.float64)
    return arr[:an, :2] if arr.size else np.zeros((0, 2))


def recall_at(
    proposals_by_video: Mapping[str, Sequence[tuple[float, float, float]]],
    gt_by_video: Mapping[str, Sequence[Interval]],
    tiou_thresh: float,
    an: int,
    video_weighted: bool = False,
) -> float:
    """Fraction of ground-truth instances recalled by top-``an`` proposals.

    An instance counts as recalled when any kept proposal reaches
    ``tiou_thresh`` against it; videos without ground truth are skipped.
    """
    recalled = 0
    total = 0
    per_video = []
    for video_id, gts in gt_by_video.items():
        if not gts:
            continue
        gt_arr = np.asarray(gts, dtype=np.float64)
        top = _top_proposals(proposals_by_video.get(video_id, []), an)
        if top.size:
            hits = (tiou_matrix(top, gt_arr) >= tiou_thresh).any(axis=0)
            n_hit = int(hits.sum())
        else:
            n_hit = 0
        recalled += n_hit
        total += len(gts)
        per_video.append(n_hit / len(gts))
    if total == 0:
        return 0.0
    if video_weighted:
        return float(np.mean(per_video))
    return recalled / total


def ar_at_an(
    proposals_by_video: Mapping[str, Sequence[tuple[float, float, float]]],
    gt_by_video: Mapping[str, Sequence[Interval]],
    config: EvalConfig,
) -> dict[int, float]:
    """Average recall over the configured tIoU set, per AN value."""
    return {
        an: float(
            np.mean(
                [
                    recall_at(proposals_by_video, gt_by_video, t, an, config.video_weighted)
                    for t in config.tiou_set
                ]
            )
        )
        for an in config.an_values
    }


def ar_curve(
    proposals_by_video: Mapping[str, Sequence[tuple[float, float, float]]],
    gt_by_video: Mapping[str, Sequence[Interval]],
    config: EvalConfig,
    max_an: int = 100,
    jobs: int = 1,
) -> np.ndarray:
    """AR(AN) for AN = 1..max_an, as a length-``max_an`` array.

    AN values are independent, so ``jobs`` > 1 fans them out to a thread
    pool; results are identical for any worker count.
    """

    def one_an(an: int) -> float:
        return float(
            np.mean(
                [
                    recall_at(proposals_by_video, gt_by_video, t, an, config.video_weighted)
                    for t in config.tiou_set
                ]
            )
        )

    an_values = range(1, max_an + 1)
    if jobs <= 1:
        return np.array([one_an(an) for an in an_values])
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return np.array(list(pool.map(one_an, an_values)))


def auc_from_curve(curve: np.ndarray) -> float:
    """Trapezoidal area of an AR(AN) curve over its AN span, in percent.

    Normalized by the span so a constant AR = r curve scores 100*r.
    """
    if len(curve) < 2:
        return float(100.0 * curve[0]) if len(curve) else 0.0
    area = np.trapezoid(np.asarray(curve, dtype=np.float64), dx=1.0)
    return float(100.0 * area / (len(curve) - 1))


def auc_ar_an(
    proposals_by_video: Mapping[str, Sequence[tuple[float, float, float]]],
    gt_by_video: Mapping[str, Sequence[Interval]],
    config: EvalConfig,
    max_an: int = 100,
) -> float:
    """Area under AR-vs-AN over AN in [1, max_an], in percent."""
    return auc_from_curve(ar_curve(proposals_by_video, gt_by_video, config, max_an))


def average_precision(
    detections: Sequence[tuple[str, float, float, float]],
    gt_by_video: Mapping[str, Sequence[Interval]],
    tiou_thresh: float,
) -> float:
    """AP for one class: greedy score-descending matching, all-point PR area.

    ``detections`` are (video_id, t_start, t_end, score); each ground truth
    may be matched at most once.
    """
    n_gt = sum(len(v) for v in gt_by_video.values())
    if n_gt == 0:
        return 0.0
    order = sorted(range(len(detections)), key=lambda i: -detections[i][3])
    matched: dict[str, np.ndarray] = {
        vid: np.zeros(len(gts), dtype=bool) for vid, gts in gt_by_video.items()
    }
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    for rank, i in enumerate(order):
        vid, ts, te, _ = detections[i]
        gts = gt_by_video.get(vid, ())
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if matched[vid][j]:
                continue
            iou = tiou((ts, te), gt)
            if iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0 and best_iou >= tiou_thresh:
            matched[vid][best_j] = True
            tp[rank] = 1
        else:
            fp[rank] = 1
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    # precision envelope, then area over every recall step
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def detection_map(
    detections_by_video: Mapping[str, Sequence[tuple[float, float, float, str]]],
    gt_by_video: Mapping[str, Sequence[tuple[float, float, str]]],
    tiou_set: Sequence[float],
) -> dict[float, float]:
    """mAP per tIoU threshold over the union of predicted and annotated classes.

    A class with predictions but no ground truth contributes AP = 0; a class
    appearing in neither is absent from the mean.
    """
    gt_classes = {label for gts in gt_by_video.values() for _, _, label in gts}
    det_classes = {
        label for dets in detections_by_video.values() for _, _, _, label in dets
    }
    classes = sorted(gt_classes | det_classes, key=str)

    per_class_gt: dict[str, dict[str, list[Interval]]] = {c: {} for c in classes}
    for vid, gts in gt_by_video.items():
        for ts, te, label in gts:
            per_class_gt[label].setdefault(vid, []).append((ts, te))
    per_class_det: dict[str, list[tuple[str, float, float, float]]] = {c: [] for c in classes}
    for vid, dets in detections_by_video.items():
        for ts, te, score, label in dets:
            per_class_det[label].append((vid, ts, te, score))

    result = {}
    for thresh in tiou_set:
        aps = [
            average_precision(per_class_det[c], per_class_gt[c], thresh)
            for c in classes
        ]
        result[float(thresh)] = float(np.mean(aps)) if aps else 0.0
    return result


def write_results(
    path: Union[str, Path],
    ar: Mapping[int, float],
    auc: float,
    map_by_tiou: Mapping[float, float] | None = None,
) -> None:
    payload = {
        "ar_at_an": {str(an): v for an, v in ar.items()},
        "auc": auc,
        "map": {str(t): v for t, v in (map_by_tiou or {}).items()},
    }
    with open(path, "w") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)


def write_curve_csv(path: Union[str, Path], curve: np.ndarray) -> None:
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["AN", "AR"])
        for an, value in enumerate(curve, start=1):
            writer.writerow([an, f"{value:.6f}"])
