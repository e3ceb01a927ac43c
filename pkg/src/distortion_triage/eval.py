"""Restoration quality, classification and COCO-style detection metrics."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, DomainError, FormatError, IoError
from .image_core import Image, gaussian_kernel, to_grayscale

NUM_CLASSES = 6
IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_GRID = np.linspace(0.0, 1.0, 101)
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2, SSIM_RANGE = 0.01, 0.03, 255.0

DETECTION_HEADER = ["image_id", "category_id", "x", "y", "w", "h", "score"]
GROUND_TRUTH_HEADER = DETECTION_HEADER[:-1]


# ------------------------------------------------------------- quality

def _check_pair(a: Image, b: Image) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise DimensionError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``math.inf``."""
    _check_pair(a, b)
    mse = float(np.mean((a.as_float() - b.as_float()) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def ssim(a: Image, b: Image) -> float:
    """Single-scale SSIM on luma with an 11x11 Gaussian window (sigma 1.5).

    Local statistics are taken only where the window fits entirely inside
    the image, and the SSIM map is averaged over those positions.
    """
    _check_pair(a, b)
    if a.width < 11 or a.height < 11:
        raise DimensionError("ssim needs images of at least 11x11")
    x, y = to_grayscale(a), to_grayscale(b)
    win = gaussian_kernel(SSIM_SIGMA)
    half = win.shape[0] // 2

    def local_mean(p):
        return ndimage.correlate(p, win, mode="mirror")[half:-half, half:-half]

    mx, my = local_mean(x), local_mean(y)
    sxx = local_mean(x * x) - mx * mx
    syy = local_mean(y * y) - my * my
    sxy = local_mean(x * y) - mx * my
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


# -------------------------------------------------------------- boxes

@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float
    category: int
    score: float | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DomainError(f"box width and height must be positive, got {self.w}x{self.h}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise DomainError(f"score must lie in [0, 1], got {self.score}")

    @property
    def area(self) -> float:
        return self.w * self.h


# image id -> boxes; dict keys keep image ids unique and remember insertion order
BoxSet = dict


def iou(a: BBox, b: BBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _ranked_detections(detections: BoxSet, category: int):
    """(image_id, box) pairs of one category by descending score, ties in insertion order."""
    flat = [(img, box) for img, boxes in detections.items() for box in boxes if box.category == category]
    # sorted() is stable, so equal scores keep their insertion order
    return sorted(flat, key=lambda item: -(item[1].score if item[1].score is not None else 0.0))


def match_detections(detections: BoxSet, ground_truth: BoxSet, category: int, iou_threshold: float) -> tuple[np.ndarray, int]:
    """Greedy score-ordered matching; returns the TP flags in rank order and the GT count."""
    gts = {img: [g for g in boxes if g.category == category] for img, boxes in ground_truth.items()}
    used = {img: [False] * len(boxes) for img, boxes in gts.items()}
    n_gt = sum(len(b) for b in gts.values())
    flags = []
    for img, det in _ranked_detections(detections, category):
        best, best_iou = -1, -1.0
        for k, g in enumerate(gts.get(img, ())):
            if used[img][k]:
                continue
            v = iou(det, g)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = k, v
        if best >= 0:
            used[img][best] = True
        flags.append(best >= 0)
    return np.array(flags, dtype=bool), n_gt


def interpolated_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from rank-ordered TP flags."""
    if n_gt == 0:
        raise DomainError("AP is undefined without ground truth")
    if tp_flags.size == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # envelope: best precision at any recall at or beyond each point
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID - 1e-12, side="left")
    sampled = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
    return float(np.mean(sampled))


def average_precision(detections: BoxSet, ground_truth: BoxSet, category: int, iou_threshold: float = 0.5) -> float | None:
    """AP of one category at one IoU threshold; ``None`` when the category has no ground truth."""
    flags, n_gt = match_detections(detections, ground_truth, category, iou_threshold)
    if n_gt == 0:
        return None
    return interpolated_ap(flags, n_gt)


def gt_categories(ground_truth: BoxSet) -> list[int]:
    return sorted({b.category for boxes in ground_truth.values() for b in boxes})


# ------------------------------------------------------------- report

@dataclass
class EvalReport:
    psnr: float | None = None
    ssim: float | None = None
    accuracy: float | None = None
    confusion: np.ndarray | None = None
    per_class_ap: dict = field(default_factory=dict)
    map_50_95: float | None = None

    def to_dict(self) -> dict:
        out = {}
        if self.psnr is not None:
            out["psnr"] = "inf" if math.isinf(self.psnr) else self.psnr
        if self.ssim is not None:
            out["ssim"] = self.ssim
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        if self.confusion is not None:
            out["confusion"] = np.asarray(self.confusion).astype(int).tolist()
        if self.map_50_95 is not None or self.per_class_ap:
            out["map_50_95"] = self.map_50_95
            out["per_class_ap"] = {
                str(cat): {f"{thr:.2f}": ap for thr, ap in aps.items()} for cat, aps in self.per_class_ap.items()
            }
        return out


def map_coco(detections: BoxSet, ground_truth: BoxSet, thresholds=IOU_THRESHOLDS) -> EvalReport:
    """Mean AP over IoU thresholds 0.50:0.05:0.95 and every category present in the ground truth."""
    per_class = {}
    for cat in gt_categories(ground_truth):
        per_class[cat] = {thr: average_precision(detections, ground_truth, cat, thr) for thr in thresholds}
    values = [ap for aps in per_class.values() for ap in aps.values()]
    mean = float(np.mean(values)) if values else None
    return EvalReport(per_class_ap=per_class, map_50_95=mean)


def classification_report(predicted, truth, num_classes: int = NUM_CLASSES) -> EvalReport:
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if predicted.size != truth.size:
        raise DimensionError(f"{predicted.size} predictions for {truth.size} labels")
    if truth.size == 0:
        raise DimensionError("classification report needs at least one label")
    both = np.concatenate([predicted, truth])
    if both.min() < 0 or both.max() >= num_classes:
        raise DomainError(f"labels must lie in [0, {num_classes - 1}]")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)
    return EvalReport(accuracy=float(np.trace(confusion)) / truth.size, confusion=confusion)


def quality_report(pairs) -> EvalReport:
    """Mean PSNR and SSIM over (reference, test) image pairs."""
    pairs = list(pairs)
    if not pairs:
        raise DomainError("no image pairs to compare")
    p = [psnr(a, b) for a, b in pairs]
    s = [ssim(a, b) for a, b in pairs]
    # one identical pair makes the mean PSNR infinite, which is the documented sentinel
    return EvalReport(psnr=float(np.mean(p)), ssim=float(np.mean(s)))


# --------------------------------------------------------------- CSV

def _read_boxes(path, with_score: bool) -> BoxSet:
    path = Path(path)
    header_expected = DETECTION_HEADER if with_score else GROUND_TRUTH_HEADER
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    boxes: BoxSet = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != header_expected:
            raise FormatError(f"{path}:1: header must be {','.join(header_expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header_expected):
                raise FormatError(f"{path}:{lineno}: expected {len(header_expected)} columns, got {len(row)}")
            try:
                x, y, w, h = (float(v) for v in row[2:6])
                box = BBox(x, y, w, h, int(row[1]), float(row[6]) if with_score else None)
            except (ValueError, DomainError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            boxes.setdefault(row[0].strip(), []).append(box)
    return boxes


def read_detections(path: str | os.PathLike) -> BoxSet:
    return _read_boxes(path, with_score=True)


def read_ground_truth(path: str | os.PathLike) -> BoxSet:
    return _read_boxes(path, with_score=False)


def write_boxes(path: str | os.PathLike, boxes: BoxSet, with_score: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTION_HEADER if with_score else GROUND_TRUTH_HEADER)
        for img, items in boxes.items():
            for b in items:
                row = [img, b.category, repr(b.x), repr(b.y), repr(b.w), repr(b.h)]
                if with_score:
                    row.append(repr(b.score))
                writer.writerow(row)
