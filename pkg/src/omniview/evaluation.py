"""
PASCAL VOC style detector evaluation for the single person class.

Detections are matched greedily in descending score order against the
ground truth of their image; precision/recall are accumulated over the
ranked list and summarized as average precision (all-points envelope or the
11-point VOC2007 variant).
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)

from .config import AP_MODES
from .datasets import AnnotatedImage, check_unique_ids
from .errors import ArgumentError, SchemaError
from .geometry import BoundingBox, iou
from .utils import PathLike, atomic_write_text, iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)

ELEVEN_POINT_RECALLS = [i / 10 for i in range(11)]

GroundTruth = Mapping[str, Sequence[Tuple[BoundingBox, bool]]]
PRPoint = Tuple[float, float]


class Detection(BaseModel):
    """One scored person box."""

    model_config = ConfigDict(frozen=True)

    image_id: str
    score: float = Field(ge=0.0, le=1.0, allow_inf_nan=False)
    box: BoundingBox

    @field_validator("box", mode="before")
    @classmethod
    def _coerce_box(cls, value: Any) -> BoundingBox:
        if isinstance(value, BoundingBox):
            return value
        return BoundingBox.from_sequence(value)

    @field_serializer("box")
    def _serialize_box(self, box: BoundingBox) -> List[float]:
        return box.as_list()

    def to_record(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Detection":
        """
        Raises:
            SchemaError: If the record does not validate
        """
        try:
            return cls.model_validate(dict(record))
        except (ValidationError, ArgumentError) as e:
            raise SchemaError(f"Invalid detection record for {record.get('image_id', '?')!r}: {e}")


class Label(str, Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "IGNORED"


@dataclass
class MatchResult:
    """
    Outcome of greedy matching, in processing (descending score) order.

    `detection_index` maps each position back to the input list.
    """

    detection_index: List[int] = field(default_factory=list)
    labels: List[Label] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)
    matched_gt_index: List[Optional[int]] = field(default_factory=list)
    unmatched_gt: Dict[str, int] = field(default_factory=dict)
    unknown_images: List[str] = field(default_factory=list)

    def count(self, label: Label) -> int:
        return sum(1 for lab in self.labels if lab is label)


class EvalCounts(BaseModel):
    n_gt: int = 0
    n_det: int = 0
    n_tp: int = 0
    n_fp: int = 0
    n_ignored: int = 0


class EvalReport(BaseModel):
    """Evaluation summary of one detection file."""

    pr_points: List[Tuple[float, float]]
    ap: float = Field(ge=0.0, le=1.0)
    ap_by_mode: Dict[str, float]
    counts: EvalCounts
    interpolation_mode: str
    iou_threshold: float
    epoch: Optional[int] = None
    unknown_images: List[str] = Field(default_factory=list)


class EpochSeries(BaseModel):
    """mAP per evaluated epoch."""

    points: List[Tuple[int, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique_epochs(self) -> "EpochSeries":
        epochs = [e for e, _ in self.points]
        if len(set(epochs)) != len(epochs):
            raise ValueError("Epochs in a series must be unique")
        return self


def _check_iou_threshold(iou_threshold: float) -> None:
    if not 0.0 < iou_threshold <= 1.0:
        raise ArgumentError(f"IoU threshold must be in (0, 1], got {iou_threshold}")


def ground_truth_from_images(images: Sequence[AnnotatedImage]) -> Dict[str, List[Tuple[BoundingBox, bool]]]:
    """
    Ground-truth lookup keyed by image id.

    Raises:
        SchemaError: If two images share an id
    """
    check_unique_ids(images, SchemaError, "Ground truth")
    return {img.image_id: list(zip(img.boxes, img.difficult)) for img in images}


def match_detections(
    dets: Sequence[Detection], gts: GroundTruth, iou_threshold: float = 0.5
) -> MatchResult:
    """
    Greedily match detections to ground truth.

    Detections are taken by descending score (ties keep input order). Each one
    claims the unmatched, non-difficult box of its image with the highest
    IoU >= threshold (ties go to the lower index) and becomes TP. Otherwise a
    difficult box with IoU >= threshold makes it IGNORED, and anything else is
    FP. Detections on unknown images are FP and listed in `unknown_images`.

    Raises:
        ArgumentError: If iou_threshold is outside (0, 1]
    """
    _check_iou_threshold(iou_threshold)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    used = {image_id: [False] * len(boxes) for image_id, boxes in gts.items()}
    result = MatchResult()

    for i in order:
        det = dets[i]
        result.detection_index.append(i)
        result.scores.append(det.score)
        if det.image_id not in gts:
            if det.image_id not in result.unknown_images:
                result.unknown_images.append(det.image_id)
            result.labels.append(Label.FP)
            result.matched_gt_index.append(None)
            continue

        best_index: Optional[int] = None
        best_iou = -1.0
        hits_difficult = False
        for j, (gt_box, difficult) in enumerate(gts[det.image_id]):
            overlap = iou(det.box, gt_box)
            if overlap < iou_threshold:
                continue
            if difficult:
                hits_difficult = True
            elif not used[det.image_id][j] and overlap > best_iou:
                best_index, best_iou = j, overlap

        if best_index is not None:
            used[det.image_id][best_index] = True
            result.labels.append(Label.TP)
            result.matched_gt_index.append(best_index)
        else:
            result.labels.append(Label.IGNORED if hits_difficult else Label.FP)
            result.matched_gt_index.append(None)

    for image_id, boxes in gts.items():
        result.unmatched_gt[image_id] = sum(
            1 for j, (_, difficult) in enumerate(boxes) if not difficult and not used[image_id][j]
        )
    if result.unknown_images:
        logger.warning(
            f"{len(result.unknown_images)} image id(s) in detections have no ground truth; counted as FP"
        )
    return result


def pr_curve(match: Union[MatchResult, Sequence[Label]], n_gt: int) -> List[PRPoint]:
    """
    Cumulative (recall, precision) after each ranked detection.

    IGNORED detections contribute no point. With n_gt = 0 recall stays 0.
    """
    if n_gt < 0:
        raise ArgumentError(f"n_gt must be non-negative, got {n_gt}")
    labels = match.labels if isinstance(match, MatchResult) else match
    points = []
    tp = fp = 0
    for label in labels:
        if label is Label.IGNORED:
            continue
        if label is Label.TP:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt > 0 else 0.0
        points.append((recall, tp / (tp + fp)))
    return points


def _envelope_area(pr_points: Sequence[PRPoint]) -> float:
    recalls = [0.0] + [r for r, _ in pr_points] + [1.0]
    precisions = [0.0] + [p for _, p in pr_points] + [0.0]
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for i in range(len(recalls) - 1):
        if recalls[i + 1] != recalls[i]:
            ap += (recalls[i + 1] - recalls[i]) * precisions[i + 1]
    return ap


def _eleven_point(pr_points: Sequence[PRPoint]) -> float:
    total = 0.0
    for t in ELEVEN_POINT_RECALLS:
        total += max((p for r, p in pr_points if r >= t), default=0.0)
    return total / len(ELEVEN_POINT_RECALLS)


def average_precision(pr_points: Sequence[PRPoint], mode: str = "all_points") -> float:
    """
    Average precision of a PR curve.

    all_points integrates the precision envelope (max precision at recall >= r)
    over recall; voc07_11pt averages the envelope at recalls 0, 0.1, ..., 1.

    Raises:
        ArgumentError: If the mode is unknown
    """
    if mode == "all_points":
        ap = _envelope_area(pr_points)
    elif mode == "voc07_11pt":
        ap = _eleven_point(pr_points)
    else:
        raise ArgumentError(f"Unknown AP mode {mode!r}; choose from {', '.join(AP_MODES)}")
    return min(1.0, max(0.0, ap))


def mean_ap(per_class: Mapping[str, float]) -> float:
    """
    Arithmetic mean of per-class AP.

    Raises:
        ArgumentError: If the map is empty
    """
    if not per_class:
        raise ArgumentError("mean_ap needs at least one class")
    return sum(per_class.values()) / len(per_class)


def best_epoch(series: Union[EpochSeries, Sequence[Tuple[int, float]]]) -> Tuple[int, float]:
    """
    Epoch with the highest mAP; ties go to the earlier epoch.

    Raises:
        ArgumentError: If the series is empty
    """
    points = series.points if isinstance(series, EpochSeries) else list(series)
    if not points:
        raise ArgumentError("best_epoch needs a non-empty series")
    epoch, value = max(points, key=lambda p: (p[1], -p[0]))
    return int(epoch), float(value)


def evaluate(
    detections: Sequence[Detection],
    ground_truth: Union[GroundTruth, Sequence[AnnotatedImage]],
    iou_threshold: float = 0.5,
    mode: str = "all_points",
    epoch: Optional[int] = None,
) -> EvalReport:
    """
    Full evaluation of a detection set.

    The report carries AP under every mode; `ap` is the one for `mode`.
    """
    if mode not in AP_MODES:
        raise ArgumentError(f"Unknown AP mode {mode!r}; choose from {', '.join(AP_MODES)}")
    gts = ground_truth if isinstance(ground_truth, Mapping) else ground_truth_from_images(ground_truth)
    match = match_detections(detections, gts, iou_threshold)
    n_gt = sum(1 for boxes in gts.values() for _, difficult in boxes if not difficult)
    points = pr_curve(match, n_gt)
    ap_by_mode = {m: average_precision(points, m) for m in AP_MODES}
    counts = EvalCounts(
        n_gt=n_gt,
        n_det=len(detections),
        n_tp=match.count(Label.TP),
        n_fp=match.count(Label.FP),
        n_ignored=match.count(Label.IGNORED),
    )
    logger.debug(
        f"AP@{iou_threshold} ({mode}) = {ap_by_mode[mode]:.4f} "
        f"over {counts.n_det} detections, {counts.n_gt} ground-truth boxes"
    )
    return EvalReport(
        pr_points=points,
        ap=ap_by_mode[mode],
        ap_by_mode=ap_by_mode,
        counts=counts,
        interpolation_mode=mode,
        iou_threshold=iou_threshold,
        epoch=epoch,
        unknown_images=match.unknown_images,
    )


def read_detections(path: PathLike) -> List[Detection]:
    """Read a detections JSON-lines file."""
    return [Detection.from_record(r) for r in iter_jsonl(path)]


def write_detections(path: PathLike, detections: Sequence[Detection]):
    """Atomically write a detections JSON-lines file."""
    return write_jsonl(path, (d.to_record() for d in detections))


def pr_curve_csv(points: Sequence[PRPoint]) -> str:
    """PR curve as CSV text with a rank column."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["rank", "recall", "precision"])
    for rank, (recall, precision) in enumerate(points, start=1):
        writer.writerow([rank, repr(recall), repr(precision)])
    return buffer.getvalue()


def write_pr_csv(path: PathLike, points: Sequence[PRPoint]):
    return atomic_write_text(path, pr_curve_csv(points))
