"""
Greedy non-maximum suppression for single-class detector output.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np

from .errors import ArgumentError
from .evaluation import Detection
from .geometry import boxes_to_array, iou_matrix

logger = logging.getLogger(__name__)


def _check_threshold(name: str, value: float) -> None:
    if not 0.0 < value <= 1.0:
        raise ArgumentError(f"{name} must be in (0, 1], got {value}")


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5, score_threshold: float = 0.01) -> List[Detection]:
    """
    Suppress overlapping detections of one image.

    Detections scoring below `score_threshold` are dropped. The best remaining
    detection is kept and every other one with IoU > iou_threshold against it
    is suppressed; this repeats until none remain. Equal scores keep input
    order.

    Returns:
        Kept detections by descending score
    """
    _check_threshold("iou_threshold", iou_threshold)
    _check_threshold("score_threshold", score_threshold)
    candidates = [d for d in dets if d.score >= score_threshold]
    if not candidates:
        return []

    boxes = boxes_to_array(d.box for d in candidates)
    scores = np.array([d.score for d in candidates], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")

    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(int(i))
        overlaps = iou_matrix(boxes[i : i + 1], boxes[order[1:]])[0]
        order = order[1:][overlaps <= iou_threshold]
    return [candidates[i] for i in keep]


def nms_by_image(
    dets: Sequence[Detection], iou_threshold: float = 0.5, score_threshold: float = 0.01
) -> List[Detection]:
    """Apply `nms` per image; images keep their order of first appearance."""
    groups: Dict[str, List[Detection]] = {}
    for det in dets:
        groups.setdefault(det.image_id, []).append(det)
    kept: List[Detection] = []
    for group in groups.values():
        kept.extend(nms(group, iou_threshold, score_threshold))
    logger.info(f"NMS kept {len(kept)} of {len(dets)} detections over {len(groups)} images")
    return kept
