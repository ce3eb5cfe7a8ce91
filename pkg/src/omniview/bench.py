"""
Per-image latency measurement and throughput arithmetic.
"""

import logging
import math
import time
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .augment import AugmentPolicy, augment_record_pixels
from .errors import ArgumentError
from .evaluation import Detection, evaluate
from .fisheye import CameraPose, FisheyeModel, PinholeIntrinsics, warp_to_fisheye
from .geometry import BoundingBox, ImageDims
from .postprocess import nms
from .utils import derive_stream_id

logger = logging.getLogger(__name__)

REPORTED_LATENCY_MS = {"moSSD": 28.0, "resSSD": 38.0, "R-FCN": 46.0}
REPORTED_OVERHEAD_MS = 5.3
REALTIME_FPS = 20.0

BENCH_IMAGE_SIZE = 640
STAGES = ("augment", "fisheye", "eval", "nms")


class TimingStats(BaseModel):
    """Summary of per-image wall-clock durations in milliseconds."""

    n_samples: int = Field(ge=1)
    mean_ms: float = Field(ge=0)
    median_ms: float = Field(ge=0)
    p95_ms: float = Field(ge=0)
    std_ms: float = Field(ge=0)
    overhead_ms: float = Field(default=0.0, ge=0)

    @property
    def fps(self) -> float:
        return throughput(self.mean_ms, self.overhead_ms) if self.mean_ms > 0 else math.inf


class RealtimeRow(BaseModel):
    model: str
    per_image_ms: float
    overhead_ms: float
    fps: float
    realtime: bool


def summarize(durations_ms: Sequence[float], overhead_ms: float = 0.0) -> TimingStats:
    """
    Statistics over per-image durations.

    Raises:
        ArgumentError: If there are no durations or overhead is negative
    """
    if len(durations_ms) == 0:
        raise ArgumentError("Cannot summarize an empty set of durations")
    if overhead_ms < 0:
        raise ArgumentError(f"overhead_ms must be non-negative, got {overhead_ms}")
    values = np.asarray(durations_ms, dtype=np.float64)
    return TimingStats(
        n_samples=len(values),
        mean_ms=float(values.mean()),
        median_ms=float(np.median(values)),
        p95_ms=float(np.percentile(values, 95)),
        std_ms=float(values.std()),
        overhead_ms=overhead_ms,
    )


def measure(
    stage: Callable[[Any], Any],
    images: Sequence[Any],
    warmup: int = 10,
    overhead_ms: float = 0.0,
) -> TimingStats:
    """
    Time `stage` once per image with a monotonic clock.

    The first `warmup` iterations run untimed.

    Raises:
        ArgumentError: If `images` is empty or warmup is not below its length
    """
    if len(images) == 0:
        raise ArgumentError("measure needs at least one image")
    if not 0 <= warmup < len(images):
        raise ArgumentError(f"warmup must be in [0, {len(images)}), got {warmup}")

    durations = []
    for i, image in enumerate(images):
        start = time.perf_counter_ns()
        stage(image)
        elapsed = time.perf_counter_ns() - start
        if i >= warmup:
            durations.append(elapsed / 1e6)
    stats = summarize(durations, overhead_ms)
    logger.debug(f"Measured {stats.n_samples} iterations: mean {stats.mean_ms:.3f} ms")
    return stats


def throughput(per_image_ms: float, overhead_ms: float = 0.0) -> float:
    """
    Frames per second for a per-image time plus a fixed overhead.

    Raises:
        ArgumentError: If per_image_ms is not positive or overhead_ms is negative
    """
    if not per_image_ms > 0:
        raise ArgumentError(f"per_image_ms must be positive, got {per_image_ms}")
    if overhead_ms < 0:
        raise ArgumentError(f"overhead_ms must be non-negative, got {overhead_ms}")
    return 1000.0 / (per_image_ms + overhead_ms)


def realtime_check(
    latencies_ms: Dict[str, float] = REPORTED_LATENCY_MS,
    overhead_ms: float = REPORTED_OVERHEAD_MS,
    min_fps: float = REALTIME_FPS,
) -> List[RealtimeRow]:
    """Throughput of each model against a frame-rate floor."""
    rows = []
    for model, per_image in latencies_ms.items():
        fps = throughput(per_image, overhead_ms)
        rows.append(
            RealtimeRow(
                model=model,
                per_image_ms=per_image,
                overhead_ms=overhead_ms,
                fps=fps,
                realtime=fps > min_fps,
            )
        )
    return rows


def _generator(seed: int, *parts: Any) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, derive_stream_id(*parts)])))


def _random_boxes(gen: np.random.Generator, dims: ImageDims, count: int) -> List[BoundingBox]:
    boxes = []
    for _ in range(count):
        w = float(gen.integers(16, dims.width // 4))
        h = float(gen.integers(16, dims.height // 4))
        x = float(gen.integers(0, dims.width - int(w)))
        y = float(gen.integers(0, dims.height - int(h)))
        boxes.append(BoundingBox(x, y, x + w, y + h))
    return boxes


def synthetic_image(seed: int, index: int, size: int = BENCH_IMAGE_SIZE) -> Tuple[np.ndarray, List[BoundingBox]]:
    """Random RGB image with a few boxes, fully determined by (seed, index)."""
    gen = _generator(seed, "bench-image", index)
    image = gen.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    return image, _random_boxes(gen, ImageDims(size, size), 4)


def _jittered_detections(gen: np.random.Generator, image_id: str, boxes: Sequence[BoundingBox]) -> List[Detection]:
    dets = []
    for box in boxes:
        for _ in range(3):
            dx, dy = gen.normal(0.0, 4.0, size=2)
            moved = BoundingBox(box.x_min + dx, box.y_min + dy, box.x_max + dx, box.y_max + dy)
            dets.append(Detection(image_id=image_id, score=float(gen.random()), box=moved))
    return dets


def build_stage(name: str, seed: int, count: int) -> Tuple[Callable[[Any], Any], List[Any]]:
    """
    Built-in stage and `count` synthetic inputs for it.

    Raises:
        ArgumentError: If the stage name is unknown
    """
    if count < 1:
        raise ArgumentError(f"count must be positive, got {count}")
    samples = [synthetic_image(seed, i) for i in range(count)]

    if name == "augment":
        policy = AugmentPolicy.default()

        def run_augment(item: Tuple[int, Tuple[np.ndarray, List[BoundingBox]]]) -> Any:
            index, (image, boxes) = item
            return augment_record_pixels(image, boxes, [False] * len(boxes), policy, seed, f"bench-{index}")

        return run_augment, list(enumerate(samples))

    if name == "fisheye":
        dims = ImageDims(BENCH_IMAGE_SIZE, BENCH_IMAGE_SIZE)
        model = FisheyeModel.centered(dims)
        src = PinholeIntrinsics.from_fov(dims, math.radians(90.0))
        pose = CameraPose.from_euler(pitch=30.0)

        def run_fisheye(item: Tuple[np.ndarray, List[BoundingBox]]) -> Any:
            image, boxes = item
            return warp_to_fisheye(image, boxes, src, pose, model)

        return run_fisheye, samples

    if name == "eval":
        inputs = []
        for i, (_, boxes) in enumerate(samples):
            gen = _generator(seed, "bench-eval", i)
            image_id = f"bench-{i}"
            inputs.append((_jittered_detections(gen, image_id, boxes), {image_id: [(b, False) for b in boxes]}))

        def run_eval(item: Tuple[List[Detection], Dict[str, List[Tuple[BoundingBox, bool]]]]) -> Any:
            dets, gts = item
            return evaluate(dets, gts)

        return run_eval, inputs

    if name == "nms":
        inputs = []
        for i, (_, boxes) in enumerate(samples):
            gen = _generator(seed, "bench-nms", i)
            inputs.append(_jittered_detections(gen, f"bench-{i}", boxes * 16))

        def run_nms(dets: List[Detection]) -> Any:
            return nms(dets)

        return run_nms, inputs

    raise ArgumentError(f"Unknown bench stage {name!r}; choose from {', '.join(STAGES)}")
