"""
Dataset-level batch processing: augmentation, fisheye synthesis and
four-point warps over a canonical dataset file, one image per worker task.

Work is fanned out to threads under a semaphore and gathered in input order,
so the written dataset does not depend on scheduling.
"""

import asyncio
import logging
import os
import re
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Awaitable, Callable, Dict, Iterator, List, Optional, Sequence, TypeVar

import numpy as np

from .augment import AugmentPolicy, augment_record_pixels
from .datasets import AnnotatedImage, check_unique_ids, write_dataset
from .errors import ArgumentError
from .fisheye import (
    DEFAULT_SAMPLES_PER_EDGE,
    CameraPose,
    FisheyeModel,
    PinholeIntrinsics,
    QuadTransform,
    warp_quad_with_indices,
    warp_with_indices,
)
from .geometry import ImageDims
from .images import read_image, write_png
from .utils import PathLike, atomic_write_json, derive_stream_id

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DATASET_FILE = "dataset.jsonl"
IMAGE_DIR = "images"

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


async def gather_ordered(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Run `func` over items in worker threads, at most `workers` at a time."""
    if workers < 1:
        raise ArgumentError(f"workers must be at least 1, got {workers}")
    semaphore = asyncio.Semaphore(workers)

    async def run_one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    tasks: List[Awaitable[R]] = [run_one(item) for item in items]
    return list(await asyncio.gather(*tasks))


def run_per_image(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Blocking wrapper around `gather_ordered`."""
    return asyncio.run(gather_ordered(func, items, workers))


def image_file_name(image_id: str) -> str:
    """
    File name for an image id, safe on every filesystem.

    The sanitized id is suffixed with a hash of the raw id, so ids that
    sanitize alike (`seq/1`, `seq_1`) still get distinct files.
    """
    return f"{_UNSAFE.sub('_', image_id)}-{derive_stream_id(image_id) >> 32:08x}.png"


def output_names(images: Sequence[AnnotatedImage]) -> Dict[str, str]:
    """
    Relative output path of every image, keyed by image id.

    Raises:
        SchemaError: If two images share an id
        ArgumentError: If two ids map to the same file name
    """
    check_unique_ids(images)
    names = {img.image_id: f"{IMAGE_DIR}/{image_file_name(img.image_id)}" for img in images}
    if len(set(names.values())) != len(names):
        raise ArgumentError("Image ids map to colliding output file names")
    return names


@contextmanager
def staged_output(output_dir: PathLike) -> Iterator[Path]:
    """
    Staging directory inside `output_dir` whose files move into place on success.

    On any error the staged files are deleted and `output_dir` keeps its
    previous content.
    """
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield staging
        for path in sorted(staging.rglob("*")):
            if path.is_file():
                target = out_dir / path.relative_to(staging)
                target.parent.mkdir(parents=True, exist_ok=True)
                os.replace(path, target)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def resolve_image_path(image: AnnotatedImage, image_root: Optional[PathLike]) -> Path:
    path = Path(image.file_path)
    if path.is_absolute() or image_root is None:
        return path
    return Path(image_root) / path


def augment_dataset(
    images: Sequence[AnnotatedImage],
    output_dir: PathLike,
    policy: AugmentPolicy,
    seed: int,
    image_root: Optional[PathLike] = None,
    workers: int = 4,
) -> List[AnnotatedImage]:
    """
    Augment every image of a dataset and write PNGs plus a dataset file.

    Each image draws its chain from a stream derived from its id. The applied
    chains are written next to the dataset file as `chains.json`. Nothing is
    written when any image fails.

    Returns:
        The augmented dataset records, in input order
    """
    out_dir = Path(output_dir)
    names = output_names(images)

    logger.info(f"Augmenting {len(images)} images with {workers} workers (seed {seed})")
    with staged_output(out_dir) as staging:

        def work(image: AnnotatedImage):
            pixels = read_image(resolve_image_path(image, image_root))
            out, boxes, difficult, chain = augment_record_pixels(
                pixels, image.boxes, image.difficult, policy, seed, image.image_id
            )
            write_png(staging / names[image.image_id], out)
            dims = ImageDims.of(out)
            record = image.model_copy(
                update={
                    "file_path": names[image.image_id],
                    "width": dims.width,
                    "height": dims.height,
                    "boxes": tuple(boxes),
                    "difficult": tuple(difficult),
                }
            )
            return record, chain

        results = run_per_image(work, images, workers)

    records = [record for record, _ in results]
    write_dataset(out_dir / DATASET_FILE, records)
    atomic_write_json(
        out_dir / "chains.json",
        {record.image_id: chain.to_dict() for record, chain in results},
    )
    return records


def synthesize_dataset(
    images: Sequence[AnnotatedImage],
    output_dir: PathLike,
    model: FisheyeModel,
    pose: CameraPose,
    source_focal: Optional[float] = None,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
    image_root: Optional[PathLike] = None,
    workers: int = 4,
) -> List[AnnotatedImage]:
    """
    Render every perspective image of a dataset through a virtual fisheye camera.

    The source camera is centered on each image; without `source_focal` its
    focal length is half the image width (90 degree horizontal field of view).
    Boxes that do not land in the fisheye image are dropped.
    """
    out_dir = Path(output_dir)
    names = output_names(images)

    logger.info(f"Synthesizing {len(images)} fisheye images with {workers} workers")
    with staged_output(out_dir) as staging:

        def work(image: AnnotatedImage) -> AnnotatedImage:
            pixels = read_image(resolve_image_path(image, image_root))
            dims = ImageDims.of(pixels)
            src = PinholeIntrinsics(
                source_focal or dims.width / 2.0, dims.width / 2.0, dims.height / 2.0
            )
            out, kept = warp_with_indices(pixels, image.boxes, src, pose, model, samples_per_edge)
            write_png(staging / names[image.image_id], out)
            return image.model_copy(
                update={
                    "file_path": names[image.image_id],
                    "width": model.dims.width,
                    "height": model.dims.height,
                    "boxes": tuple(box for _, box in kept),
                    "difficult": tuple(image.difficult[i] for i, _ in kept),
                }
            )

        records = run_per_image(work, images, workers)

    write_dataset(out_dir / DATASET_FILE, records)
    return records


def quad_dataset(
    images: Sequence[AnnotatedImage],
    output_dir: PathLike,
    corners: Sequence[Sequence[float]],
    out_dims: Optional[ImageDims] = None,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
    image_root: Optional[PathLike] = None,
    workers: int = 4,
) -> List[AnnotatedImage]:
    """
    Apply a four-point warp to every image of a dataset.

    The image corners (top-left, top-right, bottom-right, bottom-left) move to
    `corners`, given as fractions of the output width and height. The output
    keeps each image's size unless `out_dims` is given.

    Raises:
        ArgumentError: If `corners` is not four (x, y) pairs or the quad is degenerate
    """
    fractions = np.asarray(corners, dtype=np.float64)
    if fractions.shape != (4, 2):
        raise ArgumentError(f"Expected four (x, y) corner fractions, got shape {fractions.shape}")
    out_dir = Path(output_dir)
    names = output_names(images)

    logger.info(f"Warping {len(images)} images with a four-point transform, {workers} workers")
    with staged_output(out_dir) as staging:

        def work(image: AnnotatedImage) -> AnnotatedImage:
            pixels = read_image(resolve_image_path(image, image_root))
            dims = out_dims or ImageDims.of(pixels)
            quad = QuadTransform(
                QuadTransform.identity(ImageDims.of(pixels)).src,
                fractions * np.array([dims.width, dims.height], dtype=np.float64),
            )
            out, kept = warp_quad_with_indices(pixels, image.boxes, quad, dims, samples_per_edge)
            write_png(staging / names[image.image_id], out)
            return image.model_copy(
                update={
                    "file_path": names[image.image_id],
                    "width": dims.width,
                    "height": dims.height,
                    "boxes": tuple(box for _, box in kept),
                    "difficult": tuple(image.difficult[i] for i, _ in kept),
                }
            )

        records = run_per_image(work, images, workers)

    write_dataset(out_dir / DATASET_FILE, records)
    return records
