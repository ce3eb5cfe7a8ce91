"""
Annotation ingestion, class filtering, sequence downsampling and split assembly.

The canonical dataset file holds one JSON record per line:
{image_id, file_path, width, height, source, sequence_index,
 boxes: [[x_min, y_min, x_max, y_max], ...], difficult: [bool, ...]}
"""

import logging
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)

from .errors import AnnotationParseError, ArgumentError, AssemblyError, OmniviewError, SchemaError
from .geometry import BoundingBox, ImageDims
from .utils import PathLike, iter_jsonl, load_json, package_data_path, write_jsonl

logger = logging.getLogger(__name__)

BUNDLED_SPLITS = ("train_voc", "train_hp", "train_hpv07", "test_db")


class View(str, Enum):
    PERSPECTIVE = "perspective"
    OMNIDIRECTIONAL = "omnidirectional"


class SourceTag(str, Enum):
    """Annotation sources that can be combined into splits."""

    VOC07 = "VOC07"
    VOC12_TRAIN = "VOC12train"
    HDA_CAM02 = "HDA_Cam02"
    PIROPO_TRAIN = "PIROPO_train"
    BOMNI = "Bomni"
    DST = "DST"

    @property
    def view(self) -> View:
        if self in (SourceTag.VOC07, SourceTag.VOC12_TRAIN):
            return View.PERSPECTIVE
        return View.OMNIDIRECTIONAL

    @property
    def drops_empty_frames(self) -> bool:
        """Default for excluding frames without objects (only HDA Cam 02)."""
        return self is SourceTag.HDA_CAM02


class AnnotatedImage(BaseModel):
    """Image reference plus its ground-truth person boxes."""

    model_config = ConfigDict(frozen=True)

    image_id: str = Field(min_length=1)
    file_path: str
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    source: SourceTag
    sequence_index: Optional[int] = Field(default=None, ge=0)
    boxes: Tuple[BoundingBox, ...] = ()
    difficult: Tuple[bool, ...] = ()

    @field_validator("boxes", mode="before")
    @classmethod
    def _coerce_boxes(cls, value: Any) -> Tuple[BoundingBox, ...]:
        out = []
        for item in value or ():
            if isinstance(item, BoundingBox):
                out.append(item)
            elif isinstance(item, Mapping):
                out.append(BoundingBox(**{k: float(v) for k, v in item.items()}))
            else:
                out.append(BoundingBox.from_sequence(item))
        return tuple(out)

    @model_validator(mode="before")
    @classmethod
    def _default_difficult(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("difficult"):
            data = dict(data)
            data["difficult"] = [False] * len(data.get("boxes") or ())
        return data

    @model_validator(mode="after")
    def _check_boxes(self) -> "AnnotatedImage":
        if len(self.difficult) != len(self.boxes):
            raise ValueError(
                f"{self.image_id}: {len(self.difficult)} difficult flags for {len(self.boxes)} boxes"
            )
        dims = self.dims
        for i, box in enumerate(self.boxes):
            if not box.within(dims):
                raise ValueError(
                    f"{self.image_id}: box {i} {box.as_list()} outside {self.width}x{self.height}"
                )
        return self

    @field_serializer("boxes")
    def _serialize_boxes(self, boxes: Tuple[BoundingBox, ...]) -> List[List[float]]:
        return [b.as_list() for b in boxes]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.width, self.height)

    def to_record(self) -> Dict[str, Any]:
        """Canonical JSON-lines record."""
        return self.model_dump(mode="json")

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "AnnotatedImage":
        """
        Build from a canonical record.

        Raises:
            SchemaError: If the record does not validate
        """
        try:
            return cls.model_validate(dict(record))
        except (ValidationError, ArgumentError) as e:
            raise SchemaError(f"Invalid dataset record {record.get('image_id', '?')!r}: {e}")


class ManifestEntry(BaseModel):
    """One source contributing to a split."""

    source: SourceTag
    downsample_factor: int = Field(default=1, ge=1)
    expected_count: Optional[int] = Field(default=None, ge=0)
    keep_nonempty: Optional[bool] = Field(
        default=None, description="Exclude frames without objects; defaults per source"
    )

    @property
    def drops_empty(self) -> bool:
        if self.keep_nonempty is None:
            return self.source.drops_empty_frames
        return self.keep_nonempty


class DatasetManifest(BaseModel):
    """Declarative recipe combining sources into a split."""

    split_name: str = Field(min_length=1)
    entries: List[ManifestEntry] = Field(default_factory=list)
    expected_total: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _unique_sources(self) -> "DatasetManifest":
        seen = set()
        for entry in self.entries:
            if entry.source in seen:
                raise ValueError(f"Duplicate source {entry.source.value} in manifest {self.split_name}")
            seen.add(entry.source)
        return self


class SourceCount(BaseModel):
    """Per-source line of a split summary."""

    source: SourceTag
    input_count: int
    count: int
    expected_count: Optional[int] = None


class ManifestStats(BaseModel):
    """Per-source and total counts of an assembled split."""

    split_name: str
    counts: List[SourceCount]
    total: int
    expected_total: Optional[int] = None
    mismatches: List[str] = Field(default_factory=list)


@dataclass
class AssemblyResult:
    """Images of an assembled split together with its summary."""

    images: List[AnnotatedImage]
    stats: ManifestStats

    @property
    def counts(self) -> List[SourceCount]:
        return self.stats.counts

    @property
    def total(self) -> int:
        return self.stats.total


def _child_text(elem: ET.Element, tag: str) -> Optional[str]:
    child = elem.find(tag)
    if child is None or child.text is None:
        return None
    return child.text.strip()


def _number(elem: ET.Element, tag: str, what: str) -> float:
    text = _child_text(elem, tag)
    if text is None:
        raise SchemaError(f"{what}: missing <{tag}>")
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"{what}: <{tag}> is not a number: {text!r}")


def parse_voc_annotation(
    xml: bytes,
    class_filter: str = "person",
    *,
    source: SourceTag = SourceTag.VOC07,
    image_root: str = "",
    inclusive_pixels: Optional[bool] = None,
    image_id: Optional[str] = None,
    sequence_index: Optional[int] = None,
) -> AnnotatedImage:
    """
    Parse a VOC-style XML annotation into an AnnotatedImage.

    Only objects whose name equals `class_filter` are kept. Inclusive pixel
    indices (classic VOC, the default for perspective sources) are converted to
    continuous coordinates by shifting the minima by -1; boxes are then clamped
    to the image.

    Args:
        xml: Raw annotation document
        class_filter: Object name to keep
        source: Source the annotation belongs to
        image_root: Directory prefix for the image file path
        inclusive_pixels: Override the per-source coordinate convention
        image_id: Override the id derived from <filename>
        sequence_index: Frame position within its sequence

    Raises:
        AnnotationParseError: Malformed XML
        SchemaError: Missing size element or inconsistent box
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as e:
        line, column = e.position
        raise AnnotationParseError(f"Malformed annotation XML: {getattr(e, 'msg', e)}", line, column)

    size = root.find("size")
    if size is None:
        raise SchemaError("Annotation has no <size> element")
    width = _number(size, "width", "size")
    height = _number(size, "height", "size")
    if width <= 0 or height <= 0 or width != int(width) or height != int(height):
        raise SchemaError(f"size: invalid image size {width}x{height}")
    dims = ImageDims(int(width), int(height))

    filename = _child_text(root, "filename")
    if image_id is None:
        if not filename:
            raise SchemaError("Annotation has no <filename> and no image id was given")
        image_id = Path(filename).stem
    file_name = filename or f"{image_id}.jpg"
    file_path = str(Path(image_root) / file_name) if image_root else file_name

    if inclusive_pixels is None:
        inclusive_pixels = source.view is View.PERSPECTIVE
    shift = 1.0 if inclusive_pixels else 0.0

    boxes: List[BoundingBox] = []
    difficult: List[bool] = []
    for index, obj in enumerate(root.findall("object")):
        if (_child_text(obj, "name") or "") != class_filter:
            continue
        what = f"object {index}"
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise SchemaError(f"{what}: missing <bndbox>")
        x_min = _number(bndbox, "xmin", what)
        y_min = _number(bndbox, "ymin", what)
        x_max = _number(bndbox, "xmax", what)
        y_max = _number(bndbox, "ymax", what)
        if x_min > x_max or y_min > y_max:
            raise SchemaError(
                f"{what}: box minimum exceeds maximum ({x_min}, {y_min}, {x_max}, {y_max})"
            )
        box = BoundingBox(x_min - shift, y_min - shift, x_max, y_max).clip(dims)
        boxes.append(box)
        difficult.append((_child_text(obj, "difficult") or "0") == "1")

    return AnnotatedImage(
        image_id=image_id,
        file_path=file_path,
        width=dims.width,
        height=dims.height,
        source=source,
        sequence_index=sequence_index,
        boxes=tuple(boxes),
        difficult=tuple(difficult),
    )


def filter_class(images: Sequence[AnnotatedImage], keep_nonempty: bool) -> List[AnnotatedImage]:
    """Drop images without boxes when `keep_nonempty` is set."""
    if not keep_nonempty:
        return list(images)
    return [img for img in images if img.boxes]


def _check_factor(factor: int) -> None:
    if isinstance(factor, bool) or not isinstance(factor, int) or factor < 1:
        raise ArgumentError(f"Downsample factor must be an integer >= 1, got {factor!r}")


def downsample_sequence(frames: Sequence[Any], factor: int) -> List[Any]:
    """Keep frames 0, factor, 2*factor, ... preserving order."""
    _check_factor(factor)
    return list(frames[::factor])


def _sort_key(image: AnnotatedImage) -> Tuple[int, str]:
    return (image.sequence_index if image.sequence_index is not None else 0, image.image_id)


SourceInput = Union[Sequence[AnnotatedImage], int]


def _entry_count(entry: ManifestEntry, frames: SourceInput) -> Tuple[int, int]:
    if isinstance(frames, int):
        # plain sizes describe frames that are already filtered
        return frames, -(-frames // entry.downsample_factor)
    kept = downsample_sequence(frames, entry.downsample_factor)
    if entry.drops_empty:
        return len(frames), sum(1 for img in kept if img.boxes)
    return len(frames), len(kept)


def _summarize(
    manifest: DatasetManifest, counts: List[SourceCount]
) -> ManifestStats:
    total = sum(c.count for c in counts)
    mismatches = []
    for c in counts:
        if c.expected_count is not None and c.expected_count != c.count:
            mismatches.append(
                f"{manifest.split_name}/{c.source.value}: assembled {c.count}, expected {c.expected_count}"
            )
    if manifest.expected_total is not None and manifest.expected_total != total:
        mismatches.append(
            f"{manifest.split_name}: assembled total {total}, expected {manifest.expected_total}"
        )
    for message in mismatches:
        logger.warning(f"Count mismatch - {message}")
    return ManifestStats(
        split_name=manifest.split_name,
        counts=counts,
        total=total,
        expected_total=manifest.expected_total,
        mismatches=mismatches,
    )


def check_unique_ids(
    images: Sequence[AnnotatedImage], error: Type[OmniviewError] = SchemaError, context: str = "Dataset"
) -> None:
    """
    Raise `error` when two images share an image id.

    Ids key ground truth, detections and output file names, so they must be
    unique within a dataset.
    """
    repeated = sorted(image_id for image_id, n in Counter(img.image_id for img in images).items() if n > 1)
    if repeated:
        shown = ", ".join(repeated[:5]) + (", ..." if len(repeated) > 5 else "")
        raise error(f"{context} has {len(repeated)} duplicate image ids: {shown}")


def _source_for(manifest: DatasetManifest, sources: Mapping[SourceTag, Any], tag: SourceTag) -> Any:
    if tag not in sources:
        raise AssemblyError(f"Manifest {manifest.split_name} needs source {tag.value}, which was not provided")
    return sources[tag]


def assemble_split(
    manifest: DatasetManifest, sources: Mapping[SourceTag, Sequence[AnnotatedImage]]
) -> AssemblyResult:
    """
    Concatenate the downsampled, filtered sources of a manifest.

    Each source is downsampled first (the stride runs over the raw sequence)
    and then filtered. Count mismatches are logged and reported, never raised.

    Raises:
        AssemblyError: If a manifest source is missing from `sources` or two
            kept images share an id
    """
    images: List[AnnotatedImage] = []
    counts: List[SourceCount] = []
    for entry in manifest.entries:
        frames = _source_for(manifest, sources, entry.source)
        kept = filter_class(downsample_sequence(frames, entry.downsample_factor), entry.drops_empty)
        images.extend(kept)
        counts.append(
            SourceCount(
                source=entry.source,
                input_count=len(frames),
                count=len(kept),
                expected_count=entry.expected_count,
            )
        )
        logger.info(f"{manifest.split_name}: {entry.source.value} contributes {len(kept)} of {len(frames)} images")
    check_unique_ids(images, AssemblyError, f"Split {manifest.split_name}")
    stats = _summarize(manifest, counts)
    return AssemblyResult(images=images, stats=stats)


def manifest_stats(manifest: DatasetManifest, sources: Mapping[SourceTag, SourceInput]) -> ManifestStats:
    """
    Per-source and total counts of a split without building it.

    `sources` maps each tag to its frames or, for prepared sources, to a plain
    image count.

    Raises:
        AssemblyError: If a manifest source is missing from `sources`
    """
    counts = []
    for entry in manifest.entries:
        input_count, count = _entry_count(entry, _source_for(manifest, sources, entry.source))
        counts.append(
            SourceCount(
                source=entry.source,
                input_count=input_count,
                count=count,
                expected_count=entry.expected_count,
            )
        )
    return _summarize(manifest, counts)


def read_dataset(path: PathLike) -> List[AnnotatedImage]:
    """
    Read a canonical dataset file.

    Raises:
        SchemaError: If a record is invalid or an image id repeats
    """
    images = [AnnotatedImage.from_record(r) for r in iter_jsonl(path)]
    check_unique_ids(images, SchemaError, str(path))
    return images


def write_dataset(path: PathLike, images: Sequence[AnnotatedImage]) -> Path:
    """Atomically write a canonical dataset file."""
    return write_jsonl(path, (img.to_record() for img in images))


def load_source(path: PathLike, tag: SourceTag, class_filter: str = "person") -> List[AnnotatedImage]:
    """
    Load one source from a directory of VOC XML files or a canonical dataset file.

    Records come back ordered by (sequence_index, image_id).

    Raises:
        FileNotFoundError: If the path does not exist
        SchemaError: If a dataset record belongs to another source
    """
    source_path = Path(path)
    if not source_path.exists():
        raise FileNotFoundError(f"Source path not found: {source_path}")

    if source_path.is_dir():
        xml_files = sorted(source_path.glob("*.xml"))
        logger.info(f"Parsing {len(xml_files)} annotation files for {tag.value} from {source_path}")
        images = []
        for xml_file in xml_files:
            try:
                images.append(parse_voc_annotation(xml_file.read_bytes(), class_filter, source=tag))
            except (AnnotationParseError, SchemaError) as e:
                raise type(e)(f"{xml_file}: {e}")
    else:
        images = read_dataset(source_path)
        for img in images:
            if img.source is not tag:
                raise SchemaError(
                    f"{source_path}: record {img.image_id} belongs to {img.source.value}, expected {tag.value}"
                )
    return sorted(images, key=_sort_key)


def load_manifest(path: PathLike) -> DatasetManifest:
    """
    Load a manifest JSON file.

    Raises:
        SchemaError: If the document is not a valid manifest
    """
    try:
        return DatasetManifest.model_validate(load_json(path))
    except ValidationError as e:
        raise SchemaError(f"Invalid manifest {path}: {e}")


def bundled_manifest(split_name: str) -> DatasetManifest:
    """One of the bundled split manifests (train_voc, train_hp, train_hpv07, test_db)."""
    if split_name not in BUNDLED_SPLITS:
        raise ArgumentError(f"No bundled manifest {split_name!r}; choose from {', '.join(BUNDLED_SPLITS)}")
    return load_manifest(package_data_path("manifests", f"{split_name}.json"))
