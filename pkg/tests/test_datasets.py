"""
Tests for annotation parsing, filtering, downsampling and split assembly.
"""

import math

import pytest

from omniview.datasets import (
    AnnotatedImage,
    DatasetManifest,
    ManifestEntry,
    SourceTag,
    View,
    assemble_split,
    bundled_manifest,
    downsample_sequence,
    filter_class,
    load_source,
    manifest_stats,
    parse_voc_annotation,
    read_dataset,
    write_dataset,
)
from omniview.errors import AnnotationParseError, ArgumentError, AssemblyError, SchemaError
from omniview.geometry import BoundingBox

VOC_XML = b"""<annotation>
  <folder>VOC2007</folder>
  <filename>000005.jpg</filename>
  <size><width>500</width><height>375</height><depth>3</depth></size>
  <object>
    <name>person</name>
    <difficult>0</difficult>
    <bndbox><xmin>48</xmin><ymin>240</ymin><xmax>195</xmax><ymax>371</ymax></bndbox>
  </object>
  <object>
    <name>dog</name>
    <bndbox><xmin>8</xmin><ymin>12</ymin><xmax>352</xmax><ymax>298</ymax></bndbox>
  </object>
  <object>
    <name>person</name>
    <difficult>1</difficult>
    <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>20</xmax><ymax>30</ymax></bndbox>
  </object>
</annotation>
"""


def make_image(source: SourceTag, index: int, n_boxes: int = 1) -> AnnotatedImage:
    return AnnotatedImage(
        image_id=f"{source.value}-{index:05d}",
        file_path=f"{source.value}/{index:05d}.jpg",
        width=640,
        height=640,
        source=source,
        sequence_index=index,
        boxes=[[10.0, 10.0, 50.0, 90.0]] * n_boxes,
    )


def make_source(source: SourceTag, count: int):
    return [make_image(source, i) for i in range(count)]


class TestParseVocAnnotation:
    def test_person_box_normalized(self):
        image = parse_voc_annotation(VOC_XML, "person")
        assert image.image_id == "000005"
        assert (image.width, image.height) == (500, 375)
        assert image.boxes[0] == BoundingBox(47, 239, 195, 371)

    def test_other_classes_dropped(self):
        image = parse_voc_annotation(VOC_XML, "person")
        assert len(image.boxes) == 2
        assert image.difficult == (False, True)

    def test_filter_other_class(self):
        image = parse_voc_annotation(VOC_XML, "dog")
        assert image.boxes == (BoundingBox(7, 11, 352, 298),)

    def test_no_matching_objects(self):
        assert parse_voc_annotation(VOC_XML, "cat").boxes == ()

    def test_omnidirectional_sources_are_continuous(self):
        image = parse_voc_annotation(VOC_XML, "person", source=SourceTag.BOMNI)
        assert image.boxes[0] == BoundingBox(48, 240, 195, 371)
        assert image.source is SourceTag.BOMNI

    def test_malformed_xml_has_position(self):
        with pytest.raises(AnnotationParseError) as excinfo:
            parse_voc_annotation(b"<annotation>\n<size>\n</annotation>", "person")
        assert excinfo.value.line == 3

    def test_missing_size(self):
        with pytest.raises(SchemaError):
            parse_voc_annotation(b"<annotation><filename>a.jpg</filename></annotation>", "person")

    def test_inverted_box_names_object(self):
        xml = VOC_XML.replace(b"<xmin>48</xmin>", b"<xmin>300</xmin>")
        with pytest.raises(SchemaError, match="object 0"):
            parse_voc_annotation(xml, "person")


class TestSourceTag:
    def test_views(self):
        omni = {t for t in SourceTag if t.view is View.OMNIDIRECTIONAL}
        assert omni == {SourceTag.HDA_CAM02, SourceTag.PIROPO_TRAIN, SourceTag.BOMNI, SourceTag.DST}


class TestFilterClass:
    def test_keep_nonempty(self):
        images = [make_image(SourceTag.HDA_CAM02, i, n) for i, n in enumerate([2, 0, 1])]
        assert len(filter_class(images, keep_nonempty=True)) == 2
        assert len(filter_class(images, keep_nonempty=False)) == 3

    def test_empty(self):
        assert filter_class([], keep_nonempty=True) == []


class TestDownsampleSequence:
    @pytest.mark.parametrize("n, factor, expected", [(100, 5, 20), (101, 10, 11), (7, 1, 7)])
    def test_lengths(self, n, factor, expected):
        frames = list(range(n))
        out = downsample_sequence(frames, factor)
        assert len(out) == expected == math.ceil(n / factor)
        assert out == frames[::factor]

    def test_identity(self):
        assert downsample_sequence([3, 1, 2], 1) == [3, 1, 2]

    @pytest.mark.parametrize("factor", [0, -2])
    def test_invalid_factor(self, factor):
        with pytest.raises(ArgumentError):
            downsample_sequence([1, 2, 3], factor)


class TestAssembleSplit:
    def test_train_voc_total(self):
        result = assemble_split(
            bundled_manifest("train_voc"),
            {
                SourceTag.VOC07: make_source(SourceTag.VOC07, 4192),
                SourceTag.VOC12_TRAIN: make_source(SourceTag.VOC12_TRAIN, 9583),
            },
        )
        assert result.total == 13775
        assert len(result.images) == 13775
        assert result.stats.mismatches == []

    def test_test_db_total(self):
        result = assemble_split(
            bundled_manifest("test_db"),
            {
                SourceTag.BOMNI: make_source(SourceTag.BOMNI, 1034),
                SourceTag.DST: make_source(SourceTag.DST, 400 + 301),
            },
        )
        assert result.total == 1735
        assert result.total == sum(c.count for c in result.counts)

    def test_empty_manifest(self):
        result = assemble_split(DatasetManifest(split_name="custom"), {})
        assert result.images == []
        assert result.counts == []
        assert result.total == 0

    def test_missing_source_names_tag(self):
        with pytest.raises(AssemblyError, match="VOC12train"):
            assemble_split(bundled_manifest("train_voc"), {SourceTag.VOC07: []})

    def test_downsample_then_drop_empty(self):
        manifest = DatasetManifest(
            split_name="custom",
            entries=[ManifestEntry(source=SourceTag.HDA_CAM02, downsample_factor=2)],
        )
        frames = [make_image(SourceTag.HDA_CAM02, i, n) for i, n in enumerate([1, 1, 0, 1, 1, 0])]
        result = assemble_split(manifest, {SourceTag.HDA_CAM02: frames})
        assert [img.sequence_index for img in result.images] == [0, 4]

    def test_duplicate_ids_across_sources(self):
        manifest = DatasetManifest(
            split_name="test_db",
            entries=[ManifestEntry(source=SourceTag.BOMNI), ManifestEntry(source=SourceTag.DST)],
        )
        sources = {
            tag: [make_image(tag, 1).model_copy(update={"image_id": "frame0001"})]
            for tag in (SourceTag.BOMNI, SourceTag.DST)
        }
        with pytest.raises(AssemblyError, match="frame0001"):
            assemble_split(manifest, sources)

    def test_duplicate_source_rejected(self):
        with pytest.raises(ValueError):
            DatasetManifest(
                split_name="dup",
                entries=[ManifestEntry(source=SourceTag.DST), ManifestEntry(source=SourceTag.DST)],
            )


class TestManifestStats:
    def test_train_hp_reports_mismatch(self):
        stats = manifest_stats(
            bundled_manifest("train_hp"), {SourceTag.HDA_CAM02: 1388, SourceTag.PIROPO_TRAIN: 7229}
        )
        assert stats.total == 8617
        assert stats.expected_total == 8567
        assert any("8567" in m for m in stats.mismatches)

    def test_train_hpv07_reports_mismatch(self):
        stats = manifest_stats(
            bundled_manifest("train_hpv07"),
            {SourceTag.VOC07: 4192, SourceTag.HDA_CAM02: 1388, SourceTag.PIROPO_TRAIN: 7229},
        )
        assert stats.total == 12809
        assert stats.expected_total == 12759
        assert len(stats.mismatches) == 1

    def test_single_source(self):
        manifest = DatasetManifest(split_name="one", entries=[ManifestEntry(source=SourceTag.DST)])
        assert manifest_stats(manifest, {SourceTag.DST: 301}).total == 301

    def test_counts_match_assembly(self):
        manifest = DatasetManifest(
            split_name="custom",
            entries=[ManifestEntry(source=SourceTag.PIROPO_TRAIN, downsample_factor=5)],
        )
        frames = make_source(SourceTag.PIROPO_TRAIN, 103)
        assert manifest_stats(manifest, {SourceTag.PIROPO_TRAIN: frames}).total == 21
        assert assemble_split(manifest, {SourceTag.PIROPO_TRAIN: frames}).total == 21


class TestDatasetFiles:
    def test_record_round_trip(self, tmp_path):
        images = [parse_voc_annotation(VOC_XML, "person"), make_image(SourceTag.DST, 3, 0)]
        path = write_dataset(tmp_path / "data.jsonl", images)
        assert read_dataset(path) == images

    def test_duplicate_ids_rejected_on_read(self, tmp_path):
        images = [make_image(SourceTag.DST, 0), make_image(SourceTag.DST, 0)]
        path = write_dataset(tmp_path / "dup.jsonl", images)
        with pytest.raises(SchemaError, match="DST-00000"):
            read_dataset(path)

    def test_record_schema_error(self):
        record = make_image(SourceTag.DST, 0).to_record()
        record["boxes"] = [[0, 0, 700, 10]]
        with pytest.raises(SchemaError):
            AnnotatedImage.from_record(record)

    def test_load_source_from_xml_dir(self, tmp_path):
        (tmp_path / "b.xml").write_bytes(VOC_XML.replace(b"000005", b"000007"))
        (tmp_path / "a.xml").write_bytes(VOC_XML)
        images = load_source(tmp_path, SourceTag.VOC07)
        assert [img.image_id for img in images] == ["000005", "000007"]

    def test_load_source_checks_tag(self, tmp_path):
        path = write_dataset(tmp_path / "dst.jsonl", [make_image(SourceTag.DST, 0)])
        with pytest.raises(SchemaError):
            load_source(path, SourceTag.BOMNI)

    def test_load_source_missing_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_source(tmp_path / "nope", SourceTag.DST)
