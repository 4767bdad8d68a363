"""Tests for sequence files, manifests and the gallery/probe split."""

import json

import numpy as np
import pytest

from gait_koopman.data.sequence_files import (
    MANIFEST_NAME,
    load_dataset,
    read_manifest,
    read_sequence,
    save_dataset,
    split_gallery_probe,
    write_sequence,
)
from gait_koopman.errors import ParseError


class TestSequenceFiles:
    """Test write_sequence / read_sequence."""

    def test_bitwise_round_trip(self, tmp_path, small_population):
        """Test values, label, shape and id survive a write and read."""
        item = small_population.items[0]
        path = tmp_path / "walk.csv"
        write_sequence(path, item.sequence, item.shape, item.label)
        loaded = read_sequence(path)
        assert np.array_equal(loaded.sequence.angles, item.sequence.angles)
        assert np.array_equal(loaded.shape.coefficients, item.shape.coefficients)
        assert loaded.label == item.label
        assert loaded.sequence.frame_rate == item.sequence.frame_rate
        assert loaded.sequence_id == "walk"

    def test_truncated_file_names_missing_rows(self, tmp_path, small_population):
        """Test a file cut short reports the missing rows."""
        item = small_population.items[0]
        path = tmp_path / "walk.csv"
        write_sequence(path, item.sequence, item.shape, item.label)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(ParseError) as exc_info:
            read_sequence(path)

        assert "rows 14..16 are missing" in str(exc_info.value)
        assert exc_info.value.line is not None

    def test_version_mismatch(self, tmp_path, small_population):
        """Test an unknown format line is rejected at line 1."""
        item = small_population.items[0]
        path = tmp_path / "walk.csv"
        write_sequence(path, item.sequence, item.shape, item.label)
        path.write_text(path.read_text().replace("v1", "v9", 1))
        with pytest.raises(ParseError) as exc_info:
            read_sequence(path)

        assert exc_info.value.line == 1

    def test_non_finite_value_reports_line(self, tmp_path, small_population):
        """Test a NaN entry names its line."""
        item = small_population.items[0]
        path = tmp_path / "walk.csv"
        write_sequence(path, item.sequence, item.shape, item.label)
        lines = path.read_text().splitlines()
        cells = lines[8].split(",")
        cells[4] = "nan"
        lines[8] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as exc_info:
            read_sequence(path)

        assert exc_info.value.line == 9

    def test_label_with_newline_rejected(self, tmp_path, small_population):
        """Test labels cannot break the header."""
        item = small_population.items[0]
        with pytest.raises(ValueError):
            write_sequence(tmp_path / "x.csv", item.sequence, item.shape, "a\nb")


class TestSplitGalleryProbe:
    """Test split_gallery_probe."""

    def test_first_sequences_form_gallery(self, small_population):
        """Test the first k sequences per identity are gallery."""
        gallery, probes = split_gallery_probe(small_population.items, gallery_per_identity=2)
        assert len(gallery) == 6
        assert [p.sequence_id for p in probes] == [
            "subject_000_seq02",
            "subject_001_seq02",
            "subject_002_seq02",
        ]

    def test_invalid_count(self, small_population):
        """Test at least one gallery sequence is required."""
        with pytest.raises(ValueError):
            split_gallery_probe(small_population.items, gallery_per_identity=0)


class TestDataset:
    """Test save_dataset / load_dataset."""

    def test_round_trip(self, tmp_path, small_population):
        """Test a saved dataset loads back with the same split."""
        manifest_path = save_dataset(tmp_path, small_population.items, gallery_per_identity=2, metadata={"seed": 0})
        assert manifest_path.name == MANIFEST_NAME
        assert len(list(tmp_path.glob("*.csv"))) == 9

        manifest = read_manifest(tmp_path)
        assert manifest.metadata == {"gallery_per_identity": 2, "seed": 0}
        assert len(manifest.files("gallery")) == 6

        gallery, probes = load_dataset(tmp_path)
        assert len(gallery) == 6 and len(probes) == 3
        assert np.array_equal(gallery[0].sequence.angles, small_population.items[0].sequence.angles)

    def test_manifest_is_deterministic(self, tmp_path, small_population):
        """Test saving twice writes the same manifest bytes."""
        save_dataset(tmp_path / "a", small_population.items)
        save_dataset(tmp_path / "b", small_population.items)
        assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()

    def test_wrong_manifest_format(self, tmp_path):
        """Test an unknown manifest format is rejected."""
        (tmp_path / MANIFEST_NAME).write_text(json.dumps({"format": "other", "sequences": []}))
        with pytest.raises(ParseError):
            read_manifest(tmp_path)

    def test_label_disagreement(self, tmp_path, small_population):
        """Test a manifest label that disagrees with the file is rejected."""
        save_dataset(tmp_path, small_population.items[:4])
        path = tmp_path / MANIFEST_NAME
        data = json.loads(path.read_text())
        data["sequences"][0]["label"] = "someone_else"
        path.write_text(json.dumps(data))
        with pytest.raises(ParseError):
            load_dataset(tmp_path)
