"""Dataset and record files written and read back."""

import pytest

from cli.storage import (
    COUNTS_FILE,
    MANIFEST_COLUMN,
    RECORDS_FILE,
    VALIDATION_FILE,
    append_records,
    read_dataset,
    read_records,
    read_truth,
    write_dataset,
)
from integrated_abundance.diagnostics import PosteriorSummary
from integrated_abundance.exceptions import DatasetError, StorageError
from integrated_abundance.models import AbundanceKind
from integrated_abundance.simulator import simulate
from integrated_abundance.study import FitRecord

pytestmark = pytest.mark.integration


class TestDatasetFiles:
    """Test the CSV dataset layout."""

    def test_round_trip_digest(self, tmp_path, small_spec):
        """Test that a re-read dataset has the same digest, with masked cells and a covariate."""
        spec = small_spec.model_copy(update={"recording_coverage": 0.7, "abundance_kind": AbundanceKind.LOG_LINEAR})
        dataset, truth = simulate(spec)
        assert dataset.acoustic.missing_mask.any()

        write_dataset(tmp_path, dataset, truth)
        restored = read_dataset(tmp_path, "ACV")
        assert restored.digest() == dataset.digest()
        assert (restored.acoustic.missing_mask == dataset.acoustic.missing_mask).all()
        assert read_truth(tmp_path)["seed"] == spec.seed

    def test_variant_needs_file(self, tmp_path, small_spec):
        """Test that AV without validation.csv names the missing file."""
        dataset, truth = simulate(small_spec)
        write_dataset(tmp_path, dataset, truth)
        (tmp_path / VALIDATION_FILE).unlink()
        with pytest.raises(DatasetError, match="file=validation.csv"):
            read_dataset(tmp_path, "AV")
        assert read_dataset(tmp_path, "AC").validation is None

    def test_malformed_row(self, tmp_path, small_spec):
        """Test that a bad cell is reported with file, row and field."""
        dataset, _ = simulate(small_spec)
        write_dataset(tmp_path, dataset)
        lines = (tmp_path / COUNTS_FILE).read_text().splitlines()
        site, visit, _ = lines[3].split(",")
        lines[3] = f"{site},{visit},many"
        (tmp_path / COUNTS_FILE).write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError) as excinfo:
            read_dataset(tmp_path, "C")
        message = str(excinfo.value)
        assert "file=counts.csv" in message
        assert "row=4" in message
        assert "field=c" in message

    def test_negative_count(self, tmp_path, small_spec):
        """Test that an invariant violation is pinned to its file row."""
        dataset, _ = simulate(small_spec)
        write_dataset(tmp_path, dataset)
        lines = (tmp_path / COUNTS_FILE).read_text().splitlines()
        site, visit, _ = lines[2].split(",")
        lines[2] = f"{site},{visit},-1"
        (tmp_path / COUNTS_FILE).write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="file=counts.csv"):
            read_dataset(tmp_path, "C")


class TestRecordJournal:
    """Test the append-only fit journal."""

    def _record(self, replicate: int) -> FitRecord:
        summary = PosteriorSummary("lambda", 0.6, 0.3, 0.9, 0.6, 1.01, 800.0)
        return FitRecord(
            study="grid", scenario="grid:0", scenario_index=0, variant="AC", replicate=replicate,
            point_counts=50, dataset_digest="abc", fit_seed=7, converged=True,
            summaries={"lambda": summary}, truth={"lambda": 0.5}, wall_time=0.1,
        )

    def test_append_and_read(self, tmp_path):
        """Test that appended batches read back in order."""
        path = tmp_path / RECORDS_FILE
        append_records(path, [self._record(0)])
        append_records(path, [self._record(1), self._record(2)])
        assert [r.replicate for r in read_records(path)] == [0, 1, 2]

    def test_missing_journal(self, tmp_path):
        """Test that an absent journal is empty."""
        assert read_records(tmp_path / RECORDS_FILE) == []

    def test_malformed_line(self, tmp_path):
        """Test that a corrupt line names its row."""
        path = tmp_path / RECORDS_FILE
        append_records(path, [self._record(0)])
        with open(path, "a", encoding="utf-8") as f:
            f.write("{not json\n")
        with pytest.raises(StorageError, match="row=2"):
            read_records(path)

    def test_stamped_journal_reads_back(self, tmp_path):
        """Test that manifest stamps on journal lines are ignored by the reader."""
        path = tmp_path / RECORDS_FILE
        append_records(path, [self._record(0)], manifest_digest="f" * 64)
        append_records(path, [self._record(1)])
        assert '"manifest_digest": "' + "f" * 64 in path.read_text().splitlines()[0]
        assert [r.replicate for r in read_records(path)] == [0, 1]


class TestManifestStamp:
    """Test that written files can carry a manifest digest."""

    def test_dataset_stamped(self, tmp_path, small_spec):
        """Test the extra column and key, and that readers ignore them."""
        dataset, truth = simulate(small_spec)
        write_dataset(tmp_path, dataset, truth, manifest_digest="0a" * 32)
        header = (tmp_path / COUNTS_FILE).read_text().splitlines()[0]
        assert header == f"site,visit,c,{MANIFEST_COLUMN}"
        assert read_truth(tmp_path)[MANIFEST_COLUMN] == "0a" * 32
        assert read_dataset(tmp_path, "ACV").digest() == dataset.digest()

    def test_unstamped_by_default(self, tmp_path, small_spec):
        """Test that library callers get plain files."""
        dataset, truth = simulate(small_spec)
        write_dataset(tmp_path, dataset, truth)
        assert MANIFEST_COLUMN not in (tmp_path / COUNTS_FILE).read_text().splitlines()[0]
        assert MANIFEST_COLUMN not in read_truth(tmp_path)
