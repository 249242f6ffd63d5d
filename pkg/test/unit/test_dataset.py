"""Unit tests for dataset validation and restructuring."""

import numpy as np
import pytest

from integrated_abundance.dataset import subset_counts, validate_dataset, with_variant
from integrated_abundance.exceptions import DatasetError
from integrated_abundance.models import AcousticData, CountData, ModelVariant, SurveyDesign, ValidationData

pytestmark = pytest.mark.unit


class TestValidateDataset:
    """Test dataset invariants."""

    def test_valid(self, dataset):
        """Test that the fixture validates with every block active."""
        assert dataset.variant is ModelVariant.ACV
        assert dataset.active_blocks == ("acoustic", "validation", "counts")

    def test_vocalizations_without_detection(self, design, blocks):
        """Test that v > 0 needs y = 1."""
        _, _, counts = blocks
        acoustic = AcousticData.from_arrays(y=[[0, 0], [1, 1], [0, 0]], v=[[2, 0], [3, 8], [0, 0]])
        with pytest.raises(DatasetError, match="vocalizations without detection") as info:
            validate_dataset(design, acoustic, None, counts, ModelVariant.AC)
        assert info.value.cell == (0, 0)

    def test_binary_detections(self, design, blocks):
        """Test that detections are 0 or 1."""
        _, _, counts = blocks
        acoustic = AcousticData.from_arrays(y=[[2, 0], [1, 1], [0, 0]], v=[[5, 0], [3, 8], [0, 0]])
        with pytest.raises(DatasetError, match="detections must be 0 or 1"):
            validate_dataset(design, acoustic, None, counts, ModelVariant.AC)

    def test_validation_required(self, design, blocks):
        """Test that AV needs the validation block."""
        acoustic, _, _ = blocks
        with pytest.raises(DatasetError, match="variant AV requires validation block"):
            validate_dataset(design, acoustic, None, None, ModelVariant.AV)

    def test_counts_required(self, design, blocks):
        """Test that C needs point counts."""
        with pytest.raises(DatasetError, match="variant C requires counts block"):
            validate_dataset(design, None, None, None, ModelVariant.C)

    def test_confirmed_exceed_checked(self, design, blocks):
        """Test k <= n."""
        acoustic, _, counts = blocks
        validation = ValidationData.from_arrays(n=[[2, 0], [1, 2], [0, 0]], k=[[3, 0], [1, 2], [0, 0]])
        with pytest.raises(DatasetError, match="k > n"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV)

    def test_checked_exceed_vocalizations(self, design, blocks):
        """Test n <= v."""
        acoustic, _, counts = blocks
        validation = ValidationData.from_arrays(n=[[6, 0], [1, 2], [0, 0]], k=[[1, 0], [1, 2], [0, 0]])
        with pytest.raises(DatasetError, match="n > v"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV)

    def test_negative_count(self, design, blocks):
        """Test c >= 0."""
        acoustic, validation, _ = blocks
        counts = CountData.from_arrays(c=[[1, -1], [0, 3]])
        with pytest.raises(DatasetError, match="negative point count"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV)

    def test_dimension_mismatch(self, design, blocks):
        """Test block shapes against the design."""
        acoustic, validation, _ = blocks
        counts = CountData.from_arrays(c=[[1, 2, 0], [0, 3, 1]])
        with pytest.raises(DatasetError, match="dimension mismatch"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV)

    def test_covariate(self, design, blocks):
        """Test that the covariate covers every global site and is finite."""
        acoustic, validation, counts = blocks
        ds = validate_dataset(design, acoustic, validation, counts, ModelVariant.AC, covariate=[0.1, -0.2, 0.3])
        np.testing.assert_array_equal(ds.covariate, [0.1, -0.2, 0.3])
        with pytest.raises(DatasetError, match="covariate has shape"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.AC, covariate=[0.1, 0.2])
        with pytest.raises(DatasetError, match="non-finite covariate"):
            validate_dataset(design, acoustic, validation, counts, ModelVariant.AC, covariate=[0.1, np.nan, 0.3])


class TestWithVariant:
    """Test re-validating a dataset for another variant."""

    def test_same_digest(self, dataset):
        """Test that the variant does not enter the digest."""
        counts_only = with_variant(dataset, ModelVariant.C)
        assert counts_only.variant is ModelVariant.C
        assert counts_only.active_blocks == ("counts",)
        assert counts_only.digest() == dataset.digest()

    def test_missing_block(self, design, blocks):
        """Test that a variant cannot be fitted without its blocks."""
        acoustic, _, counts = blocks
        ac = validate_dataset(design, acoustic, None, counts, ModelVariant.AC)
        with pytest.raises(DatasetError, match="requires validation block"):
            with_variant(ac, ModelVariant.ACV)


class TestSubsetCounts:
    """Test keeping only some point-count sites."""

    def test_keeps_acoustic_sites(self, dataset):
        """Test that all global sites stay when acoustic sites cover them."""
        subset = subset_counts(dataset, [1])
        assert subset.design.num_count_sites == 1
        assert subset.design.site_map == (1,)
        assert subset.design.num_sites == 3
        np.testing.assert_array_equal(subset.counts.c, [[0, 3]])

    def test_renumbers_dropped_sites(self):
        """Test that count-only sites outside the subset are removed."""
        design = SurveyDesign.nested(2, 4, 1, 2)
        acoustic = AcousticData.from_arrays(y=[[1], [0]], v=[[2], [0]])
        counts = CountData.from_arrays(c=[[0, 1], [1, 1], [2, 0], [3, 3]])
        ds = validate_dataset(design, acoustic, None, counts, ModelVariant.AC, covariate=[0.0, 1.0, 2.0, 3.0])
        subset = subset_counts(ds, [3, 0])
        assert subset.design.num_sites == 3
        assert subset.design.site_map == (0, 2)
        np.testing.assert_array_equal(subset.counts.c, [[0, 1], [3, 3]])
        np.testing.assert_array_equal(subset.covariate, [0.0, 1.0, 3.0])

    def test_empty_subset(self, dataset):
        """Test that at least one site must be kept."""
        with pytest.raises(DatasetError, match="at least one count site"):
            subset_counts(dataset, [])
