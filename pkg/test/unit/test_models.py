"""Unit tests for data models."""

import numpy as np
import pytest

from integrated_abundance.exceptions import ConfigurationError, DatasetError
from integrated_abundance.models import (
    AbundanceKind,
    AbundanceModel,
    ModelVariant,
    ParameterState,
    SurveyDesign,
    scalar_parameters,
)

pytestmark = pytest.mark.unit


class TestModelVariant:
    """Test variant parsing and block flags."""

    def test_parse_names(self):
        """Test exact and lower-case names."""
        assert ModelVariant.parse("AV") is ModelVariant.AV
        assert ModelVariant.parse("ac") is ModelVariant.AC
        assert ModelVariant.parse(ModelVariant.C) is ModelVariant.C

    def test_avc_alias(self):
        """Test that AVC is read as ACV."""
        assert ModelVariant.parse("AVC") is ModelVariant.ACV

    def test_unknown_name(self):
        """Test that an unknown name is a configuration error."""
        with pytest.raises(ConfigurationError, match="Unknown model variant"):
            ModelVariant.parse("XYZ")

    def test_blocks(self):
        """Test which blocks each variant uses."""
        assert ModelVariant.AV.uses_validation and not ModelVariant.AV.uses_counts
        assert ModelVariant.C.uses_counts and not ModelVariant.C.uses_acoustic
        assert ModelVariant.AC.uses_acoustic and not ModelVariant.AC.uses_validation
        assert all((ModelVariant.ACV.uses_acoustic, ModelVariant.ACV.uses_validation, ModelVariant.ACV.uses_counts))


class TestSurveyDesign:
    """Test survey design invariants."""

    def test_nested(self):
        """Test that a nested design shares sites from 0."""
        design = SurveyDesign.nested(10, 5, 4, 3)
        assert design.num_sites == 10
        assert design.site_map == (0, 1, 2, 3, 4)
        assert design.acoustic_site_map == tuple(range(10))

    def test_count_heavy(self):
        """Test a design with more count sites than acoustic sites."""
        design = SurveyDesign.nested(25, 50, 10, 3)
        assert design.num_sites == 50
        np.testing.assert_array_equal(design.acoustic_index, np.arange(25))

    def test_zero_dimension(self):
        """Test that every dimension must be positive."""
        with pytest.raises(DatasetError, match="acoustic_surveys must be >= 1"):
            SurveyDesign.nested(5, 5, 0, 3)

    def test_site_map_length(self):
        """Test that the site map matches the count sites."""
        with pytest.raises(DatasetError, match="site_map has 2 entries"):
            SurveyDesign(num_acoustic_sites=3, num_count_sites=3, acoustic_surveys=1, count_surveys=1, site_map=(0, 1))

    def test_site_map_injective(self):
        """Test that two count sites cannot share a global site."""
        with pytest.raises(DatasetError, match="not injective"):
            SurveyDesign(num_acoustic_sites=2, num_count_sites=2, acoustic_surveys=1, count_surveys=1, site_map=(1, 1))

    def test_unreferenced_site(self):
        """Test that gaps in global numbering are rejected."""
        with pytest.raises(DatasetError, match="referenced by neither survey"):
            SurveyDesign(num_acoustic_sites=2, num_count_sites=1, acoustic_surveys=1, count_surveys=1, site_map=(3,))


class TestAbundanceModel:
    """Test expected abundance."""

    def test_constant(self):
        """Test a constant lambda."""
        np.testing.assert_array_equal(AbundanceModel.constant(3.0).expected(4), np.full(4, 3.0))

    def test_log_linear(self):
        """Test log(lambda_i) = beta0 + beta1 * X_i."""
        X = np.array([-1.0, 0.0, 2.0])
        model = AbundanceModel.log_linear(0.5, 0.3, X)
        np.testing.assert_allclose(model.expected(3), np.exp(0.5 + 0.3 * X))

    def test_log_linear_needs_covariate(self):
        """Test that the covariate length must match the sites."""
        model = AbundanceModel.log_linear(0.5, 0.3, [0.0, 1.0])
        with pytest.raises(DatasetError, match="one covariate value per global site"):
            model.expected(3)

    def test_with_values(self):
        """Test replacing abundance parameters by monitored name."""
        model = AbundanceModel.constant(1.0).with_values(**{"lambda": 2.5})
        assert model.lam == 2.5


class TestParameterState:
    """Test parameter state access."""

    @pytest.fixture
    def state(self):
        return ParameterState(
            N=np.array([1, 2]),
            K=None,
            alpha0=-2.0,
            alpha1=3.0,
            delta=4.0,
            omega=3.0,
            p=0.7,
            abundance=AbundanceModel.constant(2.0),
        )

    def test_value(self, state):
        """Test reading scalars by monitored name."""
        assert state.value("lambda") == 2.0
        assert state.value("p") == 0.7
        assert state.value("delta") == 4.0

    def test_with_values(self, state):
        """Test that with_values leaves the original untouched."""
        new = state.with_values(**{"lambda": 5.0, "omega": 1.5})
        assert new.value("lambda") == 5.0
        assert new.omega == 1.5
        assert state.value("lambda") == 2.0
        assert state.omega == 3.0


class TestScalarParameters:
    """Test which scalars each variant samples."""

    def test_constant(self):
        """Test the constant-abundance parameter sets."""
        assert scalar_parameters(ModelVariant.C, AbundanceKind.CONSTANT) == ("lambda", "p")
        assert scalar_parameters(ModelVariant.AV, AbundanceKind.CONSTANT) == (
            "lambda", "alpha0", "alpha1", "delta", "omega",
        )
        assert scalar_parameters(ModelVariant.ACV, AbundanceKind.CONSTANT) == (
            "lambda", "alpha0", "alpha1", "delta", "omega", "p",
        )

    def test_log_linear(self):
        """Test that log-linear abundance replaces lambda with beta0, beta1."""
        assert scalar_parameters(ModelVariant.AC, AbundanceKind.LOG_LINEAR)[:2] == ("beta0", "beta1")
