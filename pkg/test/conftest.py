"""Shared fixtures."""

import numpy as np
import pytest

from integrated_abundance.dataset import validate_dataset
from integrated_abundance.models import (
    AbundanceModel,
    AcousticData,
    CountData,
    ModelVariant,
    ParameterState,
    SurveyDesign,
    ValidationData,
)
from integrated_abundance.simulator import ScenarioSpec


@pytest.fixture
def design():
    """Three acoustic sites, two count sites, two surveys each."""
    return SurveyDesign.nested(3, 2, 2, 2)


@pytest.fixture
def blocks():
    """Consistent acoustic, validation and count blocks for the design fixture."""
    acoustic = AcousticData.from_arrays(
        y=[[1, 0], [1, 1], [0, 0]],
        v=[[5, 0], [3, 8], [0, 0]],
    )
    validation = ValidationData.from_arrays(
        n=[[2, 0], [1, 2], [0, 0]],
        k=[[1, 0], [1, 2], [0, 0]],
    )
    counts = CountData.from_arrays(c=[[1, 2], [0, 3]])
    return acoustic, validation, counts


@pytest.fixture
def dataset(design, blocks):
    """ACV dataset on the design fixture."""
    acoustic, validation, counts = blocks
    return validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV)


@pytest.fixture
def state():
    """A finite-density state for the dataset fixture."""
    return ParameterState(
        N=np.array([2, 3, 1]),
        K=np.array([[3, 0], [2, 5], [0, 0]]),
        alpha0=-1.0,
        alpha1=1.5,
        delta=2.0,
        omega=1.5,
        p=0.6,
        abundance=AbundanceModel.constant(2.0),
    )


@pytest.fixture
def small_spec():
    """A desk-sized scenario that simulates in milliseconds."""
    return ScenarioSpec(
        name="small",
        acoustic_sites=6,
        count_sites=6,
        acoustic_surveys=4,
        count_surveys=3,
        lam=2.0,
        seed=11,
    )
