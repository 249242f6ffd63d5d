"""Dataset validation and restructuring."""

import logging
from typing import Optional, Sequence

import numpy as np

from .exceptions import DatasetError
from .models import (
    AcousticData,
    CountData,
    Dataset,
    ModelVariant,
    SurveyDesign,
    ValidationData,
)

logger = logging.getLogger(__name__)


def _first_cell(mask: np.ndarray):
    return tuple(int(i) for i in np.argwhere(mask)[0])


def _check_shape(block: str, name: str, array: np.ndarray, shape) -> None:
    if array.shape != tuple(shape):
        raise DatasetError(
            f"dimension mismatch: {name} has shape {array.shape}, expected {tuple(shape)}",
            block=block,
            field=name,
        )


def _check_acoustic(design: SurveyDesign, acoustic: AcousticData) -> None:
    shape = (design.num_acoustic_sites, design.acoustic_surveys)
    _check_shape("acoustic", "y", acoustic.y, shape)
    _check_shape("acoustic", "v", acoustic.v, shape)
    _check_shape("acoustic", "missing_mask", acoustic.missing_mask, shape)

    bad = (acoustic.y != 0) & (acoustic.y != 1)
    if bad.any():
        raise DatasetError("detections must be 0 or 1", block="acoustic", cell=_first_cell(bad), field="y")
    bad = acoustic.v < 0
    if bad.any():
        raise DatasetError("negative vocalization count", block="acoustic", cell=_first_cell(bad), field="v")
    bad = (acoustic.y == 0) & (acoustic.v > 0)
    if bad.any():
        raise DatasetError("vocalizations without detection", block="acoustic", cell=_first_cell(bad), field="v")


def _check_validation(design: SurveyDesign, acoustic: AcousticData, validation: ValidationData) -> None:
    shape = (design.num_acoustic_sites, design.acoustic_surveys)
    _check_shape("validation", "n", validation.n, shape)
    _check_shape("validation", "k", validation.k, shape)

    bad = validation.k < 0
    if bad.any():
        raise DatasetError("negative confirmed count", block="validation", cell=_first_cell(bad), field="k")
    bad = validation.k > validation.n
    if bad.any():
        raise DatasetError("k > n: confirmed calls exceed checked calls", block="validation", cell=_first_cell(bad), field="k")
    bad = validation.n > acoustic.v
    if bad.any():
        raise DatasetError("n > v: checked calls exceed vocalizations", block="validation", cell=_first_cell(bad), field="n")


def _check_counts(design: SurveyDesign, counts: CountData) -> None:
    shape = (design.num_count_sites, design.count_surveys)
    _check_shape("counts", "c", counts.c, shape)
    _check_shape("counts", "missing_mask", counts.missing_mask, shape)
    bad = counts.c < 0
    if bad.any():
        raise DatasetError("negative point count", block="counts", cell=_first_cell(bad), field="c")


def validate_dataset(
    design: SurveyDesign,
    acoustic: Optional[AcousticData],
    validation: Optional[ValidationData],
    counts: Optional[CountData],
    variant: ModelVariant,
    covariate: Optional[Sequence[float]] = None,
) -> Dataset:
    """
    Check every supplied data block against the design and the variant.

    Args:
        design: Survey design
        acoustic: Detections and vocalization counts (optional)
        validation: Manually checked calls (optional, needs acoustic)
        counts: Point counts (optional)
        variant: Model variant the dataset will be fitted with
        covariate: Per-global-site abundance covariate (optional)

    Returns:
        Validated Dataset

    Raises:
        DatasetError: On any dimension mismatch, invariant violation or
            missing block required by the variant
    """
    variant = ModelVariant.parse(variant)

    if variant.uses_acoustic and acoustic is None:
        raise DatasetError(f"variant {variant.value} requires acoustic block", block="acoustic")
    if variant.uses_validation and validation is None:
        raise DatasetError(f"variant {variant.value} requires validation block", block="validation")
    if variant.uses_counts and counts is None:
        raise DatasetError(f"variant {variant.value} requires counts block", block="counts")
    if validation is not None and acoustic is None:
        raise DatasetError("validation block supplied without acoustic block", block="validation")

    if acoustic is not None:
        _check_acoustic(design, acoustic)
    if validation is not None:
        _check_validation(design, acoustic, validation)
    if counts is not None:
        _check_counts(design, counts)

    x = None
    if covariate is not None:
        x = np.array(covariate, dtype=np.float64, copy=True)
        if x.shape != (design.num_sites,):
            raise DatasetError(
                f"dimension mismatch: covariate has shape {x.shape}, expected ({design.num_sites},)",
                block="covariate",
                field="x_covariate",
            )
        if not np.all(np.isfinite(x)):
            raise DatasetError("non-finite covariate value", block="covariate", cell=_first_cell(~np.isfinite(x)), field="x_covariate")
        x.setflags(write=False)

    dataset = Dataset(
        design=design,
        variant=variant,
        acoustic=acoustic,
        validation=validation,
        counts=counts,
        covariate=x,
    )
    logger.debug(f"[Dataset] validated for {variant.value}; active blocks: {', '.join(dataset.active_blocks)}")
    return dataset


def with_variant(dataset: Dataset, variant: ModelVariant) -> Dataset:
    """Re-validate the same data blocks for another variant."""
    return validate_dataset(
        dataset.design,
        dataset.acoustic,
        dataset.validation,
        dataset.counts,
        variant,
        covariate=dataset.covariate,
    )


def subset_counts(dataset: Dataset, count_sites: Sequence[int]) -> Dataset:
    """
    Keep only some point-count sites.

    Global sites that no longer belong to either survey are dropped and the
    remaining ones renumbered in their original order.

    Args:
        dataset: Dataset with a counts block
        count_sites: Count-site indices (rows of the counts block) to keep

    Returns:
        Validated Dataset with the reduced counts block
    """
    if dataset.counts is None:
        raise DatasetError("dataset has no counts block to subset", block="counts")
    rows = sorted(int(i) for i in count_sites)
    if not rows:
        raise DatasetError("at least one count site must be kept", block="counts")
    design = dataset.design

    kept_global = sorted(set(design.acoustic_site_map) | {design.site_map[i] for i in rows})
    renumber = {g: new for new, g in enumerate(kept_global)}

    new_design = SurveyDesign(
        num_acoustic_sites=design.num_acoustic_sites,
        num_count_sites=len(rows),
        acoustic_surveys=design.acoustic_surveys,
        count_surveys=design.count_surveys,
        site_map=tuple(renumber[design.site_map[i]] for i in rows),
        acoustic_site_map=tuple(renumber[g] for g in design.acoustic_site_map),
    )
    counts = CountData.from_arrays(dataset.counts.c[rows], dataset.counts.missing_mask[rows])
    covariate = None if dataset.covariate is None else dataset.covariate[kept_global]
    return validate_dataset(
        new_design,
        dataset.acoustic,
        dataset.validation,
        counts,
        dataset.variant,
        covariate=covariate,
    )
