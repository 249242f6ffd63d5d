"""Synthetic data under the acoustic, validation and point-count generative models."""

import logging
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .dataset import validate_dataset
from .exceptions import ConfigurationError
from .models import (
    AbundanceKind,
    AbundanceModel,
    AcousticData,
    CountData,
    Dataset,
    ModelVariant,
    SurveyDesign,
    TruthRecord,
    ValidationData,
)
from .rates import detection_prob
from .rng import SEED_LIMIT, Stream, stream

logger = logging.getLogger(__name__)

# Fixed settings of the simulation grid
GRID_TOTAL_SITES = (50, 100)
GRID_LAYOUTS = ("R=I", "R=I/2", "R/2=I")
GRID_COUNT_SURVEYS = (3, 5)
GRID_ALPHA1 = (1.2, 3.0)
GRID_LAMBDA = (0.5, 3.0)
GRID_ALPHA0 = -2.19
GRID_ACOUSTIC_SURVEYS = 10
GRID_DELTA = 4.0
GRID_OMEGA = 3.0
GRID_VALIDATION_FRACTION = 0.20

POINT_COUNT_SIZES = (5, 10, 20, 30, 50)


class ScenarioSpec(BaseModel):
    """Everything needed to generate one synthetic dataset."""

    model_config = ConfigDict(populate_by_name=True, frozen=True, extra="forbid")

    name: str = "custom"
    acoustic_sites: int = Field(50, ge=1)  # R
    count_sites: int = Field(50, ge=1)  # I
    acoustic_surveys: int = Field(GRID_ACOUSTIC_SURVEYS, ge=1)  # J
    count_surveys: int = Field(3, ge=1)  # T
    abundance_kind: AbundanceKind = AbundanceKind.CONSTANT
    lam: float = Field(3.0, gt=0, alias="lambda")
    beta0: float = 2.0
    beta1: float = 0.3
    alpha0: float = GRID_ALPHA0
    alpha1: float = Field(3.0, ge=0)
    delta: float = Field(GRID_DELTA, ge=0)
    omega: float = Field(GRID_OMEGA, ge=0)
    p: float = Field(0.69, ge=0, le=1)
    validation_fraction: float = GRID_VALIDATION_FRACTION
    recording_coverage: float = Field(1.0, gt=0, le=1)
    point_count_subset: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    total_sites: Optional[int] = None
    layout: Optional[str] = None

    @field_validator("validation_fraction")
    @classmethod
    def _fraction_in_range(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("validation_fraction out of range")
        return value

    @model_validator(mode="after")
    def _subset_fits(self):
        if self.point_count_subset is not None and self.point_count_subset > self.count_sites:
            raise ValueError("point_count_subset exceeds count_sites")
        return self

    def design(self) -> SurveyDesign:
        return SurveyDesign.nested(
            self.acoustic_sites, self.count_sites, self.acoustic_surveys, self.count_surveys
        )

    def abundance_model(self, X: Optional[np.ndarray] = None) -> AbundanceModel:
        if self.abundance_kind is AbundanceKind.CONSTANT:
            return AbundanceModel.constant(self.lam)
        return AbundanceModel.log_linear(self.beta0, self.beta1, X)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return self.model_copy(update={"seed": int(seed)})

    def filter_fields(self) -> Dict[str, Union[str, float]]:
        """Fields a grid filter expression may reference."""
        return {
            "name": self.name,
            "total_sites": float(self.total_sites or max(self.acoustic_sites, self.count_sites)),
            "layout": self.layout or "",
            "R": float(self.acoustic_sites),
            "I": float(self.count_sites),
            "J": float(self.acoustic_surveys),
            "T": float(self.count_surveys),
            "alpha1": self.alpha1,
            "p": self.p,
            "lambda": self.lam,
            "kind": self.abundance_kind.value,
        }


def parse_filter(text: Optional[str]) -> Dict[str, str]:
    """
    Parse a filter expression such as "lambda=0.5,T=5".

    Raises:
        ConfigurationError: On a malformed clause
    """
    filters: Dict[str, str] = {}
    if not text:
        return filters
    for clause in text.split(","):
        clause = clause.strip()
        if not clause:
            continue
        if "=" not in clause:
            raise ConfigurationError(f"filter clause {clause!r} is not key=value")
        key, value = clause.split("=", 1)
        filters[key.strip()] = value.strip()
    return filters


def matches(spec: ScenarioSpec, filters: Dict[str, str]) -> bool:
    """True if the spec satisfies every filter clause."""
    fields = spec.filter_fields()
    for key, wanted in filters.items():
        if key not in fields:
            raise ConfigurationError(f"unknown filter field {key!r}; expected one of {sorted(fields)}")
        actual = fields[key]
        if isinstance(actual, float):
            try:
                if not np.isclose(actual, float(wanted)):
                    return False
            except ValueError:
                raise ConfigurationError(f"filter field {key!r} needs a number, got {wanted!r}")
        elif actual != wanted:
            return False
    return True


def _layout_sites(total: int, layout: str) -> Tuple[int, int]:
    if layout == "R=I":
        return total, total
    if layout == "R=I/2":
        return total // 2, total
    if layout == "R/2=I":
        return total, total // 2
    raise ConfigurationError(f"unknown layout {layout!r}")


def scenario_grid() -> List[ScenarioSpec]:
    """
    The 48-scenario factorial of the simulation study.

    {50, 100 total sites} x {R=I, R=I/2, R/2=I} x {T=3, 5} x {alpha1=1.2, 3}
    x {lambda=0.5, 3}, with the count detection probability set equal to the
    acoustic single-individual detection probability.
    """
    specs: List[ScenarioSpec] = []
    for total in GRID_TOTAL_SITES:
        for layout in GRID_LAYOUTS:
            R, I = _layout_sites(total, layout)
            for T in GRID_COUNT_SURVEYS:
                for alpha1 in GRID_ALPHA1:
                    p = round(detection_prob(1, GRID_ALPHA0, alpha1), 2)
                    for lam in GRID_LAMBDA:
                        specs.append(ScenarioSpec(
                            name=f"grid:{len(specs)}",
                            acoustic_sites=R,
                            count_sites=I,
                            acoustic_surveys=GRID_ACOUSTIC_SURVEYS,
                            count_surveys=T,
                            lam=lam,
                            alpha0=GRID_ALPHA0,
                            alpha1=alpha1,
                            delta=GRID_DELTA,
                            omega=GRID_OMEGA,
                            p=p,
                            validation_fraction=GRID_VALIDATION_FRACTION,
                            total_sites=total,
                            layout=layout,
                        ))
    return specs


def _covariate_base(**overrides) -> ScenarioSpec:
    values = dict(
        acoustic_sites=50,
        count_sites=50,
        acoustic_surveys=10,
        count_surveys=4,
        abundance_kind=AbundanceKind.LOG_LINEAR,
        beta0=2.0,
        beta1=0.3,
        alpha0=GRID_ALPHA0,
        alpha1=3.0,
        p=0.69,
        delta=GRID_DELTA,
        omega=GRID_OMEGA,
        validation_fraction=GRID_VALIDATION_FRACTION,
    )
    values.update(overrides)
    return ScenarioSpec(**values)


def covariate_experiment_specs() -> List[ScenarioSpec]:
    """Covariate-abundance base design fitted with 5, 10, 20, 30 and 50 point-count sites."""
    return [
        _covariate_base(name=f"sweep:{size}", point_count_subset=size, total_sites=50, layout="R=I")
        for size in POINT_COUNT_SIZES
    ]


def covariate_design_specs() -> List[ScenarioSpec]:
    """Covariate-abundance scenarios with equal, acoustic-heavy and count-heavy layouts."""
    return [
        _covariate_base(name="covariate:A=C", acoustic_sites=50, count_sites=50, total_sites=50, layout="R=I"),
        _covariate_base(name="covariate:A>C", acoustic_sites=50, count_sites=25, total_sites=50, layout="R/2=I"),
        _covariate_base(name="covariate:A<C", acoustic_sites=25, count_sites=50, total_sites=50, layout="R=I/2"),
    ]


def resolve_scenario(name: str) -> ScenarioSpec:
    """
    Look up a preset by name: "grid:<index>", "sweep:<size>" or "covariate:<layout>".

    Raises:
        ConfigurationError: If no preset has that name
    """
    for spec in scenario_grid() + covariate_experiment_specs() + covariate_design_specs():
        if spec.name == name:
            return spec
    raise ConfigurationError(f"unknown scenario {name!r}")


def draw_point_count_subset(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniformly choose spec.point_count_subset of the count sites (sorted indices)."""
    size = spec.point_count_subset or spec.count_sites
    return np.sort(rng.choice(spec.count_sites, size=size, replace=False))


def simulate_validation(
    dataset: Dataset,
    truth: TruthRecord,
    validation_fraction: float,
    rng: np.random.Generator,
) -> ValidationData:
    """
    Simulate manual checking of a fraction of the vocalizations in every cell.

    n = round(fraction * v) (half to even); k is the number of true calls in a
    uniform sample of n from K true and v - K false calls.

    Args:
        dataset: Dataset with an acoustic block
        truth: Truth record holding K per cell
        validation_fraction: Fraction of calls checked, in [0, 1]
        rng: Random generator

    Returns:
        ValidationData
    """
    if not 0.0 <= validation_fraction <= 1.0:
        raise ConfigurationError("validation_fraction out of range")
    v = dataset.acoustic.v
    K = truth.K
    n = np.rint(validation_fraction * v).astype(np.int64)
    k = np.zeros_like(n)

    census = n == v
    k[census] = K[census]
    partial = (n > 0) & ~census
    if partial.any():
        k[partial] = rng.hypergeometric(K[partial], v[partial] - K[partial], n[partial])
    return ValidationData.from_arrays(n, k)


def simulate(spec: ScenarioSpec) -> Tuple[Dataset, TruthRecord]:
    """
    Draw one dataset from the generative model.

    Each global site has its own random stream, so a site's draws do not
    depend on how many other sites exist or in which order they are made.

    Args:
        spec: Scenario specification

    Returns:
        (Dataset validated for ACV, TruthRecord)
    """
    design = spec.design()
    G = design.num_sites
    R, J = design.num_acoustic_sites, design.acoustic_surveys
    I, T = design.num_count_sites, design.count_surveys

    X = None
    if spec.abundance_kind is AbundanceKind.LOG_LINEAR:
        X = np.array([stream(spec.seed, Stream.COVARIATE, g).standard_normal() for g in range(G)])
    abundance = spec.abundance_model(X)
    lam = abundance.expected(G)

    acoustic_row = {g: r for r, g in enumerate(design.acoustic_site_map)}
    count_row = {g: i for i, g in enumerate(design.site_map)}

    N = np.zeros(G, dtype=np.int64)
    y = np.zeros((R, J), dtype=np.int64)
    K = np.zeros((R, J), dtype=np.int64)
    F = np.zeros((R, J), dtype=np.int64)
    missing = np.zeros((R, J), dtype=bool)
    c = np.zeros((I, T), dtype=np.int64)

    for g in range(G):
        rng = stream(spec.seed, Stream.SITE, g)
        N[g] = rng.poisson(lam[g])
        if g in acoustic_row:
            r = acoustic_row[g]
            pi = detection_prob(N[g], spec.alpha0, spec.alpha1)
            detected = rng.random(J) < pi
            true_calls = rng.poisson(spec.delta * N[g], J)
            false_calls = rng.poisson(spec.omega, J)
            recorded = rng.random(J) < spec.recording_coverage
            flagged = detected & recorded
            y[r] = flagged
            K[r] = true_calls * flagged
            F[r] = false_calls * flagged
            missing[r] = ~recorded
        if g in count_row:
            c[count_row[g]] = rng.binomial(N[g], spec.p, T)

    acoustic = AcousticData.from_arrays(y, K + F, missing)
    counts = CountData.from_arrays(c)
    truth = TruthRecord(
        N=N,
        K=K,
        F=F,
        alpha0=spec.alpha0,
        alpha1=spec.alpha1,
        delta=spec.delta,
        omega=spec.omega,
        p=spec.p,
        abundance=abundance,
        validation_fraction=spec.validation_fraction,
        seed=spec.seed,
    )
    unvalidated = validate_dataset(design, acoustic, None, counts, ModelVariant.AC, covariate=X)
    validation = simulate_validation(
        unvalidated, truth, spec.validation_fraction, stream(spec.seed, Stream.VALIDATION)
    )
    dataset = validate_dataset(design, acoustic, validation, counts, ModelVariant.ACV, covariate=X)
    logger.debug(f"[Simulator] {spec.name} seed={spec.seed}: G={G}, mean N={N.mean():.3f}, digest={dataset.digest()[:12]}")
    return dataset, truth
