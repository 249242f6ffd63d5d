"""Data models for integrated acoustic / point-count abundance estimation."""

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .exceptions import ConfigurationError, DatasetError


# Monitored scalar parameter names
LAMBDA = "lambda"
BETA0 = "beta0"
BETA1 = "beta1"
ALPHA0 = "alpha0"
ALPHA1 = "alpha1"
DELTA = "delta"
OMEGA = "omega"
P = "p"


class ModelVariant(str, Enum):
    """Which likelihood blocks a model uses."""

    AV = "AV"  # acoustic + validation
    C = "C"  # point counts (N-mixture)
    AC = "AC"  # acoustic + point counts
    ACV = "ACV"  # acoustic + validation + point counts

    @property
    def uses_acoustic(self) -> bool:
        return self in (ModelVariant.AV, ModelVariant.AC, ModelVariant.ACV)

    @property
    def uses_validation(self) -> bool:
        return self in (ModelVariant.AV, ModelVariant.ACV)

    @property
    def uses_counts(self) -> bool:
        return self in (ModelVariant.C, ModelVariant.AC, ModelVariant.ACV)

    @classmethod
    def parse(cls, value: "str | ModelVariant") -> "ModelVariant":
        """
        Parse a variant name, accepting "AVC" as an alias of ACV.

        Args:
            value: Variant name (case-insensitive) or ModelVariant

        Returns:
            ModelVariant

        Raises:
            ConfigurationError: If the name is unknown
        """
        if isinstance(value, ModelVariant):
            return value
        name = str(value).strip().upper()
        if name == "AVC":
            name = "ACV"
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(f"Unknown model variant: {value!r}") from None


class AbundanceKind(str, Enum):
    """Functional form of expected abundance."""

    CONSTANT = "constant"
    LOG_LINEAR = "log-linear"


def _frozen(array, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SurveyDesign:
    """Survey dimensions and the mapping of both surveys onto global sites."""

    num_acoustic_sites: int  # R
    num_count_sites: int  # I
    acoustic_surveys: int  # J
    count_surveys: int  # T
    site_map: Tuple[int, ...]  # count-site index -> global site
    acoustic_site_map: Optional[Tuple[int, ...]] = None  # defaults to 0..R-1

    def __post_init__(self):
        for name in ("num_acoustic_sites", "num_count_sites", "acoustic_surveys", "count_surveys"):
            if int(getattr(self, name)) < 1:
                raise DatasetError(f"{name} must be >= 1", block="design")

        acoustic_map = self.acoustic_site_map
        if acoustic_map is None:
            acoustic_map = tuple(range(self.num_acoustic_sites))
        object.__setattr__(self, "acoustic_site_map", tuple(int(g) for g in acoustic_map))
        object.__setattr__(self, "site_map", tuple(int(g) for g in self.site_map))

        if len(self.site_map) != self.num_count_sites:
            raise DatasetError(
                f"site_map has {len(self.site_map)} entries for {self.num_count_sites} count sites",
                block="design",
            )
        if len(self.acoustic_site_map) != self.num_acoustic_sites:
            raise DatasetError(
                f"acoustic_site_map has {len(self.acoustic_site_map)} entries "
                f"for {self.num_acoustic_sites} acoustic sites",
                block="design",
            )
        for name, mapping in (("site_map", self.site_map), ("acoustic_site_map", self.acoustic_site_map)):
            if len(set(mapping)) != len(mapping):
                raise DatasetError(f"{name} is not injective", block="design")
            if min(mapping) < 0:
                raise DatasetError(f"{name} contains a negative site index", block="design")

        referenced = set(self.site_map) | set(self.acoustic_site_map)
        if referenced != set(range(max(referenced) + 1)):
            missing = sorted(set(range(max(referenced) + 1)) - referenced)
            raise DatasetError(
                f"global sites {missing} are referenced by neither survey", block="design"
            )

    @classmethod
    def nested(cls, acoustic_sites: int, count_sites: int, acoustic_surveys: int, count_surveys: int) -> "SurveyDesign":
        """Both surveys start at global site 0; the smaller one is a subset of the larger."""
        return cls(
            num_acoustic_sites=acoustic_sites,
            num_count_sites=count_sites,
            acoustic_surveys=acoustic_surveys,
            count_surveys=count_surveys,
            site_map=tuple(range(count_sites)),
        )

    @property
    def num_sites(self) -> int:
        """Number of global sites G (union of acoustic and count sites)."""
        return max(max(self.site_map), max(self.acoustic_site_map)) + 1

    @property
    def acoustic_index(self) -> np.ndarray:
        return np.asarray(self.acoustic_site_map, dtype=np.int64)

    @property
    def count_index(self) -> np.ndarray:
        return np.asarray(self.site_map, dtype=np.int64)

    def as_dict(self) -> Dict[str, object]:
        return {
            "num_acoustic_sites": self.num_acoustic_sites,
            "num_count_sites": self.num_count_sites,
            "acoustic_surveys": self.acoustic_surveys,
            "count_surveys": self.count_surveys,
            "site_map": list(self.site_map),
            "acoustic_site_map": list(self.acoustic_site_map),
        }


@dataclass(frozen=True, eq=False)
class AcousticData:
    """Clustering-algorithm output per (acoustic site, survey)."""

    y: np.ndarray  # R x J binary detections
    v: np.ndarray  # R x J vocalization counts
    missing_mask: np.ndarray  # R x J, True where no recording exists

    @classmethod
    def from_arrays(cls, y, v, missing_mask=None) -> "AcousticData":
        y = np.asarray(y)
        if missing_mask is None:
            missing_mask = np.zeros(y.shape, dtype=bool)
        return cls(y=_frozen(y, np.int64), v=_frozen(v, np.int64), missing_mask=_frozen(missing_mask, bool))


@dataclass(frozen=True, eq=False)
class ValidationData:
    """Manually checked vocalizations per (acoustic site, survey)."""

    n: np.ndarray  # R x J checked
    k: np.ndarray  # R x J confirmed true

    @classmethod
    def from_arrays(cls, n, k) -> "ValidationData":
        return cls(n=_frozen(n, np.int64), k=_frozen(k, np.int64))


@dataclass(frozen=True, eq=False)
class CountData:
    """Repeated point counts per (count site, visit)."""

    c: np.ndarray  # I x T counts
    missing_mask: np.ndarray  # I x T, True where the visit did not happen

    @classmethod
    def from_arrays(cls, c, missing_mask=None) -> "CountData":
        c = np.asarray(c)
        if missing_mask is None:
            missing_mask = np.zeros(c.shape, dtype=bool)
        return cls(c=_frozen(c, np.int64), missing_mask=_frozen(missing_mask, bool))


@dataclass(frozen=True, eq=False)
class AbundanceModel:
    """Expected abundance: constant lambda or log(lambda_i) = beta0 + beta1 * X_i."""

    kind: AbundanceKind = AbundanceKind.CONSTANT
    lam: float = 1.0
    beta0: float = 0.0
    beta1: float = 0.0
    X: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, lam: float) -> "AbundanceModel":
        return cls(kind=AbundanceKind.CONSTANT, lam=float(lam))

    @classmethod
    def log_linear(cls, beta0: float, beta1: float, X) -> "AbundanceModel":
        return cls(
            kind=AbundanceKind.LOG_LINEAR,
            beta0=float(beta0),
            beta1=float(beta1),
            X=_frozen(X, np.float64),
        )

    def expected(self, num_sites: int) -> np.ndarray:
        """
        Per-site expected abundance.

        Args:
            num_sites: Number of global sites

        Returns:
            Array of length num_sites (may contain inf on overflow)
        """
        if self.kind is AbundanceKind.CONSTANT:
            return np.full(num_sites, self.lam, dtype=np.float64)
        if self.X is None or len(self.X) != num_sites:
            raise DatasetError("log-linear abundance needs one covariate value per global site", block="covariate")
        with np.errstate(over="ignore"):
            return np.exp(self.beta0 + self.beta1 * self.X)

    def with_values(self, **values: float) -> "AbundanceModel":
        mapping = {LAMBDA: "lam", BETA0: "beta0", BETA1: "beta1"}
        return replace(self, **{mapping[k]: float(v) for k, v in values.items()})


@dataclass(frozen=True, eq=False)
class ParameterState:
    """One MCMC state: latent abundance, latent true calls and scalar parameters."""

    N: np.ndarray  # per global site
    K: Optional[np.ndarray]  # R x J, only when validation is active
    alpha0: float
    alpha1: float
    delta: float
    omega: float
    p: float
    abundance: AbundanceModel

    def value(self, name: str) -> float:
        """Read a scalar parameter by its monitored name."""
        if name == LAMBDA:
            return self.abundance.lam
        if name == BETA0:
            return self.abundance.beta0
        if name == BETA1:
            return self.abundance.beta1
        return float(getattr(self, name))

    def with_values(self, **values: float) -> "ParameterState":
        """Return a new state with the named scalars replaced."""
        abundance_values = {k: v for k, v in values.items() if k in (LAMBDA, BETA0, BETA1)}
        other = {k: float(v) for k, v in values.items() if k not in abundance_values}
        state = replace(self, **other) if other else self
        if abundance_values:
            state = replace(state, abundance=state.abundance.with_values(**abundance_values))
        return state


@dataclass(frozen=True, eq=False)
class Dataset:
    """A validated dataset with the data blocks active for one variant."""

    design: SurveyDesign
    variant: ModelVariant
    acoustic: Optional[AcousticData] = None
    validation: Optional[ValidationData] = None
    counts: Optional[CountData] = None
    covariate: Optional[np.ndarray] = None  # per global site
    _digest: Dict[str, str] = field(default_factory=dict, init=False, repr=False)

    @property
    def active_blocks(self) -> Tuple[str, ...]:
        blocks = []
        if self.variant.uses_acoustic:
            blocks.append("acoustic")
        if self.variant.uses_validation:
            blocks.append("validation")
        if self.variant.uses_counts:
            blocks.append("counts")
        return tuple(blocks)

    def digest(self) -> str:
        """SHA-256 over the canonical data blocks (the variant is excluded)."""
        if "sha256" not in self._digest:
            h = hashlib.sha256()
            h.update(repr(sorted(self.design.as_dict().items())).encode("utf-8"))
            arrays = []
            if self.acoustic is not None:
                arrays += [("y", self.acoustic.y), ("v", self.acoustic.v), ("am", self.acoustic.missing_mask)]
            if self.validation is not None:
                arrays += [("n", self.validation.n), ("k", self.validation.k)]
            if self.counts is not None:
                arrays += [("c", self.counts.c), ("cm", self.counts.missing_mask)]
            if self.covariate is not None:
                arrays.append(("x", self.covariate))
            for name, arr in arrays:
                h.update(name.encode("utf-8"))
                dtype = "<f8" if arr.dtype.kind == "f" else "<i8"
                h.update(np.ascontiguousarray(arr, dtype=dtype).tobytes())
            self._digest["sha256"] = h.hexdigest()
        return self._digest["sha256"]


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """Generating values of a simulated dataset, kept for scoring fits."""

    N: np.ndarray  # per global site
    K: np.ndarray  # R x J true calls
    F: np.ndarray  # R x J false calls
    alpha0: float
    alpha1: float
    delta: float
    omega: float
    p: float
    abundance: AbundanceModel
    validation_fraction: float
    seed: int

    def parameter_values(self) -> Dict[str, float]:
        """Truth keyed by monitored parameter name."""
        values = {
            ALPHA0: self.alpha0,
            ALPHA1: self.alpha1,
            DELTA: self.delta,
            OMEGA: self.omega,
            P: self.p,
        }
        if self.abundance.kind is AbundanceKind.CONSTANT:
            values[LAMBDA] = self.abundance.lam
        else:
            values[BETA0] = self.abundance.beta0
            values[BETA1] = self.abundance.beta1
        return values

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = dict(self.parameter_values())
        out["abundance_kind"] = self.abundance.kind.value
        out["validation_fraction"] = self.validation_fraction
        out["seed"] = self.seed
        out["N"] = [int(x) for x in self.N]
        out["K"] = self.K.astype(int).tolist()
        out["F"] = self.F.astype(int).tolist()
        return out


def scalar_parameters(variant: ModelVariant, kind: AbundanceKind) -> Tuple[str, ...]:
    """
    Ordered scalar parameters a variant samples and monitors.

    Args:
        variant: Model variant
        kind: Abundance model kind

    Returns:
        Tuple of parameter names
    """
    names = [LAMBDA] if kind is AbundanceKind.CONSTANT else [BETA0, BETA1]
    if variant.uses_acoustic:
        names += [ALPHA0, ALPHA1, DELTA, OMEGA]
    if variant.uses_counts:
        names.append(P)
    return tuple(names)
