"""Replicated simulation studies and their aggregate tables.

A study is a list of jobs, one per (scenario, replicate). Each job simulates
one dataset and fits every requested variant (or every point-count subset)
to it, so fits within a replicate are paired. Jobs run on a bounded process
pool and results are merged by key, never by completion order.
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .dataset import subset_counts, with_variant
from .diagnostics import PosteriorSummary, converged, relative_bias, summarize_output
from .events import ProgressEvent, ProgressManager
from .exceptions import ConfigurationError
from .mcmc import McmcConfig, run
from .models import BETA0, BETA1, LAMBDA, ModelVariant
from .rng import Stream, derive_seed, stream
from .simulator import (
    POINT_COUNT_SIZES,
    ScenarioSpec,
    covariate_design_specs,
    covariate_experiment_specs,
    draw_point_count_subset,
    matches,
    parse_filter,
    scenario_grid,
    simulate,
)

logger = logging.getLogger(__name__)

GRID = "grid"
POINTCOUNT_SWEEP = "pointcount-sweep"
COVARIATE_DESIGNS = "covariate-designs"

STUDY_KEYS = {GRID: 1, POINTCOUNT_SWEEP: 2, COVARIATE_DESIGNS: 3}

# Parameters whose bias and interval width each study reports
STUDY_PARAMETERS = {
    GRID: (LAMBDA,),
    POINTCOUNT_SWEEP: (BETA0, BETA1),
    COVARIATE_DESIGNS: (BETA0, BETA1),
}

VARIANT_ORDER = {variant: i for i, variant in enumerate(ModelVariant)}

JobT = TypeVar("JobT")
ResultT = TypeVar("ResultT")


@dataclass
class FitRecord:
    """Outcome of fitting one variant to one simulated replicate."""

    study: str
    scenario: str
    scenario_index: int
    variant: str
    replicate: int
    point_counts: int
    dataset_digest: str
    fit_seed: int
    converged: bool
    summaries: Dict[str, PosteriorSummary]
    truth: Dict[str, float]
    wall_time: float
    error: Optional[str] = None

    @property
    def key(self) -> Tuple[str, int, int, int, int]:
        return (
            self.study,
            self.scenario_index,
            self.replicate,
            self.point_counts,
            VARIANT_ORDER[ModelVariant.parse(self.variant)],
        )

    def to_dict(self) -> Dict[str, object]:
        out = asdict(self)
        out["summaries"] = {name: s.as_dict() for name, s in self.summaries.items()}
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "FitRecord":
        values = dict(data)
        values["summaries"] = {
            name: PosteriorSummary(**summary) for name, summary in dict(values.get("summaries") or {}).items()
        }
        values["truth"] = {k: float(v) for k, v in dict(values.get("truth") or {}).items()}
        return cls(**values)


@dataclass(frozen=True)
class StudyJob:
    """One (scenario, replicate) unit of work."""

    study: str
    scenario_index: int
    spec: ScenarioSpec
    replicate: int
    data_seed: int
    variants: Tuple[ModelVariant, ...]
    config: McmcConfig
    subset_sizes: Tuple[int, ...] = ()
    threshold: float = 1.1

    @property
    def expected_keys(self) -> List[Tuple[str, int, int, int, int]]:
        sizes = self.subset_sizes or (self.spec.count_sites,)
        return [
            (self.study, self._index_for(size), self.replicate, size, VARIANT_ORDER[variant])
            for size in sizes
            for variant in self.variants
        ]

    def _index_for(self, size: int) -> int:
        if self.subset_sizes:
            return self.subset_sizes.index(size)
        return self.scenario_index


@dataclass
class AggregateRow:
    """Summary of one (scenario, variant, point counts, parameter) cell."""

    study: str
    scenario: str
    scenario_index: int
    variant: str
    point_counts: int
    parameter: str
    replicates: int
    converged: int
    convergence_fraction: float
    median_rel_bias_pct: float
    median_abs_rel_bias_pct: float
    median_ci_width: float
    coverage: float
    median_rel_bias_pct_all: float
    median_ci_width_all: float
    available: bool

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class StudyResult:
    """Every fit record of a study plus its aggregates."""

    study: str
    records: List[FitRecord]
    aggregates: List[AggregateRow]
    seed: int
    replicates: int
    variants: Tuple[str, ...]
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def failures(self) -> List[FitRecord]:
        return [r for r in self.records if r.error is not None]


# Jobs


def _fit_one(
    job: StudyJob,
    dataset,
    truth_values: Dict[str, float],
    variant: ModelVariant,
    scenario: str,
    scenario_index: int,
    point_counts: int,
) -> FitRecord:
    fit_seed = derive_seed(job.data_seed, Stream.CHAIN, VARIANT_ORDER[variant], point_counts)
    started = time.perf_counter()
    try:
        fit_dataset = with_variant(dataset, variant)
        output = run(fit_dataset, job.config.model_copy(update={"seed": fit_seed, "workers": 1}))
        summaries = summarize_output(output)
        ok = converged(summaries, job.threshold)
        error = None
    except Exception as e:
        logger.error(f"[Study] {scenario} replicate {job.replicate} {variant.value} failed: {e}")
        summaries, ok, error = {}, False, f"{type(e).__name__}: {e}"
    return FitRecord(
        study=job.study,
        scenario=scenario,
        scenario_index=scenario_index,
        variant=variant.value,
        replicate=job.replicate,
        point_counts=point_counts,
        dataset_digest=dataset.digest(),
        fit_seed=fit_seed,
        converged=ok,
        summaries=summaries,
        truth=truth_values,
        wall_time=time.perf_counter() - started,
        error=error,
    )


def execute_job(job: StudyJob) -> List[FitRecord]:
    """
    Simulate one replicate and fit every requested variant to it.

    For point-count sweeps the same base dataset is refitted with each
    subset of its count sites.

    Args:
        job: StudyJob

    Returns:
        One FitRecord per (subset size, variant)
    """
    spec = job.spec.with_seed(job.data_seed)
    dataset, truth = simulate(spec)
    truth_values = truth.parameter_values()
    records: List[FitRecord] = []

    if not job.subset_sizes:
        for variant in job.variants:
            records.append(_fit_one(
                job, dataset, truth_values, variant, spec.name, job.scenario_index, spec.count_sites
            ))
        return records

    for index, size in enumerate(job.subset_sizes):
        sized = spec.model_copy(update={"point_count_subset": size})
        rows = draw_point_count_subset(sized, stream(job.data_seed, Stream.SUBSET, size))
        subset = subset_counts(dataset, rows)
        for variant in job.variants:
            records.append(_fit_one(job, subset, truth_values, variant, f"sweep:{size}", index, size))
    return records


async def run_jobs_async(
    fn: Callable[[JobT], ResultT],
    jobs: Sequence[JobT],
    workers: int = 1,
    progress: Optional[ProgressManager] = None,
    on_result: Optional[Callable[[ResultT], None]] = None,
) -> List[ResultT]:
    """
    Run jobs on a bounded process pool.

    Args:
        fn: Picklable job function
        jobs: Job arguments
        workers: Maximum concurrent processes (1 runs inline)
        progress: Receives one "study" event per finished job
        on_result: Called with each result as it finishes

    Returns:
        Results in job order
    """
    total = len(jobs)

    async def finished(done: int, result) -> None:
        if on_result is not None:
            on_result(result)
        if progress is not None:
            await progress.notify_async(ProgressEvent("study", done - 1, done, total))

    if workers <= 1:
        results = []
        for i, job in enumerate(jobs):
            result = fn(job)
            results.append(result)
            await finished(i + 1, result)
        return results

    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [loop.run_in_executor(executor, fn, job) for job in jobs]
        done = 0
        for next_done in asyncio.as_completed(futures):
            result = await next_done
            done += 1
            await finished(done, result)
        return [future.result() for future in futures]


def run_jobs(fn, jobs, workers: int = 1, progress=None, on_result=None) -> list:
    """Synchronous wrapper around run_jobs_async."""
    return asyncio.run(run_jobs_async(fn, jobs, workers, progress, on_result))


# Studies


def _replicates(replicates: int, replicate_range: Optional[Tuple[int, int]]) -> range:
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    if replicate_range is None:
        return range(replicates)
    start, stop = replicate_range
    if not 0 <= start < stop <= replicates:
        raise ConfigurationError(f"replicate range {start}:{stop} outside 0:{replicates}")
    return range(start, stop)


def _run_study(
    study: str,
    jobs: List[StudyJob],
    seed: int,
    replicates: int,
    variants: Tuple[ModelVariant, ...],
    workers: int,
    completed: Optional[Iterable[FitRecord]],
    progress: Optional[ProgressManager],
    on_result: Optional[Callable[[List[FitRecord]], None]],
) -> StudyResult:
    done = {r.key: r for r in (completed or []) if r.study == study}
    pending = [job for job in jobs if not all(key in done for key in job.expected_keys)]
    if done:
        logger.info(f"[Study] Resuming {study}: {len(jobs) - len(pending)} of {len(jobs)} jobs already complete")
    logger.info(f"[Study] Running {study}: {len(pending)} jobs on {workers} worker(s)")

    fresh = run_jobs(execute_job, pending, workers, progress, on_result)
    records = merge_records(list(done.values()), *fresh)
    failures = sum(1 for r in records if r.error is not None)
    if failures:
        logger.warning(f"[Study] [WARN] {failures} fit(s) failed; see the error column")
    logger.info(f"[Study] [OK] {study}: {len(records)} fits")
    return StudyResult(
        study=study,
        records=records,
        aggregates=aggregate(records),
        seed=seed,
        replicates=replicates,
        variants=tuple(v.value for v in variants),
        metadata={
            "paired_datasets": True,
            "aggregation": "converged replicates only (all-replicate columns alongside)",
            "validation_rounding": "round half to even",
        },
    )


def _variants(variants: Optional[Iterable]) -> Tuple[ModelVariant, ...]:
    if not variants:
        return tuple(ModelVariant)
    parsed = {ModelVariant.parse(v) for v in variants}
    return tuple(v for v in ModelVariant if v in parsed)


def run_grid(
    replicates: int,
    variants: Optional[Iterable] = None,
    config: Optional[McmcConfig] = None,
    scenario_filter: Optional[str] = None,
    seed: int = 0,
    workers: int = 1,
    completed: Optional[Iterable[FitRecord]] = None,
    replicate_range: Optional[Tuple[int, int]] = None,
    threshold: float = 1.1,
    progress: Optional[ProgressManager] = None,
    on_result: Optional[Callable[[List[FitRecord]], None]] = None,
) -> StudyResult:
    """
    Replicate the 48-scenario grid, fitting each variant to every dataset.

    Args:
        replicates: Datasets per scenario
        variants: Variants to fit (default all four)
        config: Sampler settings (default desk scale)
        scenario_filter: Filter such as "lambda=0.5,T=5"
        seed: Master seed
        workers: Process pool size
        completed: Records from an earlier run to skip
        replicate_range: (start, stop) shard of the replicates
        threshold: R-hat convergence threshold
        progress: Study progress subscriptions
        on_result: Called with each job's records as they finish

    Returns:
        StudyResult
    """
    config = config or McmcConfig.desk()
    chosen = _variants(variants)
    filters = parse_filter(scenario_filter)
    jobs = [
        StudyJob(
            study=GRID,
            scenario_index=index,
            spec=spec,
            replicate=r,
            data_seed=derive_seed(seed, Stream.STUDY, STUDY_KEYS[GRID], index, r),
            variants=chosen,
            config=config,
            threshold=threshold,
        )
        for index, spec in enumerate(scenario_grid())
        if matches(spec, filters)
        for r in _replicates(replicates, replicate_range)
    ]
    if not jobs:
        raise ConfigurationError(f"filter {scenario_filter!r} selects no scenarios")
    return _run_study(GRID, jobs, seed, replicates, chosen, workers, completed, progress, on_result)


def run_pointcount_sweep(
    replicates: int,
    config: Optional[McmcConfig] = None,
    seed: int = 0,
    workers: int = 1,
    sizes: Sequence[int] = POINT_COUNT_SIZES,
    completed: Optional[Iterable[FitRecord]] = None,
    replicate_range: Optional[Tuple[int, int]] = None,
    threshold: float = 1.1,
    progress: Optional[ProgressManager] = None,
    on_result: Optional[Callable[[List[FitRecord]], None]] = None,
) -> StudyResult:
    """
    Fit Model AC to each base covariate dataset with 5, 10, 20, 30 and 50 point-count sites.

    Returns:
        StudyResult whose aggregates feed sweep_table
    """
    config = config or McmcConfig.desk()
    base = covariate_experiment_specs()[-1].model_copy(update={"name": "sweep", "point_count_subset": None})
    sizes = tuple(sorted(int(s) for s in sizes))
    if not sizes or sizes[0] < 1 or sizes[-1] > base.count_sites:
        raise ConfigurationError(f"point-count sizes must lie in 1..{base.count_sites}")
    chosen = (ModelVariant.AC,)
    jobs = [
        StudyJob(
            study=POINTCOUNT_SWEEP,
            scenario_index=0,
            spec=base,
            replicate=r,
            data_seed=derive_seed(seed, Stream.STUDY, STUDY_KEYS[POINTCOUNT_SWEEP], 0, r),
            variants=chosen,
            config=config,
            subset_sizes=sizes,
            threshold=threshold,
        )
        for r in _replicates(replicates, replicate_range)
    ]
    return _run_study(POINTCOUNT_SWEEP, jobs, seed, replicates, chosen, workers, completed, progress, on_result)


def run_covariate_designs(
    replicates: int,
    variants: Optional[Iterable] = None,
    config: Optional[McmcConfig] = None,
    seed: int = 0,
    workers: int = 1,
    completed: Optional[Iterable[FitRecord]] = None,
    replicate_range: Optional[Tuple[int, int]] = None,
    threshold: float = 1.1,
    progress: Optional[ProgressManager] = None,
    on_result: Optional[Callable[[List[FitRecord]], None]] = None,
) -> StudyResult:
    """Covariate-abundance scenarios with equal, acoustic-heavy and count-heavy layouts."""
    config = config or McmcConfig.desk()
    chosen = _variants(variants)
    jobs = [
        StudyJob(
            study=COVARIATE_DESIGNS,
            scenario_index=index,
            spec=spec,
            replicate=r,
            data_seed=derive_seed(seed, Stream.STUDY, STUDY_KEYS[COVARIATE_DESIGNS], index, r),
            variants=chosen,
            config=config,
            threshold=threshold,
        )
        for index, spec in enumerate(covariate_design_specs())
        for r in _replicates(replicates, replicate_range)
    ]
    return _run_study(COVARIATE_DESIGNS, jobs, seed, replicates, chosen, workers, completed, progress, on_result)


# Aggregation


def merge_records(*record_lists: Iterable[FitRecord]) -> List[FitRecord]:
    """
    Merge shards into one list sorted by (study, scenario, replicate, point counts, variant).

    A key seen twice keeps its first record; a conflicting dataset digest is
    logged.
    """
    merged: Dict[Tuple, FitRecord] = {}
    for records in record_lists:
        for record in records:
            existing = merged.get(record.key)
            if existing is None:
                merged[record.key] = record
            elif existing.dataset_digest != record.dataset_digest:
                logger.warning(f"[Study] [WARN] conflicting records for {record.key}; keeping the first")
    return [merged[key] for key in sorted(merged)]


def _median(values: List[float]) -> float:
    return float(np.median(values)) if values else float("nan")


def aggregate(
    records: Iterable[FitRecord],
    parameters: Optional[Sequence[str]] = None,
) -> List[AggregateRow]:
    """
    Aggregate fit records per (scenario, variant, point counts, parameter).

    Bias, interval width and coverage are medians or fractions over the
    converged replicates; the *_all columns use every replicate with a
    summary. A cell without converged replicates is marked unavailable.

    Args:
        records: Fit records
        parameters: Parameters to report (default per study)

    Returns:
        Rows in key order
    """
    groups: Dict[Tuple, List[FitRecord]] = {}
    for record in merge_records(records):
        key = (record.study, record.scenario_index, VARIANT_ORDER[ModelVariant.parse(record.variant)], record.point_counts)
        groups.setdefault(key, []).append(record)

    rows: List[AggregateRow] = []
    for key in sorted(groups):
        group = groups[key]
        first = group[0]
        names = parameters or STUDY_PARAMETERS.get(first.study, ())
        for name in names:
            fitted = [r for r in group if name in r.summaries and name in r.truth]
            if not fitted and not any(r.error for r in group):
                continue
            good = [r for r in fitted if r.converged]
            bias = [relative_bias(r.summaries[name].median, r.truth[name]).value for r in good]
            bias_all = [relative_bias(r.summaries[name].median, r.truth[name]).value for r in fitted]
            rows.append(AggregateRow(
                study=first.study,
                scenario=first.scenario,
                scenario_index=first.scenario_index,
                variant=first.variant,
                point_counts=first.point_counts,
                parameter=name,
                replicates=len(group),
                converged=len(good),
                convergence_fraction=len(good) / len(group),
                median_rel_bias_pct=_median(bias),
                median_abs_rel_bias_pct=_median([abs(b) for b in bias]),
                median_ci_width=_median([r.summaries[name].ci_width for r in good]),
                coverage=float(np.mean([r.summaries[name].covers(r.truth[name]) for r in good])) if good else float("nan"),
                median_rel_bias_pct_all=_median(bias_all),
                median_ci_width_all=_median([r.summaries[name].ci_width for r in fitted]),
                available=bool(good),
            ))
    return rows


def sweep_table(rows: Iterable[AggregateRow], variant: str = ModelVariant.AC.value) -> List[Dict[str, float]]:
    """
    Pivot point-count sweep aggregates into one row per point-count size.

    Columns: point_counts, beta0_re_pct, beta0_ci_width, beta1_re_pct, beta1_ci_width.
    """
    table: Dict[int, Dict[str, float]] = {}
    for row in rows:
        if row.variant != variant or row.parameter not in (BETA0, BETA1):
            continue
        entry = table.setdefault(row.point_counts, {"point_counts": row.point_counts})
        entry[f"{row.parameter}_re_pct"] = row.median_rel_bias_pct
        entry[f"{row.parameter}_ci_width"] = row.median_ci_width
    columns = ("point_counts", "beta0_re_pct", "beta0_ci_width", "beta1_re_pct", "beta1_ci_width")
    return [
        {column: table[size].get(column, float("nan")) for column in columns}
        for size in sorted(table)
    ]
