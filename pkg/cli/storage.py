"""CSV / JSON persistence of datasets, posterior draws and study results.

All CSV files are written canonically: LF line endings, fixed column order,
no index column, unpadded integers, reals in shortest round-trip form and
blank fields for missing cells. Row numbers in error messages are file line
numbers (the header is line 1).

Files written by a CLI run carry the run's manifest digest: a trailing
``manifest_digest`` column in CSV files, a ``manifest_digest`` key in JSON
files and on every journal line. Readers ignore it.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from integrated_abundance.calibration import CalibrationResult
from integrated_abundance.dataset import validate_dataset
from integrated_abundance.diagnostics import PosteriorSummary
from integrated_abundance.exceptions import DatasetError, StorageError
from integrated_abundance.mcmc import ChainOutput
from integrated_abundance.models import (
    AcousticData,
    CountData,
    Dataset,
    ModelVariant,
    SurveyDesign,
    TruthRecord,
    ValidationData,
)
from integrated_abundance.study import POINTCOUNT_SWEEP, AggregateRow, FitRecord, StudyResult, sweep_table

logger = logging.getLogger(__name__)

ACOUSTIC_FILE = "acoustic.csv"
VALIDATION_FILE = "validation.csv"
COUNTS_FILE = "counts.csv"
SITES_FILE = "sites.csv"
TRUTH_FILE = "truth.json"
DRAWS_FILE = "draws.csv"
SUMMARY_FILE = "summary.csv"
RECORDS_FILE = "records.jsonl"
FITS_FILE = "fits.csv"
AGGREGATES_FILE = "aggregates.csv"
SWEEP_FILE = "sweep_table.csv"
CALIBRATION_FILE = "calibration.csv"
RANKS_FILE = "calibration_ranks.csv"

MANIFEST_COLUMN = "manifest_digest"

DATASET_FILES = (ACOUSTIC_FILE, VALIDATION_FILE, COUNTS_FILE, SITES_FILE)
SUMMARY_COLUMNS = ["parameter", "median", "ci_lower", "ci_upper", "ci_width", "rhat", "ess"]

FIRST_DATA_LINE = 2


def ensure_dir(directory: Path) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create output directory {directory}: {e}")
    return directory


def write_csv(frame: pd.DataFrame, path: Path, manifest_digest: Optional[str] = None) -> None:
    """Write a frame in the canonical CSV form, stamped with the manifest digest when given."""
    if manifest_digest is not None:
        frame = frame.assign(**{MANIFEST_COLUMN: manifest_digest})
    try:
        frame.to_csv(path, index=False, lineterminator="\n", na_rep="")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}")


def write_json(data, path: Path, manifest_digest: Optional[str] = None) -> None:
    if manifest_digest is not None:
        data = {**data, MANIFEST_COLUMN: manifest_digest}
    try:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}")


def _masked_ints(values: np.ndarray, mask: np.ndarray) -> pd.Series:
    return pd.Series(values.reshape(-1), dtype="Int64").mask(mask.reshape(-1))


# Datasets


def write_dataset(
    directory: Path,
    dataset: Dataset,
    truth: Optional[TruthRecord] = None,
    extra_truth=None,
    manifest_digest: Optional[str] = None,
) -> List[str]:
    """
    Write a dataset (and optionally its truth) as CSV files.

    Site ids in every file are global site indices.

    Returns:
        Names of the files written
    """
    directory = ensure_dir(directory)
    design = dataset.design
    written: List[str] = []

    G = design.num_sites
    covariate = dataset.covariate if dataset.covariate is not None else np.full(G, np.nan)
    sites = pd.DataFrame({
        "site": np.arange(G),
        "x_covariate": covariate,
        "is_acoustic": np.isin(np.arange(G), design.acoustic_index).astype(np.int64),
        "is_count": np.isin(np.arange(G), design.count_index).astype(np.int64),
    })
    write_csv(sites, directory / SITES_FILE, manifest_digest)
    written.append(SITES_FILE)

    if dataset.acoustic is not None:
        R, J = design.num_acoustic_sites, design.acoustic_surveys
        mask = dataset.acoustic.missing_mask
        keys = {"site": np.repeat(design.acoustic_index, J), "survey": np.tile(np.arange(J), R)}
        acoustic = pd.DataFrame({
            **keys,
            "y": _masked_ints(dataset.acoustic.y, mask),
            "v": _masked_ints(dataset.acoustic.v, mask),
        })
        write_csv(acoustic, directory / ACOUSTIC_FILE, manifest_digest)
        written.append(ACOUSTIC_FILE)

        if dataset.validation is not None:
            validation = pd.DataFrame({
                **keys,
                "n": _masked_ints(dataset.validation.n, mask),
                "k": _masked_ints(dataset.validation.k, mask),
            })
            write_csv(validation, directory / VALIDATION_FILE, manifest_digest)
            written.append(VALIDATION_FILE)

    if dataset.counts is not None:
        I, T = design.num_count_sites, design.count_surveys
        counts = pd.DataFrame({
            "site": np.repeat(design.count_index, T),
            "visit": np.tile(np.arange(T), I),
            "c": _masked_ints(dataset.counts.c, dataset.counts.missing_mask),
        })
        write_csv(counts, directory / COUNTS_FILE, manifest_digest)
        written.append(COUNTS_FILE)

    if truth is not None:
        data = truth.as_dict()
        if extra_truth:
            data.update(extra_truth)
        write_json(data, directory / TRUTH_FILE, manifest_digest)
        written.append(TRUTH_FILE)

    logger.info(f"[Storage] Wrote {', '.join(written)} to {directory}")
    return written


def _read_frame(directory: Path, name: str, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(directory) / name
    if not path.exists():
        raise DatasetError("file not found", file=name)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError("file is empty", file=name)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise StorageError(f"cannot read {path}: {e}")
    for column in columns:
        if column not in frame.columns:
            raise DatasetError(f"missing column {column!r}", file=name, field=column)
    return frame


def _line(index: int) -> int:
    return int(index) + FIRST_DATA_LINE


def _int_column(frame: pd.DataFrame, column: str, file: str, required: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Integer column as (values with blanks set to 0, present mask)."""
    text = frame[column].astype(str).str.strip()
    blank = text == ""
    if required and blank.any():
        raise DatasetError("missing value", file=file, row=_line(np.flatnonzero(blank)[0]), field=column)
    numbers = pd.to_numeric(text.where(~blank), errors="coerce")
    bad = ~blank & (numbers.isna() | (numbers % 1 != 0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DatasetError(f"not an integer: {text.iloc[i]!r}", file=file, row=_line(i), field=column)
    return numbers.fillna(0).astype(np.int64).to_numpy(), (~blank).to_numpy()


def _check_range(values: np.ndarray, allowed, file: str, column: str, message: str) -> None:
    bad = ~np.isin(values, np.asarray(list(allowed), dtype=np.int64))
    if bad.any():
        raise DatasetError(message, file=file, row=_line(np.flatnonzero(bad)[0]), field=column)


def _check_unique(keys: List[Tuple[int, int]], file: str, column: str) -> None:
    seen = set()
    for i, key in enumerate(keys):
        if key in seen:
            raise DatasetError(f"duplicate entry for {key}", file=file, row=_line(i), field=column)
        seen.add(key)


def _read_sites(directory: Path):
    frame = _read_frame(directory, SITES_FILE, ["site", "x_covariate", "is_acoustic", "is_count"])
    site, _ = _int_column(frame, "site", SITES_FILE)
    _check_range(site, range(len(frame)), SITES_FILE, "site", "site ids must be 0..G-1")
    if len(np.unique(site)) != len(site):
        _check_unique([(int(s), 0) for s in site], SITES_FILE, "site")
    is_acoustic, _ = _int_column(frame, "is_acoustic", SITES_FILE)
    is_count, _ = _int_column(frame, "is_count", SITES_FILE)
    _check_range(is_acoustic, (0, 1), SITES_FILE, "is_acoustic", "flag must be 0 or 1")
    _check_range(is_count, (0, 1), SITES_FILE, "is_count", "flag must be 0 or 1")

    text = frame["x_covariate"].astype(str).str.strip()
    blank = (text == "").to_numpy()
    covariate = None
    if not blank.all():
        if blank.any():
            raise DatasetError("covariate missing for some sites", file=SITES_FILE, row=_line(np.flatnonzero(blank)[0]), field="x_covariate")
        numbers = pd.to_numeric(text, errors="coerce")
        if numbers.isna().any():
            i = int(np.flatnonzero(numbers.isna())[0])
            raise DatasetError(f"not a number: {text.iloc[i]!r}", file=SITES_FILE, row=_line(i), field="x_covariate")
        covariate = np.empty(len(frame))
        covariate[site] = np.array([float(t) for t in text], dtype=np.float64)

    acoustic_sites = np.sort(site[is_acoustic == 1])
    count_sites = np.sort(site[is_count == 1])
    return acoustic_sites, count_sites, covariate


def _read_cells(directory: Path, name: str, key: str, values: Sequence[str], sites: np.ndarray):
    """Read a (site, survey|visit) long file into per-row arrays."""
    frame = _read_frame(directory, name, ["site", key, *values])
    if frame.empty:
        raise DatasetError("no data rows", file=name)
    site, _ = _int_column(frame, "site", name)
    index, _ = _int_column(frame, key, name)
    _check_range(site, sites, name, "site", "site is not listed for this survey in sites.csv")
    if (index < 0).any():
        raise DatasetError("negative index", file=name, row=_line(np.flatnonzero(index < 0)[0]), field=key)
    _check_unique(list(zip(site.tolist(), index.tolist())), name, key)
    row_of_site = {int(g): r for r, g in enumerate(sites)}
    rows = np.array([row_of_site[int(g)] for g in site], dtype=np.int64)
    columns = {}
    for column in values:
        columns[column], has = _int_column(frame, column, name, required=False)
        columns[column + "_present"] = has
    return frame, rows, index, columns


def _both_or_neither(columns, first: str, second: str, file: str) -> np.ndarray:
    a, b = columns[first + "_present"], columns[second + "_present"]
    bad = a != b
    if bad.any():
        raise DatasetError(f"{first} and {second} must both be given or both blank", file=file, row=_line(np.flatnonzero(bad)[0]), field=second)
    return a


def read_dataset(directory: Path, variant) -> Dataset:
    """
    Read and validate a dataset directory for a variant.

    Dimensions are recovered from the files: R and I from sites.csv, J and T
    as one plus the largest survey / visit index. Absent or blank cells are
    missing (masked).

    Raises:
        DatasetError: Naming the file, row and field of the first violation
        StorageError: If a file cannot be read
    """
    directory = Path(directory)
    variant = ModelVariant.parse(variant)
    for needed, name in ((variant.uses_acoustic, ACOUSTIC_FILE), (variant.uses_validation, VALIDATION_FILE), (variant.uses_counts, COUNTS_FILE)):
        if needed and not (directory / name).exists():
            raise DatasetError(f"variant {variant.value} requires {name}", file=name)

    acoustic_sites, count_sites, covariate = _read_sites(directory)
    cell_rows: Dict[Tuple[str, Tuple[int, ...]], int] = {}

    acoustic = validation = counts = None
    J = T = 1
    if (directory / ACOUSTIC_FILE).exists():
        frame, rows, surveys, cols = _read_cells(directory, ACOUSTIC_FILE, "survey", ("y", "v"), acoustic_sites)
        present = _both_or_neither(cols, "y", "v", ACOUSTIC_FILE)
        J = int(surveys.max()) + 1
        shape = (len(acoustic_sites), J)
        y, v = np.zeros(shape, np.int64), np.zeros(shape, np.int64)
        missing = np.ones(shape, dtype=bool)
        y[rows, surveys], v[rows, surveys] = cols["y"], cols["v"]
        missing[rows, surveys] = ~present
        for i, (r, j) in enumerate(zip(rows, surveys)):
            cell_rows[("acoustic", (int(r), int(j)))] = _line(i)
        acoustic = AcousticData.from_arrays(y, v, missing)

        if (directory / VALIDATION_FILE).exists():
            frame, vrows, vsurveys, vcols = _read_cells(directory, VALIDATION_FILE, "survey", ("n", "k"), acoustic_sites)
            _both_or_neither(vcols, "n", "k", VALIDATION_FILE)
            outside = vsurveys >= J
            if outside.any():
                raise DatasetError("survey not present in acoustic.csv", file=VALIDATION_FILE, row=_line(np.flatnonzero(outside)[0]), field="survey")
            n, k = np.zeros(shape, np.int64), np.zeros(shape, np.int64)
            n[vrows, vsurveys], k[vrows, vsurveys] = vcols["n"], vcols["k"]
            for i, (r, j) in enumerate(zip(vrows, vsurveys)):
                cell_rows[("validation", (int(r), int(j)))] = _line(i)
            validation = ValidationData.from_arrays(n, k)
    elif (directory / VALIDATION_FILE).exists():
        raise DatasetError("validation data without acoustic.csv", file=ACOUSTIC_FILE)

    if (directory / COUNTS_FILE).exists():
        frame, crows, visits, ccols = _read_cells(directory, COUNTS_FILE, "visit", ("c",), count_sites)
        T = int(visits.max()) + 1
        shape = (len(count_sites), T)
        c = np.zeros(shape, np.int64)
        cmissing = np.ones(shape, dtype=bool)
        c[crows, visits] = ccols["c"]
        cmissing[crows, visits] = ~ccols["c_present"]
        for i, (r, t) in enumerate(zip(crows, visits)):
            cell_rows[("counts", (int(r), int(t)))] = _line(i)
        counts = CountData.from_arrays(c, cmissing)

    try:
        design = SurveyDesign(
            num_acoustic_sites=len(acoustic_sites),
            num_count_sites=len(count_sites),
            acoustic_surveys=J,
            count_surveys=T,
            site_map=tuple(int(g) for g in count_sites),
            acoustic_site_map=tuple(int(g) for g in acoustic_sites),
        )
        return validate_dataset(design, acoustic, validation, counts, variant, covariate=covariate)
    except DatasetError as e:
        files = {"acoustic": ACOUSTIC_FILE, "validation": VALIDATION_FILE, "counts": COUNTS_FILE}
        file = files.get(e.block, SITES_FILE)
        row = cell_rows.get((e.block, tuple(int(i) for i in e.cell))) if e.cell is not None else None
        raise e.located(file, row=row, field=e.field) from None


def read_truth(directory: Path) -> Dict[str, object]:
    path = Path(directory) / TRUTH_FILE
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise DatasetError(f"invalid JSON: {e.msg}", file=TRUTH_FILE, row=e.lineno)


# Posterior output


def write_draws(path: Path, output: ChainOutput, include_latent: bool = False, manifest_digest: Optional[str] = None) -> None:
    """Long-format draws: chain, iteration, parameter, value."""
    start = int(output.metadata.get("start_iteration", 0))
    thin = int(output.metadata.get("thin", 1))
    iterations = start + (np.arange(output.draws_per_chain) + 1) * thin - 1
    names = list(output.parameters)
    if include_latent:
        names += [f"N[{i}]" for i in range(output.latent_n.shape[2])]
    frames = []
    for name in names:
        x = output.chain_draws(name)
        frames.append(pd.DataFrame({
            "chain": np.repeat(np.arange(output.num_chains), output.draws_per_chain),
            "iteration": np.tile(iterations, output.num_chains),
            "parameter": name,
            "value": x.reshape(-1),
        }))
    write_csv(pd.concat(frames, ignore_index=True), path, manifest_digest)


def summary_frame(summaries: Dict[str, PosteriorSummary]) -> pd.DataFrame:
    rows = [{column: getattr(s, column) for column in SUMMARY_COLUMNS} for s in summaries.values()]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(path: Path, summaries: Dict[str, PosteriorSummary], manifest_digest: Optional[str] = None) -> None:
    write_csv(summary_frame(summaries), path, manifest_digest)


# Study records


def append_records(path: Path, records: Iterable[FitRecord], manifest_digest: Optional[str] = None) -> None:
    """Append records to a JSON-lines journal."""
    stamp = {MANIFEST_COLUMN: manifest_digest} if manifest_digest is not None else {}
    try:
        with open(path, "a", encoding="utf-8", newline="\n") as f:
            for record in records:
                f.write(json.dumps({**record.to_dict(), **stamp}, sort_keys=True) + "\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}")


def write_records(path: Path, records: Iterable[FitRecord], manifest_digest: Optional[str] = None) -> None:
    """Rewrite a journal in key order."""
    try:
        Path(path).unlink(missing_ok=True)
    except OSError as e:
        raise StorageError(f"cannot replace {path}: {e}")
    append_records(path, records, manifest_digest)


def read_records(path: Path) -> List[FitRecord]:
    """
    Read a JSON-lines journal.

    Raises:
        StorageError: If the file cannot be read or a line is malformed
    """
    path = Path(path)
    if not path.exists():
        return []
    records: List[FitRecord] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}")
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            data.pop(MANIFEST_COLUMN, None)
            records.append(FitRecord.from_dict(data))
        except (json.JSONDecodeError, TypeError, ValueError, AttributeError) as e:
            raise StorageError(f"malformed record (file={path.name}, row={number}): {e}")
    return records


def fits_frame(records: Iterable[FitRecord]) -> pd.DataFrame:
    columns = [
        "study", "scenario", "variant", "replicate", "point_counts", "dataset_digest", "fit_seed",
        "converged", "parameter", *SUMMARY_COLUMNS[1:], "truth", "error",
    ]
    rows = []
    for record in records:
        base = {
            "study": record.study,
            "scenario": record.scenario,
            "variant": record.variant,
            "replicate": record.replicate,
            "point_counts": record.point_counts,
            "dataset_digest": record.dataset_digest,
            "fit_seed": str(record.fit_seed),
            "converged": int(record.converged),
            "error": record.error or "",
        }
        if not record.summaries:
            rows.append({**base, "parameter": ""})
        for name, s in record.summaries.items():
            rows.append({
                **base,
                "parameter": name,
                **{column: getattr(s, column) for column in SUMMARY_COLUMNS[1:]},
                "truth": record.truth.get(name, np.nan),
            })
    return pd.DataFrame(rows, columns=columns)


def aggregates_frame(rows: Iterable[AggregateRow]) -> pd.DataFrame:
    dicts = [row.as_dict() for row in rows]
    if not dicts:
        return pd.DataFrame(columns=list(AggregateRow.__dataclass_fields__))
    frame = pd.DataFrame(dicts)
    frame["available"] = frame["available"].astype(int)
    return frame


def write_study(directory: Path, result: StudyResult, manifest_digest: Optional[str] = None) -> List[str]:
    """
    Write a study's records, per-fit rows and aggregates.

    Returns:
        Names of the files written (the journal excluded)
    """
    directory = ensure_dir(directory)
    write_records(directory / RECORDS_FILE, result.records, manifest_digest)
    write_csv(fits_frame(result.records), directory / FITS_FILE, manifest_digest)
    write_csv(aggregates_frame(result.aggregates), directory / AGGREGATES_FILE, manifest_digest)
    written = [FITS_FILE, AGGREGATES_FILE]
    if result.study == POINTCOUNT_SWEEP:
        table = sweep_table(result.aggregates)
        write_csv(pd.DataFrame(table, columns=["point_counts", "beta0_re_pct", "beta0_ci_width", "beta1_re_pct", "beta1_ci_width"]), directory / SWEEP_FILE, manifest_digest)
        written.append(SWEEP_FILE)
    logger.info(f"[Storage] Wrote {', '.join(written)} to {directory}")
    return written


def write_calibration(directory: Path, result: CalibrationResult, manifest_digest: Optional[str] = None) -> List[str]:
    """Write the uniformity tests and the per-replicate ranks."""
    directory = ensure_dir(directory)
    tests = pd.DataFrame(
        [
            {
                "parameter": name,
                "statistic": test.statistic,
                "pvalue": test.pvalue,
                "passes": test.passes(),
                **{f"bin{b}": int(c) for b, c in enumerate(test.counts)},
            }
            for name, test in result.tests.items()
        ]
    )
    write_csv(tests, directory / CALIBRATION_FILE, manifest_digest)
    ranks = pd.DataFrame({name: result.ranks[name] for name in result.parameters})
    ranks.insert(0, "fit", np.arange(len(ranks), dtype=np.int64))
    write_csv(ranks, directory / RANKS_FILE, manifest_digest)
    return [CALIBRATION_FILE, RANKS_FILE]
