"""merge: combine study shards."""

import argparse
import json
import logging
from pathlib import Path

from integrated_abundance.exceptions import ConfigurationError, StorageError
from integrated_abundance.study import StudyResult, aggregate, merge_records

from ..config import Settings
from ..models import MANIFEST_FILE, RunManifest, file_digest
from ..storage import RECORDS_FILE, ensure_dir, read_records, write_study
from .common import write_manifest

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  integrated-abundance merge --out studies/grid shards/a shards/b
"""


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "merge",
        help="Merge study shards and recompute aggregates",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("shards", nargs="+", type=Path, help="Shard output directories")
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.set_defaults(handler=handle)


def _shard_seed(directory: Path) -> int:
    path = directory / MANIFEST_FILE
    if not path.exists():
        return 0
    try:
        return int(json.loads(path.read_text(encoding="utf-8")).get("master_seed", 0))
    except (OSError, ValueError):
        return 0


def handle(args: argparse.Namespace, settings: Settings) -> int:
    for directory in args.shards:
        if not (directory / RECORDS_FILE).exists():
            raise StorageError(f"{directory} has no {RECORDS_FILE}")
    shards = [read_records(directory / RECORDS_FILE) for directory in args.shards]
    records = merge_records(*shards)
    if not records:
        raise ConfigurationError("no records found in the given shards")
    studies = {r.study for r in records}
    if len(studies) != 1:
        raise ConfigurationError(f"shards mix studies: {sorted(studies)}")
    seeds = {_shard_seed(directory) for directory in args.shards}
    if len(seeds) > 1:
        logger.warning(f"[Merge] [WARN] shards were run with different seeds: {sorted(seeds)}")

    result = StudyResult(
        study=studies.pop(),
        records=records,
        aggregates=aggregate(records),
        seed=min(seeds),
        replicates=max(r.replicate for r in records) + 1,
        variants=tuple(sorted({r.variant for r in records})),
    )
    manifest = RunManifest(
        command="merge",
        master_seed=result.seed,
        config={"shards": [str(d) for d in args.shards], "study": result.study},
        results={"fits": len(records), "failures": len(result.failures)},
    )
    for directory in args.shards:
        manifest.inputs[f"{directory.name}/{RECORDS_FILE}"] = file_digest(directory / RECORDS_FILE)
    manifest.seal()

    out = ensure_dir(args.out)
    written = write_study(out, result, manifest.manifest_digest)
    manifest.record_outputs(out, written)
    write_manifest(out, manifest, settings)
    logger.info(f"[Merge] [OK] {len(records)} records from {len(args.shards)} shard(s)")
    return 0
