"""study: replicated simulation studies."""

import argparse
import logging
from pathlib import Path
from typing import Optional, Tuple

from integrated_abundance import study as harness
from integrated_abundance.exceptions import ConfigurationError
from integrated_abundance.simulator import POINT_COUNT_SIZES, matches, parse_filter, scenario_grid

from ..config import Settings
from ..models import RunManifest
from ..storage import RECORDS_FILE, append_records, ensure_dir, read_records, write_study
from .common import ProgressBar, add_sampler_arguments, build_sampler_config, write_manifest

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  integrated-abundance study grid --replicates 10 --filter "lambda=0.5,T=5" --out studies/grid
  integrated-abundance study pointcount-sweep --replicates 25 --workers 4 --out studies/sweep
  integrated-abundance study covariate-designs --variants AC,ACV --out studies/cov
  integrated-abundance study grid --replicates 100 --preset full --shard 0:50 --out shards/a
  integrated-abundance study grid --replicates 10 --resume --out studies/grid

Filter fields: name, total_sites, layout, R, I, J, T, alpha1, p, lambda, kind
"""


def parse_shard(text: Optional[str]) -> Optional[Tuple[int, int]]:
    """Parse "START:STOP" into a replicate range."""
    if not text:
        return None
    try:
        start, stop = (int(part) for part in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"shard {text!r} is not START:STOP")
    return start, stop


def _variants(text: Optional[str]):
    return [part.strip() for part in text.split(",") if part.strip()] if text else None


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "study",
        help="Run a replicated simulation study",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    kinds = parser.add_subparsers(dest="study", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, required=True, help="Output directory")
    common.add_argument("--replicates", type=int, default=25, help="Replicates per scenario (default: 25)")
    common.add_argument("--shard", help="Only replicates START:STOP (merge shards afterwards)")
    common.add_argument("--resume", action="store_true", help="Skip jobs already in records.jsonl")
    add_sampler_arguments(common)

    grid = kinds.add_parser(harness.GRID, parents=[common], help="48-scenario grid")
    grid.add_argument("--filter", help='Scenario filter such as "lambda=0.5,T=5"')
    grid.add_argument("--variants", help="Comma-separated variants (default: all)")

    kinds.add_parser(harness.POINTCOUNT_SWEEP, parents=[common],
                     help=f"Model AC with {', '.join(map(str, POINT_COUNT_SIZES))} point-count sites")

    designs = kinds.add_parser(harness.COVARIATE_DESIGNS, parents=[common], help="Covariate-abundance layouts")
    designs.add_argument("--variants", help="Comma-separated variants (default: all)")

    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: Settings) -> int:
    config, sources = build_sampler_config(args, settings)
    out = ensure_dir(args.out)
    journal = out / RECORDS_FILE
    completed = read_records(journal) if args.resume else []
    if not args.resume and journal.exists():
        journal.unlink()
    shard = parse_shard(args.shard)

    # Chains run inside the study workers
    workers = config.workers
    config = config.model_copy(update={"workers": 1})
    common = dict(
        config=config,
        seed=config.seed,
        workers=workers,
        completed=completed,
        replicate_range=shard,
        threshold=args.threshold,
        on_result=lambda records: append_records(journal, records),
    )

    if args.study == harness.GRID:
        selected = len([s for s in scenario_grid() if matches(s, parse_filter(args.filter))])
        total = selected * (len(range(*shard)) if shard else args.replicates)
        with ProgressBar(total, "grid", "job", args.no_progress) as bar:
            result = harness.run_grid(
                args.replicates, _variants(args.variants), scenario_filter=args.filter, progress=bar.manager, **common
            )
    elif args.study == harness.POINTCOUNT_SWEEP:
        total = len(range(*shard)) if shard else args.replicates
        with ProgressBar(total, "sweep", "job", args.no_progress) as bar:
            result = harness.run_pointcount_sweep(args.replicates, progress=bar.manager, **common)
    else:
        total = 3 * (len(range(*shard)) if shard else args.replicates)
        with ProgressBar(total, "covariate", "job", args.no_progress) as bar:
            result = harness.run_covariate_designs(
                args.replicates, _variants(getattr(args, "variants", None)), progress=bar.manager, **common
            )

    manifest = RunManifest(
        command=f"study {args.study}",
        master_seed=config.seed,
        config={
            "sampler": config.model_dump(mode="json"),
            "replicates": args.replicates,
            "shard": args.shard,
            "variants": list(result.variants),
            "filter": getattr(args, "filter", None),
            "threshold": args.threshold,
        },
        config_sources=sources,
        results={
            "fits": len(result.records),
            "failures": len(result.failures),
            "converged": sum(1 for r in result.records if r.converged),
        },
    )
    manifest.decisions.update(result.metadata)
    manifest.seal()
    written = write_study(out, result, manifest.manifest_digest)
    manifest.record_outputs(out, written)
    write_manifest(out, manifest, settings)
    logger.info(f"[Study] [OK] {len(result.records)} fits written to {out}")
    return 0
