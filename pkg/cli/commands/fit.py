"""fit: run the sampler on a dataset directory."""

import argparse
import logging
from pathlib import Path

from integrated_abundance.diagnostics import converged, rhat_below, summarize_output
from integrated_abundance.exceptions import ConvergenceError
from integrated_abundance.mcmc import run
from integrated_abundance.models import AbundanceKind, ModelVariant

from ..config import Settings
from ..models import RunManifest
from ..storage import DATASET_FILES, DRAWS_FILE, SUMMARY_FILE, TRUTH_FILE, ensure_dir, read_dataset, write_draws, write_summary
from .common import ProgressBar, add_sampler_arguments, build_sampler_config, write_manifest

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  integrated-abundance fit --data data/g17 --variant AC --out fits/g17-ac
  integrated-abundance fit --data data/g17 --variant AC --chains 3 --iters 10000 --burn 3000 --adapt 5000 --thin 2 --out fits/full
  integrated-abundance fit --data data/g17 --variant ACV --preset full --workers 3 --out fits/acv

Exit codes: 0 converged, 2 invalid data or settings, 3 not converged, 4 I/O error
"""


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "fit",
        help="Fit a model variant to a dataset",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    parser.add_argument("--variant", required=True, help="AV, C, AC or ACV")
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--abundance", choices=[k.value for k in AbundanceKind],
                        help="Abundance model (default: log-linear when sites.csv has a covariate)")
    parser.add_argument("--allow-nonconverged", action="store_true",
                        help="Exit 0 even when R-hat is above the threshold")
    parser.add_argument("--save-latent", action="store_true", help="Also write N[i] draws")
    parser.add_argument("--summarize-latent", action="store_true", help="Also summarize N[i]")
    add_sampler_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, settings: Settings) -> int:
    variant = ModelVariant.parse(args.variant)
    config, sources = build_sampler_config(args, settings)
    if args.abundance:
        config = config.model_copy(update={"abundance_kind": AbundanceKind(args.abundance)})
        sources["abundance_kind"] = "flag"

    dataset = read_dataset(args.data, variant)
    logger.info(f"[Fit] Dataset {dataset.digest()[:12]} ({', '.join(dataset.active_blocks)})")

    with ProgressBar(config.chains * config.iterations, f"fit {variant.value}", "it", args.no_progress) as bar:
        output = run(dataset, config, progress=bar.manager)

    summaries = summarize_output(output, include_latent=args.summarize_latent)
    ok = converged(summaries, args.threshold)

    manifest = RunManifest(
        command="fit",
        master_seed=config.seed,
        config={**config.model_dump(mode="json"), "variant": variant.value, "threshold": args.threshold},
        config_sources=sources,
        results={
            "converged": ok,
            "config_hash": output.config_hash,
            "dataset_digest": dataset.digest(),
            "acceptance_rates": output.acceptance_rates,
            "retained_draws": output.num_draws,
            "abundance_kind": output.metadata["abundance_kind"],
        },
    )
    manifest.decisions["k_strategy"] = config.k_strategy
    manifest.record_inputs(args.data, (*DATASET_FILES, TRUTH_FILE))
    manifest.seal()

    out = ensure_dir(args.out)
    write_draws(out / DRAWS_FILE, output, include_latent=args.save_latent, manifest_digest=manifest.manifest_digest)
    write_summary(out / SUMMARY_FILE, summaries, manifest_digest=manifest.manifest_digest)
    manifest.record_outputs(out, (DRAWS_FILE, SUMMARY_FILE))
    write_manifest(out, manifest, settings)

    for s in summaries.values():
        if not s.is_latent:
            logger.info(
                f"[Fit] {s.parameter:>7}: median {s.median:.4g} "
                f"[{s.ci_lower:.4g}, {s.ci_upper:.4g}] R-hat {s.rhat:.3f} ESS {s.ess:.0f}"
            )

    if not ok:
        failing = [s.parameter for s in summaries.values() if not s.is_latent and not rhat_below(s.rhat, args.threshold)]
        message = f"not converged: R-hat >= {args.threshold} for {', '.join(failing)}"
        if not args.allow_nonconverged:
            raise ConvergenceError(message)
        logger.warning(f"[Fit] [WARN] {message}")
    else:
        logger.info("[Fit] [OK] converged")
    return 0
