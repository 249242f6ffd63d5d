"""simulate: write a synthetic dataset."""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Tuple

from pydantic import ValidationError

from integrated_abundance.dataset import subset_counts
from integrated_abundance.exceptions import ConfigurationError
from integrated_abundance.models import AbundanceKind
from integrated_abundance.rng import Stream, stream
from integrated_abundance.simulator import ScenarioSpec, draw_point_count_subset, resolve_scenario, simulate

from ..config import Settings, layer, load_config_file
from ..models import RunManifest
from ..storage import write_dataset
from .common import write_manifest

logger = logging.getLogger(__name__)

EPILOG = """
Examples:
  integrated-abundance simulate --scenario grid:17 --seed 42 --out data/g17
  integrated-abundance simulate --lambda 0.5 --sites 50 --count-surveys 5 --out data/custom
  integrated-abundance simulate --scenario covariate:A>C --seed 7 --out data/cov
  integrated-abundance simulate --config scenario.toml --validation-fraction 0.3 --out data/x

Presets: grid:0 .. grid:47, sweep:5|10|20|30|50, covariate:A=C|A>C|A<C
"""

# flag dest -> ScenarioSpec field
SCENARIO_FLAGS = {
    "acoustic_sites": "acoustic_sites",
    "count_sites": "count_sites",
    "acoustic_surveys": "acoustic_surveys",
    "count_surveys": "count_surveys",
    "lam": "lam",
    "beta0": "beta0",
    "beta1": "beta1",
    "alpha0": "alpha0",
    "alpha1": "alpha1",
    "delta": "delta",
    "omega": "omega",
    "p": "p",
    "validation_fraction": "validation_fraction",
    "recording_coverage": "recording_coverage",
    "point_count_subset": "point_count_subset",
    "seed": "seed",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "simulate",
        help="Simulate a dataset from the generative model",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--scenario", help="Preset scenario name")
    parser.add_argument("--config", type=Path, help="TOML or JSON scenario file")
    parser.add_argument("--seed", type=int, help="Simulation seed")
    parser.add_argument("--sites", type=int, help="Acoustic and count sites (nested)")
    parser.add_argument("--acoustic-sites", type=int, help="Acoustic sites R")
    parser.add_argument("--count-sites", type=int, help="Point-count sites I")
    parser.add_argument("--acoustic-surveys", type=int, help="Acoustic surveys J")
    parser.add_argument("--count-surveys", type=int, help="Point-count visits T")
    parser.add_argument("--lambda", dest="lam", type=float, help="Constant expected abundance")
    parser.add_argument("--covariate", action="store_true", help="Log-linear abundance on a site covariate")
    parser.add_argument("--beta0", type=float, help="Log-linear intercept")
    parser.add_argument("--beta1", type=float, help="Log-linear slope")
    parser.add_argument("--alpha0", type=float, help="Logit site-level false-positive rate")
    parser.add_argument("--alpha1", type=float, help="Logit per-individual detection increment")
    parser.add_argument("--delta", type=float, help="Per-individual vocalization rate")
    parser.add_argument("--omega", type=float, help="False-positive vocalization rate")
    parser.add_argument("--p", type=float, help="Point-count detection probability")
    parser.add_argument("--validation-fraction", type=float, help="Fraction of calls checked")
    parser.add_argument("--recording-coverage", type=float, help="Fraction of acoustic surveys recorded")
    parser.add_argument("--point-count-subset", type=int, help="Keep this many random count sites")
    parser.set_defaults(handler=handle)


def _normalize(values: Dict[str, Any]) -> Dict[str, Any]:
    values = dict(values)
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    return values


def build_spec(args: argparse.Namespace) -> Tuple[ScenarioSpec, Dict[str, str]]:
    """
    Layer the scenario: flag > config file > preset > built-in default.

    Raises:
        ConfigurationError: On an unknown preset or an invalid field
    """
    preset = resolve_scenario(args.scenario).model_dump() if args.scenario else {}
    file_values = _normalize(load_config_file(args.config))
    inline = {field: getattr(args, dest) for dest, field in SCENARIO_FLAGS.items()}
    if args.sites is not None:
        inline["acoustic_sites"] = inline["acoustic_sites"] or args.sites
        inline["count_sites"] = inline["count_sites"] or args.sites
    if args.covariate:
        inline["abundance_kind"] = AbundanceKind.LOG_LINEAR

    values, sources = layer({k: v for k, v in preset.items()}, file_values, inline)
    if args.scenario:
        for key in list(sources):
            if sources[key] == "default":
                sources[key] = f"preset {args.scenario}"
    try:
        return ScenarioSpec(**values), sources
    except ValidationError as e:
        source = str(args.config) if args.config else "scenario"
        raise ConfigurationError.from_validation(e, source) from None


def handle(args: argparse.Namespace, settings: Settings) -> int:
    spec, sources = build_spec(args)
    logger.info(f"[Simulate] {spec.name} seed={spec.seed} R={spec.acoustic_sites} I={spec.count_sites}")

    dataset, truth = simulate(spec)
    extra = {"scenario": spec.model_dump(mode="json", by_alias=True)}
    if spec.point_count_subset is not None:
        rows = draw_point_count_subset(spec, stream(spec.seed, Stream.SUBSET, spec.point_count_subset))
        dataset = subset_counts(dataset, rows)
        extra["kept_count_sites"] = [int(r) for r in rows]

    manifest = RunManifest(
        command="simulate",
        master_seed=spec.seed,
        config=spec.model_dump(mode="json", by_alias=True),
        config_sources=sources,
        results={"dataset_digest": dataset.digest()},
    ).seal()
    written = write_dataset(args.out, dataset, truth, extra_truth=extra, manifest_digest=manifest.manifest_digest)
    manifest.record_outputs(args.out, written)
    write_manifest(args.out, manifest, settings)
    logger.info(f"[Simulate] [OK] dataset {dataset.digest()[:12]} written to {args.out}")
    return 0
