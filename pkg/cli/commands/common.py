"""Options shared by the sampling sub-commands."""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Tuple

from tqdm import tqdm

from integrated_abundance.events import ProgressEvent, ProgressManager
from integrated_abundance.exceptions import StorageError
from integrated_abundance.mcmc import McmcConfig, make_config

from ..config import Settings, layer, load_config_file
from ..models import MANIFEST_FILE, RunManifest
from ..models.manifest import build_timestamp

logger = logging.getLogger(__name__)

PRESETS = {
    "desk": dict(chains=3, iterations=4000, burn_in=1000, adapt=1000, thin=1),
    "full": dict(chains=3, iterations=10000, burn_in=3000, adapt=5000, thin=2),
}


def add_sampler_arguments(parser: argparse.ArgumentParser) -> None:
    """Sampler flags; each overrides the config file and the preset."""
    group = parser.add_argument_group("sampler")
    group.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                       help="Chain length preset (default: desk)")
    group.add_argument("--config", type=Path,
                       help="TOML or JSON file with sampler settings (priors, fixed values, ...)")
    group.add_argument("--chains", type=int, help="Number of chains")
    group.add_argument("--iters", dest="iterations", type=int, help="Iterations per chain")
    group.add_argument("--burn", dest="burn_in", type=int, help="Burn-in iterations (after adaptation)")
    group.add_argument("--adapt", type=int, help="Adaptive iterations")
    group.add_argument("--thin", type=int, help="Thinning interval")
    group.add_argument("--seed", type=int, help="Master seed")
    group.add_argument("--workers", type=int, help="Worker processes (default: IABUND_WORKERS or 1)")
    group.add_argument("--k-strategy", choices=["sample", "marginalize"],
                       help="Sample latent true calls or sum them out")
    group.add_argument("--target-accept", type=float, help="Adaptation target acceptance rate")
    group.add_argument("--threshold", type=float, default=1.1,
                       help="R-hat convergence threshold (default: 1.1)")
    group.add_argument("--no-progress", action="store_true", help="Hide progress bars")


def build_sampler_config(args: argparse.Namespace, settings: Settings) -> Tuple[McmcConfig, Dict[str, str]]:
    """
    Layer sampler settings: flag > config file > preset > environment > default.

    Returns:
        (McmcConfig, source of every explicitly set field)
    """
    defaults: Dict[str, Any] = {"workers": settings.workers}
    defaults.update(PRESETS[args.preset])
    file_values = load_config_file(getattr(args, "config", None))
    inline = {
        "chains": args.chains,
        "iterations": args.iterations,
        "burn_in": args.burn_in,
        "adapt": args.adapt,
        "thin": args.thin,
        "seed": args.seed,
        "workers": args.workers,
        "k_strategy": args.k_strategy,
        "target_accept": args.target_accept,
    }
    values, sources = layer(defaults, file_values, inline)
    if sources.get("workers") == "default":
        sources["workers"] = "settings"
    return make_config(**values), sources


class ProgressBar:
    """tqdm display fed by progress events."""

    def __init__(self, total: int, description: str, unit: str, disable: bool = False):
        self._bar = tqdm(total=total, desc=description, unit=unit, disable=disable, leave=False)
        self._seen: Dict[Tuple[str, int], int] = {}
        self.manager = ProgressManager()
        self.manager.subscribe(self._on_event)

    def _on_event(self, event: ProgressEvent) -> None:
        if event.source == "study":
            self._bar.update(1)
            return
        key = (event.source, event.index)
        self._bar.update(event.completed - self._seen.get(key, 0))
        self._seen[key] = event.completed
        if event.log_density is not None:
            self._bar.set_postfix(chain=event.index, logp=f"{event.log_density:.1f}")

    def close(self) -> None:
        self._bar.close()
        self.manager.clear()

    def __enter__(self) -> "ProgressBar":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_manifest(directory: Path, manifest: RunManifest, settings: Settings) -> None:
    """Write manifest.json; outputs written with an earlier seal must still match it."""
    path = Path(directory) / MANIFEST_FILE
    stamped = manifest.manifest_digest
    manifest.seal()
    if stamped is not None and manifest.manifest_digest != stamped:
        raise StorageError(f"manifest for {directory} changed after its outputs were written")
    if manifest.timestamp is None:
        manifest.timestamp = build_timestamp(settings.wall_clock)
    try:
        path.write_text(manifest.to_json(), encoding="utf-8", newline="\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}")
    logger.info(f"[Manifest] {path} ({manifest.manifest_digest[:12]})")
