"""Run manifest model."""

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from integrated_abundance import __version__
from integrated_abundance.diagnostics import convergence_metadata

MANIFEST_FILE = "manifest.json"


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_timestamp(wall_clock: bool = False) -> Optional[str]:
    """
    UTC timestamp for a manifest.

    SOURCE_DATE_EPOCH wins when set. Otherwise the wall clock is used only on
    request, and None keeps repeated runs byte-identical.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    elif wall_clock:
        moment = datetime.now(timezone.utc)
    else:
        return None
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


class RunManifest(BaseModel):
    """Provenance of one CLI run."""

    tool: str = "integrated-abundance"
    tool_version: str = __version__
    command: str
    master_seed: int
    config: Dict[str, Any] = Field(default_factory=dict)
    config_digest: str = ""
    config_sources: Dict[str, str] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    decisions: Dict[str, Any] = Field(default_factory=dict)
    results: Dict[str, Any] = Field(default_factory=dict)
    timestamp: Optional[str] = None
    manifest_digest: Optional[str] = None

    def model_post_init(self, __context) -> None:
        if not self.config_digest:
            payload = json.dumps(self.config, sort_keys=True, default=str)
            self.config_digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        if not self.decisions:
            self.decisions = default_decisions()

    def record_inputs(self, directory: Path, names) -> None:
        for name in names:
            path = Path(directory) / name
            if path.exists():
                self.inputs[name] = file_digest(path)

    def record_outputs(self, directory: Path, names) -> None:
        for name in names:
            path = Path(directory) / name
            if path.exists():
                self.outputs[name] = file_digest(path)

    def seal(self) -> "RunManifest":
        """
        Compute manifest_digest over everything except the timestamp and outputs.

        Outputs carry the digest themselves, so it must be known before they
        are written. Sealing again after record_outputs gives the same value.
        """
        body = self.model_dump(exclude={"timestamp", "manifest_digest", "outputs"})
        payload = json.dumps(body, sort_keys=True, default=str)
        self.manifest_digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), indent=2, sort_keys=True, default=str) + "\n"


def default_decisions() -> Dict[str, Any]:
    decisions: Dict[str, Any] = {
        "validation_rounding": "round half to even",
        "aggregation_rule": "converged replicates only; all-replicate columns alongside",
        "paired_datasets": True,
        "sampler_schedule": "adapt, then burn-in, then retained",
    }
    decisions.update(convergence_metadata())
    return decisions
