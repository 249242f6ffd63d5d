"""CLI models."""

from .manifest import RunManifest, MANIFEST_FILE, file_digest

__all__ = [
    "RunManifest",
    "MANIFEST_FILE",
    "file_digest",
]
