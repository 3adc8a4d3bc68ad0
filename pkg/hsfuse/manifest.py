"""Run manifests: every flag, seed and input hash needed to reproduce a command."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterable
from pathlib import Path

from hsfuse.types import ManifestPayload

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
HASH_CHUNK_BYTES = 1 << 20


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(HASH_CHUNK_BYTES):
            digest.update(chunk)
    return digest.hexdigest()


def _jsonable(value: object) -> object:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float) and value != value:
        return None
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return getattr(value, "value")  # enums
    return value


def build_manifest(
    command: str,
    argv: list[str],
    flags: dict[str, object],
    seeds: dict[str, int],
    precision: str,
    inputs: Iterable[str | Path],
    outputs: Iterable[str | Path] = (),
    parameter_count: int | None = None,
) -> ManifestPayload:
    from hsfuse import __version__

    manifest = ManifestPayload(
        tool="hsfuse",
        version=__version__,
        command=command,
        argv=list(argv),
        flags={key: _jsonable(value) for key, value in flags.items() if not callable(value)},
        seeds=dict(seeds),
        precision=precision,
        inputs={str(path): sha256_file(path) for path in inputs},
        outputs=[str(path) for path in outputs],
    )
    if parameter_count is not None:
        manifest["parameter_count"] = parameter_count
    return manifest


def write_manifest(path: str | Path, manifest: ManifestPayload) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> ManifestPayload:
    data = json.loads(Path(path).read_text())
    if data.get("tool") != "hsfuse" or not isinstance(data.get("argv"), list):
        raise ValueError(f"{path} is not an hsfuse manifest")
    return ManifestPayload(**data)  # type: ignore[typeddict-item]


def changed_inputs(manifest: ManifestPayload) -> list[str]:
    """Inputs that are missing or whose hash no longer matches the manifest."""
    changed = []
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or sha256_file(path) != digest:
            changed.append(path)
    return changed
