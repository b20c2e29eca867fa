"""Artifact persistence helpers: manifests, hashing, deterministic writers.

Every pipeline stage writes a ``manifest.json`` next to its outputs recording
the stage name, tool version, resolved config, seed, input hashes, and output
hashes.  Downstream stages re-hash the upstream outputs and refuse to run on
mismatch (stale or hand-edited artifacts) unless forced.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import time
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    exit_code = 1


class DataError(Exception):
    exit_code = 2


class InvariantError(Exception):
    exit_code = 3


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def open_gzip_writer(path):
    """Gzip writer with pinned mtime so identical content gives identical bytes."""
    raw = open(path, "wb")
    return gzip.GzipFile(fileobj=raw, mode="wb", mtime=0)


def write_manifest(
    stage_dir,
    stage: str,
    inputs: dict[str, str] | None = None,
    outputs: list[str] | None = None,
    config: dict | None = None,
    seed: int | None = None,
    extra: dict | None = None,
) -> dict:
    """Write the stage manifest; output hashes cover the listed files."""
    stage_dir = Path(stage_dir)
    stage_dir.mkdir(parents=True, exist_ok=True)
    out_hashes = {}
    for name in outputs or []:
        p = stage_dir / name
        if p.is_dir():
            for sub in sorted(p.rglob("*")):
                if sub.is_file():
                    out_hashes[str(sub.relative_to(stage_dir))] = sha256_file(sub)
        elif p.exists():
            out_hashes[name] = sha256_file(p)
    manifest = {
        "stage": stage,
        "tool_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in (inputs or {}).items()
        },
        "outputs": out_hashes,
        "config": config or {},
        "seed": seed,
    }
    if extra:
        manifest.update(extra)
    dump_json(stage_dir / MANIFEST_NAME, manifest)
    return manifest


def require_artifact(stage_dir, stage: str, force: bool = False) -> dict:
    """Load and verify an upstream stage's manifest.

    Missing artifact names the stage to run; hash drift between the manifest
    and the files on disk is an error unless ``force``.
    """
    stage_dir = Path(stage_dir)
    manifest_path = stage_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(
            f"missing artifact for stage '{stage}' ({stage_dir}); run `copurchase {stage}` first"
        )
    manifest = load_json(manifest_path)
    if not force:
        for name, digest in manifest.get("outputs", {}).items():
            p = stage_dir / name
            if not p.exists():
                raise DataError(f"artifact file {p} missing (stage '{stage}'); re-run or use --force")
            if sha256_file(p) != digest:
                raise DataError(
                    f"artifact file {p} does not match its manifest hash "
                    f"(stage '{stage}' output is stale); re-run the stage or use --force"
                )
    return manifest
