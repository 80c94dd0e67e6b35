"""Benchmark ingestion: materialize per-variant problem sets (optionally via
a preprocess command), cache results by content hash, and write a manifest
mapping shared problem ids to per-variant paths.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .runner import ProblemRef

MANIFEST_SCHEMA_VERSION = 1


class IngestError(ValueError):
    """Raised when a benchmark cannot be ingested."""


@dataclass(frozen=True)
class VariantSpec:
    """One problem-set variant: a root directory, a file glob, and an
    optional preprocess command with {in} and {out} placeholders."""

    root: str
    glob: str = "**/*"
    preprocess: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Benchmark:
    """A named benchmark whose problem ids are paths relative to each
    variant root; the same id under two variants is the same problem."""

    name: str
    variants: dict[str, VariantSpec]
    problems: dict[str, dict[str, str]]  # pid -> variant -> path
    warnings: int = 0

    def problem_refs(self, variant: str) -> list[ProblemRef]:
        if variant not in self.variants:
            raise IngestError(f"unknown variant: {variant!r}")
        return [
            ProblemRef(pid, paths[variant])
            for pid, paths in sorted(self.problems.items())
        ]


def _load_spec(source: str | Path | Mapping[str, Any]) -> tuple[Mapping[str, Any], Path]:
    if isinstance(source, Mapping):
        return source, Path.cwd()
    path = Path(source)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IngestError(f"cannot load benchmark spec: {e}") from None
    return doc, path.parent


def _content_key(source: Path, command: tuple[str, ...] | None) -> str:
    h = hashlib.sha256()
    h.update(source.read_bytes())
    h.update(json.dumps(list(command or ())).encode())
    return h.hexdigest()


def ingest(source: str | Path | Mapping[str, Any], out_dir: str | Path,
           log=None) -> Benchmark:
    """Materialize a benchmark into out_dir and write its manifest.

    Idempotent: a second run with unchanged sources and commands invokes
    zero preprocess commands.  Problems failing preprocessing and problems
    present in only some variants are excluded with a warning; every variant
    must yield at least one problem file.
    """
    doc, base = _load_spec(source)
    name = str(doc.get("name", "benchmark"))
    raw_variants = doc.get("variants", {})
    if not raw_variants:
        raise IngestError("benchmark spec declares no variants")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_path = out_dir / ".ingest-cache.json"
    cache: dict[str, str] = {}
    if cache_path.exists():
        try:
            cache = json.loads(cache_path.read_text())
        except json.JSONDecodeError:
            cache = {}

    warnings = 0
    variants: dict[str, VariantSpec] = {}
    per_variant: dict[str, dict[str, str]] = {}
    for vid, entry in raw_variants.items():
        spec = VariantSpec(
            root=str(entry["root"]),
            glob=str(entry.get("glob", "**/*")),
            preprocess=tuple(entry["preprocess"]) if entry.get("preprocess") else None,
        )
        variants[vid] = spec
        root = (base / spec.root).resolve()
        if not root.is_dir():
            raise IngestError(f"variant {vid!r} root is not a directory: {root}")
        found = sorted(p for p in root.glob(spec.glob) if p.is_file())
        if not found:
            raise IngestError(f"variant {vid!r} matched no problem files")
        paths: dict[str, str] = {}
        for src in found:
            pid = src.relative_to(root).as_posix()
            if spec.preprocess is None:
                paths[pid] = str(src)
                continue
            dest = out_dir / vid / pid
            key = f"{vid}:{pid}"
            digest = _content_key(src, spec.preprocess)
            if cache.get(key) == digest and dest.exists():
                paths[pid] = str(dest)
                continue
            dest.parent.mkdir(parents=True, exist_ok=True)
            cmd = [
                tok.replace("{in}", str(src)).replace("{out}", str(dest))
                for tok in spec.preprocess
            ]
            try:
                proc = subprocess.run(cmd, capture_output=True, text=True)
                ok = proc.returncode == 0 and dest.exists()
            except OSError:
                ok = False
            if not ok:
                warnings += 1
                if log is not None:
                    log(f"warning: preprocess failed for {pid} ({vid}), excluded")
                cache.pop(key, None)
                continue
            cache[key] = digest
            paths[pid] = str(dest)
        per_variant[vid] = paths

    # The shared universe is the intersection of ids over all variants.
    shared = set.intersection(*(set(p) for p in per_variant.values()))
    for vid, paths in per_variant.items():
        for pid in set(paths) - shared:
            warnings += 1
            if log is not None:
                log(f"warning: problem {pid} only in variant {vid}, excluded")
    problems = {
        pid: {vid: per_variant[vid][pid] for vid in variants}
        for pid in sorted(shared)
    }

    cache_path.write_text(json.dumps(cache, indent=1, sort_keys=True) + "\n")
    bench = Benchmark(name, variants, problems, warnings)
    manifest = {
        "kind": "manifest",
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "name": name,
        "variants": sorted(variants),
        "problems": problems,
        "warnings": warnings,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return bench


def load_manifest(path: str | Path) -> Benchmark:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IngestError(f"cannot load manifest: {e}") from None
    if doc.get("kind") != "manifest":
        raise IngestError(f"not a manifest file: {path}")
    variants = {vid: VariantSpec(root="") for vid in doc.get("variants", [])}
    return Benchmark(
        name=doc.get("name", "benchmark"),
        variants=variants,
        problems=doc.get("problems", {}),
        warnings=int(doc.get("warnings", 0)),
    )
