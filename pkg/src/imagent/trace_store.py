"""Trace persistence, validation, and replay.

A run directory holds trace.json plus an artifacts/ directory of
content-addressed image files. trace.json is wrapped in a versioned
envelope and validated against the JSON Schema shipped with the package,
so traces written today stay checkable after the code moves on.

Serialization is canonical (sorted keys, fixed indentation), which makes
"same run, same bytes" a real property instead of a hope. Wall-clock
durations are the one nondeterministic field; comparison helpers strip
them.
"""

from __future__ import annotations

import json
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .agent import _run
from .errors import DanglingArtifactError, SchemaMismatchError, UnreadableImage
from .backend.artifacts import compute_digest
from .types import ActionKind, AgentState, Decision, ImageRef, Mode, RunConfig, Trace

SCHEMA_VERSION = 1
ARTIFACT_DIR_NAME = "artifacts"

_schema_cache: dict[str, Any] = {}


def trace_schema() -> dict[str, Any]:
    if "schema" not in _schema_cache:
        text = resources.files("imagent").joinpath("schemas/trace.schema.json").read_text("utf-8")
        _schema_cache["schema"] = json.loads(text)
    return _schema_cache["schema"]


def _validator() -> jsonschema.Draft202012Validator:
    if "validator" not in _schema_cache:
        _schema_cache["validator"] = jsonschema.Draft202012Validator(trace_schema())
    return _schema_cache["validator"]


def to_file_dict(trace: Trace) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "artifact_dir": ARTIFACT_DIR_NAME,
        "trace": trace.to_dict(),
    }


def strip_durations(obj: Any) -> Any:
    """Deep-copy `obj` with every duration_s key removed."""
    if isinstance(obj, dict):
        return {k: strip_durations(v) for k, v in obj.items() if k != "duration_s"}
    if isinstance(obj, list):
        return [strip_durations(v) for v in obj]
    return obj


def canonical_json(doc: dict[str, Any], include_durations: bool = True) -> str:
    if not include_durations:
        doc = strip_durations(doc)
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _referenced_artifacts(trace: Trace) -> tuple[list[ImageRef], set[str]]:
    """Full refs we can check exactly, plus bare digests from step records."""
    refs = [r for r in (trace.initial_image, trace.final_image) if r is not None]
    digests: set[str] = set()
    for step in trace.steps:
        for digest in (step.image_digest_before, step.image_digest_after):
            if digest:
                digests.add(digest)
    return refs, digests


def save_trace(trace: Trace, run_dir: Path | str) -> Path:
    """Write run_dir/trace.json atomically.

    The backend's artifact store must be rooted at run_dir/artifacts;
    every artifact the trace references has to exist there already, or
    the save refuses to produce a dangling trace.
    """
    run_dir = Path(run_dir)
    artifact_root = run_dir / ARTIFACT_DIR_NAME
    refs, digests = _referenced_artifacts(trace)
    for ref in refs:
        if not (artifact_root / f"{ref.digest}.{ref.format}").exists():
            raise DanglingArtifactError(f"artifact {ref.digest}.{ref.format} missing from {artifact_root}")
    for digest in digests:
        if not list(artifact_root.glob(f"{digest}.*")):
            raise DanglingArtifactError(f"artifact {digest} missing from {artifact_root}")

    run_dir.mkdir(parents=True, exist_ok=True)
    payload = canonical_json(to_file_dict(trace)).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=run_dir, prefix=".trace-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        target = run_dir / "trace.json"
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def load_trace(path: Path | str) -> Trace:
    path = Path(path)
    doc = json.loads(path.read_text("utf-8"))
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"trace declares schema_version {version!r}; this build reads {SCHEMA_VERSION}"
        )
    trace = Trace.from_dict(doc["trace"])
    trace.source_dir = path.parent
    return trace


def validate(path: Path | str) -> list[str]:
    """Check one trace file; returns human-readable violations (empty = ok)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, ValueError) as exc:
        return [f"unreadable trace file: {exc}"]

    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if version != SCHEMA_VERSION:
        return [f"unsupported schema_version {version!r} (this build reads {SCHEMA_VERSION})"]

    violations = [
        f"schema: {err.json_path}: {err.message}"
        for err in sorted(_validator().iter_errors(doc), key=lambda e: e.json_path)[:20]
    ]
    if violations:
        return violations

    artifact_root = path.parent / doc["artifact_dir"]
    trace = Trace.from_dict(doc["trace"])
    refs, digests = _referenced_artifacts(trace)
    seen: set[str] = set()
    for ref in refs:
        file = artifact_root / f"{ref.digest}.{ref.format}"
        seen.add(ref.digest)
        if not file.exists():
            violations.append(f"artifact missing: {ref.digest}.{ref.format}")
        elif compute_digest(file.read_bytes()) != ref.digest:
            violations.append(f"artifact corrupt: {ref.digest}.{ref.format}")
    for digest in sorted(digests - seen):
        matches = list(artifact_root.glob(f"{digest}.*"))
        if not matches:
            violations.append(f"artifact missing: {digest}")
            continue
        for file in matches:
            if compute_digest(file.read_bytes()) != digest:
                violations.append(f"artifact corrupt: {file.name}")
    return violations


def trace_diff(a: Trace, b: Trace, include_durations: bool = False) -> list[str]:
    """Structured field-level differences between two traces."""
    da = a.to_dict() if include_durations else strip_durations(a.to_dict())
    db = b.to_dict() if include_durations else strip_durations(b.to_dict())
    diffs: list[str] = []

    def walk(path: str, x: Any, y: Any) -> None:
        if len(diffs) >= 50:
            return
        if isinstance(x, dict) and isinstance(y, dict):
            for key in sorted(set(x) | set(y)):
                walk(f"{path}.{key}" if path else key, x.get(key), y.get(key))
        elif isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                diffs.append(f"{path}: length {len(x)} != {len(y)}")
                return
            for i, (xi, yi) in enumerate(zip(x, y)):
                walk(f"{path}[{i}]", xi, yi)
        elif x != y:
            diffs.append(f"{path}: {x!r} != {y!r}")

    walk("", da, db)
    return diffs


def _materialize(ref: ImageRef, backend, source_dir: Path | None) -> ImageRef:
    """Make sure `ref`'s bytes exist in the backend's store for replay."""
    if backend.store.has(ref):
        return ref
    if source_dir is None:
        raise DanglingArtifactError(
            f"artifact {ref.digest} not in the replay store and no source directory known"
        )
    src = Path(source_dir) / ref.path
    if not src.exists():
        raise DanglingArtifactError(f"artifact {ref.digest} missing from {source_dir}")
    copied = backend.store.put(src.read_bytes(), ref.format)
    if copied.digest != ref.digest:
        raise UnreadableImage(f"source artifact {src.name} does not hash to its digest")
    return copied


def replay(trace: Trace, backend, source_dir: Path | str | None = None) -> Trace:
    """Re-execute a recorded run, forcing its decisions, on `backend`.

    The controller is bypassed entirely: recorded decisions are replayed
    verbatim in order. On a deterministic backend with the same world
    parameters and seed this reproduces the original prompts and image
    digests. Traces that aborted mid-run replay their executed prefix and
    then stop.
    """
    if source_dir is None:
        source_dir = trace.source_dir
    decisions = [s.decision for s in trace.steps]
    if trace.final_decision is not None:
        decisions.append(trace.final_decision)

    def forced(backend_, state: AgentState, config: RunConfig) -> Decision:
        idx = state.step_index - 1
        if idx < len(decisions):
            return decisions[idx]
        return Decision(
            action=ActionKind.STOP,
            rationale="replay exhausted recorded decisions",
            raw="",
            parse_attempts=0,
        )

    image = trace.initial_image
    if trace.mode is Mode.EDITING and image is not None:
        image = _materialize(image, backend, Path(source_dir) if source_dir else None)

    return _run(trace.config, backend, trace.initial_prompt, image, trace.mode, forced)
