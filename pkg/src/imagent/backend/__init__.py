"""Model backends: the simulated world, the HTTP client, and their shared
protocol pieces."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any

from .artifacts import ArtifactStore, compute_digest
from .base import Backend, BackendCapabilities, UnderstandRequest
from .conformance import run_conformance
from .http import HttpBackend
from .simulated import DEFAULT_VOCABULARY, SimulatedBackend, SimWorldConfig

__all__ = [
    "ArtifactStore",
    "Backend",
    "BackendCapabilities",
    "DEFAULT_VOCABULARY",
    "HttpBackend",
    "SimulatedBackend",
    "SimWorldConfig",
    "UnderstandRequest",
    "build_backend_from_info",
    "compute_digest",
    "run_conformance",
]


def build_backend_from_info(info: dict[str, Any], artifact_dir: Path | str) -> Backend:
    """Rebuild a backend from the backend_info block of a trace.

    Used by replay: the recorded world parameters (or endpoint) are
    enough to reconstruct an equivalent backend over a fresh artifact
    directory. Secrets are never stored in traces, so the API key comes
    from the environment.
    """
    kind = info.get("kind")
    if kind == "sim":
        world = SimWorldConfig(
            vocabulary=tuple(info.get("vocabulary", DEFAULT_VOCABULARY)),
            noise_rate=info.get("noise_rate", 0.0),
            refine_gain=info.get("refine_gain", 1),
            scripted_controller=info.get("scripted_controller"),
        )
        return SimulatedBackend(world, artifact_dir)
    if kind == "http":
        return HttpBackend(
            info["endpoint"],
            api_key=os.environ.get("IMAGENT_API_KEY"),
            artifact_dir=artifact_dir,
        )
    raise ValueError(f"cannot rebuild backend of kind {kind!r}")
