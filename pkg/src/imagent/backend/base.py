"""Backend protocol: the three verbs every model host must answer.

A backend owns an artifact store so generate/edit can hand back
content-addressed ImageRefs instead of raw bytes. Implementations must
derive all randomness from their call arguments; two calls with the same
arguments on fresh instances return the same artifact digest where the
implementation claims determinism.
"""

from __future__ import annotations

import tempfile
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import UnreadableImage
from ..types import ImageRef
from .artifacts import ArtifactStore

# Per-call timeouts in seconds.
UNDERSTAND_TIMEOUT = 60.0
GENERATE_TIMEOUT = 120.0
EDIT_TIMEOUT = 120.0


@dataclass(frozen=True)
class BackendCapabilities:
    supports_edit: bool
    supports_image_in_understand: bool


@dataclass
class UnderstandRequest:
    """One text query, optionally with images attached.

    template_id names which prompt family produced the text so simulated
    and stub backends can dispatch without guessing from the wording.
    """

    text: str
    template_id: str
    images: list[ImageRef] = field(default_factory=list)


class Backend(ABC):
    """Interface to a unified understand/generate/edit model host."""

    # Set by implementations that benefit from parallel candidate calls.
    supports_concurrent_calls = False

    def __init__(self, artifact_dir: Path | str | None = None):
        if artifact_dir is None:
            artifact_dir = tempfile.mkdtemp(prefix="imagent-artifacts-")
        self.store = ArtifactStore(artifact_dir)

    @abstractmethod
    def capabilities(self) -> BackendCapabilities:
        ...

    @abstractmethod
    def understand(self, request: UnderstandRequest) -> str:
        ...

    @abstractmethod
    def generate(self, prompt: str, seed: int) -> ImageRef:
        ...

    @abstractmethod
    def edit(self, prompt: str, image: ImageRef, seed: int) -> ImageRef:
        ...

    def describe(self) -> dict[str, Any]:
        """JSON-safe summary recorded into traces; enough to rebuild the
        backend for replay (minus secrets)."""
        return {"kind": self.__class__.__name__}

    def check_readable(self, ref: ImageRef) -> None:
        """Raise UnreadableImage unless `ref` resolves to usable bytes."""
        data = self.store.read(ref)
        if not data:
            raise UnreadableImage(f"artifact {ref.digest} is empty")
