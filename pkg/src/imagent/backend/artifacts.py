"""Content-addressed artifact storage for one run.

Files are named <sha256-hex>.<format> inside a single directory, so a
write is idempotent and two identical images share one file. Writes go
through a temp file plus os.replace to stay atomic under concurrent
best-of-N fan-out.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import threading
from pathlib import Path

from ..errors import DanglingArtifactError, UnreadableImage
from ..types import IMAGE_FORMATS, ImageRef

_SUFFIX_TO_FORMAT = {
    ".png": "png",
    ".jpg": "jpeg",
    ".jpeg": "jpeg",
    ".sim-json": "sim-json",
}


def compute_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactStore:
    """Flat content-addressed directory of image artifacts."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _filename(self, digest: str, format: str) -> str:
        return f"{digest}.{format}"

    def resolve(self, ref: ImageRef) -> Path:
        return self.root / self._filename(ref.digest, ref.format)

    def put(
        self,
        data: bytes,
        format: str,
        width: int | None = None,
        height: int | None = None,
    ) -> ImageRef:
        if format not in IMAGE_FORMATS:
            raise UnreadableImage(f"unknown image format: {format!r}")
        digest = compute_digest(data)
        name = self._filename(digest, format)
        target = self.root / name
        with self._lock:
            if not target.exists():
                fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
                try:
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(data)
                    os.replace(tmp, target)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
        return ImageRef(
            digest=digest,
            format=format,
            path=f"{self.root.name}/{name}",
            width=width,
            height=height,
        )

    def read(self, ref: ImageRef) -> bytes:
        path = self.resolve(ref)
        if not path.exists():
            raise DanglingArtifactError(f"artifact {ref.digest}.{ref.format} not in store")
        return path.read_bytes()

    def has(self, ref: ImageRef) -> bool:
        return self.resolve(ref).exists()

    def ingest(self, path: Path | str, format: str | None = None) -> ImageRef:
        """Copy an outside file into the store, inferring format from suffix."""
        src = Path(path)
        if format is None:
            format = _SUFFIX_TO_FORMAT.get(src.suffix.lower())
            if format is None:
                raise UnreadableImage(f"cannot infer image format from {src.name!r}")
        try:
            data = src.read_bytes()
        except OSError as exc:
            raise UnreadableImage(f"cannot read {src}: {exc}") from exc
        return self.put(data, format)
