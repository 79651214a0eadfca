"""Model adapters behind the shim's HTTP surface.

An adapter is the host that actually understands text and synthesizes
images; the server wraps exactly one of them. StubAdapter is a tiny
deterministic world: an image is a sorted bag of the content words in its
prompt, edits merge new words in, the judge grades exact word overlap, and
the controller drafts once and then stops. That is enough to drive every
client behaviour end to end with no model weights involved.
"""

from __future__ import annotations

import json
import re
from abc import ABC, abstractmethod

# words that shape the request rather than the picture
STOPWORDS = frozenset(
    "a an the and or of in on at by for with over under to into from "
    "add remove please".split()
)

_TOKEN_RE = re.compile(r"[a-z]+")
_FIELD_TEMPLATE = r"(?m)^{label}:[ \t]*(.*)$"
_STEP_RE = re.compile(r"(?m)^step:[ \t]*(\d+)")
_PERMITTED_RE = re.compile(r"(?m)^-\s+([A-Za-z0-9_]+):")

Image = tuple[str, bytes]  # (format, raw bytes)


def content_words(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower())) - STOPWORDS


def _field(text: str, label: str) -> str | None:
    m = re.search(_FIELD_TEMPLATE.format(label=re.escape(label)), text)
    return m.group(1).strip() if m else None


def bag_to_bytes(attributes) -> bytes:
    doc = {"attributes": sorted(set(attributes))}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def bag_from_bytes(data: bytes) -> set[str]:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return set()
    attrs = doc.get("attributes") if isinstance(doc, dict) else None
    if not isinstance(attrs, list):
        return set()
    return {str(a) for a in attrs}


class Adapter(ABC):
    """One model host: text reasoning plus image synthesis.

    Capability flags must be truthful; the server enforces them on the
    wire (501 capability_missing) and clients are entitled to trust them.
    """

    supports_edit: bool = True
    supports_image_in_understand: bool = True

    @abstractmethod
    def understand(self, text: str, template_id: str | None, images: list[Image]) -> str:
        """Answer a rendered template. Must return non-empty text."""

    @abstractmethod
    def generate(self, prompt: str, seed: int) -> Image:
        """Make an image. Same (prompt, seed) must return the same bytes."""

    @abstractmethod
    def edit(self, prompt: str, seed: int, image: Image) -> Image:
        """Revise an existing image per the instruction in `prompt`."""


class StubAdapter(Adapter):
    def __init__(self, supports_edit: bool = True, supports_image_in_understand: bool = True):
        self.supports_edit = supports_edit
        self.supports_image_in_understand = supports_image_in_understand

    # ---- images ---------------------------------------------------------

    def generate(self, prompt: str, seed: int) -> Image:
        return "sim-json", bag_to_bytes(content_words(prompt))

    def edit(self, prompt: str, seed: int, image: Image) -> Image:
        _format, data = image
        return "sim-json", bag_to_bytes(bag_from_bytes(data) | content_words(prompt))

    # ---- text -----------------------------------------------------------

    def understand(self, text: str, template_id: str | None, images: list[Image]) -> str:
        if template_id == "judge":
            return self._judge(text, images)
        if template_id in ("policy_generation", "policy_editing"):
            return self._decide(text)
        if template_id == "enhance":
            return self._enhance(text)
        if template_id == "revise":
            return self._revise(text, images)
        if template_id == "refine_instruction":
            return self._refine_instruction(text, images)
        return "ok: " + text[:80] if text else "ok"

    def _judge(self, text: str, images: list[Image]) -> str:
        if not images:
            return "Score: 0 — no image attached"
        wanted = content_words(_field(text, "prompt") or "")
        if not wanted:
            return "Score: 10 — no gradable keywords"
        present = bag_from_bytes(images[0][1])
        missing = sorted(wanted - present)
        matched = len(wanted) - len(missing)
        if missing:
            return f"Score: {matched}/{len(wanted)} — missing: {', '.join(missing)}"
        return f"Score: {matched}/{len(wanted)} — all keywords present"

    def _decide(self, text: str) -> str:
        step_match = _STEP_RE.search(text)
        step = int(step_match.group(1)) if step_match else 1
        permitted = _PERMITTED_RE.findall(text)
        if step > 1 and "STOP" in permitted:
            return json.dumps({"action": "STOP", "reason": "one draft is enough here"})
        if "naive_generation" in permitted:
            return json.dumps({"action": "naive_generation", "reason": "draft first"})
        if permitted:
            return json.dumps({"action": permitted[0], "reason": "first permitted move"})
        return json.dumps({"action": "STOP", "reason": "nothing else is permitted"})

    def _enhance(self, text: str) -> str:
        original = _field(text, "original request") or ""
        if not original:
            return ""
        if original.endswith(", richly detailed"):
            return original
        return original + ", richly detailed"

    def _revise(self, text: str, images: list[Image]) -> str:
        original = _field(text, "original request") or ""
        present = bag_from_bytes(images[0][1]) if images else set()
        missing = sorted(content_words(original) - present)
        summary = ", ".join(sorted(present)) if present else "nothing recognizable"
        return (
            f"IMAGE SUMMARY: shows {summary}\n"
            f"DISCREPANCIES: {', '.join(missing)}\n"
            f"REVISED PROMPT: {original}"
        )

    def _refine_instruction(self, text: str, images: list[Image]) -> str:
        wanted = content_words(_field(text, "current prompt") or "")
        present = bag_from_bytes(images[0][1]) if images else set()
        missing = sorted(wanted - present)
        if not missing:
            return ""
        return "add " + ", ".join(missing)
