"""Deterministic in-process backend for tests and benches.

Images are attribute bags: a sorted list of vocabulary tokens serialized
as canonical JSON bytes ("sim-json"). They flow through the same
ImageRef plumbing as real pixels, so every loop invariant can be checked
without a model host.

World rules:
  generate  -> prompt keywords, each independently dropped with
               probability noise_rate under a seed derived from the call
               arguments only
  edit      -> closes up to refine_gain keyword gaps named by the edit
               instruction (seeded choice among the gaps)
  judge     -> exact overlap |keywords & attributes| / |keywords|,
               reported as a matched/total count so the evaluator can
               recover the fraction without rounding
  policy    -> scripted wire names when configured, else a greedy
               gap-closing heuristic

No method reads or writes shared mutable state, so one instance can
serve concurrent runs.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..errors import BadRequest, UnreadableImage
from ..seeds import stable64
from ..types import ImageRef
from .base import Backend, BackendCapabilities, UnderstandRequest

DEFAULT_VOCABULARY = (
    "amber", "basket", "bread", "bronze", "canyon", "cat", "cube",
    "dragon", "emerald", "fog", "forest", "glass", "harbor", "lantern",
    "maple", "marble", "mold", "moon", "mountain", "owl", "ribbon",
    "river", "rust", "silver", "sphere", "storm", "tower", "violet",
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass
class SimWorldConfig:
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    noise_rate: float = 0.0
    refine_gain: int = 1
    scripted_controller: list[str] | None = None

    def __post_init__(self):
        self.vocabulary = tuple(self.vocabulary)
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError(f"noise_rate must be in [0, 1], got {self.noise_rate}")
        if self.refine_gain < 1:
            raise ValueError(f"refine_gain must be positive, got {self.refine_gain}")


def _field(text: str, label: str) -> str:
    """Value of the first line starting with `label:`, or empty string."""
    m = re.search(rf"(?m)^{re.escape(label)}:[ \t]*(.*)$", text)
    return m.group(1).strip() if m else ""


class SimulatedBackend(Backend):
    """Backend over the attribute-bag world described in the module docs."""

    def __init__(
        self,
        world: SimWorldConfig | None = None,
        artifact_dir: Path | str | None = None,
    ):
        super().__init__(artifact_dir)
        self.world = world or SimWorldConfig()
        self._vocab = frozenset(self.world.vocabulary)

    # ---- world primitives -------------------------------------------------

    def keywords(self, text: str) -> frozenset[str]:
        return frozenset(_TOKEN_RE.findall(text.lower())) & self._vocab

    @staticmethod
    def encode_attributes(attributes) -> bytes:
        doc = {"attributes": sorted(set(attributes))}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def make_image(self, attributes) -> ImageRef:
        """Materialize an attribute bag as a stored artifact."""
        return self.store.put(self.encode_attributes(attributes), "sim-json")

    def decode(self, ref: ImageRef) -> frozenset[str]:
        data = self.store.read(ref)
        try:
            doc = json.loads(data.decode("utf-8"))
            attrs = doc["attributes"]
            if not isinstance(attrs, list):
                raise TypeError("attributes must be a list")
            return frozenset(str(a) for a in attrs)
        except (ValueError, KeyError, TypeError) as exc:
            raise UnreadableImage(f"artifact {ref.digest} is not a sim image: {exc}") from exc

    def check_readable(self, ref: ImageRef) -> None:
        self.decode(ref)

    # ---- backend verbs ----------------------------------------------------

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(supports_edit=True, supports_image_in_understand=True)

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "sim",
            "vocabulary": list(self.world.vocabulary),
            "noise_rate": self.world.noise_rate,
            "refine_gain": self.world.refine_gain,
            "scripted_controller": (
                list(self.world.scripted_controller)
                if self.world.scripted_controller is not None
                else None
            ),
        }

    def generate(self, prompt: str, seed: int) -> ImageRef:
        rng = random.Random(stable64("sim-gen", prompt, seed))
        kept = [k for k in sorted(self.keywords(prompt)) if rng.random() >= self.world.noise_rate]
        return self.make_image(kept)

    def edit(self, prompt: str, image: ImageRef, seed: int) -> ImageRef:
        attrs = self.decode(image)
        gaps = sorted(self.keywords(prompt) - attrs)
        take = min(self.world.refine_gain, len(gaps))
        rng = random.Random(stable64("sim-edit", prompt, image.digest, seed))
        added = rng.sample(gaps, take)
        return self.make_image(attrs | set(added))

    def understand(self, request: UnderstandRequest) -> str:
        tid = request.template_id
        if tid in ("policy_generation", "policy_editing"):
            return self._controller_reply(request)
        if tid == "judge":
            return self._judge_reply(request)
        if tid == "enhance":
            return self._enhance_reply(request)
        if tid == "revise":
            return self._revise_reply(request)
        if tid == "refine_instruction":
            return self._refine_instruction_reply(request)
        raise BadRequest(f"simulated backend has no template {tid!r}")

    # ---- template replies -------------------------------------------------

    def _judge_reply(self, request: UnderstandRequest) -> str:
        kws = self.keywords(_field(request.text, "prompt"))
        if not kws:
            return "Score: 10 — no gradable keywords"
        attrs = self.decode(request.images[0]) if request.images else frozenset()
        matched = len(kws & attrs)
        missing = sorted(kws - attrs)
        if missing:
            return f"Score: {matched}/{len(kws)} — missing: {', '.join(missing)}"
        return f"Score: {matched}/{len(kws)} — all keywords present"

    def _enhance_reply(self, request: UnderstandRequest) -> str:
        p0 = _field(request.text, "original request")
        pt = _field(request.text, "current prompt")
        missing = sorted(self.keywords(p0) - self.keywords(pt))
        enhanced = pt
        if missing:
            enhanced = f"{enhanced}, {', '.join(missing)}"
        return f"{enhanced}, richly detailed"

    def _revise_reply(self, request: UnderstandRequest) -> str:
        p0 = _field(request.text, "original request")
        pt = _field(request.text, "current prompt")
        attrs = self.decode(request.images[0]) if request.images else frozenset()
        want = self.keywords(p0) | self.keywords(pt)
        missing = sorted(want - attrs)
        summary = ", ".join(sorted(attrs)) if attrs else "nothing recognizable"
        discrepancies = f"missing: {', '.join(missing)}" if missing else ""
        revised = f"{pt}, {', '.join(missing)}" if missing else pt
        return (
            f"IMAGE SUMMARY: {summary}\n"
            f"DISCREPANCIES: {discrepancies}\n"
            f"REVISED PROMPT: {revised}"
        )

    def _refine_instruction_reply(self, request: UnderstandRequest) -> str:
        pt = _field(request.text, "current prompt")
        attrs = self.decode(request.images[0]) if request.images else frozenset()
        missing = sorted(self.keywords(pt) - attrs)
        if not missing:
            return ""
        return f"add {', '.join(missing)}"

    # ---- controller -------------------------------------------------------

    def _controller_reply(self, request: UnderstandRequest) -> str:
        if self.world.scripted_controller is not None:
            return self._scripted_reply(request)
        action, reason = self._heuristic_choice(request)
        return json.dumps({"action": action, "reason": reason}, separators=(",", ":"))

    def _scripted_reply(self, request: UnderstandRequest) -> str:
        # Index by the step number printed in the prompt, not by a cursor;
        # the backend must stay free of per-run mutable state.
        m = re.search(r"(?m)^step:\s*(\d+)\s+of\b", request.text)
        step = int(m.group(1)) if m else 1
        script = self.world.scripted_controller
        wire = script[step - 1] if 0 <= step - 1 < len(script) else "STOP"
        return json.dumps({"action": wire, "reason": "scripted"}, separators=(",", ":"))

    def _heuristic_choice(self, request: UnderstandRequest) -> tuple[str, str]:
        """Greedy gap-closing policy over the rendered decision prompt.

        Sees only what a real model would see: the prompt text and the
        attached image. Always answers with a permitted action name.
        """
        text = request.text
        permitted = set(re.findall(r"(?m)^-\s+([A-Za-z0-9_]+):", text))
        if not permitted:
            permitted = {"naive_generation"}

        def pick(*preferred: tuple[str, str]) -> tuple[str, str]:
            for name, reason in preferred:
                if name in permitted:
                    return name, reason
            return sorted(permitted)[0], "only permitted move"

        if not request.images:
            return pick(
                ("best_of_N_sampling", "no image yet; sample candidates and keep the best"),
                ("naive_generation", "no image yet; generate a first draft"),
            )

        p0 = _field(text, "original prompt")
        pt = _field(text, "current prompt")
        attrs = self.decode(request.images[0])
        want0 = self.keywords(p0)
        missing0 = want0 - attrs

        if not missing0:
            return pick(
                ("STOP", "every requested element is present"),
                ("naive_generation", "request satisfied; minimal touch-up only"),
            )
        if want0 - self.keywords(pt):
            return pick(
                ("prompt_refinement", "current prompt dropped requested elements"),
                ("image_detail_refinement", "close the worst gap directly"),
                ("naive_generation", "regenerate from the prompt"),
            )
        if len(missing0) >= 3:
            return pick(
                ("best_of_N_sampling", f"{len(missing0)} elements missing; resample"),
                ("image_detail_refinement", "close gaps one edit at a time"),
                ("naive_generation", "regenerate from the prompt"),
            )
        return pick(
            ("image_detail_refinement", f"missing {', '.join(sorted(missing0))}; targeted edit"),
            ("best_of_N_sampling", "resample and keep the best"),
            ("naive_generation", "regenerate from the prompt"),
        )
