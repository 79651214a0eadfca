"""Protocol conformance checks shared by every backend implementation.

The simulated backend, the HTTP client against a live server, and any
shim wrapping a real model must all pass the same checks. Each check
returns failure strings instead of raising, so a conformance run reports
everything wrong at once; an empty list means the backend conforms.
"""

from __future__ import annotations

from ..errors import BackendError, CapabilityMissing
from .artifacts import compute_digest
from .base import Backend, UnderstandRequest

_PROBE_PROMPT = "conformance probe: a silver cube"
_PROBE_SEED = 20240901


def run_conformance(backend: Backend, expect_deterministic: bool = True) -> list[str]:
    failures: list[str] = []

    # Capability flags must exist and be booleans.
    try:
        caps = backend.capabilities()
    except BackendError as exc:
        return [f"capabilities() failed: {exc}"]
    for flag in ("supports_edit", "supports_image_in_understand"):
        if not isinstance(getattr(caps, flag, None), bool):
            failures.append(f"capabilities().{flag} is not a bool")

    # Generate must hand back a stored, digest-honest artifact.
    try:
        ref = backend.generate(_PROBE_PROMPT, _PROBE_SEED)
    except BackendError as exc:
        failures.append(f"generate() failed: {exc}")
        return failures
    try:
        data = backend.store.read(ref)
    except Exception as exc:
        failures.append(f"generated artifact unreadable: {exc}")
        return failures
    if compute_digest(data) != ref.digest:
        failures.append("generated artifact digest does not match its bytes")
    if ref.format not in ("png", "jpeg", "sim-json"):
        failures.append(f"generated artifact has unknown format {ref.format!r}")

    if expect_deterministic:
        again = backend.generate(_PROBE_PROMPT, _PROBE_SEED)
        if again.digest != ref.digest:
            failures.append("same (prompt, seed) produced different artifacts")

    # Edit must either work or be truthfully declared unsupported.
    if caps.supports_edit:
        try:
            edited = backend.edit("conformance probe: add a ribbon", ref, _PROBE_SEED + 1)
            backend.store.read(edited)
        except BackendError as exc:
            failures.append(f"supports_edit is true but edit() failed: {exc}")
    else:
        try:
            backend.edit("conformance probe: add a ribbon", ref, _PROBE_SEED + 1)
            failures.append("supports_edit is false but edit() succeeded")
        except CapabilityMissing:
            pass
        except BackendError as exc:
            failures.append(
                f"supports_edit is false but edit() raised {type(exc).__name__}, "
                "expected CapabilityMissing"
            )

    # Understand must answer text; with an image only when declared.
    images = [ref] if caps.supports_image_in_understand else []
    try:
        reply = backend.understand(
            UnderstandRequest(
                text=f"prompt: {_PROBE_PROMPT}", template_id="judge", images=images
            )
        )
        if not isinstance(reply, str) or not reply:
            failures.append("understand() returned an empty or non-string reply")
    except BackendError as exc:
        failures.append(f"understand() failed: {exc}")
    if not caps.supports_image_in_understand:
        try:
            backend.understand(
                UnderstandRequest(
                    text=f"prompt: {_PROBE_PROMPT}", template_id="judge", images=[ref]
                )
            )
            failures.append(
                "supports_image_in_understand is false but an image-bearing call succeeded"
            )
        except CapabilityMissing:
            pass
        except BackendError as exc:
            failures.append(
                f"image-bearing understand raised {type(exc).__name__}, "
                "expected CapabilityMissing"
            )

    return failures
