"""HTTP client for remote model hosts.

Wire protocol (JSON over HTTP, documented in docs/wire_protocol.md and
frozen by the fixtures under fixtures/wire/):

    GET  /v1/capabilities -> {"schema_version": 1,
                              "supports_edit": bool,
                              "supports_image_in_understand": bool}
    POST /v1/understand   {"schema_version": 1, "text": str,
                           "template_id": str,
                           "images": [{"format": str, "b64": str}, ...]}
                          -> {"schema_version": 1, "text": str}
    POST /v1/generate     {"schema_version": 1, "prompt": str, "seed": int}
                          -> {"schema_version": 1,
                              "image": {"format": str, "b64": str,
                                        "width": int|null, "height": int|null}}
    POST /v1/edit         {"schema_version": 1, "prompt": str, "seed": int,
                           "image": {"format": str, "b64": str}}
                          -> same shape as /v1/generate

Errors come back as {"error": {"kind": str, "message": str}} with kind in
{timeout, unreachable, capability_missing, bad_request, internal}; they
map onto the local exception taxonomy. Connection failures map to
BackendUnreachable, client-side deadline hits to BackendTimeout.
"""

from __future__ import annotations

import base64
import binascii
from pathlib import Path
from typing import Any

import requests

from ..errors import (
    BackendUnreachable,
    BackendTimeout,
    BadRequest,
    error_for_kind,
)
from ..types import ImageRef
from .base import (
    Backend,
    BackendCapabilities,
    EDIT_TIMEOUT,
    GENERATE_TIMEOUT,
    UNDERSTAND_TIMEOUT,
    UnderstandRequest,
)

SCHEMA_VERSION = 1


def encode_image(data: bytes, format: str) -> dict[str, str]:
    return {"format": format, "b64": base64.b64encode(data).decode("ascii")}


class HttpBackend(Backend):
    """Talks to any server speaking the wire protocol above.

    `session` is swappable so tests and in-process servers can stand in
    for a real host; it must offer requests-style get/post returning
    responses with status_code and json().
    """

    supports_concurrent_calls = True

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        artifact_dir: Path | str | None = None,
        session: Any = None,
    ):
        super().__init__(artifact_dir)
        self.endpoint = endpoint.rstrip("/")
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._session = session if session is not None else requests.Session()
        self._capabilities: BackendCapabilities | None = None

    def describe(self) -> dict[str, Any]:
        return {"kind": "http", "endpoint": self.endpoint}

    # ---- transport ----------------------------------------------------------

    def _request(self, method: str, path: str, payload: dict | None, timeout: float) -> dict:
        url = f"{self.endpoint}{path}"
        try:
            if method == "GET":
                response = self._session.get(url, headers=self._headers, timeout=timeout)
            else:
                response = self._session.post(
                    url, json=payload, headers=self._headers, timeout=timeout
                )
        except requests.Timeout as exc:
            raise BackendTimeout(f"{path} timed out after {timeout:.0f}s") from exc
        except requests.RequestException as exc:
            raise BackendUnreachable(f"{url}: {exc}") from exc

        if response.status_code >= 400:
            kind, message = self._error_fields(response)
            raise error_for_kind(kind, f"{path}: {message}")
        try:
            body = response.json()
        except ValueError as exc:
            raise BackendUnreachable(f"{path}: response is not JSON") from exc
        if not isinstance(body, dict):
            raise BackendUnreachable(f"{path}: response is not a JSON object")
        return body

    @staticmethod
    def _error_fields(response) -> tuple[str, str]:
        try:
            err = response.json().get("error", {})
            if isinstance(err, dict) and "kind" in err:
                return str(err["kind"]), str(err.get("message", ""))
        except ValueError:
            pass
        # No structured error; classify by status code.
        if response.status_code == 408:
            return "timeout", f"HTTP {response.status_code}"
        if response.status_code == 501:
            return "capability_missing", f"HTTP {response.status_code}"
        if 400 <= response.status_code < 500:
            return "bad_request", f"HTTP {response.status_code}"
        return "unreachable", f"HTTP {response.status_code}"

    def _image_payload(self, ref: ImageRef) -> dict[str, str]:
        return encode_image(self.store.read(ref), ref.format)

    def _decode_image(self, body: dict, path: str) -> ImageRef:
        image = body.get("image")
        if not isinstance(image, dict) or "b64" not in image or "format" not in image:
            raise BackendUnreachable(f"{path}: response carries no image")
        try:
            data = base64.b64decode(image["b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise BadRequest(f"{path}: image payload is not valid base64") from exc
        return self.store.put(
            data,
            str(image["format"]),
            width=image.get("width"),
            height=image.get("height"),
        )

    # ---- backend verbs -------------------------------------------------------

    def capabilities(self) -> BackendCapabilities:
        if self._capabilities is None:
            body = self._request("GET", "/v1/capabilities", None, UNDERSTAND_TIMEOUT)
            self._capabilities = BackendCapabilities(
                supports_edit=bool(body.get("supports_edit")),
                supports_image_in_understand=bool(body.get("supports_image_in_understand")),
            )
        return self._capabilities

    def understand(self, request: UnderstandRequest) -> str:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "text": request.text,
            "template_id": request.template_id,
            "images": [self._image_payload(ref) for ref in request.images],
        }
        body = self._request("POST", "/v1/understand", payload, UNDERSTAND_TIMEOUT)
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendUnreachable("/v1/understand: response carries no text")
        return text

    def generate(self, prompt: str, seed: int) -> ImageRef:
        payload = {"schema_version": SCHEMA_VERSION, "prompt": prompt, "seed": seed}
        body = self._request("POST", "/v1/generate", payload, GENERATE_TIMEOUT)
        return self._decode_image(body, "/v1/generate")

    def edit(self, prompt: str, image: ImageRef, seed: int) -> ImageRef:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "prompt": prompt,
            "seed": seed,
            "image": self._image_payload(image),
        }
        body = self._request("POST", "/v1/edit", payload, EDIT_TIMEOUT)
        return self._decode_image(body, "/v1/edit")
