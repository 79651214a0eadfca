"""HTTP server for the wire protocol: four routes, structured errors.

Request bodies are validated by hand so every rejection comes back as
{"error": {"kind": ..., "message": ...}} with the status the protocol
promises (400 bad_request, 501 capability_missing, 500 internal) instead
of a framework-shaped validation payload. Adapter calls run in the
threadpool behind a semaphore so one slow model host cannot take
unbounded concurrent work.
"""

from __future__ import annotations

import base64
import binascii
import threading
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .adapters import Adapter, Image, StubAdapter

SCHEMA_VERSION = 1
IMAGE_FORMATS = ("png", "jpeg", "sim-json")

_STATUS = {"bad_request": 400, "capability_missing": 501, "internal": 500}


class WireError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


async def _body_of(request: Request) -> dict:
    try:
        body = await request.json()
    except ValueError:
        raise WireError("bad_request", "body is not valid JSON") from None
    if not isinstance(body, dict):
        raise WireError("bad_request", "body must be a JSON object")
    version = body.get("schema_version")
    if version != SCHEMA_VERSION:
        raise WireError("bad_request", f"unsupported schema_version {version!r}")
    return body


def _prompt_of(body: dict) -> str:
    prompt = body.get("prompt")
    if not isinstance(prompt, str) or not prompt.strip():
        raise WireError("bad_request", "prompt must be a non-empty string")
    return prompt


def _seed_of(body: dict) -> int:
    seed = body.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise WireError("bad_request", "seed must be a non-negative integer")
    return seed


def _image_of(obj: Any, where: str) -> Image:
    if not isinstance(obj, dict):
        raise WireError("bad_request", f"{where} must be an object")
    fmt = obj.get("format")
    if fmt not in IMAGE_FORMATS:
        raise WireError(
            "bad_request", f"{where}.format must be one of {', '.join(IMAGE_FORMATS)}"
        )
    b64 = obj.get("b64")
    if not isinstance(b64, str):
        raise WireError("bad_request", f"{where}.b64 must be a string")
    try:
        data = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise WireError("bad_request", f"{where}.b64 is not valid base64") from None
    return fmt, data


def _encode_image(image: Image) -> dict:
    fmt, data = image
    return {
        "format": fmt,
        "b64": base64.b64encode(data).decode("ascii"),
        "width": None,
        "height": None,
    }


def create_app(adapter: Adapter | None = None, max_concurrency: int = 8) -> FastAPI:
    adapter = adapter if adapter is not None else StubAdapter()
    gate = threading.Semaphore(max_concurrency)
    app = FastAPI(title="imagent model shim", docs_url=None, redoc_url=None)

    @app.exception_handler(WireError)
    async def _wire_error(_request: Request, exc: WireError) -> JSONResponse:
        return JSONResponse(
            {"error": {"kind": exc.kind, "message": exc.message}},
            status_code=_STATUS[exc.kind],
        )

    async def _call(fn: Callable, *args):
        def bounded():
            with gate:
                return fn(*args)

        try:
            return await run_in_threadpool(bounded)
        except WireError:
            raise
        except Exception as exc:  # the adapter is third-party territory
            raise WireError("internal", f"adapter failed: {exc}") from exc

    @app.get("/v1/capabilities")
    async def capabilities() -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "supports_edit": adapter.supports_edit,
            "supports_image_in_understand": adapter.supports_image_in_understand,
        }

    @app.post("/v1/understand")
    async def understand(request: Request) -> dict:
        body = await _body_of(request)
        text = body.get("text")
        if not isinstance(text, str):
            raise WireError("bad_request", "text must be a string")
        template_id = body.get("template_id")
        if template_id is not None and not isinstance(template_id, str):
            raise WireError("bad_request", "template_id must be a string or null")
        raw_images = body.get("images", [])
        if not isinstance(raw_images, list):
            raise WireError("bad_request", "images must be a list")
        images = [_image_of(entry, f"images[{n}]") for n, entry in enumerate(raw_images)]
        if images and not adapter.supports_image_in_understand:
            raise WireError(
                "capability_missing", "this host does not take images in /v1/understand"
            )
        reply = await _call(adapter.understand, text, template_id, images)
        if not isinstance(reply, str):
            raise WireError("internal", "adapter returned a non-string reply")
        return {"schema_version": SCHEMA_VERSION, "text": reply}

    @app.post("/v1/generate")
    async def generate(request: Request) -> dict:
        body = await _body_of(request)
        prompt = _prompt_of(body)
        seed = _seed_of(body)
        image = await _call(adapter.generate, prompt, seed)
        return {"schema_version": SCHEMA_VERSION, "image": _encode_image(image)}

    @app.post("/v1/edit")
    async def edit(request: Request) -> dict:
        if not adapter.supports_edit:
            raise WireError("capability_missing", "this host does not support /v1/edit")
        body = await _body_of(request)
        prompt = _prompt_of(body)
        seed = _seed_of(body)
        if "image" not in body:
            raise WireError("bad_request", "edit needs an image")
        source = _image_of(body["image"], "image")
        image = await _call(adapter.edit, prompt, seed, source)
        return {"schema_version": SCHEMA_VERSION, "image": _encode_image(image)}

    return app
