import base64

import pytest
import requests

from imagent.actions import evaluate_alignment
from imagent.backend.base import UnderstandRequest
from imagent.backend.http import HttpBackend, encode_image
from imagent.errors import (
    BackendTimeout,
    BackendUnreachable,
    BadRequest,
    CapabilityMissing,
)

from conftest import wire_fixture

CUBE_SILVER = b'{"attributes":["cube","silver"]}'
CUBE_SILVER_DIGEST = "fc6d03bfb5cb59cce217d79249428763468b1309962bbe5522766a512d0af050"
CUBE_RIBBON_SILVER_DIGEST = "1cc5def7cd88da3535575228fc3c62f29f29348dd1afd6cbe98a105e4483a132"


class FakeResponse:
    def __init__(self, status_code=200, body=None, raw_text=""):
        self.status_code = status_code
        self._body = body
        self.text = raw_text

    def json(self):
        if self._body is None:
            raise ValueError("not json")
        return self._body


class FakeSession:
    """Requests-shaped stand-in: canned responses, recorded calls."""

    def __init__(self, routes=None, raises=None):
        self.routes = routes or {}
        self.raises = raises
        self.calls = []

    def get(self, url, headers=None, timeout=None):
        return self._hit("GET", url, None, headers, timeout)

    def post(self, url, json=None, headers=None, timeout=None):
        return self._hit("POST", url, json, headers, timeout)

    def _hit(self, method, url, payload, headers, timeout):
        self.calls.append(
            {"method": method, "url": url, "json": payload, "headers": headers,
             "timeout": timeout}
        )
        if self.raises is not None:
            raise self.raises
        path = url.split("://", 1)[-1]
        path = "/" + path.split("/", 1)[1]
        if path not in self.routes:
            return FakeResponse(status_code=404, body=None)
        return self.routes[path]


def _backend(tmp_path, routes=None, raises=None, api_key=None):
    session = FakeSession(routes, raises)
    backend = HttpBackend(
        "http://host.test/", api_key=api_key, artifact_dir=tmp_path / "art", session=session
    )
    return backend, session


# ---- golden request/response round-trips ---------------------------------------


def test_generate_round_trip_matches_fixtures(tmp_path):
    backend, session = _backend(
        tmp_path, routes={"/v1/generate": FakeResponse(body=wire_fixture("generate_response"))}
    )
    ref = backend.generate("a silver cube", seed=42)
    call = session.calls[0]
    assert call["method"] == "POST"
    assert call["url"] == "http://host.test/v1/generate"
    assert call["json"] == wire_fixture("generate_request")
    assert call["timeout"] == 120.0
    assert ref.digest == CUBE_SILVER_DIGEST
    assert ref.format == "sim-json"
    assert backend.store.read(ref) == CUBE_SILVER


def test_edit_round_trip_matches_fixtures(tmp_path):
    backend, session = _backend(
        tmp_path, routes={"/v1/edit": FakeResponse(body=wire_fixture("edit_response"))}
    )
    ref = backend.store.put(CUBE_SILVER, "sim-json")
    out = backend.edit("add a ribbon", ref, seed=43)
    call = session.calls[0]
    assert call["url"] == "http://host.test/v1/edit"
    assert call["json"] == wire_fixture("edit_request")
    assert call["timeout"] == 120.0
    assert out.digest == CUBE_RIBBON_SILVER_DIGEST


def test_judge_understand_matches_fixture(tmp_path):
    # evaluate_alignment renders the judging template; the posted body must
    # equal the frozen fixture byte for byte
    backend, session = _backend(
        tmp_path,
        routes={"/v1/understand": FakeResponse(body=wire_fixture("understand_response"))},
    )
    ref = backend.store.put(CUBE_SILVER, "sim-json")
    scored = evaluate_alignment(backend, "a silver cube", ref)
    call = session.calls[0]
    assert call["url"] == "http://host.test/v1/understand"
    assert call["json"] == wire_fixture("understand_request")
    assert call["timeout"] == 60.0
    assert scored.score == 1.0
    assert scored.critique == "all keywords present"


def test_capabilities_parses_fixture_and_caches(tmp_path):
    backend, session = _backend(
        tmp_path,
        routes={"/v1/capabilities": FakeResponse(body=wire_fixture("capabilities_response"))},
    )
    caps = backend.capabilities()
    assert caps.supports_edit is True
    assert caps.supports_image_in_understand is True
    backend.capabilities()
    assert len(session.calls) == 1
    assert session.calls[0]["method"] == "GET"
    assert session.calls[0]["url"] == "http://host.test/v1/capabilities"


def test_encode_image_shape():
    assert encode_image(b"abc", "png") == {"format": "png", "b64": "YWJj"}


# ---- error mapping ---------------------------------------------------------------


def test_structured_bad_request(tmp_path):
    backend, _ = _backend(
        tmp_path,
        routes={"/v1/generate": FakeResponse(400, wire_fixture("error_bad_request"))},
    )
    with pytest.raises(BadRequest, match="non-empty string"):
        backend.generate("", seed=0)


def test_structured_capability_missing(tmp_path):
    backend, _ = _backend(
        tmp_path,
        routes={"/v1/edit": FakeResponse(501, wire_fixture("error_capability_missing"))},
    )
    ref = backend.store.put(CUBE_SILVER, "sim-json")
    with pytest.raises(CapabilityMissing):
        backend.edit("x", ref, seed=0)


@pytest.mark.parametrize(
    "status,exception",
    [(408, BackendTimeout), (404, BadRequest), (501, CapabilityMissing),
     (500, BackendUnreachable), (502, BackendUnreachable)],
)
def test_unstructured_errors_classified_by_status(tmp_path, status, exception):
    backend, _ = _backend(
        tmp_path, routes={"/v1/generate": FakeResponse(status, body=None)}
    )
    with pytest.raises(exception):
        backend.generate("a cat", seed=0)


def test_client_timeout_maps(tmp_path):
    backend, _ = _backend(tmp_path, raises=requests.Timeout("deadline"))
    with pytest.raises(BackendTimeout):
        backend.generate("a cat", seed=0)


def test_connection_error_maps(tmp_path):
    backend, _ = _backend(tmp_path, raises=requests.ConnectionError("refused"))
    with pytest.raises(BackendUnreachable):
        backend.understand(UnderstandRequest(text="x", template_id="judge"))


def test_non_json_success_body_rejected(tmp_path):
    backend, _ = _backend(tmp_path, routes={"/v1/generate": FakeResponse(200, body=None)})
    with pytest.raises(BackendUnreachable):
        backend.generate("a cat", seed=0)


def test_non_object_body_rejected(tmp_path):
    backend, _ = _backend(tmp_path, routes={"/v1/generate": FakeResponse(200, body=[1, 2])})
    with pytest.raises(BackendUnreachable):
        backend.generate("a cat", seed=0)


def test_missing_image_in_response(tmp_path):
    backend, _ = _backend(
        tmp_path, routes={"/v1/generate": FakeResponse(200, body={"schema_version": 1})}
    )
    with pytest.raises(BackendUnreachable):
        backend.generate("a cat", seed=0)


def test_invalid_base64_rejected(tmp_path):
    body = {"schema_version": 1, "image": {"format": "png", "b64": "@@not base64@@"}}
    backend, _ = _backend(tmp_path, routes={"/v1/generate": FakeResponse(200, body=body)})
    with pytest.raises(BadRequest):
        backend.generate("a cat", seed=0)


# ---- headers and construction ------------------------------------------------------


def test_bearer_header_sent_when_key_given(tmp_path):
    backend, session = _backend(
        tmp_path,
        routes={"/v1/capabilities": FakeResponse(body=wire_fixture("capabilities_response"))},
        api_key="sk-secret",
    )
    backend.capabilities()
    assert session.calls[0]["headers"] == {"Authorization": "Bearer sk-secret"}


def test_no_auth_header_without_key(tmp_path):
    backend, session = _backend(
        tmp_path,
        routes={"/v1/capabilities": FakeResponse(body=wire_fixture("capabilities_response"))},
    )
    backend.capabilities()
    assert session.calls[0]["headers"] == {}


def test_endpoint_trailing_slash_normalized(tmp_path):
    backend, _ = _backend(tmp_path)
    assert backend.endpoint == "http://host.test"
    assert backend.describe() == {"kind": "http", "endpoint": "http://host.test"}


def test_image_payload_base64_roundtrip(tmp_path):
    backend, session = _backend(
        tmp_path, routes={"/v1/edit": FakeResponse(body=wire_fixture("edit_response"))}
    )
    ref = backend.store.put(CUBE_SILVER, "sim-json")
    backend.edit("add a ribbon", ref, seed=43)
    sent = session.calls[0]["json"]["image"]
    assert base64.b64decode(sent["b64"]) == CUBE_SILVER
