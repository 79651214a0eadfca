import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from imagent_shim.adapters import StubAdapter
from imagent_shim.server import create_app

# the golden wire fixtures live at the repository root, next to the client
WIRE_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "wire"


@pytest.fixture
def wire_fixture():
    def load(name: str):
        return json.loads((WIRE_DIR / name).read_text("utf-8"))

    return load


@pytest.fixture
def client():
    return TestClient(create_app(StubAdapter()))


@pytest.fixture
def make_client():
    def build(adapter=None, **kwargs):
        return TestClient(create_app(adapter, **kwargs))

    return build
