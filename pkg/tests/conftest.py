import json
from pathlib import Path

import pytest

from imagent.backend import SimulatedBackend, SimWorldConfig

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "fixtures" / "wire"


def wire_fixture(name: str) -> dict:
    return json.loads((FIXTURE_DIR / f"{name}.json").read_text("utf-8"))


@pytest.fixture
def sim_backend(tmp_path):
    """A noiseless simulated backend over a throwaway artifact dir."""
    return SimulatedBackend(SimWorldConfig(), tmp_path / "artifacts")


@pytest.fixture
def make_sim(tmp_path):
    """Factory for simulated backends with custom world parameters."""
    counter = {"n": 0}

    def build(**kwargs) -> SimulatedBackend:
        counter["n"] += 1
        return SimulatedBackend(SimWorldConfig(**kwargs), tmp_path / f"art{counter['n']}")

    return build
