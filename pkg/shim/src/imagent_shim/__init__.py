"""Reference model service for the imagent wire protocol.

Wraps one Adapter (a thing that reasons about text and makes images)
behind the four HTTP routes the agent runtime speaks. The bundled
StubAdapter is deterministic and weight-free, so the full agent stack can
be exercised against a real network boundary.
"""

from .adapters import Adapter, StubAdapter
from .server import create_app

__version__ = "0.1.0"

__all__ = ["Adapter", "StubAdapter", "create_app", "__version__"]
