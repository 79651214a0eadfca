"""Training-free iterative refinement for image generation and editing.

A controller model picks one action per step (generate, enhance or
revise the prompt, refine image details, best-of-N sample, or stop),
the loop executes it against a backend, and every run is recorded as a
replayable trace.
"""

from .agent import run_editing, run_generation
from .backend import (
    ArtifactStore,
    Backend,
    BackendCapabilities,
    HttpBackend,
    SimulatedBackend,
    SimWorldConfig,
    build_backend_from_info,
    run_conformance,
)
from .policy import action_mask, build_policy_prompt, decide, parse_decision
from .seeds import derive_seed, stable64
from .trace_store import load_trace, replay, save_trace, trace_diff, validate
from .types import (
    ActionKind,
    AgentState,
    Decision,
    ImageRef,
    Mode,
    Observation,
    RunConfig,
    TerminalKind,
    TerminalStatus,
    Trace,
)

__version__ = "0.1.0"

__all__ = [
    "ActionKind",
    "AgentState",
    "ArtifactStore",
    "Backend",
    "BackendCapabilities",
    "Decision",
    "HttpBackend",
    "ImageRef",
    "Mode",
    "Observation",
    "RunConfig",
    "SimWorldConfig",
    "SimulatedBackend",
    "TerminalKind",
    "TerminalStatus",
    "Trace",
    "__version__",
    "action_mask",
    "build_backend_from_info",
    "build_policy_prompt",
    "decide",
    "derive_seed",
    "load_trace",
    "parse_decision",
    "replay",
    "run_conformance",
    "run_editing",
    "run_generation",
    "save_trace",
    "stable64",
    "trace_diff",
    "validate",
]
