"""Core data model for runs, decisions, and traces.

Everything here serializes to plain JSON types through to_dict/from_dict
pairs. Serialization must stay deterministic: two identical runs have to
produce byte-identical trace JSON (durations excepted), so no dict in
this module may pick up wall-clock or process-local values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class Mode(str, Enum):
    GENERATION = "generation"
    EDITING = "editing"


class ActionKind(str, Enum):
    """The six moves the controller can pick. Values are the wire names."""

    NAIVE_GENERATION = "naive_generation"
    PROMPT_ENHANCEMENT = "prompt_enhancement"
    PROMPT_REVISION = "prompt_refinement"
    IMAGE_DETAIL_REFINEMENT = "image_detail_refinement"
    BEST_OF_N = "best_of_N_sampling"
    STOP = "STOP"


# Image formats the artifact store knows how to name.
IMAGE_FORMATS = ("png", "jpeg", "sim-json")


@dataclass(frozen=True)
class ImageRef:
    """Content-addressed handle to an image artifact.

    `path` is relative to the run directory (e.g. "artifacts/<digest>.png")
    so that a run directory can be moved or archived wholesale.
    """

    digest: str
    format: str
    path: str
    width: int | None = None
    height: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "digest": self.digest,
            "format": self.format,
            "path": self.path,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ImageRef":
        return cls(
            digest=d["digest"],
            format=d["format"],
            path=d["path"],
            width=d.get("width"),
            height=d.get("height"),
        )


@dataclass
class RunConfig:
    """Knobs for one run. The seed pins every random draw in the run."""

    t_max: int = 5
    best_of_n: int = 4
    seed: int = 0
    parse_retries: int = 2
    history_window: int = 5

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.best_of_n < 1:
            raise ValueError(f"best_of_n must be >= 1, got {self.best_of_n}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.parse_retries < 0:
            raise ValueError(f"parse_retries must be >= 0, got {self.parse_retries}")
        if self.history_window < 0:
            raise ValueError(f"history_window must be >= 0, got {self.history_window}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "t_max": self.t_max,
            "best_of_n": self.best_of_n,
            "seed": self.seed,
            "parse_retries": self.parse_retries,
            "history_window": self.history_window,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return cls(
            t_max=d["t_max"],
            best_of_n=d["best_of_n"],
            seed=d["seed"],
            parse_retries=d["parse_retries"],
            history_window=d["history_window"],
        )


@dataclass
class Decision:
    """What the controller chose, plus enough context to audit the choice."""

    action: ActionKind
    rationale: str
    raw: str
    parse_attempts: int = 1
    fallback: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action.value,
            "rationale": self.rationale,
            "raw": self.raw,
            "parse_attempts": self.parse_attempts,
            "fallback": self.fallback,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Decision":
        return cls(
            action=ActionKind(d["action"]),
            rationale=d["rationale"],
            raw=d["raw"],
            parse_attempts=d["parse_attempts"],
            fallback=d["fallback"],
        )


@dataclass
class Observation:
    """Outcome of one executed action.

    candidate_scores is only ever set for best-of-N steps; a null entry
    marks a candidate that failed to generate or to score.
    """

    step: int
    action: ActionKind
    rationale: str
    feedback: str
    score: float | None = None
    candidate_scores: list[float | None] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "action": self.action.value,
            "rationale": self.rationale,
            "feedback": self.feedback,
            "score": self.score,
            "candidate_scores": self.candidate_scores,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Observation":
        return cls(
            step=d["step"],
            action=ActionKind(d["action"]),
            rationale=d["rationale"],
            feedback=d["feedback"],
            score=d.get("score"),
            candidate_scores=d.get("candidate_scores"),
        )


@dataclass(frozen=True)
class CandidateScore:
    index: int
    score: float
    critique: str


@dataclass
class AgentState:
    """Mutable loop state. history only grows; step_index is 1-based."""

    initial_prompt: str
    initial_image: ImageRef | None
    current_prompt: str
    current_image: ImageRef | None
    history: tuple[Observation, ...]
    step_index: int
    mode: Mode

    @classmethod
    def initial(cls, prompt: str, image: ImageRef | None, mode: Mode) -> "AgentState":
        if mode is Mode.EDITING and image is None:
            raise ValueError("editing runs need an input image")
        return cls(
            initial_prompt=prompt,
            initial_image=image,
            current_prompt=prompt,
            current_image=image,
            history=(),
            step_index=1,
            mode=mode,
        )


class TerminalKind(str, Enum):
    STOPPED = "stopped"
    MAX_STEPS_REACHED = "max_steps_reached"
    ABORTED = "aborted"


@dataclass(frozen=True)
class TerminalStatus:
    kind: TerminalKind
    reason: str | None = None

    @classmethod
    def stopped(cls) -> "TerminalStatus":
        return cls(TerminalKind.STOPPED)

    @classmethod
    def max_steps(cls) -> "TerminalStatus":
        return cls(TerminalKind.MAX_STEPS_REACHED)

    @classmethod
    def aborted(cls, reason: str) -> "TerminalStatus":
        return cls(TerminalKind.ABORTED, reason)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TerminalStatus":
        return cls(kind=TerminalKind(d["kind"]), reason=d.get("reason"))


@dataclass
class StepRecord:
    """One executed loop step: the decision, its effect, and timing."""

    step: int
    decision: Decision
    observation: Observation
    prompt_before: str
    prompt_after: str
    image_digest_before: str | None
    image_digest_after: str | None
    duration_s: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "decision": self.decision.to_dict(),
            "observation": self.observation.to_dict(),
            "prompt_before": self.prompt_before,
            "prompt_after": self.prompt_after,
            "image_digest_before": self.image_digest_before,
            "image_digest_after": self.image_digest_after,
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepRecord":
        return cls(
            step=d["step"],
            decision=Decision.from_dict(d["decision"]),
            observation=Observation.from_dict(d["observation"]),
            prompt_before=d["prompt_before"],
            prompt_after=d["prompt_after"],
            image_digest_before=d.get("image_digest_before"),
            image_digest_after=d.get("image_digest_after"),
            duration_s=d["duration_s"],
        )


@dataclass
class Trace:
    """Full record of one run.

    `source_dir` is set when a trace is loaded from disk and never
    serialized; replay uses it to find the original artifacts.
    """

    mode: Mode
    config: RunConfig
    backend_info: dict[str, Any]
    template_version: str
    initial_prompt: str
    initial_image: ImageRef | None
    steps: list[StepRecord]
    terminal: TerminalStatus
    final_image: ImageRef | None
    final_decision: Decision | None = None
    source_dir: Any = field(default=None, repr=False, compare=False)

    @property
    def executed_steps(self) -> int:
        return len(self.steps)

    @property
    def fallback_count(self) -> int:
        n = sum(1 for s in self.steps if s.decision.fallback)
        if self.final_decision is not None and self.final_decision.fallback:
            n += 1
        return n

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "config": self.config.to_dict(),
            "backend_info": self.backend_info,
            "template_version": self.template_version,
            "initial_prompt": self.initial_prompt,
            "initial_image": self.initial_image.to_dict() if self.initial_image else None,
            "steps": [s.to_dict() for s in self.steps],
            "terminal": self.terminal.to_dict(),
            "final_image": self.final_image.to_dict() if self.final_image else None,
            "final_decision": self.final_decision.to_dict() if self.final_decision else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Trace":
        return cls(
            mode=Mode(d["mode"]),
            config=RunConfig.from_dict(d["config"]),
            backend_info=d["backend_info"],
            template_version=d["template_version"],
            initial_prompt=d["initial_prompt"],
            initial_image=ImageRef.from_dict(d["initial_image"]) if d.get("initial_image") else None,
            steps=[StepRecord.from_dict(s) for s in d["steps"]],
            terminal=TerminalStatus.from_dict(d["terminal"]),
            final_image=ImageRef.from_dict(d["final_image"]) if d.get("final_image") else None,
            final_decision=Decision.from_dict(d["final_decision"]) if d.get("final_decision") else None,
        )
