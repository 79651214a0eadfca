"""The test-time scaling loop.

One run is a bounded loop: decide, maybe stop, execute, observe, repeat.
The controller decides; this module only enforces the frame around it:
the step budget, the action mask, the observation history, and a trace
of everything that happened. The loop itself never raises for model
misbehavior; only unreachable backends abort a run, and even then the
partial trace is returned, not lost.
"""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from typing import Callable

from .actions import ACTION_EXECUTORS
from .errors import BackendError, DanglingArtifactError, MaskViolation, UnreadableImage
from .policy import TEMPLATE_VERSION, action_mask, decide
from .types import (
    ActionKind,
    AgentState,
    Decision,
    ImageRef,
    Mode,
    Observation,
    RunConfig,
    StepRecord,
    TerminalKind,
    TerminalStatus,
    Trace,
)

logger = logging.getLogger("imagent.agent")

# A decider looks at (backend, state, config) and picks the next move.
# policy.decide is the default; bench variants and replay supply others.
Decider = Callable[[object, AgentState, RunConfig], Decision]


def step(
    state: AgentState, decision: Decision, config: RunConfig, backend
) -> tuple[AgentState, Observation]:
    """Execute one decided action and fold the result into the state."""
    if decision.action is ActionKind.STOP:
        raise ValueError("STOP is not executable; the loop handles it")
    if decision.action not in action_mask(state):
        raise MaskViolation(
            f"action {decision.action.value} reached the executor outside its mask"
        )
    outcome = ACTION_EXECUTORS[decision.action](backend, state, config)
    observation = Observation(
        step=state.step_index,
        action=decision.action,
        rationale=decision.rationale,
        feedback=outcome.feedback,
        score=outcome.score,
        candidate_scores=outcome.candidate_scores,
    )
    new_state = replace(
        state,
        current_prompt=outcome.new_prompt,
        current_image=outcome.new_image,
        history=state.history + (observation,),
        step_index=state.step_index + 1,
    )
    return new_state, observation


def _run(
    config: RunConfig,
    backend,
    prompt: str,
    image: ImageRef | None,
    mode: Mode,
    decider: Decider | None,
) -> Trace:
    if decider is None:
        decider = decide
    state = AgentState.initial(prompt, image, mode)
    steps: list[StepRecord] = []
    terminal: TerminalStatus | None = None
    final_decision: Decision | None = None

    for _ in range(config.t_max):
        started = time.perf_counter()
        try:
            decision = decider(backend, state, config)
        except BackendError as exc:
            terminal = TerminalStatus.aborted(f"backend failed while deciding: {exc}")
            break
        logger.info(
            "step %d: %s - %s",
            state.step_index,
            decision.action.value,
            decision.rationale or "(fallback)",
        )
        if decision.action is ActionKind.STOP:
            terminal = TerminalStatus.stopped()
            final_decision = decision
            break
        before = state
        try:
            state, observation = step(state, decision, config, backend)
        except BackendError as exc:
            terminal = TerminalStatus.aborted(
                f"backend failed during {decision.action.value}: {exc}"
            )
            break
        steps.append(
            StepRecord(
                step=observation.step,
                decision=decision,
                observation=observation,
                prompt_before=before.current_prompt,
                prompt_after=state.current_prompt,
                image_digest_before=(
                    before.current_image.digest if before.current_image else None
                ),
                image_digest_after=(
                    state.current_image.digest if state.current_image else None
                ),
                duration_s=time.perf_counter() - started,
            )
        )
    if terminal is None:
        terminal = TerminalStatus.max_steps()

    final_image = state.current_image
    if (
        mode is Mode.GENERATION
        and final_image is None
        and terminal.kind is not TerminalKind.ABORTED
    ):
        terminal = TerminalStatus.aborted("no image was produced")

    return Trace(
        mode=mode,
        config=config,
        backend_info=backend.describe(),
        template_version=TEMPLATE_VERSION,
        initial_prompt=prompt,
        initial_image=image,
        steps=steps,
        terminal=terminal,
        final_image=final_image,
        final_decision=final_decision,
    )


def run_generation(
    config: RunConfig, backend, prompt: str, *, decider: Decider | None = None
) -> Trace:
    """Generate an image for `prompt`, iterating up to config.t_max steps."""
    return _run(config, backend, prompt, None, Mode.GENERATION, decider)


def run_editing(
    config: RunConfig,
    backend,
    prompt: str,
    image: ImageRef,
    *,
    decider: Decider | None = None,
) -> Trace:
    """Edit `image` as requested by `prompt`, iterating up to config.t_max steps.

    The input image must be readable before the loop starts; if it is not,
    the run aborts immediately with the unedited input as its final image.
    """
    try:
        backend.check_readable(image)
    except (UnreadableImage, DanglingArtifactError) as exc:
        return Trace(
            mode=Mode.EDITING,
            config=config,
            backend_info=backend.describe(),
            template_version=TEMPLATE_VERSION,
            initial_prompt=prompt,
            initial_image=image,
            steps=[],
            terminal=TerminalStatus.aborted(f"input image unreadable: {exc}"),
            final_image=image,
        )
    return _run(config, backend, prompt, image, Mode.EDITING, decider)
