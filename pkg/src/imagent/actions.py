"""The executable actions and the candidate evaluator.

Each executor takes (backend, state, config) and returns an ActionOutcome
describing the next prompt, the next image, and what to tell the
controller about it. Executors never mutate the state they are given.

Soft failures (an empty enhancement, a missing revision section, a
no-op refinement instruction) keep the state unchanged and record the
failure in the feedback text; only backend transport errors propagate.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction

import re

from .backend.base import UnderstandRequest
from .errors import BackendError, MaskViolation, ScoreParseError, UnreadableImage
from .policy import _one_line, _template
from .seeds import derive_seed
from .types import ActionKind, AgentState, CandidateScore, ImageRef, Mode, RunConfig

logger = logging.getLogger("imagent.actions")

_FEEDBACK_PROMPT_CLIP = 200


@dataclass
class ActionOutcome:
    new_prompt: str
    new_image: ImageRef | None
    feedback: str
    score: float | None = None
    candidate_scores: list[float | None] | None = None


def _invoke_model(backend, state: AgentState, prompt: str, seed: int) -> ImageRef:
    """Generation uses text-to-image; editing applies the prompt to the
    current image."""
    if state.mode is Mode.EDITING:
        return backend.edit(prompt, state.current_image, seed)
    return backend.generate(prompt, seed)


def _require_image(state: AgentState, action: str) -> ImageRef:
    if state.current_image is None:
        raise MaskViolation(f"{action} requires an image but none exists yet")
    return state.current_image


# ---- evaluator -------------------------------------------------------------

_SCORE_RE = re.compile(r"(\d+(?:\.\d+)?)(?:\s*/\s*(\d+(?:\.\d+)?))?")


def parse_score(reply: str) -> tuple[float, str]:
    """Extract (score in [0,1], critique) from a judge reply.

    A bare number is read on the 0-10 scale. A ratio like "7/9" is read
    as matched-out-of-total, which both covers natural replies such as
    "8/10" and lets the simulated judge report exact fractions. Exactness
    matters: the fraction is carried as a rational and converted to float
    once, so 1/3 survives without a rounding detour through 0-10.
    """
    m = _SCORE_RE.search(reply)
    if not m:
        raise ScoreParseError(f"no score in judge reply: {reply[:200]!r}")
    try:
        if m.group(2) is not None:
            value = Fraction(m.group(1)) / Fraction(m.group(2))
        else:
            value = Fraction(m.group(1)) / 10
    except ZeroDivisionError as exc:
        raise ScoreParseError(f"zero denominator in judge reply: {reply[:200]!r}") from exc
    value = min(max(value, Fraction(0)), Fraction(1))
    critique = re.sub(r"^[\s—:,.-]+", "", reply[m.end():]).strip()
    return float(value), _one_line(critique or reply, 400)


def evaluate_alignment(backend, prompt: str, image: ImageRef) -> CandidateScore:
    """Score how well `image` matches `prompt` with the judging template."""
    text = _template("judge").substitute(pt=_one_line(prompt, 800))
    reply = backend.understand(UnderstandRequest(text=text, template_id="judge", images=[image]))
    score, critique = parse_score(reply)
    return CandidateScore(index=0, score=score, critique=critique)


# ---- executors -------------------------------------------------------------

def naive(backend, state: AgentState, config: RunConfig) -> ActionOutcome:
    seed = derive_seed(config.seed, state.step_index, 0)
    image = _invoke_model(backend, state, state.current_prompt, seed)
    return ActionOutcome(
        new_prompt=state.current_prompt,
        new_image=image,
        feedback="naive invocation",
    )


def enhance_prompt(backend, state: AgentState, config: RunConfig) -> ActionOutcome:
    text = _template("enhance").substitute(
        p0=_one_line(state.initial_prompt, 800),
        pt=_one_line(state.current_prompt, 800),
    )
    enhanced = backend.understand(
        UnderstandRequest(text=text, template_id="enhance")
    ).strip()
    if not enhanced:
        return ActionOutcome(
            new_prompt=state.current_prompt,
            new_image=state.current_image,
            feedback="enhancement produced no text; prompt kept",
        )
    seed = derive_seed(config.seed, state.step_index, 0)
    image = _invoke_model(backend, state, enhanced, seed)
    old = _one_line(state.current_prompt, _FEEDBACK_PROMPT_CLIP)
    new = _one_line(enhanced, _FEEDBACK_PROMPT_CLIP)
    return ActionOutcome(
        new_prompt=enhanced,
        new_image=image,
        feedback=f'prompt: "{old}" -> "{new}"',
    )


_REVISED_RE = re.compile(r"(?is)revised\s+prompt\s*:\s*(.*)\Z")
_DISCREPANCY_RE = re.compile(r"(?is)discrepancies\s*:\s*(.*?)(?=revised\s+prompt\s*:)")


def _parse_revision(reply: str) -> tuple[str, str] | None:
    m = _REVISED_RE.search(reply)
    if not m:
        return None
    revised = m.group(1).strip()
    if not revised:
        return None
    d = _DISCREPANCY_RE.search(reply)
    delta = d.group(1).strip() if d else ""
    return delta, revised


def revise_prompt(backend, state: AgentState, config: RunConfig) -> ActionOutcome:
    image = _require_image(state, ActionKind.PROMPT_REVISION.value)
    text = _template("revise").substitute(
        p0=_one_line(state.initial_prompt, 800),
        pt=_one_line(state.current_prompt, 800),
    )
    reply = backend.understand(
        UnderstandRequest(text=text, template_id="revise", images=[image])
    )
    parsed = _parse_revision(reply)
    if parsed is None:
        corrective = (
            text
            + "\n\nYour previous reply was missing the section. It must contain a line "
            '"REVISED PROMPT:" followed by the full prompt.'
        )
        reply = backend.understand(
            UnderstandRequest(text=corrective, template_id="revise", images=[image])
        )
        parsed = _parse_revision(reply)
    if parsed is None:
        return ActionOutcome(
            new_prompt=state.current_prompt,
            new_image=state.current_image,
            feedback="revision reply had no usable REVISED PROMPT section; prompt kept",
        )
    delta, revised = parsed
    seed = derive_seed(config.seed, state.step_index, 0)
    new_image = _invoke_model(backend, state, revised, seed)
    return ActionOutcome(new_prompt=revised, new_image=new_image, feedback=delta)


def refine_image_details(backend, state: AgentState, config: RunConfig) -> ActionOutcome:
    image = _require_image(state, ActionKind.IMAGE_DETAIL_REFINEMENT.value)
    text = _template("refine_instruction").substitute(
        pt=_one_line(state.current_prompt, 800)
    )
    instruction = backend.understand(
        UnderstandRequest(text=text, template_id="refine_instruction", images=[image])
    ).strip()
    if not instruction:
        return ActionOutcome(
            new_prompt=state.current_prompt,
            new_image=state.current_image,
            feedback="refinement produced no instruction; image kept",
        )
    seed = derive_seed(config.seed, state.step_index, 0)
    new_image = backend.edit(instruction, image, seed)
    # The prompt is deliberately left untouched: refinement fixes pixels,
    # not wording.
    return ActionOutcome(
        new_prompt=state.current_prompt,
        new_image=new_image,
        feedback=instruction,
    )


def best_of_n(backend, state: AgentState, config: RunConfig) -> ActionOutcome:
    n = max(1, config.best_of_n)
    prompt = state.current_prompt

    def one(k: int) -> tuple[ImageRef, CandidateScore]:
        seed = derive_seed(config.seed, state.step_index, k)
        if state.mode is Mode.EDITING:
            image = backend.edit(prompt, state.current_image, seed)
        else:
            image = backend.generate(prompt, seed)
        scored = evaluate_alignment(backend, prompt, image)
        return image, replace(scored, index=k)

    results: list[tuple[ImageRef, CandidateScore] | None] = [None] * n

    def attempt(k: int) -> None:
        try:
            results[k] = one(k)
        except (BackendError, ScoreParseError, UnreadableImage) as exc:
            logger.warning("candidate %d/%d failed: %s", k + 1, n, exc)

    if backend.supports_concurrent_calls and n > 1:
        with ThreadPoolExecutor(max_workers=min(n, 8)) as pool:
            list(pool.map(attempt, range(n)))
    else:
        for k in range(n):
            attempt(k)

    # Ordered by candidate index; strict > keeps the lowest index on ties.
    best: tuple[ImageRef, CandidateScore] | None = None
    for entry in results:
        if entry is not None and (best is None or entry[1].score > best[1].score):
            best = entry

    candidate_scores = [entry[1].score if entry else None for entry in results]
    if best is None:
        return ActionOutcome(
            new_prompt=prompt,
            new_image=state.current_image,
            feedback=f"all {n} candidates failed",
            candidate_scores=candidate_scores,
        )
    image, winner = best
    return ActionOutcome(
        new_prompt=prompt,
        new_image=image,
        feedback=(
            f"kept candidate {winner.index + 1} of {n} "
            f"(score {winner.score!r}): {_one_line(winner.critique, 200)}"
        ),
        score=winner.score,
        candidate_scores=candidate_scores,
    )


ACTION_EXECUTORS = {
    ActionKind.NAIVE_GENERATION: naive,
    ActionKind.PROMPT_ENHANCEMENT: enhance_prompt,
    ActionKind.PROMPT_REVISION: revise_prompt,
    ActionKind.IMAGE_DETAIL_REFINEMENT: refine_image_details,
    ActionKind.BEST_OF_N: best_of_n,
}
