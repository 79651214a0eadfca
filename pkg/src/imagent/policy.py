"""Decision layer: what may run next, and asking the model to choose.

The controller is the understanding model itself. We render the loop
state into a fixed decision template, ask for a one-line JSON envelope,
and parse leniently: models wrap JSON in prose, misspell underscores, or
answer with bare action names, and all of that must still resolve. What
may NOT pass is an action outside the mask for the current state; that
raises and is retried with a corrective instruction.

Parsing is total: any string either resolves to a permitted action or
raises a typed parse error. After the configured retries, decide() falls
back to a safe action and flags the decision instead of crashing the run.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import replace
from importlib import resources
from string import Template

from .errors import CapabilityMissing, MaskedActionError, NoActionError
from .types import ActionKind, AgentState, Decision, Mode, RunConfig

logger = logging.getLogger("imagent.policy")

# Bump when any template text changes; recorded into every trace.
TEMPLATE_VERSION = "1"

# Hard ceiling on a rendered decision prompt, independent of history length.
MAX_PROMPT_CHARS = 8000

# Per-field clips used when rendering state into the template.
_PROMPT_CLIP = 800
_RATIONALE_CLIP = 200
_FEEDBACK_CLIP = 400
_SUMMARY_NAMES_CAP = 50

ACTION_DEFINITIONS = {
    ActionKind.NAIVE_GENERATION: "invoke the model once on the current prompt (applies it to the current image when editing)",
    ActionKind.PROMPT_ENHANCEMENT: "rewrite the current prompt with richer detail, then rerun it",
    ActionKind.PROMPT_REVISION: "inspect the current image, revise the prompt to close the gaps, then rerun it",
    ActionKind.IMAGE_DETAIL_REFINEMENT: "make one targeted edit to the current image; the prompt stays unchanged",
    ActionKind.BEST_OF_N: "draw several candidates and keep the one that matches the prompt best",
    ActionKind.STOP: "finish now; the current image satisfies the request",
}

# Recognized spellings, already normalized (lowercase, separators -> space).
_ACTION_PHRASES = (
    ("naive generation", ActionKind.NAIVE_GENERATION),
    ("naive editing", ActionKind.NAIVE_GENERATION),
    ("naive edit", ActionKind.NAIVE_GENERATION),
    ("prompt enhancement", ActionKind.PROMPT_ENHANCEMENT),
    ("enhance the prompt", ActionKind.PROMPT_ENHANCEMENT),
    ("prompt refinement", ActionKind.PROMPT_REVISION),
    ("prompt revision", ActionKind.PROMPT_REVISION),
    ("revise the prompt", ActionKind.PROMPT_REVISION),
    ("image detail refinement", ActionKind.IMAGE_DETAIL_REFINEMENT),
    ("image details refinement", ActionKind.IMAGE_DETAIL_REFINEMENT),
    ("detail refinement", ActionKind.IMAGE_DETAIL_REFINEMENT),
    ("refine image details", ActionKind.IMAGE_DETAIL_REFINEMENT),
    ("best of n sampling", ActionKind.BEST_OF_N),
    ("best of n", ActionKind.BEST_OF_N),
    ("stop", ActionKind.STOP),
)

_PHRASE_RES = [(re.compile(rf"\b{re.escape(p)}\b"), p, kind) for p, kind in _ACTION_PHRASES]

_templates: dict[str, Template] = {}


def _template(name: str) -> Template:
    if name not in _templates:
        text = resources.files("imagent").joinpath(f"templates/{name}.txt").read_text("utf-8")
        _templates[name] = Template(text)
    return _templates[name]


def action_mask(state: AgentState) -> frozenset[ActionKind]:
    """Actions permitted in this state.

    Without an image only prompt-side moves make sense and stopping would
    return nothing. In editing, at least one action must run before the
    agent may declare the input already good enough.
    """
    everything = frozenset(ActionKind)
    if state.current_image is None:
        return frozenset(
            {ActionKind.NAIVE_GENERATION, ActionKind.PROMPT_ENHANCEMENT, ActionKind.BEST_OF_N}
        )
    if state.mode is Mode.EDITING and state.step_index == 1:
        return everything - {ActionKind.STOP}
    return everything


def _one_line(text: str, limit: int) -> str:
    flat = re.sub(r"\s+", " ", text).strip()
    if len(flat) > limit:
        flat = flat[: limit - 3] + "..."
    return flat


def _history_block(state: AgentState, window: int) -> str:
    if not state.history:
        return "No actions taken yet."
    older = state.history[:-window] if window > 0 else state.history
    recent = state.history[-window:] if window > 0 else ()
    lines = []
    if older:
        names = [o.action.value for o in older]
        shown = names[-_SUMMARY_NAMES_CAP:]
        summary = ", ".join(shown)
        if len(names) > len(shown):
            summary = f"(+{len(names) - len(shown)} more) {summary}"
        lines.append(f"Earlier actions (oldest first): {summary}")
    for obs in recent:
        line = (
            f"step {obs.step}: {obs.action.value} - {_one_line(obs.rationale, _RATIONALE_CLIP)}"
            f" | feedback: {_one_line(obs.feedback, _FEEDBACK_CLIP)}"
        )
        if obs.score is not None:
            line += f" | score: {obs.score!r}"
        lines.append(line)
    return "\n".join(lines)


def build_policy_prompt(state: AgentState, config: RunConfig) -> str:
    """Render the decision prompt. Pure function of (state, config)."""
    mask = action_mask(state)
    actions = "\n".join(
        f"- {kind.value}: {ACTION_DEFINITIONS[kind]}" for kind in ActionKind if kind in mask
    )
    tid = "policy_generation" if state.mode is Mode.GENERATION else "policy_editing"
    window = state.history[-config.history_window:] if config.history_window > 0 else ()

    def render(win: int) -> str:
        return _template(tid).substitute(
            step=state.step_index,
            t_max=config.t_max,
            p0=_one_line(state.initial_prompt, _PROMPT_CLIP),
            pt=_one_line(state.current_prompt, _PROMPT_CLIP),
            image_note="[image attached]" if state.current_image is not None else "none yet",
            history=_history_block(state, win),
            actions=actions,
        )

    # The window bounds the prompt for any realistic config; shrink it
    # further in the degenerate cases rather than exceed the ceiling.
    win = min(config.history_window, len(window)) if window else config.history_window
    text = render(win)
    while len(text) > MAX_PROMPT_CHARS and win > 0:
        win -= 1
        text = render(win)
    return text[:MAX_PROMPT_CHARS]


def _normalize(text: str) -> str:
    out = text.lower()
    out = out.replace("$\\_$", "_").replace("\\_", "_")
    out = re.sub(r"[-_]+", " ", out)
    return re.sub(r"\s+", " ", out)


def match_action(text: str) -> ActionKind | None:
    """Earliest recognizable action phrase in `text`, if any."""
    norm = _normalize(text)
    best: tuple[int, int, ActionKind] | None = None
    for rx, phrase, kind in _PHRASE_RES:
        m = rx.search(norm)
        if m and (best is None or (m.start(), -len(phrase)) < (best[0], best[1])):
            best = (m.start(), -len(phrase), kind)
    return best[2] if best else None


def _extract_json_envelope(raw: str) -> tuple[str, str] | None:
    """First well-formed JSON object carrying an "action" key."""
    decoder = json.JSONDecoder()
    text = raw[:100_000]
    tried = 0
    for m in re.finditer(r"\{", text):
        if tried >= 32:
            break
        tried += 1
        try:
            obj, _ = decoder.raw_decode(text, m.start())
        except ValueError:
            continue
        if isinstance(obj, dict) and "action" in obj:
            action = obj["action"]
            reason = obj.get("reason", "")
            return (
                action if isinstance(action, str) else json.dumps(action),
                reason if isinstance(reason, str) else json.dumps(reason),
            )
    return None


def parse_decision(raw: str, mask: frozenset[ActionKind]) -> Decision:
    """Resolve a controller reply against the mask.

    Raises NoActionError when nothing in the reply names an action and
    MaskedActionError when the named action is not permitted. Never
    raises anything else, whatever the input looks like.
    """
    reason = ""
    kind: ActionKind | None = None
    envelope = _extract_json_envelope(raw)
    if envelope is not None:
        action_text, reason = envelope
        kind = match_action(action_text)
    if kind is None:
        kind = match_action(raw)
    if kind is None:
        raise NoActionError("reply names no recognizable action")
    if kind not in mask:
        raise MaskedActionError(f"action {kind.value} is not permitted in this state")
    rationale = _one_line(reason, _RATIONALE_CLIP) or _one_line(raw, _RATIONALE_CLIP)
    return Decision(action=kind, rationale=rationale, raw=raw, parse_attempts=1)


def _corrective(error: Exception, mask: frozenset[ActionKind]) -> str:
    names = ", ".join(k.value for k in ActionKind if k in mask)
    if isinstance(error, MaskedActionError):
        issue = "named an action that is not permitted right now"
    else:
        issue = "did not name a recognizable action"
    return (
        f"\n\nYour previous reply {issue}. Choose exactly one of: {names}. "
        'Reply with one JSON object on a single line: {"action": "<name>", "reason": "<one line>"}'
    )


def decide(backend, state: AgentState, config: RunConfig) -> Decision:
    """Ask the backend to choose the next action for `state`.

    Retries parse failures up to config.parse_retries times with a
    corrective instruction appended, then falls back to a safe action
    with the fallback flag set. Backend transport errors propagate.
    """
    from .backend.base import UnderstandRequest  # local import to avoid a cycle

    images = []
    if state.current_image is not None:
        images.append(state.current_image)
    if (
        state.mode is Mode.EDITING
        and state.initial_image is not None
        and (state.current_image is None or state.initial_image.digest != state.current_image.digest)
    ):
        # the original input rides along so drift from it stays visible
        images.append(state.initial_image)
    if images and not backend.capabilities().supports_image_in_understand:
        raise CapabilityMissing("backend cannot take images in understand calls")

    tid = "policy_generation" if state.mode is Mode.GENERATION else "policy_editing"
    base = build_policy_prompt(state, config)
    mask = action_mask(state)

    prompt = base
    attempts = 0
    last_raw = ""
    for _ in range(1 + max(0, config.parse_retries)):
        raw = backend.understand(UnderstandRequest(text=prompt, template_id=tid, images=images))
        attempts += 1
        last_raw = raw
        try:
            decision = parse_decision(raw, mask)
        except (MaskedActionError, NoActionError) as exc:
            prompt = base + _corrective(exc, mask)
            continue
        return replace(decision, parse_attempts=attempts)

    fallback = (
        ActionKind.NAIVE_GENERATION if state.current_image is None else ActionKind.STOP
    )
    logger.warning(
        "step %d: controller reply unusable after %d attempts; falling back to %s",
        state.step_index,
        attempts,
        fallback.value,
    )
    return Decision(
        action=fallback,
        rationale="",
        raw=last_raw,
        parse_attempts=attempts,
        fallback=True,
    )
