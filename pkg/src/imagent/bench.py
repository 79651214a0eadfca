"""Policy ablation bench: controller vs. random vs. fixed single actions.

Each variant runs the same prompts on the same backend and the final
image is judged against the original prompt, so a row isolates exactly
one question: did the decision policy earn its steps? Reports are
deterministic for a fixed config and corpus; the random variant derives
its draws from (variant seed, prompt id), never from execution order.

The exhaustive oracle enumerates every action sequence up to the step
budget and reports the best final score reachable at all, which upper-
bounds any policy on the simulated world.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from random import Random
from typing import Any

from . import actions
from .agent import run_editing, run_generation, step
from .errors import CorpusError
from .policy import action_mask
from .seeds import stable64
from .trace_store import canonical_json
from .types import ActionKind, AgentState, Decision, Mode, RunConfig, Trace

_MODE_ALIASES = {
    "generation": Mode.GENERATION,
    "gen": Mode.GENERATION,
    "editing": Mode.EDITING,
    "edit": Mode.EDITING,
}


@dataclass(frozen=True)
class CorpusItem:
    id: str
    prompt: str
    mode: Mode
    image_path: Path | None = None


def load_corpus(path: Path | str) -> list[CorpusItem]:
    """Read a JSONL corpus: {"id", "prompt", "mode", "image_path"?} per line."""
    path = Path(path)
    try:
        lines = path.read_text("utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    items: list[CorpusItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except ValueError as exc:
            raise CorpusError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(row, dict):
            raise CorpusError(f"{path}:{lineno}: row is not an object")
        try:
            item_id = str(row["id"])
            prompt = row["prompt"]
            mode_text = str(row["mode"]).lower()
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc}") from exc
        if mode_text not in _MODE_ALIASES:
            raise CorpusError(f"{path}:{lineno}: unknown mode {row['mode']!r}")
        mode = _MODE_ALIASES[mode_text]
        if not isinstance(prompt, str) or not prompt:
            raise CorpusError(f"{path}:{lineno}: prompt must be a non-empty string")
        if item_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate id {item_id!r}")
        seen.add(item_id)
        image_path = None
        if mode is Mode.EDITING:
            raw = row.get("image_path")
            if not raw:
                raise CorpusError(f"{path}:{lineno}: editing rows need image_path")
            image_path = (path.parent / raw).resolve()
        items.append(CorpusItem(id=item_id, prompt=prompt, mode=mode, image_path=image_path))
    if not items:
        raise CorpusError(f"{path}: corpus is empty")
    return items


@dataclass(frozen=True)
class PolicyVariant:
    """One policy under test: the controller, seeded random, or one fixed action."""

    kind: str  # "controller" | "random" | "fixed"
    seed: int | None = None
    action: ActionKind | None = None

    @classmethod
    def controller(cls) -> "PolicyVariant":
        return cls("controller")

    @classmethod
    def random(cls, seed: int) -> "PolicyVariant":
        return cls("random", seed=seed)

    @classmethod
    def fixed(cls, action: ActionKind) -> "PolicyVariant":
        if action is ActionKind.STOP:
            raise ValueError("Fixed(STOP) would never produce an image")
        return cls("fixed", action=action)

    @property
    def label(self) -> str:
        if self.kind == "controller":
            return "controller"
        if self.kind == "random":
            return f"random({self.seed})"
        return f"fixed({self.action.value})"


def parse_variant(text: str) -> PolicyVariant:
    """Parse CLI spellings: controller | random[:seed] | fixed:<action>."""
    spec = text.strip()
    if spec == "controller":
        return PolicyVariant.controller()
    if spec == "random" or spec.startswith("random:"):
        _, _, seed = spec.partition(":")
        return PolicyVariant.random(int(seed) if seed else 0)
    if spec.startswith("fixed:"):
        name = spec.split(":", 1)[1]
        try:
            action = ActionKind(name)
        except ValueError:
            raise ValueError(f"unknown action {name!r} in variant {text!r}") from None
        return PolicyVariant.fixed(action)
    raise ValueError(f"unknown variant {text!r}")


def _random_decider(seed: int):
    rng = Random(seed)

    def decider(backend, state: AgentState, config: RunConfig) -> Decision:
        choices = sorted(action_mask(state), key=lambda k: k.value)
        return Decision(
            action=rng.choice(choices),
            rationale="random draw",
            raw="",
            parse_attempts=0,
        )

    return decider


def _final_score(backend, prompt: str, trace_or_image) -> float:
    image = trace_or_image.final_image if isinstance(trace_or_image, Trace) else trace_or_image
    if image is None:
        return 0.0
    return actions.evaluate_alignment(backend, prompt, image).score


def _run_fixed(item: CorpusItem, variant: PolicyVariant, config: RunConfig, backend) -> dict:
    """Fixed variants run their action exactly once.

    In generation mode, actions that need an existing image get a naive
    draft first; the draft is scaffolding and is not counted as a step.
    """
    if item.mode is Mode.EDITING:
        image = backend.store.ingest(item.image_path)
        state = AgentState.initial(item.prompt, image, Mode.EDITING)
    else:
        state = AgentState.initial(item.prompt, None, Mode.GENERATION)
        if variant.action in (ActionKind.PROMPT_REVISION, ActionKind.IMAGE_DETAIL_REFINEMENT):
            draft = actions.naive(backend, state, config)
            state = replace(state, current_image=draft.new_image, step_index=2)
    decision = Decision(
        action=variant.action, rationale="fixed variant", raw="", parse_attempts=0
    )
    state, _ = step(state, decision, config, backend)
    return {
        "prompt_id": item.id,
        "variant": variant.label,
        "final_score": _final_score(backend, item.prompt, state.current_image),
        "steps_executed": 1,
        "fallback_count": 0,
    }


def _run_one(item: CorpusItem, variant: PolicyVariant, config: RunConfig, backend) -> dict:
    run_config = replace(config, seed=stable64(config.seed, item.id))
    if variant.kind == "fixed":
        return _run_fixed(item, variant, run_config, backend)

    decider = None
    if variant.kind == "random":
        decider = _random_decider(stable64(variant.seed, item.id))
    if item.mode is Mode.EDITING:
        image = backend.store.ingest(item.image_path)
        trace = run_editing(run_config, backend, item.prompt, image, decider=decider)
    else:
        trace = run_generation(run_config, backend, item.prompt, decider=decider)
    return {
        "prompt_id": item.id,
        "variant": variant.label,
        "final_score": _final_score(backend, item.prompt, trace),
        "steps_executed": trace.executed_steps,
        "fallback_count": trace.fallback_count,
    }


@dataclass
class BenchReport:
    rows: list[dict]
    aggregates: dict[str, dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "aggregates": self.aggregates}


def run_bench(
    corpus: list[CorpusItem],
    variants: list[PolicyVariant],
    config: RunConfig,
    backend,
    parallel: int = 1,
) -> BenchReport:
    """Run every (prompt, variant) pair once and aggregate per variant."""
    if not corpus:
        raise CorpusError("corpus is empty")
    if not variants:
        raise ValueError("no variants given")
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ValueError("variant labels must be unique")

    pairs = [(item, variant) for item in corpus for variant in variants]
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(lambda p: _run_one(p[0], p[1], config, backend), pairs))
    else:
        rows = [_run_one(item, variant, config, backend) for item, variant in pairs]

    aggregates: dict[str, dict[str, Any]] = {}
    for variant in variants:
        mine = [r for r in rows if r["variant"] == variant.label]
        aggregates[variant.label] = {
            "runs": len(mine),
            "mean_score": sum(r["final_score"] for r in mine) / len(mine),
            "mean_steps": sum(r["steps_executed"] for r in mine) / len(mine),
        }
    return BenchReport(rows=rows, aggregates=aggregates)


def write_report(report: BenchReport, out_dir: Path | str) -> tuple[Path, Path]:
    """Write report.json (canonical) and report.txt (aligned table)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_text(canonical_json(report.to_dict()), "utf-8")

    id_w = max([len("prompt_id")] + [len(r["prompt_id"]) for r in report.rows])
    var_w = max([len("variant")] + [len(r["variant"]) for r in report.rows])
    lines = [
        f"{'prompt_id':<{id_w}}  {'variant':<{var_w}}  {'final_score':>11}  {'steps':>5}  {'fallbacks':>9}"
    ]
    for r in report.rows:
        lines.append(
            f"{r['prompt_id']:<{id_w}}  {r['variant']:<{var_w}}  "
            f"{r['final_score']:>11.6f}  {r['steps_executed']:>5d}  {r['fallback_count']:>9d}"
        )
    lines.append("")
    lines.append("aggregates:")
    for label, agg in report.aggregates.items():
        lines.append(
            f"{label:<{var_w}}  runs={agg['runs']}  "
            f"mean_score={agg['mean_score']:.6f}  mean_steps={agg['mean_steps']:.3f}"
        )
    txt_path = out_dir / "report.txt"
    txt_path.write_text("\n".join(lines) + "\n", "utf-8")
    return json_path, txt_path


def optimal_sequence_value(
    prompt: str,
    config: RunConfig,
    backend,
    image=None,
    mode: Mode = Mode.GENERATION,
) -> tuple[float, tuple[ActionKind, ...]]:
    """Best final score any action sequence of length <= t_max can reach.

    Exhaustive depth-first walk over the masked action tree, scoring the
    image after every prefix (a policy may stop at any point). Feasible
    because the simulated world makes each step cheap; on the default
    budget the tree has a few thousand nodes.
    """
    best_score = 0.0
    best_seq: tuple[ActionKind, ...] = ()

    def dfs(state: AgentState, seq: tuple[ActionKind, ...]) -> None:
        nonlocal best_score, best_seq
        if best_score >= 1.0:
            return
        if state.current_image is not None:
            score = actions.evaluate_alignment(backend, prompt, state.current_image).score
            if score > best_score:
                best_score, best_seq = score, seq
        if len(seq) >= config.t_max:
            return
        for action in sorted(action_mask(state) - {ActionKind.STOP}, key=lambda k: k.value):
            decision = Decision(action=action, rationale="oracle", raw="", parse_attempts=0)
            child, _ = step(state, decision, config, backend)
            dfs(child, seq + (action,))

    dfs(AgentState.initial(prompt, image, mode), ())
    return best_score, best_seq
