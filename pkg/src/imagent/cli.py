"""Command-line entry points.

Contract: stdout carries machine-parseable key=value lines only; all
prose (step logs, warnings, violation details) goes to stderr. Exit 0 on
success, 1 when a run aborted or a check failed, 2 on usage errors.

Settings resolve in precedence order: built-in defaults, then the config
file (IMAGENT_CONFIG or ./imagent.conf, KEY=VALUE lines), then the
IMAGENT_* environment variables, then command-line flags.
"""

from __future__ import annotations

import logging
import os
import secrets
import sys
import time
from pathlib import Path

import click

from .agent import run_editing, run_generation
from .backend import (
    HttpBackend,
    SimulatedBackend,
    SimWorldConfig,
    build_backend_from_info,
)
from .bench import load_corpus, parse_variant, run_bench, write_report
from .errors import CorpusError, SchemaMismatchError, UnreadableImage
from .trace_store import load_trace, replay, save_trace, trace_diff, validate
from .types import RunConfig, TerminalKind

_DEFAULTS = {
    "backend": "sim",
    "endpoint": None,
    "api_key": None,
    "out_dir": "runs",
    "seed": 0,
    "t_max": 5,
    "best_of_n": 4,
    "parse_retries": 2,
    "history_window": 5,
    "noise_rate": 0.0,
    "refine_gain": 1,
}
_INT_KEYS = ("seed", "t_max", "best_of_n", "parse_retries", "history_window", "refine_gain")
_FLOAT_KEYS = ("noise_rate",)


def _load_config_file() -> dict:
    override = os.environ.get("IMAGENT_CONFIG")
    path = Path(override) if override else Path("imagent.conf")
    if not path.exists():
        if override:
            raise click.UsageError(f"config file {path} does not exist")
        return {}
    values: dict = {}
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, sep, value = text.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise click.UsageError(f"{path}:{lineno}: expected KEY=VALUE")
        if key not in _DEFAULTS:
            raise click.UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _env_overrides() -> dict:
    values = {}
    if os.environ.get("IMAGENT_ENDPOINT"):
        values["endpoint"] = os.environ["IMAGENT_ENDPOINT"]
    if os.environ.get("IMAGENT_API_KEY"):
        values["api_key"] = os.environ["IMAGENT_API_KEY"]
    if os.environ.get("IMAGENT_OUT_DIR"):
        values["out_dir"] = os.environ["IMAGENT_OUT_DIR"]
    return values


def _effective(flags: dict) -> dict:
    merged = dict(_DEFAULTS)
    merged.update(_load_config_file())
    merged.update(_env_overrides())
    merged.update({k: v for k, v in flags.items() if v is not None})
    for key in _INT_KEYS:
        try:
            merged[key] = int(merged[key])
        except (TypeError, ValueError):
            raise click.UsageError(f"{key} must be an integer, got {merged[key]!r}") from None
    for key in _FLOAT_KEYS:
        try:
            merged[key] = float(merged[key])
        except (TypeError, ValueError):
            raise click.UsageError(f"{key} must be a number, got {merged[key]!r}") from None
    if merged["backend"] not in ("sim", "http"):
        raise click.UsageError(f"backend must be sim or http, got {merged['backend']!r}")
    return merged


def _run_config(eff: dict) -> RunConfig:
    return RunConfig(
        t_max=eff["t_max"],
        best_of_n=eff["best_of_n"],
        seed=eff["seed"],
        parse_retries=eff["parse_retries"],
        history_window=eff["history_window"],
    )


def _build_backend(eff: dict, artifact_dir: Path, scripted: str | None = None):
    if eff["backend"] == "sim":
        world = SimWorldConfig(
            noise_rate=eff["noise_rate"],
            refine_gain=eff["refine_gain"],
            scripted_controller=(
                [s.strip() for s in scripted.split(",") if s.strip()] if scripted else None
            ),
        )
        return SimulatedBackend(world, artifact_dir)
    if not eff["endpoint"]:
        raise click.UsageError("the http backend needs --endpoint or IMAGENT_ENDPOINT")
    return HttpBackend(eff["endpoint"], api_key=eff["api_key"], artifact_dir=artifact_dir)


def _new_run_dir(eff: dict, prefix: str) -> Path:
    run_id = f"{prefix}-{time.strftime('%Y%m%dT%H%M%S')}-{secrets.token_hex(3)}"
    return Path(eff["out_dir"]) / run_id


def _emit_run(trace, trace_path: Path, backend) -> None:
    click.echo(f"trace={trace_path}")
    final = backend.store.resolve(trace.final_image) if trace.final_image else ""
    click.echo(f"final_image={final}")
    click.echo(f"terminal={trace.terminal.kind.value}")
    click.echo(f"steps={trace.executed_steps}")
    click.echo(f"fallbacks={trace.fallback_count}")
    if trace.terminal.kind is TerminalKind.ABORTED:
        click.echo(f"reason: {trace.terminal.reason}", err=True)
        sys.exit(1)


def _common_options(fn):
    options = [
        click.option("--backend", type=click.Choice(["sim", "http"]), default=None,
                     help="Model backend (default: sim)."),
        click.option("--endpoint", default=None, help="HTTP backend base URL."),
        click.option("--api-key", default=None, help="Bearer token for the HTTP backend."),
        click.option("--seed", type=int, default=None, help="Run seed (default: 0)."),
        click.option("--t-max", type=int, default=None, help="Step budget (default: 5)."),
        click.option("--best-of-n", type=int, default=None,
                     help="Candidates per best-of-N step (default: 4)."),
        click.option("--parse-retries", type=int, default=None,
                     help="Controller reply parse retries (default: 2)."),
        click.option("--history-window", type=int, default=None,
                     help="Observations shown verbatim to the controller (default: 5)."),
        click.option("--out-dir", default=None, help="Directory for run outputs (default: runs)."),
        click.option("--noise-rate", type=float, default=None,
                     help="Simulated world keyword drop probability (default: 0)."),
        click.option("--refine-gain", type=int, default=None,
                     help="Simulated world gaps closed per edit (default: 1)."),
        click.option("--scripted", default=None,
                     help="Comma-separated wire names forcing the simulated controller."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.option("--quiet", is_flag=True, help="Only warnings on stderr.")
def main(quiet: bool) -> None:
    """Iterative test-time scaling for image generation and editing."""
    logging.basicConfig(
        stream=sys.stderr,
        format="%(message)s",
        level=logging.WARNING if quiet else logging.INFO,
        force=True,
    )


@main.command("run-gen")
@click.argument("prompt")
@_common_options
def run_gen(prompt: str, scripted: str | None, **flags) -> None:
    """Generate an image for PROMPT with the iterative loop."""
    eff = _effective(flags)
    run_dir = _new_run_dir(eff, "gen")
    backend = _build_backend(eff, run_dir / "artifacts", scripted)
    trace = run_generation(_run_config(eff), backend, prompt)
    path = save_trace(trace, run_dir)
    _emit_run(trace, path, backend)


@main.command("run-edit")
@click.argument("prompt")
@click.argument("image", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_common_options
def run_edit(prompt: str, image: Path, scripted: str | None, **flags) -> None:
    """Edit IMAGE as requested by PROMPT with the iterative loop."""
    eff = _effective(flags)
    run_dir = _new_run_dir(eff, "edit")
    backend = _build_backend(eff, run_dir / "artifacts", scripted)
    try:
        ref = backend.store.ingest(image)
    except UnreadableImage as exc:
        click.echo(f"cannot read input image: {exc}", err=True)
        sys.exit(1)
    trace = run_editing(_run_config(eff), backend, prompt, ref)
    path = save_trace(trace, run_dir)
    _emit_run(trace, path, backend)


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--variants", default="controller,random:0,fixed:naive_generation",
              help="Comma-separated: controller | random[:seed] | fixed:<action>.")
@click.option("--parallel", type=int, default=1, help="Concurrent runs (default: 1).")
@_common_options
def bench(corpus: Path, variants: str, parallel: int, scripted: str | None, **flags) -> None:
    """Compare decision policies over a JSONL prompt corpus."""
    eff = _effective(flags)
    try:
        items = load_corpus(corpus)
        parsed = [parse_variant(v) for v in variants.split(",") if v.strip()]
        if not parsed:
            raise ValueError("no variants given")
    except (CorpusError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc
    bench_dir = _new_run_dir(eff, "bench")
    backend = _build_backend(eff, bench_dir / "artifacts", scripted)
    report = run_bench(items, parsed, _run_config(eff), backend, parallel=max(1, parallel))
    json_path, txt_path = write_report(report, bench_dir)
    click.echo(f"report_json={json_path}")
    click.echo(f"report_txt={txt_path}")
    click.echo(f"rows={len(report.rows)}")
    for label, agg in report.aggregates.items():
        click.echo(f"mean[{label}]={agg['mean_score']:.6f}")


@main.command("replay")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_common_options
def replay_cmd(trace: Path, scripted: str | None, **flags) -> None:
    """Re-execute a recorded trace and report whether it reproduces."""
    eff = _effective(flags)
    try:
        original = load_trace(trace)
    except SchemaMismatchError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    run_dir = _new_run_dir(eff, "replay")
    info = dict(original.backend_info)
    if eff["endpoint"]:
        info["endpoint"] = eff["endpoint"]
    try:
        backend = build_backend_from_info(info, run_dir / "artifacts")
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    replayed = replay(original, backend, source_dir=original.source_dir)
    path = save_trace(replayed, run_dir)
    diffs = trace_diff(original, replayed)
    click.echo(f"replay_trace={path}")
    click.echo(f"verdict={'identical' if not diffs else 'diverged'}")
    click.echo(f"diff_count={len(diffs)}")
    for line in diffs[:20]:
        click.echo(f"diff: {line}", err=True)
    if diffs:
        sys.exit(1)


@main.command("validate")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def validate_cmd(trace: Path) -> None:
    """Check a trace file against the schema and its artifacts."""
    violations = validate(trace)
    click.echo(f"violations={len(violations)}")
    for violation in violations:
        click.echo(violation, err=True)
    if violations:
        sys.exit(1)


if __name__ == "__main__":
    main()
