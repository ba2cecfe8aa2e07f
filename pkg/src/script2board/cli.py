"""Command-line surface: stage commands plus an end-to-end `run`.

Exit codes: 0 ok, 2 user/input error, 3 I/O error, 4 backend error,
5 internal invariant breach.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .backends import load_backend_configs, make_backends, mock_backend_configs
from .errors import (
    BackendError,
    ParseError,
    SchemaViolation,
    Script2BoardError,
    StaleStage,
    UnattributableDialogue,
    WorkspaceLocked,
)
from .workspace import Workspace

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_BACKEND = 4
EXIT_INTERNAL = 5


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ParseError, StaleStage, UnattributableDialogue,
                        WorkspaceLocked, ValueError)):
        return EXIT_INPUT
    if isinstance(exc, (SchemaViolation, BackendError)):
        return EXIT_BACKEND
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, Script2BoardError):
        return EXIT_INTERNAL
    return EXIT_INTERNAL


def _run(fn):
    try:
        fn()
    except Exception as exc:   # noqa: BLE001 - single funnel to exit codes
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    sys.exit(EXIT_OK)


def _backends(backends_path: str | None, mock: bool, seed: int):
    if mock or not backends_path:
        return make_backends(mock_backend_configs(seed=seed))
    return make_backends(load_backend_configs(backends_path))


workspace_opt = click.option("--workspace", "-w", default="workspace",
                             show_default=True, help="Project workspace directory.")
seed_opt = click.option("--seed", default=0, show_default=True, type=int)
backends_opt = click.option("--backends", "backends_path", default=None,
                            help="Path to backends.json (omit with --mock).")
mock_opt = click.option("--mock", is_flag=True,
                        help="Use the deterministic mock backends.")


@click.group()
def main():
    """Dialogue-script-to-storyboard pipeline."""


@main.command("parse")
@click.argument("script", type=click.Path())
@workspace_opt
@click.option("--kind", type=click.Choice(["screenplay", "prose"]),
              default="screenplay", show_default=True)
@click.option("--pages", "max_segments", default=12, show_default=True, type=int,
              help="Maximum dialogue cues per page.")
@click.option("--strict", is_flag=True, help="Raise on unclassifiable lines.")
def cmd_parse(script, workspace, kind, max_segments, strict):
    """Parse SCRIPT into the structured IR (writes ir/script.json)."""
    def go():
        path = Path(script)
        if not path.exists():
            raise FileNotFoundError(f"script file not found: {path}")
        ws = Workspace(workspace)
        with ws.lock():
            ir = pipeline.stage_parse(ws, path, kind=kind,
                                      max_segments_per_page=max_segments,
                                      strict=strict)
        click.echo(f"parsed: {len(ir.characters)} characters, "
                   f"{len(ir.spots)} spots, {len(ir.dialogues)} segments, "
                   f"{len(ir.raw.pages)} pages")
    _run(go)


@main.command("direct")
@workspace_opt
@seed_opt
@backends_opt
@mock_opt
def cmd_direct(workspace, seed, backends_path, mock):
    """Extract/refine elements and build the project database (db/)."""
    def go():
        ws = Workspace(workspace)
        bk = _backends(backends_path, mock, seed)
        with ws.lock():
            db = pipeline.stage_direct(ws, bk, seed=seed)
        click.echo(f"directed: {len(db.characters)} characters, "
                   f"{len(db.spots)} spots indexed")
    _run(go)


@main.command("shoot")
@workspace_opt
@seed_opt
@backends_opt
@mock_opt
def cmd_shoot(workspace, seed, backends_path, mock):
    """Generate reference images and 8-view portrait sets (assets/)."""
    def go():
        ws = Workspace(workspace)
        bk = _backends(backends_path, mock, seed)
        with ws.lock():
            out = pipeline.stage_shoot(ws, bk, seed=seed)
        click.echo(f"shot: {len(out['refs'])} references, "
                   f"{len(out['view_sets'])} view sets")
    _run(go)


@main.command("board")
@workspace_opt
@seed_opt
@backends_opt
@mock_opt
def cmd_board(workspace, seed, backends_path, mock):
    """Plan shots, select views, assign boundaries, composite panels (board/)."""
    def go():
        ws = Workspace(workspace)
        bk = _backends(backends_path, mock, seed)
        with ws.lock():
            board = pipeline.stage_board(ws, bk, seed=seed)
        click.echo(f"boarded: {board.panel_count} panels")
    _run(go)


@main.command("eval")
@workspace_opt
@seed_opt
@backends_opt
@mock_opt
def cmd_eval(workspace, seed, backends_path, mock):
    """Score the storyboard (eval/report.json, eval/report.txt)."""
    def go():
        ws = Workspace(workspace)
        bk = _backends(backends_path, mock, seed)
        with ws.lock():
            report = pipeline.stage_eval(ws, bk)
        click.echo(report.to_text())
    _run(go)


@main.command("run")
@click.argument("script", type=click.Path())
@workspace_opt
@seed_opt
@backends_opt
@mock_opt
@click.option("--kind", type=click.Choice(["screenplay", "prose"]),
              default="screenplay", show_default=True)
@click.option("--pages", "max_segments", default=12, show_default=True, type=int)
@click.option("--strict", is_flag=True)
def cmd_run(script, workspace, seed, backends_path, mock, kind, max_segments,
            strict):
    """Run the full pipeline end to end (resumable)."""
    def go():
        path = Path(script)
        if not path.exists():
            raise FileNotFoundError(f"script file not found: {path}")
        ws = Workspace(workspace)
        bk = _backends(backends_path, mock, seed)
        pipeline.run_pipeline(ws, path, bk, kind=kind, seed=seed,
                              max_segments_per_page=max_segments, strict=strict)
        click.echo(f"workspace digest: {ws.digest()}")
    _run(go)


@main.command("fit-niqe")
@click.argument("corpus_dir", type=click.Path())
@workspace_opt
@click.option("--patch-size", default=96, show_default=True, type=int)
@click.option("--sharpness-fraction", default=0.75, show_default=True, type=float)
def cmd_fit_niqe(corpus_dir, workspace, patch_size, sharpness_fraction):
    """Fit a pristine quality model from a directory of images."""
    def go():
        from PIL import Image

        from .niqe import fit_pristine_model

        corpus_path = Path(corpus_dir)
        if not corpus_path.is_dir():
            raise FileNotFoundError(f"corpus directory not found: {corpus_path}")
        images = [Image.open(p) for p in sorted(corpus_path.iterdir())
                  if p.suffix.lower() in (".png", ".jpg", ".jpeg")]
        model = fit_pristine_model(images, patch_size=patch_size,
                                   sharpness_fraction=sharpness_fraction)
        ws = Workspace(workspace)
        out = ws.dir("models") / "niqe_pristine.json"
        model.save(out)
        click.echo(f"model written to {out} (corpus digest {model.corpus_digest})")
    _run(go)


if __name__ == "__main__":
    main()
