"""Stage implementations tying the modules together over a workspace."""

from __future__ import annotations

import hashlib
import json
import logging
from importlib import resources
from pathlib import Path

from . import director as director_mod
from .backends import BackendSet
from .cinematographer import (
    AssetStore,
    BasePromptConfig,
    generate_multiview,
    generate_reference_images,
)
from .compose import Storyboard, compose_panel, save_storyboard
from .director import (
    ElementDatabase,
    index_records,
    load_templates,
    retrieve_context,
)
from .evalreport import evaluate_storyboard
from .niqe import PristineModel
from .script_ir import (
    CharacterRecord,
    DialogueSegment,
    ScriptIR,
    SpotRecord,
    segment_pages,
)
from .storyboard import (
    assign_boundaries,
    check_axis_of_action,
    plan_shot_sequence,
    select_viewpoint,
)
from .workspace import Workspace

log = logging.getLogger("script2board.pipeline")


def _setup_file_log(ws: Workspace) -> None:
    logdir = ws.dir("logs")
    root = logging.getLogger("script2board")
    target = str(logdir / "director.log")
    if not any(isinstance(h, logging.FileHandler)
               and getattr(h, "baseFilename", "") == target for h in root.handlers):
        handler = logging.FileHandler(target, encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(name)s %(levelname)s %(message)s"))
        root.addHandler(handler)
        root.setLevel(logging.INFO)


def _inputs_digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(str(p).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# stage: parse

def stage_parse(ws: Workspace, script_path: Path, kind: str = "screenplay",
                max_segments_per_page: int = 12, strict: bool = False) -> ScriptIR:
    from .script_ir import parse_screenplay

    _setup_file_log(ws)
    text = Path(script_path).read_text(encoding="utf-8")
    digest = _inputs_digest("parse", text, kind, max_segments_per_page, strict)
    raw = segment_pages(text, max_segments_per_page, source_kind=kind)
    if kind == "screenplay":
        ir = parse_screenplay(raw.text, strict=strict, pages=raw.pages)
        ir.raw.pages = raw.pages
    else:
        ir = ScriptIR(raw=raw)     # prose is extracted in the direct stage
    (ws.dir("ir") / "script.json").write_text(ir.to_json(), encoding="utf-8")
    ws.record_stage("parse", digest)
    return ir


# ---------------------------------------------------------------------------
# stage: direct

def load_parsed_ir(ws: Workspace) -> ScriptIR:
    return ScriptIR.from_json((ws.root / "ir" / "script.json").read_text(
        encoding="utf-8"))


def load_project_ir(ws: Workspace) -> ScriptIR:
    """Parsed IR overlaid with the director's refined records when present."""
    ir = load_parsed_ir(ws)
    db_dir = ws.root / "db"
    if (db_dir / "characters.json").exists():
        ir.characters = [CharacterRecord(**c) for c in json.loads(
            (db_dir / "characters.json").read_text(encoding="utf-8"))]
        ir.spots = [SpotRecord(**s) for s in json.loads(
            (db_dir / "spots.json").read_text(encoding="utf-8"))]
        ir.dialogues = [DialogueSegment(**d) for d in json.loads(
            (db_dir / "dialogues.json").read_text(encoding="utf-8"))]
        ir.validate()
    return ir


def stage_direct(ws: Workspace, backends: BackendSet, seed: int = 0,
                 rounds: int = director_mod.DEFAULT_ROUNDS) -> ElementDatabase:
    _setup_file_log(ws)
    ws.check_predecessors("direct")
    digest = _inputs_digest("direct", ws.outputs_digest("parse"), seed, rounds,
                            backends.digest())
    ir = load_parsed_ir(ws)
    templates = load_templates()
    ir = director_mod.extract_elements(ir.raw, templates["I0_extract"],
                                       backends.chat)
    targets = [c.id for c in ir.characters] + [s.id for s in ir.spots]
    if targets:
        ir = director_mod.refine_entities(ir, targets, templates["I1_refine"],
                                          backends.chat, rounds=rounds)
    db = index_records(ir)
    director_mod.save_database(db, ws.dir("db"))
    ws.record_stage("direct", digest)
    return db


# ---------------------------------------------------------------------------
# stage: shoot

def stage_shoot(ws: Workspace, backends: BackendSet, seed: int = 0) -> dict:
    _setup_file_log(ws)
    ws.check_predecessors("shoot")
    digest = _inputs_digest("shoot", ws.outputs_digest("direct"), seed,
                            backends.digest())
    ir = load_project_ir(ws)
    store = AssetStore(ws.dir("assets"))
    config = BasePromptConfig()
    refs = generate_reference_images(ir, config, backends.image, store, seed=seed)
    char_refs = {k: v for k, v in refs.items() if v.role == "character_ref"}
    view_sets = generate_multiview(char_refs, backends.multiview, store)
    ws.record_stage("shoot", digest)
    return {"refs": refs, "view_sets": view_sets}


def load_assets(ws: Workspace) -> tuple[dict, dict]:
    """(asset map for compositing, view sets) reloaded from the asset tree."""
    store = AssetStore(ws.root / "assets")
    assets: dict = {}
    views: dict[str, list] = {}
    for key, entry in store.manifest.items():
        asset = store.get(key)
        if entry["role"] == "spot_ref":
            assets[entry["owner_id"]] = asset
        elif entry["role"] == "character_view":
            assets[(entry["owner_id"], entry["view_index"])] = asset
            views.setdefault(entry["owner_id"], []).append(asset)
    from .cinematographer import MultiViewSet
    view_sets = {cid: MultiViewSet(
        character_id=cid, views=sorted(vs, key=lambda a: a.view_index))
        for cid, vs in views.items()}
    return assets, view_sets


# ---------------------------------------------------------------------------
# stage: board

def build_storyboard(ir: ScriptIR, db: ElementDatabase, assets: dict,
                     view_sets: dict, backends: BackendSet | None = None,
                     use_backend_rerank: bool = True) -> Storyboard:
    templates = load_templates()
    chat = backends.chat if (backends and use_backend_rerank) else None
    plans = plan_shot_sequence(ir, db)
    panels = []
    for index, plan in enumerate(plans):
        context = (retrieve_context(db, plan.segment_id)
                   if plan.segment_id is not None else None)
        selections = select_viewpoint(plan, context, view_sets,
                                      template=templates["I2_view_select"],
                                      backend=chat)
        boundaries = assign_boundaries(plan, selections,
                                       template=templates["I3_boundary"],
                                       backend=chat)
        if plan.segment_id is not None:
            seg = next(d for d in ir.dialogues if d.id == plan.segment_id)
            speaker = ir.character(seg.speaker_id)
            caption = f"{speaker.name.upper()}: {seg.line}"
        else:
            caption = ir.spot(plan.spot_id).name.upper()
        panels.append(compose_panel(index, plan, selections, boundaries,
                                    assets, caption))
    return Storyboard(panels=panels)


def stage_board(ws: Workspace, backends: BackendSet, seed: int = 0) -> Storyboard:
    _setup_file_log(ws)
    ws.check_predecessors("board")
    digest = _inputs_digest("board", ws.outputs_digest("direct"),
                            ws.outputs_digest("shoot"), seed, backends.digest())
    ir = load_project_ir(ws)
    db = index_records(ir)
    assets, view_sets = load_assets(ws)
    board = build_storyboard(ir, db, assets, view_sets, backends)
    save_storyboard(board, ws.dir("board"))
    audit = check_axis_of_action(board.to_records())
    (ws.dir("board") / "axis_audit.json").write_text(
        json.dumps(audit, indent=2, sort_keys=True), encoding="utf-8")
    ws.record_stage("board", digest)
    return board


# ---------------------------------------------------------------------------
# stage: eval

def default_pristine_model() -> PristineModel:
    path = resources.files("script2board.data").joinpath("niqe_pristine.json")
    with resources.as_file(path) as p:
        return PristineModel.load(p)


def load_board(ws: Workspace, ir: ScriptIR) -> Storyboard:
    """Rebuild panel objects from board/ for read-only consumers."""
    import numpy as np
    from PIL import Image

    from .storyboard import LayoutBoundary, ShotPlan, ViewSelection

    records = json.loads((ws.root / "board" / "storyboard.json").read_text(
        encoding="utf-8"))
    from .compose import Panel
    panels = []
    for rec in records:
        image = np.asarray(Image.open(
            ws.root / "board" / f"panel_{rec['index']:04d}.png").convert("RGBA"))
        plan = ShotPlan(segment_id=rec["segment_id"], shot_type=rec["shot_type"],
                        camera_side=rec["camera_side"],
                        subject_ids=rec["subject_ids"],
                        spot_id=next(b["element_id"] for b in rec["boundaries"]
                                     if b["z_order"] == 0),
                        scene_index=rec["scene_index"])
        panels.append(Panel(
            index=rec["index"], segment_id=rec["segment_id"], plan=plan,
            selections=[ViewSelection(segment_id=rec["segment_id"],
                                      character_id=s["character_id"],
                                      view_index=s["view_index"],
                                      score=s["score"])
                        for s in rec["selections"]],
            boundaries=[LayoutBoundary(segment_id=rec["segment_id"],
                                       element_id=b["element_id"],
                                       box=tuple(b["box"]), z_order=b["z_order"],
                                       anchor=b["anchor"])
                        for b in rec["boundaries"]],
            caption=rec["caption"], image=image))
    return Storyboard(panels=panels)


def stage_eval(ws: Workspace, backends: BackendSet,
               model: PristineModel | None = None):
    _setup_file_log(ws)
    ws.check_predecessors("eval")
    if model is None:
        local = ws.root / "models" / "niqe_pristine.json"
        model = PristineModel.load(local) if local.exists() \
            else default_pristine_model()
    digest = _inputs_digest("eval", ws.outputs_digest("board"),
                            model.corpus_digest, backends.digest())
    ir = load_project_ir(ws)
    board = load_board(ws, ir)
    report = evaluate_storyboard(board, ir, model, backends.embed)
    report.save(ws.dir("eval"))
    ws.record_stage("eval", digest)
    return report


# ---------------------------------------------------------------------------
# full run

def run_pipeline(ws: Workspace, script_path: Path, backends: BackendSet,
                 kind: str = "screenplay", seed: int = 0,
                 max_segments_per_page: int = 12, strict: bool = False):
    """parse -> direct -> shoot -> board -> eval, skipping stages whose inputs
    are unchanged (resumable after interruption)."""
    text = Path(script_path).read_text(encoding="utf-8")
    stage_inputs = {
        "parse": _inputs_digest("parse", text, kind, max_segments_per_page, strict),
    }
    with ws.lock():
        if not ws.stage_fresh("parse", stage_inputs["parse"]):
            stage_parse(ws, script_path, kind=kind,
                        max_segments_per_page=max_segments_per_page, strict=strict)
        digest = _inputs_digest("direct", ws.outputs_digest("parse"), seed,
                                director_mod.DEFAULT_ROUNDS, backends.digest())
        if not ws.stage_fresh("direct", digest):
            stage_direct(ws, backends, seed=seed)
        digest = _inputs_digest("shoot", ws.outputs_digest("direct"), seed,
                                backends.digest())
        if not ws.stage_fresh("shoot", digest):
            stage_shoot(ws, backends, seed=seed)
        digest = _inputs_digest("board", ws.outputs_digest("direct"),
                                ws.outputs_digest("shoot"), seed, backends.digest())
        if not ws.stage_fresh("board", digest):
            stage_board(ws, backends, seed=seed)
        local = ws.root / "models" / "niqe_pristine.json"
        model = PristineModel.load(local) if local.exists() \
            else default_pristine_model()
        digest = _inputs_digest("eval", ws.outputs_digest("board"),
                                model.corpus_digest, backends.digest())
        if not ws.stage_fresh("eval", digest):
            stage_eval(ws, backends, model=model)
