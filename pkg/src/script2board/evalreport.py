"""Evaluation harness: per-panel perceptual quality plus text-image
consistency, reported as JSON and an aligned text table (quality down,
consistency up, mirroring the usual leaderboard columns)."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import ImageAsset
from .compose import Storyboard
from .errors import Script2BoardError
from .niqe import PristineModel, niqe_score
from .script_ir import ScriptIR

log = logging.getLogger("script2board.evalreport")


def clip_t_score(panel_image, description: str, embed_backend) -> float:
    """Cosine similarity between unit-norm image and text embeddings."""
    v_img = embed_backend.embed(panel_image if isinstance(panel_image, ImageAsset)
                                else np.asarray(panel_image))
    v_txt = embed_backend.embed(description)
    return float(np.clip(np.dot(v_img, v_txt), -1.0, 1.0))


def panel_description(panel, ir: ScriptIR) -> str:
    """Text side of the consistency score: speaker profile summary, spot name,
    and the spoken line."""
    spot = ir.spot(panel.plan.spot_id)
    parts = [spot.name]
    if panel.segment_id is not None:
        seg = next(d for d in ir.dialogues if d.id == panel.segment_id)
        speaker = ir.character(seg.speaker_id)
        profile = ", ".join(v for v in speaker.refined_profile.values() if v)
        parts = [f"{speaker.name}, {profile}" if profile else speaker.name,
                 spot.name, seg.line]
    elif spot.description:
        parts.append(spot.description[:200])
    return ". ".join(parts)


@dataclass
class EvalReport:
    rows: list[dict]                  # per-panel {panel, niqe, clip_t, error?}
    backend_identity: str = ""
    aggregate: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregate:
            niqes = [r["niqe"] for r in self.rows if r.get("niqe") is not None]
            clips = [r["clip_t"] for r in self.rows if r.get("clip_t") is not None]
            self.aggregate = {
                "niqe_mean": float(np.mean(niqes)) if niqes else None,
                "clip_t_mean": float(np.mean(clips)) if clips else None,
                "panels": len(self.rows),
                "failed": sum(1 for r in self.rows if r.get("error")),
            }

    def to_dict(self) -> dict:
        return {"rows": self.rows, "aggregate": self.aggregate,
                "backend_identity": self.backend_identity}

    def to_text(self) -> str:
        lines = [f"{'panel':>5}  {'NIQE (down)':>12}  {'CLIP-T (up)':>12}"]
        for r in self.rows:
            niqe = f"{r['niqe']:.4f}" if r.get("niqe") is not None else "FAIL"
            clip = f"{r['clip_t']:.4f}" if r.get("clip_t") is not None else "FAIL"
            lines.append(f"{r['panel']:>5}  {niqe:>12}  {clip:>12}")
        agg = self.aggregate
        niqe = f"{agg['niqe_mean']:.4f}" if agg.get("niqe_mean") is not None else "n/a"
        clip = f"{agg['clip_t_mean']:.4f}" if agg.get("clip_t_mean") is not None else "n/a"
        lines.append(f"{'mean':>5}  {niqe:>12}  {clip:>12}")
        return "\n".join(lines) + "\n"

    def save(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        (directory / "report.txt").write_text(self.to_text(), encoding="utf-8")


def evaluate_storyboard(board: Storyboard, ir: ScriptIR, model: PristineModel,
                        embed_backend) -> EvalReport:
    rows = []
    for panel in board.panels:
        row = {"panel": panel.index, "niqe": None, "clip_t": None}
        description = panel_description(panel, ir)
        try:
            row["niqe"] = niqe_score(panel.image, model)
            row["clip_t"] = clip_t_score(panel.image, description, embed_backend)
        except Script2BoardError as exc:
            row["error"] = str(exc)
            log.error("panel %d evaluation failed: %s", panel.index, exc)
        rows.append(row)
    identity = type(embed_backend).__name__
    return EvalReport(rows=rows, backend_identity=identity)
