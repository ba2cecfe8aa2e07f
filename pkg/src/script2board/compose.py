"""Deterministic panel compositing.

Final panels are assembled, not generated: the spot reference is cover-fit to
the 1024x576 canvas, each selected character view is keyed off its white
background and pasted into its layout box (nearest-neighbor scaling keeps the
mock provenance stamps machine-readable), and a caption strip occupies the
bottom 12% of the frame.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from . import codec
from .backends import ImageAsset
from .errors import AssetMissing
from .storyboard import LayoutBoundary, ShotPlan, ViewSelection

log = logging.getLogger("script2board.compose")

PANEL_W, PANEL_H = 1024, 576
CAPTION_FRACTION = 0.12
KEY_LUMINANCE = 0.92
KEY_SATURATION = 0.08
FEATHER_PX = 2.0


def key_white_background(pixels: np.ndarray) -> np.ndarray:
    """Alpha-zero every near-white, unsaturated pixel, with a feathered edge.
    Returns a new RGBA array."""
    out = pixels.copy()
    rgb = pixels[:, :, :3].astype(np.float64) / 255.0
    lum = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    sat = np.where(mx > 0, (mx - mn) / np.maximum(mx, 1e-9), 0.0)
    keyed = (lum >= KEY_LUMINANCE) & (sat <= KEY_SATURATION)
    alpha = np.where(keyed, 0.0, pixels[:, :, 3].astype(np.float64) / 255.0)
    alpha = ndimage.gaussian_filter(alpha, sigma=FEATHER_PX / 2.0)
    # keep fully-keyed regions fully transparent and interiors fully opaque
    alpha[keyed & (alpha < 0.5)] = 0.0
    # provenance-stamp pixels must stay fully opaque: any partial blend would
    # perturb the encoded bytes by one or two levels
    alpha[codec.stamp_mask(pixels)] = 1.0
    out[:, :, 3] = np.clip(alpha * 255.0, 0, 255).astype(np.uint8)
    return out


def cover_fit(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Scale-to-cover then center-crop. Nearest-neighbor keeps mock palette
    colors exact."""
    h, w = pixels.shape[:2]
    scale = max(width / w, height / h)
    new_w, new_h = max(width, int(round(w * scale))), max(height, int(round(h * scale)))
    img = Image.fromarray(pixels, "RGBA").resize((new_w, new_h), Image.NEAREST)
    x0 = (new_w - width) // 2
    y0 = (new_h - height) // 2
    return np.asarray(img)[y0:y0 + height, x0:x0 + width].copy()


@dataclass
class PasteTransform:
    """Where a character view landed on the canvas; lets tests decode the
    provenance stamp straight out of the composited pixels."""
    element_id: str
    view_index: int
    origin: tuple[int, int]
    scale: float


@dataclass
class Panel:
    index: int
    segment_id: int | None
    plan: ShotPlan
    selections: list[ViewSelection]
    boundaries: list[LayoutBoundary]
    caption: str
    image: np.ndarray
    pastes: list[PasteTransform] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "index": self.index,
            "segment_id": self.segment_id,
            "scene_index": self.plan.scene_index,
            "shot_type": self.plan.shot_type,
            "camera_side": self.plan.camera_side,
            "subject_ids": self.plan.subject_ids,
            "selections": [{"character_id": s.character_id,
                            "view_index": s.view_index,
                            "score": round(s.score, 6)} for s in self.selections],
            "boundaries": [{"element_id": b.element_id, "box": list(b.box),
                            "z_order": b.z_order, "anchor": b.anchor}
                           for b in self.boundaries],
            "pastes": [{"element_id": p.element_id, "view_index": p.view_index,
                        "origin": list(p.origin), "scale": round(p.scale, 6)}
                       for p in self.pastes],
            "caption": self.caption,
        }


@dataclass
class Storyboard:
    panels: list[Panel]

    @property
    def panel_count(self) -> int:
        return len(self.panels)

    def to_records(self) -> list[dict]:
        return [p.to_record() for p in self.panels]


def _paste(canvas: np.ndarray, tile: np.ndarray, x0: int, y0: int) -> None:
    h, w = tile.shape[:2]
    x1, y1 = min(x0 + w, canvas.shape[1]), min(y0 + h, canvas.shape[0])
    cx0, cy0 = max(x0, 0), max(y0, 0)
    tx0, ty0 = cx0 - x0, cy0 - y0
    region = canvas[cy0:y1, cx0:x1].astype(np.float64)
    patch = tile[ty0:ty0 + (y1 - cy0), tx0:tx0 + (x1 - cx0)].astype(np.float64)
    a = (patch[:, :, 3:4] / 255.0)
    region[:, :, :3] = patch[:, :, :3] * a + region[:, :, :3] * (1.0 - a)
    region[:, :, 3] = np.maximum(region[:, :, 3], patch[:, :, 3])
    canvas[cy0:y1, cx0:x1] = np.clip(region, 0, 255).astype(np.uint8)


def _wrap_caption(draw, text: str, font, max_width: int) -> list[str]:
    words = text.split()
    lines, current = [], ""
    for word in words:
        trial = (current + " " + word).strip()
        if draw.textlength(trial, font=font) <= max_width or not current:
            current = trial
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    if len(lines) > 2:
        log.warning("caption overflow, ellipsizing: %r", text[:60])
        lines = lines[:2]
        lines[1] = lines[1][: max(0, len(lines[1]) - 1)] + "..."
    return lines


def compose_panel(index: int, plan: ShotPlan, selections: list[ViewSelection],
                  boundaries: list[LayoutBoundary], assets: dict,
                  caption: str) -> Panel:
    """Assemble one panel. `assets` maps element id to its ImageAsset for the
    background spot, and (character_id, view_index) to the view asset."""
    bg_key = plan.spot_id
    if bg_key not in assets:
        raise AssetMissing(f"spot asset {bg_key!r}")
    canvas = cover_fit(assets[bg_key].pixels, PANEL_W, PANEL_H)

    selected = {s.character_id: s for s in selections}
    pastes: list[PasteTransform] = []
    for bound in sorted(boundaries, key=lambda b: b.z_order):
        if bound.z_order == 0:
            continue
        sel = selected.get(bound.element_id)
        if sel is None:
            raise AssetMissing(f"no view selection for {bound.element_id!r}")
        view_key = (bound.element_id, sel.view_index)
        if view_key not in assets:
            raise AssetMissing(f"view asset {view_key!r}")
        view: ImageAsset = assets[view_key]
        keyed = key_white_background(view.pixels)

        x0 = int(round(bound.box[0] * PANEL_W))
        y0 = int(round(bound.box[1] * PANEL_H))
        bw = int(round((bound.box[2] - bound.box[0]) * PANEL_W))
        bh = int(round((bound.box[3] - bound.box[1]) * PANEL_H))
        scale = min(bw / view.width, bh / view.height)
        tw, th = max(1, int(round(view.width * scale))), \
            max(1, int(round(view.height * scale)))
        tile = np.asarray(Image.fromarray(keyed, "RGBA").resize(
            (tw, th), Image.NEAREST))
        # horizontally centered, bottom-aligned in the box
        px = x0 + (bw - tw) // 2
        py = y0 + (bh - th)
        _paste(canvas, tile, px, py)
        pastes.append(PasteTransform(element_id=bound.element_id,
                                     view_index=sel.view_index,
                                     origin=(px, py), scale=scale))

    _draw_caption(canvas, caption)
    return Panel(index=index, segment_id=plan.segment_id, plan=plan,
                 selections=selections, boundaries=boundaries,
                 caption=caption, image=canvas, pastes=pastes)


def _draw_caption(canvas: np.ndarray, caption: str) -> None:
    strip_h = int(round(PANEL_H * CAPTION_FRACTION))
    y0 = PANEL_H - strip_h
    canvas[y0:, :, :3] = 18
    canvas[y0:, :, 3] = 255
    img = Image.fromarray(canvas, "RGBA")
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    lines = _wrap_caption(draw, caption, font, PANEL_W - 24)
    ty = y0 + 6
    for line in lines:
        draw.text((12, ty), line, fill=(235, 235, 235, 255), font=font)
        ty += strip_h // 2 - 6
    canvas[:, :, :] = np.asarray(img)


def contact_sheet(panels: list[Panel], columns: int = 3) -> np.ndarray:
    rows = (len(panels) + columns - 1) // columns
    thumb_w, thumb_h = PANEL_W // 2, PANEL_H // 2
    gap = 8
    sheet = np.full((rows * (thumb_h + gap) + gap,
                     columns * (thumb_w + gap) + gap, 4), 255, dtype=np.uint8)
    for i, panel in enumerate(panels):
        r, c = divmod(i, columns)
        thumb = np.asarray(Image.fromarray(panel.image, "RGBA").resize(
            (thumb_w, thumb_h), Image.NEAREST))
        y = gap + r * (thumb_h + gap)
        x = gap + c * (thumb_w + gap)
        sheet[y:y + thumb_h, x:x + thumb_w] = thumb
    return sheet


def save_storyboard(board: Storyboard, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for panel in board.panels:
        Image.fromarray(panel.image, "RGBA").save(
            directory / f"panel_{panel.index:04d}.png")
    (directory / "storyboard.json").write_text(
        json.dumps(board.to_records(), ensure_ascii=False, indent=2,
                   sort_keys=True), encoding="utf-8")
    Image.fromarray(contact_sheet(board.panels), "RGBA").save(
        directory / "contact_sheet.png")
