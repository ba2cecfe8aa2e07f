"""Storyboard planning: shot grammar, viewpoint selection, and layout
boundaries under the 180-degree rule.

Scene = maximal run of consecutive segments in one spot (ScriptIR.scene_runs).
Every scene opens with an establishing panel, so the panel count is always
K + number of scenes.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .backends import MULTIVIEW_COUNT
from .director import ElementDatabase, PromptTemplate, SYSTEM_PROMPT
from .errors import InfeasibleLayout, MissingViewSet
from .script_ir import DialogueSegment, ScriptIR

log = logging.getLogger("script2board.storyboard")

SHOT_TYPES = ("establishing", "single_medium", "single_closeup",
              "over_shoulder", "two_shot")
THIRDS = {"thirds_left": 1.0 / 3.0, "thirds_right": 2.0 / 3.0, "center": 0.5}


@dataclass
class ShotPlan:
    segment_id: int | None            # None for establishing panels
    shot_type: str
    camera_side: str                  # left_of_axis | right_of_axis
    subject_ids: list[str] = field(default_factory=list)
    spot_id: str = ""
    scene_index: int = 0
    # scene-stable normalized screen station per character; pairwise screen
    # ordering in every panel follows station order, which is what keeps the
    # 180-degree rule intact for any number of participants
    axis_stations: dict[str, float] = field(default_factory=dict)

    def side_of(self, cid: str) -> str:
        st = self.axis_stations.get(cid, 0.5)
        if st < 0.5 - 1e-9:
            return "left"
        if st > 0.5 + 1e-9:
            return "right"
        return "center"

    def __post_init__(self):
        if self.shot_type not in SHOT_TYPES:
            raise ValueError(f"unknown shot type {self.shot_type!r}")
        if self.shot_type == "over_shoulder" and len(self.subject_ids) < 2:
            raise ValueError("over_shoulder requires >= 2 subjects")


@dataclass
class ViewSelection:
    segment_id: int | None
    character_id: str
    view_index: int
    score: float

    def __post_init__(self):
        if not 0 <= self.view_index < MULTIVIEW_COUNT:
            raise ValueError(f"view_index {self.view_index} outside [0,7]")


@dataclass
class LayoutBoundary:
    segment_id: int | None
    element_id: str
    box: tuple[float, float, float, float]   # x0, y0, x1, y1 normalized
    z_order: int
    anchor: str = "center"

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValueError(f"degenerate box {self.box}")

    @property
    def center_x(self) -> float:
        return (self.box[0] + self.box[2]) / 2.0


def box_iou(a: tuple, b: tuple) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area = lambda r: (r[2] - r[0]) * (r[3] - r[1])
    return inter / (area(a) + area(b) - inter)


# ---------------------------------------------------------------------------
# shot planning

def _scene_stations(run: list[DialogueSegment], camera_side: str) -> dict[str, float]:
    """Stable screen station per character for a scene, by order of first
    involvement; mirrored when the camera sits right of the axis. A lone
    participant stands at center."""
    order: list[str] = []
    for seg in run:
        for cid in [seg.speaker_id] + seg.addressee_ids:
            if cid not in order:
                order.append(cid)
    n = len(order)
    if n == 1:
        return {order[0]: 0.5}
    stations = {}
    for i, cid in enumerate(order):
        st = (i + 1) / (n + 1)
        if camera_side == "right_of_axis":
            st = 1.0 - st
        stations[cid] = st
    return stations


def plan_shot_sequence(ir: ScriptIR, db: ElementDatabase,
                       camera_side: str = "left_of_axis") -> list[ShotPlan]:
    """Establishing shot per scene; alternating over-the-shoulder coverage for
    two-party exchanges with close-up escalation on a third consecutive
    segment by one speaker; group framing at >= 3 simultaneous subjects."""
    plans: list[ShotPlan] = []
    for scene_index, run in enumerate(ir.scene_runs()):
        stations = _scene_stations(run, camera_side)
        participants = list(stations)
        plans.append(ShotPlan(segment_id=None, shot_type="establishing",
                              camera_side=camera_side, subject_ids=[],
                              spot_id=run[0].spot_id, scene_index=scene_index,
                              axis_stations=stations))
        consecutive = 0
        prev_speaker = None
        for seg in run:
            consecutive = consecutive + 1 if seg.speaker_id == prev_speaker else 1
            prev_speaker = seg.speaker_id
            subjects = [seg.speaker_id] + [a for a in seg.addressee_ids
                                           if a != seg.speaker_id]
            if len(subjects) == 1 and len(participants) == 2:
                # opening line of a two-party exchange has no recorded
                # addressee yet; the other participant is the implied listener
                subjects += [c for c in participants if c != seg.speaker_id]
            if len(subjects) >= 3:
                shot = "two_shot"
            elif len(participants) == 1 or len(subjects) == 1:
                shot = "single_closeup" if consecutive >= 3 else "single_medium"
            elif consecutive >= 3:
                shot = "single_closeup"
                subjects = subjects[:1]
            else:
                shot = "over_shoulder"
            plans.append(ShotPlan(segment_id=seg.id, shot_type=shot,
                                  camera_side=camera_side,
                                  subject_ids=subjects, spot_id=seg.spot_id,
                                  scene_index=scene_index,
                                  axis_stations=stations))
    return plans


# ---------------------------------------------------------------------------
# viewpoint selection

def _desired_azimuth(side: str, facing_camera: bool) -> float:
    """Three-quarter facing on the subject's side of the axis. A subject on
    screen-right turning toward camera faces azimuth 315 (view 7); away, 225
    (view 5); mirrored on screen-left (views 1 and 3)."""
    if side == "center":
        return 0.0
    if side == "left":
        return 45.0 if facing_camera else 135.0
    return 315.0 if facing_camera else 225.0


def _angular_distance(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def geometric_view_ranking(side: str, facing_camera: bool) -> list[tuple[int, float]]:
    """All 8 views ranked by angular distance to the desired facing; ties go
    to the lowest view index."""
    desired = _desired_azimuth(side, facing_camera)
    scored = [(x, _angular_distance(45.0 * x, desired))
              for x in range(MULTIVIEW_COUNT)]
    scored.sort(key=lambda t: (t[1], t[0]))
    return scored


def select_viewpoint(plan: ShotPlan, context, view_sets: dict,
                     template: PromptTemplate | None = None,
                     backend=None) -> list[ViewSelection]:
    """Per-subject view choice: the geometric scorer decides, the backend may
    re-rank only among the geometric top 3."""
    selections = []
    for rank, cid in enumerate(plan.subject_ids):
        if cid not in view_sets:
            raise MissingViewSet(cid)
        if plan.shot_type == "over_shoulder":
            featured, foreground = plan.subject_ids[0], plan.subject_ids[1]
            own = plan.axis_stations.get(cid, 0.5)
            other = plan.axis_stations.get(
                foreground if cid == featured else featured, 0.5)
            side = "left" if own < other else "right"
            facing_camera = cid == featured    # featured speaker faces camera
        else:
            side = plan.side_of(cid)
            facing_camera = True
        ranking = geometric_view_ranking(side, facing_camera)
        top3 = [x for x, _ in ranking[:3]]
        choice = top3[0]
        if backend is not None and template is not None:
            reply = backend.chat_complete(SYSTEM_PROMPT, template.fill(
                segment=json.dumps({"segment_id": plan.segment_id,
                                    "character": cid,
                                    "shot_type": plan.shot_type}),
                candidates=" ".join(str(x) for x in top3)))
            m = re.search(r"\d+", reply)
            if m and int(m.group(0)) in top3:
                choice = int(m.group(0))
        dist = dict(ranking)[choice]
        selections.append(ViewSelection(segment_id=plan.segment_id,
                                        character_id=cid, view_index=choice,
                                        score=1.0 - dist / 180.0))
    return selections


# ---------------------------------------------------------------------------
# layout boundaries

def _anchor_for(side: str) -> str:
    return {"left": "thirds_left", "right": "thirds_right",
            "center": "center"}[side]


def _centered_box(cx: float, cy: float, w: float, h: float):
    x0 = min(max(cx - w / 2.0, 0.0), 1.0 - w)
    y0 = min(max(cy - h / 2.0, 0.0), 1.0 - h)
    return (x0, y0, x0 + w, y0 + h)


def assign_boundaries(plan: ShotPlan, selections: list[ViewSelection],
                      template: PromptTemplate | None = None,
                      backend=None) -> list[LayoutBoundary]:
    """Rule-of-thirds layout under the scene's fixed axis sides. Background is
    always full-frame at the lowest z."""
    bounds = [LayoutBoundary(segment_id=plan.segment_id,
                             element_id=plan.spot_id, box=(0.0, 0.0, 1.0, 1.0),
                             z_order=0, anchor="center")]
    subjects = plan.subject_ids
    if plan.shot_type == "establishing" or not subjects:
        return bounds
    if len(subjects) > 4:
        raise InfeasibleLayout(f"{len(subjects)} subjects in one panel")

    if plan.shot_type == "over_shoulder":
        featured, foreground = subjects[0], subjects[1]
        f_st = plan.axis_stations.get(featured, 0.4)
        g_st = plan.axis_stations.get(foreground, 0.6)
        f_side = "left" if f_st < g_st else "right"
        f_anchor = _anchor_for(f_side)
        bounds.append(LayoutBoundary(
            segment_id=plan.segment_id, element_id=featured,
            box=_centered_box(THIRDS[f_anchor], 0.57, 0.28, 0.72),
            z_order=1, anchor=f_anchor))
        # near-third foreground shoulder, cropped at the bottom edge
        if f_side == "right":
            gbox = (0.0, 0.14, 0.36, 1.0)
            g_anchor = "thirds_left"
        else:
            gbox = (0.64, 0.14, 1.0, 1.0)
            g_anchor = "thirds_right"
        bounds.append(LayoutBoundary(segment_id=plan.segment_id,
                                     element_id=foreground, box=gbox,
                                     z_order=2, anchor=g_anchor))
    elif plan.shot_type in ("single_closeup", "single_medium"):
        cid = subjects[0]
        anchor = _anchor_for(plan.side_of(cid))
        if plan.shot_type == "single_closeup":
            box = _centered_box(THIRDS[anchor], 1.0 / 3.0, 0.30, 0.66)
        else:
            box = _centered_box(THIRDS[anchor], 0.52, 0.26, 0.70)
        bounds.append(LayoutBoundary(segment_id=plan.segment_id,
                                     element_id=cid, box=box,
                                     z_order=1, anchor=anchor))
    else:  # two_shot / group framing
        ordered = sorted(subjects,
                         key=lambda c: (plan.axis_stations.get(c, 0.5),
                                        subjects.index(c)))
        n = len(ordered)
        for i, cid in enumerate(ordered):
            cx = (i + 1) / (n + 1)
            anchor = _anchor_for(plan.side_of(cid))
            bounds.append(LayoutBoundary(
                segment_id=plan.segment_id, element_id=cid,
                box=_centered_box(cx, 0.55, min(0.22, 0.9 / n), 0.66),
                z_order=1 + i, anchor=anchor))

    # character boxes may only overlap heavily in over-the-shoulder framing
    chars = bounds[1:]
    for i in range(len(chars)):
        for j in range(i + 1, len(chars)):
            if box_iou(chars[i].box, chars[j].box) >= 0.5 and \
                    plan.shot_type != "over_shoulder":
                raise InfeasibleLayout("character boxes overlap beyond IoU 0.5")

    if backend is not None and template is not None:
        reply = backend.chat_complete(SYSTEM_PROMPT, template.fill(
            segment=json.dumps({"segment_id": plan.segment_id}),
            plan=json.dumps([{"element": b.element_id, "box": b.box}
                             for b in bounds])))
        if reply.strip() != "ACCEPT":
            log.info("boundary review note for segment %s: %s",
                     plan.segment_id, reply[:200])
    return bounds


# ---------------------------------------------------------------------------
# axis-of-action audit

def check_axis_of_action(panels: list[dict]) -> dict:
    """Independent read-only audit: for every scene and every pair of
    co-present characters, the left/right screen ordering must not flip.

    `panels` is the storyboard.json panel list (dicts with scene_index and
    boundaries). Returns {"violations": [...], "checked_pairs": n}.
    """
    scenes: dict[int, list[dict]] = {}
    for panel in panels:
        scenes.setdefault(panel["scene_index"], []).append(panel)

    violations = []
    checked = set()
    for scene_index, scene_panels in sorted(scenes.items()):
        seen: dict[tuple[str, str], tuple[float, int]] = {}
        for panel in scene_panels:
            centers = {}
            for b in panel["boundaries"]:
                if b["z_order"] == 0:
                    continue
                centers[b["element_id"]] = (b["box"][0] + b["box"][2]) / 2.0
            ids = sorted(centers)
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    a, b_ = ids[i], ids[j]
                    delta = centers[a] - centers[b_]
                    if abs(delta) < 1e-9:
                        continue
                    sign = 1.0 if delta > 0 else -1.0
                    checked.add((scene_index, a, b_))
                    if (a, b_) in seen and seen[(a, b_)][0] != sign:
                        violations.append({
                            "scene_index": scene_index,
                            "pair": [a, b_],
                            "panel_index": panel["index"],
                            "first_panel_index": seen[(a, b_)][1],
                        })
                    else:
                        seen.setdefault((a, b_), (sign, panel["index"]))
    return {"violations": violations, "checked_pairs": len(checked)}
