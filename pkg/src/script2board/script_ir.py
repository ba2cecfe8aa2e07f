"""Structured intermediate representation of a script, and the deterministic
screenplay front-end that produces it.

The line grammar is Fountain-inspired but intentionally small:

    scene heading   INT./EXT. <NAME> - <TIME>
    cue             an ALL-CAPS line naming the next speaker
    parenthetical   ( ... ) immediately after a cue
    dialogue        non-blank lines following a cue
    action          anything else (appended to the current spot description)

Prose input is not handled here; it goes whole to the director's model-backed
extraction.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field, asdict

from .errors import (
    DialogueBeforeScene,
    EmptyAfterNormalization,
    UnparsableLine,
)

PROFILE_FIELDS = ("age_band", "hair", "clothing", "build", "distinguishing_features")


# ---------------------------------------------------------------------------
# types

@dataclass
class RawScript:
    text: str
    source_kind: str = "screenplay"          # "screenplay" | "prose"
    pages: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not self.pages:
            raise ValueError("RawScript needs at least one page offset")
        if self.pages[0] != 0:
            raise ValueError("first page offset must be 0")
        for a, b in zip(self.pages, self.pages[1:]):
            if b <= a:
                raise ValueError("page offsets must be strictly increasing")
        if self.pages[-1] > len(self.text):
            raise ValueError("page offset beyond end of text")

    def page_of(self, offset: int) -> int:
        page = 0
        for i, start in enumerate(self.pages):
            if offset >= start:
                page = i
        return page

    def page_slices(self) -> list[str]:
        bounds = list(self.pages) + [len(self.text)]
        return [self.text[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass
class CharacterRecord:
    id: str
    name: str
    aliases: list[str] = field(default_factory=list)
    coarse_description: str = ""
    refined_profile: dict[str, str] = field(
        default_factory=lambda: {k: "" for k in PROFILE_FIELDS}
    )
    refinement_round: int = 0


@dataclass
class SpotRecord:
    id: str
    name: str
    interior_exterior: str = "UNKNOWN"       # INT | EXT | UNKNOWN
    time_of_day: str = "UNKNOWN"             # DAY | NIGHT | UNKNOWN
    description: str = ""
    refinement_round: int = 0


@dataclass
class DialogueSegment:
    id: int
    speaker_id: str
    spot_id: str
    line: str
    addressee_ids: list[str] = field(default_factory=list)
    parenthetical: str | None = None
    page: int = 0
    # character offset of the line within RawScript.text; -1 when unknown
    offset: int = -1


@dataclass
class ScriptIR:
    raw: RawScript
    characters: list[CharacterRecord] = field(default_factory=list)
    spots: list[SpotRecord] = field(default_factory=list)
    dialogues: list[DialogueSegment] = field(default_factory=list)

    # -- lookups ----------------------------------------------------------
    def character(self, cid: str) -> CharacterRecord:
        for c in self.characters:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def spot(self, sid: str) -> SpotRecord:
        for s in self.spots:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def validate(self) -> None:
        char_ids = [c.id for c in self.characters]
        spot_ids = [s.id for s in self.spots]
        if len(set(char_ids)) != len(char_ids):
            raise ValueError("duplicate character ids")
        if len(set(spot_ids)) != len(spot_ids):
            raise ValueError("duplicate spot ids")
        names = [normalize_name(c.name) for c in self.characters]
        if len(set(names)) != len(names):
            raise ValueError("two characters share a normalized name")
        for d in self.dialogues:
            if d.speaker_id not in char_ids:
                raise ValueError(f"segment {d.id}: unknown speaker {d.speaker_id!r}")
            if d.spot_id not in spot_ids:
                raise ValueError(f"segment {d.id}: unknown spot {d.spot_id!r}")
            for a in d.addressee_ids:
                if a not in char_ids:
                    raise ValueError(f"segment {d.id}: unknown addressee {a!r}")
            if not d.line.strip():
                raise ValueError(f"segment {d.id}: empty line")

    def scene_runs(self) -> list[list[DialogueSegment]]:
        """Maximal runs of consecutive segments sharing a spot.

        This is the pipeline's working definition of a scene; the panel-count
        law (K' = K + number of scenes) is stated against it.
        """
        runs: list[list[DialogueSegment]] = []
        for d in self.dialogues:
            if runs and runs[-1][-1].spot_id == d.spot_id:
                runs[-1].append(d)
            else:
                runs.append([d])
        return runs

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "raw": asdict(self.raw),
            "characters": [asdict(c) for c in self.characters],
            "spots": [asdict(s) for s in self.spots],
            "dialogues": [asdict(d) for d in self.dialogues],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptIR":
        raw = RawScript(**data["raw"])
        chars = [CharacterRecord(**c) for c in data["characters"]]
        spots = [SpotRecord(**s) for s in data["spots"]]
        dialogues = [DialogueSegment(**d) for d in data["dialogues"]]
        ir = cls(raw=raw, characters=chars, spots=spots, dialogues=dialogues)
        ir.validate()
        return ir

    @classmethod
    def from_json(cls, text: str) -> "ScriptIR":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# name normalization

def normalize_name(surface: str) -> str:
    """Case-folded, accent-stripped, punctuation-free slug. Idempotent."""
    if not surface or not surface.strip():
        raise EmptyAfterNormalization("empty surface form")
    s = unicodedata.normalize("NFKD", surface)
    s = "".join(ch for ch in s if not unicodedata.combining(ch))
    s = s.casefold()
    s = re.sub(r"[^\w\s-]", "", s)
    s = re.sub(r"[\s_]+", "-", s.strip())
    s = re.sub(r"-{2,}", "-", s).strip("-")
    if not s:
        raise EmptyAfterNormalization(f"{surface!r} normalizes to nothing")
    return s


# ---------------------------------------------------------------------------
# screenplay grammar

SCENE_RE = re.compile(
    r"^\s*(INT\./EXT\.|INT/EXT\.?|I/E\.?|INT\.?|EXT\.?)\s+(.+?)"
    r"(?:\s*-\s*([A-Z ]+?))?\s*$"
)
PAREN_RE = re.compile(r"^\s*\((.*)\)\s*$")
# cue extension like (V.O.) or (CONT'D) is dropped
CUE_EXT_RE = re.compile(r"\s*\([^)]*\)\s*$")

_TIME_WORDS = {"DAY": "DAY", "NIGHT": "NIGHT", "MORNING": "DAY", "EVENING": "NIGHT",
               "AFTERNOON": "DAY", "DAWN": "DAY", "DUSK": "NIGHT", "LATER": "UNKNOWN",
               "CONTINUOUS": "UNKNOWN"}


def _classify_scene(line: str):
    m = SCENE_RE.match(line)
    if not m:
        return None
    prefix, name, time_part = m.group(1), m.group(2), m.group(3)
    prefix = prefix.rstrip(".")
    if prefix in ("INT/EXT", "I/E", "INT./EXT"):
        ie = "INT"
    elif prefix == "INT":
        ie = "INT"
    elif prefix == "EXT":
        ie = "EXT"
    else:
        return None
    tod = "UNKNOWN"
    if time_part:
        tod = _TIME_WORDS.get(time_part.strip().upper(), "UNKNOWN")
    return name.strip(), ie, tod


def _is_cue(line: str) -> bool:
    s = line.strip()
    if not s or len(s) > 40:
        return False
    if SCENE_RE.match(s) and _classify_scene(s):
        return False
    core = CUE_EXT_RE.sub("", s)
    if not core or not any(ch.isalpha() for ch in core):
        return False
    return core == core.upper()


def parse_screenplay(text: str, strict: bool = False,
                     pages: list[int] | None = None) -> ScriptIR:
    """Deterministically parse screenplay-formatted text into a ScriptIR.

    In lenient mode (default) unclassifiable lines become action text; with
    strict=True they raise UnparsableLine, and a cue appearing before any
    scene heading raises DialogueBeforeScene.
    """
    if not text:
        raise ValueError("empty script text")
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    raw = RawScript(text=text, source_kind="screenplay",
                    pages=pages if pages else [0])

    ir = ScriptIR(raw=raw)
    char_by_slug: dict[str, CharacterRecord] = {}
    spot_by_slug: dict[str, SpotRecord] = {}

    current_spot: SpotRecord | None = None
    # (character, parenthetical, line offset) of an open cue awaiting dialogue
    pending_cue = None
    dialogue_buf: list[str] = []
    prev_speaker: str | None = None
    prev_distinct: str | None = None   # last speaker differing from the current one

    def flush_segment():
        nonlocal pending_cue, dialogue_buf, prev_speaker, prev_distinct
        if pending_cue is None:
            return
        speaker, paren, cue_offset, cue_line_no, cue_raw = pending_cue
        if not dialogue_buf:
            # cue with no dialogue: demote to action in lenient mode
            if strict:
                raise UnparsableLine(cue_line_no, cue_raw)
            if current_spot is not None:
                _append_action(current_spot, cue_raw.strip())
            pending_cue = None
            return
        line_text = " ".join(s.strip() for s in dialogue_buf).strip()
        if prev_speaker and prev_speaker != speaker.id:
            prev_distinct = prev_speaker
        addressees = [prev_distinct] if prev_distinct else []
        seg = DialogueSegment(
            id=len(ir.dialogues),
            speaker_id=speaker.id,
            spot_id=current_spot.id,
            line=line_text,
            addressee_ids=addressees,
            parenthetical=paren,
            page=raw.page_of(cue_offset),
            offset=cue_offset,
        )
        ir.dialogues.append(seg)
        prev_speaker = speaker.id
        pending_cue = None
        dialogue_buf = []

    offset = 0
    for line_no, rawline in enumerate(text.split("\n"), start=1):
        line_offset = offset
        offset += len(rawline) + 1
        stripped = rawline.strip()

        if not stripped:
            flush_segment()
            continue

        scene = _classify_scene(stripped) if stripped == stripped.upper() else None
        if scene and not _is_cue(stripped):
            flush_segment()
            name, ie, tod = scene
            slug = normalize_name(name)
            spot = spot_by_slug.get(slug)
            if spot is None:
                spot = SpotRecord(id=slug, name=name.title(),
                                  interior_exterior=ie, time_of_day=tod)
                spot_by_slug[slug] = spot
                ir.spots.append(spot)
            current_spot = spot
            prev_speaker = None
            prev_distinct = None
            continue

        if pending_cue is not None and not dialogue_buf:
            m = PAREN_RE.match(stripped)
            if m:
                speaker, paren, off, ln, cr = pending_cue
                extra = m.group(1).strip()
                paren = extra if paren is None else f"{paren}; {extra}"
                pending_cue = (speaker, paren, off, ln, cr)
                continue

        if _is_cue(stripped):
            flush_segment()
            if current_spot is None:
                if strict:
                    raise DialogueBeforeScene(line_no, stripped)
                spot = spot_by_slug.get("unknown")
                if spot is None:
                    spot = SpotRecord(id="unknown", name="Unknown")
                    spot_by_slug["unknown"] = spot
                    ir.spots.append(spot)
                current_spot = spot
            surface = CUE_EXT_RE.sub("", stripped)
            slug = normalize_name(surface)
            char = char_by_slug.get(slug)
            if char is None:
                char = CharacterRecord(id=slug, name=surface.title(),
                                       aliases=[surface])
                char_by_slug[slug] = char
                ir.characters.append(char)
            elif surface not in char.aliases:
                char.aliases.append(surface)
            pending_cue = (char, None, line_offset, line_no, rawline)
            continue

        if pending_cue is not None:
            dialogue_buf.append(stripped)
            continue

        # action line; a line with no word characters at all is not plausible
        # prose, so strict mode refuses to classify it
        if strict and not re.search(r"\w", stripped):
            raise UnparsableLine(line_no, rawline)
        if current_spot is None:
            if strict:
                raise UnparsableLine(line_no, rawline)
            continue  # leading notes before the first heading are dropped
        _append_action(current_spot, stripped)

    flush_segment()
    ir.validate()
    return ir


def _append_action(spot: SpotRecord, text: str) -> None:
    spot.description = (spot.description + " " + text).strip()


# ---------------------------------------------------------------------------
# paging

def count_cues(text: str) -> int:
    return sum(1 for ln in text.split("\n") if _is_cue(ln))


def segment_pages(text: str, max_segments_per_page: int,
                  source_kind: str = "screenplay") -> RawScript:
    """Split a script at blank-line gaps so no page holds more than
    max_segments_per_page dialogue cues. Page slices concatenate back to
    the original text exactly.
    """
    if max_segments_per_page < 1:
        raise ValueError("max_segments_per_page must be >= 1")
    text = text.replace("\r\n", "\n").replace("\r", "\n")

    # candidate boundaries: start of text plus the position after every
    # blank-line gap, so pages only ever break at gaps
    boundaries = [0]
    for m in re.finditer(r"\n\s*\n", text):
        boundaries.append(m.end())
    boundaries = sorted(set(b for b in boundaries if b < len(text)))

    pages = [0]
    cues_on_page = 0
    for b in boundaries:
        nxt = next((x for x in boundaries if x > b), len(text))
        block = text[b:nxt]
        block_cues = count_cues(block)
        if cues_on_page and cues_on_page + block_cues > max_segments_per_page:
            pages.append(b)
            cues_on_page = block_cues
        else:
            cues_on_page += block_cues
    return RawScript(text=text, source_kind=source_kind, pages=pages)
