"""Script director: model-backed element extraction for prose, coarse-to-fine
entity refinement, and the retrieval-indexed project database.

The chat backend must answer with one fenced JSON object; one repair retry is
attempted on malformed output before SchemaViolation. Reasoning text around
the JSON is kept out of the pipeline but logged for audit.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import SchemaViolation, UnattributableDialogue, UnknownSegment
from .script_ir import (
    PROFILE_FIELDS,
    CharacterRecord,
    DialogueSegment,
    RawScript,
    ScriptIR,
    SpotRecord,
    normalize_name,
)

log = logging.getLogger("script2board.director")

DEFAULT_ROUNDS = 2
DEFAULT_WINDOW = 6

PROMPT_SLOTS = {
    "I0_extract": {"script"},
    "I1_refine": {"entity_json", "source_excerpt"},
    "I2_view_select": {"segment", "candidates"},
    "I3_boundary": {"segment", "plan"},
    "I4_compose": {"segment", "layout"},
}
_PROMPT_FILES = {
    "I0_extract": "i0_extract.txt",
    "I1_refine": "i1_refine.txt",
    "I2_view_select": "i2_view_select.txt",
    "I3_boundary": "i3_boundary.txt",
    "I4_compose": "i4_compose.txt",
}
_SLOT_RE = re.compile(r"\{([a-z_]+)\}")

SYSTEM_PROMPT = ("You are a meticulous film-production assistant. Follow the "
                 "task instructions exactly and keep any JSON you output valid.")


@dataclass
class PromptTemplate:
    id: str
    template: str
    requires_cot: bool = False

    def __post_init__(self):
        if self.id not in PROMPT_SLOTS:
            raise ValueError(f"unknown template id {self.id!r}")
        found = set(_SLOT_RE.findall(self.template))
        expected = PROMPT_SLOTS[self.id]
        if found != expected:
            raise ValueError(
                f"{self.id}: placeholders {sorted(found)} != expected {sorted(expected)}")

    def fill(self, **slots) -> str:
        missing = PROMPT_SLOTS[self.id] - set(slots)
        if missing:
            raise ValueError(f"{self.id}: missing slots {sorted(missing)}")
        out = self.template
        for name, value in slots.items():
            out = out.replace("{" + name + "}", str(value))
        return out


def load_templates(directory=None) -> dict[str, PromptTemplate]:
    """Load prompt templates; defaults ship with the package."""
    out = {}
    for tid, fname in _PROMPT_FILES.items():
        if directory is not None:
            text = (directory / fname).read_text(encoding="utf-8")
        else:
            text = resources.files("script2board.prompts").joinpath(fname).read_text(
                encoding="utf-8")
        out[tid] = PromptTemplate(id=tid, template=text,
                                  requires_cot=tid in ("I0_extract", "I1_refine"))
    return out


# ---------------------------------------------------------------------------
# backend output handling

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def parse_fenced_json(reply: str):
    """Pull the final fenced JSON object out of a (possibly chatty) reply."""
    blocks = _FENCE_RE.findall(reply)
    candidates = blocks if blocks else [reply]
    last_err = None
    for cand in reversed(candidates):
        try:
            return json.loads(cand)
        except ValueError as err:
            last_err = err
    raise SchemaViolation(f"no parsable JSON in backend reply: {last_err}")


def _chat_json(backend, user_prompt: str):
    """One call plus one repair retry, then SchemaViolation."""
    reply = backend.chat_complete(SYSTEM_PROMPT, user_prompt)
    log.info("backend reply: %s", reply[:2000])
    try:
        return parse_fenced_json(reply)
    except SchemaViolation:
        repair = (user_prompt
                  + "\n\nYour previous reply was not valid JSON. "
                    "Reply again with exactly one fenced JSON object.")
        reply = backend.chat_complete(SYSTEM_PROMPT, repair)
        log.info("backend repair reply: %s", reply[:2000])
        return parse_fenced_json(reply)


# ---------------------------------------------------------------------------
# extraction

def extract_elements(script: RawScript, template: PromptTemplate, backend,
                     strict: bool = False) -> ScriptIR:
    """Realize element extraction. Screenplays are parsed deterministically and
    the backend may only add aliases/addressees/descriptions; prose goes to
    the backend wholesale and is validated before acceptance."""
    from .script_ir import parse_screenplay

    if not script.text.strip():
        raise ValueError("empty script")
    if script.source_kind == "screenplay":
        ir = parse_screenplay(script.text, strict=strict, pages=script.pages)
        payload = _chat_json(backend, template.fill(script=script.text))
        _reconcile_additions(ir, payload)
        ir.validate()
        return ir
    return _extract_prose(script, template, backend)


def _reconcile_additions(ir: ScriptIR, payload) -> None:
    if not isinstance(payload, dict):
        return
    by_slug = {normalize_name(c.name): c for c in ir.characters}
    for entry in payload.get("characters", []) or []:
        name = entry.get("name") if isinstance(entry, dict) else None
        if not name:
            continue
        try:
            slug = normalize_name(name)
        except Exception:
            continue
        rec = by_slug.get(slug)
        if rec is None:
            continue   # backend may not introduce entities the parser lacks
        for alias in entry.get("aliases", []) or []:
            if alias and alias not in rec.aliases:
                rec.aliases.append(alias)
        desc = entry.get("description") or ""
        if desc and not rec.coarse_description:
            rec.coarse_description = desc


def _extract_prose(script: RawScript, template: PromptTemplate, backend) -> ScriptIR:
    payload = _chat_json(backend, template.fill(script=script.text))
    if not isinstance(payload, dict):
        raise SchemaViolation("extraction payload is not an object")

    ir = ScriptIR(raw=script)
    char_by_slug: dict[str, CharacterRecord] = {}
    spot_by_slug: dict[str, SpotRecord] = {}

    for entry in payload.get("characters", []) or []:
        name = (entry or {}).get("name", "").strip()
        if not name:
            raise SchemaViolation("character without a name")
        slug = normalize_name(name)
        if slug in char_by_slug:
            continue
        rec = CharacterRecord(id=slug, name=name.title(),
                              aliases=list(entry.get("aliases", []) or [name]),
                              coarse_description=entry.get("description", "") or "")
        char_by_slug[slug] = rec
        ir.characters.append(rec)

    for entry in payload.get("spots", []) or []:
        name = (entry or {}).get("name", "").strip() or "Unknown"
        slug = normalize_name(name)
        if slug in spot_by_slug:
            continue
        rec = SpotRecord(id=slug, name=name.title(),
                         interior_exterior=entry.get("interior_exterior", "UNKNOWN"),
                         time_of_day=entry.get("time_of_day", "UNKNOWN"),
                         description=entry.get("description", "") or "")
        spot_by_slug[slug] = rec
        ir.spots.append(rec)
    if not ir.spots:
        rec = SpotRecord(id="unknown", name="Unknown")
        spot_by_slug["unknown"] = rec
        ir.spots.append(rec)

    for entry in payload.get("dialogues", []) or []:
        entry = entry or {}
        line = entry.get("line", "")
        speaker = entry.get("speaker", "").strip()
        if not line.strip():
            raise SchemaViolation("dialogue with empty line")
        if line not in script.text:
            raise SchemaViolation(f"line {line!r} is not a verbatim substring of the source")
        if not speaker:
            raise UnattributableDialogue(f"no speaker for line {line!r}")
        slug = normalize_name(speaker)
        if slug not in char_by_slug:
            raise UnattributableDialogue(
                f"speaker {speaker!r} not among extracted characters")
        spot_name = entry.get("spot") or "Unknown"
        spot_slug = normalize_name(spot_name)
        spot = spot_by_slug.get(spot_slug, ir.spots[0])
        addressees = []
        for a in entry.get("addressees", []) or []:
            a_slug = normalize_name(a)
            if a_slug in char_by_slug and a_slug != slug:
                addressees.append(a_slug)
        offset = script.text.find(line)
        ir.dialogues.append(DialogueSegment(
            id=len(ir.dialogues), speaker_id=slug, spot_id=spot.id, line=line,
            addressee_ids=addressees, page=script.page_of(offset), offset=offset))
    ir.validate()
    return ir


# ---------------------------------------------------------------------------
# refinement

# small grounding lexicons: a profile value found verbatim near a mention of
# the entity in the source text beats anything the backend proposes
_COLORS = r"(?:red|blue|green|black|white|gray|grey|golden|brown|yellow|purple|pink|silver)"
_GARMENTS = r"(?:dress|coat|suit|shirt|jacket|gown|uniform|scarf|sweater|cloak|hat)"
_GROUND_PATTERNS = {
    "clothing": re.compile(rf"\b{_COLORS}\s+{_GARMENTS}\b", re.IGNORECASE),
    "hair": re.compile(rf"\b(?:{_COLORS}\s+)?(?:long|short|curly|straight|wavy)?\s*"
                       rf"{_COLORS}?\s*hair\b", re.IGNORECASE),
    "age_band": re.compile(r"\b(?:young|old|elderly|teenage|middle-aged)\b", re.IGNORECASE),
    "build": re.compile(r"\b(?:tall|short|slender|stout|thin|broad-shouldered|stocky)\b",
                        re.IGNORECASE),
}


def _grounded_values(source: str, record) -> dict[str, str]:
    """Scan text windows around the entity's aliases for profile evidence."""
    surfaces = [record.name] + list(getattr(record, "aliases", []))
    windows = []
    low = source.lower()
    for s in surfaces:
        start = 0
        needle = s.lower()
        while True:
            i = low.find(needle, start)
            if i < 0:
                break
            windows.append(source[max(0, i - 120):i + len(needle) + 120])
            start = i + len(needle)
    found = {}
    for fname, pat in _GROUND_PATTERNS.items():
        for win in windows:
            m = pat.search(win)
            if m and m.group(0).strip():
                found[fname] = re.sub(r"\s+", " ", m.group(0).strip())
                break
    return found


def is_grounded(value: str, source: str) -> bool:
    return bool(value) and value.lower() in source.lower()


def refine_entities(ir: ScriptIR, targets: list[str], template: PromptTemplate,
                    backend, rounds: int = DEFAULT_ROUNDS) -> ScriptIR:
    """Coarse-to-fine enrichment. Backend output fills only empty fields;
    values grounded in the source win over any backend proposal."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    records = []
    for tid in targets:
        try:
            records.append(ir.character(tid))
        except KeyError:
            records.append(ir.spot(tid))   # raises KeyError if unknown anywhere

    source = ir.raw.text
    for _ in range(rounds):
        for rec in records:
            if isinstance(rec, CharacterRecord):
                _refine_character(rec, source, template, backend)
            else:
                _refine_spot(rec, source, template, backend)
            rec.refinement_round += 1
    ir.validate()
    return ir


def _record_json(rec) -> str:
    data = {"id": rec.id, "name": rec.name}
    if isinstance(rec, CharacterRecord):
        data["profile"] = rec.refined_profile
        data["description"] = rec.coarse_description
    else:
        data["description"] = rec.description
    return json.dumps(data, ensure_ascii=False)


def _refine_character(rec: CharacterRecord, source: str,
                      template: PromptTemplate, backend) -> None:
    grounded = _grounded_values(source, rec)
    for fname, value in grounded.items():
        current = rec.refined_profile.get(fname, "")
        if not current or not is_grounded(current, source):
            rec.refined_profile[fname] = value

    gaps = [f for f in PROFILE_FIELDS if not rec.refined_profile.get(f)]
    excerpt = source[:1500]
    payload = _chat_json(backend, template.fill(
        entity_json=_record_json(rec), source_excerpt=excerpt))
    if not isinstance(payload, dict):
        raise SchemaViolation("refinement payload is not an object")
    for fname in PROFILE_FIELDS:
        proposed = str(payload.get(fname, "") or "").strip()
        current = rec.refined_profile.get(fname, "")
        if current:
            if proposed and proposed != current and is_grounded(current, source):
                log.warning("contradiction on %s.%s: backend %r vs grounded %r; "
                            "grounded value kept", rec.id, fname, proposed, current)
            continue
        if not proposed:
            proposed = f"unremarkable {fname.replace('_', ' ')}"
        rec.refined_profile[fname] = proposed


def _refine_spot(rec: SpotRecord, source: str, template: PromptTemplate,
                 backend) -> None:
    if rec.description:
        return
    payload = _chat_json(backend, template.fill(
        entity_json=_record_json(rec), source_excerpt=source[:1500]))
    desc = str((payload or {}).get("description", "") or "").strip()
    rec.description = desc or f"{rec.name}, unadorned"


# ---------------------------------------------------------------------------
# element database + retrieval

_WORD_RE = re.compile(r"[\w']+")


def _tokens(text: str) -> list[str]:
    return [t.casefold() for t in _WORD_RE.findall(text)]


@dataclass
class ElementDatabase:
    characters: list[CharacterRecord]
    spots: list[SpotRecord]
    dialogues: list[DialogueSegment]
    alias_index: dict[str, str] = field(default_factory=dict)
    lexical_index: dict[str, list[str]] = field(default_factory=dict)

    def record(self, key: str):
        kind, _, rid = key.partition(":")
        pool = {"character": self.characters, "spot": self.spots}[kind]
        for rec in pool:
            if rec.id == rid:
                return rec
        raise KeyError(key)


@dataclass
class RetrievedContext:
    segment_id: int
    speaker: CharacterRecord
    addressees: list[CharacterRecord]
    spot: SpotRecord
    recent_segments: list[DialogueSegment]


def index_records(ir: ScriptIR) -> ElementDatabase:
    db = ElementDatabase(characters=list(ir.characters), spots=list(ir.spots),
                         dialogues=list(ir.dialogues))
    records = [("character", c, [c.name] + c.aliases,
                [c.coarse_description] + list(c.refined_profile.values()))
               for c in db.characters]
    records += [("spot", s, [s.name], [s.description]) for s in db.spots]

    for kind, rec, surfaces, texts in records:
        key = f"{kind}:{rec.id}"
        for surface in surfaces:
            if not surface or not surface.strip():
                continue
            slug = normalize_name(surface)
            if slug in db.alias_index and db.alias_index[slug] != key:
                log.warning("duplicate alias %r: %s keeps it, %s ignored",
                            slug, db.alias_index[slug], key)
                continue
            db.alias_index[slug] = key
        for text in surfaces + texts:
            for tok in _tokens(text or ""):
                bucket = db.lexical_index.setdefault(tok, [])
                if key not in bucket:
                    bucket.append(key)
    for d in db.dialogues:
        key = f"dialogue:{d.id}"
        for tok in _tokens(d.line):
            bucket = db.lexical_index.setdefault(tok, [])
            if key not in bucket:
                bucket.append(key)
    return db


def lookup(db: ElementDatabase, query: str) -> list[str]:
    """Rank character/spot records for a free-text query: exact alias match
    beats token overlap beats declaration order. Deterministic total order."""
    try:
        slug = normalize_name(query)
    except Exception:
        slug = ""
    exact = db.alias_index.get(slug)
    q_tokens = set(_tokens(query))
    keys = [f"character:{c.id}" for c in db.characters] + \
           [f"spot:{s.id}" for s in db.spots]
    scored = []
    for ordinal, key in enumerate(keys):
        overlap = sum(1 for t in q_tokens if key in db.lexical_index.get(t, []))
        tier = 2 if key == exact else (1 if overlap else 0)
        scored.append((-tier, -overlap, ordinal, key))
    scored.sort()
    return [key for _, _, _, key in scored]


def retrieve_context(db: ElementDatabase, segment_id: int,
                     w: int = DEFAULT_WINDOW) -> RetrievedContext:
    if w < 0:
        raise ValueError("window must be >= 0")
    seg = next((d for d in db.dialogues if d.id == segment_id), None)
    if seg is None:
        raise UnknownSegment(f"no segment with id {segment_id}")
    speaker = db.record(f"character:{seg.speaker_id}")
    spot = db.record(f"spot:{seg.spot_id}")
    addressees = [db.record(f"character:{a}") for a in seg.addressee_ids
                  if a != seg.speaker_id]

    # prior segments within the same contiguous spot run
    ordered = sorted(db.dialogues, key=lambda d: (d.page, d.id))
    pos = ordered.index(seg)
    recent = []
    for prior in reversed(ordered[:pos]):
        if prior.spot_id != seg.spot_id:
            break
        recent.append(prior)
        if len(recent) == w:
            break
    recent.reverse()
    return RetrievedContext(segment_id=segment_id, speaker=speaker,
                            addressees=addressees, spot=spot,
                            recent_segments=recent)


# ---------------------------------------------------------------------------
# persistence

def save_database(db: ElementDatabase, directory) -> None:
    from dataclasses import asdict
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "characters.json").write_text(
        json.dumps([asdict(c) for c in db.characters], ensure_ascii=False,
                   indent=2, sort_keys=True), encoding="utf-8")
    (directory / "spots.json").write_text(
        json.dumps([asdict(s) for s in db.spots], ensure_ascii=False,
                   indent=2, sort_keys=True), encoding="utf-8")
    (directory / "dialogues.json").write_text(
        json.dumps([asdict(d) for d in db.dialogues], ensure_ascii=False,
                   indent=2, sort_keys=True), encoding="utf-8")
