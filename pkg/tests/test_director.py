"""Element extraction, refinement grounding, and the retrieval index."""

import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from script2board.backends import make_backends, mock_backend_configs
from script2board.director import (
    PROMPT_SLOTS,
    PromptTemplate,
    extract_elements,
    index_records,
    is_grounded,
    load_templates,
    lookup,
    parse_fenced_json,
    refine_entities,
    retrieve_context,
)
from script2board.errors import UnattributableDialogue, UnknownSegment
from script2board.script_ir import (
    PROFILE_FIELDS,
    RawScript,
    parse_screenplay,
)

from conftest import DATA

SHEEP = ('"Please draw me a sheep," said the little prince. '
         "The desert stretched to every horizon.")

RED_DRESS = """INT. BALLROOM - NIGHT

Celine wears a red dress and silver earrings. Jesse waits by the stair.

CELINE
You came after all.

JESSE
I said I would.
"""


@pytest.fixture(scope="module")
def templates():
    return load_templates()


@pytest.fixture()
def chat():
    return make_backends(mock_backend_configs(seed=7)).chat


# ---------------------------------------------------------------------------
# prompt templates

def test_templates_cover_all_ids(templates):
    assert set(templates) == set(PROMPT_SLOTS)


def test_template_slot_validation():
    with pytest.raises(ValueError):
        PromptTemplate(id="I0_extract", template="no slots here",
                       requires_cot=True)


def test_template_fill_leaves_json_braces(templates):
    filled = templates["I1_refine"].fill(entity_json="{}", source_excerpt="x")
    assert "{entity_json}" not in filled
    assert "{source_excerpt}" not in filled
    assert "<<<ENTITY\n{}\nENTITY>>>" in filled


def test_parse_fenced_json_takes_last_block():
    reply = 'thinking...\n```json\n{"a": 1}\n```\nmore\n```json\n{"a": 2}\n```'
    assert parse_fenced_json(reply) == {"a": 2}


# ---------------------------------------------------------------------------
# extraction

def test_screenplay_extraction_matches_parser(templates, chat):
    raw = RawScript(text=RED_DRESS, source_kind="screenplay", pages=[0])
    ir = extract_elements(raw, templates["I0_extract"], chat)
    plain = parse_screenplay(RED_DRESS)
    assert [c.id for c in ir.characters] == [c.id for c in plain.characters]
    assert [s.id for s in ir.spots] == [s.id for s in plain.spots]
    assert [d.line for d in ir.dialogues] == [d.line for d in plain.dialogues]


def test_prose_extraction_sheep_oracle(templates, chat):
    raw = RawScript(text=SHEEP, source_kind="prose", pages=[0])
    ir = extract_elements(raw, templates["I0_extract"], chat)
    assert [c.id for c in ir.characters] == ["little-prince"]
    assert len(ir.dialogues) == 1
    seg = ir.dialogues[0]
    assert seg.speaker_id == "little-prince"
    assert seg.line == "Please draw me a sheep,"
    assert seg.line in SHEEP


def test_prose_without_quotes_yields_no_segments(templates, chat):
    raw = RawScript(text="The desert stretched on. Nothing moved.",
                    source_kind="prose", pages=[0])
    ir = extract_elements(raw, templates["I0_extract"], chat)
    assert ir.dialogues == []
    assert "desert" in ir.spots[0].description


def test_prose_unattributable_quote(templates, chat):
    raw = RawScript(text='"Who goes there?" The wind gave no answer.',
                    source_kind="prose", pages=[0])
    with pytest.raises(UnattributableDialogue):
        extract_elements(raw, templates["I0_extract"], chat)


def test_extraction_lines_are_verbatim(templates, chat, corpus_text):
    raw = RawScript(text=corpus_text, source_kind="screenplay", pages=[0])
    ir = extract_elements(raw, templates["I0_extract"], chat)
    for d in ir.dialogues:
        assert d.line in corpus_text


# ---------------------------------------------------------------------------
# refinement

def test_refine_populates_all_fields(templates, chat):
    ir = parse_screenplay(RED_DRESS)
    refine_entities(ir, ["celine"], templates["I1_refine"], chat, rounds=1)
    celine = ir.character("celine")
    assert celine.refinement_round == 1
    for f in PROFILE_FIELDS:
        assert celine.refined_profile.get(f)


def test_refine_grounds_red_dress(templates, chat):
    ir = parse_screenplay(RED_DRESS)
    refine_entities(ir, ["celine"], templates["I1_refine"], chat)
    assert "red dress" in ir.character("celine").refined_profile["clothing"]


def test_refine_fully_refined_is_identity(templates, chat):
    ir = parse_screenplay(RED_DRESS)
    refine_entities(ir, ["celine"], templates["I1_refine"], chat, rounds=1)
    before = copy.deepcopy(ir.character("celine").refined_profile)
    refine_entities(ir, ["celine"], templates["I1_refine"], chat, rounds=1)
    celine = ir.character("celine")
    assert celine.refined_profile == before
    assert celine.refinement_round == 2


def test_refine_rejects_zero_rounds(templates, chat):
    ir = parse_screenplay(RED_DRESS)
    with pytest.raises(ValueError):
        refine_entities(ir, ["celine"], templates["I1_refine"], chat, rounds=0)


def test_refine_spot_gains_description(templates, chat):
    text = "INT. VAULT - NIGHT\n\nANA\nIt's empty.\n"
    ir = parse_screenplay(text)
    refine_entities(ir, ["vault"], templates["I1_refine"], chat)
    assert ir.spot("vault").description


def test_refinement_safety_across_seeds(templates):
    """Grounded fields survive and non-empty fields are never emptied."""
    for seed in range(10):
        chat = make_backends(mock_backend_configs(seed=seed)).chat
        ir = parse_screenplay(RED_DRESS)
        refine_entities(ir, ["celine", "jesse"], templates["I1_refine"], chat)
        celine = ir.character("celine")
        assert is_grounded(celine.refined_profile["clothing"], RED_DRESS)
        before = copy.deepcopy(celine.refined_profile)
        refine_entities(ir, ["celine"], templates["I1_refine"], chat, rounds=1)
        for f, v in before.items():
            assert celine.refined_profile[f] == v


# ---------------------------------------------------------------------------
# indexing + retrieval

def test_alias_index_covers_names(corpus_text):
    ir = parse_screenplay(corpus_text)
    db = index_records(ir)
    for c in ir.characters:
        assert db.alias_index["{}".format(c.id)] == f"character:{c.id}"
    for s in ir.spots:
        assert db.alias_index[s.id] == f"spot:{s.id}"


def test_alias_lookup_via_added_alias(templates, chat):
    ir = parse_screenplay(RED_DRESS)
    ir.characters[1].aliases.append("the driver")
    db = index_records(ir)
    assert lookup(db, "the driver")[0] == "character:jesse"
    assert lookup(db, "driver")[0] == "character:jesse"


def test_duplicate_alias_first_declared_wins():
    ir = parse_screenplay(RED_DRESS)
    ir.characters[1].aliases.append("CELINE")
    db = index_records(ir)
    assert db.alias_index["celine"] == "character:celine"


def test_index_rebuild_deterministic(corpus_text):
    ir = parse_screenplay(corpus_text)
    a, b = index_records(ir), index_records(ir)
    assert a.alias_index == b.alias_index
    assert a.lexical_index == b.lexical_index


def test_retrieve_first_segment_has_no_recents(corpus_text):
    ir = parse_screenplay(corpus_text)
    db = index_records(ir)
    ctx = retrieve_context(db, 0, w=4)
    assert ctx.recent_segments == []
    assert ctx.speaker.id == ir.dialogues[0].speaker_id


def test_retrieve_third_segment_window(two_scene_text):
    ir = parse_screenplay(two_scene_text)
    db = index_records(ir)
    ctx = retrieve_context(db, 2, w=4)
    assert [d.id for d in ctx.recent_segments] == [0, 1]


def test_retrieve_speaker_never_in_addressees(corpus_text):
    ir = parse_screenplay(corpus_text)
    db = index_records(ir)
    for d in ir.dialogues:
        ctx = retrieve_context(db, d.id)
        assert ctx.speaker.id not in [a.id for a in ctx.addressees]
        assert len(ctx.recent_segments) <= 6


def test_retrieve_unknown_segment(two_scene_text):
    db = index_records(parse_screenplay(two_scene_text))
    with pytest.raises(UnknownSegment):
        retrieve_context(db, 999)


def test_retrieve_determinism(corpus_text):
    db = index_records(parse_screenplay(corpus_text))
    a = retrieve_context(db, 5, w=3)
    b = retrieve_context(db, 5, w=3)
    assert a == b


def test_rank1_retrieval_ten_characters():
    ir = parse_screenplay((DATA / "ten_chars.txt").read_text(encoding="utf-8"),
                          strict=True)
    assert len(ir.characters) == 10
    db = index_records(ir)
    for seg in ir.dialogues:
        name = ir.character(seg.speaker_id).name
        assert lookup(db, name)[0] == f"character:{seg.speaker_id}"


@settings(max_examples=30, deadline=None)
@given(st.text(alphabet=st.characters(categories=("Lu", "Ll", "Zs")),
               min_size=0, max_size=30))
def test_lookup_total_order(query):
    ir = parse_screenplay(RED_DRESS)
    db = index_records(ir)
    ranked = lookup(db, query)
    assert sorted(ranked) == sorted(
        [f"character:{c.id}" for c in ir.characters]
        + [f"spot:{s.id}" for s in ir.spots])
    assert ranked == lookup(db, query)
