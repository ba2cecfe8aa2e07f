"""Base prompts, reference generation, caching, and 8-view expansion."""

import pytest

from script2board.backends import make_backends, mock_backend_configs
from script2board.cinematographer import (
    AssetStore,
    BasePromptConfig,
    MultiViewSet,
    build_base_prompt,
    generate_multiview,
    generate_reference_images,
    view_azimuth,
)
from script2board.codec import decode_payload, read_corner, stable_hash64
from script2board.director import load_templates, refine_entities
from script2board.errors import UnrefinedRecord, WrongCount
from script2board.script_ir import CharacterRecord, SpotRecord, parse_screenplay
from script2board.workspace import digest_tree

SCRIPT = """INT. BALLROOM - NIGHT

Celine wears a red dress. Jesse stands by the stair in a black suit.

CELINE
You came.

JESSE
I said I would.
"""


def refined_ir():
    backends = make_backends(mock_backend_configs(seed=7))
    templates = load_templates()
    ir = parse_screenplay(SCRIPT)
    targets = [c.id for c in ir.characters] + [s.id for s in ir.spots]
    return refine_entities(ir, targets, templates["I1_refine"], backends.chat)


class CountingBackend:
    """Pass-through proxy that counts generation calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def text_to_image(self, *args, **kwargs):
        self.calls += 1
        return self.inner.text_to_image(*args, **kwargs)

    def image_to_multiview(self, ref):
        self.calls += 1
        return self.inner.image_to_multiview(ref)


# ---------------------------------------------------------------------------
# azimuth convention + prompt builder

def test_view_azimuths():
    assert view_azimuth(0) == 0.0
    assert view_azimuth(4) == 180.0
    assert [view_azimuth(x) for x in range(8)] == \
        [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]


def test_base_prompt_deterministic_and_grounded():
    ir = refined_ir()
    cfg = BasePromptConfig()
    a = build_base_prompt(ir.character("celine"), cfg)
    assert a == build_base_prompt(ir.character("celine"), cfg)
    assert "red dress" in a
    assert "plain white background" in a


def test_base_prompt_without_style_suffix():
    ir = refined_ir()
    plain = build_base_prompt(ir.character("jesse"), BasePromptConfig(style_suffix=""))
    styled = build_base_prompt(ir.character("jesse"),
                               BasePromptConfig(style_suffix="storybook watercolor"))
    assert styled.startswith(plain)
    assert "storybook watercolor" in styled


def test_base_prompt_truncates_style_last():
    ir = refined_ir()
    prompt = build_base_prompt(
        ir.character("celine"), BasePromptConfig(style_suffix="x" * 1000))
    assert len(prompt) <= 500
    assert "red dress" in prompt           # profile content survives truncation


def test_base_prompt_requires_refinement():
    record = CharacterRecord(id="raw", name="Raw")
    with pytest.raises(UnrefinedRecord):
        build_base_prompt(record, BasePromptConfig())


def test_base_prompt_spot_allows_coarse():
    spot = SpotRecord(id="pier", name="Pier", interior_exterior="EXT",
                      time_of_day="NIGHT", description="lamps on black water")
    prompt = build_base_prompt(spot, BasePromptConfig())
    assert "Pier" in prompt and "exterior" in prompt and "night" in prompt


# ---------------------------------------------------------------------------
# reference generation + cache

def test_reference_counts_and_cache(tmp_path):
    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))
    counting = CountingBackend(backends.image)
    store = AssetStore(tmp_path / "assets")
    refs = generate_reference_images(ir, BasePromptConfig(), counting, store)

    assert len(refs) == 3              # 2 characters + 1 spot
    assert counting.calls == 3
    assert (tmp_path / "assets/characters/celine/ref.png").exists()
    assert (tmp_path / "assets/spots/ballroom/ref.png").exists()

    # identical rerun: all cache hits, zero backend calls
    store2 = AssetStore(tmp_path / "assets")
    generate_reference_images(ir, BasePromptConfig(), counting, store2)
    assert counting.calls == 3


def test_reference_seed_changes_assets(tmp_path):
    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))
    s1 = AssetStore(tmp_path / "a")
    s2 = AssetStore(tmp_path / "b")
    r1 = generate_reference_images(ir, BasePromptConfig(), backends.image, s1,
                                   seed=1)
    r2 = generate_reference_images(ir, BasePromptConfig(), backends.image, s2,
                                   seed=2)
    assert r1["character:celine"].content_hash != \
        r2["character:celine"].content_hash


def test_asset_tree_idempotent(tmp_path):
    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))

    def run(parent):
        store = AssetStore(parent / "assets")
        refs = generate_reference_images(ir, BasePromptConfig(),
                                         backends.image, store)
        chars = {k: v for k, v in refs.items() if v.role == "character_ref"}
        generate_multiview(chars, backends.multiview, store)
        return digest_tree(parent, ["assets"])

    assert run(tmp_path / "x") == run(tmp_path / "y")


# ---------------------------------------------------------------------------
# multi-view expansion

def test_multiview_cardinality_and_decode(tmp_path):
    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))
    store = AssetStore(tmp_path / "assets")
    refs = generate_reference_images(ir, BasePromptConfig(), backends.image, store)
    chars = {k: v for k, v in refs.items() if v.role == "character_ref"}
    sets = generate_multiview(chars, backends.multiview, store)

    assert set(sets) == {"celine", "jesse"}
    total = 0
    for cid, mvs in sets.items():
        assert isinstance(mvs, MultiViewSet)
        assert len(mvs.views) == 8
        for x, view in enumerate(mvs.views):
            assert view.view_index == x
            assert view.owner_id == cid
            assert (tmp_path / f"assets/characters/{cid}/view_{x}.png").exists()
            total += 1
        info = decode_payload(read_corner(mvs.view(3).pixels))
        assert info["owner_hash"] == stable_hash64(cid)
        assert info["view_index"] == 3
    assert total == 8 * len(chars)


def test_multiview_cache_skips_backend(tmp_path):
    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))
    store = AssetStore(tmp_path / "assets")
    refs = generate_reference_images(ir, BasePromptConfig(), backends.image, store)
    chars = {k: v for k, v in refs.items() if v.role == "character_ref"}
    counting = CountingBackend(backends.multiview)
    generate_multiview(chars, counting, store)
    assert counting.calls == 2
    generate_multiview(chars, counting, AssetStore(tmp_path / "assets"))
    assert counting.calls == 2


def test_multiview_wrong_count(tmp_path):
    class Short:
        def image_to_multiview(self, ref):
            raise WrongCount(5)

    ir = refined_ir()
    backends = make_backends(mock_backend_configs(seed=7))
    store = AssetStore(tmp_path / "assets")
    refs = generate_reference_images(ir, BasePromptConfig(), backends.image, store)
    chars = {k: v for k, v in refs.items() if v.role == "character_ref"}
    with pytest.raises(WrongCount):
        generate_multiview(chars, Short(), store)


def test_multiview_set_invariants():
    backends = make_backends(mock_backend_configs(seed=7))
    ref = backends.image.text_to_image("portrait", 0, 128, 192,
                                       role="character_ref", owner_id="ana")
    views = backends.multiview.image_to_multiview(ref)
    with pytest.raises(WrongCount):
        MultiViewSet(character_id="ana", views=views[:7])
    with pytest.raises(ValueError):
        MultiViewSet(character_id="bo", views=views)
