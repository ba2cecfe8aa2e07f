"""Cinematographer: turns refined profiles into reference imagery and expands
each character into an 8-view portrait set.

Azimuth convention: view x faces the camera at 45*x degrees, x = 0 frontal,
increasing clockwise seen from above. Characters render on a plain white
background so the compositor can key them out deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .backends import MULTIVIEW_COUNT, ImageAsset
from .errors import BackendError, UnrefinedRecord, WrongCount
from .script_ir import CharacterRecord, ScriptIR, SpotRecord

log = logging.getLogger("script2board.cinematographer")

CHAR_REF_SIZE = (384, 576)    # W, H portrait full-body
SPOT_REF_SIZE = (640, 360)    # W, H landscape
MAX_PROMPT_LEN = 500

_FRAMING_CLAUSE = {
    "full_body": "full body visible head to toe",
    "half_body": "framed from the waist up",
    "head_and_shoulders": "head and shoulders framing",
}


@dataclass
class BasePromptConfig:
    orientation: str = "portrait"            # portrait | landscape
    framing: str = "full_body"
    style_suffix: str = "clean storyboard illustration style"
    negative_terms: list[str] = field(default_factory=lambda: [
        "background clutter", "other people", "text", "watermark"])


def view_azimuth(x: int) -> float:
    if not 0 <= x < MULTIVIEW_COUNT:
        raise ValueError(f"view index {x} outside [0, {MULTIVIEW_COUNT - 1}]")
    return 45.0 * x


@dataclass
class MultiViewSet:
    character_id: str
    views: list[ImageAsset]

    def __post_init__(self):
        if len(self.views) != MULTIVIEW_COUNT:
            raise WrongCount(len(self.views))
        for x, v in enumerate(self.views):
            if v.view_index != x:
                raise ValueError(f"views[{x}].view_index = {v.view_index}")
            if v.owner_id != self.character_id:
                raise ValueError("view owner does not match set character")

    def view(self, x: int) -> ImageAsset:
        return self.views[x]


def build_base_prompt(record, config: BasePromptConfig) -> str:
    """Deterministic prompt: profile fields in fixed order, then framing and
    style; capped at 500 characters with the style suffix truncated last."""
    if isinstance(record, CharacterRecord):
        if record.refinement_round < 1:
            raise UnrefinedRecord(f"character {record.id} is unrefined")
        p = record.refined_profile
        parts = [record.name, p["age_band"], p["hair"], p["clothing"],
                 p["build"], p["distinguishing_features"]]
        parts.append(_FRAMING_CLAUSE[config.framing])
        parts.append("plain white background")
    elif isinstance(record, SpotRecord):
        qualifiers = []
        if record.interior_exterior != "UNKNOWN":
            qualifiers.append("interior" if record.interior_exterior == "INT" else "exterior")
        if record.time_of_day != "UNKNOWN":
            qualifiers.append(record.time_of_day.lower())
        parts = [record.name] + qualifiers
        if record.description:
            parts.append(record.description[:200])
        parts.append("wide establishing view, no people")
    else:
        raise TypeError(type(record).__name__)
    prompt = ", ".join(s for s in parts if s)
    if config.style_suffix:
        room = MAX_PROMPT_LEN - len(prompt) - 2
        if room > 0:
            prompt = prompt + ", " + config.style_suffix[:room]
    return prompt[:MAX_PROMPT_LEN]


# ---------------------------------------------------------------------------
# asset tree + cache

def _cache_key(prompt: str, seed: int) -> str:
    return hashlib.blake2b(f"{prompt}|{seed}".encode("utf-8"),
                           digest_size=8).hexdigest()


class AssetStore:
    """Workspace asset tree with a manifest for cache idempotence.

    Layout: assets/characters/<id>/ref.png + view_0..7.png,
            assets/spots/<id>/ref.png, assets/manifest.json.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        self.manifest: dict[str, dict] = {}
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def _save_manifest(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")

    def path_for(self, asset_key: str) -> Path:
        return self.root / self.manifest[asset_key]["path"]

    def fresh(self, asset_key: str, cache_key: str) -> bool:
        entry = self.manifest.get(asset_key)
        return (entry is not None and entry["cache_key"] == cache_key
                and (self.root / entry["path"]).exists())

    def put(self, asset_key: str, relpath: str, asset: ImageAsset,
            cache_key: str) -> None:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        asset.save(path)
        self.manifest[asset_key] = {
            "path": relpath,
            "cache_key": cache_key,
            "content_hash": f"{asset.content_hash:016x}",
            "owner_id": asset.owner_id,
            "role": asset.role,
            "view_index": asset.view_index,
        }
        self._save_manifest()

    def get(self, asset_key: str) -> ImageAsset:
        entry = self.manifest[asset_key]
        return ImageAsset.load(self.root / entry["path"], id=asset_key,
                               role=entry["role"], owner_id=entry["owner_id"],
                               view_index=entry["view_index"])


# ---------------------------------------------------------------------------
# generation

def generate_reference_images(ir: ScriptIR, config: BasePromptConfig,
                              image_backend, store: AssetStore,
                              seed: int = 0) -> dict[str, ImageAsset]:
    """One character_ref per character and one spot_ref per spot, cached by
    (prompt, seed). Failures are per-entity; progress persists."""
    assets: dict[str, ImageAsset] = {}
    failures: dict[str, str] = {}
    spot_config = BasePromptConfig(orientation="landscape",
                                   framing=config.framing,
                                   style_suffix=config.style_suffix,
                                   negative_terms=config.negative_terms)
    jobs = [(f"character:{c.id}", c, "character_ref",
             f"characters/{c.id}/ref.png", CHAR_REF_SIZE, config)
            for c in ir.characters]
    jobs += [(f"spot:{s.id}", s, "spot_ref",
              f"spots/{s.id}/ref.png", SPOT_REF_SIZE, spot_config)
             for s in ir.spots]

    for key, record, role, relpath, (w, h), cfg in jobs:
        prompt = build_base_prompt(record, cfg)
        ck = _cache_key(prompt, seed)
        if store.fresh(key, ck):
            assets[key] = store.get(key)
            continue
        try:
            asset = image_backend.text_to_image(prompt, seed=seed, width=w,
                                                height=h, role=role,
                                                owner_id=record.id)
        except BackendError as exc:
            log.error("generation failed for %s: %s", key, exc)
            failures[key] = str(exc)
            continue
        store.put(key, relpath, asset, ck)
        assets[key] = asset
    if failures:
        raise BackendError(f"failed entities: {sorted(failures)}")
    return assets


def generate_multiview(char_assets: dict[str, ImageAsset], multiview_backend,
                       store: AssetStore) -> dict[str, MultiViewSet]:
    """Expand every character_ref into its 8-view portrait set."""
    sets: dict[str, MultiViewSet] = {}
    for key, ref in sorted(char_assets.items()):
        if ref.role != "character_ref":
            continue
        cid = ref.owner_id
        ck = _cache_key(f"multiview:{self_hash(ref)}", 0)
        keys = [f"character_view:{cid}:{x}" for x in range(MULTIVIEW_COUNT)]
        if all(store.fresh(k, ck) for k in keys):
            sets[cid] = MultiViewSet(character_id=cid,
                                     views=[store.get(k) for k in keys])
            continue
        views = multiview_backend.image_to_multiview(ref)
        if len(views) != MULTIVIEW_COUNT:
            raise WrongCount(len(views))
        for x, view in enumerate(views):
            store.put(keys[x], f"characters/{cid}/view_{x}.png", view, ck)
        sets[cid] = MultiViewSet(character_id=cid, views=views)
    return sets


def self_hash(asset: ImageAsset) -> str:
    return f"{asset.content_hash:016x}"
