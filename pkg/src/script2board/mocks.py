"""Deterministic mock backends.

Every output is a pure function of (config.seed, inputs). Mock images carry a
corner provenance stamp (see codec.py) so downstream stages can be audited
pixel-for-pixel, and glyph/background colors come from the shared identity
palette so the mock embedder can "recognize" who is in a panel.

The mock chat backend answers the pipeline's own prompt templates: a fixture
table keyed by prompt hash wins, otherwise a schema-valid default is built
heuristically from the payload embedded in the prompt.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import numpy as np

from . import codec
from .backends import (
    EMBED_DIM,
    MULTIVIEW_COUNT,
    BackendConfig,
    ImageAsset,
    _check_dims,
    _normalize,
)

# ---------------------------------------------------------------------------
# chat


_SPEAK_VERBS = r"(?:said|asked|replied|answered|cried|exclaimed|whispered|shouted|murmured)"
# "Please draw me a sheep," said the little prince.
_QUOTE_THEN_SPEAKER = re.compile(
    r'"([^"]+)"\s*,?\s*' + _SPEAK_VERBS + r"\s+(?:the\s+|a\s+)?([A-Za-z' -]+?)[.,;:]"
)
# The king said, "Approach."   /  Grandmother replied: "..."
_SPEAKER_THEN_QUOTE = re.compile(
    r"(?:[Tt]he\s+|[Aa]\s+)?([A-Z][A-Za-z' -]*?)\s+" + _SPEAK_VERBS + r"\s*[,:]?\s*\"([^\"]+)\""
)

_FILLERS = {
    "age_band": ["young adult", "middle-aged", "elderly", "teenager", "adult in their thirties"],
    "hair": ["short brown hair", "long dark hair", "curly gray hair", "blond hair tied back",
             "cropped black hair"],
    "clothing": ["plain gray coat", "worn linen shirt", "dark tailored suit",
                 "simple cotton dress", "heavy wool jacket"],
    "build": ["slender", "stocky", "tall and thin", "average build", "broad-shouldered"],
    "distinguishing_features": ["a thin scar on the cheek", "round spectacles",
                                "a crooked smile", "a small silver ring",
                                "freckles across the nose"],
}


def _prompt_key(seed: int, system: str, user: str) -> str:
    return hashlib.blake2b(f"{seed}|{system}|{user}".encode("utf-8"),
                           digest_size=16).hexdigest()


def _between(text: str, tag: str) -> str | None:
    m = re.search(rf"<<<{tag}\n(.*?)\n{tag}>>>", text, re.DOTALL)
    return m.group(1) if m else None


def extract_prose_elements(script: str) -> dict:
    """Regex quote attribution used as the mock's stand-in for model-backed
    extraction. Lines are verbatim substrings of the source."""
    characters: dict[str, dict] = {}
    dialogues = []
    matched_spans = []
    for m in _QUOTE_THEN_SPEAKER.finditer(script):
        line, speaker = m.group(1), m.group(2).strip()
        dialogues.append({"speaker": speaker, "line": line,
                          "spot": "Unknown", "addressees": [],
                          "pos": m.start(1)})
        matched_spans.append(m.span())
    for m in _SPEAKER_THEN_QUOTE.finditer(script):
        if any(a <= m.start() < b for a, b in matched_spans):
            continue
        speaker, line = m.group(1).strip(), m.group(2)
        dialogues.append({"speaker": speaker, "line": line,
                          "spot": "Unknown", "addressees": [],
                          "pos": m.start(2)})
        matched_spans.append(m.span())
    # quotes neither pattern could attribute are still reported, with an
    # empty speaker, so the consumer can reject them instead of losing them
    for m in re.finditer(r'"([^"]{2,})"', script):
        if any(a <= m.start() < b for a, b in matched_spans):
            continue
        dialogues.append({"speaker": "", "line": m.group(1),
                          "spot": "Unknown", "addressees": [],
                          "pos": m.start(1)})
    dialogues.sort(key=lambda d: d["pos"])
    for d in dialogues:
        d.pop("pos")
        name = d["speaker"]
        if name:
            characters.setdefault(name.lower(),
                                  {"name": name, "aliases": [name],
                                   "description": ""})
    narration = re.sub(r'"[^"]*"', "", script)
    narration = re.sub(r"\s+", " ", narration).strip()
    return {
        "characters": list(characters.values()),
        "spots": [{"name": "Unknown", "interior_exterior": "UNKNOWN",
                   "time_of_day": "UNKNOWN", "description": narration[:400]}],
        "dialogues": dialogues,
    }


class MockChatBackend:
    def __init__(self, config: BackendConfig, fixtures: dict[str, str] | None = None):
        self.config = config
        self.fixtures = dict(fixtures or {})
        self.calls = 0

    def add_fixture(self, system: str, user: str, reply: str) -> None:
        self.fixtures[_prompt_key(self.config.seed, system, user)] = reply

    def chat_complete(self, system: str, user: str) -> str:
        self.calls += 1
        key = _prompt_key(self.config.seed, system, user)
        if key in self.fixtures:
            return self.fixtures[key]
        task_m = re.search(r"TASK:\s*(\w+)", user) or re.search(r"TASK:\s*(\w+)", system)
        task = task_m.group(1) if task_m else ""
        if task == "extract":
            script = _between(user, "SCRIPT") or ""
            payload = extract_prose_elements(script)
            return ("Reading the script and listing elements step by step.\n"
                    "```json\n" + json.dumps(payload, ensure_ascii=False) + "\n```")
        if task == "refine":
            entity = _between(user, "ENTITY") or "{}"
            try:
                record = json.loads(entity)
            except ValueError:
                record = {}
            rid = str(record.get("id", "entity"))
            fills = {}
            for fname, options in _FILLERS.items():
                idx = codec.stable_hash64(f"{self.config.seed}:{rid}:{fname}") % len(options)
                fills[fname] = options[idx]
            didx = codec.stable_hash64(f"{self.config.seed}:{rid}:description") % len(
                _FILLERS["clothing"])
            fills["description"] = f"a quiet place with {_FILLERS['clothing'][didx]} tones"
            return ("Considering what the text implies about this entity.\n"
                    "```json\n" + json.dumps(fills, ensure_ascii=False) + "\n```")
        if task == "view_select":
            cands = _between(user, "CANDIDATES") or ""
            m = re.search(r"\d+", cands)
            return m.group(0) if m else "0"
        return "ACCEPT"


# ---------------------------------------------------------------------------
# images

CHAR_SIZE = (384, 576)   # W, H portrait
SPOT_SIZE = (640, 360)   # W, H landscape


def _render_character_base(owner_id: str, width: int, height: int) -> np.ndarray:
    """Asymmetric humanoid silhouette on pure white, colored by identity."""
    px = np.full((height, width, 4), 255, dtype=np.uint8)
    color = codec.entity_color(owner_id)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cx = (width - 1) / 2.0
    mask = np.zeros((height, width), dtype=bool)
    # head
    mask |= (xx - cx) ** 2 + (yy - 0.20 * height) ** 2 <= (0.085 * height) ** 2
    # torso (ellipse)
    mask |= ((xx - cx) / (0.16 * width)) ** 2 + \
            ((yy - 0.46 * height) / (0.17 * height)) ** 2 <= 1.0
    # legs
    mask |= (np.abs(xx - cx) <= 0.09 * width) & (yy >= 0.58 * height) & (yy <= 0.92 * height)
    # single raised arm on screen-right: breaks mirror symmetry
    mask |= (xx >= cx + 0.16 * width) & (xx <= cx + 0.27 * width) & \
            (yy >= 0.30 * height) & (yy <= 0.38 * height)
    px[mask] = (*color, 255)
    return px


def _render_spot(owner_id: str, width: int, height: int) -> np.ndarray:
    px = np.zeros((height, width, 4), dtype=np.uint8)
    color = codec.entity_color(owner_id)
    px[:, :, 0] = color[0]
    px[:, :, 1] = color[1]
    px[:, :, 2] = color[2]
    px[:, :, 3] = 255
    # skyline rectangles keyed off the identity hash; darker than background
    h = codec.stable_hash64("skyline:" + owner_id)
    dark = tuple(max(0, c - 60) for c in color)
    for k in range(4):
        bw = width // 8 + ((h >> (k * 8)) & 0x1F)
        bx = (k * width) // 4 + ((h >> (k * 4)) & 0x0F)
        bh = height // 4 + ((h >> (k * 6)) & 0x3F)
        y0 = height - bh - height // 8
        px[max(0, y0):height - height // 8, bx:min(width, bx + bw), :3] = dark
    return px


def _rotate_character(base: np.ndarray, azimuth_deg: float, owner_id: str) -> np.ndarray:
    """Billboard rotation about the vertical axis: columns are resampled by
    cos(azimuth); 180 degrees is an exact horizontal mirror."""
    height, width = base.shape[:2]
    out = np.full_like(base, 255)
    s = math.cos(math.radians(azimuth_deg))
    if abs(s) < 0.2:
        s = math.copysign(0.2, s) if s != 0 else 0.2
    cx = (width - 1) / 2.0
    cols = np.arange(width, dtype=np.float64)
    src = cx + (cols - cx) / s
    src_idx = np.rint(src).astype(np.int64)
    valid = (src_idx >= 0) & (src_idx < width)
    out[:, valid] = base[:, src_idx[valid]]
    # nose marker indicates facing for oblique views; vanishes at 0 and 180
    sn = math.sin(math.radians(azimuth_deg))
    if abs(sn) > 1e-9:
        nx = int(round(cx + sn * 0.30 * width))
        ny = int(0.20 * base.shape[0])
        color = tuple(max(0, c - 40) for c in codec.entity_color(owner_id))
        out[max(0, ny - 6):ny + 6, max(0, nx - 6):nx + 6, :3] = color
    return out


class MockImageBackend:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.calls = 0

    def text_to_image(self, prompt: str, seed: int, width: int, height: int,
                      role: str = "spot_ref", owner_id: str = "") -> ImageAsset:
        self.calls += 1
        _check_dims(width, height)
        if role == "spot_ref":
            px = _render_spot(owner_id or prompt, width, height)
        else:
            px = _render_character_base(owner_id or prompt, width, height)
        view = 0 if role == "character_view" else None
        codec.stamp_corner(px, codec.make_payload(owner_id or prompt, role, view,
                                                  f"{self.config.seed}:{seed}:{prompt}"))
        return ImageAsset(id=f"{owner_id}:{role}", role=role,
                          owner_id=owner_id or prompt, pixels=px, view_index=view)


class MockMultiViewBackend:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.calls = 0

    def image_to_multiview(self, ref: ImageAsset) -> list[ImageAsset]:
        if ref.role != "character_ref":
            raise ValueError("multi-view expansion takes a character_ref asset")
        self.calls += 1
        base = _render_character_base(ref.owner_id, ref.width, ref.height)
        ref_digest = codec.read_corner(ref.pixels)[10:16]
        out = []
        for x in range(MULTIVIEW_COUNT):
            px = _rotate_character(base, 45.0 * x, ref.owner_id)
            payload = (codec.stable_hash64(ref.owner_id).to_bytes(8, "big")
                       + bytes([x, codec.ROLE_CODES["character_view"]])
                       + ref_digest)
            codec.stamp_corner(px, payload)
            out.append(ImageAsset(id=f"{ref.owner_id}:view_{x}",
                                  role="character_view", owner_id=ref.owner_id,
                                  pixels=px, view_index=x))
        return out


# ---------------------------------------------------------------------------
# embeddings

_TOKEN_RE = re.compile(r"[\w']+")


def _text_tokens(text: str) -> list[str]:
    toks = [t.casefold() for t in _TOKEN_RE.findall(text)]
    bigrams = [f"{a}-{b}" for a, b in zip(toks, toks[1:])]
    return toks + bigrams


class MockEmbedBackend:
    """Hashed bag-of-tokens for text; identity-palette histogram for images.

    Both sides land in the same hashed dimension space: the dimension of the
    token "jesse" equals the palette index of character id "jesse", so a
    panel showing jesse correlates with captions that name jesse.
    """

    dim = EMBED_DIM

    def __init__(self, config: BackendConfig):
        self.config = config

    def embed(self, payload) -> np.ndarray:
        if isinstance(payload, ImageAsset):
            return self._embed_image(payload.pixels)
        if isinstance(payload, np.ndarray):
            return self._embed_image(payload)
        if not payload:
            raise ValueError("empty embed payload")
        return self._embed_text(payload)

    def _embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for tok in _text_tokens(text):
            vec[codec.stable_hash64(tok) % self.dim] += 1.0
        return _normalize(vec)

    def _embed_image(self, pixels: np.ndarray) -> np.ndarray:
        rgb = pixels[:, :, :3].reshape(-1, 3)
        colors, counts = np.unique(rgb, axis=0, return_counts=True)
        vec = np.zeros(self.dim)
        for color, count in zip(colors, counts):
            if count < 16:
                continue
            idx = codec.PALETTE_INDEX.get(tuple(int(v) for v in color))
            if idx is not None:
                vec[idx] += math.sqrt(float(count))
        if not vec.any():
            # no palette colors present (e.g. a photograph): coarse histogram
            bins = (rgb[:, 0] // 32) * 64 + (rgb[:, 1] // 32) * 8 + rgb[:, 2] // 32
            hist = np.bincount(bins, minlength=512)[:512]
            vec = np.sqrt(hist[:self.dim] + hist[self.dim:].astype(np.float64))
        return _normalize(vec)
