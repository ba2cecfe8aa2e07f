"""Machine-readable provenance stamps for mock-generated imagery.

Every mock image carries a 16-byte payload in its top-left corner, encoded as
a 4x4 grid of 4x4-pixel blocks (16x16 px total). Block color for byte value b
is (R=b, G=255-b, B=170): saturated, never near-white, so the stamp survives
the luminance keyer, and the byte is recoverable from the R channel alone.

Payload layout:
    bytes 0..7   blake2b-64 of the owner record id
    byte  8      view index (255 when not a view asset)
    byte  9      role code (0 character_ref, 1 spot_ref, 2 character_view)
    bytes 10..15 first 6 bytes of blake2b over the generating prompt
"""

from __future__ import annotations

import hashlib

import numpy as np

BLOCK = 4          # pixels per block side
GRID = 4           # blocks per side
STAMP = BLOCK * GRID

ROLE_CODES = {"character_ref": 0, "spot_ref": 1, "character_view": 2}
NO_VIEW = 255


def stable_hash64(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest(), "big")


def prompt_digest(prompt: str, n: int = 6) -> bytes:
    return hashlib.blake2b(prompt.encode("utf-8"), digest_size=n).digest()


def make_payload(owner_id: str, role: str, view_index: int | None, prompt: str) -> bytes:
    return (
        stable_hash64(owner_id).to_bytes(8, "big")
        + bytes([NO_VIEW if view_index is None else view_index])
        + bytes([ROLE_CODES[role]])
        + prompt_digest(prompt)
    )


def stamp_corner(pixels: np.ndarray, payload: bytes) -> None:
    """Write the 16-byte payload into the image's top-left corner in place."""
    assert len(payload) == 16
    for i, b in enumerate(payload):
        r, c = divmod(i, GRID)
        y, x = r * BLOCK, c * BLOCK
        pixels[y:y + BLOCK, x:x + BLOCK, 0] = b
        pixels[y:y + BLOCK, x:x + BLOCK, 1] = 255 - b
        pixels[y:y + BLOCK, x:x + BLOCK, 2] = 170
        if pixels.shape[2] == 4:
            pixels[y:y + BLOCK, x:x + BLOCK, 3] = 255


def stamp_mask(pixels: np.ndarray) -> np.ndarray:
    """Boolean mask of provenance-stamp pixels. Stamp colors satisfy B == 170
    and R + G == 255, which no palette/render color does."""
    r = pixels[:, :, 0].astype(np.int32)
    g = pixels[:, :, 1].astype(np.int32)
    b = pixels[:, :, 2].astype(np.int32)
    return (b == 170) & (r + g == 255)


def read_corner(pixels: np.ndarray, origin: tuple[int, int] = (0, 0),
                scale: float = 1.0) -> bytes:
    """Recover the 16-byte payload from an image, optionally after the stamp
    was translated to `origin` and resized by `scale` with nearest-neighbor
    resampling (as panel compositing does)."""
    ox, oy = origin
    out = bytearray()
    for i in range(16):
        r, c = divmod(i, GRID)
        sx = c * BLOCK + BLOCK / 2.0
        sy = r * BLOCK + BLOCK / 2.0
        px = ox + int(round(sx * scale - 0.5))
        py = oy + int(round(sy * scale - 0.5))
        out.append(int(pixels[py, px, 0]))
    return bytes(out)


def decode_payload(payload: bytes) -> dict:
    view = payload[8]
    return {
        "owner_hash": int.from_bytes(payload[0:8], "big"),
        "view_index": None if view == NO_VIEW else view,
        "role_code": payload[9],
        "prompt_digest": payload[10:16],
    }


# ---------------------------------------------------------------------------
# deterministic 256-color palette shared by the mock renderer and the mock
# embedder: entity identity maps to palette index = blake2b-64(id) % 256, and
# the embedder maps a found palette color back to the same index. Channel
# maxima stay <= 208 so no palette color is ever keyed out as "white".

def _build_palette() -> np.ndarray:
    pal = np.zeros((256, 3), dtype=np.uint8)
    for i in range(256):
        pal[i, 0] = 16 + (i >> 4) * 12          # 16 levels from high nibble
        pal[i, 1] = 28 + ((i >> 2) & 0x3) * 60  # 4 levels
        pal[i, 2] = 40 + (i & 0x3) * 56         # 4 levels
    return pal


PALETTE = _build_palette()
PALETTE_INDEX = {tuple(int(v) for v in PALETTE[i]): i for i in range(256)}


def entity_color_index(entity_id: str) -> int:
    return stable_hash64(entity_id) % 256


def entity_color(entity_id: str) -> tuple[int, int, int]:
    return tuple(int(v) for v in PALETTE[entity_color_index(entity_id)])
