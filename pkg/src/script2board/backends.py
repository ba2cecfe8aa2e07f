"""Pluggable clients for the generative services the pipeline leans on:
chat completion, text-to-image, multi-view expansion, and embeddings.

Two kinds exist: "http" talks JSON to a remote service; "mock" (in mocks.py)
is fully deterministic and carries provenance stamps so the pipeline can be
verified end to end without any model. Wire shapes follow the common
chat-completion / image-generation conventions; see README for the exact
fields.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests
from PIL import Image

from .errors import (
    AuthMissing,
    DecodeError,
    DimensionRejected,
    MalformedResponse,
    NonRetryableStatus,
    Timeout,
    WrongCount,
)

MULTIVIEW_COUNT = 8
EMBED_DIM = 256


@dataclass
class BackendConfig:
    kind: str = "mock"                 # "mock" | "http"
    base_url: str | None = None
    auth_env_var: str | None = None
    timeout: float = 30.0
    retries: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ValueError("http backend requires base_url")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def to_dict(self) -> dict:
        # credential value intentionally never serialized; only the env var name
        return {
            "kind": self.kind, "base_url": self.base_url,
            "auth_env_var": self.auth_env_var, "timeout": self.timeout,
            "retries": self.retries, "seed": self.seed,
        }


def load_backend_configs(path: str) -> dict[str, BackendConfig]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {name: BackendConfig(**cfg) for name, cfg in data.items()}


def mock_backend_configs(seed: int = 0) -> dict[str, BackendConfig]:
    return {name: BackendConfig(kind="mock", seed=seed)
            for name in ("chat", "image", "multiview", "embed")}


@dataclass
class ImageAsset:
    id: str
    role: str                          # character_ref | spot_ref | character_view
    owner_id: str
    pixels: np.ndarray                 # HxWx4 uint8 RGBA
    view_index: int | None = None

    def __post_init__(self):
        if self.role not in ("character_ref", "spot_ref", "character_view"):
            raise ValueError(f"bad role {self.role!r}")
        if (self.view_index is not None) != (self.role == "character_view"):
            raise ValueError("view_index present iff role is character_view")
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 4:
            raise ValueError("pixels must be HxWx4 uint8")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def content_hash(self) -> int:
        return int.from_bytes(
            hashlib.blake2b(self.pixels.tobytes(), digest_size=8).digest(), "big")

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, "RGBA").save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        Image.fromarray(self.pixels, "RGBA").save(path, format="PNG")

    @classmethod
    def load(cls, path, id: str, role: str, owner_id: str,
             view_index: int | None = None) -> "ImageAsset":
        arr = np.asarray(Image.open(path).convert("RGBA"))
        return cls(id=id, role=role, owner_id=owner_id, pixels=arr,
                   view_index=view_index)


def _b64_to_pixels(data: str) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(base64.b64decode(data)))
        return np.asarray(img.convert("RGBA"))
    except Exception as exc:
        raise DecodeError(str(exc)) from exc


# ---------------------------------------------------------------------------
# http transport with retry

_RETRYABLE = {429, 500, 502, 503, 504}


class _HttpClient:
    """Shared POST-with-retry plumbing; at most 4 in-flight requests per client."""

    def __init__(self, config: BackendConfig, max_in_flight: int = 4):
        self.config = config
        self._gate = threading.Semaphore(max_in_flight)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env_var:
            token = os.environ.get(self.config.auth_env_var)
            if not token:
                raise AuthMissing(
                    f"environment variable {self.config.auth_env_var} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = self._headers()
        attempts = self.config.retries + 1
        delay = 0.25
        last_exc = None
        for attempt in range(attempts):
            try:
                with self._gate:
                    resp = requests.post(url, json=payload, headers=headers,
                                         timeout=self.config.timeout)
            except requests.Timeout as exc:
                last_exc = Timeout(str(exc))
            except requests.ConnectionError as exc:
                last_exc = Timeout(f"connection failed: {exc}")
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise MalformedResponse(str(exc)) from exc
                if resp.status_code in _RETRYABLE:
                    last_exc = NonRetryableStatus(resp.status_code, resp.text)
                else:
                    raise NonRetryableStatus(resp.status_code, resp.text)
            if attempt < attempts - 1:
                time.sleep(delay)
                delay *= 2
        raise last_exc


class HttpChatBackend(_HttpClient):
    def chat_complete(self, system: str, user: str) -> str:
        data = self.post("/chat/completions", {
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected chat payload: {data}") from exc


class HttpImageBackend(_HttpClient):
    def text_to_image(self, prompt: str, seed: int, width: int, height: int,
                      role: str = "spot_ref", owner_id: str = "") -> ImageAsset:
        _check_dims(width, height)
        data = self.post("/txt2img", {
            "prompt": prompt, "seed": seed, "width": width, "height": height,
        })
        try:
            pixels = _b64_to_pixels(data["image"])
        except KeyError as exc:
            raise MalformedResponse(f"no image in payload: {data}") from exc
        view = 0 if role == "character_view" else None
        return ImageAsset(id=f"{owner_id}:{role}", role=role, owner_id=owner_id,
                          pixels=pixels, view_index=view)


class HttpMultiViewBackend(_HttpClient):
    def image_to_multiview(self, ref: ImageAsset) -> list[ImageAsset]:
        if ref.role != "character_ref":
            raise ValueError("multi-view expansion takes a character_ref asset")
        data = self.post("/multiview", {
            "image": base64.b64encode(ref.to_png_bytes()).decode("ascii"),
            "views": MULTIVIEW_COUNT,
        })
        images = data.get("images")
        if not isinstance(images, list):
            raise MalformedResponse(f"no images in payload: {data}")
        if len(images) != MULTIVIEW_COUNT:
            raise WrongCount(len(images))
        return [
            ImageAsset(id=f"{ref.owner_id}:view_{x}", role="character_view",
                       owner_id=ref.owner_id, pixels=_b64_to_pixels(b64),
                       view_index=x)
            for x, b64 in enumerate(images)
        ]


class HttpEmbedBackend(_HttpClient):
    dim = EMBED_DIM

    def embed(self, payload) -> np.ndarray:
        if isinstance(payload, ImageAsset):
            body = {"image": base64.b64encode(payload.to_png_bytes()).decode("ascii")}
        else:
            if not payload:
                raise ValueError("empty embed payload")
            body = {"text": payload}
        data = self.post("/embed", body)
        vec = np.asarray(data.get("embedding"), dtype=np.float64)
        if vec.ndim != 1:
            raise MalformedResponse(f"bad embedding payload: {data}")
        return _normalize(vec)


def _check_dims(width: int, height: int) -> None:
    if not (64 <= width <= 2048 and 64 <= height <= 2048):
        raise DimensionRejected(f"{width}x{height} outside [64, 2048]")


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


# ---------------------------------------------------------------------------
# factory

@dataclass
class BackendSet:
    chat: object
    image: object
    multiview: object
    embed: object
    configs: dict[str, BackendConfig] = field(default_factory=dict)

    def digest(self) -> str:
        blob = json.dumps({k: v.to_dict() for k, v in sorted(self.configs.items())},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_backends(configs: dict[str, BackendConfig]) -> BackendSet:
    from . import mocks

    def build(name, http_cls, mock_cls):
        cfg = configs.get(name, BackendConfig(kind="mock"))
        if cfg.kind == "http":
            return http_cls(cfg)
        return mock_cls(cfg)

    return BackendSet(
        chat=build("chat", HttpChatBackend, mocks.MockChatBackend),
        image=build("image", HttpImageBackend, mocks.MockImageBackend),
        multiview=build("multiview", HttpMultiViewBackend, mocks.MockMultiViewBackend),
        embed=build("embed", HttpEmbedBackend, mocks.MockEmbedBackend),
        configs=dict(configs),
    )
