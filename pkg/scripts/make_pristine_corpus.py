#!/usr/bin/env python3
"""Regenerate the bundled image data and the shipped pristine quality model.

Outputs (committed to the repo):
    src/script2board/data/pristine_XX.png   25 corpus images, 384x384
    src/script2board/data/photo_X.png       5 test photographs, 512x512
    src/script2board/data/niqe_pristine.json

The images are procedurally generated natural-texture fields (mixed 1/f
noise, soft gradients, and blob structure) with a fixed seed, so the whole
data tree is reproducible from this script.
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from script2board.niqe import fit_pristine_model  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "script2board" / "data"


def natural_field(rng: np.random.Generator, size: int, beta: float) -> np.ndarray:
    """1/f^beta random field: the classic stand-in for natural image spectra."""
    white = rng.standard_normal((size, size))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fy ** 2 + fx ** 2)
    radius[0, 0] = 1.0 / size
    spectrum = np.fft.fft2(white) / radius ** beta
    field = np.real(np.fft.ifft2(spectrum))
    return (field - field.min()) / (field.max() - field.min() + 1e-12)


def make_image(rng: np.random.Generator, size: int) -> np.ndarray:
    beta = rng.uniform(0.9, 1.4)
    img = natural_field(rng, size, beta)
    # soft illumination gradient
    gy, gx = np.mgrid[0:size, 0:size] / size
    a, b = rng.uniform(-0.3, 0.3, size=2)
    img = img * (1.0 - 0.3) + 0.3 * (0.5 + a * (gx - 0.5) + b * (gy - 0.5))
    # a couple of smooth blobs for object-like structure
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.15, 0.85, size=2) * size
        sigma = rng.uniform(0.05, 0.18) * size
        blob = np.exp(-(((gy * size - cy) ** 2 + (gx * size - cx) ** 2)
                        / (2 * sigma ** 2)))
        img += rng.uniform(-0.35, 0.35) * blob
    # fine texture so local contrast never collapses
    img += 0.02 * rng.standard_normal((size, size))
    img = (img - img.min()) / (img.max() - img.min() + 1e-12)
    return np.clip(img * 255.0, 0, 255).astype(np.uint8)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240117)
    corpus = []
    for i in range(25):
        img = make_image(rng, 384)
        Image.fromarray(img, "L").save(DATA / f"pristine_{i:02d}.png")
        corpus.append(img)
    for i in range(5):
        img = make_image(rng, 512)
        Image.fromarray(img, "L").save(DATA / f"photo_{i}.png")
    model = fit_pristine_model(corpus)
    model.save(DATA / "niqe_pristine.json")
    print(f"wrote 25 corpus images, 5 photos, model digest {model.corpus_digest}")


if __name__ == "__main__":
    main()
