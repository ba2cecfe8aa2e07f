"""Native no-reference perceptual quality metric (NIQE family).

Feature recipe: mean-subtracted contrast-normalized (MSCN) coefficients with
a 7x7 Gaussian window (sigma 7/6, reflective borders, C = 1); per 96-pixel
patch, a generalized Gaussian fit on the MSCN field plus asymmetric
generalized Gaussian fits on the four pairwise-product orientations, at the
native scale and a 2x downsampled scale (36 features total). Quality is the
Mahalanobis-style distance between a pristine multivariate Gaussian model and
the test image's patch statistics. Exact parity with the original MATLAB
release is not claimed; acceptance here is property-based.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage, special

from .errors import CorpusTooSmall, DegenerateSamples, ImageTooSmall

PATCH_SIZE = 96
SHARPNESS_FRACTION = 0.75
WINDOW_HALF = 3            # 7x7 window
WINDOW_SIGMA = 7.0 / 6.0
FEATURE_DIM = 36

# alpha grid for the generalized-Gaussian ratio inversion
_ALPHA_GRID = np.arange(0.2, 10.0, 0.001)
_g1 = special.gamma(1.0 / _ALPHA_GRID)
_g2 = special.gamma(2.0 / _ALPHA_GRID)
_g3 = special.gamma(3.0 / _ALPHA_GRID)
_GGD_RATIO = _g2 ** 2 / (_g1 * _g3)          # rho(alpha) for the symmetric fit
_AGGD_RATIO = _GGD_RATIO                     # same ratio function, moment-matched


def _gaussian_window(half: int = WINDOW_HALF, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


_WINDOW = _gaussian_window()


def to_grayscale(image) -> np.ndarray:
    """Accept HxW float/uint8 arrays, RGB(A) arrays, or PIL images; return
    float64 grayscale in [0, 255]."""
    if isinstance(image, Image.Image):
        image = np.asarray(image.convert("L"), dtype=np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        rgb = arr[:, :, :3]
        arr = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return arr


def compute_mscn(image: np.ndarray, return_sigma: bool = False):
    """(I - mu) / (sigma + 1) with Gaussian-weighted local moments."""
    img = to_grayscale(image)
    if min(img.shape) < 32:
        raise ImageTooSmall(f"{img.shape} below 32x32")
    mu = ndimage.correlate1d(img, _WINDOW, axis=0, mode="reflect")
    mu = ndimage.correlate1d(mu, _WINDOW, axis=1, mode="reflect")
    mu2 = ndimage.correlate1d(img * img, _WINDOW, axis=0, mode="reflect")
    mu2 = ndimage.correlate1d(mu2, _WINDOW, axis=1, mode="reflect")
    sigma = np.sqrt(np.abs(mu2 - mu * mu))
    mscn = (img - mu) / (sigma + 1.0)
    if return_sigma:
        return mscn, sigma
    return mscn


def fit_ggd(samples: np.ndarray) -> tuple[float, float]:
    """Symmetric generalized Gaussian: returns (shape alpha, variance)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    var = float(np.var(x))
    mean_abs = float(np.mean(np.abs(x)))
    if var == 0.0 or mean_abs == 0.0:
        return 10.0, var
    rho = mean_abs ** 2 / var
    alpha = float(_ALPHA_GRID[np.argmin((_GGD_RATIO - rho) ** 2)])
    return alpha, var


def fit_aggd(samples: np.ndarray) -> tuple[float, float, float, float]:
    """Asymmetric generalized Gaussian via moment matching.

    Returns (shape alpha, mean eta, left variance, right variance).
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 100:
        raise DegenerateSamples(f"need >= 100 samples, got {x.size}")
    if np.all(x == x[0]):
        raise DegenerateSamples("all samples equal")
    left = x[x < 0]
    right = x[x >= 0]
    left_std = np.sqrt(np.mean(left ** 2)) if left.size else 0.0
    right_std = np.sqrt(np.mean(right ** 2)) if right.size else 0.0
    gamma_hat = left_std / max(right_std, 1e-12)
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x ** 2)
    rhat_norm = r_hat * ((gamma_hat ** 3 + 1) * (gamma_hat + 1)) / \
        ((gamma_hat ** 2 + 1) ** 2)
    alpha = float(_ALPHA_GRID[np.argmin((_AGGD_RATIO - rhat_norm) ** 2)])
    g1 = special.gamma(1.0 / alpha)
    g2 = special.gamma(2.0 / alpha)
    bl = left_std * np.sqrt(g1 / _safe_gamma3(alpha))
    br = right_std * np.sqrt(g1 / _safe_gamma3(alpha))
    eta = (br - bl) * (g2 / g1)
    return alpha, float(eta), float(left_std ** 2), float(right_std ** 2)


def _safe_gamma3(alpha: float) -> float:
    return float(special.gamma(3.0 / alpha))


def _paired_products(mscn: np.ndarray):
    h = mscn[:, :-1] * mscn[:, 1:]
    v = mscn[:-1, :] * mscn[1:, :]
    d1 = mscn[:-1, :-1] * mscn[1:, 1:]
    d2 = mscn[:-1, 1:] * mscn[1:, :-1]
    return h, v, d1, d2


def _aggd_or_flat(samples: np.ndarray) -> tuple[float, float, float, float]:
    # synthetic panels can contain perfectly flat patches; treat those as the
    # degenerate limit instead of propagating DegenerateSamples from scoring
    try:
        return fit_aggd(samples)
    except DegenerateSamples:
        return 10.0, 0.0, 0.0, 0.0


def _subband_features(mscn: np.ndarray) -> np.ndarray:
    alpha, var = fit_ggd(mscn)
    h, v, d1, d2 = _paired_products(mscn)
    feats = [alpha, var]
    feats.extend(_aggd_or_flat(h))
    feats.extend(_aggd_or_flat(v))
    # a horizontal (or vertical) mirror swaps the two diagonal orientations, so
    # emit them in a canonical order to keep the features orientation-paired
    da, db = sorted((_aggd_or_flat(d1), _aggd_or_flat(d2)))
    feats.extend(da)
    feats.extend(db)
    return np.asarray(feats)


def _patch_grid(shape: tuple[int, int], patch: int):
    # centered grid: leftover margin split evenly so the tiling (and thus the
    # score) is mirror-symmetric up to the D1/D2 orientation pairing
    h, w = shape
    oy = ((h % patch) // 2) & ~1       # even offsets keep 2x downsample aligned
    ox = ((w % patch) // 2) & ~1
    for y in range(oy, h - patch + 1, patch):
        for x in range(ox, w - patch + 1, patch):
            yield y, x


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    pil = Image.fromarray(img.astype(np.float32), mode="F")
    return np.asarray(pil.resize((max(1, w // 2), max(1, h // 2)),
                                 Image.BICUBIC), dtype=np.float64)


def _image_patch_features(img: np.ndarray, patch_size: int,
                          sharpness_fraction: float) -> np.ndarray:
    """Per-patch 36-vectors; at fraction < 1 only the sharpest patches (by
    mean local sigma) are kept, as the pristine fit requires."""
    mscn, sigma = compute_mscn(img, return_sigma=True)
    img2 = _downsample(to_grayscale(img))
    mscn2 = compute_mscn(img2)
    half = patch_size // 2

    cells = list(_patch_grid(mscn.shape, patch_size))
    if not cells:
        raise ImageTooSmall(f"image {img.shape} has no {patch_size}-pixel patch")
    sharpness = np.array([sigma[y:y + patch_size, x:x + patch_size].mean()
                          for y, x in cells])
    keep = len(cells)
    if sharpness_fraction < 1.0:
        keep = max(1, int(np.ceil(sharpness_fraction * len(cells))))
    order = np.argsort(-sharpness, kind="stable")[:keep]

    feats = []
    for idx in sorted(order):
        y, x = cells[idx]
        f1 = _subband_features(mscn[y:y + patch_size, x:x + patch_size])
        f2 = _subband_features(mscn2[y // 2:y // 2 + half, x // 2:x // 2 + half])
        feats.append(np.concatenate([f1, f2]))
    return np.vstack(feats)


def extract_niqe_features(image) -> np.ndarray:
    """36-dimensional feature vector (mean over all patches, both scales)."""
    img = to_grayscale(image)
    if min(img.shape) < PATCH_SIZE:
        raise ImageTooSmall(f"{img.shape} below {PATCH_SIZE} pixels")
    return _image_patch_features(img, PATCH_SIZE, 1.0).mean(axis=0)


@dataclass
class PristineModel:
    mean: np.ndarray                  # 36-vector
    covariance: np.ndarray            # 36x36
    patch_size: int = PATCH_SIZE
    sharpness_fraction: float = SHARPNESS_FRACTION
    corpus_digest: str = ""

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.mean.shape != (FEATURE_DIM,) or \
                self.covariance.shape != (FEATURE_DIM, FEATURE_DIM):
            raise ValueError("model dimensions must be 36 / 36x36")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-9):
            raise ValueError("covariance not symmetric")
        eigvals = np.linalg.eigvalsh(self.covariance)
        if eigvals.min() < -1e-9:
            raise ValueError("covariance not positive semi-definite")

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "patch_size": self.patch_size,
            "sharpness_fraction": self.sharpness_fraction,
            "corpus_digest": self.corpus_digest,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "PristineModel":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def fit_pristine_model(corpus, patch_size: int = PATCH_SIZE,
                       sharpness_fraction: float = SHARPNESS_FRACTION) -> PristineModel:
    """Fit the natural-image Gaussian from a corpus of images (arrays or PIL)."""
    images = [to_grayscale(img) for img in corpus]
    if len(images) < 10:
        raise CorpusTooSmall(f"need >= 10 images, got {len(images)}")
    digest = hashlib.sha256()
    all_feats = []
    for img in images:
        feats = _image_patch_features(img, patch_size, sharpness_fraction)
        if feats.shape[0] < 2:
            raise CorpusTooSmall("every corpus image must yield >= 2 patches")
        all_feats.append(feats)
        digest.update(np.ascontiguousarray(img).tobytes())
    stacked = np.vstack(all_feats)
    mean = stacked.mean(axis=0)
    cov = np.cov(stacked.T)
    cov = (cov + cov.T) / 2.0
    return PristineModel(mean=mean, covariance=cov, patch_size=patch_size,
                         sharpness_fraction=sharpness_fraction,
                         corpus_digest=digest.hexdigest()[:16])


def niqe_score(image, model: PristineModel) -> float:
    """Distance of the test image's patch statistics from the pristine model;
    lower is better."""
    img = to_grayscale(image)
    if min(img.shape) < model.patch_size:
        raise ImageTooSmall(f"{img.shape} below patch size {model.patch_size}")
    feats = _image_patch_features(img, model.patch_size, 1.0)
    sample_mean = feats.mean(axis=0)
    sample_cov = np.cov(feats.T) if feats.shape[0] > 1 else np.zeros(
        (FEATURE_DIM, FEATURE_DIM))
    diff = model.mean - sample_mean
    pooled = (model.covariance + sample_cov) / 2.0
    pinv = np.linalg.pinv(pooled)
    return float(np.sqrt(max(0.0, diff @ pinv @ diff)))
