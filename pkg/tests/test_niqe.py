"""No-reference quality metric: MSCN, GGD/AGGD fits, pristine model, scoring."""

import time

import numpy as np
import pytest
from scipy import ndimage

from script2board.errors import CorpusTooSmall, DegenerateSamples, ImageTooSmall
from script2board.niqe import (
    FEATURE_DIM,
    PristineModel,
    WINDOW_SIGMA,
    compute_mscn,
    extract_niqe_features,
    fit_aggd,
    fit_ggd,
    fit_pristine_model,
    niqe_score,
)
from script2board.pipeline import default_pristine_model

from conftest import DATA

PHOTO_DIR = DATA.parent.parent / "src" / "script2board" / "data"


def photos():
    from PIL import Image
    return [np.asarray(Image.open(PHOTO_DIR / f"photo_{i}.png"),
                       dtype=np.float64) for i in range(5)]


def ggd_samples(alpha, n, rng, scale=1.0):
    """Exact generalized-Gaussian sampler: |X| = scale * G^(1/alpha) with
    G ~ Gamma(1/alpha, 1), sign uniform."""
    g = rng.gamma(1.0 / alpha, 1.0, size=n)
    signs = rng.choice([-1.0, 1.0], size=n)
    return signs * scale * g ** (1.0 / alpha)


# ---------------------------------------------------------------------------
# MSCN

def test_mscn_constant_image_is_zero():
    field = compute_mscn(np.full((64, 64), 137.0))
    assert np.allclose(field, 0.0)


def test_mscn_rejects_small_images():
    with pytest.raises(ImageTooSmall):
        compute_mscn(np.zeros((16, 64)))


def test_mscn_mean_near_zero_on_photos():
    for img in photos():
        assert -0.1 < compute_mscn(img).mean() < 0.1


def test_mscn_checkerboard_closed_form():
    """On an ideal checkerboard the local stats have a closed form: with the
    alternating filter sum s, sigma = d*sqrt(1 - s^4) and the coefficients
    are +-d(1 - s^2)/(sigma + 1)."""
    y, x = np.mgrid[0:64, 0:64]
    board = 255.0 * ((x + y) % 2)
    k = np.arange(-3, 4, dtype=np.float64)
    w = np.exp(-0.5 * (k / WINDOW_SIGMA) ** 2)
    w /= w.sum()
    s = float((w * (-1.0) ** np.abs(k)).sum())
    d = 127.5
    expected = d * (1 - s ** 2) / (d * np.sqrt(1 - s ** 4) + 1.0)

    field = compute_mscn(board)
    interior = field[8:-8, 8:-8]
    parity = (-1.0) ** ((x + y) % 2)[8:-8, 8:-8] * -1.0  # black squares first
    assert np.all(np.abs(interior) > 0.5)
    assert np.allclose(np.abs(interior), expected, atol=1e-6)
    assert np.allclose(np.sign(interior), parity)


# ---------------------------------------------------------------------------
# distribution fits

def test_ggd_gaussian_shape():
    rng = np.random.default_rng(0)
    alpha, var = fit_ggd(rng.normal(0, 2.0, 100_000))
    assert abs(alpha - 2.0) < 0.2
    assert abs(var - 4.0) < 0.2


def test_aggd_recovery_grid():
    """Shape recovered within 10% across the family; runtime bounded."""
    rng = np.random.default_rng(42)
    start = time.monotonic()
    for target in (0.5, 1.0, 2.0, 4.0):
        alpha, eta, lv, rv = fit_aggd(ggd_samples(target, 100_000, rng))
        assert abs(alpha - target) / target < 0.10, (target, alpha)
        assert abs(eta) < 0.1
    assert time.monotonic() - start < 5.0


def test_aggd_gaussian_case():
    rng = np.random.default_rng(7)
    alpha, _, lv, rv = fit_aggd(rng.normal(0, 1, 100_000))
    assert abs(alpha - 2.0) <= 0.2
    assert abs(lv - rv) < 0.1


def test_aggd_laplacian_case():
    rng = np.random.default_rng(8)
    alpha, _, _, _ = fit_aggd(rng.laplace(0, 1, 100_000))
    assert abs(alpha - 1.0) <= 0.15


def test_aggd_symmetric_input_zero_eta():
    x = np.linspace(0.01, 3.0, 5_000)
    _, eta, lv, rv = fit_aggd(np.concatenate([x, -x]))
    assert abs(eta) < 1e-6
    assert abs(lv - rv) < 1e-9


def test_aggd_degenerate_inputs():
    with pytest.raises(DegenerateSamples):
        fit_aggd(np.ones(50))
    with pytest.raises(DegenerateSamples):
        fit_aggd(np.full(500, 3.3))


# ---------------------------------------------------------------------------
# features

def test_feature_vector_length_and_determinism():
    img = photos()[0]
    f = extract_niqe_features(img)
    assert f.shape == (FEATURE_DIM,)
    assert np.array_equal(f, extract_niqe_features(img))


def test_feature_distance_noise_vs_photo():
    rng = np.random.default_rng(3)
    noise = rng.uniform(0, 255, (512, 512))
    dist = np.linalg.norm(extract_niqe_features(noise)
                          - extract_niqe_features(photos()[0]))
    assert dist > 1.0


def test_features_reject_small_images():
    with pytest.raises(ImageTooSmall):
        extract_niqe_features(np.zeros((64, 64)))


# ---------------------------------------------------------------------------
# pristine model

def test_identical_corpus_zero_covariance():
    # constant images: every patch yields the same degenerate feature vector,
    # so the fitted covariance is exactly zero
    img = np.full((192, 192), 99.0)
    model = fit_pristine_model([img] * 10)
    assert np.allclose(model.covariance, 0.0, atol=1e-12)


def test_corpus_too_small():
    with pytest.raises(CorpusTooSmall):
        fit_pristine_model(photos())


def test_sharpness_fraction_one_keeps_all_patches():
    from script2board.niqe import _image_patch_features
    img = photos()[0]
    all_feats = _image_patch_features(img, 96, 1.0)
    kept = _image_patch_features(img, 96, 0.5)
    assert all_feats.shape[0] == 25          # centered 5x5 grid on 512px
    assert kept.shape[0] == 13               # ceil(0.5 * 25)


def test_shipped_model_sanity():
    model = default_pristine_model()
    assert model.mean.shape == (FEATURE_DIM,)
    assert np.all(np.isfinite(model.mean))
    assert np.allclose(model.covariance, model.covariance.T, atol=1e-9)
    assert np.linalg.cond(model.covariance) < 1e9
    assert model.corpus_digest


def test_model_roundtrip(tmp_path):
    model = default_pristine_model()
    path = tmp_path / "m.json"
    model.save(path)
    again = PristineModel.load(path)
    assert np.array_equal(model.mean, again.mean)
    assert np.array_equal(model.covariance, again.covariance)
    assert again.corpus_digest == model.corpus_digest


def test_model_rejects_bad_shapes():
    with pytest.raises(ValueError):
        PristineModel(mean=np.zeros(5), covariance=np.eye(5))
    bad = np.eye(FEATURE_DIM)
    bad[0, 1] = 0.5                      # asymmetric
    with pytest.raises(ValueError):
        PristineModel(mean=np.zeros(FEATURE_DIM), covariance=bad)


# ---------------------------------------------------------------------------
# scoring

def test_corpus_self_scores():
    from PIL import Image
    model = default_pristine_model()
    scores = []
    for i in range(25):
        img = np.asarray(Image.open(PHOTO_DIR / f"pristine_{i:02d}.png"),
                         dtype=np.float64)
        scores.append(niqe_score(img, model))
    cutoff = np.percentile(scores, 90)
    assert scores[0] <= cutoff
    assert np.mean(scores) < 20.0


def test_degradations_strictly_raise_score():
    model = default_pristine_model()
    rng = np.random.default_rng(5)
    for img in photos():
        base = niqe_score(img, model)
        blurred = niqe_score(ndimage.gaussian_filter(img, 3.0), model)
        noisy = niqe_score(np.clip(img + rng.normal(0, 25.5, img.shape),
                                   0, 255), model)
        assert blurred > base
        assert noisy > base


def test_score_flip_invariance():
    model = default_pristine_model()
    for img in photos():
        base = niqe_score(img, model)
        assert abs(niqe_score(img[:, ::-1], model) - base) <= 0.05
        assert abs(niqe_score(img[::-1, :], model) - base) <= 0.05


def test_score_small_image_rejected():
    model = default_pristine_model()
    with pytest.raises(ImageTooSmall):
        niqe_score(np.zeros((64, 64)), model)
