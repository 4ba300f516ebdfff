"""Loss and image-quality calculus as pure functions.

All metrics treat images as unit-range fields and average uniformly over
pixels and channels. The perceptual term is pluggable: any callable that
maps an Image to a list of feature planes can stand in for the built-in
average-pool pyramid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ContractError, ShapeError
from .imaging import Image

PSNR_CAP_DB = 99.0

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def _pair(a: Image, b: Image):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"image pair disagrees in shape: {a.data.shape} vs {b.data.shape}")
    return a.data.astype(np.float64), b.data.astype(np.float64)


def l1(a: Image, b: Image) -> float:
    """Mean absolute difference over all pixels and channels."""
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)))


def rmse(a: Image, b: Image) -> float:
    x, y = _pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def psnr(a: Image, b: Image) -> float:
    """-20*log10(rmse) for unit-range images, capped at 99 dB when exact."""
    return psnr_from_rmse(rmse(a, b))


def psnr_from_rmse(r: float) -> float:
    if r <= 0.0:
        return PSNR_CAP_DB
    return min(-20.0 * math.log10(r), PSNR_CAP_DB)


def _gaussian_window(size=_SSIM_WIN, sigma=_SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _valid_corr(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    kh, kw = window.shape
    full = ndimage.correlate(plane, window, mode="nearest")
    return full[kh // 2 : plane.shape[0] - (kh - 1 - kh // 2),
                kw // 2 : plane.shape[1] - (kw - 1 - kw // 2)]


def ssim(a: Image, b: Image) -> float:
    """Windowed structural similarity: 11x11 Gaussian window (sigma 1.5),
    stabilizers (0.01)^2 and (0.03)^2 on unit dynamic range, averaged over
    all fully contained windows and channels. Images smaller than the
    window fall back to a single uniform window spanning the image."""
    x, y = _pair(a, b)
    h, w = x.shape[:2]
    if min(h, w) < _SSIM_WIN:
        window = np.full((h, w), 1.0 / (h * w))
    else:
        window = _gaussian_window()

    vals = []
    for c in range(x.shape[2]):
        xc, yc = x[:, :, c], y[:, :, c]
        mu_x = _valid_corr(xc, window)
        mu_y = _valid_corr(yc, window)
        e_xx = _valid_corr(xc * xc, window)
        e_yy = _valid_corr(yc * yc, window)
        e_xy = _valid_corr(xc * yc, window)
        var_x = e_xx - mu_x * mu_x
        var_y = e_yy - mu_y * mu_y
        cov = e_xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
        vals.append(num / den)
    return float(np.mean(vals))


def grad_loss(a: Image, b: Image) -> float:
    """Mean absolute difference of Sobel x and y responses (per channel,
    edge-replicated borders)."""
    x, y = _pair(a, b)
    diffs = []
    for c in range(x.shape[2]):
        for k in (_SOBEL_X, _SOBEL_Y):
            gx = ndimage.correlate(x[:, :, c], k, mode="nearest")
            gy = ndimage.correlate(y[:, :, c], k, mode="nearest")
            diffs.append(np.abs(gx - gy))
    return float(np.mean(diffs))


def _block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    h, w = x.shape[:2]
    hc, wc = (h // factor) * factor, (w // factor) * factor
    if hc == 0 or wc == 0:
        return x.mean(axis=(0, 1), keepdims=True)
    x = x[:hc, :wc]
    return x.reshape(hc // factor, factor, wc // factor, factor, -1).mean(axis=(1, 3))


def pyramid_extractor(img: Image) -> list:
    """Built-in feature extractor: average-pool pyramid at factors 2, 4, 8.

    Needs no pretrained weights; its mean-pooled levels forgive small
    translations that pixel losses punish."""
    x = img.data.astype(np.float64)
    return [_block_mean(x, f) for f in (2, 4, 8)]


def perceptual_loss(a: Image, b: Image, extractor=None) -> float:
    """Sum over feature levels of the mean absolute feature difference."""
    extractor = extractor or pyramid_extractor
    fa, fb = extractor(a), extractor(b)
    if len(fa) != len(fb):
        raise ContractError(
            f"extractor level counts differ: {len(fa)} vs {len(fb)}"
        )
    total = 0.0
    for la, lb in zip(fa, fb):
        la, lb = np.asarray(la), np.asarray(lb)
        if la.shape != lb.shape:
            raise ContractError("extractor level shapes differ between operands")
        total += float(np.mean(np.abs(la - lb)))
    return total


@dataclass(frozen=True)
class LossWeights:
    """Multi-task weights. The composite weighting is fixed; the numbers
    are configuration with these defaults."""

    tactile: float = 1.0
    vision: float = 1.0
    grad: float = 0.5
    ssim: float = 0.2
    perceptual: float = 0.1

    def __post_init__(self):
        for name in ("tactile", "vision", "grad", "ssim", "perceptual"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")


def stage_loss(pred_v: Image, gt_v: Image, pred_t: Image, gt_t: Image,
               stage: str, weights: LossWeights = LossWeights(), extractor=None):
    """Composite training objective for one stage.

    stage "sim": vision is plain L1; tactile is L1 plus weighted Sobel
    gradient loss. stage "real" additionally penalizes perceptual distance
    on vision, and structural (1 - SSIM) plus perceptual distance on
    tactile. Returns (total, per-term breakdown)."""
    if stage not in ("sim", "real"):
        raise ConfigError(f"unknown stage {stage!r} (expected 'sim' or 'real')")
    w = weights
    terms = {}

    terms["l1_v"] = l1(pred_v, gt_v)
    loss_v = terms["l1_v"]
    terms["l1_t"] = l1(pred_t, gt_t)
    terms["grad_t"] = grad_loss(pred_t, gt_t)
    loss_t = terms["l1_t"] + w.grad * terms["grad_t"]

    if stage == "real":
        terms["perc_v"] = perceptual_loss(pred_v, gt_v, extractor)
        loss_v += w.perceptual * terms["perc_v"]
        terms["ssim_t"] = 1.0 - ssim(pred_t, gt_t)
        terms["perc_t"] = perceptual_loss(pred_t, gt_t, extractor)
        loss_t += w.ssim * terms["ssim_t"] + w.perceptual * terms["perc_t"]

    terms["loss_v"] = loss_v
    terms["loss_t"] = loss_t
    total = w.tactile * loss_t + w.vision * loss_v
    terms["total"] = total
    return total, terms


@dataclass(frozen=True)
class ScoreWeights:
    ts: float = 1.0
    tl: float = 0.8
    vs: float = 0.5
    vl: float = 0.4


def selection_score(ssim_t: float, lpips_t: float, ssim_v: float, lpips_v: float,
                    weights: ScoreWeights = ScoreWeights()) -> float:
    """Model-ranking score: rewards structural similarity and penalizes
    perceptual distance, tactile terms weighted above vision."""
    w = weights
    return w.ts * ssim_t - w.tl * lpips_t + w.vs * ssim_v - w.vl * lpips_v


@dataclass
class MetricsReport:
    """Per-modality quality summary; lpips fields stay None unless supplied
    externally, pseudo_lpips fields hold the built-in extractor's distance
    when explicitly requested."""

    rmse_t: float
    one_minus_ssim_t: float
    psnr_t: float
    rmse_v: float
    one_minus_ssim_v: float
    psnr_v: float
    lpips_t: float | None = None
    lpips_v: float | None = None
    pseudo_lpips_t: float | None = None
    pseudo_lpips_v: float | None = None
    score_s: float | None = None

    _KEYS = (
        "rmse_t", "one_minus_ssim_t", "lpips_t", "psnr_t",
        "rmse_v", "one_minus_ssim_v", "lpips_v", "psnr_v",
        "pseudo_lpips_t", "pseudo_lpips_v", "score_s",
    )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self._KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d.get(k) for k in cls._KEYS})


def compute_report(pred_v: Image, gt_v: Image, pred_t: Image, gt_t: Image,
                   lpips_t: float | None = None, lpips_v: float | None = None,
                   pseudo_lpips: bool = False,
                   score_weights: ScoreWeights = ScoreWeights()) -> MetricsReport:
    """Evaluate both modalities; the score is filled in only when real
    LPIPS values are available for both."""
    r_t, r_v = rmse(pred_t, gt_t), rmse(pred_v, gt_v)
    s_t, s_v = ssim(pred_t, gt_t), ssim(pred_v, gt_v)
    rep = MetricsReport(
        rmse_t=r_t,
        one_minus_ssim_t=1.0 - s_t,
        psnr_t=psnr_from_rmse(r_t),
        rmse_v=r_v,
        one_minus_ssim_v=1.0 - s_v,
        psnr_v=psnr_from_rmse(r_v),
        lpips_t=lpips_t,
        lpips_v=lpips_v,
    )
    if pseudo_lpips:
        rep.pseudo_lpips_t = perceptual_loss(pred_t, gt_t)
        rep.pseudo_lpips_v = perceptual_loss(pred_v, gt_v)
    if lpips_t is not None and lpips_v is not None:
        rep.score_s = selection_score(s_t, lpips_t, s_v, lpips_v, score_weights)
    return rep
