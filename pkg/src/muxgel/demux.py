"""Training-free demultiplexer: reconstructs full-field vision and tactile
images from a multiplexed observation by normalized-convolution inpainting.

Three modes mirror the reconstruction variants of the learned system:
"si" uses only the multiplexed image, "di-abst" adds the reference image
and inpaints the tactile field absolutely, "di-rest" inpaints the sparse
contact residual and adds it back onto the non-contact tactile background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ContractError, ShapeError
from .imaging import Image, Mask
from .pipeline import straight_mask

DEMUX_MODES = ("si", "di-abst", "di-rest")
MASK_SOURCES = ("nominal", "provided")


@dataclass(frozen=True)
class SparseField:
    """Image samples valid only where the mask is 1."""

    values: Image
    validity: Mask

    def __post_init__(self):
        if (self.values.height, self.values.width) != (
            self.validity.height,
            self.validity.width,
        ):
            raise ShapeError("sparse values and validity disagree in size")


def split_by_mask(i_mux: Image, m: Mask):
    """Partition the multiplexed image into (tactile, vision) sparse fields.

    Recombining the two through the same mask reproduces the input exactly.
    """
    if (i_mux.height, i_mux.width) != (m.height, m.width):
        raise ShapeError("multiplexed image and mask disagree in size")
    if not m.is_binary:
        raise ContractError("split mask must be binary")
    return SparseField(i_mux, m), SparseField(i_mux, m.complement())


def _plane_fit(vals, pin, height, width):
    """Least-squares plane through the valid samples, per channel.

    Detrending around the convolution keeps linear fields exact at image
    borders, where a plain windowed average flattens them."""
    ys, xs = np.nonzero(pin)
    a = np.column_stack([xs / max(width - 1, 1), ys / max(height - 1, 1),
                         np.ones(len(xs))])
    coeffs, *_ = np.linalg.lstsq(a, vals[pin], rcond=None)
    gx = np.arange(width) / max(width - 1, 1)
    gy = np.arange(height) / max(height - 1, 1)
    plane = (coeffs[0][None, None, :] * gx[None, :, None]
             + coeffs[1][None, None, :] * gy[:, None, None]
             + coeffs[2][None, None, :])
    return plane


def inpaint_nc(sparse: SparseField, kernel_sigma: float, iterations: int = 8) -> Image:
    """Fill the invalid region by iterated normalized convolution.

    A least-squares plane through the valid samples is removed first and
    restored afterwards. Each pass Gaussian-blurs estimate*confidence and
    confidence separately and divides; pixels the kernel has reached join
    the confident set, so the fill front advances one kernel reach per
    pass. Known pixels are pinned back after every pass, which leaves a
    fully valid field untouched and makes the operation idempotent on it.
    """
    if kernel_sigma <= 0:
        raise ConfigError("inpaint kernel sigma must be > 0")
    if iterations < 1:
        raise ConfigError("inpaint iterations must be >= 1")
    known = sparse.validity.data.astype(np.float64)
    if known.max() == 0.0:
        raise ContractError("cannot inpaint a field with no valid pixels")
    vals = sparse.values.data.astype(np.float64)
    pin = sparse.validity.data == 1.0

    plane = _plane_fit(vals, pin, sparse.values.height, sparse.values.width)
    resid = vals - plane

    sig = (kernel_sigma, kernel_sigma, 0)
    est = resid * known[:, :, None]
    conf = known
    for _ in range(iterations):
        num = gaussian_filter(est * conf[:, :, None], sig, mode="nearest")
        den = gaussian_filter(conf, kernel_sigma, mode="nearest")
        reached = den > 1e-12
        filled = num / np.maximum(den, 1e-12)[:, :, None]
        est = np.where(reached[:, :, None], filled, est)
        conf = reached.astype(np.float64)
        est[pin] = resid[pin]

    out = est + plane
    out[pin] = vals[pin]
    return Image(out.astype(np.float32), signed=sparse.values.signed)


@dataclass(frozen=True)
class DemuxResult:
    vision: Image
    tactile: Image
    residual: Image | None  # only the residual mode produces one


def _resolve_mask(i_mux, grid, mask_source, true_mask):
    if mask_source not in MASK_SOURCES:
        raise ConfigError(f"mask source {mask_source!r} not in {MASK_SOURCES}")
    if mask_source == "provided":
        if true_mask is None:
            raise ConfigError("mask_source 'provided' needs the true multiplexing mask")
        return true_mask
    return straight_mask(grid, i_mux.width, i_mux.height)


def demux(
    i_mux: Image,
    mode: str,
    grid: int,
    i_ref: Image | None = None,
    tactile_background: Image | None = None,
    true_mask: Mask | None = None,
    mask_source: str = "nominal",
    sigma: float | None = None,
    iterations: int = 8,
) -> DemuxResult:
    """Reconstruct (vision, tactile, residual) from one multiplexed sample.

    Pixels native to a modality are pinned to the multiplexed observation,
    so reconstructions are exact wherever the mask attribution is correct.
    """
    if mode not in DEMUX_MODES:
        raise ConfigError(f"unknown demux mode {mode!r} (expected one of {DEMUX_MODES})")
    if mode == "si" and i_ref is not None:
        raise ConfigError("mode 'si' takes no reference image")
    if mode in ("di-abst", "di-rest") and i_ref is None:
        raise ConfigError(f"mode {mode!r} needs the reference image")
    if mode == "di-rest" and tactile_background is None:
        raise ConfigError("mode 'di-rest' needs the non-contact tactile background")

    m = _resolve_mask(i_mux, grid, mask_source, true_mask)
    if sigma is None:
        sigma = min(i_mux.width, i_mux.height) / grid / 2.0
    tac_sparse, vis_sparse = split_by_mask(i_mux, m)
    tac_pin = m.data == 1.0
    vis_pin = ~tac_pin

    vision = inpaint_nc(vis_sparse, sigma, iterations)

    residual = None
    if mode == "di-rest":
        obs = Image(i_mux.data - i_ref.data, signed=True)
        residual = inpaint_nc(SparseField(obs, m), sigma, iterations)
        tac = np.clip(tactile_background.data + residual.data, 0.0, 1.0)
        tac[tac_pin] = i_mux.data[tac_pin]
        tactile = Image(tac.astype(np.float32))
    else:
        tactile = inpaint_nc(tac_sparse, sigma, iterations)
        tac = tactile.data.copy()
        tac[tac_pin] = i_mux.data[tac_pin]
        tactile = Image(tac)

    vis = vision.data.copy()
    vis[vis_pin] = i_mux.data[vis_pin]
    vision = Image(vis)

    return DemuxResult(vision=vision, tactile=tactile, residual=residual)
