"""Scene compositing: background fusion, tactile residuals, correlated
color jitter, relighting, checkerboard multiplexing, and on-the-fly sample
synthesis.

Every random draw comes from a per-site deterministic stream keyed by the
sample seed, so a sample is a pure function of (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage

from .config import INDENTER_COLOR_PALETTE, GenConfig
from .errors import ConfigError, ShapeError
from .imaging import (
    ClipCounter,
    Image,
    Mask,
    clamp01,
    disk_blur,
    hadamard,
    mask_blend,
    mask_from_png,
    mask_to_png,
    read_muxf,
    read_png,
    write_muxf,
    write_png,
)
from .rng import site_stream
from .tactile import (
    HeightField,
    IndenterSpec,
    SensorGeometry,
    ShadowParams,
    cast_shadows,
    default_light_model,
    indenter_clearance,
    indenter_heightmap,
    light_map,
    press,
    radial_falloff,
    render_tactile,
    synth_calibration_table,
)

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


# --- correlated color jitter ------------------------------------------------


@dataclass(frozen=True)
class JitterParams:
    """One joint color perturbation, applied identically to every image of
    a sample (brightness, then contrast around 0.5, then saturation, then
    hue rotation)."""

    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue_deg: float = 0.0

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"jitter {name} must be > 0")
        if not -18.0 <= self.hue_deg <= 18.0:
            raise ConfigError("jitter hue shift must lie in [-18, 18] degrees")

    def to_dict(self) -> dict:
        return {
            "brightness": self.brightness,
            "contrast": self.contrast,
            "saturation": self.saturation,
            "hue_deg": self.hue_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JitterParams":
        return cls(**d)


def apply_jitter(params: JitterParams, img: Image) -> Image:
    """Identity parameters return the input bit-for-bit (each stage is
    skipped at its neutral value)."""
    x = img.data
    if params.brightness != 1.0:
        x = np.clip(x * np.float32(params.brightness), 0.0, 1.0)
    if params.contrast != 1.0:
        half = np.float32(0.5)
        x = np.clip((x - half) * np.float32(params.contrast) + half, 0.0, 1.0)
    if params.saturation != 1.0 and img.channels == 3:
        gray = (x @ _LUMA)[:, :, None]
        x = np.clip(gray + (x - gray) * np.float32(params.saturation), 0.0, 1.0)
    if params.hue_deg != 0.0 and img.channels == 3:
        hsv = rgb_to_hsv(x.astype(np.float64))
        hsv[..., 0] = (hsv[..., 0] + params.hue_deg / 360.0) % 1.0
        x = np.clip(hsv_to_rgb(hsv), 0.0, 1.0).astype(np.float32)
    return Image(x)


def correlated_jitter(params: JitterParams, images) -> list:
    """Apply the identical parameter set to every image, in fixed order."""
    if not images:
        raise ValueError("correlated_jitter needs at least one image")
    return [apply_jitter(params, im) for im in images]


def sample_jitter_params(cfg: GenConfig, rng) -> JitterParams:
    return JitterParams(
        brightness=float(rng.uniform(*cfg.jitter_brightness)),
        contrast=float(rng.uniform(*cfg.jitter_contrast)),
        saturation=float(rng.uniform(*cfg.jitter_saturation)),
        hue_deg=float(rng.uniform(*cfg.jitter_hue_deg)),
    )


# --- checkerboard masks -----------------------------------------------------


def wavy_boundary(p_base, amplitude, frequency, phase, t):
    """Sinusoidally displaced boundary position at normalized arclength t."""
    return p_base + amplitude * np.sin(2.0 * np.pi * frequency * np.asarray(t) + phase)


@dataclass(frozen=True)
class BoundaryWave:
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 5.0:
            raise ConfigError("boundary amplitude must lie in [0, 5] px")


@dataclass(frozen=True)
class WavySpec:
    """Concrete per-boundary wave parameters for an n x n checkerboard.

    h_waves displace the n-1 interior horizontal boundaries (as functions
    of column), v_waves the vertical ones (as functions of row)."""

    grid: int
    h_waves: tuple
    v_waves: tuple

    def __post_init__(self):
        if not 2 <= self.grid <= 8:
            raise ConfigError("wavy grid must lie in [2, 8]")
        if len(self.h_waves) != self.grid - 1 or len(self.v_waves) != self.grid - 1:
            raise ConfigError("need grid-1 waves per direction")

    @classmethod
    def straight(cls, grid: int) -> "WavySpec":
        flat = tuple(BoundaryWave() for _ in range(grid - 1))
        return cls(grid=grid, h_waves=flat, v_waves=flat)

    def to_dict(self) -> dict:
        pack = lambda ws: [[w.amplitude, w.frequency, w.phase] for w in ws]
        return {"grid": self.grid, "h_waves": pack(self.h_waves), "v_waves": pack(self.v_waves)}

    @classmethod
    def from_dict(cls, d: dict) -> "WavySpec":
        unpack = lambda rows: tuple(BoundaryWave(*r) for r in rows)
        return cls(grid=d["grid"], h_waves=unpack(d["h_waves"]), v_waves=unpack(d["v_waves"]))


def sample_wavy_spec(grid, rng, amplitude_range=(0.0, 5.0), frequencies=(1, 2, 3)) -> WavySpec:
    """Independent (amplitude, frequency, phase) per interior boundary."""
    freqs = tuple(frequencies)

    def draw():
        return BoundaryWave(
            amplitude=float(rng.uniform(*amplitude_range)),
            frequency=float(freqs[rng.integers(len(freqs))]),
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        )

    h = tuple(draw() for _ in range(grid - 1))
    v = tuple(draw() for _ in range(grid - 1))
    return WavySpec(grid=grid, h_waves=h, v_waves=v)


def _interior_edges(n_cells: int, size: int):
    """Nominal interior cell-edge positions: round(k * size / n)."""
    return [float(round(k * size / n_cells)) for k in range(1, n_cells)]


def _norm_grid(grid):
    if isinstance(grid, tuple):
        rows, cols = grid
    else:
        rows = cols = int(grid)
    if rows < 1 or cols < 1:
        raise ConfigError("grid must have at least one cell per axis")
    return rows, cols


def straight_mask(grid, width: int, height: int) -> Mask:
    """Axis-aligned checkerboard; the top-left cell is tactile (value 1)."""
    rows, cols = _norm_grid(grid)
    col_idx = np.zeros(width, dtype=np.int64)
    for e in _interior_edges(cols, width):
        col_idx += np.arange(width) >= e
    row_idx = np.zeros(height, dtype=np.int64)
    for e in _interior_edges(rows, height):
        row_idx += np.arange(height) >= e
    parity = (row_idx[:, None] + col_idx[None, :]) % 2
    return Mask((parity == 0).astype(np.float32))


def wavy_mask(spec: WavySpec, width: int, height: int) -> Mask:
    """Checkerboard whose interior boundaries are displaced by independent
    sinusoids; zero amplitudes reproduce straight_mask bit-for-bit."""
    n = spec.grid
    if min(width, height) / n < 4:
        raise ConfigError(f"grid {n} too fine for a {width}x{height} image (cell < 4 px)")
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    t_rows = (np.arange(height, dtype=np.float64) + 0.5) / height
    t_cols = (np.arange(width, dtype=np.float64) + 0.5) / width

    col_count = np.zeros((height, width), dtype=np.int64)
    for p_base, w in zip(_interior_edges(n, width), spec.v_waves):
        b = wavy_boundary(p_base, w.amplitude, w.frequency, w.phase, t_rows)
        col_count += xs[None, :] >= b[:, None]
    row_count = np.zeros((height, width), dtype=np.int64)
    for p_base, w in zip(_interior_edges(n, height), spec.h_waves):
        b = wavy_boundary(p_base, w.amplitude, w.frequency, w.phase, t_cols)
        row_count += ys[:, None] >= b[None, :]

    parity = (row_count + col_count) % 2
    return Mask((parity == 0).astype(np.float32))


# --- compositing steps ------------------------------------------------------


def background_mask(depth, intensity: Image, depth_threshold, intensity_threshold) -> Mask:
    """1 where the scene object is absent: far depth and dark foreground,
    cleaned up with a 3x3 morphological closing."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intensity.height, intensity.width):
        raise ShapeError("depth map and intensity image disagree in size")
    if intensity.channels == 3:
        lum = intensity.data @ _LUMA
    else:
        lum = intensity.data[:, :, 0]
    bg = (depth > depth_threshold) & (lum < intensity_threshold)
    padded = np.pad(bg, 2, mode="edge")
    st = np.ones((3, 3), dtype=bool)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, st), st)
    return Mask(closed[2:-2, 2:-2].astype(np.float32))


def compose_raw_vision(v_bg: Image, v_obj: Image, m_bg: Mask) -> Image:
    """Fuse the defocused background over the object render."""
    return mask_blend(m_bg, v_bg, v_obj)


def tactile_diff(t_raw: Image, t_org_bg: Image) -> Image:
    """Signed per-pixel difference from the no-contact tactile background."""
    if t_raw.data.shape != t_org_bg.data.shape:
        raise ShapeError("tactile difference operands disagree in shape")
    return Image(t_raw.data - t_org_bg.data, signed=True)


def residual_tactile(t_diff: Image, t_bg_jit: Image, counter: ClipCounter | None = None) -> Image:
    """Add the contact residual back onto a jittered background, clamped."""
    if t_diff.data.shape != t_bg_jit.data.shape:
        raise ShapeError("residual operands disagree in shape")
    return clamp01(Image(t_diff.data + t_bg_jit.data, signed=True), counter)


def relight(v_jit: Image, t_jit: Image, l_v: Image, m_c: Mask) -> Image:
    """Inside contact the vision image is gated by the tactile illumination
    field, outside by the pure-vision light map."""
    return mask_blend(m_c, hadamard(v_jit, t_jit), hadamard(v_jit, l_v))


def multiplex(m_wavy: Mask, t_jit: Image, v_relit: Image) -> Image:
    """Interleave tactile and relit vision through the (wavy) checkerboard."""
    return mask_blend(m_wavy, t_jit, v_relit)


def reference_image(m_stg: Mask, t_bg_jit: Image, l_v: Image) -> Image:
    """No-contact layout prior under the nominal straight checkerboard."""
    return mask_blend(m_stg, t_bg_jit, l_v)


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    contact_ratio: float


def contact_ratio_filter(m_c: Mask, threshold: float = 0.05) -> FilterDecision:
    """Accept a scene only if the contact area fraction exceeds threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError("contact threshold must lie strictly between 0 and 1")
    ratio = m_c.mean()
    return FilterDecision(accepted=ratio > threshold, contact_ratio=ratio)


# --- vision scene pieces ----------------------------------------------------


def procedural_background(width, height, rng, detail_cells=(3, 8), value_range=(0.05, 0.95)) -> Image:
    """Smooth low-frequency random color field."""
    n = int(rng.integers(detail_cells[0], detail_cells[1] + 1))
    coarse = rng.uniform(value_range[0], value_range[1], size=(n, n, 3))
    r_coords = np.linspace(0.0, n - 1.0, height)
    c_coords = np.linspace(0.0, n - 1.0, width)
    R, C = np.meshgrid(r_coords, c_coords, indexing="ij")
    out = np.empty((height, width, 3))
    for ch in range(3):
        out[:, :, ch] = ndimage.map_coordinates(coarse[:, :, ch], [R, C], order=3, mode="nearest")
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def _directory_background(path, width, height, rng) -> Image:
    from PIL import Image as PILImage

    files = sorted(
        p for p in Path(path).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if not files:
        raise ConfigError(f"background directory {path} holds no images")
    pick = files[int(rng.integers(len(files)))]
    pil = PILImage.open(pick).convert("RGB").resize((width, height), PILImage.BILINEAR)
    return Image(np.asarray(pil, dtype=np.float32) / 255.0)


def indenter_vision(spec: IndenterSpec, geom: SensorGeometry, color, far_mm, fade_mm):
    """(object render, sensor-facing depth map). The object shows its flat
    color, fading to black as its surface recedes from the gel plane."""
    clear = indenter_clearance(spec, geom, far_mm)
    closeness = np.clip(1.0 - clear / fade_mm, 0.0, 1.0)
    rgb = closeness[:, :, None] * np.asarray(color, dtype=np.float64)[None, None, :]
    return Image(np.clip(rgb, 0.0, 1.0).astype(np.float32)), clear


# --- full synthesis ---------------------------------------------------------


@dataclass(frozen=True)
class MuxSample:
    """One synthesized record plus the provenance needed to rebuild it."""

    i_mux: Image
    i_ref: Image
    target_vision: Image
    target_tactile: Image
    target_residual: Image
    t_bg_jit: Image
    m_c: Mask
    m_wavy: Mask
    m_stg: Mask
    seed: int
    grid: int
    indenter: IndenterSpec
    jitter: JitterParams
    wavy: WavySpec
    blur_radius: float
    contact_ratio: float

    def meta_dict(self) -> dict:
        return {
            "seed": self.seed,
            "grid": self.grid,
            "indenter": self.indenter.to_dict(),
            "jitter": self.jitter.to_dict(),
            "wavy": self.wavy.to_dict(),
            "blur_radius_px": self.blur_radius,
            "contact_ratio": self.contact_ratio,
        }


@dataclass(frozen=True)
class SynthesisResult:
    sample: MuxSample
    accepted: bool
    contact_ratio: float


@lru_cache(maxsize=8)
def render_assets(cfg: GenConfig) -> SimpleNamespace:
    """Per-config immutable scene assets: calibration table, light map,
    no-contact tactile background, falloff field."""
    geom = SensorGeometry(cfg.width_px, cfg.height_px, cfg.mm_per_px)
    lights = default_light_model()
    table = synth_calibration_table(lights, cfg.table_mag_bins, cfg.table_ang_bins)
    l_v = light_map(table.base_color, geom, cfg.vignette_edge, cfg.vignette_exponent)
    falloff = radial_falloff(geom, cfg.vignette_edge, cfg.vignette_exponent)
    falloff_img = Image(falloff.astype(np.float32)[:, :, None])
    flat = HeightField(np.zeros((geom.height_px, geom.width_px)), geom.mm_per_px)
    t_flat = render_tactile(flat, table)
    t_org_bg = hadamard(t_flat, falloff_img) if cfg.tactile_falloff else t_flat
    shadow = ShadowParams(cfg.shadow_march_px, cfg.shadow_factor, cfg.shadow_elevation_deg)
    return SimpleNamespace(
        geom=geom,
        lights=lights,
        table=table,
        l_v=l_v,
        falloff_img=falloff_img,
        t_org_bg=t_org_bg,
        shadow=shadow,
    )


def _draw_indenter(cfg: GenConfig, seed: int) -> IndenterSpec:
    rs = site_stream(seed, "indenter.shape")
    shape = cfg.shapes[int(rs.integers(len(cfg.shapes)))]
    rz = site_stream(seed, "indenter.size")
    kwargs = {}
    if shape == "sphere":
        kwargs["sphere_radius"] = float(rz.uniform(*cfg.sphere_radius_mm))
    elif shape == "edge":
        kwargs["edge_half_angle_deg"] = float(rz.uniform(*cfg.edge_half_angle_deg))
        kwargs["edge_length"] = float(rz.uniform(*cfg.edge_length_mm))
    elif shape == "square":
        kwargs["square_side"] = float(rz.uniform(*cfg.square_side_mm))
    else:
        outer = float(rz.uniform(*cfg.octagon_circumradius_mm))
        kwargs["circumradius"] = outer
        if shape == "hollow-octagon":
            kwargs["inner_circumradius"] = outer * float(rz.uniform(*cfg.hollow_inner_ratio))
    rp = site_stream(seed, "indenter.position")
    if cfg.position_mode == "uniform":
        pos = (float(rp.uniform(*cfg.position_box_mm)), float(rp.uniform(*cfg.position_box_mm)))
    else:
        pos = tuple(cfg.positions_mm[int(rp.integers(len(cfg.positions_mm)))])
    depth = float(site_stream(seed, "indenter.depth").uniform(*cfg.press_depth_mm))
    return IndenterSpec(shape=shape, press_depth=depth, position=pos, **kwargs)


def _draw_background(cfg: GenConfig, seed: int, geom: SensorGeometry) -> Image:
    rng = site_stream(seed, "background")
    if cfg.background_source == "constant":
        return Image.constant(geom.width_px, geom.height_px, cfg.background_value)
    if cfg.background_source == "directory":
        return _directory_background(cfg.background_path, geom.width_px, geom.height_px, rng)
    return procedural_background(
        geom.width_px, geom.height_px, rng,
        cfg.background_detail_cells, cfg.background_value_range,
    )


def build_sample(cfg: GenConfig, seed: int) -> MuxSample:
    """Run the full compositing chain for one seed, without the contact
    filter. Deterministic: identical (config, seed) give bit-identical
    samples."""
    a = render_assets(cfg)
    geom = a.geom

    ind = _draw_indenter(cfg, seed)
    hm = indenter_heightmap(ind, geom)
    m_c, deformed = press(hm, cfg.smoothing_sigma_mm)
    t_render = render_tactile(deformed, a.table)
    t_shadow = cast_shadows(t_render, deformed, m_c, a.lights, a.shadow)
    t_raw = hadamard(t_shadow, a.falloff_img) if cfg.tactile_falloff else t_shadow
    t_diff = tactile_diff(t_raw, a.t_org_bg)

    v_bg = _draw_background(cfg, seed, geom)
    blur_r = float(site_stream(seed, "blur.radius").uniform(*cfg.blur_radius_px))
    v_bg_blur = disk_blur(v_bg, blur_r)
    color = cfg.colors[int(site_stream(seed, "indenter.color").integers(len(cfg.colors)))]
    v_obj, depth_map = indenter_vision(
        ind, geom, INDENTER_COLOR_PALETTE[color], cfg.depth_far_mm,
        fade_mm=2.0 * cfg.depth_threshold_mm,
    )
    m_bg = background_mask(depth_map, v_obj, cfg.depth_threshold_mm, cfg.intensity_threshold)
    v_raw = compose_raw_vision(v_bg_blur, v_obj, m_bg)

    jp = sample_jitter_params(cfg, site_stream(seed, "jitter"))
    t_bg_jit, v_jit = correlated_jitter(jp, [a.t_org_bg, v_raw])
    t_jit = residual_tactile(t_diff, t_bg_jit)
    v_relit = relight(v_jit, t_jit, a.l_v, m_c)

    n = int(site_stream(seed, "grid").integers(cfg.grid[0], cfg.grid[1] + 1))
    wavy = sample_wavy_spec(
        n, site_stream(seed, "wavy"), cfg.wavy_amplitude_px, cfg.wavy_frequencies
    )
    m_wavy = wavy_mask(wavy, geom.width_px, geom.height_px)
    m_stg = straight_mask(n, geom.width_px, geom.height_px)

    i_mux = multiplex(m_wavy, t_jit, v_relit)
    i_ref = reference_image(m_stg, t_bg_jit, a.l_v)

    return MuxSample(
        i_mux=i_mux,
        i_ref=i_ref,
        target_vision=v_relit,
        target_tactile=t_jit,
        target_residual=t_diff,
        t_bg_jit=t_bg_jit,
        m_c=m_c,
        m_wavy=m_wavy,
        m_stg=m_stg,
        seed=int(seed),
        grid=n,
        indenter=ind,
        jitter=jp,
        wavy=wavy,
        blur_radius=blur_r,
        contact_ratio=m_c.mean(),
    )


def synthesize_sample(cfg: GenConfig, seed: int) -> SynthesisResult:
    """build_sample plus the contact-area acceptance filter. A rejection is
    a normal outcome, not an error; the built sample stays available for
    inspection."""
    sample = build_sample(cfg, seed)
    decision = contact_ratio_filter(sample.m_c, cfg.contact_threshold)
    return SynthesisResult(sample=sample, accepted=decision.accepted,
                           contact_ratio=decision.contact_ratio)


# --- sample directory layout -----------------------------------------------

SAMPLE_SUFFIXES = {
    "mux": "_mux.png",
    "ref": "_ref.png",
    "vis": "_vis.png",
    "tac": "_tac.png",
    "res": "_res.muxf",
    "mc": "_mc.png",
    "mwavy": "_mwavy.png",
    "tbg": "_tbg.png",
    "meta": "_meta.json",
}


def sample_paths(directory, sample_id: str) -> dict:
    d = Path(directory)
    return {k: d / f"{sample_id}{suf}" for k, suf in SAMPLE_SUFFIXES.items()}


def save_sample(directory, sample_id: str, s: MuxSample) -> dict:
    paths = sample_paths(directory, sample_id)
    write_png(paths["mux"], s.i_mux)
    write_png(paths["ref"], s.i_ref)
    write_png(paths["vis"], s.target_vision)
    write_png(paths["tac"], s.target_tactile)
    write_muxf(paths["res"], s.target_residual)
    mask_to_png(paths["mc"], s.m_c)
    mask_to_png(paths["mwavy"], s.m_wavy)
    write_png(paths["tbg"], s.t_bg_jit)
    with open(paths["meta"], "w") as fh:
        json.dump(s.meta_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def load_sample(directory, sample_id: str) -> SimpleNamespace:
    paths = sample_paths(directory, sample_id)
    with open(paths["meta"]) as fh:
        meta = json.load(fh)
    return SimpleNamespace(
        i_mux=read_png(paths["mux"]),
        i_ref=read_png(paths["ref"]),
        target_vision=read_png(paths["vis"]),
        target_tactile=read_png(paths["tac"]),
        target_residual=read_muxf(paths["res"], signed=True),
        t_bg_jit=read_png(paths["tbg"]),
        m_c=mask_from_png(paths["mc"]),
        m_wavy=mask_from_png(paths["mwavy"]),
        meta=meta,
    )
