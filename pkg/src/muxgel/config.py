"""Generation configuration: a strict, versioned JSON document.

Unknown keys are errors rather than warnings so a stale or misspelled
config can never silently change what a run produces. Missing keys fall
back to the documented defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import ConfigError
from .tactile import INDENTER_SHAPES, MAX_PRESS_DEPTH_MM, STANDARD_SAMPLE_POSITIONS

SCHEMA_ID = "muxgen/1"

INDENTER_COLOR_PALETTE = {
    "white": (0.92, 0.92, 0.92),
    "black": (0.06, 0.06, 0.06),
    "red": (0.80, 0.10, 0.10),
    "green": (0.10, 0.70, 0.18),
    "blue": (0.12, 0.18, 0.82),
}


@dataclass(frozen=True)
class GenConfig:
    # sensor plane
    width_px: int = 320
    height_px: int = 240
    mm_per_px: float = 0.06
    # indenter pool
    shapes: tuple = INDENTER_SHAPES
    colors: tuple = ("white", "black", "red", "green", "blue")
    sphere_radius_mm: tuple = (2.0, 6.0)
    edge_half_angle_deg: tuple = (30.0, 60.0)
    edge_length_mm: tuple = (8.0, 16.0)
    square_side_mm: tuple = (4.0, 9.0)
    octagon_circumradius_mm: tuple = (3.0, 7.0)
    hollow_inner_ratio: tuple = (0.5, 0.8)
    position_mode: str = "uniform"
    position_box_mm: tuple = (-4.0, 4.0)
    positions_mm: tuple = STANDARD_SAMPLE_POSITIONS
    press_depth_mm: tuple = (0.01, MAX_PRESS_DEPTH_MM)
    # gel compliance
    smoothing_sigma_mm: float = 0.3
    # multiplexing mask
    grid: tuple = (2, 8)
    wavy_amplitude_px: tuple = (0.0, 5.0)
    wavy_frequencies: tuple = (1, 2, 3)
    # correlated jitter
    jitter_brightness: tuple = (0.7, 1.3)
    jitter_contrast: tuple = (0.7, 1.3)
    jitter_saturation: tuple = (0.7, 1.3)
    jitter_hue_deg: tuple = (-18.0, 18.0)
    # vision background
    background_source: str = "procedural"
    background_path: str = ""
    background_value: tuple = (0.5, 0.5, 0.5)
    background_detail_cells: tuple = (3, 8)
    background_value_range: tuple = (0.05, 0.95)
    # shared optics
    blur_radius_px: tuple = (3.0, 9.0)
    vignette_edge: float = 0.6
    vignette_exponent: float = 2.0
    depth_far_mm: float = 50.0
    depth_threshold_mm: float = 2.0
    intensity_threshold: float = 0.35
    # tactile rendering
    table_mag_bins: int = 32
    table_ang_bins: int = 36
    tactile_falloff: bool = True
    shadow_march_px: int = 40
    shadow_factor: float = 0.55
    shadow_elevation_deg: float = 60.0
    # acceptance filter and run size
    contact_threshold: float = 0.05
    count: int = 100
    seed: int = 0


_SECTIONS = {
    "sensor": ("width_px", "height_px", "mm_per_px"),
    "indenters": (
        "shapes",
        "colors",
        "sphere_radius_mm",
        "edge_half_angle_deg",
        "edge_length_mm",
        "square_side_mm",
        "octagon_circumradius_mm",
        "hollow_inner_ratio",
        "position_mode",
        "position_box_mm",
        "positions_mm",
        "press_depth_mm",
    ),
    "gel": ("smoothing_sigma_mm",),
    "mask": ("grid", "wavy_amplitude_px", "wavy_frequencies"),
    "jitter": ("brightness", "contrast", "saturation", "hue_deg"),
    "background": ("source", "path", "value", "detail_cells", "value_range"),
    "optics": (
        "blur_radius_px",
        "vignette_edge",
        "vignette_exponent",
        "depth_far_mm",
        "depth_threshold_mm",
        "intensity_threshold",
    ),
    "tactile": (
        "table_mag_bins",
        "table_ang_bins",
        "tactile_falloff",
        "shadow_march_px",
        "shadow_factor",
        "shadow_elevation_deg",
    ),
}

_TOP_KEYS = ("schema", "seed", "count", "contact_threshold") + tuple(_SECTIONS)

# JSON key -> dataclass field for keys whose section prefixes the name
_RENAMES = {
    ("jitter", "brightness"): "jitter_brightness",
    ("jitter", "contrast"): "jitter_contrast",
    ("jitter", "saturation"): "jitter_saturation",
    ("jitter", "hue_deg"): "jitter_hue_deg",
    ("background", "source"): "background_source",
    ("background", "path"): "background_path",
    ("background", "value"): "background_value",
    ("background", "detail_cells"): "background_detail_cells",
    ("background", "value_range"): "background_value_range",
}


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _require_range(cfg_key, value, lo=None, hi=None, integer=False):
    if not isinstance(value, tuple) or len(value) != 2:
        raise ConfigError(f"{cfg_key}: expected a [low, high] pair, got {value!r}")
    a, b = value
    for v in (a, b):
        if integer and not isinstance(v, int):
            raise ConfigError(f"{cfg_key}: bounds must be integers, got {v!r}")
        if not isinstance(v, (int, float)):
            raise ConfigError(f"{cfg_key}: bounds must be numbers, got {v!r}")
    if a > b:
        raise ConfigError(f"{cfg_key}: empty range {a} > {b}")
    if lo is not None and a < lo:
        raise ConfigError(f"{cfg_key}: lower bound {a} below documented minimum {lo}")
    if hi is not None and b > hi:
        raise ConfigError(f"{cfg_key}: upper bound {b} above documented maximum {hi}")


def validate_config(cfg: GenConfig):
    if cfg.width_px < 8 or cfg.height_px < 8:
        raise ConfigError("sensor.width_px/height_px must be >= 8")
    if cfg.mm_per_px <= 0:
        raise ConfigError("sensor.mm_per_px must be > 0")
    for s in cfg.shapes:
        if s not in INDENTER_SHAPES:
            raise ConfigError(f"indenters.shapes: unknown shape {s!r}")
    if not cfg.shapes:
        raise ConfigError("indenters.shapes must not be empty")
    for c in cfg.colors:
        if c not in INDENTER_COLOR_PALETTE:
            raise ConfigError(f"indenters.colors: unknown color {c!r}")
    if not cfg.colors:
        raise ConfigError("indenters.colors must not be empty")
    _require_range("indenters.sphere_radius_mm", cfg.sphere_radius_mm, lo=0.1)
    _require_range("indenters.edge_half_angle_deg", cfg.edge_half_angle_deg, lo=5.0, hi=85.0)
    _require_range("indenters.edge_length_mm", cfg.edge_length_mm, lo=0.5)
    _require_range("indenters.square_side_mm", cfg.square_side_mm, lo=0.5)
    _require_range("indenters.octagon_circumradius_mm", cfg.octagon_circumradius_mm, lo=0.5)
    _require_range("indenters.hollow_inner_ratio", cfg.hollow_inner_ratio, lo=0.1, hi=0.95)
    _require_range("indenters.press_depth_mm", cfg.press_depth_mm, lo=0.01, hi=MAX_PRESS_DEPTH_MM)
    if cfg.position_mode not in ("uniform", "fixed"):
        raise ConfigError(f"indenters.position_mode: {cfg.position_mode!r} not in (uniform, fixed)")
    _require_range("indenters.position_box_mm", cfg.position_box_mm)
    for p in cfg.positions_mm:
        if not (isinstance(p, tuple) and len(p) == 2):
            raise ConfigError(f"indenters.positions_mm: bad entry {p!r}")
    if cfg.smoothing_sigma_mm < 0:
        raise ConfigError("gel.smoothing_sigma_mm must be >= 0")
    _require_range("mask.grid", cfg.grid, lo=2, hi=8, integer=True)
    _require_range("mask.wavy_amplitude_px", cfg.wavy_amplitude_px, lo=0.0, hi=5.0)
    if not cfg.wavy_frequencies or any(
        (not isinstance(f, int)) or f < 1 for f in cfg.wavy_frequencies
    ):
        raise ConfigError("mask.wavy_frequencies must be positive integers")
    _require_range("jitter.brightness", cfg.jitter_brightness, lo=0.0)
    _require_range("jitter.contrast", cfg.jitter_contrast, lo=0.0)
    _require_range("jitter.saturation", cfg.jitter_saturation, lo=0.0)
    _require_range("jitter.hue_deg", cfg.jitter_hue_deg, lo=-18.0, hi=18.0)
    if cfg.background_source not in ("procedural", "constant", "directory"):
        raise ConfigError(
            f"background.source: {cfg.background_source!r} not in (procedural, constant, directory)"
        )
    if cfg.background_source == "directory" and not cfg.background_path:
        raise ConfigError("background.path required when background.source is 'directory'")
    if len(cfg.background_value) != 3:
        raise ConfigError("background.value must be an RGB triple")
    _require_range("background.detail_cells", cfg.background_detail_cells, lo=2, integer=True)
    _require_range("background.value_range", cfg.background_value_range, lo=0.0, hi=1.0)
    _require_range("optics.blur_radius_px", cfg.blur_radius_px, lo=0.0)
    if not 0.0 <= cfg.vignette_edge <= 1.0:
        raise ConfigError("optics.vignette_edge must be in [0, 1]")
    if cfg.table_mag_bins < 2 or cfg.table_ang_bins < 4:
        raise ConfigError("tactile.table_mag_bins >= 2 and table_ang_bins >= 4 required")
    if not 0.0 < cfg.contact_threshold < 1.0:
        raise ConfigError("contact_threshold must lie strictly between 0 and 1")
    if cfg.count < 0:
        raise ConfigError("count must be >= 0")


def config_from_dict(doc: dict) -> GenConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    schema = doc.get("schema")
    if schema != SCHEMA_ID:
        raise ConfigError(f"schema: expected {SCHEMA_ID!r}, got {schema!r}")
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    values = {}
    for top, subkeys in _SECTIONS.items():
        section = doc.get(top, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{top}: expected an object")
        for key in section:
            if key not in subkeys:
                raise ConfigError(f"unknown config key {top}.{key!r}")
        for key in subkeys:
            if key in section:
                field_name = _RENAMES.get((top, key), key)
                values[field_name] = _tupled(section[key])
    for key in ("seed", "count", "contact_threshold"):
        if key in doc:
            values[key] = doc[key]

    cfg = GenConfig(**values)
    validate_config(cfg)
    return cfg


def config_to_dict(cfg: GenConfig) -> dict:
    """Full snapshot in the on-disk schema (suitable for manifests)."""
    doc = {"schema": SCHEMA_ID, "seed": cfg.seed, "count": cfg.count,
           "contact_threshold": cfg.contact_threshold}
    by_field = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for top, subkeys in _SECTIONS.items():
        section = {}
        for key in subkeys:
            field_name = _RENAMES.get((top, key), key)
            section[key] = by_field[field_name]
        # tuples (possibly nested) flatten to JSON arrays
        doc[top] = json.loads(json.dumps(section))
    return doc


def load_config(path) -> GenConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(path, cfg: GenConfig):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
