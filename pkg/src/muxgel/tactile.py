"""Contact geometry and photometric rendering of the tactile channel.

Rigid procedural indenters are pressed into a flat gel plane; the
penetration field is smoothed to mimic elastomer compliance, surface
gradients are mapped to RGB through a binned calibration table, and a 2D
ray march darkens pixels that sit in the shadow of raised geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ShapeError
from .imaging import ClipCounter, Image, Mask

# Canonical probe locations on the sensor plane (mm): center plus four
# peripheral points used by the scripted indentation protocol.
STANDARD_SAMPLE_POSITIONS = (
    (0.0, 0.0),
    (0.0, -6.4),
    (0.0, 6.4),
    (5.2, 0.0),
    (-5.2, 0.0),
)

INDENTER_SHAPES = ("sphere", "edge", "square", "solid-octagon", "hollow-octagon")

MAX_PRESS_DEPTH_MM = 1.5

# Magnitude span assumed by the MUXCAL file format (mm/mm).
FILE_MAG_MAX = 4.0


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel grid of the sensor plane. x runs along columns, y along rows,
    origin at the image center."""

    width_px: int = 320
    height_px: int = 240
    mm_per_px: float = 0.06

    @property
    def width_mm(self) -> float:
        return self.width_px * self.mm_per_px

    @property
    def height_mm(self) -> float:
        return self.height_px * self.mm_per_px

    def grid_mm(self):
        """(X, Y) coordinate arrays in mm, shape (H, W)."""
        s = self.mm_per_px
        xs = (np.arange(self.width_px) - (self.width_px - 1) / 2.0) * s
        ys = (np.arange(self.height_px) - (self.height_px - 1) / 2.0) * s
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class HeightField:
    """H x W surface heights in mm; scale is mm per pixel."""

    data: np.ndarray
    scale: float

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"height field must be HxW, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class IndenterSpec:
    """One rigid indenter pose. Size fields are in mm and only the ones
    belonging to ``shape`` are consulted."""

    shape: str
    press_depth: float
    position: tuple = (0.0, 0.0)
    sphere_radius: float = 4.0
    edge_half_angle_deg: float = 45.0
    edge_length: float = 12.0
    square_side: float = 6.0
    circumradius: float = 5.0
    inner_circumradius: float = 3.0

    def __post_init__(self):
        if self.shape not in INDENTER_SHAPES:
            raise ConfigError(f"unknown indenter shape {self.shape!r}")
        if not 0.0 <= self.press_depth <= MAX_PRESS_DEPTH_MM:
            raise ConfigError(
                f"press_depth {self.press_depth} outside [0, {MAX_PRESS_DEPTH_MM}] mm"
            )
        if self.shape == "hollow-octagon" and not (
            self.inner_circumradius < self.circumradius
        ):
            raise ConfigError("hollow octagon needs inner circumradius < outer")

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "press_depth": self.press_depth,
            "position": list(self.position),
            "sphere_radius": self.sphere_radius,
            "edge_half_angle_deg": self.edge_half_angle_deg,
            "edge_length": self.edge_length,
            "square_side": self.square_side,
            "circumradius": self.circumradius,
            "inner_circumradius": self.inner_circumradius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IndenterSpec":
        d = dict(d)
        d["position"] = tuple(d.get("position", (0.0, 0.0)))
        return cls(**d)


def _octagon_inside(x, y, circumradius):
    """Points within a regular octagon (flat sides axis-aligned)."""
    apothem = circumradius * math.cos(math.pi / 8.0)
    inside = np.ones_like(x, dtype=bool)
    for k in range(4):
        a = k * math.pi / 4.0
        proj = np.abs(x * math.cos(a) + y * math.sin(a))
        inside &= proj <= apothem
    return inside


def _surface_height(spec: IndenterSpec, geom: SensorGeometry) -> np.ndarray:
    """Height of the indenter's lower surface above its lowest point;
    +inf outside the indenter footprint."""
    X, Y = geom.grid_mm()
    x = X - spec.position[0]
    y = Y - spec.position[1]
    h = np.full(x.shape, np.inf)

    if spec.shape == "sphere":
        r = spec.sphere_radius
        rho2 = x * x + y * y
        inside = rho2 <= r * r
        h[inside] = r - np.sqrt(r * r - rho2[inside])
    elif spec.shape == "edge":
        slope = 1.0 / math.tan(math.radians(spec.edge_half_angle_deg))
        inside = np.abs(x) <= spec.edge_length / 2.0
        h[inside] = np.abs(y[inside]) * slope
    elif spec.shape == "square":
        half = spec.square_side / 2.0
        inside = (np.abs(x) <= half) & (np.abs(y) <= half)
        h[inside] = 0.0
    elif spec.shape == "solid-octagon":
        h[_octagon_inside(x, y, spec.circumradius)] = 0.0
    elif spec.shape == "hollow-octagon":
        ring = _octagon_inside(x, y, spec.circumradius) & ~_octagon_inside(
            x, y, spec.inner_circumradius
        )
        h[ring] = 0.0
    return h


def indenter_heightmap(spec: IndenterSpec, geom: SensorGeometry) -> HeightField:
    """Penetration depth of the rigid indenter into the flat gel plane.

    Zero outside contact; footprints larger than the field are cropped.
    """
    h = _surface_height(spec, geom)
    pen = spec.press_depth - h
    np.maximum(pen, 0.0, out=pen)
    pen[~np.isfinite(pen)] = 0.0
    return HeightField(pen, geom.mm_per_px)


def indenter_clearance(
    spec: IndenterSpec, geom: SensorGeometry, far_mm: float = 50.0
) -> np.ndarray:
    """Distance (mm) from the gel plane up to the indenter surface, capped
    at far_mm where there is no indenter. Drives the sensor-facing depth
    map of the vision channel."""
    h = _surface_height(spec, geom)
    clear = h - spec.press_depth
    np.maximum(clear, 0.0, out=clear)
    return np.minimum(clear, far_mm)


def press(indenter_hm: HeightField, smoothing_sigma: float):
    """Contact mask plus compliance-smoothed penetration field.

    The mask marks raw penetration > 0 and is computed before smoothing;
    smoothing_sigma is in mm (0 leaves the field untouched).
    """
    if smoothing_sigma < 0:
        raise ValueError("smoothing sigma must be >= 0")
    contact = Mask((indenter_hm.data > 0.0).astype(np.float32))
    if smoothing_sigma == 0.0:
        return contact, indenter_hm
    sigma_px = smoothing_sigma / indenter_hm.scale
    deformed = gaussian_filter(indenter_hm.data, sigma_px, mode="nearest")
    return contact, HeightField(deformed, indenter_hm.scale)


# --- photometric calibration table ---------------------------------------


@dataclass(frozen=True)
class CalibrationTable:
    """RGB intensity per (gradient magnitude, gradient angle) bin.

    Magnitude bin centers span [0, mag_max] mm/mm; angle bins cover the
    full circle periodically. The zero-magnitude row holds the sensor base
    color and should be angle-uniform.
    """

    entries: np.ndarray
    mag_max: float = FILE_MAG_MAX

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.entries, dtype=np.float64))
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeError(f"table entries must be (B_m, B_a, 3), got {arr.shape}")
        if arr.shape[0] < 2 or arr.shape[1] < 4:
            raise ConfigError("need at least 2 magnitude bins and 4 angle bins")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("table entries must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def mag_bins(self) -> int:
        return self.entries.shape[0]

    @property
    def ang_bins(self) -> int:
        return self.entries.shape[1]

    @property
    def base_color(self) -> np.ndarray:
        return self.entries[0, 0].copy()

    def lookup(self, mag, ang, counter: ClipCounter | None = None) -> np.ndarray:
        """Bilinear interpolation; magnitude clamps to the last bin (the
        clamp count goes to ``counter``), angle wraps periodically."""
        bm, ba = self.mag_bins, self.ang_bins
        step = self.mag_max / (bm - 1)
        v = np.asarray(mag, dtype=np.float64) / step
        if counter is not None:
            counter.add(np.count_nonzero(v > bm - 1))
        v = np.minimum(v, bm - 1)
        i0 = np.minimum(v.astype(np.int64), bm - 2)
        fm = v - i0

        u = (np.asarray(ang, dtype=np.float64) + math.pi) / (2.0 * math.pi) * ba
        ju = np.floor(u)
        fa = u - ju
        j0 = ju.astype(np.int64) % ba
        j1 = (j0 + 1) % ba

        e = self.entries
        out = (
            ((1.0 - fm) * (1.0 - fa))[..., None] * e[i0, j0]
            + ((1.0 - fm) * fa)[..., None] * e[i0, j1]
            + (fm * (1.0 - fa))[..., None] * e[i0 + 1, j0]
            + (fm * fa)[..., None] * e[i0 + 1, j1]
        )
        return out


@dataclass(frozen=True)
class Light:
    """direction points from the surface toward the light (unit vector)."""

    direction: tuple
    tint: tuple = (1.0, 1.0, 1.0)
    intensity: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise ConfigError("light direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / n))
        if self.intensity < 0:
            raise ConfigError("light intensity must be >= 0")


@dataclass(frozen=True)
class LightModel:
    lights: tuple = ()
    ambient: tuple = (0.0, 0.0, 0.0)

    def total_illumination(self) -> np.ndarray:
        tot = np.asarray(self.ambient, dtype=np.float64).copy()
        for l in self.lights:
            tot += l.intensity * np.asarray(l.tint, dtype=np.float64)
        return tot


def default_light_model() -> LightModel:
    """Three tinted lights at 60 degrees elevation, 120 degrees apart in
    azimuth, plus a gray ambient floor."""
    el = math.radians(60.0)
    lights = []
    for az_deg, tint in ((0.0, (1, 0, 0)), (120.0, (0, 1, 0)), (240.0, (0, 0, 1))):
        az = math.radians(az_deg)
        d = (math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el))
        lights.append(Light(direction=d, tint=tint, intensity=0.55))
    return LightModel(lights=tuple(lights), ambient=(0.30, 0.30, 0.30))


def synth_calibration_table(
    lights: LightModel, mag_bins: int, ang_bins: int, mag_max: float = FILE_MAG_MAX
) -> CalibrationTable:
    """Lambertian-shaded table for each bin's representative gradient."""
    if mag_bins < 2 or ang_bins < 4:
        raise ConfigError("need mag_bins >= 2 and ang_bins >= 4")
    total = lights.total_illumination()
    if not np.any(total > 0.0):
        raise ConfigError("light model emits nothing (zero lights and ambient)")

    mags = np.linspace(0.0, mag_max, mag_bins)
    angs = -math.pi + 2.0 * math.pi * np.arange(ang_bins) / ang_bins
    M, A = np.meshgrid(mags, angs, indexing="ij")
    gx = M * np.cos(A)
    gy = M * np.sin(A)
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    # surface normal of z = h(x, y) is (-hx, -hy, 1) normalized
    nx, ny, nz = -gx / norm, -gy / norm, 1.0 / norm

    rgb = np.broadcast_to(
        np.asarray(lights.ambient, dtype=np.float64), M.shape + (3,)
    ).copy()
    for l in lights.lights:
        lam = np.maximum(0.0, nx * l.direction[0] + ny * l.direction[1] + nz * l.direction[2])
        rgb += lam[..., None] * (l.intensity * np.asarray(l.tint, dtype=np.float64))
    return CalibrationTable(np.clip(rgb, 0.0, 1.0), mag_max=mag_max)


def render_tactile(
    deformed: HeightField, table: CalibrationTable, counter: ClipCounter | None = None
) -> Image:
    """Map surface gradients to RGB through the calibration table.

    Gradients are central differences in mm/mm (one-sided at the borders);
    flat regions emit the zero-gradient entry.
    """
    gy, gx = np.gradient(deformed.data, deformed.scale)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    rgb = table.lookup(mag, ang, counter)
    return Image(np.clip(rgb, 0.0, 1.0).astype(np.float32))


@dataclass(frozen=True)
class ShadowParams:
    march_px: int = 40
    factor: float = 0.55
    elevation_deg: float = 60.0


def cast_shadows(
    img: Image,
    deformed: HeightField,
    contact: Mask,
    lights: LightModel,
    params: ShadowParams = ShadowParams(),
) -> Image:
    """Darken pixels occluded from each light by raised contact geometry.

    For every light with a horizontal component, each pixel marches toward
    the light's projected direction; if any sample within march_px rises
    above the line climbing at the occlusion elevation angle, that light's
    share of the pixel is scaled by ``factor``. Never brightens.
    """
    if contact.data.max() == 0.0:
        return img
    h, w = deformed.data.shape
    scale = deformed.scale
    tan_el = math.tan(math.radians(params.elevation_deg))
    total = lights.total_illumination()
    total_safe = np.where(total > 0.0, total, 1.0)

    m = params.march_px
    padded = np.pad(deformed.data, m, mode="constant", constant_values=0.0)
    base = deformed.data

    atten = np.ones((h, w, 3), dtype=np.float64)
    for l in lights.lights:
        lx, ly = l.direction[0], l.direction[1]
        horiz = math.hypot(lx, ly)
        if horiz < 1e-9 or l.intensity == 0.0:
            continue
        ux, uy = lx / horiz, ly / horiz
        occluded = np.zeros((h, w), dtype=bool)
        for k in range(1, m + 1):
            dr = int(round(k * uy))
            dc = int(round(k * ux))
            sample = padded[m + dr : m + dr + h, m + dc : m + dc + w]
            occluded |= sample > base + k * scale * tan_el + 1e-9
        share = (l.intensity * np.asarray(l.tint, dtype=np.float64)) / total_safe
        light_atten = 1.0 - share * (1.0 - params.factor)
        atten[occluded] *= light_atten

    out = (img.data.astype(np.float64) * atten).astype(np.float32)
    return Image(np.clip(out, 0.0, 1.0))


def radial_falloff(geom: SensorGeometry, edge: float = 0.6, exponent: float = 2.0):
    """Vignette multiplier: 1 at the image center, ``edge`` at the farthest
    corner, falling off with the given exponent."""
    X, Y = geom.grid_mm()
    rho = np.hypot(X, Y)
    rho_max = rho.max()
    if rho_max == 0:
        return np.ones_like(rho)
    return 1.0 - (1.0 - edge) * (rho / rho_max) ** exponent


def light_map(
    base_color, geom: SensorGeometry, edge: float = 0.6, exponent: float = 2.0
) -> Image:
    """Pure-vision illumination prior: base color under the radial falloff."""
    fall = radial_falloff(geom, edge, exponent)
    rgb = fall[:, :, None] * np.asarray(base_color, dtype=np.float64)[None, None, :]
    return Image(np.clip(rgb, 0.0, 1.0).astype(np.float32))


# --- calibration file format ----------------------------------------------


def write_calibration(path, table: CalibrationTable):
    """Plain-text table: header ``MUXCAL v1 B_m B_a`` then one ``R G B``
    line per bin, row-major over magnitude then angle. The format fixes the
    magnitude span to FILE_MAG_MAX."""
    if table.mag_max != FILE_MAG_MAX:
        raise ConfigError(
            f"MUXCAL files assume mag_max={FILE_MAG_MAX}, table has {table.mag_max}"
        )
    with open(path, "w") as fh:
        fh.write(f"MUXCAL v1 {table.mag_bins} {table.ang_bins}\n")
        for i in range(table.mag_bins):
            for j in range(table.ang_bins):
                r, g, b = table.entries[i, j]
                fh.write(f"{r:.8f} {g:.8f} {b:.8f}\n")


def read_calibration(path) -> CalibrationTable:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "MUXCAL" or header[1] != "v1":
            raise ConfigError(f"{path}: not a MUXCAL v1 file")
        bm, ba = int(header[2]), int(header[3])
        vals = []
        for line in fh:
            line = line.strip()
            if line:
                vals.append([float(t) for t in line.split()])
    if len(vals) != bm * ba:
        raise ConfigError(f"{path}: expected {bm * ba} entries, found {len(vals)}")
    entries = np.asarray(vals, dtype=np.float64).reshape(bm, ba, 3)
    return CalibrationTable(entries, mag_max=FILE_MAG_MAX)
