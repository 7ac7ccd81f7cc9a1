"""Seeded image-side weather effects on 8-bit RGB rasters.

All blends round half-up and clamp to [0, 255].  Randomness for every
streak, flake or noise lattice node is keyed by (seed, entity index).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import rng
from .errors import DataError, WrongKind
from .weather import Severity, WeatherKind, round_half_up

GRAY = 128.0

FOG_OPACITY = {Severity.Low: 0.10, Severity.High: 0.50}
RAIN_DENSITY = {Severity.Low: 0.01, Severity.High: 0.20}
SNOW_DENSITY = {Severity.Low: 0.002, Severity.High: 0.01}
SUN_RADIUS = {Severity.Low: 30.0, Severity.High: 70.0}


@dataclass(frozen=True)
class ImageCorruptionSpec:
    kind: WeatherKind
    severity: Optional[Severity] = None
    fog_opacity: float = 0.0
    haze: bool = True
    rain_density: float = 0.0
    streak_length: tuple = (15.0, 35.0)
    streak_angle_deg: tuple = (-20.0, -10.0)
    streak_alpha: float = 0.5
    streak_brightness: float = 40.0
    snow_density: float = 0.0
    snow_mask_opacity: float = 0.30
    brightness_scale: float = 0.70
    sun_radius: float = 30.0
    sun_alpha: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", WeatherKind.parse(self.kind))
        if self.severity is not None:
            object.__setattr__(self, "severity", Severity.parse(self.severity))
        for name in ("fog_opacity", "snow_mask_opacity", "brightness_scale", "streak_alpha", "sun_alpha"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sun_radius <= 0:
            raise ValueError("sun_radius must be positive")

    @classmethod
    def standard(cls, kind, severity, seed: int = 0) -> "ImageCorruptionSpec":
        kind, severity = WeatherKind.parse(kind), Severity.parse(severity)
        params = {
            WeatherKind.Fog: dict(fog_opacity=FOG_OPACITY[severity]),
            WeatherKind.Rain: dict(rain_density=RAIN_DENSITY[severity]),
            WeatherKind.Snow: dict(snow_density=SNOW_DENSITY[severity]),
            WeatherKind.Sunlight: dict(sun_radius=SUN_RADIUS[severity]),
        }[kind]
        return cls(kind=kind, severity=severity, seed=seed, **params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["severity"] = None if self.severity is None else self.severity.value
        d["streak_length"] = list(self.streak_length)
        d["streak_angle_deg"] = list(self.streak_angle_deg)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageCorruptionSpec":
        d = dict(d)
        for key in ("streak_length", "streak_angle_deg"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def _check(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 uint8 image, got {img.dtype} {img.shape}")
    return img


def blend_gray(img: np.ndarray, opacity) -> np.ndarray:
    """(1 - o) * p + o * 128; ``opacity`` may be a per-pixel H x W field."""
    o = np.asarray(opacity, dtype=np.float64)
    if o.ndim == 2:
        o = o[:, :, None]
    return _to_u8((1.0 - o) * img.astype(np.float64) + o * GRAY)


def value_noise(height: int, width: int, seed: int, cells=(32.0, 16.0), weights=(2 / 3, 1 / 3)) -> np.ndarray:
    """Two-octave bilinear value noise in [-1, 1]."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    total = np.zeros((height, width))
    for octave, (cell, weight) in enumerate(zip(cells, weights)):
        gy, gx = ys / cell, xs / cell
        y0, x0 = np.floor(gy).astype(np.int64), np.floor(gx).astype(np.int64)
        fy, fx = gy - y0, gx - x0
        cols = int(math.ceil(width / cell)) + 2

        def node(yy, xx):
            key = (yy * cols + xx).astype(np.uint64)
            return rng.uniform(seed, key, 100 + octave, -1.0, 1.0)

        top = node(y0, x0) * (1 - fx) + node(y0, x0 + 1) * fx
        bot = node(y0 + 1, x0) * (1 - fx) + node(y0 + 1, x0 + 1) * fx
        total += weight * (top * (1 - fy) + bot * fy)
    return total


def fog_image(img: np.ndarray, spec: ImageCorruptionSpec) -> np.ndarray:
    if spec.kind is not WeatherKind.Fog:
        raise WrongKind(f"fog_image needs a Fog spec, got {spec.kind.name}")
    img = _check(img)
    o = spec.fog_opacity
    if o == 0.0:
        return img.copy()
    if spec.haze and o < 1.0:
        h, w = img.shape[:2]
        field = np.clip(o + 0.1 * o * value_noise(h, w, spec.seed), 0.0, 1.0)
        return blend_gray(img, field)
    return blend_gray(img, o)


def _streak_mask(h: int, w: int, spec: ImageCorruptionSpec) -> np.ndarray:
    n = round_half_up(spec.rain_density * h * w)
    mask = np.zeros((h, w), dtype=bool)
    if n == 0:
        return mask
    k = np.arange(n, dtype=np.uint64)
    x0 = rng.uniform(spec.seed, k, 0, 0.0, w)
    y0 = rng.uniform(spec.seed, k, 1, 0.0, h)
    length = rng.uniform(spec.seed, k, 2, *spec.streak_length)
    ang = np.deg2rad(rng.uniform(spec.seed, k, 3, *spec.streak_angle_deg))
    steps = np.arange(int(math.ceil(spec.streak_length[1])))
    # 1-px line sampled at unit steps, clipped to each streak's length
    t = steps[None, :].astype(np.float64)
    valid = t < length[:, None]
    xs = np.floor(x0[:, None] + t * np.sin(ang)[:, None]).astype(np.int64)
    ys = np.floor(y0[:, None] + t * np.cos(ang)[:, None]).astype(np.int64)
    valid &= (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    mask[ys[valid], xs[valid]] = True
    return mask


def rain_image(img: np.ndarray, spec: ImageCorruptionSpec) -> np.ndarray:
    if spec.kind is not WeatherKind.Rain:
        raise WrongKind(f"rain_image needs a Rain spec, got {spec.kind.name}")
    img = _check(img)
    out = img.copy()
    mask = _streak_mask(*img.shape[:2], spec)
    if mask.any():
        p = img[mask].astype(np.float64)
        streak = np.minimum(p + spec.streak_brightness, 255.0)
        out[mask] = _to_u8((1 - spec.streak_alpha) * p + spec.streak_alpha * streak)
    return out


def rain_streak_count(height: int, width: int, density: float) -> int:
    return round_half_up(density * height * width)


def _flake_mask(h: int, w: int, spec: ImageCorruptionSpec) -> np.ndarray:
    n = round_half_up(spec.snow_density * h * w)
    mask = np.zeros((h, w), dtype=bool)
    if n == 0:
        return mask
    k = np.arange(n, dtype=np.uint64)
    cx = rng.integers(spec.seed, k, 0, 0, w)
    cy = rng.integers(spec.seed, k, 1, 0, h)
    rad = rng.integers(spec.seed, k, 2, 1, 3)
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            inside = dx * dx + dy * dy <= rad * rad
            yy, xx = cy + dy, cx + dx
            ok = inside & (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            mask[yy[ok], xx[ok]] = True
    return mask


def snow_image(img: np.ndarray, spec: ImageCorruptionSpec) -> np.ndarray:
    if spec.kind is not WeatherKind.Snow:
        raise WrongKind(f"snow_image needs a Snow spec, got {spec.kind.name}")
    img = _check(img)
    out = img.copy()
    out[_flake_mask(*img.shape[:2], spec)] = 255
    if spec.brightness_scale != 1.0:
        out = _to_u8(out.astype(np.float64) * spec.brightness_scale)
    if spec.snow_mask_opacity > 0.0:
        out = blend_gray(out, spec.snow_mask_opacity)
    return out


def sun_falloff(d, radius: float):
    """Additive white magnitude at distance ``d`` from the sun center."""
    d = np.asarray(d, dtype=np.float64)
    glow = 255.0 * np.exp(-(d - radius) / radius)
    return np.where(d <= radius, 255.0, np.where(d <= 3 * radius, glow, 0.0))


def sun_center(h: int, w: int, seed: int) -> tuple:
    cx = float(rng.uniform(seed, 0, 0, 0.0, w))
    cy = float(rng.uniform(seed, 0, 1, 0.0, h / 3.0))
    return cx, cy


def sunlight_image(img: np.ndarray, spec: ImageCorruptionSpec) -> np.ndarray:
    if spec.kind is not WeatherKind.Sunlight:
        raise WrongKind(f"sunlight_image needs a Sunlight spec, got {spec.kind.name}")
    img = _check(img)
    h, w = img.shape[:2]
    cx, cy = sun_center(h, w, spec.seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    d = np.hypot(xs - cx, ys - cy)
    R = spec.sun_radius
    p = img.astype(np.float64)
    glow = sun_falloff(d, R)[:, :, None]
    out = _to_u8(p + spec.sun_alpha * glow)
    out[d <= R] = 255
    return out


_DISPATCH = {
    WeatherKind.Fog: fog_image,
    WeatherKind.Rain: rain_image,
    WeatherKind.Snow: snow_image,
    WeatherKind.Sunlight: sunlight_image,
}


def apply(img: np.ndarray, spec: ImageCorruptionSpec) -> np.ndarray:
    return _DISPATCH[spec.kind](img, spec)


def corrupt_image(img: np.ndarray, kind, severity, seed: int = 0) -> np.ndarray:
    return apply(img, ImageCorruptionSpec.standard(kind, severity, seed=seed))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_ppm(img: np.ndarray, path) -> None:
    img = _check(img)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise DataError(f"{path}: only 8-bit binary P6 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = data[pos + 1 : pos + 1 + 3 * w * h]
    if len(pixels) != 3 * w * h:
        raise DataError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).copy()


def read_image(path) -> np.ndarray:
    if str(path).lower().endswith(".ppm"):
        return read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(img: np.ndarray, path) -> None:
    if str(path).lower().endswith(".ppm"):
        write_ppm(img, path)
        return
    from PIL import Image

    Image.fromarray(_check(img)).save(path)
