"""Seeded weather corruption of LiDAR point clouds.

Fog and precipitation share one outcome space per point: keep with
attenuated reflectance, relocate along the ray as a near-range scatter
return, or drop.  Sunlight adds 2 m Gaussian jitter to a fixed fraction of
points.  All randomness is keyed by (seed, point index, draw slot).
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import rng
from .errors import WrongKind
from .kitti_io import PointCloud


class WeatherKind(str, enum.Enum):
    Fog = "fog"
    Rain = "rain"
    Snow = "snow"
    Sunlight = "sunlight"

    @classmethod
    def parse(cls, value) -> "WeatherKind":
        if isinstance(value, cls):
            return value
        for k in cls:
            if str(value).lower() in (k.value, k.name.lower()):
                return k
        raise ValueError(f"unknown weather kind {value!r}")


class Severity(str, enum.Enum):
    Low = "low"
    High = "high"

    @classmethod
    def parse(cls, value) -> "Severity":
        if isinstance(value, cls):
            return value
        for s in cls:
            if str(value).lower() in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown severity {value!r}")


# severity -> physical parameter
FOG_ALPHA = {Severity.Low: 0.005, Severity.High: 0.06}
RAIN_RATE = {Severity.Low: 0.2, Severity.High: 7.3}
SNOW_RATE = {Severity.Low: 0.20, Severity.High: 7.29}
SUN_RATIO = {Severity.Low: 0.01, Severity.High: 0.05}

# precipitation model: extinction k * rate**e, backscatter 1 - exp(-beta * rate * r)
PRECIP_CONSTANTS = {
    WeatherKind.Rain: dict(k=0.01, e=0.6, beta=2e-4),
    WeatherKind.Snow: dict(k=0.02, e=0.7, beta=4e-4),
}

# draw slots
_SLOT_CHOICE, _SLOT_RANGE, _SLOT_REFL = 0, 1, 2
_SLOT_PICK, _SLOT_NOISE = 3, 4  # noise uses 4..9


@dataclass(frozen=True)
class CorruptionSpec:
    kind: WeatherKind
    severity: Optional[Severity] = None
    alpha: float = 0.0
    rate: float = 0.0
    noise_ratio: float = 0.0
    noise_sigma: float = 2.0
    intensity_floor: float = 0.05
    seed: int = 0
    fog_scatter_prob: float = 0.5
    fog_scatter_cap: float = 25.0
    fog_scatter_min: float = 1.0
    precip_scatter_min: float = 0.5
    precip_scatter_max_prob: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", WeatherKind.parse(self.kind))
        if self.severity is not None:
            object.__setattr__(self, "severity", Severity.parse(self.severity))
        for name in ("alpha", "rate", "noise_ratio", "noise_sigma", "intensity_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.noise_ratio > 1:
            raise ValueError("noise_ratio must lie in [0, 1]")

    @classmethod
    def standard(cls, kind, severity, seed: int = 0) -> "CorruptionSpec":
        kind, severity = WeatherKind.parse(kind), Severity.parse(severity)
        params = {
            WeatherKind.Fog: dict(alpha=FOG_ALPHA[severity]),
            WeatherKind.Rain: dict(rate=RAIN_RATE[severity]),
            WeatherKind.Snow: dict(rate=SNOW_RATE[severity]),
            WeatherKind.Sunlight: dict(noise_ratio=SUN_RATIO[severity], noise_sigma=2.0),
        }[kind]
        return cls(kind=kind, severity=severity, seed=seed, **params)

    def with_seed(self, seed: int) -> "CorruptionSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["severity"] = None if self.severity is None else self.severity.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionSpec":
        return cls(**d)


@dataclass
class CorruptionReport:
    n_input: int = 0
    n_kept: int = 0
    n_attenuated: int = 0
    n_scattered: int = 0
    n_dropped: int = 0
    n_perturbed: int = 0


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _ranges(xyz: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(xyz.astype(np.float64) ** 2, axis=1))


def _assemble(pc, keep, scatter, new_range, new_refl, attenuated_refl, r):
    """Build the output cloud in input order from per-point outcomes."""
    pts = pc.points.astype(np.float64)
    out = pts.copy()
    out[keep, 3] = attenuated_refl[keep]
    if scatter.any():
        scale = new_range[scatter] / r[scatter]
        out[scatter, :3] = pts[scatter, :3] * scale[:, None]
        out[scatter, 3] = new_refl[scatter]
    sel = keep | scatter
    # float32 point positions are preserved exactly for kept points
    result = pc.points.copy()
    result[:, 3] = out[:, 3].astype(np.float32)
    result[scatter, :3] = out[scatter, :3].astype(np.float32)
    return PointCloud(result[sel])


def _kept_mask(refl: np.ndarray, attenuated: np.ndarray, floor: float) -> np.ndarray:
    # a return is lost only when attenuation pushes it below the floor;
    # returns already below the floor in clean data survive zero attenuation
    return (attenuated >= floor) | (attenuated >= refl)


def corrupt_fog(pc: PointCloud, spec: CorruptionSpec):
    if spec.kind is not WeatherKind.Fog:
        raise WrongKind(f"corrupt_fog needs a Fog spec, got {spec.kind.name}")
    n = len(pc)
    idx = np.arange(n, dtype=np.uint64)
    refl = pc.reflectance.astype(np.float64)
    r = _ranges(pc.xyz)
    att = refl * np.exp(-2.0 * spec.alpha * r)
    keep = _kept_mask(refl, att, spec.intensity_floor)
    lost = ~keep
    cap = np.minimum(r, spec.fog_scatter_cap)
    can_scatter = lost & (cap > spec.fog_scatter_min)
    u = rng.uniform(spec.seed, idx, _SLOT_CHOICE)
    scatter = can_scatter & (u < spec.fog_scatter_prob)
    new_range = rng.uniform(spec.seed, idx, _SLOT_RANGE, 0.0, 1.0)
    new_range = spec.fog_scatter_min + new_range * (cap - spec.fog_scatter_min)
    new_range = np.minimum(new_range, np.nextafter(r, 0))
    new_refl = rng.uniform(spec.seed, idx, _SLOT_REFL, 0.0, spec.intensity_floor)
    out = _assemble(pc, keep, scatter, new_range, new_refl, att, r)
    n_scat = int(scatter.sum())
    n_keep = int(keep.sum())
    report = CorruptionReport(
        n_input=n,
        n_kept=n_keep,
        n_attenuated=int((keep & (att < refl)).sum()),
        n_scattered=n_scat,
        n_dropped=n - n_keep - n_scat,
    )
    return out, report


def corrupt_precip(pc: PointCloud, spec: CorruptionSpec):
    if spec.kind not in PRECIP_CONSTANTS:
        raise WrongKind(f"corrupt_precip needs a Rain or Snow spec, got {spec.kind.name}")
    const = PRECIP_CONSTANTS[spec.kind]
    n = len(pc)
    idx = np.arange(n, dtype=np.uint64)
    refl = pc.reflectance.astype(np.float64)
    r = _ranges(pc.xyz)
    extinction = const["k"] * spec.rate ** const["e"]
    att = refl * np.exp(-2.0 * extinction * r)
    p = np.clip(1.0 - np.exp(-const["beta"] * spec.rate * r), 0.0, spec.precip_scatter_max_prob)
    u = rng.uniform(spec.seed, idx, _SLOT_CHOICE)
    scatter = (u < p) & (r > spec.precip_scatter_min)
    keep = ~scatter & _kept_mask(refl, att, spec.intensity_floor)
    new_range = rng.uniform(spec.seed, idx, _SLOT_RANGE)
    new_range = spec.precip_scatter_min + new_range * (r - spec.precip_scatter_min)
    new_range = np.minimum(new_range, np.nextafter(r, 0))
    new_refl = rng.uniform(spec.seed, idx, _SLOT_REFL, 0.0, spec.intensity_floor)
    out = _assemble(pc, keep, scatter, new_range, new_refl, att, r)
    n_scat = int(scatter.sum())
    n_keep = int(keep.sum())
    report = CorruptionReport(
        n_input=n,
        n_kept=n_keep,
        n_attenuated=int((keep & (att < refl)).sum()),
        n_scattered=n_scat,
        n_dropped=n - n_keep - n_scat,
    )
    return out, report


def corrupt_sunlight(pc: PointCloud, spec: CorruptionSpec):
    if spec.kind is not WeatherKind.Sunlight:
        raise WrongKind(f"corrupt_sunlight needs a Sunlight spec, got {spec.kind.name}")
    n = len(pc)
    m = round_half_up(spec.noise_ratio * n)
    idx = np.arange(n, dtype=np.uint64)
    out = pc.points.copy()
    if m:
        # m smallest per-point keys form a uniform subset without replacement
        keys = rng.hash_u64(spec.seed, idx, _SLOT_PICK)
        chosen = np.sort(np.argsort(keys, kind="stable")[:m])
        cidx = idx[chosen]
        noise = np.column_stack(
            [rng.normal(spec.seed, cidx, _SLOT_NOISE + 2 * a) for a in range(3)]
        )
        out[chosen, :3] = (
            pc.points[chosen, :3].astype(np.float64) + spec.noise_sigma * noise
        ).astype(np.float32)
    report = CorruptionReport(n_input=n, n_kept=n, n_perturbed=m)
    return PointCloud(out), report


_DISPATCH = {
    WeatherKind.Fog: corrupt_fog,
    WeatherKind.Rain: corrupt_precip,
    WeatherKind.Snow: corrupt_precip,
    WeatherKind.Sunlight: corrupt_sunlight,
}


def apply(pc: PointCloud, spec: CorruptionSpec):
    return _DISPATCH[spec.kind](pc, spec)


def corrupt(pc: PointCloud, kind, severity, branch_seed: int = 0):
    """Corrupt with the standard parameters for (kind, severity)."""
    return apply(pc, CorruptionSpec.standard(kind, severity, seed=branch_seed))
