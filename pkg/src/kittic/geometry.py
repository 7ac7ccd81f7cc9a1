"""Oriented boxes and their BEV / 3D overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePolygon

AREA_EPS = 1e-12


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Box3D:
    """Oriented box in the LiDAR frame.

    ``center`` is the geometric center, ``dims`` is (l, w, h) with l along
    the heading, and ``yaw`` rotates about +z.
    """

    center: tuple
    dims: tuple
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        if min(self.dims) <= 0:
            raise ValueError(f"box dims must be positive, got {self.dims}")

    @property
    def volume(self) -> float:
        l, w, h = self.dims
        return l * w * h

    @property
    def z_range(self) -> tuple:
        half = self.dims[2] / 2.0
        return self.center[2] - half, self.center[2] + half

    def corners(self) -> np.ndarray:
        """8 x 3 corner array (bottom four, then top four)."""
        bev = bev_corners(self)
        z0, z1 = self.z_range
        return np.vstack(
            [np.column_stack([bev, np.full(4, z0)]), np.column_stack([bev, np.full(4, z1)])]
        )

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the box (boundary inclusive)."""
        xyz = np.asarray(xyz, dtype=np.float64)
        d = xyz[:, :3] - np.asarray(self.center)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lx = c * d[:, 0] + s * d[:, 1]
        ly = -s * d[:, 0] + c * d[:, 1]
        l, w, h = self.dims
        return (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2) & (np.abs(d[:, 2]) <= h / 2)


def bev_corners(box: Box3D) -> np.ndarray:
    """Counter-clockwise 4 x 2 BEV rectangle."""
    l, w, _ = box.dims
    local = np.array([[l, w], [-l, w], [-l, -w], [l, -w]]) / 2.0
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(box.center[:2])


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for CCW)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _clip(subject: list, a: np.ndarray, b: np.ndarray) -> list:
    # keep the part of ``subject`` left of the directed edge a->b
    def side(p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    out = []
    n = len(subject)
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        sc, sn = side(cur), side(nxt)
        if sc >= 0:
            out.append(cur)
        if (sc >= 0) != (sn >= 0):
            t = sc / (sc - sn)
            out.append(cur + t * (nxt - cur))
    return out


def convex_intersection_area(p: np.ndarray, q: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if len(p) < 3 or len(q) < 3:
        raise DegeneratePolygon("polygons need at least 3 vertices")
    poly = list(p)
    for i in range(len(q)):
        poly = _clip(poly, q[i], q[(i + 1) % len(q)])
        if len(poly) < 3:
            return 0.0
    area = polygon_area(np.array(poly))
    return area if area > AREA_EPS else 0.0


def bev_intersection(a: Box3D, b: Box3D) -> float:
    # cheap circumscribed-circle rejection before clipping
    ra = math.hypot(a.dims[0], a.dims[1]) / 2
    rb = math.hypot(b.dims[0], b.dims[1]) / 2
    if math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= ra + rb:
        return 0.0
    return convex_intersection_area(bev_corners(a), bev_corners(b))


def iou_bev(a: Box3D, b: Box3D) -> float:
    if a == b:
        return 1.0
    inter = bev_intersection(a, b)
    union = a.dims[0] * a.dims[1] + b.dims[0] * b.dims[1] - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: Box3D, b: Box3D) -> float:
    if a == b:
        return 1.0
    lo = max(a.z_range[0], b.z_range[0])
    hi = min(a.z_range[1], b.z_range[1])
    if hi <= lo:
        return 0.0
    inter = bev_intersection(a, b) * (hi - lo)
    union = a.volume + b.volume - inter
    return min(1.0, max(0.0, inter / union))
