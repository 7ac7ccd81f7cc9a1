"""
KITTI file formats: velodyne point clouds, object labels and calibration.

Coordinate frames (KITTI convention):
    LiDAR:   x forward, y left, z up   (canonical frame for this package)
    Camera:  x right,   y down, z forward (rectified camera 2)

Labels store the bottom-center of a box in the camera frame; ``Box3D`` uses
the geometric center in the LiDAR frame.  The conversion lives here only.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    IoFailure,
    MalformedLine,
    NonFiniteValue,
    SingularCalibration,
    TruncatedFile,
    UnknownMatrixKey,
)
from .geometry import Box3D, normalize_angle

POINT_DTYPE = np.dtype("<f4")
BYTES_PER_POINT = 16


@dataclass
class PointCloud:
    """N x 4 float32 array of (x, y, z, reflectance) in the LiDAR frame."""

    points: np.ndarray
    frame: str = "lidar"
    # set by read_point_cloud: raw reflectance values outside [0, 1]
    n_reflectance_out_of_range: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"point array must be (N, 4), got {pts.shape}")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def reflectance(self) -> np.ndarray:
        return self.points[:, 3]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.tobytes() == other.points.tobytes()


def read_point_cloud(path) -> PointCloud:
    raw = _read_bytes(path)
    if len(raw) % BYTES_PER_POINT:
        raise TruncatedFile(
            f"{path}: {len(raw)} bytes is not a multiple of {BYTES_PER_POINT}"
        )
    pts = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4).copy()
    bad = ~np.isfinite(pts)
    if bad.any():
        flat = int(np.flatnonzero(bad.any(axis=1))[0])
        raise NonFiniteValue(f"{path}: non-finite value at point {flat}", index=flat)
    refl = pts[:, 3]
    n_out = int(np.count_nonzero((refl < 0) | (refl > 1)))
    return PointCloud(pts, n_reflectance_out_of_range=n_out)


def write_point_cloud(pc: PointCloud, path) -> None:
    pts = np.array(pc.points, dtype=POINT_DTYPE, copy=True)
    if not np.isfinite(pts).all():
        idx = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise NonFiniteValue(f"non-finite value at point {idx}", index=idx)
    r = pts[:, 3]
    # leave in-range values (including -0.0) untouched so round trips are bitwise
    pts[:, 3] = np.where(r < 0, np.float32(0), np.where(r > 1, np.float32(1), r))
    try:
        with open(path, "wb") as f:
            f.write(pts.astype(POINT_DTYPE).tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------


@dataclass
class ObjectLabel:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple  # (left, top, right, bottom) pixels
    dims: tuple  # (h, w, l) meters
    location: tuple  # (x, y, z) camera frame, bottom center
    rotation_y: float
    score: Optional[float] = None

    @property
    def bbox_height(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]

    def to_line(self) -> str:
        fields = [
            self.class_name,
            f"{self.truncation:.2f}",
            f"{int(self.occlusion)}",
            f"{self.alpha:.2f}",
            *(f"{v:.2f}" for v in self.bbox2d),
            *(f"{v:.2f}" for v in self.dims),
            *(f"{v:.2f}" for v in self.location),
            f"{self.rotation_y:.2f}",
        ]
        if self.score is not None:
            fields.append(repr(float(self.score)))
        return " ".join(fields)

    @classmethod
    def from_line(cls, line: str, line_number: int = 0) -> "ObjectLabel":
        parts = line.split()
        if len(parts) not in (15, 16):
            raise MalformedLine(
                f"line {line_number}: expected 15 or 16 fields, got {len(parts)}",
                line_number=line_number,
            )
        try:
            v = [float(p) for p in parts[1:]]
        except ValueError as e:
            raise MalformedLine(f"line {line_number}: {e}", line_number=line_number) from e
        return cls(
            class_name=parts[0],
            truncation=v[0],
            occlusion=int(v[1]),
            alpha=v[2],
            bbox2d=tuple(v[3:7]),
            dims=tuple(v[7:10]),
            location=tuple(v[10:13]),
            rotation_y=v[13],
            score=v[14] if len(v) == 15 else None,
        )


def read_labels(path) -> list:
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return [
        ObjectLabel.from_line(line, i)
        for i, line in enumerate(lines, start=1)
        if line.strip()
    ]


def write_labels(labels: Sequence[ObjectLabel], path) -> None:
    text = "".join(lab.to_line() + "\n" for lab in labels)
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

REQUIRED_CALIB_KEYS = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}

# LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd), no offset
VELO_TO_CAM_AXES = np.array(
    [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]]
)


@dataclass
class Calibration:
    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P2 = np.asarray(self.P2, dtype=np.float64).reshape(3, 4)
        self.R0_rect = np.asarray(self.R0_rect, dtype=np.float64).reshape(3, 3)
        self.Tr_velo_to_cam = np.asarray(self.Tr_velo_to_cam, dtype=np.float64).reshape(3, 4)

    @classmethod
    def identity_style(cls, focal: float = 721.5377, cx: float = 609.5593, cy: float = 172.854):
        """Pure axis permutation between frames, no rectification or offset."""
        P2 = np.array([[focal, 0, cx, 0], [0, focal, cy, 0], [0, 0, 1, 0]], dtype=np.float64)
        return cls(P2=P2, R0_rect=np.eye(3), Tr_velo_to_cam=VELO_TO_CAM_AXES.copy())

    def check_orthonormal(self, tol: float = 1e-3) -> bool:
        for m in (self.R0_rect, self.Tr_velo_to_cam[:, :3]):
            if np.abs(m @ m.T - np.eye(3)).max() > tol:
                return False
        return True

    def _velo_to_rect(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :] = self.Tr_velo_to_cam
        R = np.eye(4)
        R[:3, :3] = self.R0_rect
        return R @ T

    def rect_to_velo_matrix(self) -> np.ndarray:
        M = self._velo_to_rect()
        if abs(np.linalg.det(M[:3, :3])) < 1e-9:
            raise SingularCalibration("rotation blocks are not invertible")
        return np.linalg.inv(M)

    def velo_to_rect(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        hom = np.hstack([pts[:, :3], np.ones((pts.shape[0], 1))])
        return (hom @ self._velo_to_rect().T)[:, :3]

    def rect_to_velo(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        hom = np.hstack([pts[:, :3], np.ones((pts.shape[0], 1))])
        return (hom @ self.rect_to_velo_matrix().T)[:, :3]

    def rect_to_image(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        hom = np.hstack([pts[:, :3], np.ones((pts.shape[0], 1))])
        uvw = hom @ self.P2.T
        return uvw[:, :2] / uvw[:, 2:3]


def read_calib(path) -> Calibration:
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    mats = {}
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if ":" not in line:
            raise MalformedLine(f"line {i}: missing ':'", line_number=i)
        key, rest = line.split(":", 1)
        try:
            mats[key.strip()] = np.array([float(x) for x in rest.split()])
        except ValueError as e:
            raise MalformedLine(f"line {i}: {e}", line_number=i) from e
    for key, shape in REQUIRED_CALIB_KEYS.items():
        if key not in mats:
            raise UnknownMatrixKey(f"{path}: required key {key!r} not found")
        if mats[key].size != shape[0] * shape[1]:
            raise MalformedLine(f"{path}: {key} has {mats[key].size} values")
    extra = {k: v for k, v in mats.items() if k not in REQUIRED_CALIB_KEYS}
    return Calibration(mats["P2"], mats["R0_rect"], mats["Tr_velo_to_cam"], extra=extra)


def write_calib(calib: Calibration, path) -> None:
    rows = [
        ("P2", calib.P2),
        ("R0_rect", calib.R0_rect),
        ("Tr_velo_to_cam", calib.Tr_velo_to_cam),
    ]
    text = "".join(
        f"{k}: " + " ".join(f"{v:.12e}" for v in m.ravel()) + "\n" for k, m in rows
    )
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------------------
# Label <-> Box3D
# ---------------------------------------------------------------------------


def _camera_heading(rotation_y: float) -> np.ndarray:
    # object length axis in the camera frame for a rotation about camera y
    return np.array([math.cos(rotation_y), 0.0, -math.sin(rotation_y)])


def label_to_box3d(label: ObjectLabel, calib: Calibration) -> Box3D:
    """Convert a camera-frame label into a LiDAR-frame ``Box3D``.

    The bottom-center location is lifted by h/2 along camera "up" (-y) and
    transformed; yaw is taken from the transformed heading axis.
    """
    h, w, l = label.dims
    x, y, z = label.location
    M = calib.rect_to_velo_matrix()
    center = (M @ np.array([x, y - h / 2.0, z, 1.0]))[:3]
    heading = M[:3, :3] @ _camera_heading(label.rotation_y)
    yaw = normalize_angle(math.atan2(heading[1], heading[0]))
    return Box3D(center=tuple(center), dims=(l, w, h), yaw=yaw)


def box3d_to_label(
    box: Box3D,
    calib: Calibration,
    class_name: str = "Car",
    score: Optional[float] = None,
    truncation: float = 0.0,
    occlusion: int = 0,
    bbox2d: Optional[tuple] = None,
) -> ObjectLabel:
    """Inverse of ``label_to_box3d``; ``bbox2d`` defaults to the projected box."""
    l, w, h = box.dims
    M = calib._velo_to_rect()
    cx, cy, cz = (M @ np.array([*box.center, 1.0]))[:3]
    d = M[:3, :3] @ np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0])
    # heading (cos ry, 0, -sin ry) -> ry = atan2(-d_z, d_x); exact for a level rig
    rotation_y = math.atan2(-d[2], d[0])
    # a tilted rig makes that only approximate, so refine against the forward
    # map (slope close to -1, converges in a couple of steps)
    R = calib.rect_to_velo_matrix()[:3, :3]
    for _ in range(8):
        fwd = R @ _camera_heading(rotation_y)
        err = normalize_angle(math.atan2(fwd[1], fwd[0]) - box.yaw)
        if abs(err) < 1e-14:
            break
        rotation_y += err
    rotation_y = normalize_angle(rotation_y)
    alpha = normalize_angle(rotation_y - math.atan2(cx, cz))
    if bbox2d is None:
        bbox2d = project_box_to_image(box, calib)
    return ObjectLabel(
        class_name=class_name,
        truncation=truncation,
        occlusion=occlusion,
        alpha=alpha,
        bbox2d=tuple(float(v) for v in bbox2d),
        dims=(h, w, l),
        location=(float(cx), float(cy + h / 2.0), float(cz)),
        rotation_y=rotation_y,
        score=score,
    )


def project_box_to_image(box: Box3D, calib: Calibration) -> tuple:
    """Unclipped 2D bounding rectangle of the projected 3D box corners."""
    corners = calib.velo_to_rect(box.corners())
    uv = calib.rect_to_image(corners)
    return (
        float(uv[:, 0].min()),
        float(uv[:, 1].min()),
        float(uv[:, 0].max()),
        float(uv[:, 1].max()),
    )


def list_frame_ids(directory, suffix: str) -> list:
    if not os.path.isdir(directory):
        return []
    return sorted(
        name[: -len(suffix)] for name in os.listdir(directory) if name.endswith(suffix)
    )
