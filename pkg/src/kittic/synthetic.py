"""Synthetic KITTI-like scenes and a point-counting proxy detector."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import PlacementFailure
from .geometry import Box3D, bev_intersection, normalize_angle
from .image import write_image
from .kitti_io import (
    Calibration,
    PointCloud,
    box3d_to_label,
    project_box_to_image,
    write_calib,
    write_labels,
    write_point_cloud,
)
from .metrics import IOU_FUNCTIONS, DetectionResult, DifficultyLevel, evaluate_ap_r40

POINTS_PER_BOX = 200
CLUTTER_POINTS = 2000
SENSOR_HEIGHT = 1.73
IMAGE_SHAPE = (375, 1242)
MAX_ATTEMPTS = 1000
MIN_SCORE = 0.1


@dataclass
class SyntheticScene:
    cloud: PointCloud
    gt_boxes: list
    image: np.ndarray
    seed: int
    calib: Calibration = None

    def labels(self) -> list:
        h, w = self.image.shape[:2]
        out = []
        for box in self.gt_boxes:
            left, top, right, bottom = project_box_to_image(box, self.calib)
            cl = (max(0.0, left), max(0.0, top), min(w - 1.0, right), min(h - 1.0, bottom))
            full = (right - left) * (bottom - top)
            seen = max(0.0, cl[2] - cl[0]) * max(0.0, cl[3] - cl[1])
            trunc = 0.0 if full <= 0 else round(1.0 - seen / full, 2)
            out.append(box3d_to_label(box, self.calib, truncation=trunc, bbox2d=cl))
        return out


def _surface_points(box: Box3D, n: int, rng) -> np.ndarray:
    """Points on the five visible faces of a slightly shrunken box."""
    l, w, h = (0.98 * v for v in box.dims)
    # faces weighted by area: +-x (w*h), +-y (l*h), top (l*w)
    areas = np.array([w * h, w * h, l * h, l * h, l * w])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3))
    local = u * np.array([l, w, h])
    local[face == 0, 0] = l / 2
    local[face == 1, 0] = -l / 2
    local[face == 2, 1] = w / 2
    local[face == 3, 1] = -w / 2
    local[face == 4, 2] = h / 2
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    xy = local[:, :2] @ np.array([[c, s], [-s, c]])
    return np.column_stack([xy + np.asarray(box.center[:2]), local[:, 2] + box.center[2]])


def _draw_rect(img: np.ndarray, rect, color) -> None:
    h, w = img.shape[:2]
    x0, y0, x1, y1 = (int(round(v)) for v in rect)
    x0, x1 = max(0, x0), min(w - 1, x1)
    y0, y1 = max(0, y0), min(h - 1, y1)
    if x1 < x0 or y1 < y0:
        return
    img[y0 : y1 + 1, x0 : x1 + 1] = color


def generate_scene(n_objects: int, seed: int, image_shape=IMAGE_SHAPE) -> SyntheticScene:
    """Car-sized boxes on a ground plane with surface returns and clutter."""
    if n_objects < 0:
        raise ValueError("n_objects must be non-negative")
    rng = np.random.default_rng([seed, 2024])
    calib = Calibration.identity_style()
    boxes = []
    attempts = 0
    while len(boxes) < n_objects:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise PlacementFailure(f"placed {len(boxes)}/{n_objects} boxes in {MAX_ATTEMPTS} attempts")
        dims = (rng.uniform(3.5, 4.3), rng.uniform(1.4, 1.8), rng.uniform(1.3, 1.7))
        rng_m = rng.uniform(5.0, 60.0)
        az = rng.uniform(-math.radians(35), math.radians(35))
        center = (rng_m * math.cos(az), rng_m * math.sin(az), -SENSOR_HEIGHT + dims[2] / 2)
        cand = Box3D(center, dims, normalize_angle(rng.uniform(-math.pi, math.pi)))
        if all(bev_intersection(cand, b) == 0.0 for b in boxes):
            boxes.append(cand)

    parts = []
    for box in boxes:
        xyz = _surface_points(box, POINTS_PER_BOX, rng)
        parts.append(np.column_stack([xyz, rng.uniform(0.3, 0.9, POINTS_PER_BOX)]))
    # clutter just below the ground plane so it never falls inside a box
    r = rng.uniform(3.0, 70.0, CLUTTER_POINTS)
    az = rng.uniform(-math.pi, math.pi, CLUTTER_POINTS)
    ground = np.column_stack(
        [r * np.cos(az), r * np.sin(az), np.full(CLUTTER_POINTS, -SENSOR_HEIGHT - 0.05), rng.uniform(0.0, 0.3, CLUTTER_POINTS)]
    )
    parts.append(ground)
    cloud = PointCloud(np.vstack(parts).astype(np.float32))

    image = np.full((*image_shape, 3), (96, 110, 120), dtype=np.uint8)
    # far boxes first so near ones paint over them
    for box in sorted(boxes, key=lambda b: -math.hypot(*b.center[:2])):
        shade = int(60 + 120 * min(1.0, math.hypot(*box.center[:2]) / 60.0))
        _draw_rect(image, project_box_to_image(box, calib), (shade, 40, 40))
    return SyntheticScene(cloud, boxes, image, seed, calib)


def rule_detector(cloud: PointCloud, candidates, class_name: str = "Car") -> list:
    """Score each candidate by the fraction of 200 expected points inside it."""
    if len(cloud) == 0:
        return []
    xyz = cloud.xyz.astype(np.float64)
    out = []
    for box in candidates:
        score = min(1.0, max(0.0, int(box.contains(xyz).sum()) / POINTS_PER_BOX))
        if score >= MIN_SCORE:
            out.append(DetectionResult(box=box, score=score, class_name=class_name))
    return out


def decoy_candidates(boxes, seed: int, per_box: int = 1) -> list:
    """GT boxes jittered by up to +-2 m and +-30 degrees."""
    rng = np.random.default_rng([seed, 31337])
    out = []
    for box in boxes:
        for _ in range(per_box):
            dx, dy = rng.uniform(-2.0, 2.0, 2)
            dyaw = rng.uniform(-math.radians(30), math.radians(30))
            out.append(
                Box3D(
                    (box.center[0] + dx, box.center[1] + dy, box.center[2]),
                    box.dims,
                    normalize_angle(box.yaw + dyaw),
                )
            )
    return out


def export_scene(scene: SyntheticScene, root, frame_id: str) -> None:
    """Write one scene as a KITTI frame (velodyne, image_2, label_2, calib)."""
    for sub in ("velodyne", "image_2", "label_2", "calib"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    write_point_cloud(scene.cloud, os.path.join(root, "velodyne", f"{frame_id}.bin"))
    write_image(scene.image, os.path.join(root, "image_2", f"{frame_id}.png"))
    write_labels(scene.labels(), os.path.join(root, "label_2", f"{frame_id}.txt"))
    write_calib(scene.calib, os.path.join(root, "calib", f"{frame_id}.txt"))


def scene_candidates(scene: SyntheticScene) -> list:
    """GT boxes followed by one jittered decoy per box."""
    return list(scene.gt_boxes) + decoy_candidates(scene.gt_boxes, scene.seed)


def scene_ap(scenes, clouds, metric: str = "3d", difficulty=None) -> float:
    """AP of the rule detector over several scenes with (possibly corrupted) clouds."""
    difficulty = DifficultyLevel.Moderate if difficulty is None else difficulty
    gts, dets = {}, {}
    for i, (scene, cloud) in enumerate(zip(scenes, clouds)):
        fid = f"{i:06d}"
        gts[fid] = scene.labels()
        dets[fid] = rule_detector(cloud, scene_candidates(scene))
    return evaluate_ap_r40(gts, dets, "Car", IOU_FUNCTIONS[metric], 0.7, difficulty).ap
