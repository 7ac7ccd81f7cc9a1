import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kittic.geometry import Box3D  # noqa: E402
from kittic.kitti_io import PointCloud  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n, max_range=80.0):
    """Points with uniform range in (1, max_range) and reflectance in [0, 1]."""
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = rng.uniform(1.0, max_range, n)
    pts = np.column_stack([direction * r[:, None], rng.uniform(0.0, 1.0, n)])
    return PointCloud(pts.astype(np.float32))


def random_box(rng, spread=10.0):
    return Box3D(
        center=rng.uniform(-spread, spread, 3),
        dims=rng.uniform(0.5, 5.0, 3),
        yaw=rng.uniform(-math.pi, math.pi),
    )


@pytest.fixture
def fixture_image():
    """4 x 4 RGB test pattern used for the committed goldens."""
    i, j = np.mgrid[0:4, 0:4]
    img = np.stack([16 * i + 40 * j + 10, 200 - 30 * i, 60 * j + 5 * i + 20], axis=-1)
    return img.astype(np.uint8)


def random_ap_instance(rng, n_frames=10, max_objects=10):
    """Random GT labels and jittered, partly-tied detections per frame.

    Mixes difficulty tiers, ignored GTs, DontCare regions and decoys so the
    matcher's absorb paths all get exercised.
    """
    from kittic.kitti_io import Calibration, ObjectLabel, box3d_to_label
    from kittic.metrics import DetectionResult

    calib = Calibration.identity_style()
    gts, dets = {}, {}
    for f in range(int(rng.integers(1, n_frames + 1))):
        fid = f"{f:06d}"
        labels, frame_dets = [], []
        for k in range(int(rng.integers(0, max_objects + 1))):
            box = Box3D(
                (rng.uniform(5, 50), rng.uniform(-20, 20), -1.0),
                (rng.uniform(3.5, 4.5), rng.uniform(1.5, 1.8), rng.uniform(1.3, 1.7)),
                rng.uniform(-math.pi, math.pi),
            )
            top = rng.uniform(100, 200)
            height = rng.choice([20.0, 30.0, 50.0])
            x0 = rng.uniform(0, 1000)
            bbox = (x0, top, x0 + 60, top + height)
            lab = box3d_to_label(
                box, calib,
                truncation=float(rng.choice([0.0, 0.2, 0.4, 0.8])),
                occlusion=int(rng.integers(0, 4)),
                bbox2d=bbox,
            )
            labels.append(lab)
            for _ in range(int(rng.integers(0, 3))):
                jit = rng.normal(scale=rng.choice([0.05, 0.3, 1.5]), size=3)
                jbox = Box3D(
                    (box.center[0] + jit[0], box.center[1] + jit[1], box.center[2]),
                    box.dims,
                    box.yaw + 0.1 * jit[2],
                )
                frame_dets.append(DetectionResult(jbox, float(rng.choice(np.arange(1, 11) / 10)), bbox2d=bbox))
        if rng.random() < 0.5:
            dc = (200.0, 100.0, 400.0, 250.0)
            labels.append(ObjectLabel("DontCare", -1, -1, -10, dc, (-1, -1, -1), (-1000, -1000, -1000), -10))
            # a false positive that sits inside the DontCare region
            fp = Box3D((rng.uniform(5, 50), rng.uniform(-20, 20), -1.0), (4, 1.6, 1.5), 0.0)
            frame_dets.append(DetectionResult(fp, float(rng.uniform(0, 1)), bbox2d=(250.0, 120.0, 300.0, 200.0)))
        gts[fid], dets[fid] = labels, frame_dets
    return gts, dets
