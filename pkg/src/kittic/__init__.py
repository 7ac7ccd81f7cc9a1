"""Weather corruption, robustness metrics and weighted fusion for KITTI-style data."""

__version__ = "0.1.0"

from .geometry import Box3D, bev_corners, convex_intersection_area, iou_3d, iou_bev  # noqa: E402
from .kitti_io import (  # noqa: E402
    Calibration,
    ObjectLabel,
    PointCloud,
    label_to_box3d,
    read_calib,
    read_labels,
    read_point_cloud,
    write_labels,
    write_point_cloud,
)
from .metrics import DifficultyLevel, assign_difficulty, evaluate_ap_r40, rce  # noqa: E402
from .weather import CorruptionSpec, Severity, WeatherKind, corrupt  # noqa: E402
