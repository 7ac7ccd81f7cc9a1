"""Detection metrics: KITTI difficulty tiers, AP at 40 recall points, RCE."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import MismatchedFrames, ZeroCleanAp
from .geometry import Box3D, iou_3d, iou_bev
from .kitti_io import Calibration, ObjectLabel, label_to_box3d

N_RECALL = 40
DONTCARE_OVERLAP = 0.5

# KITTI protocol cutoffs: min bbox height (px), max occlusion, max truncation
DIFFICULTY_CUTOFFS = {
    0: (40.0, 0, 0.15),
    1: (25.0, 1, 0.30),
    2: (25.0, 2, 0.50),
}

DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Van": 0.7, "Truck": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}


class DifficultyLevel(enum.IntEnum):
    Easy = 0
    Moderate = 1
    Hard = 2

    @classmethod
    def parse(cls, name: str) -> "DifficultyLevel":
        key = name.strip().lower()
        aliases = {"easy": cls.Easy, "moderate": cls.Moderate, "medium": cls.Moderate, "hard": cls.Hard}
        if key not in aliases:
            raise ValueError(f"unknown difficulty {name!r}")
        return aliases[key]


def assign_difficulty(label: ObjectLabel) -> Optional[DifficultyLevel]:
    """Easiest tier whose cutoffs the label meets, or None when ignored."""
    height = label.bbox_height
    for level in DifficultyLevel:
        min_h, max_occ, max_trunc = DIFFICULTY_CUTOFFS[level]
        if height >= min_h and label.occlusion <= max_occ and label.truncation <= max_trunc:
            return level
    return None


IOU_FUNCTIONS = {"3d": iou_3d, "bev": iou_bev}


@dataclass
class DetectionResult:
    box: Box3D
    score: float
    class_name: str = "Car"
    bbox2d: Optional[tuple] = None


def detection_from_label(label: ObjectLabel, calib: Calibration) -> DetectionResult:
    return DetectionResult(
        box=label_to_box3d(label, calib),
        score=1.0 if label.score is None else float(label.score),
        class_name=label.class_name,
        bbox2d=tuple(label.bbox2d),
    )


# ---------------------------------------------------------------------------
# Per-frame matching
# ---------------------------------------------------------------------------

# outcomes of a single detection
TP, FP, ABSORBED = 1, 0, -1


@dataclass
class _GtEntry:
    box: Optional[Box3D]
    eligible: bool  # counts toward recall
    bbox2d: tuple
    dontcare: bool = False


def _prepare_gts(labels, calib, class_name, difficulty):
    entries = []
    for lab in labels:
        if lab.class_name == "DontCare":
            entries.append(_GtEntry(None, False, tuple(lab.bbox2d), dontcare=True))
            continue
        if lab.class_name != class_name:
            continue
        tier = assign_difficulty(lab)
        eligible = tier is not None and tier <= difficulty
        entries.append(_GtEntry(label_to_box3d(lab, calib), eligible, tuple(lab.bbox2d)))
    return entries


def _inside_fraction(det_box2d, region) -> float:
    w = min(det_box2d[2], region[2]) - max(det_box2d[0], region[0])
    h = min(det_box2d[3], region[3]) - max(det_box2d[1], region[1])
    area = (det_box2d[2] - det_box2d[0]) * (det_box2d[3] - det_box2d[1])
    if w <= 0 or h <= 0 or area <= 0:
        return 0.0
    return w * h / area


def match_frame(
    gts: Sequence[_GtEntry],
    dets: Sequence[DetectionResult],
    iou_fn: Callable,
    iou_threshold: float,
) -> list:
    """Greedy matching in descending score order; returns one outcome per det.

    Equal scores keep input order; equal-IoU candidates go to the lowest GT
    index.  Eligible GTs are preferred over ignored ones.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    used = [False] * len(gts)
    outcome = [FP] * len(dets)
    for di in order:
        det = dets[di]
        best = {True: (-1.0, -1), False: (-1.0, -1)}
        for gi, gt in enumerate(gts):
            if used[gi] or gt.dontcare:
                continue
            iou = iou_fn(det.box, gt.box)
            if iou >= iou_threshold and iou > best[gt.eligible][0]:
                best[gt.eligible] = (iou, gi)
        if best[True][1] >= 0:
            used[best[True][1]] = True
            outcome[di] = TP
        elif best[False][1] >= 0:
            used[best[False][1]] = True
            outcome[di] = ABSORBED
        elif det.bbox2d is not None and any(
            gt.dontcare and _inside_fraction(det.bbox2d, gt.bbox2d) >= DONTCARE_OVERLAP
            for gt in gts
        ):
            outcome[di] = ABSORBED
    return outcome


# ---------------------------------------------------------------------------
# AP
# ---------------------------------------------------------------------------


@dataclass
class ApResult:
    ap: float  # percent
    n_gt: int
    recall: np.ndarray  # 41 samples 0, 1/40, ..., 1
    precision: np.ndarray  # interpolated precision at those recalls


def interpolated_ap(scores: np.ndarray, is_tp: np.ndarray, n_gt: int) -> ApResult:
    """R40 AP from scored TP/FP flags, one operating point per distinct score."""
    recall_grid = np.arange(N_RECALL + 1) / N_RECALL
    if n_gt == 0 or len(scores) == 0:
        return ApResult(0.0, n_gt, recall_grid, np.zeros(N_RECALL + 1))
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp_cum = np.cumsum(is_tp[order].astype(np.int64))
    n_cum = np.arange(1, len(s) + 1)
    # last index of each run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tps, totals = tp_cum[last], n_cum[last]
    prec = tps / totals
    # running max from the high-recall end
    prec_env = np.maximum.accumulate(prec[::-1])[::-1]
    p_interp = np.zeros(N_RECALL + 1)
    for i in range(N_RECALL + 1):
        # recall >= i/40  <=>  40 * tp >= i * n_gt (exact in integers)
        ok = np.flatnonzero(N_RECALL * tps >= i * n_gt)
        if len(ok):
            p_interp[i] = prec_env[ok[0]]
    ap = float(sum(p_interp[1:]) / N_RECALL * 100.0)
    return ApResult(ap, n_gt, recall_grid, p_interp)


def _check_frames(gts: Mapping, dets: Mapping):
    if set(gts) != set(dets):
        missing = sorted(set(gts) ^ set(dets))[:5]
        raise MismatchedFrames(f"frame id sets differ (e.g. {missing})")


def evaluate_ap_r40(
    gts: Mapping[str, Sequence[ObjectLabel]],
    dets: Mapping[str, Sequence[DetectionResult]],
    class_name: str = "Car",
    iou_fn: Callable = iou_3d,
    iou_threshold: Optional[float] = None,
    difficulty: DifficultyLevel = DifficultyLevel.Moderate,
    calibs: Optional[Mapping[str, Calibration]] = None,
) -> ApResult:
    """AP (percent) at 40 recall thresholds for one class and difficulty.

    ``calibs`` maps frame id to calibration; frames without one use the
    identity-style calibration of synthetic scenes.
    """
    _check_frames(gts, dets)
    if iou_threshold is None:
        iou_threshold = DEFAULT_IOU_THRESHOLDS.get(class_name, 0.7)
    default_calib = Calibration.identity_style()
    calibs = calibs or {}
    scores, flags, n_gt = [], [], 0
    for fid in sorted(gts):
        entries = _prepare_gts(gts[fid], calibs.get(fid, default_calib), class_name, difficulty)
        n_gt += sum(e.eligible for e in entries)
        frame_dets = [d for d in dets[fid] if d.class_name == class_name]
        outcome = match_frame(entries, frame_dets, iou_fn, iou_threshold)
        for d, o in zip(frame_dets, outcome):
            if o != ABSORBED:
                scores.append(d.score)
                flags.append(o == TP)
    return interpolated_ap(np.array(scores, dtype=np.float64), np.array(flags, dtype=bool), n_gt)


# ---------------------------------------------------------------------------
# Summaries and RCE
# ---------------------------------------------------------------------------


@dataclass
class EvalSummary:
    """AP per (metric, difficulty) with PR curves."""

    class_name: str = "Car"
    results: dict = field(default_factory=dict)  # (metric, DifficultyLevel) -> ApResult

    def ap(self, metric: str, difficulty: DifficultyLevel) -> float:
        return self.results[(metric, difficulty)].ap

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "difficulty", "ap", "n_gt"])
            for (metric, diff), r in sorted(self.results.items(), key=lambda kv: (kv[0][0], kv[0][1])):
                w.writerow([metric, diff.name.lower(), f"{r.ap:.4f}", r.n_gt])

    def write_pr_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "difficulty", "recall", "precision"])
            for (metric, diff), r in sorted(self.results.items(), key=lambda kv: (kv[0][0], kv[0][1])):
                for rec, prec in zip(r.recall, r.precision):
                    w.writerow([metric, diff.name.lower(), f"{rec:.6f}", f"{prec:.6f}"])


def evaluate(
    gts,
    dets,
    class_name: str = "Car",
    difficulties=tuple(DifficultyLevel),
    iou_thresholds: Optional[dict] = None,
    calibs=None,
) -> EvalSummary:
    """3D and BEV AP for every requested difficulty."""
    default = DEFAULT_IOU_THRESHOLDS.get(class_name, 0.7)
    iou_thresholds = {"3d": default, "bev": default, **(iou_thresholds or {})}
    summary = EvalSummary(class_name=class_name)
    for metric, fn in IOU_FUNCTIONS.items():
        for diff in difficulties:
            summary.results[(metric, DifficultyLevel(diff))] = evaluate_ap_r40(
                gts, dets, class_name, fn, iou_thresholds[metric], DifficultyLevel(diff), calibs
            )
    return summary


@dataclass(frozen=True)
class RceValue:
    ap_clean: float
    ap_corrupt: float
    rce: float


def rce(ap: float, ap_c: float) -> float:
    """Relative corruption error (AP - AP_c) / AP."""
    if not ap > 0:
        raise ZeroCleanAp(f"clean AP must be positive, got {ap}")
    return (ap - ap_c) / ap


def rce_value(ap: float, ap_c: float) -> RceValue:
    return RceValue(ap, ap_c, rce(ap, ap_c))
