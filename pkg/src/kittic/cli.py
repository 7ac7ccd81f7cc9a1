"""Command-line entry point: ``kittic <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__, fusion, plotting, rng
from .errors import DataError, KittiCError, MissingSubtree, PartialWrite, RowMismatch
from .image import ImageCorruptionSpec, apply as apply_image, read_image, write_image
from .kitti_io import (
    Calibration,
    list_frame_ids,
    read_calib,
    read_labels,
    read_point_cloud,
    write_point_cloud,
)
from .metrics import DifficultyLevel, detection_from_label, evaluate, rce
from .synthetic import decoy_candidates, export_scene, generate_scene, rule_detector
from .weather import CorruptionSpec, Severity, WeatherKind, apply as apply_lidar

log = logging.getLogger("kittic")

MANIFEST_SCHEMA = 1
MANIFEST_NAME = "manifest.json"
BRANCH_MODES = {"both": "both", "lidar": "lidar_only", "camera": "camera_only"}
IMAGE_SUFFIXES = (".png", ".ppm")
SEED_RULE = (
    "frame_seed = mix64(global_seed, frame_index); "
    "lidar_seed = mix64(frame_seed, 0); camera_seed = mix64(frame_seed, 1); "
    "frame_index = int(frame_id) for numeric ids, else sorted position"
)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    global_seed: int
    branch_mode: str
    input_dir: str
    output_dir: str
    frame_count: int
    lidar_spec: Optional[dict] = None
    image_spec: Optional[dict] = None
    raw_params: Optional[dict] = None
    digest: str = ""
    tool_version: str = __version__
    schema_version: int = MANIFEST_SCHEMA
    seed_rule: str = SEED_RULE
    reports: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as f:
            data = json.load(f)
        if data.get("schema_version") != MANIFEST_SCHEMA:
            raise KittiCError(f"{path}: unsupported manifest schema {data.get('schema_version')}")
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def tree_digest(root, exclude=(MANIFEST_NAME,)) -> str:
    """SHA-256 over sorted relative paths and file bytes."""
    h = hashlib.sha256()
    paths = []
    for dirpath, _, names in os.walk(root):
        for name in names:
            rel = os.path.relpath(os.path.join(dirpath, name), root)
            if rel not in exclude:
                paths.append(rel)
    for rel in sorted(paths):
        h.update(rel.replace(os.sep, "/").encode() + b"\0")
        with open(os.path.join(root, rel), "rb") as f:
            h.update(hashlib.sha256(f.read()).digest())
    return h.hexdigest()


def frame_index(frame_id: str, position: int) -> int:
    return int(frame_id) if frame_id.isdigit() else position


def _image_files(directory) -> dict:
    out = {}
    if os.path.isdir(directory):
        for name in sorted(os.listdir(directory)):
            stem, ext = os.path.splitext(name)
            if ext.lower() in IMAGE_SUFFIXES:
                out[stem] = name
    return out


def _apply_raw(spec, raw: Optional[dict]):
    if not raw:
        return spec
    d = spec.to_dict()
    names = {f.name for f in fields(spec)}
    d.update({k: v for k, v in raw.items() if k in names and k not in ("kind", "severity", "seed")})
    return type(spec).from_dict(d)


# ---------------------------------------------------------------------------
# corrupt
# ---------------------------------------------------------------------------


def cmd_corrupt(
    in_dir,
    out_dir,
    kind,
    severity,
    branch_mode: str = "both",
    seed: int = 0,
    jobs: int = 1,
    raw_params: Optional[dict] = None,
) -> RunManifest:
    """Write a corrupted copy of a KITTI tree and return its manifest."""
    kind, severity = WeatherKind.parse(kind), Severity.parse(severity)
    mode = BRANCH_MODES.get(branch_mode, branch_mode)
    if mode not in BRANCH_MODES.values():
        raise ValueError(f"unknown branch mode {branch_mode!r}")
    for sub in ("velodyne", "image_2"):
        if not os.path.isdir(os.path.join(in_dir, sub)):
            raise MissingSubtree(f"{in_dir} has no {sub}/ directory")
    if os.path.exists(out_dir) and os.listdir(out_dir):
        raise KittiCError(f"output directory {out_dir} is not empty")

    lidar_tpl = _apply_raw(CorruptionSpec.standard(kind, severity), raw_params)
    image_tpl = _apply_raw(ImageCorruptionSpec.standard(kind, severity), raw_params)
    bins = list_frame_ids(os.path.join(in_dir, "velodyne"), ".bin")
    images = _image_files(os.path.join(in_dir, "image_2"))
    frame_ids = sorted(set(bins) | set(images))

    parent = os.path.dirname(os.path.abspath(out_dir))
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".kittic-partial-", dir=parent)
    totals = {"n_input": 0, "n_kept": 0, "n_scattered": 0, "n_dropped": 0, "n_perturbed": 0}

    def work(pos_fid):
        pos, fid = pos_fid
        fseed = rng.mix64(seed, frame_index(fid, pos))
        counts = {}
        if fid in bins:
            src = os.path.join(in_dir, "velodyne", f"{fid}.bin")
            dst = os.path.join(tmp, "velodyne", f"{fid}.bin")
            if mode == "camera_only":
                shutil.copyfile(src, dst)
            else:
                cloud, report = apply_lidar(read_point_cloud(src), lidar_tpl.with_seed(rng.mix64(fseed, 0)))
                write_point_cloud(cloud, dst)
                counts = {k: getattr(report, k) for k in totals}
        if fid in images:
            src = os.path.join(in_dir, "image_2", images[fid])
            dst = os.path.join(tmp, "image_2", images[fid])
            if mode == "lidar_only":
                shutil.copyfile(src, dst)
            else:
                spec = ImageCorruptionSpec.from_dict({**image_tpl.to_dict(), "seed": rng.mix64(fseed, 1)})
                write_image(apply_image(read_image(src), spec), dst)
        return counts

    try:
        for sub in ("velodyne", "image_2"):
            os.makedirs(os.path.join(tmp, sub))
        for sub in ("label_2", "calib"):
            if os.path.isdir(os.path.join(in_dir, sub)):
                shutil.copytree(os.path.join(in_dir, sub), os.path.join(tmp, sub))
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for counts in pool.map(work, enumerate(frame_ids)):
                for k, v in counts.items():
                    totals[k] += v
        manifest = RunManifest(
            command="corrupt",
            global_seed=int(seed),
            branch_mode=mode,
            input_dir=os.path.abspath(in_dir),
            output_dir=os.path.abspath(out_dir),
            frame_count=len(frame_ids),
            lidar_spec=None if mode == "camera_only" else {**lidar_tpl.to_dict(), "seed": None},
            image_spec=None if mode == "lidar_only" else {**image_tpl.to_dict(), "seed": None},
            raw_params=raw_params or None,
            digest=tree_digest(tmp),
            reports={"lidar_totals": totals} if mode != "camera_only" else {},
        )
        with open(os.path.join(tmp, MANIFEST_NAME), "w") as f:
            f.write(manifest.to_json() + "\n")
        if os.path.isdir(out_dir):
            os.rmdir(out_dir)
        os.replace(tmp, out_dir)
    except KittiCError:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    except Exception as e:
        shutil.rmtree(tmp, ignore_errors=True)
        raise PartialWrite(f"corruption of {in_dir} aborted, partial output removed: {e}") from e
    return manifest


def replay_manifest(manifest_path, out_dir=None, in_dir=None, jobs: int = 1) -> tuple:
    """Re-run a recorded corruption; returns (new manifest, digest matches)."""
    m = RunManifest.load(manifest_path)
    spec = m.lidar_spec or m.image_spec
    new = cmd_corrupt(
        in_dir or m.input_dir,
        out_dir or m.output_dir,
        spec["kind"],
        spec["severity"],
        m.branch_mode,
        m.global_seed,
        jobs,
        m.raw_params,
    )
    return new, new.digest == m.digest


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _label_dirs(root):
    """Resolve (label dir, calib dir or None) for a KITTI root or a bare label dir."""
    if os.path.isdir(os.path.join(root, "label_2")):
        labels = os.path.join(root, "label_2")
        calib = os.path.join(root, "calib")
    else:
        labels = root
        calib = os.path.join(os.path.dirname(os.path.abspath(root)), "calib")
    return labels, calib if os.path.isdir(calib) else None


def load_frames(gt_dir, det_dir):
    """Read GT labels, detections and calibrations keyed by frame id."""
    for d in (gt_dir, det_dir):
        if not os.path.isdir(d):
            raise DataError(f"{d} is not a directory")
    gt_labels, calib_dir = _label_dirs(gt_dir)
    det_labels, _ = _label_dirs(det_dir)
    gt_ids = list_frame_ids(gt_labels, ".txt")
    det_ids = list_frame_ids(det_labels, ".txt")
    calibs = {}
    default = Calibration.identity_style()
    for fid in gt_ids:
        path = os.path.join(calib_dir, f"{fid}.txt") if calib_dir else None
        calibs[fid] = read_calib(path) if path and os.path.exists(path) else default
    gts = {fid: read_labels(os.path.join(gt_labels, f"{fid}.txt")) for fid in gt_ids}
    if not det_ids:
        # an empty detection directory means "no detections anywhere"
        dets = {fid: [] for fid in gt_ids}
    else:
        dets = {}
        for fid in det_ids:
            labels = read_labels(os.path.join(det_labels, f"{fid}.txt"))
            calib = calibs.get(fid, default)
            dets[fid] = [detection_from_label(lab, calib) for lab in labels if lab.class_name != "DontCare"]
    return gts, dets, calibs


def cmd_evaluate(
    gt_dir,
    det_dir,
    out_dir,
    class_name: str = "Car",
    difficulties=tuple(DifficultyLevel),
    iou_3d: Optional[float] = None,
    iou_bev: Optional[float] = None,
):
    gts, dets, calibs = load_frames(gt_dir, det_dir)
    thresholds = {}
    if iou_3d is not None:
        thresholds["3d"] = iou_3d
    if iou_bev is not None:
        thresholds["bev"] = iou_bev
    summary = evaluate(gts, dets, class_name, difficulties, thresholds, calibs)
    os.makedirs(out_dir, exist_ok=True)
    summary.write_csv(os.path.join(out_dir, "summary.csv"))
    summary.write_pr_csv(os.path.join(out_dir, "pr_curves.csv"))
    return summary


# ---------------------------------------------------------------------------
# rce
# ---------------------------------------------------------------------------


def read_summary_csv(path) -> dict:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"metric", "difficulty", "ap"} - set(reader.fieldnames or ())
        if missing:
            raise RowMismatch(f"{path}: missing column(s) {sorted(missing)}")
        return {(r["metric"], r["difficulty"]): float(r["ap"]) for r in reader}


def parse_corruption_label(label: str) -> tuple:
    if "_" in label:
        kind, sev = label.rsplit("_", 1)
        return kind, sev
    return label, ""


def cmd_rce(clean_csv, corrupt_csvs: dict, out_dir) -> list:
    """One RCE row per (corruption, severity, metric, difficulty)."""
    clean = read_summary_csv(clean_csv)
    rows = []
    for label, path in corrupt_csvs.items():
        corrupted = read_summary_csv(path)
        if set(corrupted) != set(clean):
            diff = sorted(set(corrupted) ^ set(clean))
            raise RowMismatch(f"{path}: rows differ from {clean_csv}: {diff[:4]}")
        kind, sev = parse_corruption_label(label)
        for key in sorted(clean):
            rows.append(
                {
                    "corruption": kind,
                    "severity": sev,
                    "metric": key[0],
                    "difficulty": key[1],
                    "ap_clean": clean[key],
                    "ap_corrupt": corrupted[key],
                    "rce": rce(clean[key], corrupted[key]),
                }
            )
    os.makedirs(out_dir, exist_ok=True)
    cols = ["corruption", "severity", "metric", "difficulty", "ap_clean", "ap_corrupt", "rce"]
    with open(os.path.join(out_dir, "rce.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if c not in ("ap_clean", "ap_corrupt", "rce") else f"{r[c]:.6f}" for c in cols])
    plot_csv = os.path.join(out_dir, "rce_plot.csv")
    with open(plot_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["corruption", "severity", "metric", "difficulty", "rce"])
        for r in rows:
            w.writerow([r["corruption"], r["severity"], r["metric"], r["difficulty"], f"{r['rce']:.6f}"])
    for metric, diff in sorted({(r["metric"], r["difficulty"]) for r in rows}):
        plotting.rce_bars(plot_csv, os.path.join(out_dir, f"rce_{metric}_{diff}.svg"), metric, diff)
    return rows


# ---------------------------------------------------------------------------
# fusion-demo
# ---------------------------------------------------------------------------


def fusion_run(strategy, n, d, M, epochs, lr, seed, hidden=16, grad_samples=16) -> dict:
    data = fusion.generate_toy_dataset(n, d, M, seed)
    result = fusion.train(data, strategy, epochs=epochs, lr=lr, seed=seed, hidden=hidden)
    probe = data.subset(np.arange(min(grad_samples, len(data))))
    init = fusion.FusionModel.init(strategy, d, hidden=hidden, seed=seed)
    run = {
        "seed": seed,
        "accuracy": result.accuracy,
        "final_loss": result.losses[-1] if result.losses else None,
        "grad_check_max_rel_err": fusion.grad_check(init, probe.F_P, probe.F_I, probe.labels.astype(float)),
        "model": result.model.to_dict(),
    }
    if result.model.strategy is fusion.Strategy.SigmoidGate:
        stats = fusion.gate_statistics(result.model, data.subset(result.test_idx))
        run["gate"] = {
            "mean_w_P": stats.mean_w_P,
            "mean_w_I": stats.mean_w_I,
            "delta_w_P_vs_clean": stats.delta,
            "trend_w_P_w_I": {k: list(v) for k, v in stats.trend().items()},
            "note": "w_I = 1 - w_P per cell, so mean_w_P + mean_w_I = 1",
        }
    return run


def cmd_fusion_demo(strategy="sigmoid", n=4000, d=8, M=4, epochs=400, lr=1.0, seed=0, seeds=1, hidden=16) -> dict:
    strategy = fusion.Strategy.parse(strategy)
    runs = [fusion_run(strategy, n, d, M, epochs, lr, seed + k, hidden) for k in range(seeds)]
    report = {
        "strategy": strategy.value,
        "config": {"n": n, "d": d, "M": M, "epochs": epochs, "lr": lr, "seed": seed, "seeds": seeds, "hidden": hidden},
        "runs": runs,
    }
    agg = {"accuracy": {k: float(np.mean([r["accuracy"][k] for r in runs])) for k in runs[0]["accuracy"]}}
    if "gate" in runs[0]:
        agg["mean_w_P"] = {
            t: float(np.mean([r["gate"]["mean_w_P"][t] for r in runs])) for t in runs[0]["gate"]["mean_w_P"]
        }
        agg["delta_w_P_vs_clean"] = {t: v - agg["mean_w_P"]["clean"] for t, v in agg["mean_w_P"].items()}
    agg["grad_check_max_rel_err"] = max(r["grad_check_max_rel_err"] for r in runs)
    report["aggregate"] = agg
    return report


# ---------------------------------------------------------------------------
# synth / detect / report
# ---------------------------------------------------------------------------


def cmd_synth(out_dir, frames: int, objects: int, seed: int = 0) -> None:
    for i in range(frames):
        export_scene(generate_scene(objects, rng.mix64(seed, i) & 0x7FFFFFFF), out_dir, f"{i:06d}")


def cmd_detect(data_dir, out_dir, seed: int = 0) -> None:
    """Rule detector over GT boxes plus jittered decoys, written as KITTI labels."""
    from .kitti_io import box3d_to_label, label_to_box3d, write_labels

    os.makedirs(out_dir, exist_ok=True)
    labels_dir, calib_dir = _label_dirs(data_dir)
    for pos, fid in enumerate(list_frame_ids(labels_dir, ".txt")):
        calib_path = os.path.join(calib_dir, f"{fid}.txt") if calib_dir else None
        calib = read_calib(calib_path) if calib_path and os.path.exists(calib_path) else Calibration.identity_style()
        gt_boxes = [
            label_to_box3d(lab, calib) for lab in read_labels(os.path.join(labels_dir, f"{fid}.txt"))
            if lab.class_name == "Car"
        ]
        candidates = gt_boxes + decoy_candidates(gt_boxes, rng.mix64(seed, frame_index(fid, pos)) & 0x7FFFFFFF)
        cloud = read_point_cloud(os.path.join(data_dir, "velodyne", f"{fid}.bin"))
        dets = rule_detector(cloud, candidates)
        write_labels(
            [box3d_to_label(d.box, calib, score=d.score) for d in dets], os.path.join(out_dir, f"{fid}.txt")
        )


def cmd_report(in_dir, out_dir=None) -> list:
    """Render figures for every report artifact found under ``in_dir``."""
    out_dir = out_dir or in_dir
    os.makedirs(out_dir, exist_ok=True)
    made = []
    for dirpath, _, names in sorted(os.walk(in_dir)):
        rel = os.path.relpath(dirpath, in_dir)
        tag = "" if rel == "." else rel.replace(os.sep, "_") + "_"
        for name in sorted(names):
            src = os.path.join(dirpath, name)
            if name == "rce_plot.csv":
                with open(src, newline="") as f:
                    keys = sorted({(r["metric"], r["difficulty"]) for r in csv.DictReader(f)})
                for metric, diff in keys:
                    dst = os.path.join(out_dir, f"{tag}rce_{metric}_{diff}.svg")
                    plotting.rce_bars(src, dst, metric, diff)
                    made.append((dst, src))
            elif name == "pr_curves.csv":
                dst = os.path.join(out_dir, f"{tag}pr_curves.svg")
                plotting.pr_curves(src, dst)
                made.append((dst, src))
            elif name.endswith(".json") and name != MANIFEST_NAME:
                with open(src) as f:
                    data = json.load(f)
                if isinstance(data, dict) and data.get("runs") and "gate" in data["runs"][0]:
                    dst = os.path.join(out_dir, f"{tag}{name[:-5]}_gates.svg")
                    plotting.gate_bars(data, dst)
                    made.append((dst, src))
    with open(os.path.join(out_dir, "figures.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["figure", "source"])
        for dst, src in made:
            w.writerow([os.path.relpath(dst, out_dir), os.path.relpath(src, in_dir)])
    return made


# ---------------------------------------------------------------------------
# argparse
# ---------------------------------------------------------------------------


def _difficulties(text: str):
    return tuple(DifficultyLevel.parse(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kittic", description="Weather corruption and robustness evaluation for KITTI-format data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corrupt", help="write a weather-corrupted copy of a KITTI tree")
    c.add_argument("in_dir", nargs="?")
    c.add_argument("out_dir", nargs="?")
    c.add_argument("--kind", choices=[k.value for k in WeatherKind])
    c.add_argument("--severity", choices=[s.value for s in Severity])
    c.add_argument("--branch", choices=list(BRANCH_MODES), default="both")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--raw-params", help="JSON object overriding physical parameters (recorded in the manifest)")
    c.add_argument("--manifest", help="replay a recorded manifest instead of reading --kind/--severity")

    e = sub.add_parser("evaluate", help="3D and BEV AP (R40) of detections against ground truth")
    e.add_argument("gt_dir")
    e.add_argument("det_dir")
    e.add_argument("--out", required=True)
    e.add_argument("--class", dest="class_name", default="Car")
    e.add_argument("--difficulty", default="easy,moderate,hard")
    e.add_argument("--iou-3d", type=float)
    e.add_argument("--iou-bev", type=float)

    r = sub.add_parser("rce", help="relative corruption error table and bar charts")
    r.add_argument("clean_csv")
    r.add_argument("corrupt_csvs", nargs="+", help="LABEL=PATH or PATH (label taken from the file stem, e.g. fog_low)")
    r.add_argument("--out", required=True)

    f = sub.add_parser("fusion-demo", help="train the toy fusion model and report accuracy and gate weights")
    f.add_argument("--strategy", choices=[s.value for s in fusion.Strategy], default="sigmoid")
    f.add_argument("--n", type=int, default=4000)
    f.add_argument("--d", type=int, default=8)
    f.add_argument("--m", type=int, default=4)
    f.add_argument("--epochs", type=int, default=400)
    f.add_argument("--lr", type=float, default=1.0)
    f.add_argument("--hidden", type=int, default=16)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to sweep")
    f.add_argument("--out", help="write the JSON report here instead of stdout")

    s = sub.add_parser("synth", help="export synthetic scenes as a KITTI tree")
    s.add_argument("out_dir")
    s.add_argument("--frames", type=int, default=10)
    s.add_argument("--objects", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("detect", help="run the rule detector on a KITTI tree")
    d.add_argument("data_dir")
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("report", help="render figures from report CSV/JSON files")
    rp.add_argument("in_dir")
    rp.add_argument("--out")
    return p


def _run(args, parser) -> int:
    if args.command == "corrupt":
        raw = json.loads(args.raw_params) if args.raw_params else None
        if args.manifest:
            # a single positional names the replay output
            in_dir, out_dir = (None, args.in_dir) if args.out_dir is None else (args.in_dir, args.out_dir)
            m, same = replay_manifest(args.manifest, out_dir, in_dir, args.jobs)
            print(f"replayed {m.frame_count} frames -> {m.output_dir}; digest {'matches' if same else 'DIFFERS'}")
            return 0 if same else 3
        if not (args.in_dir and args.out_dir and args.kind and args.severity):
            parser.error("corrupt needs IN_DIR OUT_DIR --kind --severity (or --manifest)")
        m = cmd_corrupt(args.in_dir, args.out_dir, args.kind, args.severity, args.branch, args.seed, args.jobs, raw)
        print(f"corrupted {m.frame_count} frames -> {m.output_dir} (digest {m.digest[:16]})")
    elif args.command == "evaluate":
        summary = cmd_evaluate(
            args.gt_dir, args.det_dir, args.out, args.class_name, _difficulties(args.difficulty), args.iou_3d, args.iou_bev
        )
        for (metric, diff), res in sorted(summary.results.items()):
            print(f"{metric:>3} {diff.name.lower():<8} AP={res.ap:7.2f} n_gt={res.n_gt}")
    elif args.command == "rce":
        inputs = {}
        for item in args.corrupt_csvs:
            label, _, path = item.rpartition("=")
            if not label:
                label = os.path.splitext(os.path.basename(path))[0]
            inputs[label] = path
        rows = cmd_rce(args.clean_csv, inputs, args.out)
        print(f"wrote {len(rows)} RCE rows to {args.out}")
    elif args.command == "fusion-demo":
        report = cmd_fusion_demo(args.strategy, args.n, args.d, args.m, args.epochs, args.lr, args.seed, args.seeds, args.hidden)
        text = json.dumps(report, indent=2)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
            print(json.dumps(report["aggregate"], indent=2))
        else:
            print(text)
    elif args.command == "synth":
        cmd_synth(args.out_dir, args.frames, args.objects, args.seed)
    elif args.command == "detect":
        cmd_detect(args.data_dir, args.out, args.seed)
    elif args.command == "report":
        for dst, _ in cmd_report(args.in_dir, args.out):
            print(dst)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args, parser)
    except KittiCError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, json.JSONDecodeError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
