"""Command-line pipeline driver.

Subcommands: generate, pair, clean, split, sample, evaluate-pose,
evaluate-homography, quality, stats. Every run is reproducible from its
config: all randomness derives from explicit seeds, and reports embed the
resolved config. Exit codes: 0 success, 2 bad config/arguments, 10-19
generation errors, 20-29 evaluation errors.
"""

import argparse
import json
import os
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import engine, matcher, metrics
from .augment import WarpConfig, rescale_homography, resize_long_side
from .errors import (
    CheiralityAmbiguous,
    EmptyInput,
    EstimationFailed,
    GeneratorFailed,
    IncompleteOutput,
    MdsynError,
    MissingModality,
    ParseError,
)
from .estimators import RansacConfig, corner_error, pose_error, ransac_essential, ransac_homography
from .eventsim import EventSimConfig
from .fileio import load_image
from .geometry import CameraModel, Homography, MatchSet, relative_pose
from .metrics import PairResult, aggregate_report, classify_matches, intensity_histogram

EXIT_CONFIG = 2
EXIT_GENERATION = 10
EXIT_GENERATOR_FAILED = 11
EXIT_INCOMPLETE_OUTPUT = 12
EXIT_MISSING_MODALITY = 13
EXIT_EVALUATION = 20
EXIT_EMPTY_INPUT = 21


@dataclass
class PipelineConfig:
    manifest: str
    seed: int
    out_dir: str = "out"
    cache_dir: str = None
    workers: int = 1
    max_keypoints: int = matcher.MAX_KEYPOINTS
    match_ratio: float = 0.9
    resize_long_side: int = 640
    pose_thresholds_deg: tuple = metrics.POSE_THRESHOLDS_DEG
    homography_thresholds_px: tuple = metrics.HOMOGRAPHY_THRESHOLDS_PX
    clean_threshold_px: float = engine.CLEAN_THRESHOLD_PX
    warp: WarpConfig = None
    events: EventSimConfig = None
    ransac_homography: RansacConfig = None
    ransac_essential: RansacConfig = None
    ransac_clean: RansacConfig = None
    generators: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["pose_thresholds_deg"] = list(self.pose_thresholds_deg)
        d["homography_thresholds_px"] = list(self.homography_thresholds_px)
        # worker count is an execution detail: reports must not depend on it
        d.pop("workers")
        return d


def load_config(path, seed_override=None, workers_override=None):
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ValueError("config must set an explicit 'seed' (wall-clock seeding is not allowed)")
    manifest = resolve(raw.get("manifest"))
    if manifest is None or not os.path.exists(manifest):
        raise ValueError(f"manifest path does not exist: {manifest}")

    def sub(cls, key, **defaults):
        params = dict(defaults)
        params.update(raw.get(key, {}))
        params.setdefault("seed", seed)
        return cls(**params)

    cfg = PipelineConfig(
        manifest=manifest,
        seed=int(seed),
        out_dir=resolve(raw.get("out_dir", "out")),
        cache_dir=resolve(raw.get("cache_dir")),
        workers=int(workers_override or raw.get("workers", 1)),
        max_keypoints=int(raw.get("max_keypoints", matcher.MAX_KEYPOINTS)),
        match_ratio=float(raw.get("match_ratio", 0.9)),
        resize_long_side=int(raw.get("resize_long_side", 640)),
        pose_thresholds_deg=tuple(raw.get("pose_thresholds_deg", metrics.POSE_THRESHOLDS_DEG)),
        homography_thresholds_px=tuple(
            raw.get("homography_thresholds_px", metrics.HOMOGRAPHY_THRESHOLDS_PX)
        ),
        clean_threshold_px=float(raw.get("clean_threshold_px", engine.CLEAN_THRESHOLD_PX)),
        warp=sub(WarpConfig, "warp"),
        events=sub(EventSimConfig, "events"),
        ransac_homography=sub(RansacConfig, "ransac_homography", threshold=3.0),
        ransac_essential=sub(RansacConfig, "ransac_essential", threshold=5e-4),
        ransac_clean=sub(RansacConfig, "ransac_clean", threshold=4.0),
        generators=[
            engine.GeneratorSpec(**{**g, "output_dir": resolve(g.get("output_dir"))})
            for g in raw.get("generators", [])
        ],
    )
    return cfg


def _pair_seed(seed, key):
    return int(np.random.SeedSequence([seed, zlib.crc32(key.encode())]).generate_state(1)[0])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generate / pair


def cmd_generate(cfg, modality, out_path):
    manifest = engine.load_manifest(cfg.manifest)
    cache = cfg.cache_dir or engine.default_cache_root(cfg.manifest)
    rgb = [img for img in manifest.images.values() if img.modality == "rgb"]
    if modality == "event":
        out_dir = os.path.join(cache, "event")
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for img in rgb:
            out = os.path.join(out_dir, f"{img.id}.png")
            engine.generate_event_image(
                manifest.resolve(img.path), out, seed=cfg.seed, image_id=img.id,
                motion_px=cfg.events.motion_px,
            )
            paths.append(out)
        manifest = engine.register_generated(
            manifest, "event", [img.id for img in rgb], paths,
            generator_name="builtin-event", version="1",
        )
    else:
        spec = next((g for g in cfg.generators if g.name == modality), None)
        if spec is None:
            raise GeneratorFailed(f"no generator named {modality!r} in the config")
        tag = modality if engine.valid_modality(modality) else f"external:{modality}"
        inputs = [manifest.resolve(img.path) for img in rgb]
        paths = run_paths = engine.run_generator(spec, inputs)
        manifest = engine.register_generated(
            manifest, tag, [img.id for img in rgb], run_paths,
            generator_name=spec.name, version=spec.version,
        )
    engine.save_manifest(out_path, manifest)
    return out_path


def cmd_pair(cfg, modalities, out_path):
    manifest = engine.load_manifest(cfg.manifest)
    paired = engine.build_cross_modal_pairs(manifest, modalities)
    engine.save_manifest(out_path, paired)
    return out_path


# ---------------------------------------------------------------------------
# clean / split / sample


def alignment_check_pairs(manifest):
    """Aligned (source RGB, generated) verification pairs, one per generated
    image, with identity ground truth."""
    checks = []
    for img in sorted(manifest.images.values(), key=lambda i: i.id):
        if img.source_id is not None:
            checks.append(engine.PairEntry(a=img.source_id, b=img.id, label="aligned"))
    return checks


def cmd_clean(cfg, out_path, report_path):
    manifest = engine.load_manifest(cfg.manifest)
    has_aligned = any(p.label == "aligned" for p in manifest.pairs)
    added = []
    work = manifest
    if not has_aligned:
        added = alignment_check_pairs(manifest)
        work = engine.PairManifest(
            scenes=list(manifest.scenes), images=dict(manifest.images),
            pairs=list(manifest.pairs) + added, poses=dict(manifest.poses),
            root=manifest.root,
        ).validate()

    def baseline(img_a, img_b):
        return matcher.match_images(img_a, img_b, max_kp=cfg.max_keypoints, ratio=cfg.match_ratio)

    kept, report = engine.clean_dataset(
        work, baseline, threshold=cfg.clean_threshold_px,
        matcher_name=engine.BASELINE_MATCHER_NAME,
        ransac=replace(cfg.ransac_clean, seed=cfg.seed),
    )
    if added:
        added_keys = {(p.a, p.b, p.label) for p in added}
        kept = engine.PairManifest(
            scenes=list(kept.scenes), images=dict(kept.images),
            pairs=[p for p in kept.pairs if (p.a, p.b, p.label) not in added_keys],
            poses=dict(kept.poses), root=kept.root,
        ).validate()
    engine.save_manifest(out_path, kept)
    report["config"] = cfg.to_dict()
    _write_json(report_path, report)
    return report


def cmd_split(cfg, test_scenes, pairs_per_case, out_path):
    manifest = engine.load_manifest(cfg.manifest)
    out = engine.split_train_test(manifest, test_scenes, pairs_per_case, seed=cfg.seed)
    engine.save_manifest(out_path, out)
    return out_path


def cmd_sample(cfg, modalities, count, out_path):
    manifest = engine.load_manifest(cfg.manifest)
    stream = engine.sample_training_pairs(manifest, modalities, seed=cfg.seed)
    with open(out_path, "w", encoding="ascii", newline="\n") as fh:
        for _ in range(count):
            fh.write(next(stream) + "\n")
    return out_path


# ---------------------------------------------------------------------------
# evaluation


def _resized_camera(cam, target):
    scale = target / max(cam.width, cam.height)
    return (
        CameraModel(
            fx=cam.fx * scale, fy=cam.fy * scale, cx=cam.cx * scale, cy=cam.cy * scale,
            width=max(int(np.floor(cam.width * scale + 0.5)), 1),
            height=max(int(np.floor(cam.height * scale + 0.5)), 1),
        ),
        scale,
    )


def _scale_matches(matches, scale_a, scale_b):
    pairs = matches.pairs.copy()
    pairs[:, 0:2] *= scale_a
    pairs[:, 2:4] *= scale_b
    return MatchSet(pairs, matches.image_a, matches.image_b)


def _ingest_path(source_dir, pair):
    return os.path.join(source_dir, f"{pair.a}__{pair.b}.txt")


def _pair_matches(cfg, manifest, pair, source, scale_a, scale_b, resized_a, resized_b):
    """MatchSet in resized coordinates, either from the baseline matcher on
    resized images or rescaled from an ingested correspondence file."""
    if source == "baseline":
        return matcher.match_images(
            resized_a, resized_b, max_kp=cfg.max_keypoints, ratio=cfg.match_ratio,
            ids=(pair.a, pair.b),
        )
    ingested = matcher.ingest_matches(_ingest_path(source, pair))
    return _scale_matches(ingested, scale_a, scale_b)


def _evaluate_homography_pair(cfg, manifest, pair, source):
    start = time.perf_counter()
    img_a = load_image(manifest.resolve(manifest.images[pair.a].path))
    img_b = load_image(manifest.resolve(manifest.images[pair.b].path))
    resized_a, scale_a = resize_long_side(img_a, cfg.resize_long_side)
    resized_b, scale_b = resize_long_side(img_b, cfg.resize_long_side)
    if pair.homography is not None:
        gt = Homography(np.array(pair.homography))
    else:
        gt = Homography.identity()
    gt_resized = rescale_homography(gt, scale_a, scale_b)

    matches = _pair_matches(cfg, manifest, pair, source, scale_a, scale_b, resized_a, resized_b)
    stats = classify_matches(matches, gt_resized)
    case = manifest.case_of(pair)
    h, w = resized_a.shape[:2]
    try:
        ransac_cfg = replace(cfg.ransac_homography, seed=_pair_seed(cfg.seed, pair.key))
        estimate = ransac_homography(matches, ransac_cfg)
        err = corner_error(estimate.model, gt_resized, w, h)
        failed = False
    except (EstimationFailed, MdsynError):
        err, failed = float("inf"), True
    return PairResult(
        pair_id=pair.key, case=case, error=err, match_total=stats.total,
        match_correct=stats.correct, failed=failed,
        runtime_ms=(time.perf_counter() - start) * 1e3,
    )


def _evaluate_pose_pair(cfg, manifest, pair, source):
    start = time.perf_counter()
    entry_a = manifest.images[pair.a]
    entry_b = manifest.images[pair.b]
    pose_a, cam_a = engine.pose_from_entry(manifest.poses[entry_a.pose_id])
    pose_b, cam_b = engine.pose_from_entry(manifest.poses[entry_b.pose_id])
    gt = relative_pose(pose_a, pose_b)
    cam_a_r, scale_a = _resized_camera(cam_a, cfg.resize_long_side)
    cam_b_r, scale_b = _resized_camera(cam_b, cfg.resize_long_side)

    if source == "baseline":
        img_a = load_image(manifest.resolve(entry_a.path))
        img_b = load_image(manifest.resolve(entry_b.path))
        resized_a, _ = resize_long_side(img_a, cfg.resize_long_side)
        resized_b, _ = resize_long_side(img_b, cfg.resize_long_side)
        matches = matcher.match_images(
            resized_a, resized_b, max_kp=cfg.max_keypoints, ratio=cfg.match_ratio,
            ids=(pair.a, pair.b),
        )
    else:
        matches = _scale_matches(matcher.ingest_matches(_ingest_path(source, pair)),
                                 scale_a, scale_b)
    stats = classify_matches(matches, gt, cam_a_r, cam_b_r)
    case = manifest.case_of(pair)
    try:
        ransac_cfg = replace(cfg.ransac_essential, seed=_pair_seed(cfg.seed, pair.key))
        estimate = ransac_essential(matches, cam_a_r, cam_b_r, ransac_cfg)
        err = pose_error(estimate.model, gt)
        failed = False
    except (EstimationFailed, CheiralityAmbiguous, MdsynError):
        err, failed = float("inf"), True
    return PairResult(
        pair_id=pair.key, case=case, error=err, match_total=stats.total,
        match_correct=stats.correct, failed=failed,
        runtime_ms=(time.perf_counter() - start) * 1e3,
    )


def cmd_evaluate(cfg, task, source, out_dir):
    manifest = engine.load_manifest(cfg.manifest)
    test_pairs = [p for p in manifest.pairs if p.split == "test"]
    if not test_pairs:
        raise EmptyInput("manifest has no test pairs")
    test_pairs = sorted(test_pairs, key=lambda p: p.key)

    if task == "pose":
        thresholds = cfg.pose_thresholds_deg
        evaluate = _evaluate_pose_pair
        for p in test_pairs:
            if manifest.images[p.a].pose_id is None or manifest.images[p.b].pose_id is None:
                raise EmptyInput(f"pair {p.key} lacks pose labels for pose evaluation")
    else:
        thresholds = cfg.homography_thresholds_px
        evaluate = _evaluate_homography_pair

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda p: evaluate(cfg, manifest, p, source), test_pairs))
    else:
        results = [evaluate(cfg, manifest, p, source) for p in test_pairs]

    metadata = {
        "task": task,
        "source": "baseline" if source == "baseline" else "ingest",
        "seed": cfg.seed,
        "resize_long_side": cfg.resize_long_side,
        "max_keypoints": cfg.max_keypoints,
        "correctness_cutoffs": {
            "epipolar": metrics.CORRECT_EPIPOLAR,
            "projection_px": metrics.CORRECT_PROJECTION_PX,
        },
        "auc_integration": "exact step integral (not sampled trapezoid)",
        "config": cfg.to_dict(),
    }
    report = aggregate_report(results, thresholds, task=task, metadata=metadata)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json(include_timing=False))
    metrics.write_report_csv(os.path.join(out_dir, "report.csv"), report)
    metrics.write_report_svg(os.path.join(out_dir, "report.svg"), report)
    # wall-clock timing is machine-dependent, so it lives outside the
    # byte-reproducible report files
    _write_json(
        os.path.join(out_dir, "timing.json"),
        {case: report.cases[case]["mean_runtime_ms"] for case in report.cases},
    )
    return report


# ---------------------------------------------------------------------------
# quality / stats


def cmd_quality(cfg, out_path):
    from .eventsim import to_grayscale
    from .metrics import psnr, ssim

    manifest = engine.load_manifest(cfg.manifest)
    scores = {}
    for img in sorted(manifest.images.values(), key=lambda i: i.id):
        if img.source_id is None:
            continue
        src = load_image(manifest.resolve(manifest.images[img.source_id].path))
        gen = load_image(manifest.resolve(img.path))
        src_g = to_grayscale(src) * 255.0
        gen_g = to_grayscale(gen) * 255.0
        scores[img.id] = {
            "source": img.source_id,
            "psnr_db": psnr(src_g, gen_g),
            "ssim": ssim(src_g, gen_g),
        }
    payload = {
        "scores": scores,
        "not_computed": "LPIPS and FID need pretrained networks; use an external tool",
        "config": cfg.to_dict(),
    }
    _write_json(out_path, payload)
    return payload


def cmd_stats(cfg, bins, out_path, image_id=None):
    from .eventsim import to_grayscale

    manifest = engine.load_manifest(cfg.manifest)
    histograms = {}
    if image_id is not None:
        img = manifest.images[image_id]
        gray = to_grayscale(load_image(manifest.resolve(img.path))) * 255.0
        histograms[image_id] = intensity_histogram(gray, bins).tolist()
    else:
        by_modality = {}
        for img in sorted(manifest.images.values(), key=lambda i: i.id):
            gray = to_grayscale(load_image(manifest.resolve(img.path))) * 255.0
            by_modality.setdefault(img.modality, []).append(gray.ravel())
        for modality in sorted(by_modality):
            pooled = np.concatenate(by_modality[modality])
            histograms[modality] = intensity_histogram(pooled, bins).tolist()
    _write_json(out_path, {"bins": bins, "histograms": histograms, "config": cfg.to_dict()})
    return histograms


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mdsyn",
        description="Pseudo-modality data engine and two-view matching evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="parallel pair workers")
        p.add_argument("--out", required=True, help="output path (file or directory)")

    p = sub.add_parser("generate", help="generate one modality for every RGB image")
    common(p)
    p.add_argument("--modality", required=True,
                   help="'event' for the built-in simulator, else a config generator name")

    p = sub.add_parser("pair", help="expand RGB pairs into cross-modal pairs")
    common(p)
    p.add_argument("--modalities", default=None,
                   help="comma-separated modalities (default: all generated)")

    p = sub.add_parser("clean", help="drop misaligned generated images")
    common(p)
    p.add_argument("--report", default=None, help="drop-report path (default <out>.report.json)")

    p = sub.add_parser("split", help="mark test scenes and subsample test pairs")
    common(p)
    p.add_argument("--test-scenes", required=True, help="comma-separated scene names")
    p.add_argument("--pairs-per-case", type=int, default=None)

    p = sub.add_parser("sample", help="emit a deterministic training-pair stream")
    common(p)
    p.add_argument("--modalities", required=True, help="comma-separated non-RGB modalities")
    p.add_argument("--count", type=int, required=True)

    for task in ("pose", "homography"):
        p = sub.add_parser(f"evaluate-{task}", help=f"{task} evaluation over the test split")
        common(p)
        p.add_argument("--source", default="baseline",
                       help="'baseline' or a directory of ingested correspondence files")

    p = sub.add_parser("quality", help="PSNR/SSIM of generated images against their sources")
    common(p)

    p = sub.add_parser("stats", help="pixel-intensity histograms per modality")
    common(p)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--image", default=None, help="restrict to one image id")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, workers_override=args.workers)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "generate":
            cmd_generate(cfg, args.modality, args.out)
        elif args.command == "pair":
            mods = args.modalities.split(",") if args.modalities else None
            cmd_pair(cfg, mods, args.out)
        elif args.command == "clean":
            report_path = args.report or args.out + ".report.json"
            cmd_clean(cfg, args.out, report_path)
        elif args.command == "split":
            cmd_split(cfg, args.test_scenes.split(","), args.pairs_per_case, args.out)
        elif args.command == "sample":
            cmd_sample(cfg, args.modalities.split(","), args.count, args.out)
        elif args.command == "evaluate-pose":
            cmd_evaluate(cfg, "pose", args.source, args.out)
        elif args.command == "evaluate-homography":
            cmd_evaluate(cfg, "homography", args.source, args.out)
        elif args.command == "quality":
            cmd_quality(cfg, args.out)
        elif args.command == "stats":
            cmd_stats(cfg, args.bins, args.out, image_id=args.image)
    except GeneratorFailed as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATOR_FAILED
    except IncompleteOutput as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE_OUTPUT
    except MissingModality as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_MISSING_MODALITY
    except EmptyInput as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_INPUT
    except ParseError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVALUATION
    except MdsynError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_GENERATION if args.command in ("generate", "pair") else EXIT_EVALUATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
