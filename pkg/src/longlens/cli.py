"""Command-line entry points: dataset ingestion, phantom generation, baseline
prediction, metric evaluation, paired comparison, the two diagnostics, and the
registration/harmonization pipeline.

Exit codes: 0 success, 2 partial (per-eye failures recorded), 1 fatal.
All outputs are deterministic for fixed inputs and seed: files carry no
timestamps, JSON is key-sorted, iteration order is fixed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from .atrophy import (
    BimodalityWarning,
    SegParams,
    SweepGrid,
    dice,
    hd95,
    segment_atrophy,
    sensitivity_sweep,
)
from .diagnostics import EyeSamples, entropy_report, pair_stats, posterior_report
from .errors import (
    EmptyMaskError,
    LonglensError,
    ManifestError,
    MissingPredictionError,
    NoFundusPixelsError,
    NoOverlapError,
)
from .manifest import (
    EyeRecord,
    Manifest,
    VisitRecord,
    load_eye_sequence,
    load_manifest,
    save_manifest,
)
from .metrics import SsimConfig, delta_ssim, mae, masked_ssim, psnr
from .phantom import PhantomSpec, write_phantom_dataset
from .raster import (
    GrayImage,
    Scale,
    ValidityMask,
    center_crop,
    center_crop_mask,
    hflip_image,
    hflip_mask,
    load_image,
    save_image,
    save_mask,
    warp_bilinear,
    warp_mask,
)
from .registration import (
    GateThresholds,
    ModelGuards,
    compose_to_crop,
    estimate_fov_mask,
    gate,
    histogram_match,
    letterbox,
    load_keypoints,
    match_descriptors,
    matched_points,
    model_to_crop,
    select_anchor,
    select_model,
)
from .stats import PairedSample, describe, wilcoxon_signed_rank
from .temporal import EyeSequence, copy_last, linear_spline

METRIC_COLUMNS = ("mae", "psnr", "ssim", "delta_ssim", "dice", "hd95")
POST_WARP_CROP = 0.80


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "n/a"
        return f"{v:.10g}"
    return str(v)


def _json_dump(obj, path: Path) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _map_eyes(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _seg_params(config: dict) -> SegParams:
    return SegParams(**config.get("seg", {}))


def _gate_thresholds(config: dict) -> GateThresholds:
    return GateThresholds(**config.get("gate", {}))


def _model_guards(config: dict) -> ModelGuards:
    return ModelGuards(**config.get("guards", {}))


def _ssim_config(config: dict) -> SsimConfig:
    return SsimConfig(**config.get("ssim", {}))


def _sweep_grid(config: dict) -> SweepGrid:
    sw = config.get("sweep", {})
    kw = {k: tuple(v) for k, v in sw.items()}
    return SweepGrid(**kw)


def _find_prediction(pred_dir: Path, eye_id: str, target_index: int) -> Path:
    for ext in (".llf1", ".pgm"):
        p = pred_dir / f"{eye_id}_{target_index}{ext}"
        if p.exists():
            return p
    raise MissingPredictionError(f"no prediction for {eye_id} (index {target_index})")


def quality_score(img: GrayImage) -> float:
    """Contrast metric for duplicate-frame selection: robust histogram width
    times the spread of the low-frequency content (Gaussian sigma 16)."""
    px = img.to_byte().pixels
    p5, p95 = np.percentile(px, [5, 95])
    low = ndimage.gaussian_filter(px, 16.0)
    return float((p95 - p5) * low.std())


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------

def cmd_phantom(args, config: dict) -> int:
    spec = PhantomSpec(
        n_eyes=args.eyes,
        frames_per_eye=args.frames,
        image_size=args.size,
        lesion_growth_rate=args.growth,
        noise_amplitude=args.noise,
        visit_interval_min=args.interval_min,
        visit_interval_max=args.interval_max,
        rng_seed=args.seed,
    )
    out = Path(args.out)
    write_phantom_dataset(spec, out)
    print(f"phantom dataset with {spec.n_eyes} eyes written to {out}")
    return 0


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def cmd_baseline(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_written = 0
    n_skipped = 0
    for eye, target_index, _ in _evaluation_tasks(man, args.targets):
        seq = load_eye_sequence(man, eye)
        t_star = seq.frames[target_index].t
        history = EyeSequence(seq.eye_id, seq.frames[:target_index], seq.laterality)
        if args.kind == "copy-last":
            pred = copy_last(history, t_star)
        else:
            if len(history.frames) < 2:
                n_skipped += 1
                continue
            pred = linear_spline(history, t_star)
        save_image(pred.to_unit(), out / f"{eye.eye_id}_{target_index}.llf1")
        n_written += 1
    print(f"{args.kind}: wrote {n_written} predictions to {out} (skipped {n_skipped})")
    return 0 if n_written else 1


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _evaluate_eye(man: Manifest, eye: EyeRecord, target_index: int, pred_dir: Path,
                  seg_params: SegParams, ssim_cfg: SsimConfig, row_id: str):
    seq = load_eye_sequence(man, eye)
    last = seq.frames[target_index - 1]
    target = seq.frames[target_index]
    pred_img = load_image(_find_prediction(pred_dir, eye.eye_id, target_index))
    mask = ValidityMask(last.mask.bits & target.mask.bits)
    if mask.valid_count() == 0:
        raise EmptyMaskError(f"{eye.eye_id}: empty mask intersection")
    pred_u = pred_img.to_unit()
    last_u = last.image.to_unit()
    target_u = target.image.to_unit()
    row = {
        "eye_id": row_id,
        "delta_t": target.t - last.t,
        "mae": mae(pred_u, target_u, mask),
        "psnr": psnr(pred_u, target_u, mask),
        "ssim": masked_ssim(pred_u, target_u, mask, ssim_cfg),
        "delta_ssim": delta_ssim(
            pred_u, target_u, last_u, mask, replace(ssim_cfg, data_range=2.0)
        ),
    }
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BimodalityWarning)
            seg_pred = segment_atrophy(pred_img, seg_params)
            seg_gt = segment_atrophy(target.image, seg_params)
        row["dice"] = dice(seg_pred, seg_gt)
        try:
            row["hd95"] = hd95(seg_pred, seg_gt)
        except EmptyMaskError:
            row["hd95"] = None
    except NoFundusPixelsError:
        row["dice"] = None
        row["hd95"] = None
    return row


def _summary_lines(rows: list[dict], n_missing: int) -> list[str]:
    lines = [f"# coverage,evaluated={len(rows)},missing={n_missing}"]
    for metric in METRIC_COLUMNS:
        vals = [r[metric] for r in rows if r.get(metric) is not None]
        finite = [v for v in vals if not math.isinf(v)]
        n_inf = len(vals) - len(finite)
        n_na = len(rows) - len(vals)
        if finite:
            d = describe(finite)
            sd = "n/a" if d.sd is None else _fmt(d.sd)
            lines.append(
                f"# summary,{metric},mean={_fmt(d.mean)},sd={sd},n={d.n},"
                f"excluded_inf={n_inf},na={n_na}"
            )
        else:
            lines.append(f"# summary,{metric},mean=n/a,sd=n/a,n=0,"
                         f"excluded_inf={n_inf},na={n_na}")
    return lines


def _evaluation_tasks(man: Manifest, mode: str):
    """(eye, target_index, row_id) tuples; the default convention evaluates
    the final visit only, 'all-later' runs leave-one-out over visits >= 2."""
    tasks = []
    for eye in man.eyes:
        if len(eye.visits) < 2:
            continue
        if mode == "all-later":
            for ti in range(1, len(eye.visits)):
                tasks.append((eye, ti, f"{eye.eye_id}@{ti}"))
        else:
            tasks.append((eye, len(eye.visits) - 1, eye.eye_id))
    return tasks


def cmd_evaluate(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    pred_dir = Path(args.predictions)
    seg_params = _seg_params(config)
    ssim_cfg = _ssim_config(config)
    mode = config.get("evaluate", {}).get("targets", "last")
    tasks = _evaluation_tasks(man, mode)

    def work(task):
        eye, ti, row_id = task
        try:
            return row_id, _evaluate_eye(man, eye, ti, pred_dir, seg_params,
                                         ssim_cfg, row_id), None
        except (LonglensError, OSError) as exc:
            return row_id, None, str(exc)

    results = _map_eyes(work, tasks, args.jobs)
    rows = [r for _, r, _ in results if r is not None]
    failures = [(eid, msg) for eid, r, msg in results if r is None]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.method}_metrics.csv"
    lines = ["eye_id,delta_t," + ",".join(METRIC_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [r["eye_id"], _fmt(r["delta_t"])] + [_fmt(r[m]) for m in METRIC_COLUMNS]
            )
        )
    lines.extend(_summary_lines(rows, len(failures)))
    for eid, msg in failures:
        lines.append(f"# failed,{eid},{msg}")
    _atomic_write_text(csv_path, "\n".join(lines) + "\n")
    print(f"wrote {csv_path} ({len(rows)} eyes, {len(failures)} failed)")
    if not rows:
        return 1
    return 2 if failures else 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _read_metrics_csv(path: Path) -> dict[str, dict[str, float | None]]:
    rows = {}
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    for line in lines[1:]:
        parts = line.split(",")
        rec = dict(zip(header, parts))
        parsed = {}
        for k, v in rec.items():
            if k == "eye_id":
                continue
            if v == "n/a":
                parsed[k] = None
            elif v == "inf":
                parsed[k] = float("inf")
            else:
                parsed[k] = float(v)
        rows[rec["eye_id"]] = parsed
    return rows


def cmd_compare(args, config: dict) -> int:
    a = _read_metrics_csv(Path(args.csv_a))
    b = _read_metrics_csv(Path(args.csv_b))
    shared = sorted(set(a) & set(b))
    if not shared:
        raise NoOverlapError("the two CSVs share no eyes")
    metrics = args.metrics.split(",") if args.metrics else list(METRIC_COLUMNS)
    out_lines = ["metric,n,excluded,statistic,p,mean_a,mean_b,direction"]
    for metric in metrics:
        va, vb = [], []
        excluded = 0
        for eid in shared:
            x, y = a[eid].get(metric), b[eid].get(metric)
            if x is None or y is None or math.isinf(x) or math.isinf(y):
                excluded += 1
                continue
            va.append(x)
            vb.append(y)
        if len(va) < 1:
            out_lines.append(f"{metric},0,{excluded},n/a,n/a,n/a,n/a,n/a")
            continue
        res = wilcoxon_signed_rank(PairedSample(np.array(va), np.array(vb)))
        ma, mb = float(np.mean(va)), float(np.mean(vb))
        direction = "a>b" if ma > mb else ("a<b" if ma < mb else "a=b")
        out_lines.append(
            f"{metric},{res.n_effective},{excluded},{_fmt(res.statistic)},"
            f"{_fmt(res.p)},{_fmt(ma)},{_fmt(mb)},{direction}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "compare.csv"
    _atomic_write_text(path, "\n".join(out_lines) + "\n")
    print("\n".join(out_lines))
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# diagnostics commands
# ---------------------------------------------------------------------------

def cmd_entropy(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    failures = []

    def work(eye):
        try:
            seq = load_eye_sequence(man, eye)
            out = []
            for k in range(len(seq.frames) - 1):
                f0, f1 = seq.frames[k], seq.frames[k + 1]
                mask = ValidityMask(f0.mask.bits & f1.mask.bits)
                out.append(
                    pair_stats(
                        f0.image.to_unit(),
                        f1.image.to_unit(),
                        mask,
                        f1.t - f0.t,
                        changed_threshold=args.changed_threshold,
                    )
                )
            return out, None
        except LonglensError as exc:
            return None, (eye.eye_id, str(exc))

    pairs = []
    for res, err in _map_eyes(work, man.eyes, args.jobs):
        if err is not None:
            failures.append(err)
        else:
            pairs.extend(res)
    if not pairs:
        print("no visit pairs found", file=sys.stderr)
        return 1
    report = entropy_report(pairs, tuple(args.strata))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"tool_version": __version__, "report": report.to_dict()}
    _json_dump(doc, out / "entropy.json")
    _atomic_write_text(out / "entropy.txt", report.to_text())
    print(report.to_text())
    return 2 if failures else 0


def cmd_posterior(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    samples_dir = Path(args.samples)
    failures = []
    eyes = []
    for eye in man.eyes:
        try:
            seq = load_eye_sequence(man, eye)
            target = seq.frames[-1]
            samples = []
            for k in range(args.k):
                found = None
                for ext in (".llf1", ".pgm"):
                    p = samples_dir / f"{eye.eye_id}_s{k}{ext}"
                    if p.exists():
                        found = p
                        break
                if found is None:
                    raise MissingPredictionError(f"{eye.eye_id}: missing sample {k}")
                samples.append(load_image(found).to_unit())
            eyes.append(
                EyeSamples(tuple(samples), target.image.to_unit(), target.mask)
            )
        except LonglensError as exc:
            failures.append((eye.eye_id, str(exc)))
    if not eyes:
        print("no eyes with complete sample sets", file=sys.stderr)
        return 1
    report = posterior_report(eyes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"tool_version": __version__, "report": report.to_dict()}
    _json_dump(doc, out / "posterior.json")
    _atomic_write_text(out / "posterior.txt", report.to_text())
    print(report.to_text())
    return 2 if failures else 0


# ---------------------------------------------------------------------------
# registration pipeline
# ---------------------------------------------------------------------------

def _register_eye(man, eye, config, seed, chain=False):
    """Returns (report_dict, outputs) where outputs maps visit index to
    (image, mask) registered into the anchor frame, or None when dropped.

    With chain=True the anchor is the first visit and each visit is fitted
    against its predecessor, composing pairwise transforms onto the anchor
    (consecutive-frame mode for narrow-overlap sequences).
    """
    guards = _model_guards(config)
    thresholds = _gate_thresholds(config)
    crop_fractions = config.get("register", {}).get("crop_fractions", {})
    post_crop = config.get("register", {}).get("post_warp_crop", POST_WARP_CROP)

    report = {"anchor": None, "visits": [], "dropped": False, "drop_reason": None}
    if any(v.keypoints_path is None for v in eye.visits):
        report["dropped"] = True
        report["drop_reason"] = "missing keypoint files"
        return report, None
    if len(eye.visits) < 2:
        report["dropped"] = True
        report["drop_reason"] = "fewer than two visits"
        return report, None

    seq = load_eye_sequence(man, eye)
    kpsets = [load_keypoints(man.resolve(v.keypoints_path)) for v in eye.visits]

    # per-resolution center crop before any processing
    images = []
    for f in seq.frames:
        key = f"{f.image.width}x{f.image.height}"
        frac = float(crop_fractions.get(key, 1.0))
        images.append(center_crop(f.image, frac) if frac < 1.0 else f.image)

    fov_masks = [estimate_fov_mask(img) for img in images]
    letterboxes = [letterbox(img) for img in images]

    anchor_stats = []
    for img, fov, kps in zip(images, fov_masks, kpsets):
        pts = np.floor(kps.crop_points() + 0.5).astype(int)
        inside = (
            (pts[:, 0] >= 0)
            & (pts[:, 0] < fov.width)
            & (pts[:, 1] >= 0)
            & (pts[:, 1] < fov.height)
        )
        count = int(fov.bits[pts[inside][:, 1], pts[inside][:, 0]].sum()) if inside.any() else 0
        frac = fov.valid_count() / (fov.width * fov.height)
        anchor_stats.append((count, frac))
    anchor = 0 if chain else select_anchor(anchor_stats)
    report["anchor"] = anchor
    anchor_lb = letterboxes[anchor]
    anchor_img = images[anchor]
    out_size = (anchor_img.height, anchor_img.width)

    def fit_pair(k, ref):
        """Model-space transform visit k -> visit ref, plus match count."""
        pairs = match_descriptors(kpsets[k], kpsets[ref])
        matches = matched_points(kpsets[k], kpsets[ref], pairs)
        model = select_model(matches, guards=guards, rng_seed=seed)
        return model, len(pairs)

    outputs: dict[int, tuple[GrayImage, ValidityMask]] = {
        anchor: (anchor_img, fov_masks[anchor])
    }
    # chained mode composes consecutive model-space transforms onto visit 0
    chain_to_anchor: dict[int, np.ndarray] = {0: np.eye(3)}
    for k in range(len(eye.visits)):
        if k == anchor:
            report["visits"].append({"visit": k, "status": "anchor"})
            continue
        ref = k - 1 if chain else anchor
        entry = {"visit": k}
        try:
            if chain and ref not in chain_to_anchor:
                entry["status"] = "rejected"
                entry["error"] = "chain broken upstream"
                report["visits"].append(entry)
                continue
            model, n_matches = fit_pair(k, ref)
            entry["n_matches"] = n_matches
            decision = gate(model, n_matches, thresholds)
            entry.update(
                {
                    "kind": model.kind.value,
                    "matrix": [float(v) for v in model.matrix.ravel()],
                    "diagnostics": model.diagnostics.to_dict(),
                    "gate": {
                        "accepted": decision.accepted,
                        "reasons": list(decision.reasons),
                    },
                }
            )
            if decision.accepted:
                entry["status"] = "accepted"
                if chain:
                    # T maps k's model space onto ref's, and the stored entry
                    # bridges ref's model space to the anchor's
                    to_anchor = chain_to_anchor[ref] @ model.matrix
                    chain_to_anchor[k] = to_anchor
                else:
                    to_anchor = model.matrix
                crop_t = compose_to_crop(
                    to_anchor,
                    (kpsets[k].scale, kpsets[k].pad),
                    (anchor_lb.scale, anchor_lb.pad),
                )
                warped = warp_bilinear(images[k], crop_t, out_size)
                wmask = warp_mask(fov_masks[k], crop_t, out_size)
                outputs[k] = (warped, wmask)
            else:
                entry["status"] = "rejected"
        except LonglensError as exc:
            entry["status"] = "error"
            entry["error"] = str(exc)
        report["visits"].append(entry)

    if len(outputs) < 2:
        report["dropped"] = True
        report["drop_reason"] = "fewer than two surviving visits"
        return report, None

    finished: dict[int, tuple[GrayImage, ValidityMask]] = {}
    flip = eye.laterality == "left"
    for k, (img, mask) in sorted(outputs.items()):
        img = center_crop(img, post_crop)
        mask = center_crop_mask(mask, post_crop)
        img = img.to_byte().quantized()
        img = histogram_match(img, mask)
        if flip:
            img = hflip_image(img)
            mask = hflip_mask(mask)
        finished[k] = (img, mask)
    return report, finished


def cmd_register(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    def work(eye):
        try:
            return eye, *_register_eye(man, eye, config, args.seed, chain=args.chain)
        except LonglensError as exc:
            return eye, {"dropped": True, "drop_reason": str(exc), "visits": []}, None

    results = _map_eyes(work, man.eyes, args.jobs)
    eye_reports = {}
    surviving = []
    partial = False
    for eye, report, finished in results:
        eye_reports[eye.eye_id] = report
        if finished is None:
            partial = True
            continue
        if any(v.get("status") in ("rejected", "error") for v in report["visits"]):
            partial = True
        visits = []
        for k, (img, mask) in sorted(finished.items()):
            stem = f"{eye.eye_id}_{k}"
            save_image(img, out / "images" / f"{stem}.pgm")
            save_mask(mask, out / "masks" / f"{stem}.pgm")
            visits.append(
                VisitRecord(
                    t=eye.visits[k].t,
                    image_path=f"images/{stem}.pgm",
                    mask_path=f"masks/{stem}.pgm",
                )
            )
        surviving.append(EyeRecord(eye.eye_id, "right", tuple(visits)))
    report_doc = {"tool_version": __version__, "eyes": eye_reports}
    _json_dump(report_doc, out / "report.json")
    man_out = Manifest(
        dataset_id=f"{man.dataset_id}-registered",
        scale=Scale.BYTE,
        eyes=tuple(surviving),
        root=out,
    )
    save_manifest(man_out, out / "manifest.json")
    print(f"registered {len(surviving)}/{len(man.eyes)} eyes into {out}")
    if not surviving:
        return 1
    return 2 if partial else 0


def cmd_harmonize(args, config: dict) -> int:
    """Histogram matching plus chirality normalization, geometry untouched."""
    man = load_manifest(args.manifest)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    eyes = []
    failures = 0
    for eye in man.eyes:
        seq = load_eye_sequence(man, eye)
        flip = eye.laterality == "left"
        visits = []
        try:
            for k, f in enumerate(seq.frames):
                img = histogram_match(f.image.to_byte().quantized(), f.mask)
                mask = f.mask
                if flip:
                    img = hflip_image(img)
                    mask = hflip_mask(mask)
                stem = f"{eye.eye_id}_{k}"
                save_image(img, out / "images" / f"{stem}.pgm")
                save_mask(mask, out / "masks" / f"{stem}.pgm")
                visits.append(
                    VisitRecord(f.t, f"images/{stem}.pgm", f"masks/{stem}.pgm")
                )
        except LonglensError:
            failures += 1
            continue
        eyes.append(EyeRecord(eye.eye_id, "right", tuple(visits)))
    man_out = Manifest(
        dataset_id=f"{man.dataset_id}-harmonized",
        scale=Scale.BYTE,
        eyes=tuple(eyes),
        root=out,
    )
    save_manifest(man_out, out / "manifest.json")
    print(f"harmonized {len(eyes)}/{len(man.eyes)} eyes into {out}")
    return 2 if failures else 0


# ---------------------------------------------------------------------------
# segmentation sweep
# ---------------------------------------------------------------------------

def cmd_seg_sweep(args, config: dict) -> int:
    man = load_manifest(args.manifest)
    method_dirs = {}
    for spec_str in args.methods:
        if "=" not in spec_str:
            raise ValueError(f"--methods entries look like NAME=DIR, got {spec_str!r}")
        name, d = spec_str.split("=", 1)
        method_dirs[name] = Path(d)
    if len(method_dirs) < 2:
        raise ValueError("seg-sweep needs at least two methods")
    gts = []
    preds: dict[str, list] = {name: [] for name in method_dirs}
    skipped = 0
    for eye in man.eyes:
        if len(eye.visits) < 2:
            continue
        target_index = len(eye.visits) - 1
        try:
            found = {
                name: load_image(_find_prediction(d, eye.eye_id, target_index))
                for name, d in method_dirs.items()
            }
        except MissingPredictionError:
            skipped += 1
            continue
        gts.append(load_image(man.resolve(eye.visits[-1].image_path)))
        for name, img in found.items():
            preds[name].append(img)
    if not gts:
        print("no eyes with predictions in every method dir", file=sys.stderr)
        return 1
    table = sensitivity_sweep(gts, preds, _sweep_grid(config), _seg_params(config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "seg_sweep.csv"
    _atomic_write_text(path, table.to_csv())
    print(table.to_csv())
    print(f"wrote {path} ({len(gts)} eyes, {skipped} skipped)")
    return 2 if skipped else 0


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def cmd_ingest(args, config: dict) -> int:
    man = load_manifest(args.manifest, strict_times=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eyes = []
    n_dropped_frames = 0
    for eye in man.eyes:
        by_time: dict[float, list[VisitRecord]] = {}
        for v in eye.visits:
            by_time.setdefault(v.t, []).append(v)
        visits = []
        for t in sorted(by_time):
            group = by_time[t]
            if len(group) > 1:
                scores = [
                    quality_score(load_image(man.resolve(v.image_path))) for v in group
                ]
                keep = group[int(np.argmax(scores))]
                n_dropped_frames += len(group) - 1
            else:
                keep = group[0]
            visits.append(
                VisitRecord(
                    t=keep.t,
                    image_path=str(man.resolve(keep.image_path)),
                    mask_path=str(man.resolve(keep.mask_path)),
                    keypoints_path=(
                        str(man.resolve(keep.keypoints_path))
                        if keep.keypoints_path
                        else None
                    ),
                )
            )
        eyes.append(EyeRecord(eye.eye_id, eye.laterality, tuple(visits)))
    man_out = Manifest(man.dataset_id, man.scale, tuple(eyes), root=out)
    save_manifest(man_out, out / "manifest.json")
    n_pairs = sum(max(0, len(e.visits) - 1) for e in eyes)
    print(
        f"ingested {len(eyes)} eyes, {sum(len(e.visits) for e in eyes)} visits, "
        f"{n_pairs} adjacent pairs; dropped {n_dropped_frames} duplicate frames"
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over eyes")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longlens",
        description="Model-light diagnostics, metrics, and registration for "
        "longitudinal grayscale image datasets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic longitudinal dataset")
    p.add_argument("--eyes", type=int, default=10)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--growth", type=float, default=4.0, help="lesion px/year")
    p.add_argument("--noise", type=float, default=0.0, help="illumination noise std")
    p.add_argument("--interval-min", type=float, default=0.1)
    p.add_argument("--interval-max", type=float, default=1.5)
    _add_common(p)
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("baseline", help="write copy-last or spline predictions")
    p.add_argument("kind", choices=["copy-last", "spline"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", choices=["last", "all-later"], default="last",
                   help="predict the final visit only, or every visit >= 2")
    _add_common(p)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("evaluate", help="metric suite for one method's predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--method", required=True, help="method name for the CSV")
    _add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="paired Wilcoxon tests between two metric CSVs")
    p.add_argument("--csv-a", required=True)
    p.add_argument("--csv-b", required=True)
    p.add_argument("--metrics", help="comma-separated subset of metrics")
    _add_common(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("entropy", help="task-entropy analysis over adjacent visit pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--changed-threshold", type=float, default=0.05)
    p.add_argument(
        "--strata", type=float, nargs="*", default=[0.25, 1.0],
        help="stratum edges in years",
    )
    _add_common(p)
    p.set_defaults(fn=cmd_entropy)

    p = sub.add_parser("posterior", help="bias-variance decomposition of K samples per eye")
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True, help="dir with <eye>_s<k> images")
    p.add_argument("--k", type=int, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_posterior)

    p = sub.add_parser("register", help="register and harmonize each eye sequence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--chain", action="store_true",
                   help="fit consecutive visits and compose onto the first "
                        "frame instead of a global anchor")
    _add_common(p)
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("harmonize", help="histogram match and flip without geometry")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_harmonize)

    p = sub.add_parser("seg-sweep", help="segmentation-parameter sensitivity sweep")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", nargs="+", required=True, help="NAME=DIR entries")
    _add_common(p)
    p.set_defaults(fn=cmd_seg_sweep)

    p = sub.add_parser("ingest", help="validate a manifest and drop duplicate frames")
    p.add_argument("--manifest", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.fn(args, config)
    except (LonglensError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
