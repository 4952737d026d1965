"""Command-line front end.

Subcommands mirror the pipeline stages: sample-poses, extract-patches,
reproject, aux-labels, prompt-gen, eval, gradcheck, selftest.  Exit codes:
0 success, 1 I/O or data failure (with a structured JSON line on stderr),
2 usage errors (unknown flags, bad invocation).

Batch commands parallelize across panoramas with --jobs; outputs are keyed
by per-panorama derived seeds, so results are identical for every worker
count.
"""

from __future__ import annotations

import concurrent.futures
import functools
import json
import os
import sys

import click
import numpy as np

from . import codecs, vis
from .auxlabels import edge_distance_field, image_gradient, metric_point_map
from .config import load_tool_config
from .errors import ConfigError, ContractError, DataError, ManifestError
from .metrics import delta_mtl, depth_metrics, normal_metrics, semseg_miou
from .nn.gradcheck import run_checks
from .pipeline import (MANIFEST_FILENAME, AttributePool, build_prompt,
                       crop_filename, derive_seed, ingest_predictions,
                       read_manifest, sample_camera_poses, write_manifest)
from .raster import ChannelKind, ErpImage, PatchTask
from .reproject import extract_patch, extract_rgb_patch, reproject_labels
from .selftest import run_selftest

_FAILURES = (ConfigError, ContractError, DataError, ManifestError, OSError)


def _fail_cleanly(fn):
    """Map package errors onto exit code 1 with a structured stderr line."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _FAILURES as exc:
            click.echo(json.dumps({"error": type(exc).__name__,
                                   "detail": str(exc)}), err=True)
            sys.exit(1)

    return wrapper


def _parallel_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _discover_panos(root, needs_manifest=True):
    """Sorted pano ids under root (dirs with a manifest, or any dir)."""
    if not os.path.isdir(root):
        raise ManifestError("root directory does not exist", path=root)
    found = []
    for name in sorted(os.listdir(root)):
        full = os.path.join(root, name)
        if not os.path.isdir(full):
            continue
        if needs_manifest and not os.path.exists(
                os.path.join(full, MANIFEST_FILENAME)):
            continue
        found.append(name)
    if not found:
        raise ManifestError("no panoramas found under root", path=root)
    return found


def _pano_path(root, pano_id, kind):
    return os.path.join(root, pano_id, f"pano.{kind}.png")


def _load_pano(root, pano_id, kind) -> ErpImage:
    stored = codecs.read_raster(_pano_path(root, pano_id, kind))
    if kind == "rgb":
        return ErpImage(stored, ChannelKind.RGB)
    if kind == "depth":
        return ErpImage(codecs.decode_depth(stored), ChannelKind.DEPTH)
    if kind == "normal":
        return ErpImage(codecs.decode_normal(stored), ChannelKind.NORMAL)
    if kind == "semantic":
        return ErpImage(codecs.decode_semantic(stored), ChannelKind.SEMANTIC)
    raise ConfigError(f"unknown panorama kind {kind!r}")


# ---------------------------------------------------------------------------
# per-panorama workers (module level so process pools can pickle them)


def _sample_worker(args):
    pano_id, cfg = args
    manifest = sample_camera_poses(
        count=cfg.crops, seed=cfg.seed, ranges=cfg.pose_ranges(),
        pano_id=pano_id, pano_width=cfg.pano_width,
        pano_height=cfg.pano_height, patch_width=cfg.patch_width,
        patch_height=cfg.patch_height)
    path = os.path.join(cfg.root, pano_id, MANIFEST_FILENAME)
    write_manifest(manifest, path)
    return f"{path}: {len(manifest.crops)} poses"


_TASK_ENCODERS = {
    "semantic": codecs.encode_semantic,
    "depth": codecs.encode_depth,
    "normal": codecs.encode_normal,
}

_TASK_VIS = {
    "semantic": vis.semantic_vis,
    "depth": vis.depth_vis,
    "normal": vis.normal_vis,
}


def _extract_worker(args):
    root, pano_id, tasks, emit_vis = args
    manifest = read_manifest(os.path.join(root, pano_id, MANIFEST_FILENAME))
    crops_dir = os.path.join(root, pano_id, "crops")
    written = 0
    for task in tasks:
        pano = _load_pano(root, pano_id, task if task != "rgb" else "rgb")
        for crop in manifest.crops:
            pose = crop.to_camera_pose()
            out = os.path.join(crops_dir, crop_filename(crop.index, task))
            if task == "rgb":
                data = extract_rgb_patch(pano, pose)
                codecs.write_raster(out, data)
                if emit_vis:
                    codecs.write_raster(
                        out.replace(".png", ".vis.png"), data)
            else:
                patch = extract_patch(pano, pose, PatchTask(task))
                codecs.write_raster(out, _TASK_ENCODERS[task](patch.data))
                if emit_vis:
                    codecs.write_raster(out.replace(".png", ".vis.png"),
                                        _TASK_VIS[task](patch.data))
            written += 1
    return f"{pano_id}: wrote {written} crops"


def _reproject_worker(args):
    root, pano_id, tasks, pred_subdir, emit_vis = args
    manifest = read_manifest(os.path.join(root, pano_id, MANIFEST_FILENAME))
    pred_dir = os.path.join(root, pano_id, pred_subdir)
    labels_dir = os.path.join(root, pano_id, "labels")
    lines = []
    for task in tasks:
        samples, errors = ingest_predictions(manifest, pred_dir, PatchTask(task))
        bad = {e.index for e in errors}
        ok_crops = [c for c in manifest.crops if c.index not in bad]
        for crop, sample in zip(ok_crops, samples):
            label = reproject_labels(sample, manifest.pano_width,
                                     manifest.pano_height)
            out = os.path.join(labels_dir, crop_filename(crop.index, task))
            codecs.write_raster(out, _TASK_ENCODERS[task](label.data))
            codecs.write_raster(out.replace(".png", ".mask.png"),
                                codecs.encode_mask(label.valid))
            if emit_vis:
                codecs.write_raster(out.replace(".png", ".vis.png"),
                                    _TASK_VIS[task](label.data))
        report = os.path.join(labels_dir, f"errors.{task}.json")
        os.makedirs(labels_dir, exist_ok=True)
        with open(report, "w", encoding="utf-8") as fh:
            json.dump([{"index": e.index, "path": e.path, "reason": e.reason}
                       for e in errors], fh, indent=2, sort_keys=True)
            fh.write("\n")
        lines.append(f"{pano_id}/{task}: {len(samples)} labels, "
                     f"{len(errors)} errors")
    return "; ".join(lines)


def _aux_worker(args):
    root, pano_id, tau, border_px, emit_vis = args
    aux_dir = os.path.join(root, pano_id, "aux")
    notes = []
    rgb_path = _pano_path(root, pano_id, "rgb")
    if os.path.exists(rgb_path):
        pano = _load_pano(root, pano_id, "rgb")
        grad = image_gradient(pano)
        codecs.write_raster(os.path.join(aux_dir, "gradient.hsv.png"), grad.hsv)
        field = edge_distance_field(grad, tau=tau, border_px=border_px)
        codecs.write_raster(os.path.join(aux_dir, "edf.png"),
                            codecs.encode_edf(field.distance))
        if field.empty:
            notes.append("edf: no edges above threshold, sentinel written")
        if emit_vis:
            codecs.write_raster(os.path.join(aux_dir, "gradient.vis.png"),
                                vis.gradient_hsv_vis(grad.hsv))
            codecs.write_raster(os.path.join(aux_dir, "edf.vis.png"),
                                vis.edf_vis(field.distance))
        notes.append("gradient+edf")
    depth_path = _pano_path(root, pano_id, "depth")
    if os.path.exists(depth_path):
        depth = _load_pano(root, pano_id, "depth")
        points = metric_point_map(depth)
        codecs.write_raster(os.path.join(aux_dir, "points.png"),
                            codecs.encode_points(points.xyz))
        if emit_vis:
            codecs.write_raster(os.path.join(aux_dir, "points.vis.png"),
                                vis.normal_vis(points.xyz /
                                               max(np.abs(points.xyz).max(), 1.0)))
        notes.append("points")
    if not notes:
        raise ManifestError("no pano.rgb.png or pano.depth.png found",
                            path=os.path.join(root, pano_id))
    return f"{pano_id}: {', '.join(notes)}"


def _prompt_worker(args):
    index, master_seed, pool_path = args
    pool = AttributePool.from_json_file(pool_path) if pool_path else None
    spec, text = build_prompt(derive_seed(master_seed, f"prompt/{index}"), pool)
    return json.dumps({"index": index, "domain": spec.domain,
                       "scene": spec.scene, "lighting": spec.lighting,
                       "details": spec.details, "quality": spec.quality,
                       "prompt": text}, sort_keys=True)


# ---------------------------------------------------------------------------
# commands


@click.group()
def main():
    """Panoramic supervision pipeline tools."""


_CONFIG_OPT = click.option("--config", "config_path",
                           type=click.Path(exists=True, dir_okay=False),
                           default=None, help="Flat key=value config file.")


@main.command("sample-poses")
@_CONFIG_OPT
@click.option("--root", default=None, help="Dataset root directory.")
@click.option("--pano-id", "pano_ids", multiple=True, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--count", "--n", "crops", type=int, default=None,
              help="Crops per panorama.")
@click.option("--pano-width", type=int, default=None)
@click.option("--pano-height", type=int, default=None)
@click.option("--patch-width", type=int, default=None)
@click.option("--patch-height", type=int, default=None)
@click.option("--fov-min", "fov_min_deg", type=float, default=None)
@click.option("--fov-max", "fov_max_deg", type=float, default=None)
@click.option("--yaw-min", "yaw_min_deg", type=float, default=None)
@click.option("--yaw-max", "yaw_max_deg", type=float, default=None)
@click.option("--pitch-min", "pitch_min_deg", type=float, default=None)
@click.option("--pitch-max", "pitch_max_deg", type=float, default=None)
@click.option("--jobs", type=int, default=None)
@_fail_cleanly
def sample_poses_cmd(config_path, pano_ids, **flags):
    """Sample crop poses and write one manifest per panorama."""
    cfg = load_tool_config(config_path, flags)
    results = _parallel_map(_sample_worker,
                            [(pid, cfg) for pid in pano_ids],
                            cfg.effective_jobs())
    for line in results:
        click.echo(line)


@main.command("extract-patches")
@_CONFIG_OPT
@click.option("--root", default=None)
@click.option("--pano-id", "pano_ids", multiple=True)
@click.option("--task", "task_flags", multiple=True,
              type=click.Choice(["rgb", "semantic", "depth", "normal"]))
@click.option("--jobs", type=int, default=None)
@click.option("--emit-vis", is_flag=True, default=False)
@_fail_cleanly
def extract_patches_cmd(config_path, pano_ids, task_flags, emit_vis, **flags):
    """Cut perspective crops out of panoramas per the manifests."""
    cfg = load_tool_config(config_path, flags)
    tasks = list(task_flags) or cfg.task_list()
    ids = list(pano_ids) or _discover_panos(cfg.root)
    results = _parallel_map(_extract_worker,
                            [(cfg.root, pid, tasks, emit_vis) for pid in ids],
                            cfg.effective_jobs())
    for line in results:
        click.echo(line)


@main.command("reproject")
@_CONFIG_OPT
@click.option("--root", default=None)
@click.option("--pano-id", "pano_ids", multiple=True)
@click.option("--task", "task_flags", multiple=True,
              type=click.Choice(["semantic", "depth", "normal"]))
@click.option("--pred-subdir", default="crops",
              help="Subdirectory holding per-crop prediction rasters.")
@click.option("--jobs", type=int, default=None)
@click.option("--emit-vis", is_flag=True, default=False)
@_fail_cleanly
def reproject_cmd(config_path, pano_ids, task_flags, pred_subdir, emit_vis,
                  **flags):
    """Reproject per-crop predictions onto panorama label rasters.

    Missing or malformed crops become entries in labels/errors.<task>.json
    rather than aborting the batch.
    """
    cfg = load_tool_config(config_path, flags)
    tasks = list(task_flags) or [t for t in cfg.task_list() if t != "rgb"]
    ids = list(pano_ids) or _discover_panos(cfg.root)
    results = _parallel_map(
        _reproject_worker,
        [(cfg.root, pid, tasks, pred_subdir, emit_vis) for pid in ids],
        cfg.effective_jobs())
    for line in results:
        click.echo(line)


@main.command("aux-labels")
@_CONFIG_OPT
@click.option("--root", default=None)
@click.option("--pano-id", "pano_ids", multiple=True)
@click.option("--tau", "edf_tau", type=float, default=None,
              help="Edge threshold on max-normalized gradient magnitude.")
@click.option("--border-px", "edf_border_px", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--emit-vis", is_flag=True, default=False)
@_fail_cleanly
def aux_labels_cmd(config_path, pano_ids, emit_vis, **flags):
    """Derive gradient, edge-distance and point-map labels from panoramas."""
    cfg = load_tool_config(config_path, flags)
    ids = list(pano_ids) or _discover_panos(cfg.root, needs_manifest=False)
    results = _parallel_map(
        _aux_worker,
        [(cfg.root, pid, cfg.edf_tau, cfg.edf_border_px, emit_vis)
         for pid in ids],
        cfg.effective_jobs())
    for line in results:
        click.echo(line)


@main.command("prompt-gen")
@_CONFIG_OPT
@click.option("--seed", type=int, default=None)
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--pool", "pool_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON attribute pool overriding the built-in one.")
@click.option("--jobs", type=int, default=None)
@click.option("--out", "out_path", default="-",
              help="Output JSONL file, - for stdout.")
@_fail_cleanly
def prompt_gen_cmd(config_path, count, pool_path, out_path, **flags):
    """Generate scene prompts, one JSON object per line."""
    cfg = load_tool_config(config_path, flags)
    if count < 0:
        raise ConfigError("--count must be >= 0")
    if pool_path:  # validate once up front for a clean error
        AttributePool.from_json_file(pool_path)
    lines = _parallel_map(_prompt_worker,
                          [(i, cfg.seed, pool_path) for i in range(count)],
                          cfg.effective_jobs())
    text = "".join(line + "\n" for line in lines)
    if out_path == "-":
        click.echo(text, nl=False)
    else:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"{out_path}: {count} prompts")


def _read_panel(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return (float(doc["miou_pct"]), float(doc["depth_rmse"]),
                float(doc["normal_mean_deg"]))
    except KeyError as exc:
        raise DataError(f"panel file {path} missing key {exc}") from exc


def _eval_pairs(pred_path, gt_path, mask_path, task):
    """Resolve --pred/--gt into (pred, gt, mask) file triples.

    Two files compare directly; two directories pair every `*.<task>.png`
    under pred with the same relative path under gt, picking up sibling
    `*.<task>.mask.png` rasters when present.
    """
    pred_dir = os.path.isdir(pred_path)
    if pred_dir != os.path.isdir(gt_path):
        raise ConfigError("--pred and --gt must both be files or "
                          "both be directories")
    if not pred_dir:
        return [(pred_path, gt_path, mask_path)]
    suffix = f".{task}.png"
    rels = sorted(
        os.path.relpath(os.path.join(dirpath, name), pred_path)
        for dirpath, _, names in os.walk(pred_path)
        for name in names if name.endswith(suffix))
    if not rels:
        raise DataError(f"no *{suffix} rasters under {pred_path}")
    triples = []
    for rel in rels:
        gt_file = os.path.join(gt_path, rel)
        if not os.path.exists(gt_file):
            raise DataError(f"missing ground truth for {rel} under {gt_path}")
        mask_file = os.path.join(gt_path, rel[:-4] + ".mask.png")
        if not os.path.exists(mask_file):
            mask_file = os.path.join(pred_path, rel[:-4] + ".mask.png")
        triples.append((os.path.join(pred_path, rel), gt_file,
                        mask_file if os.path.exists(mask_file) else None))
    return triples


@main.command("eval")
@_CONFIG_OPT
@click.option("--task", type=click.Choice(["semantic", "depth", "normal"]),
              default=None)
@click.option("--pred", "pred_path", type=click.Path(exists=True), default=None)
@click.option("--gt", "gt_path", type=click.Path(exists=True), default=None)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--num-classes", type=int, default=None)
@click.option("--ignore-index", type=int, default=None)
@click.option("--stl", "stl_path", type=click.Path(exists=True), default=None,
              help="Baseline panel JSON (miou_pct, depth_rmse, normal_mean_deg).")
@click.option("--mtl", "mtl_path", type=click.Path(exists=True), default=None,
              help="Candidate panel JSON to compare against --stl.")
@click.option("--out", "out_path", default="-")
@_fail_cleanly
def eval_cmd(config_path, task, pred_path, gt_path, mask_path, num_classes,
             ignore_index, stl_path, mtl_path, out_path):
    """Score predictions, or compare two metric panels (--stl vs --mtl)."""
    cfg = load_tool_config(config_path, {"num_classes": num_classes,
                                         "ignore_index": ignore_index})
    if (stl_path is None) != (mtl_path is None):
        raise ConfigError("--stl and --mtl must be given together")
    if stl_path is not None:
        report = {"delta_mtl_pct": delta_mtl(_read_panel(stl_path),
                                             _read_panel(mtl_path))}
    else:
        if not (task and pred_path and gt_path):
            raise ConfigError("eval needs --task, --pred and --gt "
                              "(or --stl with --mtl)")
        preds, gts, keeps = [], [], []
        for pred_file, gt_file, mask_file in _eval_pairs(pred_path, gt_path,
                                                         mask_path, task):
            pred = codecs.read_raster(pred_file)
            gt = codecs.read_raster(gt_file)
            mask = codecs.decode_mask(codecs.read_raster(mask_file)) \
                if mask_file else None
            if task == "semantic":
                p = codecs.decode_semantic(pred).ravel()
                g = codecs.decode_semantic(gt).ravel()
                keep = g != cfg.ignore_index
            elif task == "depth":
                p = codecs.decode_depth(pred).ravel()
                g = codecs.decode_depth(gt).ravel()
                keep = (g > 0.0) & (p > 0.0)
            else:
                p = codecs.decode_normal(pred).reshape(-1, 3)
                g = codecs.decode_normal(gt).reshape(-1, 3)
                keep = np.ones(len(g), dtype=bool)
            if mask is not None:
                if mask.size != keep.size:
                    raise DataError(f"mask size mismatch for {mask_file}")
                keep &= mask.ravel()
            preds.append(p)
            gts.append(g)
            keeps.append(keep)
        p = np.concatenate(preds)
        g = np.concatenate(gts)
        keep = np.concatenate(keeps)
        if task == "semantic":
            if cfg.num_classes <= 0:
                raise ConfigError("--num-classes is required for semantic eval")
            shown = np.where(keep, g, cfg.ignore_index)
            miou, per_class = semseg_miou(p, shown, cfg.num_classes,
                                          cfg.ignore_index)
            report = {"task": task,
                      "miou_pct": None if miou is None else miou * 100.0,
                      "per_class_iou": {str(k): v for k, v in per_class.items()}}
        elif task == "depth":
            m = depth_metrics(p, g, keep)
            report = {"task": task, "abs_rel": m["abs_rel"],
                      "depth_rmse": m["rmse"], "delta1_pct": m["delta1"],
                      "delta2_pct": m["delta2"], "delta3_pct": m["delta3"],
                      "valid_pixel_count": m["valid_pixel_count"]}
        else:
            m = normal_metrics(p, g, keep)
            report = {"task": task, "normal_mean_deg": m["mean_deg"],
                      "normal_median_deg": m["median_deg"],
                      "pct_11_5": m["pct_11_5"], "pct_22_5": m["pct_22_5"],
                      "pct_30": m["pct_30"],
                      "valid_pixel_count": m["valid_pixel_count"]}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out_path == "-":
        click.echo(text, nl=False)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


@main.command("gradcheck")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--instances", type=int, default=1, show_default=True)
@_fail_cleanly
def gradcheck_cmd(seed, instances):
    """Finite-difference checks for every differentiable op."""
    results = run_checks(seed=seed, instances=instances)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"{status} {r.name:<28} max_rel_err={r.max_rel_error:.3e}")
        failed += 0 if r.passed else 1
    if failed:
        click.echo(f"{failed} of {len(results)} checks failed", err=True)
        sys.exit(1)
    click.echo(f"all {len(results)} gradient checks passed")


@main.command("selftest")
@_fail_cleanly
def selftest_cmd():
    """Run the built-in invariant suite."""
    if not run_selftest(click.echo):
        sys.exit(1)
    click.echo("selftest ok")


if __name__ == "__main__":
    main()
