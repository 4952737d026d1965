"""End-to-end command-line tests on small synthetic datasets."""

import json
import os
import shutil

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import (inward_normal_pano, latitude_band_pano,
                      smooth_depth_pano, striped_rgb_pano)
from panosup import codecs
from panosup.cli import main

HEIGHT = 48  # panos are 48x96; patches 16x16 keep the pipeline quick


def _write_dataset(root, pano_ids):
    for pid in pano_ids:
        d = os.path.join(root, pid)
        os.makedirs(d, exist_ok=True)
        rgb = striped_rgb_pano(HEIGHT, seed=hash(pid) % 1000)
        codecs.write_raster(os.path.join(d, "pano.rgb.png"), rgb.data)
        codecs.write_raster(os.path.join(d, "pano.depth.png"),
                            codecs.encode_depth(smooth_depth_pano(HEIGHT).data))
        codecs.write_raster(os.path.join(d, "pano.normal.png"),
                            codecs.encode_normal(inward_normal_pano(HEIGHT).data))
        codecs.write_raster(os.path.join(d, "pano.semantic.png"),
                            codecs.encode_semantic(latitude_band_pano(HEIGHT).data))


def _run(*args):
    result = CliRunner().invoke(main, list(args))
    if result.exit_code != 0 and result.exception is not None \
            and not isinstance(result.exception, SystemExit):
        raise result.exception
    return result


_SAMPLE_ARGS = ("--seed", "7", "--count", "3",
                "--pano-width", str(2 * HEIGHT), "--pano-height", str(HEIGHT),
                "--patch-width", "16", "--patch-height", "16")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Two panoramas taken through the whole pipeline once."""
    root = str(tmp_path_factory.mktemp("ds"))
    _write_dataset(root, ["pano_a", "pano_b"])
    r = _run("sample-poses", "--root", root, "--pano-id", "pano_a",
             "--pano-id", "pano_b", *_SAMPLE_ARGS)
    assert r.exit_code == 0, r.output
    r = _run("extract-patches", "--root", root, "--task", "rgb", "--task",
             "semantic", "--task", "depth", "--task", "normal", "--jobs", "1")
    assert r.exit_code == 0, r.output
    r = _run("reproject", "--root", root, "--jobs", "1")
    assert r.exit_code == 0, r.output
    return root


def test_pipeline_outputs_exist(dataset):
    for pid in ("pano_a", "pano_b"):
        base = os.path.join(dataset, pid)
        assert os.path.exists(os.path.join(base, "manifest"))
        for i in range(3):
            for task in ("rgb", "semantic", "depth", "normal"):
                assert os.path.exists(
                    os.path.join(base, "crops", f"{i}.{task}.png"))
            for task in ("semantic", "depth", "normal"):
                assert os.path.exists(
                    os.path.join(base, "labels", f"{i}.{task}.png"))
                assert os.path.exists(
                    os.path.join(base, "labels", f"{i}.{task}.mask.png"))
        for task in ("semantic", "depth", "normal"):
            report = os.path.join(base, "labels", f"errors.{task}.json")
            assert json.load(open(report)) == []


def test_sample_poses_rerun_is_byte_identical(dataset, tmp_path):
    manifest = os.path.join(dataset, "pano_a", "manifest")
    before = open(manifest, "rb").read()
    other = str(tmp_path / "redo")
    os.makedirs(os.path.join(other, "pano_a"))
    r = _run("sample-poses", "--root", other, "--pano-id", "pano_a",
             *_SAMPLE_ARGS)
    assert r.exit_code == 0
    after = open(os.path.join(other, "pano_a", "manifest"), "rb").read()
    assert after == before


def test_jobs_do_not_change_outputs(dataset, tmp_path):
    other = str(tmp_path / "par")
    _write_dataset(other, ["pano_a", "pano_b"])
    r = _run("sample-poses", "--root", other, "--pano-id", "pano_a",
             "--pano-id", "pano_b", "--jobs", "2", *_SAMPLE_ARGS)
    assert r.exit_code == 0
    r = _run("extract-patches", "--root", other, "--task", "depth",
             "--jobs", "2")
    assert r.exit_code == 0
    for pid in ("pano_a", "pano_b"):
        for name in ("manifest", os.path.join("crops", "1.depth.png")):
            a = open(os.path.join(dataset, pid, name), "rb").read()
            b = open(os.path.join(other, pid, name), "rb").read()
            assert a == b, f"{pid}/{name} differs across --jobs"


def test_reproject_ledgers_bad_crops(dataset, tmp_path):
    other = str(tmp_path / "dmg")
    shutil.copytree(dataset, other)
    victim = os.path.join(other, "pano_a", "crops", "1.depth.png")
    os.remove(victim)
    corrupt = os.path.join(other, "pano_a", "crops", "2.depth.png")
    with open(corrupt, "wb") as fh:
        fh.write(b"garbage")
    r = _run("reproject", "--root", other, "--pano-id", "pano_a",
             "--task", "depth", "--jobs", "1")
    assert r.exit_code == 0, r.output  # bad crops must not abort the batch
    report = json.load(open(os.path.join(other, "pano_a", "labels",
                                         "errors.depth.json")))
    assert sorted(e["index"] for e in report) == [1, 2]
    assert any("missing" in e["reason"] for e in report)
    assert os.path.exists(os.path.join(other, "pano_a", "labels",
                                       "0.depth.png"))


def test_aux_labels(dataset):
    r = _run("aux-labels", "--root", dataset, "--pano-id", "pano_a",
             "--jobs", "1")
    assert r.exit_code == 0, r.output
    aux = os.path.join(dataset, "pano_a", "aux")
    for name in ("gradient.hsv.png", "edf.png", "points.png"):
        assert os.path.exists(os.path.join(aux, name))
    # Point map magnitudes must reproduce the stored depth.
    points = codecs.decode_points(
        codecs.read_raster(os.path.join(aux, "points.png")))
    depth = codecs.decode_depth(
        codecs.read_raster(os.path.join(dataset, "pano_a", "pano.depth.png")))
    radius = np.linalg.norm(points, axis=-1)
    assert np.max(np.abs(radius - depth) / depth) < 2e-3


def test_emit_vis(dataset, tmp_path):
    other = str(tmp_path / "vis")
    _write_dataset(other, ["pano_a"])
    r = _run("sample-poses", "--root", other, "--pano-id", "pano_a",
             *_SAMPLE_ARGS)
    assert r.exit_code == 0
    r = _run("extract-patches", "--root", other, "--task", "depth",
             "--emit-vis", "--jobs", "1")
    assert r.exit_code == 0
    assert os.path.exists(os.path.join(other, "pano_a", "crops",
                                       "0.depth.vis.png"))
    r = _run("aux-labels", "--root", other, "--emit-vis", "--jobs", "1")
    assert r.exit_code == 0
    assert os.path.exists(os.path.join(other, "pano_a", "aux", "edf.vis.png"))


def test_prompt_gen_streams_and_files(tmp_path):
    r = _run("prompt-gen", "--seed", "0", "--count", "4")
    assert r.exit_code == 0
    lines = r.output.strip().split("\n")
    assert len(lines) == 4
    docs = [json.loads(line) for line in lines]
    assert [d["index"] for d in docs] == [0, 1, 2, 3]
    assert all(d["prompt"].endswith("360 panorama.") for d in docs)
    out = tmp_path / "prompts.jsonl"
    r2 = _run("prompt-gen", "--seed", "0", "--count", "4", "--out", str(out))
    assert r2.exit_code == 0
    assert out.read_text().strip().split("\n") == lines
    r3 = _run("prompt-gen", "--seed", "0", "--count", "4", "--jobs", "3")
    assert r3.output.strip().split("\n") == lines
    r4 = _run("prompt-gen", "--seed", "1", "--count", "4")
    assert r4.output != r.output


def test_prompt_gen_custom_pool(tmp_path):
    doc = {"indoor_scenes": ["vault"], "outdoor_scenes": ["mesa"],
           "lighting": ["dusk"], "details": ["haze"], "quality": ["crisp"]}
    pool = tmp_path / "pool.json"
    pool.write_text(json.dumps(doc))
    r = _run("prompt-gen", "--seed", "3", "--count", "8", "--pool", str(pool))
    assert r.exit_code == 0
    for line in r.output.strip().split("\n"):
        assert json.loads(line)["scene"] in ("vault", "mesa")


def test_eval_depth_directory_self_comparison(dataset, tmp_path):
    labels = os.path.join(dataset, "pano_a", "labels")
    out = tmp_path / "report.json"
    r = _run("eval", "--task", "depth", "--pred", labels, "--gt", labels,
             "--out", str(out))
    assert r.exit_code == 0, r.output
    report = json.loads(out.read_text())
    assert report["abs_rel"] == 0.0
    assert report["delta1_pct"] == 100.0
    assert report["valid_pixel_count"] > 0


def test_eval_semantic_directory(dataset):
    labels = os.path.join(dataset, "pano_a", "labels")
    r = _run("eval", "--task", "semantic", "--pred", labels, "--gt", labels,
             "--num-classes", "8")
    assert r.exit_code == 0, r.output
    report = json.loads(r.output)
    assert report["miou_pct"] == 100.0
    # Semantic eval without --num-classes is a configuration error.
    r2 = _run("eval", "--task", "semantic", "--pred", labels, "--gt", labels)
    assert r2.exit_code == 1
    assert json.loads(r2.stderr)["error"] == "ConfigError"


def test_eval_panel_delta(tmp_path):
    stl = tmp_path / "stl.json"
    mtl = tmp_path / "mtl.json"
    stl.write_text(json.dumps({"miou_pct": 64.21, "depth_rmse": 0.1989,
                               "normal_mean_deg": 5.9120}))
    mtl.write_text(json.dumps({"miou_pct": 66.64, "depth_rmse": 0.1432,
                               "normal_mean_deg": 5.4740}))
    r = _run("eval", "--stl", str(stl), "--mtl", str(mtl))
    assert r.exit_code == 0, r.output
    assert json.loads(r.output)["delta_mtl_pct"] == pytest.approx(13.07,
                                                                  abs=0.01)
    r2 = _run("eval", "--stl", str(stl))
    assert r2.exit_code == 1


def test_structured_errors_and_usage(tmp_path):
    r = _run("sample-poses", "--root", str(tmp_path / "nowhere"),
             "--pano-id", "x", "--fov-min", "200")
    assert r.exit_code == 1
    err = json.loads(r.stderr)
    assert err["error"] == "ConfigError"
    assert "fov" in err["detail"]
    r2 = _run("extract-patches", "--root", str(tmp_path / "nowhere"))
    assert r2.exit_code == 1
    assert json.loads(r2.stderr)["error"] == "ManifestError"
    r3 = _run("sample-poses", "--frobnicate")
    assert r3.exit_code == 2  # click usage error, not a crash


def test_config_file_with_flag_override(tmp_path):
    root = str(tmp_path / "cfgds")
    _write_dataset(root, ["solo"])
    cfg = tmp_path / "tool.cfg"
    cfg.write_text(f"root = {root}\nseed = 7\ncrops = 3\n"
                   f"pano_width = {2 * HEIGHT}\npano_height = {HEIGHT}\n"
                   "patch_width = 16\npatch_height = 16\n")
    r = _run("sample-poses", "--config", str(cfg), "--pano-id", "solo")
    assert r.exit_code == 0, r.output
    doc = json.load(open(os.path.join(root, "solo", "manifest")))
    assert len(doc["crops"]) == 3
    r2 = _run("sample-poses", "--config", str(cfg), "--pano-id", "solo",
              "--n", "2")
    assert r2.exit_code == 0
    doc2 = json.load(open(os.path.join(root, "solo", "manifest")))
    assert len(doc2["crops"]) == 2  # flag beats file, --n aliases --count


def test_selftest_and_gradcheck():
    r = _run("selftest")
    assert r.exit_code == 0, r.output
    assert "selftest ok" in r.output
    r2 = _run("gradcheck", "--seed", "0", "--instances", "1")
    assert r2.exit_code == 0, r2.output
    assert "gradient checks passed" in r2.output
