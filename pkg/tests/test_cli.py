import subprocess
import sys

import numpy as np
import pytest

from meshflow import imgio
from meshflow.flow import FramePair, dense_flow
from meshflow.model3d import CameraPose, Coefficients, Mesh, project, recombine
from meshflow.neuralmath import BsnParams, bsn, downsample_mask, upsample_embedding
from meshflow.raster import rasterize
from meshflow.synth import make_sequence, random_model
from meshflow.temporal import format_report, sequence_losses
from helpers import pipeline, run_cli

TRIANGLE = Mesh([[0, 0, 1], [3, 0, 1], [0, 3, 1]], [[0, 1, 2]])


@pytest.fixture
def tri_obj(tmp_path):
    imgio.write_obj(tmp_path / "tri.obj", TRIANGLE)
    return tmp_path / "tri.obj"


# render


def test_render_missing_size_is_usage_error(tri_obj, capsys):
    assert run_cli(["render", "--mesh", tri_obj]) == 2
    assert "--size" in capsys.readouterr().err


def test_render_needs_exactly_one_source(tmp_path, tri_obj):
    assert run_cli(["render", "--size", "4x4"]) == 2
    assert run_cli(["render", "--mesh", tri_obj, "--model", tri_obj, "--size", "4x4"]) == 2
    assert run_cli(["render", "--mesh", tri_obj, "--size", "0x4"]) == 2


def test_render_single_triangle(tmp_path, tri_obj, capsys):
    code, out = run_cli(["render", "--mesh", tri_obj, "--size", "4x4", "--out-mask", tmp_path / "m.pfm",
                         "--out-depth", tmp_path / "d.pfm", "--out-color", tmp_path / "c.ppm"], capsys)
    assert code == 0
    assert out.strip() == "covered=10"
    mask = imgio.read_pfm(tmp_path / "m.pfm")
    np.testing.assert_array_equal(mask, (np.add.outer(np.arange(4), np.arange(4)) <= 3).astype(np.float32))
    depth = imgio.read_pfm(tmp_path / "d.pfm")
    assert np.all(depth[mask == 1] == 1.0) and np.all(np.isneginf(depth[mask == 0]))


def test_render_model_matches_library(tmp_path, capsys):
    rng = np.random.default_rng(3)
    model = random_model(30, 4, 3, rng)
    model = type(model)(model.mean_shape.astype(np.float32), model.id_basis.astype(np.float32),
                        model.exp_basis.astype(np.float32), model.triangles)
    c_id = Coefficients(rng.normal(size=4).astype(np.float32), rng.normal(size=3).astype(np.float32))
    c_exp = Coefficients(rng.normal(size=4).astype(np.float32), rng.normal(size=3).astype(np.float32))
    pose = CameraPose(6.0, np.eye(3), [16.0, 16.0])
    imgio.write_model(tmp_path / "m.mm3d", model)
    imgio.write_coefficients(tmp_path / "id.coef", c_id)
    imgio.write_coefficients(tmp_path / "exp.coef", c_exp)
    imgio.write_pose(tmp_path / "pose.json", pose)
    code = run_cli(["render", "--model", tmp_path / "m.mm3d", "--coef-id", tmp_path / "id.coef",
                    "--coef-exp", tmp_path / "exp.coef", "--pose", tmp_path / "pose.json", "--size", "32x32",
                    "--out-depth", tmp_path / "d.pfm"])
    assert code == 0
    buf = rasterize(project(recombine(model, c_id, c_exp), pose), None, 32, 32)
    np.testing.assert_array_equal(imgio.read_pfm(tmp_path / "d.pfm"), buf.depth.astype(np.float32))


def test_render_hint(tmp_path, tri_obj):
    src = np.full((4, 4, 3), 0.6)
    imgio.write_ppm(tmp_path / "src.ppm", src)
    code = run_cli(["render", "--mesh", tri_obj, "--size", "4x4", "--hint-source", tmp_path / "src.ppm",
                    "--out-hint", tmp_path / "hint.ppm"])
    assert code == 0
    hint = imgio.read_ppm(tmp_path / "hint.ppm")
    covered = np.add.outer(np.arange(4), np.arange(4)) <= 3
    assert not hint[covered].any()
    assert np.all(hint[~covered] == 153 / 255)


def test_render_parse_and_mismatch_errors(tmp_path, tri_obj):
    (tmp_path / "bad.obj").write_text("v 0 0\n")
    assert run_cli(["render", "--mesh", tmp_path / "bad.obj", "--size", "4x4"]) == 3
    assert run_cli(["render", "--mesh", tmp_path / "missing.obj", "--size", "4x4"]) == 3
    imgio.write_texture(tmp_path / "tex.txt", np.zeros((2, 3)))
    assert run_cli(["render", "--mesh", tri_obj, "--texture", tmp_path / "tex.txt", "--size", "4x4"]) == 4


# flow


def test_flow_identical_meshes(tmp_path, capsys):
    sphere = make_sequence("static", 1, seed=1)
    imgio.write_obj(tmp_path / "s.obj", sphere.mesh)
    imgio.write_pose(tmp_path / "p.json", sphere.poses[0])
    code, out = run_cli(["flow", "--mesh-t", tmp_path / "s.obj", "--mesh-tm1", tmp_path / "s.obj",
                         "--pose-t", tmp_path / "p.json", "--pose-tm1", tmp_path / "p.json",
                         "--size", "64x64", "--out", tmp_path / "f.flw"], capsys)
    assert code == 0
    field = imgio.read_flow(tmp_path / "f.flw")
    assert out.strip() == f"valid={field.valid.sum()}"
    assert field.valid.sum() > 0 and not field.vectors.any()


def test_flow_rotation_matches_library(tmp_path):
    seq = make_sequence("rotate", 2, seed=3)
    imgio.write_obj(tmp_path / "m.obj", seq.mesh)
    for k in range(2):
        imgio.write_pose(tmp_path / f"p{k}.json", seq.poses[k])
    assert run_cli(["flow", "--mesh-t", tmp_path / "m.obj", "--mesh-tm1", tmp_path / "m.obj",
                    "--pose-t", tmp_path / "p1.json", "--pose-tm1", tmp_path / "p0.json",
                    "--size", "64x64", "--out", tmp_path / "f.flw"]) == 0
    mesh = imgio.read_obj(tmp_path / "m.obj")
    poses = [imgio.read_pose(tmp_path / f"p{k}.json") for k in range(2)]
    ref = dense_flow(FramePair.render(project(mesh, poses[1]), project(mesh, poses[0]), 64, 64))
    assert (tmp_path / "f.flw").read_bytes() == imgio.encode_flow(ref)


def test_flow_topology_mismatch(tmp_path, tri_obj):
    imgio.write_obj(tmp_path / "quad.obj", Mesh([[0, 0, 1], [3, 0, 1], [0, 3, 1], [3, 3, 1]], [[0, 1, 2], [1, 3, 2]]))
    assert run_cli(["flow", "--mesh-t", tri_obj, "--mesh-tm1", tmp_path / "quad.obj", "--size", "4x4",
                    "--out", tmp_path / "f.flw"]) == 4


# tmploss


def test_tmploss_count_mismatch(tmp_path):
    img = np.zeros((2, 2, 3))
    for k in range(3):
        imgio.write_ppm(tmp_path / f"f{k}.ppm", img)
    imgio.write_flow(tmp_path / "a.flw", imgio.FlowField.zeros(2, 2))
    assert run_cli(["tmploss", "--frames", tmp_path / "f0.ppm", tmp_path / "f1.ppm", tmp_path / "f2.ppm",
                    "--flows", tmp_path / "a.flw"]) == 2


def test_tmploss_two_pairs_is_mean(tmp_path, capsys):
    frames = [np.full((3, 3, 3), v) for v in (0.0, 0.2, 0.6)]
    for k, f in enumerate(frames):
        imgio.write_ppm(tmp_path / f"f{k}.ppm", f)
    imgio.write_flow(tmp_path / "a.flw", imgio.FlowField.zeros(3, 3))
    code, out = run_cli(["tmploss", "--frames", tmp_path / "f*.ppm", "--flows", tmp_path / "a.flw",
                         tmp_path / "a.flw"], capsys)
    assert code == 0
    q = [imgio.read_ppm(tmp_path / f"f{k}.ppm") for k in range(3)]
    a = float(np.mean((q[1] - q[0]) ** 2))
    b = float(np.mean((q[2] - q[1]) ** 2))
    lines = out.splitlines()
    assert lines[0] == f"pair=1 valid=9 l_tmp={a!r}"
    assert lines[1] == f"pair=2 valid=9 l_tmp={b!r}"
    assert float(lines[2].split("=")[1]) == pytest.approx((a + b) / 2, rel=1e-15)


def test_static_pipeline_gives_zero(tmp_path):
    report = pipeline(tmp_path, "static", frames=3, seed=1)
    assert report.splitlines()[-1] == "e_tmp=0.0"


def test_translate_pipeline_matches_library(tmp_path):
    report = pipeline(tmp_path, "translate", frames=3, seed=2)
    seq = make_sequence("translate", 3, seed=2)
    # the CLI reads frames back from 8-bit PPM, so the reference does the same
    frames = [imgio.decode_ppm(imgio.encode_ppm(rasterize(seq.projected(k), seq.texture, 64, 64).color)) for k in range(3)]
    flows = [dense_flow(FramePair.render(seq.projected(k), seq.projected(k - 1), 64, 64)) for k in (1, 2)]
    flows = [imgio.decode_flow(imgio.encode_flow(f)) for f in flows]
    assert report == format_report(sequence_losses(frames, flows))


# bsn


def test_bsn_matches_library(tmp_path):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 8, 3)).astype(np.float32)
    q = rng.normal(size=(4, 4, 3)).astype(np.float32)
    mask = (rng.uniform(size=(16, 16)) > 0.5).astype(np.float32)
    imgio.write_fmap(tmp_path / "x.fmap", x)
    imgio.write_fmap(tmp_path / "q.fmap", q)
    imgio.write_pfm(tmp_path / "m.pfm", mask)
    assert run_cli(["bsn", "--x", tmp_path / "x.fmap", "--q", tmp_path / "q.fmap", "--mask", tmp_path / "m.pfm",
                    "--out", tmp_path / "y.fmap"]) == 0
    ref = bsn(x, upsample_embedding(q, 8, 8), downsample_mask(mask, 8, 8), BsnParams.initial(3))
    np.testing.assert_array_equal(imgio.read_fmap(tmp_path / "y.fmap"), ref.astype(np.float32))


def test_bsn_channel_mismatch(tmp_path):
    imgio.write_fmap(tmp_path / "x.fmap", np.zeros((4, 4, 3)))
    imgio.write_fmap(tmp_path / "q.fmap", np.zeros((4, 4, 2)))
    imgio.write_pfm(tmp_path / "m.pfm", np.zeros((4, 4)))
    assert run_cli(["bsn", "--x", tmp_path / "x.fmap", "--q", tmp_path / "q.fmap", "--mask", tmp_path / "m.pfm",
                    "--out", tmp_path / "y.fmap"]) == 4


# sample


CATALOG = "clip c0 p0 10\nclip c1 p1 3\nimage a\nimage b\nimage c\nimage d\n"


def test_sample_sigma_one_only_images(tmp_path, capsys):
    (tmp_path / "cat.txt").write_text(CATALOG)
    code, out = run_cli(["sample", "--catalog", tmp_path / "cat.txt", "--sigma", "1", "--count", "50"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 50 and all(line.startswith("mode=image ") for line in lines)


def test_sample_is_seeded(tmp_path):
    (tmp_path / "cat.txt").write_text(CATALOG)
    for name in ("a", "b"):
        assert run_cli(["sample", "--catalog", tmp_path / "cat.txt", "--count", "20", "--seed", "7",
                        "--out", tmp_path / f"{name}.txt"]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_sample_errors(tmp_path):
    (tmp_path / "cat.txt").write_text("clip c0 p0\n")
    assert run_cli(["sample", "--catalog", tmp_path / "cat.txt"]) == 3
    assert run_cli(["sample", "--catalog", tmp_path / "cat.txt", "--sigma", "2"]) == 2


# synth and the console entry point


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run_cli(["synth", "--kind", "rotate", "--frames", "3", "--seed", "5", "--out", tmp_path / name]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "frame_002.ppm" in files and "texture.txt" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "meshflow", "render", "--mesh", tmp_path / "none.obj", "--size", "4x4"],
                          capture_output=True, text=True)
    assert proc.returncode == 3
    assert "cannot read input" in proc.stderr
