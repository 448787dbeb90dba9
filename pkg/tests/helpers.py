"""Helpers shared by several test modules."""

from pathlib import Path

import numpy as np

from meshflow.flow import FramePair, dense_flow
from meshflow.raster import rasterize


def render_frames(seq):
    return [rasterize(seq.projected(k), seq.texture, seq.width, seq.height) for k in range(len(seq.poses))]


def sequence_flows(seq, buffers=None):
    """Flow fields mapping frame k+1 back to frame k."""
    buffers = buffers or render_frames(seq)
    flows = []
    for k in range(1, len(seq.poses)):
        pair = FramePair(seq.projected(k), seq.projected(k - 1), buffers[k], buffers[k - 1])
        flows.append(dense_flow(pair))
    return flows


def interior(flow, covered_tm1):
    """Valid pixels whose whole bilinear footprint in frame t-1 is covered."""
    ys, xs = np.nonzero(flow.valid)
    sx = xs - flow.vectors[ys, xs, 0]
    sy = ys - flow.vectors[ys, xs, 1]
    h, w = covered_tm1.shape
    x0, y0 = np.floor(sx).astype(int), np.floor(sy).astype(int)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    ok = covered_tm1[y0, x0] & covered_tm1[y0, x1] & covered_tm1[y1, x0] & covered_tm1[y1, x1]
    out = np.zeros_like(flow.valid)
    out[ys[ok], xs[ok]] = True
    return out


def run_cli(argv, capsys=None):
    """Run the CLI in-process; returns (exit code, stdout) when capsys is given."""
    from meshflow.cli import main

    try:
        code = main([str(a) for a in argv])
    except SystemExit as stop:  # argparse usage errors
        code = stop.code
    if capsys is None:
        return code
    return code, capsys.readouterr().out


def pipeline(root, kind="static", frames=10, seed=0, size="64x64"):
    """synth, then render, flow and tmploss over every frame; returns the report text."""
    root = Path(root)
    seq_dir = root / "seq"
    assert run_cli(["synth", "--kind", kind, "--frames", frames, "--seed", seed, "--size", size, "--out", seq_dir]) == 0
    for k in range(frames):
        code = run_cli([
            "render", "--mesh", seq_dir / f"mesh_{k:03d}.obj", "--pose", seq_dir / f"pose_{k:03d}.json",
            "--texture", seq_dir / "texture.txt", "--size", size,
            "--out-color", root / f"color_{k:03d}.ppm", "--out-depth", root / f"depth_{k:03d}.pfm",
            "--out-mask", root / f"mask_{k:03d}.pfm",
        ])
        assert code == 0
    for k in range(1, frames):
        code = run_cli([
            "flow", "--mesh-t", seq_dir / f"mesh_{k:03d}.obj", "--mesh-tm1", seq_dir / f"mesh_{k - 1:03d}.obj",
            "--pose-t", seq_dir / f"pose_{k:03d}.json", "--pose-tm1", seq_dir / f"pose_{k - 1:03d}.json",
            "--size", size, "--out", root / f"flow_{k:03d}.flw",
        ])
        assert code == 0
    code = run_cli(["tmploss", "--frames", str(root / "color_*.ppm"), "--flows", str(root / "flow_*.flw"),
                    "--report", root / "report.txt"])
    assert code == 0
    return (root / "report.txt").read_text()
