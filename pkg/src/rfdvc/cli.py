"""Command line: scene generation, codec round trips, single runs, grids and BLER sweeps.

External PPM inputs whose sides are not multiples of 16 are padded with
black on the right and bottom before encoding.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import bler_to_config
from .codec import Bitstream, CodecParams, decode_batch, encode_batch
from .core import Role
from .harness import (Check, ExperimentConfig, channel_seed, grid_checks, grid_to_dir, sweep_checks,
                      sweep_to_dir, write_csv)
from .metrics import CSV_COLUMNS
from .netpbm import read_frame, write_frame, write_mask_pgm
from .pipeline import finish_run, prepare_run
from .scenegen import SceneSpec, render_pair

log = logging.getLogger("rfdvc")


def cmd_gen(args) -> int:
    scene = dict(width=args.width, height=args.height, batch_len=args.frames,
                 background_id=args.background_id, camera_step=args.camera_step)
    spec = SceneSpec.for_traffic(args.seed, args.condition, args.traffic, **scene)
    name = args.scenario or f"{args.condition}_{args.traffic}_{args.seed}"
    out = Path(args.out) / name
    out.mkdir(parents=True, exist_ok=True)
    for t in range(spec.batch_len):
        cav, rf, gt = render_pair(spec, t)
        write_frame(out / f"{t}_cav.ppm", cav)
        write_frame(out / f"{t}_rf.ppm", rf)
        for m in gt:
            write_mask_pgm(out / f"{t}_gt_{m.label}.pgm", m)
    print(f"wrote {spec.batch_len} frame pair(s) to {out}")
    return 0


def cmd_encode(args) -> int:
    paths = sorted(Path(args.inp).glob(args.pattern))
    if not paths:
        print(f"no files matching {args.pattern} in {args.inp}", file=sys.stderr)
        return 2
    frames = [read_frame(p, role=Role.DELTA, frame_index=i) for i, p in enumerate(paths)]
    params = CodecParams(quant_step=args.q, gop_len=args.gop_len, slice_rows=args.slice_rows)
    bits = encode_batch(frames, params)
    Path(args.out).write_bytes(bits.data)
    raw = sum(f.nbytes for f in frames)
    print(f"{len(frames)} frame(s), {raw} raw bytes -> {bits.total_bytes} bytes")
    return 0


def cmd_decode(args) -> int:
    bits = Bitstream(Path(args.inp).read_bytes())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(decode_batch(bits)):
        write_frame(out / f"{i:03d}.ppm", f)
    print(f"decoded {bits.frame_count} frame(s) to {out}")
    return 0


def background_integrity(res) -> bool:
    """Every pixel outside the overlay region equals the receiver-side RF-frame."""
    for rec, rf, inside in zip(res.rec_frames, res.rf_frames, res.reconstruction.inside):
        if not np.array_equal(rec.pixels[~inside], rf.pixels[~inside]):
            return False
    return True


def _report(checks: list[Check]) -> int:
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if cfg.n_cells != 1:
        print(f"run takes a single-cell config, got {cfg.n_cells} cells (use grid)", file=sys.stderr)
        return 2
    seed, cond, traffic = cfg.seeds[0], cfg.conditions[0], cfg.traffic[0]
    variant, q, bler = cfg.variants[0], cfg.quant_steps[0], cfg.bler_targets[0]
    prep = prepare_run(cfg.scene_spec(seed, cond, traffic), variant, cfg.codec_params(q), cfg.seg)
    ch = bler_to_config(bler, seed=channel_seed(seed, bler), **cfg.channel)
    res = finish_run(prep, ch, cfg.constraints, bler_target=bler)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(res.rec_frames):
        write_frame(out / f"rec_{i:03d}.ppm", f)
    res.trace.to_csv(out / "trace.csv")
    write_csv(out / "report.csv", CSV_COLUMNS, [r.row() for r in res.reports])
    print(f"{variant} {cond}/{traffic} seed {seed}: {res.bitstream_bytes} bytes, "
          f"mean SSIM {res.mean_ssim_rec:.4f}, realized loss {res.trace.realized_loss_rate:.4f}, "
          f"tau_est {res.tau_est:.4f} s")
    if args.check:
        checks = [Check("one report row per frame", len(res.reports) == len(res.rec_frames),
                        f"{len(res.reports)} rows")]
        if prep.variant.is_delta:
            checks.append(Check("background integrity", background_integrity(res), "outside-overlay pixels"))
        return _report(checks)
    return 0


def _load_grid(args) -> tuple[ExperimentConfig, Path]:
    cfg = ExperimentConfig.load(args.config)
    return cfg, Path(args.out or cfg.out)


def cmd_grid(args) -> int:
    cfg, out = _load_grid(args)
    result = grid_to_dir(cfg, out, jobs=args.jobs, plots=not args.no_plots)
    print(f"{len(result.rows)} row(s), {len(result.failures)} failed cell(s) -> {out}")
    if args.check:
        return _report(grid_checks(result))
    return 1 if result.failures else 0


def cmd_sweep(args) -> int:
    cfg, out = _load_grid(args)
    result, curves = sweep_to_dir(cfg, out, jobs=args.jobs, plots=not args.no_plots)
    for name, rows in curves.items():
        for r in rows:
            print(f"{'rain' if name else 'other'} {r['variant']} BLER {r['bler_target']:.2f}: "
                  f"SSIM {r['ssim_rec_mean']:.4f} (n={r['n']})")
    if args.check:
        checks = [Check("no failed cells", not result.failures, f"{len(result.failures)} failure(s)")]
        checks += sweep_checks(curves[""])
        return _report(checks)
    return 1 if result.failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfdvc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render CAV/RF frame pairs and ground-truth masks")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--condition", default="morning")
    g.add_argument("--traffic", default="sparse")
    g.add_argument("--frames", type=int, default=10)
    g.add_argument("--width", type=int, default=320)
    g.add_argument("--height", type=int, default=192)
    g.add_argument("--background-id", type=int, default=5)
    g.add_argument("--camera-step", type=float, default=0.0, help="camera x shift per frame, px")
    g.add_argument("--scenario", help="subdirectory name (default <condition>_<traffic>_<seed>)")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("codec", help="encode a directory of PPM frames or decode a bitstream")
    csub = c.add_subparsers(dest="codec_command", required=True)
    e = csub.add_parser("encode", help="PPM frames (sorted by name, padded to multiples of 16) -> bitstream")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--q", type=int, default=8, help="quantiser step")
    e.add_argument("--gop-len", type=int, default=10)
    e.add_argument("--slice-rows", type=int, default=2, help="8-pixel block rows per slice")
    e.add_argument("--pattern", default="*.ppm")
    e.set_defaults(func=cmd_encode)
    d = csub.add_parser("decode", help="bitstream -> PPM frames")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    r = sub.add_parser("run", help="one scene through encoder, channel and decoder")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--check", action="store_true")
    r.set_defaults(func=cmd_run)

    for name, func, desc in (("grid", cmd_grid, "full scenario grid with summary and box plot"),
                             ("sweep", cmd_sweep, "SSIM against BLER curves, rain reported separately")):
        s = sub.add_parser(name, help=desc)
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="output directory (default: config 'out')")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--check", action="store_true", help="exit nonzero if any check fails")
        s.add_argument("--no-plots", action="store_true")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
