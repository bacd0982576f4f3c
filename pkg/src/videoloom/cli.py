"""Command-line entry points.

Subcommands:
  generate  run the full pipeline from a config file into an output dir
  inspect   print clip maps, the anneal schedule, and the filter as JSON
  check     run built-in invariant suites (nonzero exit on failure)
  export    render a saved latent to PPM frames
  metrics   compute the proxy metrics CSV for a saved latent
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import io as vio
from .exceptions import VideoloomError
from .fusion import annealing_gamma
from .noise import make_lpf
from .pipeline import run as run_pipeline
from .selfcheck import run_checks
from . import clips as cp


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videoloom", description="Long-video latent denoising engine."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the pipeline")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)

    ins = sub.add_parser("inspect", help="print maps, gamma schedule, filter")
    ins.add_argument("--config", required=True)
    ins.add_argument("--mask-out", default=None,
                     help="also write the filter mask as NPY")

    chk = sub.add_parser("check", help="run invariant suites")
    chk.add_argument("--filter", dest="name_filter", default=None)

    exp = sub.add_parser("export", help="latent to PPM frames")
    exp.add_argument("--latent", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--normalize", choices=[vio.MINMAX, vio.CLAMP],
                     default=vio.MINMAX)

    met = sub.add_parser("metrics", help="proxy metrics CSV for a latent")
    met.add_argument("--latent", required=True)
    met.add_argument("--out", required=True)
    return parser


def _cmd_generate(args) -> int:
    cfg = vio.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    # VIDEOLOOM_VERBOSE=0 silences the config echo (the only env knob)
    if os.environ.get("VIDEOLOOM_VERBOSE", "1") != "0":
        print("resolved config:", file=sys.stderr)
        for f in dataclasses.fields(cfg):
            print(f"  {f.name} = {getattr(cfg, f.name)}", file=sys.stderr)
    result = run_pipeline(cfg)
    os.makedirs(args.out, exist_ok=True)
    vio.save_latent(os.path.join(args.out, "z0.npy"), result.z0)
    vio.write_metrics_csv(
        os.path.join(args.out, "metrics.csv"), vio.compute_metrics(result.z0)
    )
    vio.write_report_csv(os.path.join(args.out, "report.csv"), result.reports)
    print(f"wrote z0.npy, metrics.csv, report.csv to {args.out} "
          f"(seed {result.seed}, {len(result.reports)} steps)")
    return 0


def _cmd_inspect(args) -> int:
    cfg = vio.load_config(args.config)
    for m in cp.make_global_maps(cfg.frames, cfg.clip_length, cfg.dilation,
                                 cfg.max_padded_frames):
        print(json.dumps({"path": m.path, "clip_id": m.clip_id,
                          "indices": list(m.indices), "shift": 0}))
    plan = cp.ShiftPlan(cfg.seed, per_clip=cfg.per_clip_shift)
    sched = cfg.schedule()
    t_top = sched.step_indices[0]
    shift = plan.shift(t_top, cfg.stride)
    for m in cp.make_local_maps(cfg.frames, cfg.clip_length, cfg.stride,
                                t_top, plan):
        print(json.dumps({"path": m.path, "clip_id": m.clip_id,
                          "indices": list(m.indices), "shift": shift}))
    gammas = [
        {"t": t, "gamma": annealing_gamma(t, cfg.anneal_params())}
        for t in sched.step_indices
    ]
    print(json.dumps({"gamma_schedule": gammas}))
    filt = make_lpf((cfg.frames, cfg.height, cfg.width), cfg.filter_kind,
                    cfg.filter_cutoff)
    print(json.dumps({
        "filter": {
            "kind": filt.kind,
            "cutoff": filt.cutoff,
            "shape": list(filt.mask.shape),
            "pass_fraction": float(filt.mask.mean()),
        }
    }))
    if args.mask_out:
        vio.save_filter_mask(args.mask_out, filt.mask)
    return 0


def _cmd_check(args) -> int:
    failures = 0
    for label, ok, detail in run_checks(args.name_filter):
        print(f"[{'ok' if ok else 'FAIL'}] {label}: {detail}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_export(args) -> int:
    z = vio.load_latent(args.latent)
    paths = vio.export_frames(z, args.out, args.normalize)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    z = vio.load_latent(args.latent)
    vio.write_metrics_csv(args.out, vio.compute_metrics(z))
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "inspect": _cmd_inspect,
    "check": _cmd_check,
    "export": _cmd_export,
    "metrics": _cmd_metrics,
}


def cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except VideoloomError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": "OSError", "message": str(e)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
