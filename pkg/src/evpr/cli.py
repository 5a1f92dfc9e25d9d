"""Command-line interface.

Subcommands mirror the pipeline stages (synth, slice, reconstruct,
describe, similarity, seqmatch, ensemble, eval) plus ``run`` for the whole
config-driven pipeline. All stages exchange data through the documented
file formats, so any chain of subcommands reproduces ``run`` exactly.

Exit codes: 0 success, 2 config/usage error, 3 data error, 4 internal
error. Set EVPR_WORKERS to parallelise ensemble member construction.
"""

from __future__ import annotations

import argparse
import sys

from . import descriptor as desc_mod
from . import evaluate as eval_mod
from . import pipeline as pl
from . import reconstruct as rec_mod
from .errors import ConfigError, DataError, EvprError
from .synth import SynthParams, generate_traverse, perturb_traverse
from . import events as ev_mod


def _add_binning_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("time", "count"), default="time")
    p.add_argument("--dt", type=float, default=0.5, help="time-bin duration (s)")
    p.add_argument("--n", type=int, default=5000, help="events per count bin")
    p.add_argument("--t0", type=float, default=None)


def _binning(args) -> pl.BinningConfig:
    return pl.BinningConfig(mode=args.mode, delta_t=args.dt, n=args.n, t0=args.t0)


def _add_sensor_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=0, help="sensor width (CSV input)")
    p.add_argument("--height", type=int, default=0, help="sensor height (CSV input)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evpr",
                                 description="Event-camera place recognition pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic traverse (pair)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--route-length", type=float, default=400.0)
    p.add_argument("--mean-speed", type=float, default=10.0)
    p.add_argument("--speed-variation", type=float, default=0.2)
    p.add_argument("--stop-count", type=int, default=0)
    p.add_argument("--event-rate", type=float, default=200.0,
                   help="structural events per meter")
    p.add_argument("--scene-grid", type=int, default=40)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--appearance-shift", type=float, default=0.0,
                   help="fraction of scene cells re-drawn in the pair traverse")
    p.add_argument("--pair-seed", type=int, default=None,
                   help="also emit a perturbed repeat traverse with this seed")
    p.add_argument("--sensor-width", type=int, default=64)
    p.add_argument("--sensor-height", type=int, default=48)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("slice", help="write a bin manifest for an event file")
    p.add_argument("--events", required=True)
    _add_binning_args(p)
    _add_sensor_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="events -> rendered frames (EVPF)")
    p.add_argument("--events", required=True)
    _add_binning_args(p)
    _add_sensor_args(p)
    p.add_argument("--method", choices=rec_mod.ReconParams.METHODS[:3],
                   default="count_polarity")
    p.add_argument("--lambda", dest="lambda_s", type=float, default=None,
                   help="time-surface decay (s); default dt/2")
    p.add_argument("--tanh-scale", type=float, default=1.0)
    p.add_argument("--hot-pixel-rate", type=float, default=0.0,
                   help="suppress pixels above this multiple of the mean rate")
    p.add_argument("--out", required=True)

    p = sub.add_parser("describe", help="EVPF frames -> grid descriptors (EVPD)")
    p.add_argument("--frames", required=True)
    p.add_argument("--grid", type=int, default=desc_mod.DEFAULT_GRID)
    p.add_argument("--label", default="")
    p.add_argument("--out", required=True)

    p = sub.add_parser("similarity", help="descriptor pair -> similarity dump")
    p.add_argument("--query", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tag", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", default=None, help="also write a PGM rendering")

    p = sub.add_parser("seqmatch", help="apply sequence matching to a dump")
    p.add_argument("--in", dest="in_csv", required=True)
    p.add_argument("--matcher", choices=("adaptive", "baseline", "none"),
                   default="adaptive")
    p.add_argument("--len", dest="length", type=int, default=10)
    p.add_argument("--no-normalize", action="store_true",
                   help="disable dual z-score (adaptive matcher)")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", default=None)

    p = sub.add_parser("ensemble", help="align member descriptors or fuse dumps")
    p.add_argument("action", choices=("align", "fuse"))
    p.add_argument("--rate", type=float, default=1.0, help="alignment rate (Hz)")
    p.add_argument("--members", nargs="*", default=[],
                   help="align: tag=query.evpd,ref.evpd entries")
    p.add_argument("--out-dir", default=None, help="align: output directory")
    p.add_argument("--manifest", default=None, help="fuse: 'tag = path' lines")
    p.add_argument("--out", default=None, help="fuse: fused dump path")

    p = sub.add_parser("eval", help="score a similarity dump against GPS truth")
    p.add_argument("--matrix", required=True)
    p.add_argument("--query-gps", required=True)
    p.add_argument("--ref-gps", required=True)
    p.add_argument("--tolerance", type=float, default=eval_mod.DEFAULT_TOLERANCE_M)
    p.add_argument("--group", default="")
    p.add_argument("--recon", default="", help="provenance: reconstruction name")
    p.add_argument("--extractor", default="builtin")
    p.add_argument("--resolution", type=float, default=0.0)
    p.add_argument("--seq-len", type=int, default=0)
    p.add_argument("--fingerprint", default="")
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value")
    p.add_argument("--out", default=None, help="override output.dir")

    return ap


def _cmd_synth(args) -> int:
    params = SynthParams(
        seed=args.seed, route_length=args.route_length, mean_speed=args.mean_speed,
        speed_variation=args.speed_variation, stop_count=args.stop_count,
        event_rate_per_meter=args.event_rate, scene_grid=args.scene_grid,
        noise_rate=args.noise_rate, appearance_shift=0.0,
        sensor_width=args.sensor_width, sensor_height=args.sensor_height,
    )
    stream, track = generate_traverse(params)
    ev_mod.write_events_binary(stream, f"{args.out_prefix}.events.evpr")
    eval_mod.write_track_csv(track, f"{args.out_prefix}.gps.csv")
    print(f"wrote {len(stream)} events to {args.out_prefix}.events.evpr")
    if args.pair_seed is not None:
        stream2, track2 = perturb_traverse(params, args.appearance_shift,
                                           args.pair_seed)
        ev_mod.write_events_binary(stream2, f"{args.out_prefix}.pair.events.evpr")
        eval_mod.write_track_csv(track2, f"{args.out_prefix}.pair.gps.csv")
        print(f"wrote {len(stream2)} events to {args.out_prefix}.pair.events.evpr")
    return 0


def _cmd_ensemble(args) -> int:
    if args.action == "align":
        if not args.members or args.out_dir is None:
            raise ConfigError("ensemble align needs --members and --out-dir")
        member_descs = {}
        for entry in args.members:
            if "=" not in entry or "," not in entry:
                raise ConfigError(f"member entry {entry!r} must be tag=query,ref")
            tag, paths = entry.split("=", 1)
            q, r = paths.split(",", 1)
            member_descs[tag] = (q, r)
        out = pl.stage_align(member_descs, args.rate, args.out_dir)
        for tag in sorted(out):
            print(f"{tag}: {out[tag][0]} {out[tag][1]}")
        return 0
    if args.manifest is None or args.out is None:
        raise ConfigError("ensemble fuse needs --manifest and --out")
    pl.stage_fuse(pl.parse_manifest(args.manifest), args.rate, args.out)
    print(f"fused -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "slice":
            n = pl.stage_slice_manifest(args.events, _binning(args), args.out,
                                        args.width, args.height)
            print(f"{n} bins -> {args.out}")
            return 0
        if args.command == "reconstruct":
            recon = rec_mod.ReconParams(method=args.method, lambda_s=args.lambda_s,
                                        tanh_scale=args.tanh_scale)
            n = pl.stage_reconstruct(args.events, _binning(args), recon, args.out,
                                     args.width, args.height, args.hot_pixel_rate)
            print(f"{n} frames -> {args.out}")
            return 0
        if args.command == "describe":
            n = pl.stage_describe(args.frames, args.grid, args.label, args.out)
            print(f"{n} descriptors -> {args.out}")
            return 0
        if args.command == "similarity":
            pl.stage_similarity(args.query, args.ref, args.tag, args.out, args.pgm)
            print(f"similarity -> {args.out}")
            return 0
        if args.command == "seqmatch":
            seq = pl.SequenceConfig(matcher=args.matcher, length=args.length,
                                    normalize=not args.no_normalize,
                                    epsilon=args.epsilon)
            pl.stage_seqmatch(args.in_csv, seq, args.out, args.pgm)
            print(f"seqmatch -> {args.out}")
            return 0
        if args.command == "ensemble":
            return _cmd_ensemble(args)
        if args.command == "eval":
            provenance = {
                "reconstruction": args.recon,
                "extractor": args.extractor,
                "resolution_s": args.resolution,
                "seq_len": args.seq_len,
                "fingerprint": args.fingerprint,
            }
            report = pl.stage_eval(args.matrix, args.query_gps, args.ref_gps,
                                   args.tolerance, args.group, provenance,
                                   f"{args.out_prefix}.csv",
                                   f"{args.out_prefix}.json")
            print(f"recall@1 = {report.recall_at_1:.4f} "
                  f"({report.n_correct}/{report.n_queries}) -> {args.out_prefix}.json")
            return 0
        if args.command == "run":
            overrides = {}
            for item in args.set:
                if "=" not in item:
                    raise ConfigError(f"--set {item!r} must be SECTION.KEY=VALUE")
                key, value = item.split("=", 1)
                overrides[key] = value
            if args.out is not None:
                overrides["output.dir"] = args.out
            cfg = pl.load_config(args.config, overrides)
            report = pl.run_pipeline(cfg)
            print(f"recall@1 = {report.recall_at_1:.4f} "
                  f"({report.n_correct}/{report.n_queries}) -> {cfg.output_dir}")
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (EvprError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
