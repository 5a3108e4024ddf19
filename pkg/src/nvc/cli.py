"""Command-line front end: encode / decode / eval / macs / train."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .codec import CodingContext, decode_sequence, encode_frame, make_header
from .core import CodecConfig, DecodeError, InvalidInputError, read_yuv, write_yuv
from .harness import bd_rate, emit_rd_csv, parse_rd_csv, rd_points, sequence_metrics
from .macs import DECODER_CAP, ENCODER_CAP, count_macs
from .model import build_model, load_weights, save_weights
from .quality import should_refresh


def _load_config(path: str | None) -> CodecConfig:
    return CodecConfig.from_file(path) if path else CodecConfig()


def _load_model(args) -> "VideoModel":
    cfg = _load_config(getattr(args, "config", None))
    model = build_model(cfg, seed=getattr(args, "seed", None))
    weights = getattr(args, "weights", None)
    if weights:
        load_weights(model, weights)
    return model


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (defaults built in)")
    p.add_argument("--weights", help="weight archive (.npz); omit for the "
                                     "seeded random initialization")
    p.add_argument("--seed", type=int, default=None,
                   help="weight init seed when no archive is given")


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="planar YUV420 file")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 10))
    p.add_argument("--frames", type=int, default=None,
                   help="frame count (default: whole file)")


def cmd_encode(args) -> int:
    model = _load_model(args)
    frames = read_yuv(args.input, args.width, args.height, args.bit_depth,
                      args.frames)
    header = make_header(model.cfg, args.width, args.height, args.bit_depth,
                         len(frames), args.lambda_index,
                         skip_enabled=False if args.no_skip else None,
                         refresh_period=args.refresh_period)
    ctx = CodingContext(model, header)
    records = []
    total = 0
    for t, frame in enumerate(frames):
        record, _, st = encode_frame(frame, ctx)
        records.append(record)
        total += st.byte_size
        refresh = " refresh" if t >= 1 and should_refresh(
            t, header.refresh_period) else ""
        print(f"frame {st.index:4d} {st.frame_type} q={st.quality_level} "
              f"bytes={st.byte_size} bits[m/r/h]="
              f"{st.bits_motion}/{st.bits_residual}/{st.bits_hyper} "
              f"psnr={st.psnr_y:.3f}/{st.psnr_u:.3f}/{st.psnr_v:.3f} "
              f"yuv={st.psnr:.3f}{refresh}")
    from .bitstream import write_bitstream
    data = write_bitstream(header, records)
    Path(args.output).write_bytes(data)
    print(f"wrote {len(data)} bytes ({len(frames)} frames, payload {total})")
    return 0


def cmd_decode(args) -> int:
    model = _load_model(args)
    data = Path(args.input).read_bytes()
    frames, header, stats = decode_sequence(model, data)
    for st in stats:
        print(f"frame {st.index:4d} {st.frame_type} q={st.quality_level} "
              f"bytes={st.byte_size} skip={st.skipped_fraction:.3f}")
    write_yuv(args.output, frames)
    print(f"decoded {len(frames)} frames "
          f"{header.width}x{header.height}@{header.bit_depth}bit")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args)
    source = read_yuv(args.input, args.width, args.height, args.bit_depth,
                      args.frames)
    rows = []
    for path in args.stream:
        data = Path(path).read_bytes()
        decoded, header, _ = decode_sequence(model, data)
        metrics = sequence_metrics(source, decoded, len(data), args.fps)
        rows.append({"sequence": args.sequence_name,
                     "lambda_index": header.lambda_index, **metrics})
        print(f"{path}: {metrics['kbps']:.2f} kbps  "
              f"Y {metrics['psnr_y']:.3f}  U {metrics['psnr_u']:.3f}  "
              f"V {metrics['psnr_v']:.3f}  YUV {metrics['psnr']:.3f}")
    if args.csv:
        emit_rd_csv(rows, args.csv)
        print(f"wrote {args.csv}")
    if args.bd_anchor:
        anchor = parse_rd_csv(args.bd_anchor)
        delta = bd_rate(rd_points(anchor), rd_points(rows))
        print(f"BD-rate vs anchor: {delta:+.2f}%")
    return 0


def cmd_macs(args) -> int:
    cfg = _load_config(args.config)
    report = count_macs(cfg, args.height, args.width)
    print(report.format_table())
    ok = (report.encoder_total <= ENCODER_CAP
          and report.decoder_total <= DECODER_CAP)
    print(f"caps: encoder {report.encoder_total / 1000.0:.2f}k "
          f"<= {ENCODER_CAP / 1000.0:.0f}k and "
          f"decoder {report.decoder_total / 1000.0:.2f}k "
          f"<= {DECODER_CAP / 1000.0:.0f}k: {'ok' if ok else 'EXCEEDED'}")
    return 0 if ok else 1


def cmd_train(args) -> int:
    from .training import StageConfig, default_plan, train_full

    cfg = _load_config(args.config)
    model = build_model(cfg, seed=args.seed)
    plan = []
    for st in default_plan():
        steps = max(1, int(st.steps * args.steps_scale)) if st.steps else 0
        iters = max(1, int(st.cascade_iters * args.steps_scale))
        plan.append(StageConfig(st.name, steps, st.lr, st.batch,
                                st.cascade_lengths, iters))
    history = train_full(model, args.lambda_index, seed=args.seed, plan=plan,
                         log=print)
    save_weights(model, args.output,
                 metadata={"lambda_index": args.lambda_index,
                           "seed": args.seed})
    if args.history:
        Path(args.history).write_text(json.dumps(history, indent=2))
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvc", description="conditional learned video codec tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode raw YUV420 to a stream file")
    _add_source_flags(p)
    _add_model_flags(p)
    p.add_argument("--lambda-index", type=int, default=2)
    p.add_argument("--output", required=True)
    p.add_argument("--no-skip", action="store_true",
                   help="disable skip-mode entropy coding")
    p.add_argument("--refresh-period", type=int, default=None)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode a stream file to raw YUV420")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("eval", help="PSNR/bitrate of decoded streams vs source")
    _add_source_flags(p)
    _add_model_flags(p)
    p.add_argument("--stream", action="append", required=True,
                   help="stream file (repeatable)")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--sequence-name", default="seq")
    p.add_argument("--csv", help="write rate/PSNR rows to this CSV")
    p.add_argument("--bd-anchor", help="anchor CSV for a BD-rate report")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("macs", help="per-module complexity report")
    p.add_argument("--config")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.set_defaults(fn=cmd_macs)

    p = sub.add_parser("train", help="run the toy training curriculum")
    p.add_argument("--config")
    p.add_argument("--output", required=True, help="weight archive to write")
    p.add_argument("--lambda-index", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--steps-scale", type=float, default=1.0,
                   help="scale every stage's step count")
    p.add_argument("--history", help="write the loss history as JSON")
    p.set_defaults(fn=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidInputError, DecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
