"""Build rate-distortion curves from trained weights and compare codecs.

Loads one weights file per lambda index (as written by train_toy.py),
codes the held-out synthetic sequences at every rate point, writes the
RD CSV, and — when an anchor CSV is given — reports BD-rate per sequence.

Example:
    python3 scripts/eval_rd.py --weights-dir runs/full --out full.csv
    python3 scripts/eval_rd.py --weights-dir runs/ablation --out abl.csv \
        --anchor full.csv
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path

from nvc.core import CodecConfig
from nvc.data import SequenceSpec, make_sequence
from nvc.harness import bd_rate, emit_rd_csv, evaluate_models, parse_rd_csv, rd_points
from nvc.model import build_model, load_weights

EVAL_SPECS = (
    SequenceSpec("pan", 96, 64, 24, 9001, velocity=(1.7, 0.3)),
    SequenceSpec("rotate", 64, 64, 24, 9002, spin=1.1),
    SequenceSpec("mixed", 96, 96, 24, 9003),
)


def load_rate_models(weights_dir: Path) -> dict:
    models = {}
    for path in sorted(weights_dir.glob("weights_l*.npz")):
        lambda_index = int(path.stem.split("_l")[1])
        model = build_model(CodecConfig())
        load_weights(model, path)
        models[lambda_index] = model
    if len(models) < 2:
        sys.exit(f"need at least 2 rate points in {weights_dir}, "
                 f"found {sorted(models)}")
    return models


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True, help="RD CSV to write")
    ap.add_argument("--anchor", type=Path,
                    help="anchor RD CSV for BD-rate comparison")
    ap.add_argument("--fps", type=float, default=30.0)
    args = ap.parse_args()

    models = load_rate_models(args.weights_dir)
    rows = []
    for spec in EVAL_SPECS:
        name = f"{spec.kind}{spec.width}x{spec.height}"
        seq_rows = evaluate_models(models, make_sequence(spec),
                                   fps=args.fps, sequence=name)
        for row in seq_rows:
            print(f"{name:14s} l={row['lambda_index']} "
                  f"{row['kbps']:9.1f} kbps  {row['psnr']:6.2f} dB")
        rows.extend(seq_rows)
    emit_rd_csv(rows, args.out)
    print(f"rd csv -> {args.out}")

    if args.anchor:
        anchor_rows = defaultdict(list)
        for row in parse_rd_csv(args.anchor):
            anchor_rows[row["sequence"]].append(row)
        print("\nBD-rate vs anchor (negative = this run cheaper):")
        test_rows = defaultdict(list)
        for row in rows:
            test_rows[row["sequence"]].append(row)
        for name in sorted(test_rows):
            if name not in anchor_rows:
                print(f"{name:14s} (not in anchor, skipped)")
                continue
            delta = bd_rate(rd_points(anchor_rows[name]),
                            rd_points(test_rows[name]))
            print(f"{name:14s} {delta:+7.2f}%")


if __name__ == "__main__":
    main()
