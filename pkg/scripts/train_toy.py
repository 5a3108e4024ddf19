"""Train the codec end to end on the synthetic corpus and save weights.

Runs the staged curriculum at a configurable scale and prints the loss
curve tail plus validation score after every stage.  With --rate-points,
trains one model per lambda index (sharing the data corpus) so the output
directory can be fed straight into eval_rd.py.

Example:
    python3 scripts/train_toy.py --out runs/toy --steps-scale 0.25
    python3 scripts/train_toy.py --out runs/full --rate-points 0 1 2 3
"""

import argparse
import json
import time
from pathlib import Path

import torch

from nvc.core import CodecConfig
from nvc.data import make_sequence, training_specs, validation_specs
from nvc.model import build_model, save_weights
from nvc.training import ClipSampler, default_plan, train_full


def scaled_plan(scale: float):
    plan = default_plan()
    for stage in plan:
        stage.steps = max(1, int(round(stage.steps * scale)))
        stage.cascade_iters = max(1, int(round(stage.cascade_iters * scale)))
    return plan


def train_one(args, lambda_index: int, out_dir: Path) -> dict:
    torch.manual_seed(args.seed)
    cfg = CodecConfig()
    model = build_model(cfg, seed=args.seed)
    sampler = ClipSampler(
        [make_sequence(s) for s in training_specs(args.seed + 1,
                                                  frames=args.corpus_frames)],
        crop=args.crop, seed=args.seed + 2)
    validation = [make_sequence(s) for s in validation_specs(args.seed + 3)]

    t0 = time.time()
    history = train_full(
        model, lambda_index, seed=args.seed, plan=scaled_plan(args.steps_scale),
        sampler=sampler, validation_clips=validation,
        augment_every=args.augment_every, log=print)
    history["minutes"] = (time.time() - t0) / 60.0

    path = out_dir / f"weights_l{lambda_index}.npz"
    save_weights(model, path, metadata={"lambda_index": lambda_index,
                                        "seed": args.seed})
    print(f"lambda_index={lambda_index}: {history['minutes']:.1f} min, "
          f"weights -> {path}")
    return history


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True,
                    help="output directory for weights and history")
    ap.add_argument("--rate-points", type=int, nargs="+", default=[1],
                    help="lambda indices to train, one model each")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps-scale", type=float, default=1.0,
                    help="multiply every stage's step count (quick smoke: 0.05)")
    ap.add_argument("--crop", type=int, default=64)
    ap.add_argument("--corpus-frames", type=int, default=32)
    ap.add_argument("--augment-every", type=int, default=3,
                    help="degrade the reference every N steps (0 = never)")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    histories = {}
    for li in args.rate_points:
        histories[str(li)] = train_one(args, li, args.out)
    with open(args.out / "history.json", "w") as fh:
        json.dump(histories, fh, indent=2)
    print(f"history -> {args.out / 'history.json'}")


if __name__ == "__main__":
    main()
