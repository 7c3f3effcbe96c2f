"""Command line entry points: train a model, run inference over a dataset.

    gnnbeam train --data scenes.jsonl --epochs 200 --out model.pt
    gnnbeam infer --ckpt model.pt --data scenes.jsonl --out solutions.jsonl

Training fits the noisy channel copies when the dataset carries them
(pass --perfect-csi to score the loss on exact channels instead);
inference likewise feeds the model the noisy copies, matching how the
solver pipeline treats imperfect CSI.
"""

import argparse
import sys

from .records import SchemaError, read_csi, write_solutions
from .training import TrainConfig, infer, load_checkpoint, save_checkpoint, train


def cmd_train(args):
    samples = read_csi(args.data)
    cfg = TrainConfig(
        epochs=args.epochs, q=args.q, D=args.D, beta=args.beta, lr=args.lr,
        batch_size=args.batch_size, seed=args.seed, val_frac=args.val_frac,
        perfect_csi=args.perfect_csi,
    )
    model, run = train(samples, cfg)
    save_checkpoint(args.out, model, run)
    if run.loss_trace:
        tail = run.loss_trace[-1]
        best = (f", best val loss {run.best_val_loss:.4f} at epoch {run.best_epoch}"
                if run.val_loss_trace else "")
        sat = (f", val satisfaction {run.satisfaction_trace[-1] * 100:.1f}%"
               if run.satisfaction_trace else "")
        print(f"trained {cfg.epochs} epochs on {len(samples)} records: "
              f"final train loss {tail:.4f}{best}{sat}")
    else:
        print(f"wrote untrained model for {len(samples)} records")
    return 0


def cmd_infer(args):
    model, _ = load_checkpoint(args.ckpt)
    samples = read_csi(args.data)
    solutions = infer(model, samples, perfect=args.perfect_csi,
                      batch_size=args.batch_size)
    count = write_solutions(args.out, solutions)
    print(f"wrote {count} solutions to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gnnbeam",
        description="learned joint transmit/RIS beamforming over JSONL datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--q", type=int, default=128, help="base feature width")
    p.add_argument("--D", type=int, default=3, help="message passing rounds")
    p.add_argument("--beta", type=float, default=200.0, help="beampattern penalty weight")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128, dest="batch_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-frac", type=float, default=0.1, dest="val_frac")
    p.add_argument("--perfect-csi", action="store_true", dest="perfect_csi",
                   help="score the training loss on exact channels")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write solutions for a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=256, dest="batch_size")
    p.add_argument("--perfect-csi", action="store_true", dest="perfect_csi",
                   help="feed the model exact channels even when noisy ones exist")
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
