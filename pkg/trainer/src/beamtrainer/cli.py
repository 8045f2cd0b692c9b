"""Command line: train on a dataset directory, export weights + history."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .data import load_dataset
from .export import export_weights
from .model import build_model
from .training import TrainConfig, evaluate, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamtrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the beam predictor and export weights")
    p.add_argument("--dataset-dir", required=True, help="directory holding train.thzbt and test.thzbt")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lambda-beam", type=float, default=1.0)
    p.add_argument("--lambda-pow", type=float, default=1.0)
    p.add_argument("--out", default="weights.thznn")
    p.add_argument("--history", default="history.csv")
    p.add_argument("--checkpoint", default=None, help="optionally save the torch state dict")

    p = sub.add_parser("evaluate", help="evaluate a saved checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    return parser


def write_history(path, history) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,test_loss,acc_tx,acc_rx,mean_gain_loss\n")
        for row in history.rows():
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _cmd_train(args) -> int:
    train_ds = load_dataset(Path(args.dataset_dir) / "train.thzbt")
    test_ds = load_dataset(Path(args.dataset_dir) / "test.thzbt")
    model = build_model(train_ds.n_antennas, train_ds.branching, args.seed, dropout=args.dropout)
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        dropout=args.dropout,
        max_epochs=args.epochs,
        lambda_beam=args.lambda_beam,
        lambda_pow=args.lambda_pow,
        seed=args.seed,
    )
    history = train(model, train_ds, test_ds, config)
    export_weights(model, args.out)
    write_history(args.history, history)
    if args.checkpoint:
        torch.save(
            {
                "state_dict": model.state_dict(),
                "n_antennas": model.n_antennas,
                "branching": model.branching,
                "dropout": args.dropout,
            },
            args.checkpoint,
        )
    metrics = evaluate(model, test_ds)
    stabilized = history.stabilized_epoch or len(history.test_loss)
    print(
        f"trained {stabilized} epochs: test_loss={history.test_loss[-1]:.5f} "
        f"acc_tx={metrics['acc_tx']:.3f} acc_rx={metrics['acc_rx']:.3f} "
        f"mean_gain_loss={metrics['mean_gain_loss']:.4f}"
    )
    print(f"wrote {args.out} and {args.history}")
    return 0


def _cmd_evaluate(args) -> int:
    payload = torch.load(args.checkpoint, weights_only=True)
    model = build_model(payload["n_antennas"], payload["branching"], 0, dropout=payload["dropout"])
    model.load_state_dict(payload["state_dict"])
    metrics = evaluate(model, load_dataset(args.dataset))
    print(
        f"pair_match={metrics['pair_match']:.3f} acc_tx={metrics['acc_tx']:.3f} "
        f"acc_rx={metrics['acc_rx']:.3f} mean_gain_loss={metrics['mean_gain_loss']:.4f} "
        f"p80_gain_loss={metrics['p80_gain_loss']:.4f}"
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    return {"train": _cmd_train, "evaluate": _cmd_evaluate}[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
