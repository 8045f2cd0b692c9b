"""Top-level command line interface.

Every subcommand emits CSV with a one-line header; all randomness flows
from a single master seed, so a fixed seed reproduces every output file
byte for byte. Floats are written with repr (shortest round-trip form).

A ``--config path`` file holds ``key=value`` lines mirroring the long
flag names; explicit command-line flags override file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import beamsearch, datagen, evalbench
from .codebook import build_hierarchical
from .datagen import DatasetConfig, read_dataset
from .evalbench import (
    EvalConfig,
    PROTOCOL_ADAPTIVE,
    PROTOCOL_BOTH_SIDE_TREE,
    PROTOCOL_EXHAUSTIVE,
    PROTOCOL_ONE_SIDE,
    PROTOCOL_ONE_SIDE_TREE,
    PROTOCOL_PROPOSED,
    FastRankOneOracle,
    draw_eval_link,
    trial_seed,
)
from .nnrt import load_weights, predict


def _fmt(value) -> str:
    # np.float64 is a float subclass; always go through the plain repr
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_config_file(path) -> dict[str, str]:
    entries = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip().replace("_", "-")] = value.strip()
    return entries


def _config_tokens(entries: dict[str, str]) -> list[str]:
    tokens = []
    for key, value in entries.items():
        flag = f"--{key}"
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value file mirroring the flags")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out-dir", default=".", help="directory for output files")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamforge",
        description="THz beam-training workbench: codebooks, searches, datasets, inference, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codebook", help="dump codebook layers as CSV")
    _common_flags(p)
    p.add_argument("--n", type=int, required=True, help="antennas per side")
    p.add_argument("--m", type=int, default=2, help="tree branching factor")
    p.add_argument("--layer", type=int, default=None, help="single layer to dump (default: all)")
    p.add_argument("--out", default=None, help="output CSV path")

    p = sub.add_parser("search", help="run a beam-training protocol over random channels")
    _common_flags(p)
    p.add_argument(
        "--protocol",
        required=True,
        choices=[
            PROTOCOL_EXHAUSTIVE,
            PROTOCOL_ONE_SIDE,
            PROTOCOL_ONE_SIDE_TREE,
            PROTOCOL_BOTH_SIDE_TREE,
            PROTOCOL_ADAPTIVE,
        ],
    )
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--radius", type=float, default=datagen.DEFAULT_RADIUS_M)
    p.add_argument("--d-min", type=float, default=datagen.DEFAULT_D_MIN_M)
    p.add_argument("--out", default=None)

    p = sub.add_parser("datagen", help="generate train/test dataset files")
    _common_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--train-count", type=int, default=10000)
    p.add_argument("--test-count", type=int, default=2000)
    p.add_argument("--radius", type=float, default=datagen.DEFAULT_RADIUS_M)
    p.add_argument("--d-min", type=float, default=datagen.DEFAULT_D_MIN_M)
    p.add_argument(
        "--oracle-labels",
        action="store_true",
        help="label with exhaustive-search winners instead of tree-search winners",
    )

    p = sub.add_parser("infer", help="predict beam pairs for a dataset file")
    _common_flags(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval-power", help="average received power vs distance")
    _common_flags(p)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--radius", type=float, default=datagen.DEFAULT_RADIUS_M)
    p.add_argument("--d-min", type=float, default=datagen.DEFAULT_D_MIN_M)
    p.add_argument(
        "--protocols",
        default=f"{PROTOCOL_EXHAUSTIVE},{PROTOCOL_ONE_SIDE_TREE}",
        help="comma-separated protocol list",
    )
    p.add_argument("--weights", default=None, help="needed when 'proposed' is requested")
    p.add_argument("--dataset", default=None, help="dataset file carrying norm constants")

    p = sub.add_parser("eval-cdf", help="CDF of normalized gain loss vs exhaustive")
    _common_flags(p)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--radius", type=float, default=datagen.DEFAULT_RADIUS_M)
    p.add_argument("--d-min", type=float, default=datagen.DEFAULT_D_MIN_M)
    p.add_argument("--weights", required=True)
    p.add_argument("--dataset", required=True, help="dataset file carrying norm constants")

    p = sub.add_parser("complexity", help="formula vs measured measurement counts")
    _common_flags(p)
    p.add_argument("--n-list", default="4,16,64,256", help="comma-separated N values")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n-rf", type=int, default=4, help="RF chains for the parallel-search formula")
    p.add_argument("--out", default=None)

    return parser


def _out_path(args, default_name: str) -> Path:
    out = getattr(args, "out", None)
    if out:
        return Path(out)
    return Path(args.out_dir) / default_name


def _cmd_codebook(args) -> int:
    cb = build_hierarchical(args.n, args.m)
    layers = range(cb.depth + 1) if args.layer is None else [args.layer]
    rows = []
    for layer in layers:
        for word in cb.layers[layer]:
            for element, coeff in enumerate(word.coeffs):
                rows.append((layer, word.index, element, float(coeff.real), float(coeff.imag)))
    write_csv(_out_path(args, "codebook.csv"), ["layer", "index", "element", "re", "im"], rows)
    return 0


def _cmd_search(args) -> int:
    tx_cb = build_hierarchical(args.n, args.m)
    rx_cb = build_hierarchical(args.n, args.m)
    params = evalbench.EvalConfig(n_antennas=args.n, branching=args.m).resolved_params()
    rows = []
    for trial in range(args.trials):
        rng = np.random.default_rng(trial_seed(args.seed, trial))
        geometry, psi = draw_eval_link(rng, args.radius, args.d_min)
        oracle = FastRankOneOracle(params, tx_cb, rx_cb, geometry, psi)
        if args.protocol == PROTOCOL_EXHAUSTIVE:
            result = beamsearch.exhaustive_search(oracle, tx_cb.narrow_layer(), rx_cb.narrow_layer())
        elif args.protocol == PROTOCOL_ONE_SIDE:
            result = beamsearch.one_side_sweep(oracle, tx_cb, rx_cb)
        elif args.protocol == PROTOCOL_ONE_SIDE_TREE:
            result = beamsearch.one_side_tree_search(oracle, tx_cb, rx_cb, args.m)
        elif args.protocol == PROTOCOL_BOTH_SIDE_TREE:
            result = beamsearch.both_side_tree_search(oracle, tx_cb, rx_cb, args.m)
        else:
            result = beamsearch.adaptive_search(oracle, tx_cb, rx_cb)
        rows.append(
            (trial, args.protocol, result.tx_index, result.rx_index, result.power, result.measurements)
        )
    write_csv(
        _out_path(args, "search.csv"),
        ["trial", "protocol", "tx_index", "rx_index", "power", "measurements"],
        rows,
    )
    return 0


def _cmd_datagen(args) -> int:
    config = DatasetConfig(
        n_antennas=args.n,
        branching=args.m,
        radius_m=args.radius,
        d_min_m=args.d_min,
        train_count=args.train_count,
        test_count=args.test_count,
        oracle_labels=args.oracle_labels,
    )
    train_path, test_path = datagen.generate_dataset(config, args.seed, args.out_dir)
    print(f"wrote {train_path} and {test_path}")
    return 0


def _cmd_infer(args) -> int:
    graph = load_weights(args.weights)
    manifest, samples = read_dataset(args.dataset)
    if manifest.n_antennas != graph.n_antennas or manifest.branching != graph.branching:
        raise SystemExit(
            f"dataset is N={manifest.n_antennas}, M={manifest.branching} but weights expect "
            f"N={graph.n_antennas}, M={graph.branching}"
        )
    tx_cb = build_hierarchical(manifest.n_antennas, manifest.branching)
    rx_cb = build_hierarchical(manifest.n_antennas, manifest.branching)
    norm = manifest.norm
    rows = []
    for i, sample in enumerate(samples):
        pred = predict(graph, sample.first_layer_powers, norm, tx_cb, rx_cb)
        p_true = datagen.normalize_power(sample.label_power, norm.p_floor_tx, norm.p_ceil_tx)
        rows.append(
            (
                i,
                pred.tx_index,
                pred.rx_index,
                sample.label_tx_index,
                sample.label_rx_index,
                pred.predicted_power_norm,
                p_true,
            )
        )
    write_csv(
        _out_path(args, "predictions.csv"),
        ["sample", "tx_pred", "rx_pred", "tx_true", "rx_true", "p_pred_norm", "p_true_norm"],
        rows,
    )
    return 0


def _eval_config(args, protocols: tuple[str, ...]) -> EvalConfig:
    return EvalConfig(
        n_antennas=args.n,
        branching=args.m,
        radius_m=args.radius,
        d_min_m=args.d_min,
        n_bins=getattr(args, "bins", 10),
        n_trials=args.trials,
        seed=args.seed,
        protocols=protocols,
    )


def _cmd_eval_power(args) -> int:
    protocols = tuple(p.strip() for p in args.protocols.split(",") if p.strip())
    graph = norms = None
    if PROTOCOL_PROPOSED in protocols:
        if not args.weights or not args.dataset:
            raise SystemExit("the proposed protocol needs --weights and --dataset")
        graph = load_weights(args.weights)
        norms = read_dataset(args.dataset)[0].norm
    config = _eval_config(args, protocols)
    records, bins = evalbench.power_vs_distance(config, graph=graph, norms=norms)
    write_csv(
        Path(args.out_dir) / "power_vs_distance_trials.csv",
        ["trial", "distance_m", *protocols],
        [(r["trial"], r["distance_m"], *(r[p] for p in protocols)) for r in records],
    )
    write_csv(
        Path(args.out_dir) / "power_vs_distance.csv",
        ["bin_center", "count", *protocols],
        [(b["bin_center"], b["count"], *(b[p] for p in protocols)) for b in bins],
    )
    return 0


def _cmd_eval_cdf(args) -> int:
    graph = load_weights(args.weights)
    norms = read_dataset(args.dataset)[0].norm
    config = _eval_config(args, (PROTOCOL_PROPOSED,))
    records, cdf, stats = evalbench.run_gain_loss_cdf(config, graph, norms)
    write_csv(
        Path(args.out_dir) / "gain_loss_records.csv",
        ["trial", "p_exh", "p_prop", "delta_norm"],
        [(i, r.p_exh, r.p_prop, r.delta_norm) for i, r in enumerate(records)],
    )
    write_csv(
        Path(args.out_dir) / "gain_loss_cdf.csv",
        ["delta_norm", "cdf"],
        cdf,
    )
    write_csv(
        Path(args.out_dir) / "gain_loss_summary.csv",
        ["mean", "median", "p80", "p95"],
        [(stats["mean"], stats["median"], stats["p80"], stats["p95"])],
    )
    print(
        f"gain loss vs exhaustive: mean={stats['mean']:.4f} median={stats['median']:.4f} "
        f"p80={stats['p80']:.4f} p95={stats['p95']:.4f}"
    )
    return 0


def _cmd_complexity(args) -> int:
    n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
    rows = evalbench.complexity_table(n_list, args.m, n_rf=args.n_rf, seed=args.seed)
    write_csv(
        _out_path(args, "complexity.csv"),
        ["n", "protocol", "formula", "measured"],
        [(r["n"], r["protocol"], r["formula"], r["measured"]) for r in rows],
    )
    return 0


_HANDLERS = {
    "codebook": _cmd_codebook,
    "search": _cmd_search,
    "datagen": _cmd_datagen,
    "infer": _cmd_infer,
    "eval-power": _cmd_eval_power,
    "eval-cdf": _cmd_eval_cdf,
    "complexity": _cmd_complexity,
}


def _peek_config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    config_path = _peek_config_path(argv)
    if config_path and argv:
        # inject the file's values right after the subcommand so explicit
        # command-line flags keep the last word
        injected = _config_tokens(read_config_file(config_path))
        argv = [argv[0], *injected, *argv[1:]]
    parser = _build_parser()
    args = parser.parse_args(argv)
    return _HANDLERS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
