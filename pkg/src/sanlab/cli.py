"""Command-line front end: sweeps, single runs, evaluation and figures.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets, formats, plots
from .activations import ActivationKind
from .phi import Candidate, select_model, weights_count
from .probe import train_probe
from .san import TrainConfig, build_model, encode, evaluate, forward, train

log = logging.getLogger("sanlab")

DEFAULT_LADDER = [1, 2, 3, 5, 8, 12, 19, 30, 47, 74, 117, 184, 250]


class UsageError(Exception):
    pass


@dataclass
class Dataset:
    name: str
    corpus: datasets.Corpus
    kind: str  # "signal", "uci", "image", "synth"

    @property
    def defaults(self) -> dict:
        if self.kind == "uci":
            return {"epochs": 5, "batch": 32, "border_tol": 2, "q": 2}
        if self.kind == "image":
            return {"epochs": 5, "batch": 64, "border_tol": 2, "q": 2}
        return {"epochs": 30, "batch": 2, "border_tol": 3, "q": 1}


def load_dataset(spec: str, seed: int = 0) -> Dataset:
    """Resolve ``--data``: a CSV signal path, or ``uci:``, ``idx:``,
    ``manifest:`` or ``synth[:seed]`` prefixed references."""
    prefix, _, rest = spec.partition(":")
    if spec == "synth" or prefix == "synth":
        s = int(rest) if rest else seed
        corpus, _ = datasets.synth_spike_train(seed=s)
        return Dataset(f"synth-{s}", corpus, "synth")
    if prefix == "uci":
        rows, labels = datasets.load_uci_csv(rest)
        return Dataset("uci-epilepsy", datasets.uci_protocol(rows, labels, seed=seed), "uci")
    if prefix in ("idx", "mnist"):
        return Dataset(Path(rest).name or "mnist", datasets.mnist_protocol(rest), "image")
    if prefix == "manifest":
        corpus = datasets.read_manifest(rest)
        kind = "signal" if corpus.examples[0].ndim == 1 else "image"
        return Dataset(Path(rest).stem, corpus, kind)
    path = Path(spec)
    signal = datasets.load_csv_signal(path)
    return Dataset(path.stem, datasets.physionet_protocol(signal, provenance=str(path)), "signal")


def parse_kernel_sizes(text: str | None) -> list[int]:
    """``"1,2,5"``, ``"1:250:5"`` (inclusive range with stride), mixes of
    both, or ``"ladder"`` for the default preset."""
    if text is None:
        return list(DEFAULT_LADDER)
    sizes: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part == "ladder":
            sizes.extend(DEFAULT_LADDER)
            continue
        try:
            if ":" in part:
                bits = [int(b) for b in part.split(":")]
                if len(bits) not in (2, 3):
                    raise ValueError
                start, stop = bits[0], bits[1]
                stride = bits[2] if len(bits) == 3 else 1
                if stride < 1:
                    raise ValueError
                sizes.extend(range(start, stop + 1, stride))
            else:
                sizes.append(int(part))
        except ValueError:
            raise UsageError(f"bad kernel size spec {part!r}") from None
    if not sizes:
        raise UsageError("kernel size list is empty")
    if min(sizes) < 1:
        raise UsageError("kernel sizes must be >= 1")
    return sorted(set(sizes))


def parse_activations(values) -> list[ActivationKind]:
    if not values:
        return list(ActivationKind)
    out = []
    for v in values:
        for name in v.split(","):
            if not name.strip():
                continue
            try:
                kind = ActivationKind.parse(name)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            if kind not in out:
                out.append(kind)
    if not out:
        raise UsageError("no activation given")
    return out


def default_seed() -> int:
    env = os.environ.get("SANLAB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SANLAB_SEED must be an integer, got {env!r}") from None


def _config(args, ds: Dataset) -> tuple[TrainConfig, int]:
    d = ds.defaults
    cfg = TrainConfig(
        epochs=args.epochs if args.epochs is not None else d["epochs"],
        batch_size=args.batch if args.batch is not None else d["batch"],
        lr=args.lr,
        seed=args.seed,
        border=args.border_tol if args.border_tol is not None else d["border_tol"],
    )
    q = args.q if args.q is not None else d["q"]
    if q < 1:
        raise UsageError("--q must be >= 1")
    return cfg, q


def _splits(corpus: datasets.Corpus):
    X, V = corpus.split("train"), corpus.split("validation")
    if X.shape[0] == 0 or V.shape[0] == 0:
        raise ValueError("dataset needs non-empty train and validation splits")
    return X, V


# -- sweep -------------------------------------------------------------------------


def _run_cell(job):
    """Train one (activation, m) cell; runs in a worker process."""
    kind, m, q, cfg, X, V = job
    extents = X.shape[1:]
    if any(m > n for n in extents):
        return kind, m, None
    model = build_model(kind, m, extents, q=q, border=cfg.border, mu=cfg.mu, sigma=cfg.sigma, seed=cfg.seed)
    res = train(model, X, V, cfg)
    return kind, m, (formats.model_to_dict(res.model), res.best_epoch, res.best_score, res.history)


def cmd_sweep(args) -> int:
    sizes = parse_kernel_sizes(args.kernel_sizes)
    kinds = parse_activations(args.activation)
    ds = load_dataset(args.data, args.seed)
    cfg, q = _config(args, ds)
    X, V = _splits(ds.corpus)
    T = ds.corpus.split("test")
    if T.shape[0] == 0:
        raise ValueError("dataset needs a non-empty test split")
    out = Path(args.out)
    for sub in ("cells", "kernels", "models"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    jobs = [(k, m, q, cfg, X, V) for k in kinds for m in sizes]
    results = {}

    def record(kind, m, payload):
        results[(kind, m)] = payload
        if payload is None:
            log.warning("%s m=%d skipped: kernel larger than input", kind.value, m)
            return
        model_dict, _, _, history = payload
        model = formats.model_from_dict(model_dict)
        rows = [
            formats.report_row(ds.name, kind, m, h["epoch"], "validation", weights_count(model),
                               formats.format_float(h["val_A"]), h["val_cr_inv"], h["val_l_tilde"], h["val_phi_bar"])
            for h in history
        ]
        formats.write_report(out / "cells" / f"{kind.value}_m{m}.csv", rows)

    if args.jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_cell, j) for j in jobs]
            for fut in cf.as_completed(futures):
                record(*fut.result())
    else:
        for j in jobs:
            record(*_run_cell(j))

    report_rows, table = [], []
    for kind in kinds:
        cands = []
        for m in sizes:
            payload = results.get((kind, m))
            if payload is None:
                continue
            model_dict, epoch, score, _ = payload
            cands.append(Candidate(m, epoch, formats.model_from_dict(model_dict), score))
        if not cands:
            log.warning("%s: no kernel size fits the data", kind.value)
            continue
        best = select_model(cands)
        reports, agg, _ = evaluate(best.model, T, cfg.eval_chunk)
        W = reports[0].W
        A = float(np.mean([r.A for r in reports]))
        report_rows.append(
            formats.report_row(ds.name, kind, best.m, best.epoch, "test", W, formats.format_float(A),
                               agg.cr_inv, agg.l_tilde, agg.phi_bar)
        )
        table.append((kind, best.m, agg))
        formats.save_model(best.model, out / "models" / f"{kind.value}.json")
        for i, w in enumerate(best.model.kernels):
            formats.write_array_csv(out / "kernels" / f"{kind.value}_w{i}.csv", w)
        plots.kernel_grid(best.model.kernels, out / "kernels" / f"{kind.value}.svg",
                          [f"{kind.value} w[{i}] m={best.m}" for i in range(best.model.q)])
    formats.write_report(out / "report.csv", report_rows)
    (out / "table.md").write_text(_table_markdown(ds.name, table))
    print(out / "report.csv")
    return 0


def _table_markdown(name: str, table) -> str:
    head = "| dataset | " + " | ".join(f"{k.value} m | CR^-1 | L~ | phi" for k, _, _ in table) + " |"
    sep = "|---|" + "---|---|---|---|" * len(table)
    cells = " | ".join(f"{m} | {a.cr_inv:.2f} | {a.l_tilde:.2f} | {a.phi_bar:.2f}" for _, m, a in table)
    return "\n".join([head, sep, f"| {name} | {cells} |"]) + "\n"


# -- single runs ----------------------------------------------------------------------


def cmd_train(args) -> int:
    sizes = parse_kernel_sizes(args.kernel_sizes)
    if len(sizes) != 1:
        raise UsageError("train takes exactly one kernel size")
    kinds = parse_activations(args.activation)
    if len(kinds) != 1:
        raise UsageError("train takes exactly one activation")
    ds = load_dataset(args.data, args.seed)
    cfg, q = _config(args, ds)
    X, V = _splits(ds.corpus)
    model = build_model(kinds[0], sizes[0], X.shape[1:], q=q, border=cfg.border, mu=cfg.mu,
                        sigma=cfg.sigma, seed=cfg.seed)
    res = train(model, X, V, cfg)
    res.model.meta.update(dataset=ds.name, m=sizes[0])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.save_model(res.model, out)
    W = weights_count(res.model)
    rows = [
        formats.report_row(ds.name, kinds[0], sizes[0], h["epoch"], "validation", W, formats.format_float(h["val_A"]),
                           h["val_cr_inv"], h["val_l_tilde"], h["val_phi_bar"])
        for h in res.history
    ]
    formats.write_report(out.with_suffix(".history.csv"), rows)
    print(json.dumps({"model": str(out), "epoch": res.best_epoch, "val_phi_bar": res.best_score.phi_bar}))
    return 0


def cmd_eval(args) -> int:
    model = formats.load_model(args.model)
    ds = load_dataset(args.data, args.seed)
    X = ds.corpus.split(args.split)
    if X.shape[0] == 0:
        raise ValueError(f"split {args.split!r} is empty")
    reports, agg, _ = evaluate(model, X)
    epoch = int(model.meta.get("epoch", 0))
    rows = formats.rows_from_reports(ds.name, model.activation, model.sizes[0], epoch, args.split, reports)
    if args.out:
        formats.write_report(args.out, rows)
    print(json.dumps({"split": args.split, "count": agg.count, "phi_bar": agg.phi_bar,
                      "cr_inv": agg.cr_inv, "l_tilde": agg.l_tilde}))
    return 0


def cmd_reconstruct(args) -> int:
    model = formats.load_model(args.model)
    ds = load_dataset(args.data, args.seed)
    X = ds.corpus.split(args.split)
    if not 0 <= args.index < X.shape[0]:
        raise ValueError(f"index {args.index} out of range for split {args.split!r} ({X.shape[0]} examples)")
    x = X[args.index]
    tr = forward(model, x)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_array_csv(out / "x.csv", x)
    formats.write_array_csv(out / "xhat.csv", tr.xhat)
    for i in range(model.q):
        formats.write_array_csv(out / f"s_{i}.csv", tr.s[i])
        formats.write_array_csv(out / f"alpha_{i}.csv", tr.alpha[i])
        formats.write_array_csv(out / f"r_{i}.csv", tr.r[i])
    for i, smap in enumerate(encode(model, x)):
        formats.write_sparse_map(smap, out / f"alpha_{i}.map")
    plots.reconstruction_figure(x, tr, out / "reconstruction.svg")
    print(out)
    return 0


def cmd_export_kernels(args) -> int:
    model = formats.load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, w in enumerate(model.kernels):
        formats.write_array_csv(out / f"kernel_{i}.csv", w)
    plots.kernel_grid(model.kernels, out / "kernels.svg")
    print(out)
    return 0


def cmd_probe(args) -> int:
    model = formats.load_model(args.model)
    ds = load_dataset(args.data, args.seed)
    if ds.corpus.labels is None:
        raise ValueError("probe needs a labelled dataset")
    res = train_probe(model, ds.corpus, epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed)
    if args.out:
        formats.save_probe(res.probe, args.out)
    print(json.dumps({"best_epoch": res.best_epoch, "val_accuracy": res.val_accuracy,
                      "test_accuracy": res.test_accuracy}))
    return 0


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sanlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp, seed=True):
        sp.add_argument("--data", required=True, help="CSV signal path or uci:/idx:/manifest:/synth[:seed]")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $SANLAB_SEED, then 0)")

    def train_flags(sp):
        sp.add_argument("--activation", action="append", help="activation kind; repeat or comma-separate")
        sp.add_argument("--kernel-sizes", help="e.g. 1,2,3 or 1:250:5 or ladder")
        sp.add_argument("--q", type=int, default=None, help="kernels per model")
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--batch", type=int, default=None)
        sp.add_argument("--lr", type=float, default=0.01)
        sp.add_argument("--border-tol", type=int, default=None, help="Extrema border tolerance in samples")

    sp = sub.add_parser("sweep", help="train one SAN per (activation, kernel size) and select by phi_bar")
    data_flags(sp)
    train_flags(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("train", help="train one configuration to a model file")
    data_flags(sp)
    train_flags(sp)
    sp.add_argument("--out", required=True, help="model file to write")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="phi report rows of a model on one split")
    data_flags(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--split", default="test", choices=datasets.SPLITS)
    sp.add_argument("--out", help="CSV file for per-example rows")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("reconstruct", help="write x, xhat, alpha, r and an SVG for one example")
    data_flags(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--split", default="test", choices=datasets.SPLITS)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("export-kernels", help="kernels as CSV plus an SVG grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_kernels)

    sp = sub.add_parser("probe", help="train a linear probe on frozen reconstructions")
    data_flags(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--out", help="probe file to write")
    sp.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = default_seed()
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sanlab: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"sanlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
