"""``assocda`` command line: train, gradcheck, coverage, dump-embeddings, mmd, export-data.

Exit codes: 0 success, 1 runtime or check failure, 2 usage/config error.
"""

import argparse
import os
import sys

import numpy as np

from . import gradcheck
from .config import ConfigError, load_config
from .data import export_csv, make_pair, read_csv
from .harness import (
    coverage,
    embedding_mmd_report,
    train,
    write_embeddings_csv,
    write_json,
    write_trace_csv,
)
from .mmd import MmdConfig, mmd2
from .network import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def cmd_train(args):
    cfg = load_config(args.config, args.set or [])
    outdir = args.outdir or cfg.outdir
    pair = make_pair(cfg.pair_spec())
    spec = cfg.model_spec(pair.source.input_dim, pair.num_classes)
    os.makedirs(outdir, exist_ok=True)

    reports = {}
    for regime in cfg.regimes:
        print(f"training {regime} ({cfg.train.total_steps} steps, seed {cfg.seed})", flush=True)
        rep = train(pair, cfg.train_config(regime), spec)
        reports[regime] = rep
        write_trace_csv(rep, os.path.join(outdir, f"trace_{regime}.csv"))
        write_embeddings_csv(rep.params, [pair.source_test, pair.target_test], os.path.join(outdir, f"embeddings_{regime}.csv"))
        save_checkpoint(rep.params, os.path.join(outdir, f"checkpoint_{regime}"))
        print(f"  target error {rep.final_target_error_pct:.2f}%  source error {rep.final_source_error_pct:.2f}%")

    cov = None
    if {"source_only", "target_only", "da_assoc"} <= reports.keys():
        cov = coverage(
            reports["source_only"].final_target_error_pct,
            reports["target_only"].final_target_error_pct,
            reports["da_assoc"].final_target_error_pct,
        )
        print(f"coverage (da_assoc): {'undefined' if cov is None else f'{cov:.4f}'}")
    table = None
    if "source_only" in reports:
        compare = {r: reports[r].params for r in reports if r != "target_only"}
        table = embedding_mmd_report(compare, pair.source_test, pair.target_test)
        for r, row in table["rows"].items():
            print(f"  embedding MMD^2 {r}: {row['mmd']:.6f}")

    write_json(
        {
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "regimes": {r: rep.to_dict() for r, rep in reports.items()},
            "coverage_da_assoc": cov,
            "embedding_mmd": table,
        },
        os.path.join(outdir, "report.json"),
    )
    print(f"wrote {outdir}/report.json")
    return EXIT_OK


def cmd_gradcheck(args):
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    failed = False
    for comp in gradcheck.COMPONENTS:
        res = gradcheck.check_component(comp, args.seed, args.instances, args.mutate)
        status = "ok" if res.ok else "FAIL"
        print(f"{comp:15s} max rel err {res.max_rel_error:.3e}  {status}")
        if not res.ok:
            failed = True
            print(f"  worst: instance {res.instance}, coordinate {res.coordinate}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_coverage(args):
    cov = coverage(args.so, args.to, args.da)
    print("undefined" if cov is None else f"{cov:.4f}")
    return EXIT_OK


def _load_dataset_csv(path):
    sets = read_csv(path)
    if not sets:
        raise UsageError(f"{path} holds no samples")
    return list(sets.values())


def cmd_dump_embeddings(args):
    params = load_checkpoint(args.checkpoint)
    datasets = _load_dataset_csv(args.dataset)
    if datasets[0].input_dim != params.spec.input_dim:
        print(
            f"dataset has {datasets[0].input_dim} features, checkpoint expects {params.spec.input_dim}",
            file=sys.stderr,
        )
        return EXIT_FAIL
    write_embeddings_csv(params, datasets, args.out)
    return EXIT_OK


def _feature_matrix(path):
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h[:1] in ("x", "e") and h[1:].isdigit()]
    di = header.index("domain") if "domain" in header else None
    by_domain = {}
    for r in rows[1:]:
        key = r[di] if di is not None else "all"
        by_domain.setdefault(key, []).append([float(r[i]) for i in cols])
    return {k: np.array(v) for k, v in by_domain.items()}


def cmd_mmd(args):
    first = _feature_matrix(args.x)
    if args.y is None:
        if not {"source", "target"} <= first.keys():
            raise UsageError("single-file mode needs both source and target rows")
        x, y = first["source"], first["target"]
    else:
        x = np.vstack(list(first.values()))
        y = np.vstack(list(_feature_matrix(args.y).values()))
    cfg = MmdConfig(
        use_median_heuristic=args.bandwidth is None,
        fixed_bandwidth=args.bandwidth,
        estimator=args.estimator,
        bandwidth_multipliers=args.multipliers,
    )
    res = mmd2(x, y, cfg)
    print(f"{res.mmd_squared:.6g}")
    return EXIT_OK


def cmd_export_data(args):
    cfg = load_config(args.config, args.set or [])
    pair = make_pair(cfg.pair_spec())
    chosen = {"train": [pair.source, pair.target], "test": [pair.source_test, pair.target_test]}[args.split]
    export_csv(chosen, args.out)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="assocda", description="Associative domain adaptation experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train the configured regimes and write reports")
    t.add_argument("config")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    t.add_argument("--outdir")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gradcheck", help="finite-difference checks of all analytic gradients")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=20)
    g.add_argument("--mutate", choices=gradcheck.MUTATIONS, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    c = sub.add_parser("coverage", help="fraction of the SO->TO error gap closed by DA")
    c.add_argument("so", type=float)
    c.add_argument("to", type=float)
    c.add_argument("da", type=float)
    c.set_defaults(func=cmd_coverage)

    d = sub.add_parser("dump-embeddings", help="write embeddings of a dataset CSV")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--dataset", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump_embeddings)

    m = sub.add_parser("mmd", help="MMD^2 between two CSV point sets (or source/target rows of one)")
    m.add_argument("x")
    m.add_argument("y", nargs="?")
    m.add_argument("--bandwidth", type=float)
    m.add_argument("--estimator", choices=("biased", "unbiased"), default="biased")
    m.add_argument("--multipliers", type=float, nargs="+", default=list(MmdConfig().bandwidth_multipliers))
    m.set_defaults(func=cmd_mmd)

    e = sub.add_parser("export-data", help="write the configured domain pair as CSV")
    e.add_argument("config")
    e.add_argument("--set", action="append", metavar="KEY=VALUE")
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_data)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"assocda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        print(f"assocda: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
