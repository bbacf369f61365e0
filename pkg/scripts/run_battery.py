"""Train every regime on several seeds and summarise coverage and MMD rankings.

    python3 scripts/run_battery.py configs/default.cfg --seeds 5
"""

import argparse
import json
import time
from dataclasses import replace

import numpy as np

from assocda.config import load_config
from assocda.data import make_pair
from assocda.harness import run_experiment


def run(cfg, seeds):
    rows = []
    for seed in seeds:
        c = replace(cfg, seed=seed)
        pair = make_pair(c.pair_spec())
        spec = c.model_spec(pair.source.input_dim, pair.num_classes)
        res = run_experiment(pair, c.train_config("source_only"), c.regimes, spec)
        errors = {r: rep.final_target_error_pct for r, rep in res.reports.items()}
        mmd = {r: row["mmd"] for r, row in res.mmd_table["rows"].items()} if res.mmd_table else {}
        rows.append({"seed": seed, "target_error_pct": errors, "embedding_mmd": mmd, "coverage": res.coverage})
        cov = "undefined" if res.coverage is None else f"{res.coverage:.3f}"
        print(f"seed {seed}: errors {errors}  coverage {cov}", flush=True)
    return rows


def summarise(rows):
    covs = [r["coverage"] for r in rows if r["coverage"] is not None]
    n = len(rows)
    out = {"seeds": n, "median_coverage": float(np.median(covs)) if covs else None}
    errs = [r["target_error_pct"] for r in rows]
    if all({"source_only", "da_assoc"} <= e.keys() for e in errs):
        out["da_assoc_beats_source_only"] = sum(e["da_assoc"] < e["source_only"] for e in errs)
    if all({"da_assoc", "da_mmd"} <= e.keys() for e in errs):
        out["da_assoc_not_worse_than_da_mmd"] = sum(e["da_assoc"] <= e["da_mmd"] for e in errs)
        out["da_mmd_lowest_mmd"] = sum(min(r["embedding_mmd"], key=r["embedding_mmd"].get) == "da_mmd" for r in rows)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--json", help="write per-seed rows and the summary here")
    args = ap.parse_args()

    start = time.perf_counter()
    rows = run(load_config(args.config, args.set), range(args.seeds))
    summary = summarise(rows) | {"seconds": round(time.perf_counter() - start, 1)}
    print(json.dumps(summary, indent=2))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"rows": rows, "summary": summary}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
