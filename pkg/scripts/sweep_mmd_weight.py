"""How the da_assoc vs da_mmd comparison depends on the MMD term's weight.

    python3 scripts/sweep_mmd_weight.py configs/default.cfg --weights 1 5 20
"""

import argparse
import json
from dataclasses import replace

from assocda.config import load_config
from run_battery import run, summarise


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--weights", type=float, nargs="+", default=[1.0, 5.0, 20.0])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    base = load_config(args.config)
    base = replace(base, regimes=("source_only", "target_only", "da_assoc", "da_mmd"))
    results = {}
    for w in args.weights:
        print(f"== mmd_weight {w}", flush=True)
        cfg = replace(base, train=replace(base.train, mmd_weight=w))
        results[w] = summarise(run(cfg, range(args.seeds)))
    print(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
