"""Median mabo suboptimality versus sample size on the fixed small-gap instance.

    python scripts/rate_experiment.py --seeds 50 --out rate.csv
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np

from brl.data import generate_batch
from brl.diagnostics import suboptimality
from brl.solvers import mabo
from brl.verify import rate_instance


@dataclass
class RateConfig:
    sizes: list[int] = field(default_factory=lambda: [250, 500, 1000, 2000, 4000, 8000])
    seeds: int = 50


def run(cfg: RateConfig) -> list[dict]:
    mdp, mu, q_class, W = rate_instance()
    rows = []
    for n in cfg.sizes:
        subs = np.array([suboptimality(mdp, q_class, mabo(generate_batch(mdp, mu, n, seed=s), q_class, W).chosen_q)
                         for s in range(cfg.seeds)])
        rows.append({"n": n, "median": float(np.median(subs)), "mean": float(subs.mean()),
                     "frac_suboptimal": float(np.mean(subs > 0))})
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--out")
    args = p.parse_args(argv)
    cfg = RateConfig(seeds=args.seeds) if not args.sizes else RateConfig(sizes=args.sizes, seeds=args.seeds)
    rows = run(cfg)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
