"""FQI Bellman error on the two-state counterexample across class orderings.

Each seed shuffles the grid class, which changes how FQI breaks ties.

    python scripts/fqi_gap_seeds.py --seeds 8 --iters 20
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from brl.verify import fqi_gap_trace


@dataclass
class GapConfig:
    seeds: int = 8
    iters: int = 20
    resolution: float = 0.5


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--resolution", type=float, default=0.5)
    args = p.parse_args(argv)
    cfg = GapConfig(args.seeds, args.iters, args.resolution)
    print("seed,min_fqi_error,final_fqi_error,msbo_gap,mabo_gap")
    for seed in range(cfg.seeds):
        errors, sq_gap, avg_gap = fqi_gap_trace(cfg.iters, seed=seed, resolution=cfg.resolution)
        print(f"{seed},{min(errors[1:]):.6g},{errors[-1]:.6g},{sq_gap:.6g},{avg_gap:.6g}")


if __name__ == "__main__":
    main()
