"""Bound components and realized suboptimality over random instances.

Writes one report row per (instance, algorithm) with every diagnostic, in
empirical or population mode.

    python scripts/bound_sweep.py --instances 20 --n 2000 --out sweep.csv
"""
from __future__ import annotations

import argparse
import dataclasses
from dataclasses import dataclass

from brl.classes import indicator_w_class
from brl.constructions import random_mdp, random_mu, reward_shift_q_class
from brl.data import Population, generate_batch, make_rng
from brl.diagnostics import bound_report, suboptimality, write_reports
from brl.solvers import mabo, msbo


@dataclass
class SweepConfig:
    instances: int = 20
    num_states: int = 4
    num_actions: int = 2
    gamma: float = 0.9
    class_size: int = 20
    shift: float = 0.1
    n: int = 2000
    delta: float = 0.05
    population: bool = False
    seed: int = 0


def run(cfg: SweepConfig) -> list[dict]:
    rng = make_rng(cfg.seed)
    rows = []
    for i in range(cfg.instances):
        mdp = random_mdp(cfg.num_states, cfg.num_actions, cfg.gamma, seed=int(rng.integers(2**62)))
        mu = random_mu(cfg.num_states, cfg.num_actions, seed=int(rng.integers(2**62)))
        q_class = reward_shift_q_class(mdp, cfg.class_size, cfg.shift, seed=int(rng.integers(2**62)))
        W = indicator_w_class(cfg.num_states, cfg.num_actions, mu, scaled=True)
        data = Population(mdp, mu) if cfg.population else generate_batch(mdp, mu, cfg.n, int(rng.integers(2**62)))
        n = None if cfg.population else cfg.n
        base = bound_report(mdp, mu, q_class, q_class, W, q_class[0], n, cfg.delta, t_max=50)
        for name, res in (("msbo", msbo(data, q_class, q_class)), ("mabo", mabo(data, q_class, W))):
            rep = dataclasses.replace(base, suboptimality=suboptimality(mdp, q_class, res.chosen_q),
                                      extra={"instance": i, "algorithm": name})
            rows.append(rep.row())
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--population", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bound_sweep.csv")
    args = p.parse_args(argv)
    cfg = SweepConfig(instances=args.instances, n=args.n, population=args.population, seed=args.seed)
    write_reports(run(cfg), args.out)


if __name__ == "__main__":
    main()
