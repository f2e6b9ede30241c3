"""``brl`` command-line entry point.

Exit codes: 0 success / all checks pass, 1 check failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .data import Population, generate_batch
from .diagnostics import bound_report, format_reports, suboptimality, write_reports
from .solvers import fqi, mabo, msbo
from .verify import SUITES, chain_table, fqi_gap_trace, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ------------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    suite = args.suite_opt or args.suite or "all"
    if suite != "all" and suite not in SUITES:
        print(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    checks = run_suite(suite, args.seed)
    ok = all(c.passed for c in checks)
    report = {"suite": suite, "seed": args.seed, "all_passed": ok,
              "checks": [c.to_dict() for c in checks]}
    _emit(json.dumps(_json_safe(report), indent=2) + "\n", args.out)
    for c in checks:
        print(f"[{c.status.upper()}] {c.check_name}: {c.measured:.6g} {c.direction} {c.threshold:.6g}",
              file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# -------------------------------------------------------------------- chain

def cmd_chain(args) -> int:
    if args.length < 1 or not 0.0 < args.gamma < 1.0:
        print("chain needs --length >= 1 and 0 < --gamma < 1", file=sys.stderr)
        return EXIT_USAGE
    computed, formula, ce, ci = chain_table(args.length, args.gamma, t_max=args.length)
    ok = all(abs(c - f) <= 1e-12 * max(1.0, abs(f)) for c, f in zip(computed, formula))
    ok = ok and abs(ce - 1.0) <= 1e-12 and abs(ci - 1.0) <= 1e-12
    if args.format == "json":
        rows = [{"t": t, "C_t_computed": c, "C_t_formula": f}
                for t, (c, f) in enumerate(zip(computed, formula))]
        text = json.dumps({"rows": rows, "c_eff": ce, "c_inf": ci, "match": ok}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "C_t_computed", "C_t_formula"])
        for t, (c, f) in enumerate(zip(computed, formula)):
            w.writerow([t, _fmt(c), _fmt(f)])
        w.writerow(["c_eff", _fmt(ce), _fmt(1.0)])
        w.writerow(["c_inf", _fmt(ci), _fmt(1.0)])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ fqi-gap

def cmd_fqi_gap(args) -> int:
    if args.iters < 1:
        print("--iters must be positive", file=sys.stderr)
        return EXIT_USAGE
    errors, sq_gap, avg_gap = fqi_gap_trace(args.iters, seed=args.seed, resolution=args.resolution)
    shown = min(errors[1:])
    ok = shown >= 0.01 and sq_gap <= args.resolution and avg_gap <= args.resolution
    if args.format == "json":
        text = json.dumps({"bellman_error": errors, "min_bellman_error": shown,
                           "msbo_gap": sq_gap, "mabo_gap": avg_gap, "resolution": args.resolution}, indent=2)
        text += "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "bellman_error"])
        for t, e in enumerate(errors):
            w.writerow([t, _fmt(e)])
        text = buf.getvalue()
    _emit(text, args.out)
    print(f"min FQI Bellman error {shown:.6g}; msbo gap {sq_gap:.6g}; mabo gap {avg_gap:.6g}",
          file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------- run

def run_experiment(cfg: ExperimentConfig, out: str | None = None, fmt: str | None = None,
                   stream=None) -> int:
    """Run every (seed, algorithm) pair and write one report row each, in seed order.

    Rows are flushed after every seed, so a failure leaves earlier seeds on disk.
    """
    fmt = fmt or cfg.output_format
    if out is None and cfg.output_path:
        out = str(cfg.resolve(cfg.output_path))
    mdp = cfg.build_mdp()
    mu = cfg.build_mu(mdp)
    q_class, f_class, w_class = cfg.build_classes(mdp, mu)
    population = cfg.mode == "population"
    n = None if population else cfg.n
    # class-level quantities do not depend on the seed or the chosen member
    base = bound_report(mdp, mu, q_class, f_class, w_class, q_class[0], n, cfg.delta, t_max=cfg.t_max)

    first = True
    for seed in cfg.seeds:
        rows = []
        try:
            data = Population(mdp, mu) if population else generate_batch(mdp, mu, cfg.n, seed)
            for alg in cfg.algorithms:
                if alg == "fqi":
                    res = fqi(data, q_class, cfg.fqi_iterations)
                elif alg == "msbo":
                    res = msbo(data, q_class, f_class)
                else:
                    res = mabo(data, q_class, w_class)
                rep = dataclasses.replace(
                    base,
                    suboptimality=suboptimality(mdp, q_class, res.chosen_q),
                    extra={"seed": seed, "algorithm": alg, "mode": cfg.mode,
                           "chosen_index": res.chosen_index, "objective": res.objective_value},
                )
                rows.append(rep.row())
        except Exception as exc:  # report, keep earlier seeds, signal failure
            print(f"seed {seed}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_FAIL
        append = cfg.append or not first
        if out:
            write_reports(rows, out, fmt, append=append)
        else:
            (stream or sys.stdout).write(format_reports(rows, fmt, header=first))
        first = False
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config:
        print("run needs --config", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = ExperimentConfig.load(args.config)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run_experiment(cfg, out=args.out, fmt=args.format)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brl", description="Batch value-function RL: bounds, algorithms, counterexamples.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    v = sub.add_parser("verify", help="run an invariant suite and write a JSON report")
    v.add_argument("suite", nargs="?", help=f"one of: all, {', '.join(SUITES)}")
    v.add_argument("--suite", dest="suite_opt")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("chain", help="per-step concentrability of the chain MDP")
    c.add_argument("--length", type=int, required=True)
    c.add_argument("--gamma", type=float, required=True)
    c.add_argument("--out")
    c.add_argument("--format", choices=["csv", "json"], default="csv")
    c.set_defaults(func=cmd_chain)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config")
    r.add_argument("--out")
    r.add_argument("--format", choices=["csv", "json"])
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("fqi-gap", help="FQI Bellman error on the two-state counterexample")
    g.add_argument("--iters", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--resolution", type=float, default=0.5)
    g.add_argument("--out")
    g.add_argument("--format", choices=["csv", "json"], default="csv")
    g.set_defaults(func=cmd_fqi_gap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
