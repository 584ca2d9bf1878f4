"""Command-line entry point: ``sba-lab <subcommand>``.

Exit codes: 0 success, 1 usage, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _population_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--levers", help="deterministic lever population, e.g. 0-9 or 0,3,5")
    g.add_argument("--population", help="population file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sba-lab", description="Symmetry-breaking augmentation lab for the lever game.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="run a seed sweep")
    _common(p)
    p.add_argument("--sba", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("eval", help="robustness of stored policies against a population")
    _common(p)
    p.add_argument("--policy", required=True, help="population file holding the policies to evaluate")
    p.add_argument("--member", help="evaluate only this member")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--eval-levers", default="0-9")
    g.add_argument("--eval-pop", help="evaluation population file")
    p.add_argument("--group", action=argparse.BooleanOptionalAction, default=False,
                   help="also relabel the policy by a uniform lever permutation")
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--episodes", type=int, default=2000)

    p = sub.add_parser("augimp", help="augmentation impact of a population")
    _common(p)
    _population_args(p)
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--phi-samples", type=int, default=1000)
    p.add_argument("--exclude-self-pairs", action="store_true")
    p.add_argument("--identity-group", action="store_true", help="use the identity-only group")

    p = sub.add_parser("crossplay", help="crossplay matrix of a population")
    _common(p)
    _population_args(p)
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--episodes", type=int, default=10_000)

    p = sub.add_parser("verify", help="run the property suites")
    _common(p)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("sigtest", help="paired permutation test on two result CSVs")
    _common(p)
    p.add_argument("csv_a")
    p.add_argument("csv_b")
    p.add_argument("--column", help="numeric column to compare (default: last column)")
    p.add_argument("--resamples", type=int, default=100_000)
    p.add_argument("--exact", action="store_true", help="enumerate all sign patterns")

    p = sub.add_parser("reproduce-fig4", help="baseline and SBA sweeps plus plot data")
    _common(p)
    p.add_argument("--workers", type=int)
    return parser


def _env_config(args):
    from .harness import ExperimentConfig, load_config

    return load_config(args.config) if args.config else ExperimentConfig()


def _population(args, env_config, levers=None, path=None):
    from .harness import parse_levers
    from .lever_game import make_deterministic_population
    from .populations import load_population

    if path:
        return load_population(path)
    return make_deterministic_population(parse_levers(levers), env_config)


def _emit(args, text: str):
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def cmd_train(args):
    from dataclasses import replace

    from .harness import run_experiment

    config = _env_config(args)
    if args.seed is not None:
        config = replace(config, root_seed=args.seed)
    if args.sba is not None:
        config = replace(config, sba=args.sba)
    res = run_experiment(config, args.out or config.output_dir, args.workers)
    agg = res.aggregate
    summary = {
        "num_seeds": agg.num_seeds,
        "final_mean_train": float(agg.mean_train[-1]),
        "final_sem_train": float(agg.sem_train[-1]),
        "final_mean_eval": float(agg.mean_eval[-1]),
        "final_sem_eval": float(agg.sem_eval[-1]),
    }
    if args.format == "json":
        print(json.dumps(summary, sort_keys=True))
    else:
        print(_csv_text(list(summary), [list(summary.values())]), end="")


def cmd_eval(args):
    from .lever_game import lever_symmetry_group, make_env
    from .metrics import robustness
    from .populations import load_population

    config = _env_config(args)
    env = make_env(config.env)
    policies = load_population(args.policy)
    members = [policies.by_name(args.member)] if args.member else list(policies)
    eval_pop = _population(args, config.env, levers=args.eval_levers, path=args.eval_pop)
    group = lever_symmetry_group(env) if args.group else None
    rows = []
    for m in members:
        rep = robustness(env, m, eval_pop, group, mode=args.mode, n_episodes=args.episodes, rng=args.seed or 0)
        rows.append((m.name, rep.value, rep.stderr if rep.stderr is not None else "", rep.mode))
    if args.format == "json":
        _emit(args, json.dumps([dict(zip(("policy", "value", "stderr", "mode"), r)) for r in rows], sort_keys=True) + "\n")
    else:
        _emit(args, _csv_text(("policy", "value", "stderr", "mode"), rows))


def cmd_augimp(args):
    from .lever_game import lever_symmetry_group, make_env
    from .metrics import AugImpBudget, augmentation_impact
    from .symmetry import trivial_group

    config = _env_config(args)
    env = make_env(config.env)
    pop = _population(args, config.env, levers=args.levers, path=args.population)
    group = trivial_group(env) if args.identity_group else lever_symmetry_group(env)
    budget = AugImpBudget(phi_samples=args.phi_samples, include_self_pairs=not args.exclude_self_pairs)
    report, rows = augmentation_impact(env, pop, group, budget, mode=args.mode, rng=args.seed or 0, return_rows=True)
    header = ("policy_i", "policy_j", "phi_id", "xp_base", "xp_aug", "abs_diff")
    if args.format == "json":
        doc = {"augimp": report.value, "stderr": report.stderr, "mode": report.mode,
               "rows": [dict(zip(header, r)) for r in rows]}
        _emit(args, json.dumps(doc, sort_keys=True) + "\n")
    else:
        stderr = "" if report.stderr is None else f" stderr={report.stderr!r}"
        _emit(args, _csv_text(header, rows) + f"# augimp={report.value!r}{stderr} mode={report.mode}\n")


def cmd_crossplay(args):
    from .lever_game import make_env
    from .populations import crossplay_matrix

    config = _env_config(args)
    env = make_env(config.env)
    pop = _population(args, config.env, levers=args.levers, path=args.population)
    evaluator = "exact" if args.mode == "exact" else "mc"
    matrix = crossplay_matrix(env, pop, evaluator, n_episodes=args.episodes, rng=args.seed or 0)
    names = [m.name for m in pop]
    if args.format == "json":
        _emit(args, json.dumps({"names": names, "matrix": matrix.tolist()}) + "\n")
    else:
        _emit(args, _csv_text([""] + names, [[n] + [float(x) for x in row] for n, row in zip(names, matrix)]))


def cmd_verify(args):
    from .lever_game import make_env
    from .verification import run_all

    config = _env_config(args)
    results = run_all(make_env(config.env), trials=args.trials, seed=args.seed or 0)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def _read_column(path, column):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    col = column or header[-1]
    if col not in header:
        raise ValueError(f"{path} has no column {col!r}")
    k = header.index(col)
    try:
        return [float(r[k]) for r in body if r]
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def cmd_sigtest(args):
    from .metrics import paired_permutation_test

    a = _read_column(args.csv_a, args.column)
    b = _read_column(args.csv_b, args.column)
    p = paired_permutation_test(a, b, args.resamples, rng=args.seed or 0, exact=args.exact)
    if args.format == "json":
        print(json.dumps({"p_value": p, "n_pairs": len(a), "exact": args.exact}))
    else:
        print(_csv_text(("p_value", "n_pairs", "exact"), [(p, len(a), args.exact)]), end="")


def cmd_reproduce_fig4(args):
    from .harness import reproduce_fig4

    config = _env_config(args)
    res = reproduce_fig4(config, args.seed, args.out or "fig4", args.workers)
    for name, r in res.items():
        agg = r.aggregate
        print(f"{name}: final train {agg.mean_train[-1]:.4f} +- {agg.sem_train[-1]:.4f}, "
              f"eval {agg.mean_eval[-1]:.4f} +- {agg.sem_eval[-1]:.4f}")


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "augimp": cmd_augimp,
    "crossplay": cmd_crossplay,
    "verify": cmd_verify,
    "sigtest": cmd_sigtest,
    "reproduce-fig4": cmd_reproduce_fig4,
}


def main(argv=None) -> int:
    from .harness import ConfigError
    from .populations import SchemaError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        code = COMMANDS[args.command](args)
    except (ConfigError, SchemaError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"sba-lab {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"sba-lab {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
