"""Seed sweeps, aggregation and file output for lever-game experiments."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .learner import TrainConfig, TrainingCurve, train_best_response
from .lever_game import LeverGameConfig, lever_symmetry_group, make_deterministic_population, make_env
from .populations import Population, load_population, serialize

SCHEMA_VERSION = 1
MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    pass


def mix64(x: int) -> int:
    """SplitMix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def child_seed(root_seed: int, seed_index: int) -> int:
    """Seed of run ``seed_index``; independent of how many runs exist."""
    return mix64(mix64(root_seed & MASK64) ^ (seed_index & MASK64))


def parse_levers(spec) -> list[int]:
    """``[0, 1, 2]``, ``"0-4"`` or ``"0,2,5-7"`` to a lever list."""
    if isinstance(spec, (list, tuple)):
        return [int(x) for x in spec]
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise ConfigError(f"bad lever list {spec!r}") from None
    return out


@dataclass
class ExperimentConfig:
    env: LeverGameConfig = field(default_factory=LeverGameConfig)
    train_pop: object = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eval_pop: object = field(default_factory=lambda: list(range(10)))
    train: TrainConfig = field(default_factory=TrainConfig)
    num_seeds: int = 30
    root_seed: int = 0
    sba: bool = False
    augment_eval: bool = False
    output_dir: str | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        for spec in (self.train_pop, self.eval_pop):
            if isinstance(spec, dict) and "file" in spec:
                path = Path(self.base_dir) / spec["file"]
                if not path.exists():
                    raise ConfigError(f"population file not found: {path}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExperimentConfig":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}; expected {SCHEMA_VERSION}")
        known = {"schema_version", "env", "train_pop", "eval_pop", "train", "num_seeds", "root_seed", "sba",
                 "augment_eval", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                env=LeverGameConfig.from_dict(d.get("env", {})),
                train_pop=d.get("train_pop", [0, 1, 2, 3, 4]),
                eval_pop=d.get("eval_pop", list(range(10))),
                train=TrainConfig.from_dict(d.get("train", {})),
                num_seeds=int(d.get("num_seeds", 30)),
                root_seed=int(d.get("root_seed", 0)),
                sba=bool(d.get("sba", False)),
                augment_eval=bool(d.get("augment_eval", False)),
                output_dir=d.get("output_dir"),
                base_dir=base_dir,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "env": self.env.to_dict(),
            "train_pop": self.train_pop,
            "eval_pop": self.eval_pop,
            "train": self.train.to_dict(),
            "num_seeds": self.num_seeds,
            "root_seed": self.root_seed,
            "sba": self.sba,
            "augment_eval": self.augment_eval,
            "output_dir": self.output_dir,
        }

    def population(self, which: str) -> Population:
        spec = getattr(self, which)
        if isinstance(spec, dict) and "file" in spec:
            return load_population(Path(self.base_dir) / spec["file"])
        if isinstance(spec, dict) and "levers" in spec:
            spec = spec["levers"]
        try:
            return make_deterministic_population(parse_levers(spec), self.env, name=which)
        except ValueError as exc:
            raise ConfigError(f"{which}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(doc, base_dir=str(path.parent))


@dataclass
class AggregateCurve:
    epochs: np.ndarray
    mean_train: np.ndarray
    sem_train: np.ndarray
    mean_eval: np.ndarray
    sem_eval: np.ndarray
    num_seeds: int


def _sem(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n == 1:
        return np.zeros(x.shape[1])
    return x.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(curves: list[TrainingCurve]) -> AggregateCurve:
    train = np.array([c.train_returns for c in curves])
    evals = np.array([c.eval_returns for c in curves])
    return AggregateCurve(
        np.array(curves[0].epochs), train.mean(axis=0), _sem(train), evals.mean(axis=0), _sem(evals), len(curves)
    )


@dataclass
class ExperimentResult:
    aggregate: AggregateCurve
    curves: list
    policies: list
    seeds: list


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_one(args):
    config, index = args
    env = make_env(config.env)
    seed = child_seed(config.root_seed, index)
    cfg = replace(config.train, seed=seed, sba_enabled=config.sba, augment_eval=config.augment_eval)
    group = lever_symmetry_group(env)
    policy, curve = train_best_response(env, config.population("train_pop"), group, cfg, config.population("eval_pop"))
    policy.name = f"seed_{index:03d}"
    return policy, curve


def default_workers() -> int:
    env = os.environ.get("SBA_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SBA_LAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


class SeedFailure(RuntimeError):
    pass


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int | None = None) -> ExperimentResult:
    """Train ``config.num_seeds`` independent runs and aggregate them.

    Output is independent of ``workers``: runs are collected and folded in
    seed order.  With ``out_dir`` (or ``config.output_dir``) writes
    ``seed_XXX.csv``, ``aggregate.csv``, ``policies.json`` and ``config.json``.
    """
    workers = workers or default_workers()
    jobs = [(config, i) for i in range(config.num_seeds)]
    results = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise SeedFailure(f"seed index {i} failed: {exc}") from exc
    else:
        for i, job in enumerate(jobs):
            try:
                results.append(_run_one(job))
            except Exception as exc:
                raise SeedFailure(f"seed index {i} failed: {exc}") from exc
    policies = [p for p, _ in results]
    curves = [c for _, c in results]
    result = ExperimentResult(aggregate(curves), curves, policies, [c.seed for c in curves])
    out_dir = out_dir or config.output_dir
    if out_dir:
        write_experiment(result, config, out_dir)
    return result


def write_curve_csv(curve: TrainingCurve, path) -> None:
    lines = ["epoch,train_return,eval_return"]
    lines += [f"{e},{_fmt(t)},{_fmt(v)}" for e, t, v in zip(curve.epochs, curve.train_returns, curve.eval_returns)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_curve_csv(path) -> TrainingCurve:
    import csv

    curve = TrainingCurve(seed=-1)
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            curve.append(int(row["epoch"]), float(row["train_return"]), float(row["eval_return"]))
    return curve


def write_aggregate_csv(agg: AggregateCurve, path) -> None:
    lines = ["epoch,mean_train,sem_train,mean_eval,sem_eval"]
    for k, e in enumerate(agg.epochs):
        lines.append(",".join([str(int(e))] + [_fmt(a[k]) for a in (agg.mean_train, agg.sem_train, agg.mean_eval, agg.sem_eval)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_experiment(result: ExperimentResult, config: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, curve in enumerate(result.curves):
        write_curve_csv(curve, out / f"seed_{i:03d}.csv")
    write_aggregate_csv(result.aggregate, out / "aggregate.csv")
    name = "sba" if config.sba else "br"
    (out / "policies.json").write_text(serialize(Population(name, tuple(result.policies))), encoding="utf-8",
                                       newline="\n")
    doc = config.to_dict()
    doc["output_dir"] = None
    doc["child_seeds"] = result.seeds
    (out / "config.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8",
                                     newline="\n")


SERIES = ("br_train", "br_eval", "sba_train", "sba_eval")


def emit_plot_data(curves: dict, path) -> None:
    """Write ``epoch,series,mean,sem`` rows for the ``br`` and ``sba`` aggregates."""
    lines = ["epoch,series,mean,sem"]
    for prefix in ("br", "sba"):
        agg = curves[prefix]
        for part, mean, sem in (("train", agg.mean_train, agg.sem_train), ("eval", agg.mean_eval, agg.sem_eval)):
            for k, e in enumerate(agg.epochs):
                lines.append(f"{int(e)},{prefix}_{part},{_fmt(mean[k])},{_fmt(sem[k])}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def reproduce_fig4(config: ExperimentConfig | None = None, root_seed: int | None = None, out_dir="fig4",
                   workers: int | None = None) -> dict:
    """Baseline and SBA sweeps on the same seeds plus the combined plot data."""
    config = config or ExperimentConfig()
    if root_seed is not None:
        config = replace(config, root_seed=root_seed)
    out = Path(out_dir)
    results = {}
    for name, sba in (("br", False), ("sba", True)):
        results[name] = run_experiment(replace(config, sba=sba), out / name, workers)
    emit_plot_data({k: r.aggregate for k, r in results.items()}, out / "fig4_plot_data.csv")
    return results
