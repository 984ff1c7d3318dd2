"""Batch NKCS suites: paired instances, checkpoint tables, curves and significance.

Every experiment is an independent job seeded from the master seed:

* instance seed:   (master, K, C, instance)
* initial streams: (master, K, C, instance, run), shared by every algorithm
* search stream:   (master, crc32(algorithm), K, C, instance, run)

so all algorithms in a suite start from the same landscapes and the same
initial populations, and results do not depend on worker count.
"""

from __future__ import annotations

import csv
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .config import ConfigError, get_float, get_int, get_str
from .evolution import SCHEMES, BinarySpace, CooperativeGA, EaParams
from .nkcs import NkcsConfig, generate_nkcs
from .stats import mann_whitney_u
from .surrogate import VARIANTS, SurrogateGA, SurrogateParams

ALGORITHMS = tuple(f"CGA-{s}" for s in SCHEMES) + tuple(f"SCGA-{v}" for v in VARIANTS)
DEFAULT_CELLS = ((2, 2), (2, 8), (6, 2), (6, 8))
ALPHA = 0.05


def parse_algorithm(name: str) -> tuple[str, str]:
    """``"SCGA-bw"`` -> ``("SCGA", "bw")``."""
    family, sep, code = name.strip().partition("-")
    family = family.upper()
    if not sep or f"{family}-{code}" not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return family, code


@dataclass(frozen=True)
class SuiteConfig:
    algorithms: tuple[str, ...] = ("CGA-b",)
    cells: tuple[tuple[int, int], ...] = DEFAULT_CELLS
    instances: int = 10
    runs: int = 10
    budget: int = 3600
    checkpoints: tuple[int, ...] = (480, 3600)
    seed: int = 0
    n_genes: int = 20
    n_species: int = 6
    topology: str = "chain"
    pop_size: int = 20
    mutation_rate: float = 0.05
    crossover_rate: float = 0.0
    lambda_m: int = 1000
    epochs: int = 50
    beta: float = 0.1
    hidden: int = 10
    window: int | None = None  # defaults to pop_size
    warmup: int | None = None  # defaults to S*P

    @property
    def experiments(self) -> int:
        return self.instances * self.runs

    def validate(self) -> None:
        if not self.algorithms:
            raise ConfigError("no algorithms configured")
        for a in self.algorithms:
            parse_algorithm(a)
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")
        if self.instances < 1 or self.runs < 1:
            raise ConfigError("instances and runs must be >= 1")
        if not self.checkpoints or any(c < 1 or c > self.budget for c in self.checkpoints):
            raise ConfigError(f"checkpoints {self.checkpoints} must lie in [1, budget={self.budget}]")
        if self.budget < self.n_species * self.pop_size:
            raise ConfigError(f"budget {self.budget} is below the initialisation cost "
                              f"{self.n_species * self.pop_size}")
        for k, c in self.cells:
            NkcsConfig(self.n_genes, k, c, self.n_species, self.topology, 0).validate()

    def ea_params(self, scheme: str) -> EaParams:
        return EaParams(pop_size=self.pop_size, mutation_rate=self.mutation_rate,
                        crossover_rate=self.crossover_rate, scheme=scheme)

    def surrogate_params(self, variant: str) -> SurrogateParams:
        return SurrogateParams(lambda_m=self.lambda_m, epochs=self.epochs, learning_rate=self.beta,
                               hidden=self.hidden, variant=variant,
                               window=self.window if self.window is not None else self.pop_size,
                               window_mode="archive", warmup=self.warmup)

    def to_mapping(self) -> dict[str, object]:
        out: dict[str, object] = {
            "algorithms": ",".join(self.algorithms),
            "cells": ",".join(f"{k}:{c}" for k, c in self.cells),
            "instances": self.instances,
            "runs": self.runs,
            "budget": self.budget,
            "checkpoints": ",".join(str(c) for c in self.checkpoints),
            "seed": self.seed,
            "n": self.n_genes,
            "s": self.n_species,
            "topology": self.topology,
            "pop_size": self.pop_size,
            "mutation_rate": self.mutation_rate,
            "crossover_rate": self.crossover_rate,
            "lambda_m": self.lambda_m,
            "epochs": self.epochs,
            "beta": self.beta,
            "hidden": self.hidden,
        }
        if self.window is not None:
            out["window"] = self.window
        if self.warmup is not None:
            out["warmup"] = self.warmup
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SuiteConfig":
        d = cls()

        def ints(key, default):
            if key not in values:
                return default
            try:
                return tuple(int(x) for x in values[key].split(",") if x.strip())
            except ValueError:
                raise ConfigError(f"{key}: expected comma-separated integers, got {values[key]!r}") from None

        def cells(default):
            if "cells" not in values:
                return default
            out = []
            for item in values["cells"].split(","):
                if not item.strip():
                    continue
                try:
                    k, c = item.split(":")
                    out.append((int(k), int(c)))
                except ValueError:
                    raise ConfigError(f"cells: expected K:C pairs, got {item!r}") from None
            return tuple(out)

        def optional(key):
            return get_int(values, key, 0) if values.get(key, "") != "" else None

        algs = tuple(a.strip() for a in get_str(values, "algorithms", ",".join(d.algorithms)).split(",") if a.strip())
        cfg = cls(
            algorithms=algs,
            cells=cells(d.cells),
            instances=get_int(values, "instances", d.instances),
            runs=get_int(values, "runs", d.runs),
            budget=get_int(values, "budget", d.budget),
            checkpoints=ints("checkpoints", d.checkpoints),
            seed=get_int(values, "seed", d.seed),
            n_genes=get_int(values, "n", d.n_genes),
            n_species=get_int(values, "s", d.n_species),
            topology=get_str(values, "topology", d.topology),
            pop_size=get_int(values, "pop_size", d.pop_size),
            mutation_rate=get_float(values, "mutation_rate", d.mutation_rate),
            crossover_rate=get_float(values, "crossover_rate", d.crossover_rate),
            lambda_m=get_int(values, "lambda_m", d.lambda_m),
            epochs=get_int(values, "epochs", d.epochs),
            beta=get_float(values, "beta", d.beta),
            hidden=get_int(values, "hidden", d.hidden),
            window=optional("window"),
            warmup=optional("warmup"),
        )
        cfg.validate()
        return cfg


# ------------------------------------------------------------------ seeding


def _seed64(entropy: Iterable[int]) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


def instance_seed(master: int, k: int, c: int, instance: int) -> int:
    return _seed64([master, 0, k, c, instance])


def init_stream(master: int, k: int, c: int, instance: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, 1, k, c, instance, run]))


def search_stream(master: int, algorithm: str, k: int, c: int, instance: int, run: int) -> np.random.Generator:
    tag = zlib.crc32(algorithm.encode())
    return np.random.default_rng(np.random.SeedSequence([master, 2, tag, k, c, instance, run]))


# ------------------------------------------------------------------ jobs


@dataclass(frozen=True)
class Job:
    algorithm: str
    k: int
    c: int
    instance: int
    run: int


def jobs_for(config: SuiteConfig) -> list[Job]:
    """Canonical order: algorithm, cell, instance, run."""
    return [Job(a, k, c, i, r) for a in config.algorithms for k, c in config.cells
            for i in range(config.instances) for r in range(config.runs)]


def nkcs_config(config: SuiteConfig, k: int, c: int, instance: int) -> NkcsConfig:
    return NkcsConfig(config.n_genes, k, c, config.n_species, config.topology,
                      instance_seed(config.seed, k, c, instance))


def build_ga(config: SuiteConfig, job: Job, evaluator: Callable[[np.ndarray], float]) -> CooperativeGA:
    family, code = parse_algorithm(job.algorithm)
    space = BinarySpace(config.n_genes, config.mutation_rate)
    rng = search_stream(config.seed, job.algorithm, job.k, job.c, job.instance, job.run)
    init_rng = init_stream(config.seed, job.k, job.c, job.instance, job.run)
    if family == "CGA":
        return CooperativeGA(space, evaluator, config.n_species, config.ea_params(code), rng, init_rng)
    return SurrogateGA(space, evaluator, config.n_species, config.ea_params("b"),
                       config.surrogate_params(code), rng, init_rng)


def run_job(config: SuiteConfig, job: Job) -> np.ndarray:
    """Best-so-far curve of one experiment, length ``budget``."""
    model = generate_nkcs(nkcs_config(config, job.k, job.c, job.instance))
    ga = build_ga(config, job, model.team_fitness)
    trace = ga.run(config.budget)
    return trace.best_curve(config.budget)


def _run_chunk(args: tuple[SuiteConfig, list[Job]]) -> list[np.ndarray]:
    config, jobs = args
    return [run_job(config, j) for j in jobs]


# ------------------------------------------------------------------ results


@dataclass
class SuiteResult:
    config: SuiteConfig
    curves: dict[tuple[str, int, int], np.ndarray] = field(default_factory=dict)

    def values(self, algorithm: str, k: int, c: int, checkpoint: int) -> np.ndarray:
        """Best-so-far after ``checkpoint`` evaluations, one per experiment."""
        return self.curves[(algorithm, k, c)][:, checkpoint - 1]

    def mean(self, algorithm: str, k: int, c: int, checkpoint: int) -> float:
        return float(np.mean(self.values(algorithm, k, c, checkpoint)))

    def std(self, algorithm: str, k: int, c: int, checkpoint: int) -> float:
        v = self.values(algorithm, k, c, checkpoint)
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover
        return os.cpu_count() or 1


def run_suite(config: SuiteConfig, workers: int | None = None,
              progress: Callable[[int, int], None] | None = None) -> SuiteResult:
    """Run every job; the reduction follows the canonical job order."""
    config.validate()
    jobs = jobs_for(config)
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1:
        curves = []
        for n, job in enumerate(jobs, start=1):
            curves.append(run_job(config, job))
            if progress:
                progress(n, len(jobs))
    else:
        size = max(1, min(config.runs, len(jobs) // (4 * workers) or 1))
        chunks = [jobs[i:i + size] for i in range(0, len(jobs), size)]
        curves = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves submission order whatever the completion order
            for part in pool.map(_run_chunk, [(config, ch) for ch in chunks]):
                curves.extend(part)
                if progress:
                    progress(len(curves), len(jobs))
    result = SuiteResult(config)
    per_cell = config.experiments
    for idx in range(0, len(jobs), per_cell):
        j = jobs[idx]
        result.curves[(j.algorithm, j.k, j.c)] = np.stack(curves[idx:idx + per_cell])
    return result


# ------------------------------------------------------------------ tables


def checkpoint_table(result: SuiteResult) -> list[dict[str, object]]:
    rows = []
    cfg = result.config
    for cp in cfg.checkpoints:
        for a in cfg.algorithms:
            for k, c in cfg.cells:
                rows.append({"algorithm": a, "K": k, "C": c, "checkpoint": cp, "n": cfg.experiments,
                             "mean": result.mean(a, k, c, cp), "sd": result.std(a, k, c, cp)})
    return rows


def significance_table(result: SuiteResult, baseline: str) -> list[dict[str, object]]:
    """Compare every other algorithm with ``baseline`` per cell and checkpoint."""
    cfg = result.config
    if baseline not in cfg.algorithms:
        raise ConfigError(f"baseline {baseline!r} not in suite algorithms {cfg.algorithms}")
    rows = []
    for cp in cfg.checkpoints:
        for a in cfg.algorithms:
            if a == baseline:
                continue
            for k, c in cfg.cells:
                u, p = mann_whitney_u(result.values(a, k, c, cp), result.values(baseline, k, c, cp))
                rows.append({"algorithm": a, "baseline": baseline, "K": k, "C": c, "checkpoint": cp,
                             "mean": result.mean(a, k, c, cp), "baseline_mean": result.mean(baseline, k, c, cp),
                             "U": u, "p": p, "significant": p < ALPHA})
    return rows


def _cell(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: str | Path, rows: list[dict[str, object]], columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[col]) for col in columns])


def curve_filename(algorithm: str, k: int, c: int) -> str:
    return f"curve_{algorithm}_K{k}C{c}.csv"


def export_curves(result: SuiteResult, destination: str | Path) -> list[Path]:
    """One CSV per (algorithm, K, C): evaluations, mean best, sample SD."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    paths = []
    for (a, k, c), curves in result.curves.items():
        mean = curves.mean(axis=0)
        sd = curves.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(curves.shape[1])
        rows = [{"evaluations": i + 1, "mean_best": float(mean[i]), "sd": float(sd[i])}
                for i in range(curves.shape[1])]
        p = dest / curve_filename(a, k, c)
        write_rows(p, rows, ["evaluations", "mean_best", "sd"])
        paths.append(p)
    return paths


def export_samples(result: SuiteResult, destination: str | Path) -> Path:
    """Per-experiment checkpoint values, long format."""
    rows = []
    cfg = result.config
    for a in cfg.algorithms:
        for k, c in cfg.cells:
            for cp in cfg.checkpoints:
                for e, v in enumerate(result.values(a, k, c, cp)):
                    rows.append({"algorithm": a, "K": k, "C": c, "checkpoint": cp,
                                 "instance": e // cfg.runs, "run": e % cfg.runs, "best": float(v)})
    path = Path(destination)
    write_rows(path, rows, ["algorithm", "K", "C", "checkpoint", "instance", "run", "best"])
    return path


def write_suite(result: SuiteResult, destination: str | Path, baseline: str | None = None) -> list[Path]:
    """Curves, checkpoint table, per-run samples and (if possible) significance table."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    written = export_curves(result, dest)
    write_rows(dest / "checkpoints.csv", checkpoint_table(result))
    written.append(dest / "checkpoints.csv")
    written.append(export_samples(result, dest / "samples.csv"))
    base = baseline or result.config.algorithms[0]
    if len(result.config.algorithms) > 1:
        rows = significance_table(result, base)
        write_rows(dest / "significance.csv", rows,
                   ["algorithm", "baseline", "K", "C", "checkpoint", "mean", "baseline_mean", "U", "p", "significant"])
        written.append(dest / "significance.csv")
    return written
