"""Command-line entry point.

Every command writes ``manifest.cfg`` next to its outputs: the fully
resolved configuration. Passing it back with ``--config`` reproduces the
outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, get_float, get_int, get_str, read_kv, write_kv
from .evolution import EvaluationError, InvalidParamsError
from .experiments import (Job, SuiteConfig, build_ga, default_workers, nkcs_config, parse_algorithm,
                          run_suite, write_suite)
from .nkcs import NkcsConfig, NkcsError, dump_tables, generate_nkcs
from .stats import mann_whitney_u
from .vawt.energy import MeasurementError
from .vawt.genome import GenomeError, read_genomes, write_genomes
from .vawt.geometry import GeometryError, build_turbine
from .vawt.loop import VawtLoopConfig, run_vawt_loop
from .vawt.protocol import FileEvaluator, MockEvaluator, ProtocolError
from .vawt.stl import StlError, export_stl

MANIFEST = "manifest.cfg"
EXPECTED_ERRORS = (ConfigError, InvalidParamsError, NkcsError, EvaluationError, GenomeError, GeometryError,
                   MeasurementError, ProtocolError, StlError, OSError, ValueError)


class CliError(Exception):
    pass


def _config(args) -> dict[str, str]:
    return read_kv(args.config) if getattr(args, "config", None) else {}


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, values: dict[str, object]) -> None:
    write_kv(out / MANIFEST, {"command": command, **values})


# ------------------------------------------------------------------ commands


def cmd_suite(args) -> int:
    values = _config(args)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = SuiteConfig.from_mapping(values)
    baseline = args.baseline or values.get("baseline") or cfg.algorithms[0]
    if baseline not in cfg.algorithms:
        raise CliError(f"baseline {baseline!r} is not one of the suite algorithms")
    out = _out(args, "results")
    workers = args.workers if args.workers is not None else default_workers()
    progress = None
    if args.verbose:
        def progress(done, total):
            print(f"{done}/{total} experiments", file=sys.stderr)
    result = run_suite(cfg, workers=workers, progress=progress)
    written = write_suite(result, out, baseline)
    _manifest(out, "suite", {**cfg.to_mapping(), "baseline": baseline})
    print(f"wrote {len(written)} files to {out}")
    return 0


def _run_settings(values: dict[str, str]) -> tuple[SuiteConfig, Job]:
    algorithm = get_str(values, "algorithm", "CGA-b")
    parse_algorithm(algorithm)
    k, c = get_int(values, "k", 2), get_int(values, "c", 2)
    budget = get_int(values, "budget", 3600)
    suite_values = dict(values, algorithms=algorithm, cells=f"{k}:{c}", checkpoints=str(budget),
                        instances="1", runs="1")
    cfg = SuiteConfig.from_mapping(suite_values)
    job = Job(algorithm, k, c, get_int(values, "instance", 0), get_int(values, "run", 0))
    if job.instance < 0 or job.run < 0:
        raise ConfigError("instance and run must be >= 0")
    return cfg, job


def cmd_run(args) -> int:
    values = _config(args)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg, job = _run_settings(values)
    out = _out(args, "run")
    model = generate_nkcs(nkcs_config(cfg, job.k, job.c, job.instance))
    ga = build_ga(cfg, job, model.team_fitness)
    trace = ga.run(cfg.budget)
    trace.to_csv(out / "trace.csv")
    resolved = {k: v for k, v in cfg.to_mapping().items() if k not in ("algorithms", "cells", "checkpoints",
                                                                     "instances", "runs")}
    _manifest(out, "run", {"algorithm": job.algorithm, "k": job.k, "c": job.c, "instance": job.instance,
                           "run": job.run, **resolved, "nkcs_seed": model.config.seed})
    print(f"best team fitness {trace.best!r} after {len(trace)} evaluations")
    return 0


def cmd_vawt_compile(args) -> int:
    values = _config(args)
    genome = args.genome or values.get("genome")
    if not genome:
        raise CliError("no genome file given (--genome)")
    resolution = args.resolution if args.resolution is not None else get_int(values, "resolution", 24)
    genomes = read_genomes(genome)
    out = _out(args, "stl")
    for i, g in enumerate(genomes):
        mesh = build_turbine(g, resolution)
        export_stl(mesh, out / f"turbine_{i}.stl", header=f"coevolab turbine {i}")
    _manifest(out, "vawt-compile", {"genome": str(genome), "resolution": resolution})
    print(f"wrote {len(genomes)} STL file(s) to {out}")
    return 0


def cmd_vawt_loop(args) -> int:
    values = _config(args)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = VawtLoopConfig.from_mapping(values)
    mode = args.evaluator or get_str(values, "evaluator", "mock")
    resolution = get_int(values, "resolution", 24)
    if mode == "mock":
        evaluator = MockEvaluator(cfg.n_species)
    elif mode == "file":
        workspace = args.workspace or values.get("workspace")
        if not workspace:
            raise CliError("file evaluator needs --workspace")
        timeout = args.timeout if args.timeout is not None else get_float(values, "timeout", 0.0) or None
        evaluator = FileEvaluator(workspace, cfg.n_species, timeout=timeout,
                                  poll=get_float(values, "poll", 0.5), resolution=resolution)
    else:
        raise CliError(f"unknown evaluator {mode!r}; expected mock or file")
    variants = tuple(v.strip() for v in get_str(values, "variants", "b,bw").split(",") if v.strip())
    for v in variants:
        if v not in ("b", "bw"):
            raise CliError(f"unsupported VAWT variant {v!r}; expected b or bw")
    out = _out(args, "vawt")
    result = run_vawt_loop(evaluator, cfg, variants)
    with open(out / "generations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["branch", "generation", "evaluations", "best_fitness"])
        for name, bests in result.generation_best.items():
            for gen, best in enumerate(bests, start=1):
                w.writerow([name, gen, gen * cfg.generation, repr(best)])
    for name, trace in result.traces.items():
        trace.to_csv(out / f"trace_{name}.csv")
        write_genomes(out / f"best_{name}.csv", result.final_teams[name],
                      extra={"species": list(range(cfg.n_species))})
    resolved = {**cfg.to_mapping(), "evaluator": mode, "variants": ",".join(variants), "resolution": resolution}
    if mode == "file":
        resolved.update(workspace=str(evaluator.workspace), poll=evaluator.poll)
        if evaluator.timeout:
            resolved["timeout"] = evaluator.timeout
    _manifest(out, "vawt-loop", resolved)
    for name, bests in result.generation_best.items():
        print(f"{name}: best per generation " + ", ".join(f"{b:.6g}" for b in bests))
    return 0


def read_sample(path: str | Path, column: str | None = None) -> np.ndarray:
    """Numbers from one CSV column (named, or the first); a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
    if not rows:
        raise CliError(f"{path}: no data")
    header = None
    try:
        float(rows[0][0] if column is None else "x")
        if column is not None:
            raise ValueError
    except ValueError:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    idx = 0
    if column is not None:
        if header is None or column not in header:
            raise CliError(f"{path}: no column {column!r}")
        idx = header.index(column)
    out = []
    for lineno, r in enumerate(rows, start=2 if header else 1):
        try:
            out.append(float(r[idx]))
        except (ValueError, IndexError):
            raise CliError(f"{path}: line {lineno}: not a number: {r[idx] if idx < len(r) else ''!r}") from None
    if not out:
        raise CliError(f"{path}: no data")
    return np.array(out)


def cmd_stats(args) -> int:
    a = read_sample(args.sample_a, args.column)
    b = read_sample(args.sample_b, args.column)
    u, p = mann_whitney_u(a, b)
    sig = p < args.alpha
    print(f"n_a={len(a)} n_b={len(b)} mean_a={a.mean():.6g} mean_b={b.mean():.6g} "
          f"U={u:g} p={p:.6g} significant={'yes' if sig else 'no'}")
    return 0


def cmd_dump_tables(args) -> int:
    values = _config(args)
    for key in ("n", "k", "c", "s", "topology"):
        v = getattr(args, key)
        if v is not None:
            values[key] = str(v)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = NkcsConfig.from_mapping(values)
    out = _out(args, "tables")
    rows = dump_tables(generate_nkcs(cfg), out / "tables.csv")
    _manifest(out, "dump-tables", cfg.to_mapping())
    print(f"wrote {rows} table rows to {out / 'tables.csv'}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coevolab", description="Surrogate-assisted cooperative coevolution lab.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("suite", help="run an NKCS comparison suite")
    s.add_argument("--config", help="suite key=value file")
    s.add_argument("--seed", type=int, help="override the master seed")
    s.add_argument("--out", help="output directory (default results/)")
    s.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    s.add_argument("--baseline", help="algorithm the others are tested against")
    s.add_argument("-v", "--verbose", action="store_true", help="report progress on stderr")
    s.set_defaults(func=cmd_suite)

    r = sub.add_parser("run", help="one NKCS run, full evaluation trace")
    r.add_argument("--config", help="run key=value file")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--out", help="output directory (default run/)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("vawt-compile", help="compile genomes to binary STL")
    v.add_argument("--genome", help="genome CSV with the 17 gene columns")
    v.add_argument("--config", help="key=value file (genome, resolution)")
    v.add_argument("--out", help="output directory (default stl/)")
    v.add_argument("--resolution", type=int, help="samples per spline segment and height (default 24)")
    v.set_defaults(func=cmd_vawt_compile)

    lp = sub.add_parser("vawt-loop", help="coevolve a turbine array (CGA-b then SCGA)")
    lp.add_argument("--config", help="loop key=value file")
    lp.add_argument("--seed", type=int, help="override the seed")
    lp.add_argument("--out", help="output directory (default vawt/)")
    lp.add_argument("--evaluator", choices=("mock", "file"), help="measurement source (default mock)")
    lp.add_argument("--workspace", help="round directory root for the file evaluator")
    lp.add_argument("--timeout", type=float, help="seconds to wait for each measurements file")
    lp.set_defaults(func=cmd_vawt_loop)

    st = sub.add_parser("stats", help="Mann-Whitney U test on two sample files")
    st.add_argument("sample_a")
    st.add_argument("sample_b")
    st.add_argument("--column", help="column name (default: first column)")
    st.add_argument("--alpha", type=float, default=0.05)
    st.set_defaults(func=cmd_stats)

    d = sub.add_parser("dump-tables", help="materialise a small NKCS model's tables as CSV")
    d.add_argument("--config", help="NKCS key=value file")
    d.add_argument("--n", type=int)
    d.add_argument("--k", type=int)
    d.add_argument("--c", type=int)
    d.add_argument("--s", type=int)
    d.add_argument("--topology")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", help="output directory (default tables/)")
    d.set_defaults(func=cmd_dump_tables)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CliError, *EXPECTED_ERRORS) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"coevolab {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
