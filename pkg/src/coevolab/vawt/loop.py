"""Coevolution of a six-turbine array: CGA-b warm-up, then SCGA-b / SCGA-bw."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..config import get_float, get_int
from ..evolution import EaParams, RunTrace
from ..surrogate import SurrogateGA, SurrogateParams
from .genome import (DEFAULT_CONSTANTS, N_GENES, SEED_GENOME, TurbineConstants, clamp_genomes,
                     gene_bounds, mutation_steps)
from .geometry import fit_to_plate


class VawtSpace:
    """Real-valued turbine genomes: Gaussian mutation, clamping, then plate fitting."""

    def __init__(self, rate: float = 0.25, sigma_coord: float = 3.6, sigma_twist: float = 18.0,
                 seed_genome: np.ndarray | None = None, constants: TurbineConstants = DEFAULT_CONSTANTS):
        self.rate = rate
        self.sigma_coord = sigma_coord
        self.sigma_twist = sigma_twist
        self.seed = SEED_GENOME.to_array() if seed_genome is None else np.asarray(seed_genome, dtype=np.float64)
        self.constants = constants
        self.lo, self.hi = gene_bounds(constants)

    def _repair(self, genomes: np.ndarray) -> np.ndarray:
        g = clamp_genomes(genomes, self.constants)
        return fit_to_plate(g.reshape(-1, N_GENES), constants=self.constants).reshape(g.shape)

    def _perturb(self, genomes: np.ndarray, rng: np.random.Generator, rate: float) -> np.ndarray:
        steps = mutation_steps(rng, rate, self.sigma_coord, self.sigma_twist, genomes.shape[:-1])
        return self._repair(genomes + steps)

    def random(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """The seed design followed by ``count - 1`` variants mutated at rate 1."""
        base = np.broadcast_to(self.seed, (count - 1, N_GENES))
        return np.concatenate([self.seed[None, :], self._perturb(base, rng, 1.0)])

    def mutate(self, genome, rng):
        return self._perturb(np.asarray(genome, dtype=np.float64)[None, :], rng, self.rate)[0]

    def mutate_many(self, genome, count, rng):
        return self._perturb(np.broadcast_to(np.asarray(genome, dtype=np.float64), (count, N_GENES)), rng, self.rate)

    def mutate_rows(self, genomes, rng):
        return self._perturb(np.asarray(genomes, dtype=np.float64), rng, self.rate)

    def encode(self, genomes):
        return (np.asarray(genomes, dtype=np.float64) - self.lo) / (self.hi - self.lo)


def minmax_targets(y: np.ndarray) -> np.ndarray:
    """Affine map of the training targets onto [0, 1] (all zeros when constant)."""
    y = np.asarray(y, dtype=np.float64)
    lo, hi = float(y.min()), float(y.max())
    if hi - lo <= 0:
        return np.zeros_like(y)
    return (y - lo) / (hi - lo)


@dataclass(frozen=True)
class VawtLoopConfig:
    n_species: int = 6
    pop_size: int = 20
    mutation_rate: float = 0.25
    sigma_coord: float = 3.6
    sigma_twist: float = 18.0
    lambda_m: int = 1000
    epochs: int = 1000
    learning_rate: float = 0.1
    hidden: int = 10
    cga_generations: int = 3
    scga_generations: int = 1
    seed: int = 0

    @property
    def generation(self) -> int:
        return self.n_species * self.pop_size

    @property
    def warmup(self) -> int:
        return self.cga_generations * self.generation

    @property
    def budget(self) -> int:
        return self.warmup + self.scga_generations * self.generation

    def ea_params(self) -> EaParams:
        return EaParams(pop_size=self.pop_size, mutation_rate=self.mutation_rate, scheme="b")

    def surrogate_params(self, variant: str = "b") -> SurrogateParams:
        return SurrogateParams(lambda_m=self.lambda_m, epochs=self.epochs, learning_rate=self.learning_rate,
                               hidden=self.hidden, variant=variant, window=self.pop_size,
                               window_mode="population", warmup=self.warmup)

    def to_mapping(self) -> dict[str, object]:
        return {
            "s": self.n_species, "pop_size": self.pop_size, "mutation_rate": self.mutation_rate,
            "sigma1": self.sigma_coord, "sigma2": self.sigma_twist, "lambda_m": self.lambda_m,
            "epochs": self.epochs, "beta": self.learning_rate, "hidden": self.hidden,
            "cga_generations": self.cga_generations, "scga_generations": self.scga_generations,
            "seed": self.seed,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "VawtLoopConfig":
        d = cls()
        cfg = cls(
            n_species=get_int(values, "s", d.n_species),
            pop_size=get_int(values, "pop_size", d.pop_size),
            mutation_rate=get_float(values, "mutation_rate", d.mutation_rate),
            sigma_coord=get_float(values, "sigma1", d.sigma_coord),
            sigma_twist=get_float(values, "sigma2", d.sigma_twist),
            lambda_m=get_int(values, "lambda_m", d.lambda_m),
            epochs=get_int(values, "epochs", d.epochs),
            learning_rate=get_float(values, "beta", d.learning_rate),
            hidden=get_int(values, "hidden", d.hidden),
            cga_generations=get_int(values, "cga_generations", d.cga_generations),
            scga_generations=get_int(values, "scga_generations", d.scga_generations),
            seed=get_int(values, "seed", d.seed),
        )
        if cfg.cga_generations < 1 or cfg.scga_generations < 0:
            raise ValueError("cga_generations must be >= 1 and scga_generations >= 0")
        return cfg


@dataclass
class VawtLoopResult:
    traces: dict[str, RunTrace]
    generation_best: dict[str, list[float]]
    final_teams: dict[str, np.ndarray]
    warmup: int
    surrogate_turns: dict[str, int] = dataclasses.field(default_factory=dict)


def _generation_bests(trace: RunTrace, generation: int, upto: int) -> list[float]:
    curve = trace.best_curve()
    return [float(curve[k * generation - 1]) for k in range(1, upto // generation + 1)]


def run_vawt_loop(evaluator: Callable[[np.ndarray], float], config: VawtLoopConfig = VawtLoopConfig(),
                  variants: tuple[str, ...] = ("b", "bw"),
                  constants: TurbineConstants = DEFAULT_CONSTANTS) -> VawtLoopResult:
    """CGA-b for the warm-up generations, then each SCGA variant from the same snapshot.

    Populations start from the seed design plus mutants and are first
    evaluated alongside the seed designs of the other species.
    """
    space = VawtSpace(config.mutation_rate, config.sigma_coord, config.sigma_twist, constants=constants)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    ga = SurrogateGA(space, evaluator, config.n_species, config.ea_params(),
                     config.surrogate_params(variants[0] if variants else "b"), rng, init_rng,
                     target_scale=minmax_targets)
    ga.run(config.warmup, representative="first")
    # the evaluator is shared, not copied: it may own external state such as a round counter
    keep = {id(evaluator): evaluator}
    snapshot = copy.deepcopy(ga, dict(keep))
    traces, bests, finals, turns = {}, {}, {}, {}
    for variant in variants:
        branch = copy.deepcopy(snapshot, dict(keep))
        branch.surrogate = dataclasses.replace(config.surrogate_params(variant))
        branch.run(config.budget)
        name = f"SCGA-{variant}"
        traces[name] = branch.trace
        bests[name] = _generation_bests(branch.trace, config.generation, config.budget)
        finals[name] = branch.trace.best_team.copy()
        turns[name] = branch.model_turns
    if not variants:
        traces["CGA-b"] = ga.trace
        bests["CGA-b"] = _generation_bests(ga.trace, config.generation, config.warmup)
        finals["CGA-b"] = ga.trace.best_team.copy()
    return VawtLoopResult(traces, bests, finals, config.warmup, turns)
