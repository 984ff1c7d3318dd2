"""Steady-state cooperative coevolutionary GA.

One population per species. Species take turns (round robin); each turn
breeds one offspring by tournament selection and mutation, evaluates it in a
team with representatives of the other species, and inserts it by a
replace-worst-of-3 tournament that never removes the population elite.
Every individual carries the maximum team fitness of any team it joined.

Collaboration schemes:

``b``
    offspring + elites of the other species, one evaluation.
``br``
    ``b`` plus a second team with one random member of every other species.
``re``
    ``b``; whenever the global best team fitness strictly improves, every
    member of every other species is re-evaluated with the current elites.
``o``
    every species breeds one offspring at once; the offspring team is
    evaluated once.

Evaluations are counted exactly against a budget and logged in a
:class:`RunTrace`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .config import get_float, get_int, get_str

__all__ = [
    "SCHEMES",
    "EaParams",
    "Individual",
    "SpeciesPopulation",
    "Archive",
    "RunTrace",
    "BinarySpace",
    "CooperativeGA",
    "EvaluationError",
    "InvalidParamsError",
    "sample_distinct",
    "tournament_select",
    "replacement_victim",
    "mutate_binary",
    "run_cga",
]

SCHEMES = ("b", "br", "re", "o")
REPLACE_TOURNAMENT = 3

Evaluator = Callable[[np.ndarray], float]


class InvalidParamsError(ValueError):
    pass


class EvaluationError(RuntimeError):
    """The evaluator failed; ``ordinal`` is the 1-based evaluation that failed."""

    def __init__(self, ordinal: int, cause: BaseException):
        super().__init__(f"evaluation {ordinal} failed: {cause}")
        self.ordinal = ordinal


@dataclass(frozen=True)
class EaParams:
    pop_size: int = 20
    tournament_size: int = 3
    mutation_rate: float = 0.05
    crossover_rate: float = 0.0
    scheme: str = "b"

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise InvalidParamsError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.pop_size <= REPLACE_TOURNAMENT:
            raise InvalidParamsError(
                f"population size {self.pop_size} too small: replacement samples "
                f"{REPLACE_TOURNAMENT} members besides the elite")
        if not 1 <= self.tournament_size <= self.pop_size:
            raise InvalidParamsError(f"tournament size must lie in [1, P], got {self.tournament_size}")
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParamsError(f"{name} must lie in [0, 1], got {v}")

    def to_mapping(self) -> dict[str, object]:
        return {
            "pop_size": self.pop_size,
            "tournament": self.tournament_size,
            "mutation_rate": self.mutation_rate,
            "crossover_rate": self.crossover_rate,
            "scheme": self.scheme,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "EaParams":
        d = cls()
        return cls(
            pop_size=get_int(values, "pop_size", d.pop_size),
            tournament_size=get_int(values, "tournament", d.tournament_size),
            mutation_rate=get_float(values, "mutation_rate", d.mutation_rate),
            crossover_rate=get_float(values, "crossover_rate", d.crossover_rate),
            scheme=get_str(values, "scheme", d.scheme),
        )


# ------------------------------------------------------------------ operators


def sample_distinct(rng: np.random.Generator, n: int, k: int) -> list[int]:
    """``k`` distinct integers from ``range(n)`` (Floyd's algorithm), ascending."""
    chosen: set[int] = set()
    for j in range(n - k, n):
        t = int(rng.integers(0, j + 1))
        chosen.add(j if t in chosen else t)
    return sorted(chosen)


def tournament_select(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    """Index of the fittest of ``size`` distinct random members; ties go to the lowest index."""
    sample = sample_distinct(rng, len(fitness), size)
    best = sample[0]
    for i in sample[1:]:
        if fitness[i] > fitness[best]:
            best = i
    return best


def replacement_victim(fitness: np.ndarray, sample: Sequence[int]) -> int:
    """Least fit member of ``sample``; ties go to the highest index."""
    worst = None
    for i in sorted(sample):
        if worst is None or fitness[i] <= fitness[worst]:
            worst = i
    return int(worst)


def mutate_binary(genome: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each allele independently with probability ``rate``; returns a copy."""
    flips = rng.random(genome.shape[-1]) < rate
    return genome ^ flips.astype(genome.dtype)


def uniform_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(a.shape[-1]) < 0.5
    return np.where(mask, a, b)


class GenomeSpace(Protocol):
    length: int
    dtype: np.dtype

    def random(self, rng: np.random.Generator, count: int) -> np.ndarray: ...
    def mutate(self, genome: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...
    def mutate_many(self, genome: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray: ...
    def mutate_rows(self, genomes: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...
    def encode(self, genomes: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class BinarySpace:
    length: int
    mutation_rate: float
    dtype: np.dtype = field(default=np.dtype(np.uint8))

    def random(self, rng, count):
        return rng.integers(0, 2, size=(count, self.length), dtype=np.uint8)

    def mutate(self, genome, rng):
        return mutate_binary(genome, self.mutation_rate, rng)

    def mutate_many(self, genome, count, rng):
        flips = rng.random((count, self.length)) < self.mutation_rate
        return genome[None, :] ^ flips.astype(np.uint8)

    def mutate_rows(self, genomes, rng):
        flips = rng.random(genomes.shape) < self.mutation_rate
        return genomes ^ flips.astype(np.uint8)

    def encode(self, genomes):
        return np.asarray(genomes, dtype=np.float64)


# ------------------------------------------------------------------ populations


@dataclass
class Individual:
    genome: np.ndarray
    fitness: float = -np.inf
    eval_count: int = 0


class Archive:
    """Append-only log of a species' evaluations (subject genome, team, target, ordinal)."""

    def __init__(self):
        self.genomes: list[np.ndarray] = []
        self.teams: list[np.ndarray] = []
        self.targets: list[float] = []
        self.ordinals: list[int] = []

    def append(self, genome: np.ndarray, team: np.ndarray, target: float, ordinal: int) -> None:
        if self.ordinals and ordinal <= self.ordinals[-1]:
            raise ValueError("archive ordinals must strictly increase")
        self.genomes.append(genome.copy())
        self.teams.append(team.copy())
        self.targets.append(float(target))
        self.ordinals.append(int(ordinal))

    def __len__(self) -> int:
        return len(self.targets)


class SpeciesPopulation:
    """Fixed-size population stored as arrays; ``elite_index`` is the argmax (lowest index on ties)."""

    def __init__(self, genomes: np.ndarray):
        self.genomes = np.array(genomes)
        self.fitness = np.full(len(self.genomes), -np.inf)
        self.eval_count = np.zeros(len(self.genomes), dtype=np.int64)
        self.archive = Archive()

    def __len__(self) -> int:
        return len(self.genomes)

    @property
    def elite_index(self) -> int:
        return int(np.argmax(self.fitness))

    @property
    def members(self) -> list[Individual]:
        return [Individual(self.genomes[i].copy(), float(self.fitness[i]), int(self.eval_count[i]))
                for i in range(len(self))]

    def credit(self, index: int, team_fitness: float) -> None:
        """Max rule: a member keeps the best team fitness it has been part of."""
        if team_fitness > self.fitness[index]:
            self.fitness[index] = team_fitness
        self.eval_count[index] += 1

    def replace(self, genome: np.ndarray, fitness: float, rng: np.random.Generator,
                sample: Sequence[int] | None = None, evaluations: int = 1) -> int:
        """Overwrite the worst of 3 random non-elite members; returns the slot used."""
        P = len(self)
        if P <= REPLACE_TOURNAMENT:
            raise InvalidParamsError(f"population of {P} cannot protect its elite and sample {REPLACE_TOURNAMENT}")
        elite = self.elite_index
        if sample is None:
            sample = [i if i < elite else i + 1 for i in sample_distinct(rng, P - 1, REPLACE_TOURNAMENT)]
        elif elite in sample:
            raise ValueError("replacement sample must exclude the elite")
        victim = replacement_victim(self.fitness, sample)
        self.genomes[victim] = genome
        self.fitness[victim] = fitness
        self.eval_count[victim] = evaluations
        return victim


# ------------------------------------------------------------------------ trace


class RunTrace:
    """Every team evaluation in order: ordinal, species acted on, team fitness, best so far.

    ``species`` is 0-based; ``-1`` marks a simultaneous all-species evaluation (scheme ``o``).
    """

    def __init__(self):
        self.ordinals: list[int] = []
        self.species: list[int] = []
        self.team_fitness: list[float] = []
        self.best_so_far: list[float] = []
        self.best_team: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ordinals)

    @property
    def best(self) -> float:
        return self.best_so_far[-1] if self.best_so_far else -np.inf

    def record(self, species: int, fitness: float, team: np.ndarray) -> int:
        ordinal = len(self.ordinals) + 1
        improved = fitness > self.best
        self.ordinals.append(ordinal)
        self.species.append(species)
        self.team_fitness.append(float(fitness))
        self.best_so_far.append(float(fitness) if improved else self.best)
        if improved:
            self.best_team = np.array(team, copy=True)
        return ordinal

    def best_curve(self, length: int | None = None) -> np.ndarray:
        """Best-so-far by ordinal, padded with the final value up to ``length``."""
        curve = np.asarray(self.best_so_far, dtype=np.float64)
        if length is not None and length > len(curve):
            curve = np.concatenate([curve, np.full(length - len(curve), curve[-1] if len(curve) else np.nan)])
        return curve[:length] if length is not None else curve

    def to_csv(self, destination: str | Path) -> None:
        with open(destination, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eval_ordinal", "species", "team_fitness", "best_so_far"])
            for row in zip(self.ordinals, self.species, self.team_fitness, self.best_so_far):
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])


# ----------------------------------------------------------------------- engine


class CooperativeGA:
    """Round-robin steady-state coevolution with exact evaluation accounting.

    ``init_rng`` drives the initial populations and initial representatives;
    ``rng`` drives everything afterwards. Keeping them separate lets different
    algorithms start from identical populations.
    """

    def __init__(self, space: GenomeSpace, evaluator: Evaluator, n_species: int,
                 params: EaParams, rng: np.random.Generator,
                 init_rng: np.random.Generator | None = None):
        params.validate()
        self.space = space
        self.evaluator = evaluator
        self.n_species = n_species
        self.params = params
        self.rng = rng
        self.init_rng = init_rng if init_rng is not None else rng
        self.populations: list[SpeciesPopulation] = []
        self.trace = RunTrace()
        self.budget: int | None = None
        self.next_species = 0

    # -- accounting -----------------------------------------------------------

    @property
    def evaluations(self) -> int:
        return len(self.trace)

    def remaining(self) -> int:
        return (self.budget - self.evaluations) if self.budget is not None else np.iinfo(np.int64).max

    def evaluate(self, team: np.ndarray, members: Sequence[int | None], subject: int) -> float:
        """Evaluate ``team``; credit every population member in it (``None`` = offspring)."""
        if self.remaining() <= 0:
            raise RuntimeError("evaluation budget exhausted")
        try:
            fitness = float(self.evaluator(team))
        except Exception as exc:
            raise EvaluationError(self.evaluations + 1, exc) from exc
        ordinal = self.trace.record(subject, fitness, team)
        for s, idx in enumerate(members):
            if idx is not None:
                self.populations[s].credit(idx, fitness)
        self._last_ordinal = ordinal
        return fitness

    def _archive(self, species: int, genome: np.ndarray, team: np.ndarray, fitness: float) -> None:
        self.populations[species].archive.append(genome, team, fitness, self._last_ordinal)

    # -- setup ----------------------------------------------------------------

    def initialize(self, genomes: Sequence[np.ndarray] | None = None, representative: str = "random") -> None:
        """Fill and evaluate all populations (S*P evaluations).

        ``genomes[s]`` optionally supplies the initial ``(P, L)`` population of
        species ``s``. ``representative`` is ``"random"`` (a random member of
        each other species, fixed for the whole sweep of one species) or
        ``"first"`` (member 0, e.g. a known good seed design).
        """
        P, S = self.params.pop_size, self.n_species
        if genomes is None:
            genomes = [self.space.random(self.init_rng, P) for _ in range(S)]
        self.populations = [SpeciesPopulation(g) for g in genomes]
        for pop in self.populations:
            if len(pop) != P:
                raise InvalidParamsError(f"initial population has {len(pop)} members, expected {P}")
        for s in range(S):
            if representative == "random":
                reps = [int(self.init_rng.integers(P)) if t != s else None for t in range(S)]
            elif representative == "first":
                reps = [0 if t != s else None for t in range(S)]
            else:
                raise InvalidParamsError(f"unknown representative rule {representative!r}")
            for i in range(P):
                members = list(reps)
                members[s] = i
                team = self._team(members)
                f = self.evaluate(team, members, s)
                self._archive(s, team[s], team, f)
        self.next_species = 0

    def _team(self, members: Sequence[int | None], override: Mapping[int, np.ndarray] | None = None) -> np.ndarray:
        rows = []
        for s, idx in enumerate(members):
            if override and s in override:
                rows.append(override[s])
            else:
                rows.append(self.populations[s].genomes[idx])
        return np.stack(rows)

    def elites(self) -> list[int]:
        return [p.elite_index for p in self.populations]

    # -- variation ------------------------------------------------------------

    def breed(self, species: int) -> np.ndarray:
        pop = self.populations[species]
        p = self.params
        parent = pop.genomes[tournament_select(pop.fitness, p.tournament_size, self.rng)]
        if p.crossover_rate > 0 and self.rng.random() < p.crossover_rate:
            other = pop.genomes[tournament_select(pop.fitness, p.tournament_size, self.rng)]
            parent = uniform_crossover(parent, other, self.rng)
        return self.space.mutate(parent, self.rng)

    # -- turns ----------------------------------------------------------------

    def turn_cost(self) -> int:
        """Evaluations a turn needs before it may start."""
        return 2 if self.params.scheme == "br" else 1

    def step(self) -> int:
        """Run one turn of the configured scheme; returns evaluations consumed."""
        before = self.evaluations
        scheme = self.params.scheme
        if scheme == "o":
            self._step_simultaneous()
        else:
            s = self.next_species
            self.next_species = (s + 1) % self.n_species
            if scheme == "b":
                self._step_best(s)
            elif scheme == "br":
                self._step_best_random(s)
            elif scheme == "re":
                self._step_reevaluate(s)
            else:
                raise InvalidParamsError(f"unknown scheme {scheme!r}")
        return self.evaluations - before

    def _evaluate_with_elites(self, s: int, child: np.ndarray) -> float:
        members: list[int | None] = self.elites()
        members[s] = None
        team = self._team(members, {s: child})
        f = self.evaluate(team, members, s)
        self._archive(s, child, team, f)
        return f

    def _step_best(self, s: int, child: np.ndarray | None = None) -> float:
        if child is None:
            child = self.breed(s)
        f = self._evaluate_with_elites(s, child)
        self.populations[s].replace(child, f, self.rng)
        return f

    def _step_best_random(self, s: int) -> None:
        child = self.breed(s)
        f1 = self._evaluate_with_elites(s, child)
        P = self.params.pop_size
        members: list[int | None] = [int(self.rng.integers(P)) if t != s else None for t in range(self.n_species)]
        team = self._team(members, {s: child})
        f2 = self.evaluate(team, members, s)
        self._archive(s, child, team, f2)
        self.populations[s].replace(child, max(f1, f2), self.rng, evaluations=2)

    def _step_reevaluate(self, s: int) -> None:
        best_before = self.trace.best
        f = self._step_best(s)
        if f > best_before:
            self.reevaluate_others(s)

    def reevaluate_others(self, s: int) -> None:
        """Re-evaluate every member of every other species with the current elites.

        Stops early if the budget runs out mid-sweep.
        """
        for t in range(self.n_species):
            if t == s:
                continue
            for i in range(self.params.pop_size):
                if self.remaining() <= 0:
                    return
                members: list[int | None] = self.elites()
                members[t] = i
                team = self._team(members)
                f = self.evaluate(team, members, t)
                self._archive(t, team[t], team, f)

    def _step_simultaneous(self) -> None:
        children = [self.breed(s) for s in range(self.n_species)]
        team = np.stack(children)
        f = self.evaluate(team, [None] * self.n_species, -1)
        for s, child in enumerate(children):
            self._archive(s, child, team, f)
        for s, child in enumerate(children):
            self.populations[s].replace(child, f, self.rng)

    # -- driver ---------------------------------------------------------------

    def run(self, budget: int, **init_kwargs) -> RunTrace:
        """Initialise (if needed) and take turns until the next turn would exceed ``budget``."""
        S, P = self.n_species, self.params.pop_size
        if budget < S * P:
            raise InvalidParamsError(f"budget {budget} below initialisation cost S*P={S * P}")
        self.budget = budget
        if not self.populations:
            self.initialize(**init_kwargs)
        while self.remaining() >= self.turn_cost():
            self.step()
        return self.trace


def run_cga(evaluator: Evaluator, space: GenomeSpace, n_species: int, params: EaParams,
            budget: int, rng: np.random.Generator,
            init_rng: np.random.Generator | None = None) -> RunTrace:
    ga = CooperativeGA(space, evaluator, n_species, params, rng, init_rng)
    return ga.run(budget)


def population_best(populations: Iterable[SpeciesPopulation]) -> list[float]:
    return [float(p.fitness.max()) for p in populations]
