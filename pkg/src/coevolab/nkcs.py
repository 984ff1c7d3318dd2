"""NKCS coevolutionary fitness landscapes.

Each of ``S`` species owns a binary genome of ``N`` genes. The fitness
contribution of gene ``g`` in species ``s`` is looked up from a random table
indexed by a *context*: the gene's own allele, the alleles of its ``K``
intra-linked genes and the alleles of ``C`` linked genes in every neighbouring
species. A species' fitness is the mean contribution over its genes; a team's
fitness is the sum over species.

Tables are never stored. Entries come from a 64-bit mixing hash of
``(seed, species, gene, context)`` mapped onto ``[0, 1)``, which behaves like
the uniform random table of the classic model while using O(1) memory. A
:class:`TableOracle` with explicit tables is available for small models and
golden fixtures.

Context bit order (most significant first): own allele, intra-linked alleles by
ascending gene index, then for each neighbour species in ascending species
index its ``C`` linked alleles by ascending gene index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from numba import njit

from .config import ConfigError, get_int, get_str

__all__ = [
    "NkcsError",
    "DimensionError",
    "NkcsConfig",
    "NkcsModel",
    "HashOracle",
    "TableOracle",
    "ConstantOracle",
    "generate_nkcs",
    "species_fitness",
    "team_fitness",
    "topology_neighbors",
    "materialize",
    "dump_tables",
]

TOPOLOGIES = ("chain", "ring", "complete", "none")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class NkcsError(ValueError):
    """Invalid NKCS configuration."""


class DimensionError(ValueError):
    """A team or genome does not match the model dimensions."""


def topology_neighbors(n_species: int, topology: str) -> tuple[tuple[int, ...], ...]:
    """Sorted neighbour species for every species (0-based)."""
    if topology not in TOPOLOGIES:
        raise NkcsError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
    nbrs: list[set[int]] = [set() for _ in range(n_species)]
    if topology in ("chain", "ring"):
        for s in range(n_species - 1):
            nbrs[s].add(s + 1)
            nbrs[s + 1].add(s)
        if topology == "ring" and n_species > 2:
            nbrs[0].add(n_species - 1)
            nbrs[n_species - 1].add(0)
    elif topology == "complete":
        for s in range(n_species):
            nbrs[s] = set(range(n_species)) - {s}
    return tuple(tuple(sorted(n)) for n in nbrs)


@dataclass(frozen=True)
class NkcsConfig:
    n_genes: int = 20
    k_intra: int = 2
    c_inter: int = 2
    n_species: int = 6
    topology: str = "chain"
    seed: int = 0

    def validate(self) -> None:
        if self.n_genes < 1:
            raise NkcsError(f"N must be >= 1, got {self.n_genes}")
        if self.n_species < 1:
            raise NkcsError(f"S must be >= 1, got {self.n_species}")
        if not 0 <= self.k_intra <= self.n_genes - 1:
            raise NkcsError(f"K must lie in [0, N-1]={self.n_genes - 1}, got {self.k_intra}")
        if not 0 <= self.c_inter <= self.n_genes:
            raise NkcsError(f"C must lie in [0, N]={self.n_genes}, got {self.c_inter}")
        topology_neighbors(self.n_species, self.topology)

    @property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        return topology_neighbors(self.n_species, self.topology)

    def context_width(self, species: int) -> int:
        """Bits per context for every gene of ``species``: K + X*C + 1."""
        return self.k_intra + len(self.neighbors[species]) * self.c_inter + 1

    def to_mapping(self) -> dict[str, object]:
        return {
            "n": self.n_genes,
            "k": self.k_intra,
            "c": self.c_inter,
            "s": self.n_species,
            "topology": self.topology,
            "seed": self.seed,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "NkcsConfig":
        base = cls()
        try:
            return cls(
                n_genes=get_int(values, "n", base.n_genes),
                k_intra=get_int(values, "k", base.k_intra),
                c_inter=get_int(values, "c", base.c_inter),
                n_species=get_int(values, "s", base.n_species),
                topology=get_str(values, "topology", base.topology),
                seed=get_int(values, "seed", base.seed),
            )
        except ConfigError as exc:
            raise NkcsError(str(exc)) from None


# --------------------------------------------------------------------- oracles


class FitnessOracle(Protocol):
    def __call__(self, species: np.ndarray, genes: np.ndarray,
                 words: np.ndarray, n_words: np.ndarray) -> np.ndarray: ...


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    z = np.array(z, dtype=np.uint64, ndmin=1)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _mix64_scalar(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _hash_contributions(flat, index, widths, keys, out):
    """Numba twin of ``HashOracle`` applied to gathered contexts.

    flat: (B, S*N) uint8, index: (S, N, W) with S*N meaning a zero pad bit,
    keys: (S, N) uint64, out: (B, S, N) float64.
    """
    B = flat.shape[0]
    S, N, W = index.shape
    pad = S * N
    golden = np.uint64(0x9E3779B97F4A7C15)
    for b in range(B):
        for s in range(S):
            w = widths[s]
            n_words = (w + 63) // 64
            for g in range(N):
                h = keys[s, g]
                for i in range(n_words):
                    hi = W - 64 * i
                    lo = max(0, hi - 64)
                    word = np.uint64(0)
                    for p in range(lo, hi):
                        j = index[s, g, p]
                        bit = np.uint64(0) if j == pad else np.uint64(flat[b, j])
                        word = (word << np.uint64(1)) | bit
                    wm = _mix64_scalar(word + golden * np.uint64(i + 1))
                    h = _mix64_scalar(h ^ wm)
                out[b, s, g] = np.float64(h >> np.uint64(11)) * (2.0 ** -53)


class HashOracle:
    """Lazy uniform table: hash of (seed, species, gene, context) -> [0, 1)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._salt = mix64(np.uint64((int(seed) + int(_GOLDEN)) & _MASK64))[0]

    def keys(self, species: np.ndarray, genes: np.ndarray) -> np.ndarray:
        sg = (np.asarray(species, dtype=np.uint64) << np.uint64(32)) | np.asarray(genes, dtype=np.uint64)
        return mix64(sg ^ self._salt)

    def __call__(self, species, genes, words, n_words):
        h = self.keys(species, genes)
        words = np.asarray(words, dtype=np.uint64)
        for i in range(words.shape[-1]):
            w = mix64(words[..., i] + np.uint64((int(_GOLDEN) * (i + 1)) & _MASK64))
            stepped = mix64(h ^ w)
            h = np.where(i < n_words, stepped, h)
        return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


class TableOracle:
    """Explicit per-(species, gene) fitness tables.

    ``tables[s]`` has shape ``(N, 2**width_s)``; row index is the context read
    as a big-endian bit pattern.
    """

    def __init__(self, tables: Sequence[np.ndarray]):
        self.tables = [np.asarray(t, dtype=np.float64) for t in tables]
        sizes = [t.shape[1] for t in self.tables]
        self._offsets = np.concatenate([[0], np.cumsum([t.size for t in self.tables])[:-1]]).astype(np.int64)
        self._row = np.array(sizes, dtype=np.int64)
        self._flat = np.concatenate([t.ravel() for t in self.tables])

    def __call__(self, species, genes, words, n_words):
        species = np.asarray(species, dtype=np.int64)
        if np.any(np.asarray(n_words) > 1):
            raise NkcsError("table oracle supports contexts of at most 64 bits")
        ctx = np.asarray(words, dtype=np.uint64)[..., 0].astype(np.int64)
        idx = self._offsets[species] + np.asarray(genes, dtype=np.int64) * self._row[species] + ctx
        return self._flat[idx]


class ConstantOracle:
    """Every table entry equals ``value`` (test stub)."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, species, genes, words, n_words):
        return np.full(np.broadcast(species, genes).shape, self.value)


# ----------------------------------------------------------------------- model


class NkcsModel:
    """Immutable NKCS instance: links plus a table oracle.

    ``intra_links`` has shape ``(S, N, K)``. ``inter_links[s]`` maps each
    neighbour species of ``s`` (ascending) to an ``(N, C)`` array of linked gene
    indices. Teams are ``(S, N)`` arrays of 0/1 alleles; batches of teams are
    ``(B, S, N)``.
    """

    def __init__(self, config: NkcsConfig, intra_links: np.ndarray,
                 inter_links: Sequence[Mapping[int, np.ndarray]],
                 oracle: FitnessOracle | None = None):
        config.validate()
        S, N, K, C = config.n_species, config.n_genes, config.k_intra, config.c_inter
        intra = np.asarray(intra_links, dtype=np.int64).reshape(S, N, K)
        nbrs = config.neighbors
        inter: list[dict[int, np.ndarray]] = []
        for s in range(S):
            links = {int(t): np.asarray(v, dtype=np.int64).reshape(N, C) for t, v in inter_links[s].items()}
            if sorted(links) != list(nbrs[s]):
                raise NkcsError(f"species {s}: inter links {sorted(links)} do not match neighbours {list(nbrs[s])}")
            inter.append(links)
        for s in range(S):
            for g in range(N):
                row = intra[s, g]
                if np.any(row == g) or len(set(row.tolist())) != K or np.any((row < 0) | (row >= N)):
                    raise NkcsError(f"species {s} gene {g}: invalid intra links {row.tolist()}")
        self.config = config
        self.intra_links = intra
        self.inter_links = tuple(inter)
        self.oracle: FitnessOracle = oracle if oracle is not None else HashOracle(config.seed)
        self.widths = np.array([config.context_width(s) for s in range(S)], dtype=np.int64)
        self._build_index()

    def _build_index(self) -> None:
        S, N = self.config.n_species, self.config.n_genes
        W = int(self.widths.max())
        pad = S * N  # points at a constant zero allele
        index = np.full((S, N, W), pad, dtype=np.int64)
        for s in range(S):
            w = int(self.widths[s])
            for g in range(N):
                cols = [s * N + g]
                cols += [s * N + int(j) for j in sorted(self.intra_links[s, g])]
                for t in sorted(self.inter_links[s]):
                    cols += [t * N + int(j) for j in sorted(self.inter_links[s][t][g])]
                index[s, g, W - w:] = cols
        self._index = index
        self._n_words = (self.widths + 63) // 64
        n_total = int(self._n_words.max())
        # word i holds bits [W-64(i+1), W-64i) counted from the low end
        self._word_slices = []
        for i in range(n_total):
            hi = W - 64 * i
            lo = max(0, hi - 64)
            shifts = np.arange(hi - lo - 1, -1, -1, dtype=np.uint64)
            self._word_slices.append((lo, hi, shifts))
        self._species_grid = np.repeat(np.arange(S, dtype=np.int64)[:, None], N, axis=1)
        self._gene_grid = np.repeat(np.arange(N, dtype=np.int64)[None, :], S, axis=0)
        self._n_words_grid = np.repeat(self._n_words[:, None], N, axis=1)
        self._hash_keys = None
        if type(self.oracle) is HashOracle:
            self._hash_keys = self.oracle.keys(self._species_grid, self._gene_grid)

    @property
    def n_species(self) -> int:
        return self.config.n_species

    @property
    def n_genes(self) -> int:
        return self.config.n_genes

    def context_bits(self, team: np.ndarray) -> list[list[np.ndarray]]:
        """Per species, per gene context bit vectors (length = width)."""
        team = self._check_team(team)
        flat = np.append(team.reshape(-1), 0)
        W = self._index.shape[-1]
        out = []
        for s in range(self.n_species):
            w = int(self.widths[s])
            out.append([flat[self._index[s, g, W - w:]] for g in range(self.n_genes)])
        return out

    def _check_team(self, team) -> np.ndarray:
        arr = np.asarray(team)
        S, N = self.n_species, self.n_genes
        if arr.shape[-2:] != (S, N):
            raise DimensionError(f"team shape {arr.shape} does not end in (S, N)=({S}, {N})")
        if arr.dtype != np.uint8:
            if np.any((arr != 0) & (arr != 1)):
                raise DimensionError("team alleles must be 0 or 1")
            arr = arr.astype(np.uint8)
        return arr

    def contributions(self, teams: np.ndarray) -> np.ndarray:
        """Gene fitness contributions, shape ``(..., S, N)``."""
        teams = self._check_team(teams)
        lead = teams.shape[:-2]
        if self._hash_keys is not None:
            flat2 = np.ascontiguousarray(teams).reshape(-1, self.n_species * self.n_genes)
            out = np.empty((flat2.shape[0], self.n_species, self.n_genes))
            _hash_contributions(flat2, self._index, self.widths, self._hash_keys, out)
            return out.reshape(lead + (self.n_species, self.n_genes))
        return self.reference_contributions(teams)

    def reference_contributions(self, teams: np.ndarray) -> np.ndarray:
        """Vectorised numpy evaluation through ``self.oracle`` (no fast path)."""
        teams = self._check_team(teams)
        lead = teams.shape[:-2]
        flat = teams.reshape(lead + (-1,))
        flat = np.concatenate([flat, np.zeros(lead + (1,), dtype=np.uint8)], axis=-1)
        bits = flat[..., self._index].astype(np.uint64)  # (..., S, N, W)
        words = np.stack([(bits[..., lo:hi] << shifts).sum(axis=-1, dtype=np.uint64)
                          for lo, hi, shifts in self._word_slices], axis=-1)
        return self.oracle(self._species_grid, self._gene_grid, words, self._n_words_grid)

    def species_fitness_all(self, teams: np.ndarray) -> np.ndarray:
        """Fitness of every species, shape ``(..., S)``."""
        return self.contributions(teams).mean(axis=-1)

    def species_fitness(self, species: int, team: np.ndarray) -> float:
        if not 0 <= species < self.n_species:
            raise DimensionError(f"species {species} out of range [0, {self.n_species})")
        return float(self.species_fitness_all(team)[..., species])

    def team_fitness(self, team: np.ndarray) -> float | np.ndarray:
        if (self._hash_keys is not None and isinstance(team, np.ndarray) and team.dtype == np.uint8
                and team.shape == (self.n_species, self.n_genes)):
            out = np.empty((1, self.n_species, self.n_genes))
            _hash_contributions(team.reshape(1, -1), self._index, self.widths, self._hash_keys, out)
            return float(out[0].mean(axis=-1).sum())
        fit = self.species_fitness_all(team).sum(axis=-1)
        return float(fit) if np.ndim(fit) == 0 else fit

    __call__ = team_fitness

    def with_oracle(self, oracle: FitnessOracle) -> "NkcsModel":
        return NkcsModel(self.config, self.intra_links, self.inter_links, oracle)


def generate_nkcs(config: NkcsConfig) -> NkcsModel:
    """Draw links from ``default_rng(seed)`` and attach the hash oracle.

    Draw order: for each species, for each gene, the K intra links (self
    excluded) and then C links per neighbour species in ascending order, all
    without replacement.
    """
    config.validate()
    S, N, K, C = config.n_species, config.n_genes, config.k_intra, config.c_inter
    rng = np.random.default_rng(int(config.seed) & _MASK64)
    nbrs = config.neighbors
    intra = np.zeros((S, N, K), dtype=np.int64)
    inter: list[dict[int, np.ndarray]] = [{t: np.zeros((N, C), dtype=np.int64) for t in nbrs[s]} for s in range(S)]
    for s in range(S):
        for g in range(N):
            others = np.delete(np.arange(N), g)
            intra[s, g] = np.sort(rng.choice(others, size=K, replace=False))
            for t in nbrs[s]:
                inter[s][t][g] = np.sort(rng.choice(N, size=C, replace=False))
    return NkcsModel(config, intra, inter, HashOracle(config.seed))


def species_fitness(model: NkcsModel, species: int, team: np.ndarray) -> float:
    return model.species_fitness(species, team)


def team_fitness(model: NkcsModel, team: np.ndarray) -> float:
    return model.team_fitness(team)


def materialize(model: NkcsModel, max_width: int = 20) -> NkcsModel:
    """Copy of ``model`` whose oracle holds explicit tables read from the original."""
    if int(model.widths.max()) > max_width:
        raise NkcsError(f"context width {int(model.widths.max())} exceeds materialization limit {max_width}")
    tables = []
    for s in range(model.n_species):
        rows = 1 << int(model.widths[s])
        ctx = np.arange(rows, dtype=np.uint64)
        genes = np.repeat(np.arange(model.n_genes)[:, None], rows, axis=1)
        sp = np.full_like(genes, s)
        words = np.broadcast_to(ctx, genes.shape)[..., None]
        tables.append(model.oracle(sp, genes, words, np.ones_like(genes)))
    return model.with_oracle(TableOracle(tables))


def dump_tables(model: NkcsModel, destination: str | Path, max_width: int = 12) -> int:
    """Write every table row as CSV; returns the number of rows written."""
    if int(model.widths.max()) > max_width:
        raise NkcsError(f"context width {int(model.widths.max())} too large to dump (limit {max_width})")
    table_model = materialize(model, max_width)
    rows = 0
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["species", "gene", "context_genes", "row", "context_bits", "fitness"])
        for s in range(model.n_species):
            table = table_model.oracle.tables[s]
            w = int(model.widths[s])
            for g in range(model.n_genes):
                names = [f"s{s}n{g}"] + [f"s{s}n{int(j)}" for j in model.intra_links[s, g]]
                for t in sorted(model.inter_links[s]):
                    names += [f"s{t}n{int(j)}" for j in model.inter_links[s][t][g]]
                for r in range(1 << w):
                    writer.writerow([s, g, " ".join(names), r, format(r, f"0{w}b"), repr(float(table[g, r]))])
                    rows += 1
    return rows


def config_with_seed(config: NkcsConfig, seed: int) -> NkcsConfig:
    return replace(config, seed=seed)
