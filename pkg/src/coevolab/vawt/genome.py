"""17-gene VAWT genome, turbine constants and mutation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GENE_NAMES = (
    "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4", "x5", "y5",
    "zx1", "zx2", "zy1", "zy2", "z1", "z2", "r1",
)
N_GENES = len(GENE_NAMES)
PROFILE = slice(0, 10)
OFFSETS = slice(10, 14)  # zx1, zx2, zy1, zy2
HEIGHTS = slice(14, 16)  # z1, z2
TWIST = 16


class GenomeError(ValueError):
    """A VAWT genome violates its invariants."""


@dataclass(frozen=True)
class TurbineConstants:
    """Fixed dimensions (mm, degrees). Coordinates live on a square grid whose
    centre ``(R, R)`` is the plate centre, so profile points satisfy
    ``(x-R)^2 + (y-R)^2 <= R^2`` with ``R = plate_diameter / 2``."""

    plate_diameter: float = 35.0
    plate_thickness: float = 1.0
    shaft_height: float = 70.0
    shaft_thickness: float = 1.0
    shaft_hollow_diameter: float = 1.0
    blade_thickness: float = 1.0
    blades_per_stage: int = 2
    stages: int = 2
    stage_rotation: float = 90.0

    @property
    def plate_radius(self) -> float:
        return self.plate_diameter / 2

    @property
    def centre(self) -> np.ndarray:
        return np.array([self.plate_radius, self.plate_radius])

    @property
    def blade_height(self) -> float:
        """Clear height of one stage between its plates."""
        return (self.shaft_height - (self.stages + 1) * self.plate_thickness) / self.stages

    def stage_bottom(self, stage: int) -> float:
        return self.plate_thickness + stage * (self.blade_height + self.plate_thickness)

    def plate_bottoms(self) -> list[float]:
        return [k * (self.blade_height + self.plate_thickness) for k in range(self.stages + 1)]

    @property
    def offset_limit(self) -> float:
        return self.plate_radius


DEFAULT_CONSTANTS = TurbineConstants()


@dataclass(frozen=True)
class VawtGenome:
    x1: float
    y1: float
    x2: float
    y2: float
    x3: float
    y3: float
    x4: float
    y4: float
    x5: float
    y5: float
    zx1: float
    zx2: float
    zy1: float
    zy2: float
    z1: float
    z2: float
    r1: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in GENE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "VawtGenome":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (N_GENES,):
            raise GenomeError(f"expected {N_GENES} genes, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    @property
    def points(self) -> np.ndarray:
        """The five profile points, shape (5, 2)."""
        return self.to_array()[PROFILE].reshape(5, 2)


SEED_GENOME = VawtGenome(
    x1=15.1, y1=15.1, x2=22.1, y2=15.1, x3=25.7, y3=15.9, x4=32.1, y4=16.1, x5=32.1, y5=27.1,
    zx1=0.0, zx2=0.0, zy1=0.0, zy2=0.0, z1=20.0, z2=27.2, r1=0.0,
)


def gene_bounds(constants: TurbineConstants = DEFAULT_CONSTANTS) -> tuple[np.ndarray, np.ndarray]:
    """Per-gene box bounds; profile points are further restricted to the plate disc."""
    R, H = constants.plate_radius, constants.blade_height
    lo = np.array([0.0] * 10 + [-R] * 4 + [0.0, 0.0, 0.0])
    hi = np.array([2 * R] * 10 + [R] * 4 + [H, H, 180.0])
    return lo, hi


def validate_genome(genome: np.ndarray | VawtGenome,
                    constants: TurbineConstants = DEFAULT_CONSTANTS, tol: float = 1e-9) -> np.ndarray:
    """Return the genome as an array, raising :class:`GenomeError` on violations."""
    g = genome.to_array() if isinstance(genome, VawtGenome) else np.asarray(genome, dtype=np.float64)
    if g.shape != (N_GENES,):
        raise GenomeError(f"expected {N_GENES} genes, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise GenomeError("genes must be finite")
    pts = g[PROFILE].reshape(5, 2) - constants.centre
    r = np.hypot(pts[:, 0], pts[:, 1])
    bad = np.nonzero(r > constants.plate_radius + tol)[0]
    if len(bad):
        i = int(bad[0]) + 1
        raise GenomeError(f"profile point {i} lies {r[bad[0]]:.3f} mm from the plate centre "
                          f"(limit {constants.plate_radius} mm)")
    if not -tol <= g[TWIST] <= 180.0 + tol:
        raise GenomeError(f"r1={g[TWIST]} outside [0, 180] degrees")
    lo, hi = gene_bounds(constants)
    for k in (*range(10, 16),):
        if not lo[k] - tol <= g[k] <= hi[k] + tol:
            raise GenomeError(f"{GENE_NAMES[k]}={g[k]} outside [{lo[k]}, {hi[k]}]")
    return g


def clamp_genomes(genomes: np.ndarray, constants: TurbineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Clamp to validity: profile points radially onto the plate disc, other genes to their box."""
    g = np.array(genomes, dtype=np.float64)
    lo, hi = gene_bounds(constants)
    pts = g[..., PROFILE].reshape(g.shape[:-1] + (5, 2)) - constants.centre
    r = np.hypot(pts[..., 0], pts[..., 1])
    factor = np.where(r > constants.plate_radius, constants.plate_radius / np.maximum(r, 1e-300), 1.0)
    g[..., PROFILE] = (pts * factor[..., None] + constants.centre).reshape(g.shape[:-1] + (10,))
    g[..., 10:] = np.clip(g[..., 10:], lo[10:], hi[10:])
    return g


def mutation_steps(rng: np.random.Generator, rate: float, sigma_coord: float, sigma_twist: float,
                   shape: tuple[int, ...] = ()) -> np.ndarray:
    """Unclamped Gaussian steps; each gene moves with probability ``rate``."""
    full = shape + (N_GENES,)
    mask = rng.random(full) < rate
    sigma = np.full(N_GENES, sigma_coord)
    sigma[TWIST] = sigma_twist
    return np.where(mask, rng.normal(0.0, 1.0, full) * sigma, 0.0)


def mutate_vawt(genome: np.ndarray, rate: float, sigma_coord: float, sigma_twist: float,
                rng: np.random.Generator, constants: TurbineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Gaussian-perturb each gene with probability ``rate``, then clamp. Input is not modified."""
    g = np.asarray(genome, dtype=np.float64)
    steps = mutation_steps(rng, rate, sigma_coord, sigma_twist, g.shape[:-1])
    return clamp_genomes(g + steps, constants)


# --------------------------------------------------------------------- files


def read_genomes(path: str | Path) -> np.ndarray:
    """Genome CSV: header of the 17 gene names (any column order), one genome per row."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise GenomeError(f"{path}: empty genome file")
        header = [h.strip() for h in reader.fieldnames]
        missing = [n for n in GENE_NAMES if n not in header]
        if missing:
            raise GenomeError(f"{path}: missing gene columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}
            try:
                rows.append([float(row[n]) for n in GENE_NAMES])
            except (TypeError, ValueError):
                bad = next(n for n in GENE_NAMES if not _is_float(row.get(n)))
                raise GenomeError(f"{path}: line {lineno}: field {bad!r} is not a number") from None
    if not rows:
        raise GenomeError(f"{path}: no genomes")
    return np.array(rows)


def write_genomes(path: str | Path, genomes: Iterable[np.ndarray], extra: dict[str, Sequence] | None = None) -> None:
    genomes = [np.asarray(g, dtype=np.float64) for g in genomes]
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(extra) + list(GENE_NAMES))
        for i, g in enumerate(genomes):
            w.writerow([extra[k][i] for k in extra] + [repr(float(v)) for v in g])


def _is_float(v) -> bool:
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False


__all__ = [
    "GENE_NAMES", "N_GENES", "GenomeError", "TurbineConstants", "DEFAULT_CONSTANTS", "VawtGenome",
    "SEED_GENOME", "gene_bounds", "validate_genome", "clamp_genomes", "mutation_steps", "mutate_vawt",
    "read_genomes", "write_genomes",
]
