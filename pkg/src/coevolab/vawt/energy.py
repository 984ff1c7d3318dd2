"""Angular kinetic energy fitness."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


class MeasurementError(ValueError):
    pass


class MissingSpeciesError(MeasurementError):
    pass


@dataclass(frozen=True)
class Measurement:
    """One turbine reading in SI units (kg, m)."""

    species: int
    individual: str
    rpm: float
    mass: float
    radius: float

    def __post_init__(self):
        if not self.rpm >= 0:
            raise MeasurementError(f"rpm must be >= 0, got {self.rpm}")
        if not self.mass > 0:
            raise MeasurementError(f"mass must be > 0, got {self.mass}")
        if not self.radius > 0:
            raise MeasurementError(f"radius must be > 0, got {self.radius}")

    @classmethod
    def from_lab_units(cls, species: int, individual: str, rpm: float, mass_g: float,
                       radius_mm: float = 17.5) -> "Measurement":
        return cls(species, individual, rpm, mass_g / 1000.0, radius_mm / 1000.0)


def angular_velocity(rpm: float) -> float:
    return rpm / 60.0 * 2.0 * math.pi


def moment_of_inertia(mass: float, radius: float) -> float:
    """Solid disc approximation, I = m r^2 / 2."""
    return 0.5 * mass * radius * radius


def kinetic_energy(m: Measurement) -> float:
    """KE = I w^2 / 2 in joules."""
    w = angular_velocity(m.rpm)
    return 0.5 * moment_of_inertia(m.mass, m.radius) * w * w


def array_fitness(measurements: Iterable[Measurement], n_species: int | None = None) -> float:
    """Total kinetic energy of the array; one measurement per species required."""
    ms = list(measurements)
    if n_species is None:
        n_species = len(ms)
    seen = sorted(m.species for m in ms)
    expected = list(range(n_species))
    if seen != expected:
        missing = sorted(set(expected) - set(seen))
        extra = sorted(s for s in set(seen) if s not in expected or seen.count(s) > 1)
        detail = []
        if missing:
            detail.append(f"missing species {missing}")
        if extra:
            detail.append(f"unexpected or duplicate species {extra}")
        raise MissingSpeciesError("; ".join(detail) or "species mismatch")
    return float(sum(kinetic_energy(m) for m in sorted(ms, key=lambda m: m.species)))
