"""File-based external evaluation of turbine arrays.

Each evaluation is a *round directory* inside a workspace::

    round_0007/
        manifest.csv        species,individual,stl
        genomes.csv         individual + the 17 genes, one row per species
        species_0.stl ...   one binary STL per species
        measurements.csv    written by the experimenter (or a responder)

The measurements file has header ``species,individual,rpm,mass_g,radius_mm``;
a blank radius means 17.5 mm. Writers should create it atomically (write a
temporary file, then rename); the reader also waits for its size to settle.
"""

from __future__ import annotations

import csv
import hashlib
import math
import threading
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .energy import Measurement, MeasurementError, array_fitness
from .genome import DEFAULT_CONSTANTS, TurbineConstants, write_genomes
from .geometry import blade_profile, build_turbine
from .stl import export_stl

MEASUREMENT_FIELDS = ("species", "individual", "rpm", "mass_g", "radius_mm")
MANIFEST_FIELDS = ("species", "individual", "stl")
DEFAULT_RADIUS_MM = 17.5
PLA_DENSITY = 1.25  # g/cm^3


class ProtocolError(RuntimeError):
    pass


class MeasurementParseError(MeasurementError):
    pass


class MeasurementTimeout(ProtocolError, TimeoutError):
    pass


def genome_id(genome: np.ndarray) -> str:
    """Short content hash, stable across runs and platforms."""
    return hashlib.sha1(np.ascontiguousarray(genome, dtype="<f8").tobytes()).hexdigest()[:12]


# ------------------------------------------------------------------ writing


def write_round(directory: str | Path, team: np.ndarray, resolution: int = 24,
                constants: TurbineConstants = DEFAULT_CONSTANTS) -> list[str]:
    """Compile each species' genome to STL and write the manifest; returns individual ids."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ids = [genome_id(g) for g in team]
    for s, g in enumerate(team):
        export_stl(build_turbine(g, resolution, constants), d / f"species_{s}.stl",
                   header=f"coevolab species {s} {ids[s]}")
    write_genomes(d / "genomes.csv", team, extra={"individual": ids})
    with open(d / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for s, ident in enumerate(ids):
            w.writerow([s, ident, f"species_{s}.stl"])
    return ids


def read_manifest(directory: str | Path) -> list[tuple[int, str, str]]:
    with open(Path(directory) / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["species"]), r["individual"], r["stl"]) for r in rows]


def write_measurements(path: str | Path, measurements: Sequence[Measurement]) -> None:
    """Atomically write a measurements file in lab units."""
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_FIELDS)
        for m in measurements:
            w.writerow([m.species, m.individual, repr(m.rpm), repr(m.mass * 1000.0), repr(m.radius * 1000.0)])
    tmp.replace(path)


# ------------------------------------------------------------------ reading


def parse_measurements(path: str | Path) -> list[Measurement]:
    """Parse a measurements CSV; errors name the offending line and field."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MeasurementParseError(f"{path}: line 1: missing header") from None
        missing = [f for f in MEASUREMENT_FIELDS if f not in header and f != "radius_mm"]
        if missing:
            raise MeasurementParseError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in MEASUREMENT_FIELDS if name in header}
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue

            def field(name, convert, default=None):
                idx = col.get(name)
                raw = row[idx].strip() if idx is not None and idx < len(row) else ""
                if raw == "":
                    if default is not None:
                        return default
                    raise MeasurementParseError(f"{path}: line {lineno}: field {name!r} is empty")
                try:
                    value = convert(raw)
                except ValueError:
                    raise MeasurementParseError(
                        f"{path}: line {lineno}: field {name!r}: cannot parse {raw!r}") from None
                if isinstance(value, float) and not math.isfinite(value):
                    raise MeasurementParseError(f"{path}: line {lineno}: field {name!r} is not finite")
                return value

            species = field("species", int)
            ident = field("individual", str)
            rpm = field("rpm", float)
            mass_g = field("mass_g", float)
            radius_mm = field("radius_mm", float, DEFAULT_RADIUS_MM)
            try:
                out.append(Measurement.from_lab_units(species, ident, rpm, mass_g, radius_mm))
            except MeasurementError as exc:
                raise MeasurementParseError(f"{path}: line {lineno}: {exc}") from None
    return out


def wait_for_file(path: str | Path, timeout: float | None = None, poll: float = 0.5) -> Path:
    """Block until ``path`` exists and its size is unchanged over one poll interval."""
    path = Path(path)
    deadline = None if timeout is None else time.monotonic() + timeout
    last = -1
    while True:
        size = path.stat().st_size if path.exists() else -1
        if size >= 0 and size == last:
            return path
        last = size
        if deadline is not None and time.monotonic() >= deadline:
            raise MeasurementTimeout(f"no complete measurements at {path} after {timeout} s")
        time.sleep(poll)


# ------------------------------------------------------------------ evaluators


class FileEvaluator:
    """Team evaluator that hands each array to an external measurer through files."""

    def __init__(self, workspace: str | Path, n_species: int = 6, timeout: float | None = None,
                 poll: float = 0.5, resolution: int = 24, constants: TurbineConstants = DEFAULT_CONSTANTS):
        self.workspace = Path(workspace)
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.n_species = n_species
        self.timeout = timeout
        self.poll = poll
        self.resolution = resolution
        self.constants = constants
        self.rounds = 0
        self.history: list[list[Measurement]] = []

    def round_dir(self, k: int) -> Path:
        return self.workspace / f"round_{k:04d}"

    def __call__(self, team: np.ndarray) -> float:
        team = np.asarray(team, dtype=np.float64)
        if len(team) != self.n_species:
            raise ProtocolError(f"team has {len(team)} genomes, expected {self.n_species}")
        d = self.round_dir(self.rounds)
        self.rounds += 1
        write_round(d, team, self.resolution, self.constants)
        path = wait_for_file(d / "measurements.csv", self.timeout, self.poll)
        ms = parse_measurements(path)
        self.history.append(ms)
        return array_fitness(ms, self.n_species)


def mock_rpm(genome: np.ndarray, mass_g: float, constants: TurbineConstants = DEFAULT_CONSTANTS) -> float:
    """Deterministic toy rpm: deep, wide cups spin faster; mass and twist slow them."""
    R = constants.plate_radius
    line = blade_profile(genome, 33) - constants.centre
    reach = float(np.hypot(line[:, 0], line[:, 1]).max()) / R
    chord = line[-1] - line[0]
    span = float(np.hypot(*chord))
    if span > 1e-9:
        normal = np.array([-chord[1], chord[0]]) / span
        depth = float(np.abs((line - line[0]) @ normal).max()) / R
    else:
        depth = 0.0
    twist = math.radians(float(genome[16]))
    score = reach * (0.5 + min(depth, 1.0)) * (1.0 + 0.15 * math.sin(twist))
    return 600.0 * score / (1.0 + mass_g / 25.0)


class MockEvaluator:
    """Stand-in for the wind tunnel: mass from mesh volume, rpm from :func:`mock_rpm`."""

    def __init__(self, n_species: int = 6, resolution: int = 8,
                 constants: TurbineConstants = DEFAULT_CONSTANTS, exposure: Sequence[float] | None = None):
        self.n_species = n_species
        self.resolution = resolution
        self.constants = constants
        self.exposure = np.ones(n_species) if exposure is None else np.asarray(exposure, dtype=np.float64)
        self._mass: dict[str, float] = {}

    def mass_g(self, genome: np.ndarray) -> float:
        key = genome_id(genome)
        if key not in self._mass:
            mesh = build_turbine(genome, self.resolution, self.constants, segments=32)
            self._mass[key] = mesh.volume() / 1000.0 * PLA_DENSITY
        return self._mass[key]

    def measure(self, team: np.ndarray) -> list[Measurement]:
        out = []
        for s, g in enumerate(np.asarray(team, dtype=np.float64)):
            m = self.mass_g(g)
            rpm = mock_rpm(g, m, self.constants) * float(self.exposure[s])
            out.append(Measurement.from_lab_units(s, genome_id(g), rpm, m, self.constants.plate_radius))
        return out

    def __call__(self, team: np.ndarray) -> float:
        return array_fitness(self.measure(team), self.n_species)


def respond(directory: str | Path, measure: Callable[[np.ndarray], list[Measurement]]) -> None:
    """Answer one round directory using ``measure`` on its genomes."""
    from .genome import read_genomes

    d = Path(directory)
    team = read_genomes(d / "genomes.csv")
    write_measurements(d / "measurements.csv", measure(team))


class MockResponder(threading.Thread):
    """Background thread answering every unanswered round in a workspace."""

    def __init__(self, workspace: str | Path, mock: MockEvaluator, poll: float = 0.01):
        super().__init__(daemon=True)
        self.workspace = Path(workspace)
        self.mock = mock
        self.poll = poll
        self._stop_event = threading.Event()
        self.answered = 0

    def run(self) -> None:
        while not self._stop_event.is_set():
            for d in sorted(self.workspace.glob("round_*")):
                if (d / "manifest.csv").exists() and not (d / "measurements.csv").exists():
                    respond(d, self.mock.measure)
                    self.answered += 1
            self._stop_event.wait(self.poll)

    def stop(self) -> None:
        self._stop_event.set()
        self.join()
