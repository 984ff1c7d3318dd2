"""Vertical-axis wind turbine arrays: genome, geometry, STL, kinetic energy and evaluation."""

from .energy import Measurement, MeasurementError, MissingSpeciesError, array_fitness, kinetic_energy
from .genome import (DEFAULT_CONSTANTS, GENE_NAMES, SEED_GENOME, GenomeError, TurbineConstants, VawtGenome,
                     mutate_vawt, read_genomes, validate_genome, write_genomes)
from .geometry import GeometryError, TurbineMesh, blade_profile, build_turbine, fit_to_plate, z_offset
from .loop import VawtLoopConfig, VawtLoopResult, VawtSpace, run_vawt_loop
from .protocol import FileEvaluator, MockEvaluator, MockResponder, parse_measurements
from .stl import read_stl, write_stl

__all__ = [
    "Measurement", "MeasurementError", "MissingSpeciesError", "array_fitness", "kinetic_energy",
    "DEFAULT_CONSTANTS", "GENE_NAMES", "SEED_GENOME", "GenomeError", "TurbineConstants", "VawtGenome",
    "mutate_vawt", "read_genomes", "validate_genome", "write_genomes",
    "GeometryError", "TurbineMesh", "blade_profile", "build_turbine", "fit_to_plate", "z_offset",
    "VawtLoopConfig", "VawtLoopResult", "VawtSpace", "run_vawt_loop",
    "FileEvaluator", "MockEvaluator", "MockResponder", "parse_measurements",
    "read_stl", "write_stl",
]
