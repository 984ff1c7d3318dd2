"""Blade splines and watertight turbine meshes.

Meshes are returned in turbine-centred coordinates: the shaft axis is the
z-axis and the bottom face of the lowest plate sits at z=0. Genome
coordinates live on the 35 mm grid and are shifted by the plate centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .genome import (DEFAULT_CONSTANTS, OFFSETS, PROFILE, TWIST, GenomeError, TurbineConstants,
                     VawtGenome, validate_genome)


class GeometryError(ValueError):
    """The genome cannot be compiled into a valid turbine."""


def _as_array(genome) -> np.ndarray:
    if isinstance(genome, VawtGenome):
        return genome.to_array()
    return np.asarray(genome, dtype=np.float64)


# ------------------------------------------------------------------ curves


def quadratic_bezier(p0, p1, p2, t) -> np.ndarray:
    """B(t) = (1-t)^2 p0 + 2(1-t)t p1 + t^2 p2, broadcast over ``t``."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    s = 1.0 - t
    return s * s * np.asarray(p0) + 2.0 * s * t * np.asarray(p1) + t * t * np.asarray(p2)


def cubic_bezier(p0, p1, p2, p3, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)[..., None]
    s = 1.0 - t
    return (s ** 3 * np.asarray(p0) + 3.0 * s * s * t * np.asarray(p1)
            + 3.0 * s * t * t * np.asarray(p2) + t ** 3 * np.asarray(p3))


def _cubic_scalar(a, b, c, d, t):
    s = 1.0 - t
    return s ** 3 * a + 3.0 * s * s * t * b + 3.0 * s * t * t * c + t ** 3 * d


def blade_profile(genome, samples: int = 33) -> np.ndarray:
    """Sample both quadratic segments of the blade centreline in grid coordinates.

    Returns ``2*samples - 1`` points; P3 appears once, shared by the segments.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    pts = _as_array(genome)[PROFILE].reshape(5, 2)
    t = np.linspace(0.0, 1.0, samples)
    first = quadratic_bezier(pts[0], pts[1], pts[2], t)
    second = quadratic_bezier(pts[2], pts[3], pts[4], t[1:])
    out = np.concatenate([first, second])
    # exact endpoints regardless of rounding in the Bernstein sums
    out[0], out[samples - 1], out[-1] = pts[0], pts[2], pts[4]
    return out


def _offset_batch(genomes: np.ndarray, z: np.ndarray, H: float,
                  iterations: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Offsets for ``(B, 17)`` genomes at height fractions ``z`` (L,), each (B, L)."""
    g = np.atleast_2d(genomes)
    zx1, zx2, zy1, zy2 = (g[:, k, None] for k in range(10, 14))
    z1, z2 = g[:, 14, None], g[:, 15, None]
    target = np.broadcast_to(np.clip(z, 0.0, 1.0) * H, (len(g), len(z)))

    grid = np.linspace(0.0, 1.0, 257)
    heights = _cubic_scalar(0.0, z1, z2, H, grid[None, :])
    # first grid node at or above the target brackets the smallest root
    reached = heights[:, None, :] >= target[:, :, None] - 1e-12
    hi_idx = np.argmax(reached, axis=2)
    lo = grid[np.maximum(hi_idx - 1, 0)]
    hi = grid[hi_idx]
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = _cubic_scalar(0.0, z1, z2, H, mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    t = np.where(target <= 0.0, 0.0, np.where(target >= H, 1.0, hi))
    return _cubic_scalar(0.0, zx1, zx2, 0.0, t), _cubic_scalar(0.0, zy1, zy2, 0.0, t)


def z_offset(genome, z, constants: TurbineConstants = DEFAULT_CONSTANTS) -> tuple:
    """Horizontal offset ``(dx, dy)`` of the profile at height fraction ``z``.

    The height curve has controls ``0, z1, z2, H`` and the offset curves have
    controls ``0, zx1, zx2, 0`` (and ``0, zy1, zy2, 0``), sharing the curve
    parameter. The parameter at height ``z*H`` is the smallest root, found by
    bisection. Scalar input gives scalar output.
    """
    zf = np.asarray(z, dtype=np.float64)
    dx, dy = _offset_batch(_as_array(genome)[None, :], np.atleast_1d(zf), constants.blade_height)
    if zf.ndim == 0:
        return float(dx[0, 0]), float(dy[0, 0])
    return dx[0].reshape(zf.shape), dy[0].reshape(zf.shape)


# ------------------------------------------------------------------ meshes


@dataclass
class Shell:
    """One closed triangle surface."""

    name: str
    vertices: np.ndarray
    faces: np.ndarray

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]


@dataclass
class TurbineMesh:
    shells: list[Shell] = field(default_factory=list)

    @property
    def triangles(self) -> np.ndarray:
        if not self.shells:
            return np.zeros((0, 3, 3))
        return np.concatenate([s.triangles for s in self.shells])

    def __len__(self) -> int:
        return sum(len(s.faces) for s in self.shells)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.concatenate([s.vertices for s in self.shells])
        return v.min(axis=0), v.max(axis=0)

    def volume(self) -> float:
        """Sum of shell volumes in mm^3 (overlapping shells count twice)."""
        return float(sum(volume(s) for s in self.shells))


def volume(shell: Shell) -> float:
    tri = shell.triangles
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


def is_watertight(faces: np.ndarray) -> bool:
    """Every directed edge occurs once and its reverse occurs once."""
    faces = np.asarray(faces)
    if len(faces) == 0:
        return False
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    if np.any(directed[:, 0] == directed[:, 1]):
        return False
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts != 1):
        return False
    fwd = {tuple(e) for e in uniq.tolist()}
    return all((b, a) in fwd for a, b in fwd)


def _orient(shell: Shell) -> Shell:
    if volume(shell) < 0:
        shell.faces = shell.faces[:, ::-1].copy()
    return shell


def _ring_faces(a0: int, b0: int, n: int, flip: bool = False) -> list[tuple[int, int, int]]:
    """Quads between two closed loops of ``n`` vertices starting at a0 and b0."""
    faces = []
    for i in range(n):
        j = (i + 1) % n
        a, b, c, d = a0 + i, a0 + j, b0 + j, b0 + i
        if flip:
            faces += [(a, c, b), (a, d, c)]
        else:
            faces += [(a, b, c), (a, c, d)]
    return faces


def annulus(name: str, inner: float, outer: float, z0: float, z1: float, segments: int = 64) -> Shell:
    """Hollow cylinder about the z-axis."""
    if not 0 <= inner < outer or z1 <= z0:
        raise GeometryError(f"bad annulus {name}: r=({inner}, {outer}) z=({z0}, {z1})")
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    c, s = np.cos(ang), np.sin(ang)
    loops = [(outer, z0), (outer, z1), (inner, z1), (inner, z0)]
    verts = np.concatenate([np.column_stack([r * c, r * s, np.full(segments, z)]) for r, z in loops])
    faces = []
    for k in range(4):
        faces += _ring_faces(k * segments, ((k + 1) % 4) * segments, segments)
    return _orient(Shell(name, verts, np.array(faces, dtype=np.int64)))


def _dedupe(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = [0]
    for i in range(1, len(points)):
        if np.hypot(*(points[i] - points[keep[-1]])) > tol:
            keep.append(i)
    return points[keep]


def _vertex_normals(line: np.ndarray) -> np.ndarray:
    seg = np.diff(line, axis=0)
    seg /= np.linalg.norm(seg, axis=1, keepdims=True)
    seg_n = np.column_stack([-seg[:, 1], seg[:, 0]])
    n = np.empty_like(line)
    n[0], n[-1] = seg_n[0], seg_n[-1]
    avg = seg_n[:-1] + seg_n[1:]
    length = np.linalg.norm(avg, axis=1, keepdims=True)
    n[1:-1] = np.where(length > 1e-9, avg / np.maximum(length, 1e-300), seg_n[1:])
    return n


def _rotate(xy: np.ndarray, degrees) -> np.ndarray:
    a = np.radians(degrees)
    c, s = np.cos(a), np.sin(a)
    x, y = xy[..., 0], xy[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def centreline(genome, samples: int = 33, constants: TurbineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Deduplicated profile centreline in turbine-centred coordinates."""
    line = _dedupe(blade_profile(genome, samples) - constants.centre)
    if len(line) < 2:
        raise GeometryError("degenerate blade profile: all profile points coincide")
    return line


def swept_centrelines(genome, resolution: int = 24,
                      constants: TurbineConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Offset (untwisted) centrelines at each height level, shape (levels, M, 2)."""
    line = centreline(genome, resolution + 1, constants)
    u = np.linspace(0.0, 1.0, resolution + 1)
    dx, dy = z_offset(genome, u, constants)
    return line[None, :, :] + np.stack([dx, dy], axis=-1)[:, None, :]


def _blade_shell(name: str, swept: np.ndarray, u: np.ndarray, z: np.ndarray, angle: np.ndarray,
                 constants: TurbineConstants) -> Shell:
    levels, m, _ = swept.shape
    half = constants.blade_thickness / 2
    R = constants.plate_radius
    loops = []
    for k in range(levels):
        line = swept[k]
        n = _vertex_normals(line)
        ring = np.concatenate([line + half * n, (line - half * n)[::-1]])
        r = np.hypot(ring[:, 0], ring[:, 1])
        ring = ring * np.minimum(1.0, R / np.maximum(r, 1e-300))[:, None]
        ring = _rotate(ring, angle[k])
        loops.append(np.column_stack([ring, np.full(len(ring), z[k])]))
    L = 2 * m
    verts = np.concatenate(loops)
    faces = []
    for k in range(levels - 1):
        faces += _ring_faces(k * L, (k + 1) * L, L)
    # caps: the strip between the two sides, as quads (i, i+1) x (mirror)
    for base, flip in ((0, True), ((levels - 1) * L, False)):
        for i in range(m - 1):
            a, b = base + i, base + i + 1
            c, d = base + L - 2 - i, base + L - 1 - i
            if flip:
                faces += [(a, c, b), (a, d, c)]
            else:
                faces += [(a, b, c), (a, c, d)]
    return _orient(Shell(name, verts, np.array(faces, dtype=np.int64)))


def check_containment(genome, resolution: int = 24, constants: TurbineConstants = DEFAULT_CONSTANTS,
                      tol: float = 1e-9) -> None:
    """Raise if the offset centreline leaves the plate disc at any sampled height."""
    swept = swept_centrelines(genome, resolution, constants)
    r = np.hypot(swept[..., 0], swept[..., 1])
    worst = np.unravel_index(np.argmax(r), r.shape)
    if r[worst] > constants.plate_radius + tol:
        frac = worst[0] / resolution
        raise GeometryError(f"offset blade leaves the plate disc: radius {r[worst]:.3f} mm "
                            f"at height fraction {frac:.3f}")


def build_turbine(genome, resolution: int = 24, constants: TurbineConstants = DEFAULT_CONSTANTS,
                  segments: int = 64) -> TurbineMesh:
    """Compile a genome into plates, hollow shaft and twisted swept blades."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    try:
        g = validate_genome(_as_array(genome), constants)
    except GenomeError as exc:
        raise GeometryError(str(exc)) from None
    check_containment(g, resolution, constants)
    swept = swept_centrelines(g, resolution, constants)
    u = np.linspace(0.0, 1.0, resolution + 1)
    R = constants.plate_radius
    hollow = constants.shaft_hollow_diameter / 2
    shells = [annulus(f"plate{k}", hollow, R, z0, z0 + constants.plate_thickness, segments)
              for k, z0 in enumerate(constants.plate_bottoms())]
    shells.append(annulus("shaft", hollow, hollow + constants.shaft_thickness, 0.0,
                          constants.shaft_height, segments))
    step = 360.0 / constants.blades_per_stage
    for stage in range(constants.stages):
        z = constants.stage_bottom(stage) + u * constants.blade_height
        for blade in range(constants.blades_per_stage):
            angle = g[TWIST] * u + step * blade + constants.stage_rotation * stage
            shells.append(_blade_shell(f"stage{stage}_blade{blade}", swept, u, z, angle, constants))
    return TurbineMesh(shells)


def fit_to_plate(genomes, resolution: int = 64, constants: TurbineConstants = DEFAULT_CONSTANTS,
                 margin: float = 0.05) -> np.ndarray:
    """Shrink the four offset genes by the largest factor in [0, 1] keeping the blade on the plate.

    Accepts one genome or a ``(B, 17)`` batch. Offsets are linear in the
    factor, so each (point, level) pair gives a quadratic constraint whose
    larger root bounds it. The allowed radius is the plate radius less
    ``margin``, or the unshifted profile's own reach if that is larger.
    """
    g = np.array(_as_array(genomes), dtype=np.float64)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    pts = g[:, PROFILE].reshape(-1, 5, 2)
    t = np.linspace(0.0, 1.0, resolution + 1)
    line = np.concatenate([quadratic_bezier(pts[:, None, 0], pts[:, None, 1], pts[:, None, 2], t),
                           quadratic_bezier(pts[:, None, 2], pts[:, None, 3], pts[:, None, 4], t)], axis=1)
    line = line - constants.centre
    dx, dy = _offset_batch(g, t, constants.blade_height)
    d = np.stack([dx, dy], axis=-1)[:, :, None, :]  # (B, L, 1, 2)
    c = line[:, None, :, :]  # (B, 1, M, 2)
    reach = np.hypot(line[..., 0], line[..., 1]).max(axis=1)
    limit = np.maximum(constants.plate_radius - margin, reach)[:, None, None]
    a = np.sum(d * d, axis=-1)
    b = 2.0 * np.sum(c * d, axis=-1)
    cc = np.sum(c * c, axis=-1) - limit ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        root = (-b + np.sqrt(np.maximum(b * b - 4 * a * cc, 0.0))) / (2 * a)
    root = np.where(a > 1e-18, root, np.inf)
    alpha = np.clip(root.reshape(len(g), -1).min(axis=1), 0.0, 1.0)
    g[:, OFFSETS] *= alpha[:, None]
    return g[0] if single else g


__all__ = [
    "GeometryError", "quadratic_bezier", "cubic_bezier", "blade_profile", "z_offset", "Shell",
    "TurbineMesh", "volume", "is_watertight", "annulus", "centreline", "swept_centrelines",
    "check_containment", "build_turbine", "fit_to_plate",
]
