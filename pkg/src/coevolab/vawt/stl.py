"""Binary STL read/write."""

from __future__ import annotations

from pathlib import Path

import numpy as np

STL_DTYPE = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertices", "<f4", (3, 3)),
    ("attr", "<u2"),
])
HEADER_BYTES = 80


class StlError(ValueError):
    pass


def facet_normals(triangles: np.ndarray) -> np.ndarray:
    tri = np.asarray(triangles, dtype=np.float64)
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def write_stl(triangles: np.ndarray, destination: str | Path, header: str = "coevolab") -> int:
    """Write ``(T, 3, 3)`` triangles; returns the number of bytes written."""
    tri = np.asarray(triangles, dtype=np.float64)
    if tri.ndim != 3 or tri.shape[1:] != (3, 3) or len(tri) == 0:
        raise StlError(f"expected a non-empty (T, 3, 3) triangle array, got {tri.shape}")
    rec = np.zeros(len(tri), dtype=STL_DTYPE)
    rec["normal"] = facet_normals(tri)
    rec["vertices"] = tri
    head = header.encode("ascii", "replace")[:HEADER_BYTES].ljust(HEADER_BYTES, b" ")
    # a header starting with "solid" confuses some readers into ASCII mode
    if head.startswith(b"solid"):
        head = b"binary" + head[6:]
    payload = head + np.uint32(len(tri)).tobytes() + rec.tobytes()
    Path(destination).write_bytes(payload)
    return len(payload)


def read_stl(source: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(normals, triangles)`` as float32 arrays."""
    data = Path(source).read_bytes()
    if len(data) < HEADER_BYTES + 4:
        raise StlError(f"{source}: truncated header")
    count = int(np.frombuffer(data, "<u4", 1, HEADER_BYTES)[0])
    expected = HEADER_BYTES + 4 + count * STL_DTYPE.itemsize
    if len(data) != expected:
        raise StlError(f"{source}: expected {expected} bytes for {count} triangles, found {len(data)}")
    rec = np.frombuffer(data, STL_DTYPE, count, HEADER_BYTES + 4)
    return rec["normal"].copy(), rec["vertices"].copy()


def export_stl(mesh, destination: str | Path, header: str = "coevolab turbine") -> int:
    """Write a mesh object exposing ``triangles``."""
    return write_stl(mesh.triangles, destination, header)
