"""Triangle meshes with a per-vertex UV parametrization, plus Wavefront OBJ I/O.

Conventions:
  * triangles are counter-clockwise as seen in the rendered image (front faces),
  * UV coordinates live in [0,1]^2 with the v axis pointing up (OBJ convention);
    the renderer flips v when sampling row-major textures.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParseError

__all__ = [
    "Mesh",
    "vertex_normals",
    "load_obj",
    "save_obj",
    "load_index_list",
    "save_index_list",
]


@dataclass
class Mesh:
    """Vertices (N_v,3), triangles (N_f,3) int, uv (N_v,2) in [0,1]^2."""

    vertices: np.ndarray
    triangles: np.ndarray
    uv: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        self.uv = np.ascontiguousarray(self.uv, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DimensionError(f"vertices must be (N,3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise DimensionError(f"triangles must be (F,3), got {self.triangles.shape}")
        if self.uv.shape != (self.vertices.shape[0], 2):
            raise DimensionError(
                f"uv must be ({self.vertices.shape[0]},2), got {self.uv.shape}"
            )
        n = self.vertices.shape[0]
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= n:
                raise DimensionError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise DimensionError("triangle repeats a vertex index")
        if self.uv.size and (self.uv.min() < 0.0 or self.uv.max() > 1.0):
            raise DimensionError("uv coordinates must lie in [0,1]")

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Same topology and uv, new vertex positions."""
        return Mesh(vertices, self.triangles, self.uv)


def vertex_normals(mesh: Mesh, return_degenerate: bool = False):
    """Area-weighted vertex normals, unit length.

    Vertices whose incident triangles all have zero area (or that have no
    incident triangle) get the fallback normal (0,0,1) and are reported in the
    degenerate mask.
    """
    v = mesh.vertices
    t = mesh.triangles
    # cross product of edge vectors = 2*area * face normal
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    face = np.cross(e1, e2)
    acc = np.zeros_like(v)
    np.add.at(acc, t[:, 0], face)
    np.add.at(acc, t[:, 1], face)
    np.add.at(acc, t[:, 2], face)
    norms = np.linalg.norm(acc, axis=1)
    degenerate = norms < 1e-300
    safe = np.where(degenerate, 1.0, norms)
    out = acc / safe[:, None]
    out[degenerate] = (0.0, 0.0, 1.0)
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} vertices have no non-degenerate incident "
            "triangle; using fallback normal (0,0,1)",
            RuntimeWarning,
            stacklevel=2,
        )
    if return_degenerate:
        return out, degenerate
    return out


def load_obj(path) -> Mesh:
    """Read an OBJ with v / vt / f records into a Mesh.

    Faces may be given as ``v``, ``v/vt``, ``v/vt/vn`` or ``v//vn``; polygons
    with more than three corners are fan-triangulated.  When a position is
    referenced with two different vt indices the vertex is split so the mesh
    keeps one uv per vertex.
    """
    positions = []
    texcoords = []
    corners = []  # list of faces, each a list of (v_idx, vt_idx or -1)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "vt":
                    texcoords.append([float(parts[1]), float(parts[2])])
                elif tag == "f":
                    face = []
                    for spec in parts[1:]:
                        fields = spec.split("/")
                        vi = int(fields[0])
                        ti = int(fields[1]) if len(fields) > 1 and fields[1] else 0
                        if vi < 0 or ti < 0:
                            raise ParseError("negative OBJ indices are unsupported", lineno)
                        face.append((vi - 1, ti - 1))
                    if len(face) < 3:
                        raise ParseError("face with fewer than 3 corners", lineno)
                    corners.append(face)
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad OBJ record {line!r}: {exc}", lineno) from None

    if not positions:
        raise ParseError("OBJ contains no vertices")
    positions = np.asarray(positions, dtype=np.float64)
    texcoords = np.asarray(texcoords, dtype=np.float64) if texcoords else np.zeros((0, 2))

    # Assign one uv per vertex, splitting on conflicts.
    n_base = len(positions)
    uv_of = [None] * n_base
    extra_pos = []
    extra_uv = []
    remap = {}  # (v_idx, vt_idx) -> split vertex id
    tris = []
    missing_uv = False

    def resolve(vi, ti):
        nonlocal missing_uv
        if ti < 0:
            missing_uv = True
            if uv_of[vi] is None:
                uv_of[vi] = (0.0, 0.0)
            return vi
        uv = (texcoords[ti, 0], texcoords[ti, 1])
        if uv_of[vi] is None or uv_of[vi] == uv:
            uv_of[vi] = uv
            return vi
        key = (vi, ti)
        if key not in remap:
            remap[key] = n_base + len(extra_pos)
            extra_pos.append(positions[vi])
            extra_uv.append(uv)
        return remap[key]

    for face in corners:
        ids = [resolve(vi, ti) for vi, ti in face]
        for k in range(1, len(ids) - 1):
            tris.append((ids[0], ids[k], ids[k + 1]))

    if missing_uv:
        warnings.warn("OBJ face without vt indices; missing uv set to (0,0)", RuntimeWarning)
    all_pos = np.vstack([positions] + ([np.asarray(extra_pos)] if extra_pos else []))
    uv_arr = np.array(
        [uv if uv is not None else (0.0, 0.0) for uv in uv_of] + extra_uv, dtype=np.float64
    )
    uv_arr = np.clip(uv_arr, 0.0, 1.0)
    tris = np.asarray(tris, dtype=np.int32) if tris else np.zeros((0, 3), dtype=np.int32)
    return Mesh(all_pos, tris, uv_arr)


def save_obj(path, mesh: Mesh) -> None:
    """Write v / vt / f records; uv indices mirror vertex indices."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for u, v in mesh.uv:
            fh.write(f"vt {u:.17g} {v:.17g}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")


def load_index_list(path) -> np.ndarray:
    """Plain-text vertex index list, one index per line (blank lines skipped)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ParseError(f"expected an integer index, got {line!r}", lineno) from None
    return np.asarray(out, dtype=np.int32)


def save_index_list(path, indices) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in np.asarray(indices).ravel():
            fh.write(f"{int(i)}\n")
