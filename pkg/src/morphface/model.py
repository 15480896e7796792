"""Linear morphable model: PCA construction, synthesis, binary container I/O.

Model arrays are float64 in memory but quantized to float32 values at build
time, because the on-disk container stores float32; this makes save/load an
exact bit round trip.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ModelFormatError, RankError, TopologyError
from .mesh import Mesh

__all__ = ["ShapeCoeffs", "MorphableModel", "build_from_samples", "synthesize",
           "save_model", "load_model"]

_MAGIC = b"MFM1"
_VERSION = 1


@dataclass
class ShapeCoeffs:
    """PCA coefficients for the shape and expression bases."""

    shape: np.ndarray
    expr: np.ndarray

    def __post_init__(self):
        self.shape = np.ascontiguousarray(self.shape, dtype=np.float64).reshape(-1)
        self.expr = np.ascontiguousarray(self.expr, dtype=np.float64).reshape(-1)

    @classmethod
    def zeros(cls, model: "MorphableModel") -> "ShapeCoeffs":
        return cls(np.zeros(model.k_shape), np.zeros(model.k_expr))

    def copy(self) -> "ShapeCoeffs":
        return ShapeCoeffs(self.shape.copy(), self.expr.copy())


@dataclass
class MorphableModel:
    """Mean shape plus orthogonal shape/expression bases over a fixed topology.

    mean: (3*N_v,), shape_basis: (3*N_v, k_s), expr_basis: (3*N_v, k_e).
    The template mesh carries the shared triangulation and uv; its vertices
    are the mean shape.  mouth_loop is an ordered ring of vertex indices
    tracing the inner-mouth contour.
    """

    mean: np.ndarray
    shape_basis: np.ndarray
    expr_basis: np.ndarray
    template: Mesh
    mouth_loop: np.ndarray
    shape_sigmas: np.ndarray
    expr_sigmas: np.ndarray

    def __post_init__(self):
        self.mean = np.ascontiguousarray(self.mean, dtype=np.float64).reshape(-1)
        self.shape_basis = np.ascontiguousarray(self.shape_basis, dtype=np.float64)
        self.expr_basis = np.ascontiguousarray(self.expr_basis, dtype=np.float64)
        self.mouth_loop = np.ascontiguousarray(self.mouth_loop, dtype=np.int32).reshape(-1)
        self.shape_sigmas = np.ascontiguousarray(self.shape_sigmas, dtype=np.float64).reshape(-1)
        self.expr_sigmas = np.ascontiguousarray(self.expr_sigmas, dtype=np.float64).reshape(-1)
        n3 = self.mean.shape[0]
        if n3 % 3 or n3 // 3 != self.template.num_vertices:
            raise DimensionError("mean length disagrees with template vertex count")
        for name, basis in (("shape", self.shape_basis), ("expr", self.expr_basis)):
            if basis.ndim != 2 or basis.shape[0] != n3:
                raise DimensionError(f"{name} basis must be ({n3}, k)")
        if self.shape_sigmas.shape[0] != self.k_shape or self.expr_sigmas.shape[0] != self.k_expr:
            raise DimensionError("sigma count disagrees with basis width")
        if self.mouth_loop.size and (
            self.mouth_loop.min() < 0 or self.mouth_loop.max() >= self.template.num_vertices
        ):
            raise DimensionError("mouth_loop index out of range")
        if 0 < self.mouth_loop.size < 3:
            raise DimensionError("mouth_loop needs at least 3 indices")

    @property
    def num_vertices(self) -> int:
        return self.template.num_vertices

    @property
    def k_shape(self) -> int:
        return self.shape_basis.shape[1]

    @property
    def k_expr(self) -> int:
        return self.expr_basis.shape[1]

    def mean_mesh(self) -> Mesh:
        return self.template.with_vertices(self.mean.reshape(-1, 3))


def _check_common_topology(samples):
    first = samples[0]
    for m in samples[1:]:
        if m.num_vertices != first.num_vertices:
            raise TopologyError(
                f"vertex counts differ: {m.num_vertices} vs {first.num_vertices}"
            )
        if not np.array_equal(m.triangles, first.triangles):
            raise TopologyError("triangulations differ between samples")
        if not np.array_equal(m.uv, first.uv):
            raise TopologyError("uv layouts differ between samples")


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each component positive (first on ties)."""
    for j in range(basis.shape[1]):
        col = basis[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            basis[:, j] = -col
    return basis


def _pca(data: np.ndarray, k: int, what: str):
    """Left singular vectors and sigmas of a (3N, n_samples) data matrix."""
    n = data.shape[1]
    U, S, _ = np.linalg.svd(data, full_matrices=False)
    tol = max(data.shape) * np.finfo(np.float64).eps * (S[0] if S.size else 0.0)
    rank = int(np.sum(S > max(tol, 1e-12)))
    if k > rank:
        raise RankError(f"requested k_{what}={k} exceeds data rank {rank}")
    basis = _fix_signs(U[:, :k].copy())
    sigmas = S[:k] / np.sqrt(max(n - 1, 1))
    return basis, sigmas


def _quantize(a: np.ndarray) -> np.ndarray:
    """Round to float32 values (kept as float64) so container I/O is exact."""
    return a.astype(np.float32).astype(np.float64)


def build_from_samples(sample_meshes, k_s, k_e, expression_labels, mouth_loop=None):
    """PCA over registered sample meshes.

    ``expression_labels[i]`` is True for expressive samples; each expressive
    sample is paired with the nearest preceding neutral sample in list order,
    and the expression basis is built from the expressive-minus-neutral
    displacements (uncentered).  ``mouth_loop`` is the inner-mouth vertex ring
    stored as template metadata.
    """
    samples = list(sample_meshes)
    labels = list(expression_labels)
    if len(samples) < 2:
        raise DimensionError(f"need at least 2 samples, got {len(samples)}")
    if len(labels) != len(samples):
        raise DimensionError("one expression label per sample required")
    _check_common_topology(samples)

    flat = np.stack([m.vertices.reshape(-1) for m in samples], axis=1)  # (3N, n)
    neutral_cols = [i for i, lab in enumerate(labels) if not lab]
    if not neutral_cols:
        raise DimensionError("at least one neutral sample required")
    pairs = []
    last_neutral = None
    for i, lab in enumerate(labels):
        if not lab:
            last_neutral = i
        else:
            if last_neutral is None:
                raise DimensionError(
                    f"expressive sample {i} has no preceding neutral to pair with"
                )
            pairs.append((i, last_neutral))

    neutrals = flat[:, neutral_cols]
    if k_s > len(neutral_cols) - 1:
        raise RankError(
            f"k_s={k_s} exceeds neutral sample count - 1 = {len(neutral_cols) - 1}"
        )
    mean = neutrals.mean(axis=1)
    shape_basis, shape_sigmas = _pca(neutrals - mean[:, None], k_s, "s")

    if k_e > 0:
        if not pairs:
            raise DimensionError("k_e > 0 but no expressive samples given")
        if k_e > len(pairs) - 1:
            raise RankError(f"k_e={k_e} exceeds expression pair count - 1 = {len(pairs) - 1}")
        disp = np.stack([flat[:, e] - flat[:, n] for e, n in pairs], axis=1)
        expr_basis, expr_sigmas = _pca(disp, k_e, "e")
    else:
        expr_basis = np.zeros((flat.shape[0], 0))
        expr_sigmas = np.zeros(0)

    mean = _quantize(mean)
    template = Mesh(
        mean.reshape(-1, 3),
        samples[0].triangles,
        _quantize(np.clip(samples[0].uv, 0.0, 1.0)),
    )
    if mouth_loop is None:
        mouth_loop = np.zeros(0, dtype=np.int32)
    return MorphableModel(
        mean=mean,
        shape_basis=_quantize(shape_basis),
        expr_basis=_quantize(expr_basis),
        template=template,
        mouth_loop=mouth_loop,
        shape_sigmas=_quantize(shape_sigmas),
        expr_sigmas=_quantize(expr_sigmas),
    )


def synthesize(model: MorphableModel, coeffs: ShapeCoeffs) -> Mesh:
    """Mean plus basis combination; zero coefficients return the mean exactly."""
    if coeffs.shape.shape[0] != model.k_shape or coeffs.expr.shape[0] != model.k_expr:
        raise DimensionError(
            f"coefficient lengths ({coeffs.shape.shape[0]},{coeffs.expr.shape[0]}) do not "
            f"match model ({model.k_shape},{model.k_expr})"
        )
    if not coeffs.shape.any() and not coeffs.expr.any():
        flat = model.mean.copy()
    else:
        flat = model.mean + model.shape_basis @ coeffs.shape + model.expr_basis @ coeffs.expr
    return model.template.with_vertices(flat.reshape(-1, 3))


def _write_f32(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _write_u32(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<u4").tobytes())


def save_model(model: MorphableModel, path) -> None:
    """Binary container: magic MFM1, little-endian u32 header
    (version, N_v, N_f, k_s, k_e, mouth length), then f32 arrays
    (mean, shape_basis, expr_basis, uv, shape_sigmas, expr_sigmas),
    then u32 arrays (triangles, mouth_loop)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<6I",
                _VERSION,
                model.num_vertices,
                model.template.num_triangles,
                model.k_shape,
                model.k_expr,
                model.mouth_loop.size,
            )
        )
        _write_f32(fh, model.mean)
        _write_f32(fh, model.shape_basis)
        _write_f32(fh, model.expr_basis)
        _write_f32(fh, model.template.uv)
        _write_f32(fh, model.shape_sigmas)
        _write_f32(fh, model.expr_sigmas)
        _write_u32(fh, model.template.triangles)
        _write_u32(fh, model.mouth_loop)


def load_model(path) -> MorphableModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ModelFormatError(
            f"bad magic {blob[:4]!r}, expected {_MAGIC!r}"
        )
    if len(blob) < 4 + 24:
        raise ModelFormatError("truncated header")
    version, n_v, n_f, k_s, k_e, n_mouth = struct.unpack_from("<6I", blob, 4)
    if version != _VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    off = 28

    def take(count, dtype):
        nonlocal off
        nbytes = count * 4
        if off + nbytes > len(blob):
            raise ModelFormatError("truncated file")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += nbytes
        return arr

    mean = take(3 * n_v, "<f4").astype(np.float64)
    shape_basis = take(3 * n_v * k_s, "<f4").astype(np.float64).reshape(3 * n_v, k_s)
    expr_basis = take(3 * n_v * k_e, "<f4").astype(np.float64).reshape(3 * n_v, k_e)
    uv = take(2 * n_v, "<f4").astype(np.float64).reshape(n_v, 2)
    shape_sigmas = take(k_s, "<f4").astype(np.float64)
    expr_sigmas = take(k_e, "<f4").astype(np.float64)
    triangles = take(3 * n_f, "<u4").astype(np.int32).reshape(n_f, 3)
    mouth_loop = take(n_mouth, "<u4").astype(np.int32)
    if off != len(blob):
        raise ModelFormatError(f"{len(blob) - off} trailing bytes after payload")
    template = Mesh(mean.reshape(-1, 3), triangles, np.clip(uv, 0.0, 1.0))
    return MorphableModel(
        mean=mean,
        shape_basis=shape_basis,
        expr_basis=expr_basis,
        template=template,
        mouth_loop=mouth_loop,
        shape_sigmas=shape_sigmas,
        expr_sigmas=expr_sigmas,
    )
