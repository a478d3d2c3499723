"""Dense float tensors plus the few linear-algebra primitives the engine needs.

Tensors are plain numpy ndarrays in row-major (C) order, rank 1 to 4,
dtype float32 or float64.  float32 is the working precision (it matches
pretrained weights); gradient checks run in float64.

Random fills use numpy's Philox bit generator, a counter-based RNG keyed
directly by the caller's seed, so a given (shape, mean, std, seed) tuple
reproduces bit-exactly across runs and platforms for a fixed numpy version.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidShapeError, NumericError, ShapeError

Tensor = np.ndarray

DTYPES = {"f32": np.float32, "f64": np.float64}

MAX_RANK = 4


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        try:
            return np.dtype(DTYPES[dtype])
        except KeyError:
            raise InvalidShapeError(f"unsupported dtype {dtype!r}, expected f32 or f64")
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise InvalidShapeError(f"unsupported dtype {dt}, expected float32 or float64")
    return dt


def check_shape(dims) -> tuple:
    """Validate a shape: rank 1-4, every dim a positive integer."""
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= MAX_RANK:
        raise InvalidShapeError(f"rank must be 1..{MAX_RANK}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise InvalidShapeError(f"all dims must be >= 1, got {dims}")
    return dims


def zeros(dims, dtype="f32") -> Tensor:
    return np.zeros(check_shape(dims), dtype=resolve_dtype(dtype))


def constant(dims, value, dtype="f32") -> Tensor:
    return np.full(check_shape(dims), value, dtype=resolve_dtype(dtype))


def gaussian(dims, mean=0.0, std=1.0, seed=0, dtype="f32") -> Tensor:
    """Normal fill from a Philox stream keyed by ``seed``.

    Values are drawn in float64 and cast, so the f32 fill is the rounded
    f64 fill rather than a separate stream.
    """
    dims = check_shape(dims)
    if std < 0:
        raise InvalidShapeError(f"std must be >= 0, got {std}")
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    values = rng.standard_normal(dims, dtype=np.float64) * std + mean
    return values.astype(resolve_dtype(dtype))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Plain [m,k] @ [k,n] matrix product."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dims differ: {a.shape} vs {b.shape}")
    return a @ b


def gram_product(f: Tensor) -> Tensor:
    """F^T F with exact symmetry: the upper triangle is mirrored into the
    lower one, so result[i, j] == result[j, i] bit-for-bit by construction."""
    if f.ndim != 2:
        raise ShapeError(f"gram_product expects a rank-2 tensor, got {f.shape}")
    g = f.T @ f
    iu = np.triu_indices(g.shape[0], k=1)
    g[(iu[1], iu[0])] = g[iu]
    return g


def axpby(a: float, x: Tensor, b: float, y: Tensor) -> Tensor:
    """Elementwise a*x + b*y."""
    if x.shape != y.shape:
        raise ShapeError(f"axpby shapes differ: {x.shape} vs {y.shape}")
    return a * x + b * y


def frobenius_sq(x: Tensor) -> float:
    """Sum of squared entries."""
    flat = np.ascontiguousarray(x).ravel()
    return float(np.dot(flat, flat))


def check_finite(x: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite values")
    return x
