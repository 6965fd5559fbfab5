"""Dense linear algebra kernels shared by the sketching solvers.

Matrices are plain numpy float64 arrays in row-major (C) order, vectors are
1-D arrays. Nothing in this module is sketch aware; sketch operators live in
:mod:`sketchavg.sketches`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization hit a nonpositive leading minor.

    ``pivot`` is the 1-based index of the failing minor, as reported by the
    factorization.
    """

    def __init__(self, pivot: int):
        self.pivot = int(pivot)
        super().__init__(
            f"matrix is not positive definite (failing pivot {self.pivot})"
        )


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by a (seed, stream) pair.

    The same pair always yields the same sequence; distinct stream ids give
    statistically independent sequences. Workers, trials, and problem
    generation each own a stream id, so results never depend on execution
    order or thread scheduling.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= int(self.stream) < 2**64):
            raise ValueError("stream id must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=(int(self.seed), int(self.stream)))
        return np.random.Generator(np.random.PCG64(ss))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-D float64 C-order array."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={out.ndim}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ShapeError(f"{name} must be nonempty, got shape {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite entries")
    return out


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` with explicit shape validation."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def solve_spd(mat, rhs) -> np.ndarray:
    """Solve ``mat @ x = rhs`` for symmetric positive definite ``mat``.

    Uses an unpivoted Cholesky factorization. A nonpositive pivot raises
    :class:`NotPositiveDefiniteError` carrying the failing pivot index.

    Parameters
    ----------
    mat : (d, d) array, symmetric positive definite
    rhs : (d,) or (d, k) array

    Returns
    -------
    x : array with the same trailing shape as ``rhs``
    """
    mat = as_matrix(mat)
    if mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"expected a square matrix, got {mat.shape}")
    rhs = np.asarray(rhs, dtype=np.float64)
    one_dim = rhs.ndim == 1
    b = rhs[:, None] if one_dim else rhs
    if b.ndim != 2 or b.shape[0] != mat.shape[0]:
        raise ShapeError(f"rhs shape {rhs.shape} does not match matrix {mat.shape}")
    c, info = lapack.dpotrf(mat, lower=1, clean=0, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(info)
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    x, info = lapack.dpotrs(c, b, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("triangular solve failed")
    return x[:, 0] if one_dim else x


def solve_symmetric(mat, rhs) -> tuple[np.ndarray, bool]:
    """Solve a symmetric system, falling back to an indefinite factorization.

    Tries :func:`solve_spd` first. If the matrix is not positive definite
    (possible when a computed ridge penalty is negative), an LDL^T solve is
    used instead and the returned flag is True so callers can surface a
    warning record.

    Returns
    -------
    (x, used_indefinite_fallback)
    """
    try:
        return solve_spd(mat, rhs), False
    except NotPositiveDefiniteError:
        pass
    mat = as_matrix(mat)
    rhs = np.asarray(rhs, dtype=np.float64)
    one_dim = rhs.ndim == 1
    b = rhs[:, None] if one_dim else rhs
    _, _, x, info = lapack.dsysv(mat, b, lower=1)
    if info > 0:
        raise np.linalg.LinAlgError(
            f"symmetric solve failed: matrix is singular (pivot block {info})"
        )
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dsysv")
    return (x[:, 0] if one_dim else x), True


def singular_values(a) -> np.ndarray:
    """Singular values of ``a``, sorted descending, all nonnegative."""
    a = as_matrix(a)
    return np.linalg.svd(a, compute_uv=False)


def sym_sqrt(mat) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix.

    Eigenvalues below roundoff are clipped to zero rather than propagated as
    tiny negatives.
    """
    mat = as_matrix(mat)
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def make_identical_singular_matrix(
    n: int, d: int, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Random n x d matrix whose singular values all equal ``sigma``.

    Built as sigma * Q1 @ Q2.T with Q1 (n x d) and Q2 (d x d) drawn from the
    QR factorizations of Gaussian matrices, so the row and column spaces are
    uniformly random.
    """
    if n < d or d < 1:
        raise ShapeError(f"need n >= d >= 1, got n={n}, d={d}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    q1, _ = np.linalg.qr(rng.standard_normal((n, d)))
    q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return sigma * (q1 @ q2.T)
