"""Sketch operators.

Every sketch S is m x n and scaled so that E[S^T S] = I_n. Operators are
applied to data directly (the functions return S @ A); S itself is never
materialized, except for a small dense SJLT helper used only by tests.

Kinds
-----
gaussian   i.i.d. N(0, 1/m) entries, applied in row blocks.
hadamard   randomized Hadamard: Rademacher sign flip, fast Walsh-Hadamard
           transform on columns zero-padded to the next power of two, then
           uniform row sampling scaled by sqrt(n_pad/m).
uniform    m distinct rows sampled without replacement, scaled sqrt(n/m).
sjlt       sparse embedding, s distinct rows per column with +-1/sqrt(s)
           entries, applied as streaming row accumulation.
hybrid     uniform sampling down to m2 rows followed by a gaussian or sjlt
           stage down to m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

KINDS = ("gaussian", "hadamard", "uniform", "sjlt", "hybrid")

# Row-block width for the streaming Gaussian apply. Fixed constant: the block
# boundaries determine the draw order, which is part of the determinism
# contract.
_GAUSS_BLOCK = 4096


@dataclass(frozen=True)
class SketchSpec:
    """Parameters of one sketch operator.

    ``s`` is the per-column nonzero count for sjlt (also the inner stage of a
    hybrid sketch); ``m2`` and ``inner`` configure the hybrid two-stage
    sketch.
    """

    kind: str
    m: int
    s: int = 8
    m2: int | None = None
    inner: str = "sjlt"

    def validate(self, n: int) -> None:
        """Check this spec against a data row count ``n``."""
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}")
        if self.m < 1:
            raise ValueError(f"sketch size m must be >= 1, got {self.m}")
        if self.kind in ("hadamard", "uniform") and self.m > n:
            raise ValueError(f"{self.kind} sketch needs m <= n, got m={self.m}, n={n}")
        if self.kind == "sjlt":
            if not (1 <= self.s <= self.m):
                raise ValueError(f"sjlt needs 1 <= s <= m, got s={self.s}, m={self.m}")
        if self.kind == "hybrid":
            if self.m2 is None:
                raise ValueError("hybrid sketch needs m2")
            if not (self.m <= self.m2 <= n):
                raise ValueError(
                    f"hybrid needs m <= m2 <= n, got m={self.m}, m2={self.m2}, n={n}"
                )
            if self.inner not in ("gaussian", "sjlt"):
                raise ValueError(f"hybrid inner stage must be gaussian or sjlt, got {self.inner!r}")
            if self.inner == "sjlt" and not (1 <= self.s <= self.m):
                raise ValueError(f"hybrid sjlt stage needs 1 <= s <= m, got s={self.s}")


def apply_sketch(spec: SketchSpec, a, rng: np.random.Generator) -> np.ndarray:
    """Return S @ a for a fresh draw of the sketch described by ``spec``."""
    a = as_matrix(a, "data")
    spec.validate(a.shape[0])
    if spec.kind == "gaussian":
        return _apply_gaussian(a, spec.m, rng)
    if spec.kind == "hadamard":
        return _apply_hadamard(a, spec.m, rng)
    if spec.kind == "uniform":
        return _apply_uniform(a, spec.m, rng)
    if spec.kind == "sjlt":
        return _apply_sjlt(a, spec.m, spec.s, rng)
    outer = _apply_uniform(a, spec.m2, rng)
    if spec.inner == "gaussian":
        return _apply_gaussian(outer, spec.m, rng)
    return _apply_sjlt(outer, spec.m, spec.s, rng)


def _apply_gaussian(a, m, rng):
    n, d = a.shape
    scale = 1.0 / np.sqrt(m)
    out = np.zeros((m, d))
    for lo in range(0, n, _GAUSS_BLOCK):
        hi = min(lo + _GAUSS_BLOCK, n)
        out += rng.standard_normal((m, hi - lo)) @ a[lo:hi]
    out *= scale
    return out


def _apply_uniform(a, m, rng):
    n = a.shape[0]
    # Sorted sample of an m-subset: same subset distribution, and degenerate
    # cases (m = n) come out exactly in original row order.
    rows = np.sort(rng.choice(n, size=m, replace=False))
    return np.sqrt(n / m) * a[rows]


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform down the first axis.

    ``x`` must have a power-of-two number of rows; transforms all columns at
    once.
    """
    n = x.shape[0]
    if n & (n - 1):
        raise ValueError(f"row count {n} is not a power of two")
    h = 1
    while h < n:
        y = x.reshape(n // (2 * h), 2, h, -1)
        even = y[:, 0] + y[:, 1]
        odd = y[:, 0] - y[:, 1]
        x = np.stack((even, odd), axis=1).reshape(n, -1)
        h *= 2
    return x


def _hadamard_core(a, m, signs, rng):
    n, d = a.shape
    n_pad = _next_pow2(n)
    padded = np.zeros((n_pad, d))
    padded[:n] = a * signs[:, None]
    mixed = _fwht(padded) / np.sqrt(n_pad)
    rows = np.sort(rng.choice(n_pad, size=m, replace=False))
    return np.sqrt(n_pad / m) * mixed[rows]


def _apply_hadamard(a, m, rng):
    n = a.shape[0]
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return _hadamard_core(a, m, signs, rng)


def _sjlt_pattern(n, m, s, rng):
    """Row indices and signs for an SJLT draw: s distinct rows per column."""
    rows = np.empty((n, s), dtype=np.intp)
    for j in range(n):
        rows[j] = rng.choice(m, size=s, replace=False)
    signs = np.where(rng.random((n, s)) < 0.5, -1.0, 1.0)
    return rows, signs


def _sjlt_accumulate(a, m, rows, signs, s):
    n, d = a.shape
    out = np.zeros((m, d))
    scale = 1.0 / np.sqrt(s)
    # One pass over data rows, ascending j; within a row the s target slots
    # hit distinct output rows, so there are no same-cell collisions and the
    # accumulation order per output cell is ascending in j.
    for j in range(n):
        out[rows[j]] += (signs[j] * scale)[:, None] * a[j]
    return out


def _apply_sjlt(a, m, s, rng):
    rows, signs = _sjlt_pattern(a.shape[0], m, s, rng)
    return _sjlt_accumulate(a, m, rows, signs, s)


def sjlt_dense(n, m, s, rng) -> np.ndarray:
    """Dense S for an SJLT draw; debugging/test helper only.

    Consumes the generator exactly like the streaming apply, so the same rng
    state yields the matching operator.
    """
    rows, signs = _sjlt_pattern(n, m, s, rng)
    out = np.zeros((m, n))
    scale = 1.0 / np.sqrt(s)
    for j in range(n):
        out[rows[j], j] = signs[j] * scale
    return out
