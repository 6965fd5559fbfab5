"""Optimization problem models consumed by the solvers.

Four kinds: least squares, ridge, l2-regularized logistic regression, and a
log-barrier formulation of an inf-norm constrained problem. Each exposes the
objective, gradient, a Hessian factorization

    H(x) = half(x)^T half(x) + reg_mult * lambda1 * I_d

with reg_mult in {0, 1, 2}, and a sigma heuristic estimating the typical
singular value scale fed to the bias-correction formulas. Models are
immutable after construction; all queries are read-only.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import matio
from .linalg import as_matrix, make_identical_singular_matrix, singular_values

KINDS = ("lstsq", "ridge", "logistic", "barrier")
SIGMA_MODES = ("mean-sv", "mean-diag", "min-sv")


class DomainError(ValueError):
    """Query outside a problem's domain. Carries the worst constraint margin."""

    def __init__(self, message: str, worst_margin: float):
        super().__init__(message)
        self.worst_margin = worst_margin


@dataclass(frozen=True)
class HessianFactor:
    """Hessian split H = half^T half + reg_mult * lambda1 * I."""

    half: np.ndarray
    reg_mult: int
    lambda1: float

    @property
    def lambda1_eff(self) -> float:
        """The identity coefficient reg_mult * lambda1, what correction
        formulas must see as the problem's regularizer."""
        return self.reg_mult * self.lambda1


def _as_vector(v, length: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return np.ascontiguousarray(arr)


class Problem:
    """Base model: data matrix, regularizer, and the query interface."""

    kind = "base"
    reg_mult = 0
    default_sigma_mode = "mean-sv"

    def __init__(self, a, lambda1: float = 0.0):
        self.a = as_matrix(a, "A")
        if lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
        self.lambda1 = float(lambda1)
        self.x_planted: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    def _check_x(self, x) -> np.ndarray:
        return _as_vector(x, self.d, "x")

    def objective(self, x) -> float:
        raise NotImplementedError

    def data_gradient(self, x, lo: int, hi: int) -> np.ndarray:
        """Gradient contribution of data rows lo:hi, without the regularizer.

        Summing over a partition of [0, n) and adding reg_gradient recovers
        the full gradient (up to summation order).
        """
        raise NotImplementedError

    def reg_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        x = self._check_x(x)
        return self.data_gradient(x, 0, self.n) + self.reg_gradient(x)

    def hessian_half(self, x) -> np.ndarray:
        raise NotImplementedError

    def row_weights(self, x) -> np.ndarray:
        """Per-row scaling of hessian_half relative to the raw data rows."""
        raise NotImplementedError

    def hessian_factor(self, x) -> HessianFactor:
        return HessianFactor(self.hessian_half(x), self.reg_mult, self.lambda1)

    def sigma_heuristic(self, x, mode: str | None = None) -> float:
        """Scalar estimate of the singular value scale of hessian_half."""
        if mode is None:
            mode = self.default_sigma_mode
        if mode not in SIGMA_MODES:
            raise ValueError(f"unknown sigma mode {mode!r}")
        if mode == "mean-diag":
            return float(np.mean(self.row_weights(self._check_x(x))))
        sv = singular_values(self.hessian_half(x))
        return float(np.min(sv)) if mode == "min-sv" else float(np.mean(sv))


class LeastSquares(Problem):
    """f(x) = 1/2 ||Ax - b||^2."""

    kind = "lstsq"
    reg_mult = 0

    def __init__(self, a, b):
        super().__init__(a, 0.0)
        self.b = _as_vector(b, self.n, "b")

    def objective(self, x) -> float:
        x = self._check_x(x)
        r = self.a @ x - self.b
        return 0.5 * float(r @ r)

    def data_gradient(self, x, lo, hi):
        x = self._check_x(x)
        block = self.a[lo:hi]
        return block.T @ (block @ x - self.b[lo:hi])

    def reg_gradient(self, x):
        return np.zeros(self.d)

    def hessian_half(self, x):
        return self.a

    def row_weights(self, x):
        return np.ones(self.n)


class Ridge(LeastSquares):
    """f(x) = 1/2 ||Ax - b||^2 + lambda1/2 ||x||^2."""

    kind = "ridge"
    reg_mult = 1

    def __init__(self, a, b, lambda1: float):
        super().__init__(a, b)
        if lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
        self.lambda1 = float(lambda1)

    def objective(self, x) -> float:
        x = self._check_x(x)
        return super().objective(x) + 0.5 * self.lambda1 * float(x @ x)

    def reg_gradient(self, x):
        return self.lambda1 * self._check_x(x)


class Logistic(Problem):
    """f(x) = sum_i log(1 + exp(a_i^T x)) - y^T Ax + lambda1/2 ||x||^2.

    Labels y in {0, 1}. Hessian weights p(1-p) enter through the factor
    half = D^{1/2} A.
    """

    kind = "logistic"
    reg_mult = 1
    default_sigma_mode = "mean-diag"

    def __init__(self, a, y, lambda1: float):
        super().__init__(a, lambda1)
        y = _as_vector(y, self.n, "y")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic labels must be 0 or 1")
        self.y = y

    def objective(self, x) -> float:
        x = self._check_x(x)
        z = self.a @ x
        return float(np.sum(np.logaddexp(0.0, z)) - self.y @ z) \
            + 0.5 * self.lambda1 * float(x @ x)

    def data_gradient(self, x, lo, hi):
        x = self._check_x(x)
        block = self.a[lo:hi]
        p = expit(block @ x)
        return block.T @ (p - self.y[lo:hi])

    def reg_gradient(self, x):
        return self.lambda1 * self._check_x(x)

    def row_weights(self, x):
        p = expit(self.a @ self._check_x(x))
        return np.sqrt(p * (1.0 - p))

    def hessian_half(self, x):
        return self.row_weights(x)[:, None] * self.a


class Barrier(Problem):
    """Log-barrier model of least squares constrained by ||Ax||_inf <= bound:

    f(x) = -sum_i [log(bound - a_i^T x) + log(bound + a_i^T x)]
           + lambda1 ||x - c||^2

    defined on the open polytope ||Ax||_inf < bound. The barrier terms are
    the 2n rows of A_c = [A; -A]; the regularizer contributes 2*lambda1 to
    the Hessian's identity coefficient.
    """

    kind = "barrier"
    reg_mult = 2
    default_sigma_mode = "min-sv"

    def __init__(self, a, c, lambda1: float, bound: float):
        super().__init__(a, lambda1)
        self.c = _as_vector(c, self.d, "c")
        if not bound > 0:
            raise ValueError(f"bound must be > 0, got {bound}")
        self.bound = float(bound)

    def _margins(self, x) -> np.ndarray:
        """bound - (A_c x), length 2n; all must stay strictly positive."""
        ax = self.a @ x
        return np.concatenate([self.bound - ax, self.bound + ax])

    def margins_ok(self, x) -> bool:
        x = self._check_x(x)
        return bool(np.min(self._margins(x)) > 0.0)

    def _checked_margins(self, x) -> np.ndarray:
        margins = self._margins(x)
        worst = float(np.min(margins))
        if worst <= 0.0:
            raise DomainError(
                f"domain violation: ||Ax||_inf >= bound={self.bound} "
                f"(worst margin {worst:.6g})", worst)
        return margins

    def objective(self, x) -> float:
        x = self._check_x(x)
        margins = self._checked_margins(x)
        dx = x - self.c
        return -float(np.sum(np.log(margins))) + self.lambda1 * float(dx @ dx)

    def data_gradient(self, x, lo, hi):
        x = self._check_x(x)
        block = self.a[lo:hi]
        ax = block @ x
        pos = self.bound - ax
        neg = self.bound + ax
        worst = float(min(pos.min(initial=np.inf), neg.min(initial=np.inf)))
        if worst <= 0.0:
            raise DomainError(
                f"domain violation: worst margin {worst:.6g}", worst)
        return block.T @ (1.0 / pos) - block.T @ (1.0 / neg)

    def reg_gradient(self, x):
        return 2.0 * self.lambda1 * (self._check_x(x) - self.c)

    def row_weights(self, x):
        return 1.0 / self._checked_margins(self._check_x(x))

    def hessian_half(self, x):
        x = self._check_x(x)
        a_c = np.vstack([self.a, -self.a])
        return self.row_weights(x)[:, None] * a_c


def generate_problem(kind: str, n: int, d: int, rng: np.random.Generator,
                     noise: float = 0.0, lambda1: float = 0.0,
                     identical_sv: bool = False, sigma0: float = 1.0,
                     bound: float = 1.0) -> Problem:
    """Build a synthetic instance with a planted unit-norm x0.

    Draw order is fixed (A, then x0, then noise or labels, then c) so a
    given generator state maps to exactly one instance. lstsq/ridge get
    b = A x0 + noise * eps; logistic gets Bernoulli labels from the model at
    x0; barrier gets a random unit-norm center c.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}")
    if not (n >= d >= 1):
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    if identical_sv:
        a = make_identical_singular_matrix(n, d, sigma0, rng)
    else:
        # sigma0 sets the mean singular value in both branches
        a = rng.standard_normal((n, d))
        a *= sigma0 / np.linalg.svd(a, compute_uv=False).mean()
    x0 = rng.standard_normal(d)
    x0 /= np.linalg.norm(x0)
    if kind in ("lstsq", "ridge"):
        b = a @ x0
        if noise > 0:
            b = b + noise * rng.standard_normal(n)
        p = LeastSquares(a, b) if kind == "lstsq" else Ridge(a, b, lambda1)
    elif kind == "logistic":
        labels = (rng.random(n) < expit(a @ x0)).astype(np.float64)
        p = Logistic(a, labels, lambda1)
    else:
        c = rng.standard_normal(d)
        c /= np.linalg.norm(c)
        p = Barrier(a, c, lambda1, bound)
    p.x_planted = x0
    return p


def save_problem(p: Problem, out_dir: str, extra_manifest: dict | None = None) -> None:
    """Write A plus the kind's vector and a JSON manifest into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    matio.write_samx(os.path.join(out_dir, "A.samx"), p.a)
    manifest = {"kind": p.kind, "lambda1": p.lambda1, "n": p.n, "d": p.d}
    if isinstance(p, Barrier):
        matio.write_samx(os.path.join(out_dir, "c.samx"), p.c[:, None])
        manifest["bound"] = p.bound
    elif isinstance(p, Logistic):
        matio.write_samx(os.path.join(out_dir, "y.samx"), p.y[:, None])
    else:
        matio.write_samx(os.path.join(out_dir, "b.samx"), p.b[:, None])
    if p.x_planted is not None:
        matio.write_samx(os.path.join(out_dir, "x_planted.samx"),
                         p.x_planted[:, None])
    if extra_manifest:
        manifest.update(extra_manifest)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_problem(in_dir: str) -> Problem:
    """Rebuild a problem written by :func:`save_problem`."""
    with open(os.path.join(in_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    kind = manifest["kind"]
    if kind not in KINDS:
        raise ValueError(f"manifest has unknown kind {kind!r}")
    a = matio.read_samx(os.path.join(in_dir, "A.samx"))
    lambda1 = float(manifest.get("lambda1", 0.0))
    if kind == "barrier":
        c = matio.read_samx(os.path.join(in_dir, "c.samx"))
        p: Problem = Barrier(a, c, lambda1, float(manifest["bound"]))
    elif kind == "logistic":
        y = matio.read_samx(os.path.join(in_dir, "y.samx"))
        p = Logistic(a, y, lambda1)
    elif kind == "ridge":
        b = matio.read_samx(os.path.join(in_dir, "b.samx"))
        p = Ridge(a, b, lambda1)
    else:
        b = matio.read_samx(os.path.join(in_dir, "b.samx"))
        p = LeastSquares(a, b)
    planted = os.path.join(in_dir, "x_planted.samx")
    if os.path.exists(planted):
        p.x_planted = matio.read_samx(planted)[:, 0].copy()
    return p
