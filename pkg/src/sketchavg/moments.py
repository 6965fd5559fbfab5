"""Closed-form moments of sketched Gram inverses and derived constants.

For a Gaussian sketch S (m x n, entries N(0, 1/m)) and any n x d matrix U
with orthonormal columns, W = (U^T S^T S U)^{-1} is inverse-Wishart and

    E[W]   = theta1 * I,   theta1 = m / (m - d - 1),          m > d + 1
    E[W^2] = theta2 * I,   theta2 = m^2 (m-1) /
                                    ((m-d)(m-d-1)(m-d-3)),    m > d + 3

independent of n. The regularized analogue uses the asymptotic resolvent
limit theta3(gamma, lam) with gamma = d/m: for z = S A x with regularization
lam, the trace of ((A^T S^T S A)/n + lam I)^{-1} concentrates around
theta3 / lam in the proportional regime. These three constants drive every
bias correction and step-size rule in the package.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class MomentUndefinedError(ValueError):
    """A moment was requested outside its range of definition."""


class InfeasibleCorrectionError(ValueError):
    """No nonnegative corrected regularizer exists for these parameters."""


class ContractionError(ValueError):
    """The averaged iteration does not contract for these parameters."""


def _check_dims(m: int, d: int) -> None:
    if d < 1:
        raise MomentUndefinedError(f"d must be >= 1, got {d}")
    if m < 1:
        raise MomentUndefinedError(f"m must be >= 1, got {m}")


def theta1(m: int, d: int) -> float:
    """First inverse moment coefficient m/(m-d-1). Needs m > d + 1."""
    _check_dims(m, d)
    if m <= d + 1:
        raise MomentUndefinedError(
            f"first inverse moment needs m > d + 1, got m={m}, d={d}"
        )
    return m / (m - d - 1)


def theta2(m: int, d: int) -> float:
    """Second inverse moment coefficient. Needs m > d + 3."""
    _check_dims(m, d)
    if m <= d + 3:
        raise MomentUndefinedError(
            f"second inverse moment needs m > d + 3, got m={m}, d={d}"
        )
    return m * m * (m - 1) / ((m - d) * (m - d - 1) * (m - d - 3))


def theta3(gamma: float, lam: float) -> float:
    """Asymptotic regularized inverse trace coefficient.

    theta3 solves  lam * gamma * t^2 + (lam - gamma + 1) * t - 1 = 0  (the
    positive root). At lam = 0 this degenerates to 1/(1 - gamma), defined
    only for gamma < 1.
    """
    if not gamma > 0:
        raise MomentUndefinedError(f"aspect ratio gamma must be > 0, got {gamma}")
    if lam < 0:
        raise MomentUndefinedError(f"regularization must be >= 0, got {lam}")
    if lam == 0:
        if gamma >= 1:
            raise MomentUndefinedError(
                f"unregularized limit needs gamma < 1, got gamma={gamma}"
            )
        return 1.0 / (1.0 - gamma)
    b = -lam + gamma - 1.0
    return (b + math.sqrt(b * b + 4.0 * lam * gamma)) / (2.0 * lam * gamma)


def zero_bias_residual_ridge(lambda1: float, lambda2: float, gamma: float,
                             sigma: float) -> float:
    """Bias residual of an averaged sketched ridge solve.

    Zero exactly when lambda2 removes the averaging bias for data whose
    singular values all equal sigma; positive lambda1-side residual means
    lambda2 under-corrects.
    """
    t3 = theta3(gamma, lambda2 / sigma ** 2)
    return lambda1 - lambda2 * t3 * (1.0 + lambda1 / sigma ** 2)


def lambda2_star_ridge(lambda1: float, gamma: float, sigma: float = 1.0) -> float:
    """Corrected regularizer making the averaged ridge estimate unbiased.

    Closed form lambda1 * (1 - gamma * sigma^2 / (sigma^2 + lambda1)),
    the root of :func:`zero_bias_residual_ridge` in lambda2. For gamma > 1
    this needs lambda1 >= sigma^2 (gamma - 1); smaller lambda1 has no
    nonnegative root.
    """
    if lambda1 < 0:
        raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
    if not gamma > 0:
        raise MomentUndefinedError(f"aspect ratio gamma must be > 0, got {gamma}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    value = lambda1 * (1.0 - gamma * sigma ** 2 / (sigma ** 2 + lambda1))
    if value < 0:
        raise InfeasibleCorrectionError(
            f"no nonnegative corrected regularizer: lambda1={lambda1}, "
            f"gamma={gamma}, sigma={sigma} (needs lambda1 >= "
            f"{sigma ** 2 * (gamma - 1.0)})"
        )
    return value


def lambda2_star_ridge_additive(lambda1: float, gamma: float,
                                sigma: float = 1.0) -> float:
    """Additive-form regularizer lambda1 - gamma/(1 + lambda1/sigma^2).

    Kept as a separate mode for comparison; it does not zero the bias
    residual except where it happens to coincide with
    :func:`lambda2_star_ridge`. May be negative, in which case the sketched
    normal equations can turn indefinite; solvers flag that instead of this
    function refusing.
    """
    if lambda1 < 0:
        raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
    if not gamma > 0:
        raise MomentUndefinedError(f"aspect ratio gamma must be > 0, got {gamma}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return lambda1 - gamma / (1.0 + lambda1 / sigma ** 2)


def lambda2_star_newton(lambda1: float, gamma: float, sigma: float = 1.0) -> float:
    """Corrected regularizer for averaged sketched Newton steps.

    (lambda1 + sigma^2 gamma) / (1 + gamma / (1 + lambda1 / sigma^2)).
    Always nonnegative, so regularized steps never lose feasibility. The
    result satisfies theta3(gamma, value/sigma^2) = 1/(1 + lambda1/sigma^2).
    """
    if lambda1 < 0:
        raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
    if not gamma > 0:
        raise MomentUndefinedError(f"aspect ratio gamma must be > 0, got {gamma}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    s2 = sigma ** 2
    return (lambda1 + s2 * gamma) / (1.0 + gamma / (1.0 + lambda1 / s2))


class StepScalings(NamedTuple):
    unbiased: float
    min_variance: float


def step_scalings(m: int, d: int) -> StepScalings:
    """Step scalings for averaged sketched Newton directions.

    ``unbiased`` = 1/theta1 removes the expectation bias; ``min_variance`` =
    theta1/theta2 minimizes the second moment of the scaled direction error.
    """
    t1 = theta1(m, d)
    t2 = theta2(m, d)
    return StepScalings(unbiased=1.0 / t1, min_variance=t1 / t2)


def direction_second_moment(alpha: float, m: int, d: int) -> float:
    """E ||H^{1/2}(alpha * dhat - d*)||^2 relative to ||H^{1/2} d*||^2.

    alpha^2 theta2 - 2 alpha theta1 + 1, for a single sketched direction.
    """
    return alpha * alpha * theta2(m, d) - 2.0 * alpha * theta1(m, d) + 1.0


def averaged_second_moment(alpha: float, q: int, m: int, d: int) -> float:
    """Same as :func:`direction_second_moment` for a q-worker average."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    t1 = theta1(m, d)
    t2 = theta2(m, d)
    return alpha * alpha * (t2 / q + (1.0 - 1.0 / q) * t1 * t1) - 2.0 * alpha * t1 + 1.0


def ihs_rate(q: int, m: int, d: int) -> float:
    """One-step error contraction factor of averaged iterative sketching.

    (theta2/theta1^2 - 1)/q per iteration, in squared scaled error.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    t1 = theta1(m, d)
    return (theta2(m, d) / (t1 * t1) - 1.0) / q


def predict_iterations(eps: float, q: int, m: int, d: int) -> float:
    """Iterations to reach relative squared error eps, from the rate bound.

    ln(1/eps) / (ln q - ln(theta2/theta1^2 - 1)); requires a contracting
    configuration (rate < 1).
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    rate = ihs_rate(q, m, d)
    if rate >= 1:
        raise ContractionError(
            f"no contraction at q={q}, m={m}, d={d} (rate {rate:.6g} >= 1)"
        )
    t1 = theta1(m, d)
    excess = theta2(m, d) / (t1 * t1) - 1.0
    return math.log(1.0 / eps) / (math.log(q) - math.log(excess))


class BiasCorrection(NamedTuple):
    """One worker's corrected regularizer and the parameters that produced it.

    ``step`` carries the direction scalings when the newton regime is
    unregularized (lambda1 = 0), where scaling rather than re-regularizing
    removes the bias.
    """

    lambda1: float
    lambda2_star: float
    sigma: float
    d: int
    m: int
    regime: str
    step: StepScalings | None = None


def per_worker_corrections(lambda1: float, m_list, d: int, sigma: float = 1.0,
                           regime: str = "ridge") -> list:
    """Per-worker corrections for heterogeneous sketch sizes.

    Worker k with sketch size m_k gets the corrected regularizer at
    gamma = d/m_k; averaging the per-worker unbiased estimates stays
    unbiased. Infeasible workers are reported by index.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if regime not in ("ridge", "newton"):
        raise ValueError(f"regime must be ridge or newton, got {regime!r}")
    out = []
    for k, m_k in enumerate(m_list):
        if m_k < 1:
            raise ValueError(f"worker {k}: sketch size must be >= 1, got {m_k}")
        gamma = d / m_k
        step = None
        try:
            if regime == "ridge":
                lam2 = lambda2_star_ridge(lambda1, gamma, sigma)
            else:
                lam2 = lambda2_star_newton(lambda1, gamma, sigma)
                if lambda1 == 0:
                    step = step_scalings(m_k, d)
        except (InfeasibleCorrectionError, MomentUndefinedError) as exc:
            raise type(exc)(f"worker {k} (m={m_k}): {exc}") from None
        out.append(BiasCorrection(lambda1, lam2, sigma, d, m_k, regime, step))
    return out
