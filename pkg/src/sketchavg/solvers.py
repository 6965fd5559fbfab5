"""Distributed sketched solvers and their direct (unsketched) oracle.

Three algorithms share the master/worker harness in :mod:`.cluster`:

* :func:`dist_ihs` - iterative Hessian-sketch least squares: fresh sketches
  every iteration, exact gradients, averaged sketched Newton directions with
  a moment-corrected step scale.
* :func:`dist_ridge_average` - one-shot averaged sketched ridge: each worker
  sketches [A | b] once, solves its small regularized system, and the master
  averages; corrected regularizers remove the averaging bias.
* :func:`dist_newton_sketch` - Newton sketch with averaging: per iteration
  each worker sketches the current Hessian factor; regularized problems get
  corrected worker regularizers, unregularized ones a corrected step scale.

Traces record per-round metrics against the direct optimum. All averaging
sums run in worker-index order, so results are identical under serial and
thread-pool execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import moments
from .cluster import ClusterConfig, row_ranges, run_cluster_round
from .linalg import (NotPositiveDefiniteError, solve_spd, solve_symmetric,
                     sym_sqrt)
from .problems import DomainError, Problem
from .sketches import SketchSpec, apply_sketch

TRACE_COLUMNS = ("t", "cost_gap", "errA_sq", "rel_x_err", "comm_scalars",
                 "wall_time_s")

# Armijo backtracking constants for the non-quadratic outer step.
_BACKTRACK_BETA = 0.5
_BACKTRACK_C = 1e-4
_MAX_BACKTRACKS = 60


@dataclass
class ConvergenceTrace:
    rows: list = field(default_factory=list)

    def append(self, t: int, cost_gap: float, errA_sq: float,
               rel_x_err: float, comm_scalars: int, wall_time_s: float) -> None:
        self.rows.append({
            "t": int(t),
            "cost_gap": float(cost_gap),
            "errA_sq": float(errA_sq),
            "rel_x_err": float(rel_x_err),
            "comm_scalars": int(comm_scalars),
            "wall_time_s": float(wall_time_s),
        })

    def column(self, name: str) -> list:
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return [row[name] for row in self.rows]

    def final(self) -> dict:
        return self.rows[-1]


@dataclass
class SolverReport:
    algorithm: str
    x: np.ndarray
    trace: ConvergenceTrace
    corrections: dict
    predicted: dict
    observed: dict
    warnings: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "corrections": self.corrections,
            "predicted": self.predicted,
            "observed": self.observed,
            "warnings": list(self.warnings),
            "final_x": [float(v) for v in self.x],
        }


def _cost_gap(f: float, f_star: float) -> float:
    # Relative gap when the optimum value has usable magnitude, absolute
    # otherwise (noiseless least squares has f* = 0).
    if abs(f_star) > 1e-12:
        return (f - f_star) / abs(f_star)
    return f - f_star


def _metrics(p: Problem, x: np.ndarray, x_star: np.ndarray,
             f_star: float) -> tuple:
    try:
        gap = _cost_gap(p.objective(x), f_star)
    except DomainError:
        gap = float("inf")
    diff = x - x_star
    err_a = p.a @ diff
    denom = np.linalg.norm(x_star)
    rel = float(np.linalg.norm(diff) / (denom if denom > 0 else 1.0))
    return gap, float(err_a @ err_a), rel


def solve_direct(p: Problem, tol: float = 1e-10, max_iters: int = 200) -> np.ndarray:
    """Unsketched optimum: normal equations for quadratics, damped Newton
    otherwise, to gradient norm <= tol * (1 + ||g(0)||)."""
    if p.kind in ("lstsq", "ridge"):
        gram = p.a.T @ p.a
        if p.kind == "ridge" and p.lambda1 > 0:
            gram = gram + p.lambda1 * np.eye(p.d)
        try:
            return solve_spd(gram, p.a.T @ p.b)
        except NotPositiveDefiniteError as exc:
            raise np.linalg.LinAlgError(
                f"normal equations are singular (pivot {exc.pivot}); "
                "the data matrix is rank deficient") from exc
    x = np.zeros(p.d)
    g0 = np.linalg.norm(p.gradient(x))
    target = tol * (1.0 + g0)
    decrement = float("inf")
    for _ in range(max_iters):
        g = p.gradient(x)
        fac = p.hessian_factor(x)
        hess = fac.half.T @ fac.half + fac.lambda1_eff * np.eye(p.d)
        step = -solve_spd(hess, g)
        # Half the squared Newton decrement bounds the remaining
        # suboptimality; the gradient norm alone has a floating point floor
        # once barrier weights reach ~1e5.
        decrement = -0.5 * float(g @ step)
        if (np.linalg.norm(g) <= target
                or decrement <= tol * (1.0 + abs(p.objective(x)))):
            return x
        x_new = _backtrack(p, x, step, g)
        if x_new is None:
            break
        x = x_new
    if (np.linalg.norm(p.gradient(x)) <= 1e-8 * (1.0 + g0)
            or decrement <= 1e4 * tol * (1.0 + abs(p.objective(x)))):
        return x
    raise RuntimeError("direct Newton solve did not converge")


def _backtrack(p: Problem, x, step, g, alpha0: float = 1.0):
    """Armijo line search; treats domain violations as infinite cost.

    Returns the new point, or None when no acceptable step was found.
    """
    slope = float(g @ step)
    try:
        f0 = p.objective(x)
    except DomainError:
        return None
    alpha = alpha0
    for _ in range(_MAX_BACKTRACKS):
        trial = x + alpha * step
        try:
            f_trial = p.objective(trial)
        except DomainError:
            alpha *= _BACKTRACK_BETA
            continue
        if f_trial <= f0 + _BACKTRACK_C * alpha * slope:
            return trial
        alpha *= _BACKTRACK_BETA
    return None


def _mean_rows(stacked: np.ndarray) -> np.ndarray:
    # Fixed worker-index order: rows are stacked by index before reduction.
    return np.sum(stacked, axis=0) / stacked.shape[0]


def dist_ihs(p: Problem, cluster: ClusterConfig, T: int,
             mu: float | None = None, x_star: np.ndarray | None = None,
             threads: int = 1) -> SolverReport:
    """Averaged iterative Hessian sketch for least squares.

    Fresh sketches per worker per iteration; the master computes the exact
    gradient, averages the sketched Newton directions, and steps by mu
    (default 1/theta1, requiring homogeneous sketch sizes m > d + 3).
    """
    if p.kind != "lstsq":
        raise ValueError(f"dist_ihs solves lstsq problems, got kind {p.kind!r}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    m_list = cluster.m_list
    predicted: dict = {"rate": None}
    if mu is None:
        if len(set(m_list)) != 1:
            raise moments.MomentUndefinedError(
                "default step scale needs homogeneous sketch sizes; "
                "pass mu explicitly")
        try:
            mu = 1.0 / moments.theta1(m_list[0], p.d)
        except moments.MomentUndefinedError:
            raise moments.MomentUndefinedError(
                f"default step scale needs m > d + 1, got m={m_list[0]}, "
                f"d={p.d}; pass mu explicitly") from None
    if len(set(m_list)) == 1:
        try:
            predicted["rate"] = moments.ihs_rate(cluster.q, m_list[0], p.d)
        except moments.MomentUndefinedError:
            pass

    if x_star is None:
        x_star = solve_direct(p)
    f_star = p.objective(x_star)
    gens = [w.stream.generator() for w in cluster.workers]

    x = np.zeros(p.d)
    trace = ConvergenceTrace()
    gap, err_a, rel = _metrics(p, x, x_star, f_star)
    trace.append(0, gap, err_a, rel, 0, 0.0)
    comm = 0
    for t in range(1, T + 1):
        g = p.gradient(x)

        def direction(k, w):
            hs = apply_sketch(w.sketch, p.a, gens[k])
            try:
                return -solve_spd(hs.T @ hs, g)
            except NotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(
                    f"sketched Gram singular (m={w.m}, d={p.d})",
                    exc.pivot) from exc

        dirs, wall = run_cluster_round(cluster, direction, threads)
        x = x + mu * _mean_rows(np.stack(dirs))
        comm += cluster.q * p.d
        gap, err_a, rel = _metrics(p, x, x_star, f_star)
        trace.append(t, gap, err_a, rel, comm, wall)

    return SolverReport(
        algorithm="ihs",
        x=x,
        trace=trace,
        corrections={"mu": mu},
        predicted=predicted,
        observed={"iterations": T, "final_errA_sq": trace.final()["errA_sq"]},
    )


RIDGE_CORRECTIONS = ("zero-bias", "vanilla", "additive")


def ridge_lambda2(correction: str, lambda1: float, gamma: float,
                  sigma: float) -> float:
    if correction == "zero-bias":
        return moments.lambda2_star_ridge(lambda1, gamma, sigma)
    if correction == "additive":
        return moments.lambda2_star_ridge_additive(lambda1, gamma, sigma)
    if correction == "vanilla":
        return lambda1
    raise ValueError(f"unknown ridge correction {correction!r}")


def dist_ridge_average(p: Problem, cluster: ClusterConfig, correction: str,
                       sigma: float | None = None,
                       x_star: np.ndarray | None = None,
                       threads: int = 1) -> SolverReport:
    """One-shot averaged sketched ridge regression.

    Each worker sketches [A | b] with a single sketch, solves its d x d
    regularized system at the corrected lambda2, and the master averages.
    The trace records metrics of the partial averages over the first j
    workers, j = 1..q.
    """
    if p.kind != "ridge":
        raise ValueError(
            f"dist_ridge_average solves ridge problems, got kind {p.kind!r}")
    if sigma is None:
        sigma = p.sigma_heuristic(np.zeros(p.d))
    lambda2 = [ridge_lambda2(correction, p.lambda1, p.d / w.m, sigma)
               for w in cluster.workers]

    if x_star is None:
        x_star = solve_direct(p)
    f_star = p.objective(x_star)
    gens = [w.stream.generator() for w in cluster.workers]
    stacked = np.hstack([p.a, p.b[:, None]])

    def estimate(k, w):
        sk = apply_sketch(w.sketch, stacked, gens[k])
        sa, sb = sk[:, :-1], sk[:, -1]
        gram = sa.T @ sa + lambda2[k] * np.eye(p.d)
        rhs = sa.T @ sb
        try:
            return solve_spd(gram, rhs), False
        except NotPositiveDefiniteError:
            xk, _ = solve_symmetric(gram, rhs)
            return xk, True

    outputs, wall = run_cluster_round(cluster, estimate, threads)
    warnings = [
        f"sketched system indefinite for worker {k} (lambda2={lambda2[k]:.6g});"
        " used symmetric-indefinite solve"
        for k, (_, flag) in enumerate(outputs) if flag
    ]

    estimates = np.stack([xk for xk, _ in outputs])
    trace = ConvergenceTrace()
    running = np.zeros(p.d)
    x_final = np.zeros(p.d)
    for j in range(1, cluster.q + 1):
        running = running + estimates[j - 1]
        x_final = running / j
        gap, err_a, rel = _metrics(p, x_final, x_star, f_star)
        trace.append(j, gap, err_a, rel, j * p.d, wall)

    return SolverReport(
        algorithm="ridge-average",
        x=x_final,
        trace=trace,
        corrections={"mode": correction, "sigma": sigma,
                     "lambda2_per_worker": lambda2},
        predicted={},
        observed={"workers": cluster.q,
                  "final_rel_x_err": trace.final()["rel_x_err"]},
        warnings=warnings,
    )


NEWTON_CORRECTIONS = ("zero-bias", "vanilla")
STEP_POLICIES = ("unbiased", "min-variance")


def dist_newton_sketch(p: Problem, cluster: ClusterConfig,
                       steps="unbiased", eps: float = 1e-8,
                       max_iters: int = 50, correction: str = "zero-bias",
                       sigma_mode: str | None = None,
                       x_star: np.ndarray | None = None,
                       threads: int = 1) -> SolverReport:
    """Averaged Newton sketch.

    Regularized problems (reg_mult * lambda1 > 0): workers solve with the
    corrected regularizer from the newton zero-bias condition (``correction``
    = "zero-bias") or with lambda2 = reg_mult * lambda1 ("vanilla"); the
    averaged direction is used unscaled. Unregularized problems: workers
    solve the plain sketched system and the direction is scaled per worker
    by ``steps`` ("unbiased", "min-variance", or an explicit float).

    Stops when the averaged Newton decrement -g^T dbar / 2 <= eps, or after
    max_iters. Outer step is 1 for quadratics and Armijo backtracking
    otherwise; a non-descent averaged direction rejects the iteration and
    halves the outer step cap.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    lambda1_eff = p.reg_mult * p.lambda1
    regularized = lambda1_eff > 0

    alpha_s = None
    if not regularized:
        if isinstance(steps, str):
            if steps not in STEP_POLICIES:
                raise ValueError(f"unknown step policy {steps!r}")
            scal = [moments.step_scalings(w.m, p.d) for w in cluster.workers]
            if steps == "unbiased":
                alpha_s = [s.unbiased for s in scal]
            else:
                alpha_s = [s.min_variance for s in scal]
        else:
            alpha_s = [float(steps)] * cluster.q
    elif correction not in NEWTON_CORRECTIONS:
        raise ValueError(f"unknown newton correction {correction!r}")

    if x_star is None:
        x_star = solve_direct(p)
    f_star = p.objective(x_star)
    gens = [w.stream.generator() for w in cluster.workers]
    quadratic = p.kind in ("lstsq", "ridge")
    ranges = row_ranges(p.n, cluster.q) if cluster.partitioned else None

    x = np.zeros(p.d)
    trace = ConvergenceTrace()
    gap, err_a, rel = _metrics(p, x, x_star, f_star)
    trace.append(0, gap, err_a, rel, 0, 0.0)

    comm = 0
    alpha_cap = 1.0
    warnings: list = []
    per_iter_corrections: list = []
    iters_done = 0
    stopped_by = "max_iters"
    final_decrement = None

    for t in range(1, max_iters + 1):
        wall = 0.0
        if cluster.partitioned:
            def local_grad(k, w):
                lo, hi = ranges[k]
                return p.data_gradient(x, lo, hi)

            parts, wall_g = run_cluster_round(cluster, local_grad, threads)
            g = np.sum(np.stack(parts), axis=0) + p.reg_gradient(x)
            comm += cluster.q * p.d
            wall += wall_g
        else:
            g = p.gradient(x)

        fac = p.hessian_factor(x)
        half = fac.half
        if regularized:
            sigma = p.sigma_heuristic(x, sigma_mode)
            if correction == "zero-bias":
                lambda2 = [moments.lambda2_star_newton(lambda1_eff, p.d / w.m,
                                                       sigma)
                           for w in cluster.workers]
            else:
                lambda2 = [lambda1_eff] * cluster.q
            per_iter_corrections.append(
                {"t": t, "sigma": sigma, "lambda2_per_worker": lambda2})
        else:
            lambda2 = [0.0] * cluster.q

        def direction(k, w):
            hs = apply_sketch(w.sketch, half, gens[k])
            gram = hs.T @ hs
            if lambda2[k] > 0:
                gram = gram + lambda2[k] * np.eye(p.d)
            dk = -solve_spd(gram, g)
            if alpha_s is not None:
                dk = alpha_s[k] * dk
            return dk

        dirs, wall_d = run_cluster_round(cluster, direction, threads)
        comm += cluster.q * p.d
        wall += wall_d
        dbar = _mean_rows(np.stack(dirs))

        decrement = -0.5 * float(g @ dbar)
        final_decrement = decrement
        if decrement <= eps:
            stopped_by = "decrement"
            break

        slope = float(g @ dbar)
        if slope > 0:
            warnings.append(
                f"iteration {t}: averaged direction is not a descent "
                "direction; step rejected")
            alpha_cap *= 0.5
            iters_done = t
            gap, err_a, rel = _metrics(p, x, x_star, f_star)
            trace.append(t, gap, err_a, rel, comm, wall)
            if alpha_cap < 1e-12:
                warnings.append("outer step cap collapsed; stopping")
                stopped_by = "step_collapse"
                break
            continue

        if quadratic:
            x_new = x + min(1.0, alpha_cap) * dbar
        else:
            x_new = _backtrack(p, x, dbar, g, alpha0=min(1.0, alpha_cap))
            if x_new is None:
                warnings.append(
                    f"iteration {t}: line search found no acceptable step;"
                    " step rejected")
                alpha_cap *= 0.5
                iters_done = t
                gap, err_a, rel = _metrics(p, x, x_star, f_star)
                trace.append(t, gap, err_a, rel, comm, wall)
                if alpha_cap < 1e-12:
                    warnings.append("outer step cap collapsed; stopping")
                    stopped_by = "step_collapse"
                    break
                continue
        x = x_new
        iters_done = t
        gap, err_a, rel = _metrics(p, x, x_star, f_star)
        trace.append(t, gap, err_a, rel, comm, wall)

    corrections: dict = {"regularized": regularized}
    if regularized:
        corrections["mode"] = correction
        corrections["per_iteration"] = per_iter_corrections
    else:
        corrections["policy"] = steps if isinstance(steps, str) else "fixed"
        corrections["alpha_s_per_worker"] = alpha_s

    return SolverReport(
        algorithm="newton-sketch",
        x=x,
        trace=trace,
        corrections=corrections,
        predicted={},
        observed={"iterations": iters_done, "stopped_by": stopped_by,
                  "final_decrement": final_decrement},
        warnings=warnings,
    )


def direction_stats_grid(h_half: np.ndarray, g: np.ndarray, m: int,
                         trials: int, alphas, lambda1: float, lambda2: float,
                         rng: np.random.Generator) -> list:
    """Monte Carlo error statistics of single-sketch Newton directions.

    For each alpha in ``alphas`` (sharing the same sketch draws), estimates
    the mean and second moment of e = H^{1/2}(alpha * dhat - d*), where
    d* = -H^{-1} g with H = h_half^T h_half + lambda1 I and dhat solves the
    sketched system with lambda2 in place of lambda1. Returns one dict per
    alpha with bias_norm, bias_se, second_moment, second_moment_se.
    """
    if trials < 2:
        raise ValueError(f"trials must be >= 2, got {trials}")
    n, d = h_half.shape
    hess = h_half.T @ h_half + lambda1 * np.eye(d)
    d_star = -solve_spd(hess, g)
    root = sym_sqrt(hess)
    target = root @ d_star

    spec = SketchSpec("gaussian", m)
    # Unscaled sketched directions; alpha scaling is applied afterwards so
    # every alpha sees identical draws.
    raw = np.empty((trials, d))
    for i in range(trials):
        hs = apply_sketch(spec, h_half, rng)
        gram = hs.T @ hs
        if lambda2 > 0:
            gram = gram + lambda2 * np.eye(d)
        raw[i] = root @ solve_spd(gram, -g)

    out = []
    for alpha in np.atleast_1d(np.asarray(alphas, dtype=np.float64)):
        err = alpha * raw - target
        mean_err = err.mean(axis=0)
        sq = np.sum(err * err, axis=1)
        second = float(sq.mean())
        bias_norm = float(np.linalg.norm(mean_err))
        cov_trace = max(second - bias_norm * bias_norm, 0.0)
        out.append({
            "alpha": float(alpha),
            "bias_norm": bias_norm,
            "bias_se": float(np.sqrt(cov_trace / trials)),
            "second_moment": second,
            "second_moment_se": float(sq.std(ddof=1) / np.sqrt(trials)),
            "trials": trials,
        })
    return out


def single_sketch_direction_stats(h_half, g, m, trials, alpha_s, lambda1,
                                  lambda2, rng) -> dict:
    """Single-alpha convenience wrapper over :func:`direction_stats_grid`."""
    return direction_stats_grid(h_half, g, m, trials, [alpha_s], lambda1,
                                lambda2, rng)[0]


def ridge_single_sketch_stats(p: Problem, m: int, lambda2: float, trials: int,
                              rng: np.random.Generator,
                              x_star: np.ndarray | None = None) -> dict:
    """Monte Carlo bias statistics of single-sketch ridge estimates.

    Sketches [A | b] per trial, solves the lambda2-regularized system, and
    measures e = xhat - x* against the exact ridge optimum at the problem's
    lambda1. Relative norms are scaled by ||x*||.
    """
    if p.kind != "ridge":
        raise ValueError(f"needs a ridge problem, got kind {p.kind!r}")
    if trials < 2:
        raise ValueError(f"trials must be >= 2, got {trials}")
    if x_star is None:
        x_star = solve_direct(p)
    norm_star = np.linalg.norm(x_star)
    stacked = np.hstack([p.a, p.b[:, None]])
    spec = SketchSpec("gaussian", m)

    err = np.empty((trials, p.d))
    for i in range(trials):
        sk = apply_sketch(spec, stacked, rng)
        sa, sb = sk[:, :-1], sk[:, -1]
        gram = sa.T @ sa + lambda2 * np.eye(p.d)
        rhs = sa.T @ sb
        try:
            xk = solve_spd(gram, rhs)
        except NotPositiveDefiniteError:
            xk, _ = solve_symmetric(gram, rhs)
        err[i] = xk - x_star
    mean_err = err.mean(axis=0)
    sq = np.sum(err * err, axis=1)
    second = float(sq.mean())
    bias_norm = float(np.linalg.norm(mean_err))
    cov_trace = max(second - bias_norm * bias_norm, 0.0)
    return {
        "bias_norm": bias_norm,
        "bias_se": float(np.sqrt(cov_trace / trials)),
        "rel_bias_norm": bias_norm / norm_star,
        "rel_bias_se": float(np.sqrt(cov_trace / trials) / norm_star),
        "second_moment": second,
        "trials": trials,
        "norm_x_star": float(norm_star),
    }
