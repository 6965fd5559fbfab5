import numpy as np
import pytest

from sketchavg.linalg import RngStream
from sketchavg.problems import (Barrier, DomainError, LeastSquares, Logistic,
                                Ridge, generate_problem, load_problem,
                                save_problem)


def fd_gradient(p, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (p.objective(x + e) - p.objective(x - e)) / (2 * h)
    return g


def make_each_kind(seed=61, n=30, d=6):
    rng = RngStream(seed).generator()
    return [
        generate_problem("lstsq", n, d, rng, noise=0.5),
        generate_problem("ridge", n, d, rng, noise=0.5, lambda1=0.7),
        generate_problem("logistic", n, d, rng, lambda1=0.3),
        generate_problem("barrier", n, d, rng, lambda1=2.0, bound=5.0),
    ]


def test_objective_anchors_at_origin():
    rng = RngStream(62).generator()
    n, d = 25, 4
    a = rng.standard_normal((n, d))
    b = rng.standard_normal(n)
    y = (rng.random(n) < 0.5).astype(float)
    c = rng.standard_normal(d)

    x0 = np.zeros(d)
    assert LeastSquares(a, b).objective(x0) == pytest.approx(
        0.5 * float(b @ b), rel=1e-14)
    assert Ridge(a, b, 3.0).objective(x0) == pytest.approx(
        0.5 * float(b @ b), rel=1e-14)
    assert Logistic(a, y, 0.0).objective(x0) == pytest.approx(
        n * np.log(2.0), rel=1e-14)
    bound = 4.0
    scale = 0.01  # keep ||A 0||_inf trivially inside the box
    barr = Barrier(scale * a, c, 1.5, bound)
    want = -2 * n * np.log(bound) + 1.5 * float(c @ c)
    assert barr.objective(x0) == pytest.approx(want, rel=1e-13)


def test_gradients_match_finite_differences():
    rng = RngStream(63).generator()
    for p in make_each_kind():
        x = 0.05 * rng.standard_normal(p.d)
        g = p.gradient(x)
        ref = fd_gradient(p, x)
        assert np.allclose(g, ref, rtol=1e-5, atol=1e-6), p.kind


def test_data_gradient_partitions_sum():
    for p in make_each_kind(seed=64):
        x = 0.02 * RngStream(65).generator().standard_normal(p.d)
        cuts = [0, 7, 13, p.n]
        parts = sum(p.data_gradient(x, lo, hi)
                    for lo, hi in zip(cuts, cuts[1:]))
        assert np.allclose(parts + p.reg_gradient(x), p.gradient(x), atol=1e-12)


def test_hessian_factor_contract():
    mults = {"lstsq": 0, "ridge": 1, "logistic": 1, "barrier": 2}
    for p in make_each_kind(seed=66):
        x = 0.02 * RngStream(67).generator().standard_normal(p.d)
        fac = p.hessian_factor(x)
        assert fac.reg_mult == mults[p.kind]
        assert fac.lambda1_eff == fac.reg_mult * p.lambda1
        full = fac.half.T @ fac.half + fac.lambda1_eff * np.eye(p.d)
        # Hessian = d(gradient)/dx by central differences.
        h = 1e-5
        for i in range(p.d):
            e = np.zeros(p.d)
            e[i] = h
            col = (p.gradient(x + e) - p.gradient(x - e)) / (2 * h)
            assert np.allclose(full[:, i], col, rtol=1e-4, atol=1e-4), p.kind


def test_hessian_half_row_count():
    ps = make_each_kind(seed=68)
    x = np.zeros(ps[0].d)
    assert ps[0].hessian_half(x).shape[0] == ps[0].n
    assert ps[2].hessian_half(x).shape[0] == ps[2].n
    # Barrier stacks [A; -A].
    assert ps[3].hessian_half(x).shape[0] == 2 * ps[3].n


def test_sigma_heuristics():
    rng = RngStream(69).generator()
    n, d = 30, 5
    a = rng.standard_normal((n, d))
    b = rng.standard_normal(n)
    x0 = np.zeros(d)

    ls = LeastSquares(a, b)
    assert ls.sigma_heuristic(x0, "mean-diag") == pytest.approx(1.0)
    sv = np.linalg.svd(a, compute_uv=False)
    assert ls.sigma_heuristic(x0, "mean-sv") == pytest.approx(sv.mean(), rel=1e-12)
    assert ls.sigma_heuristic(x0, "min-sv") == pytest.approx(sv.min(), rel=1e-12)
    assert ls.sigma_heuristic(x0) == ls.sigma_heuristic(x0, "mean-sv")

    y = (rng.random(n) < 0.5).astype(float)
    lg = Logistic(a, y, 0.1)
    # expit(0) = 1/2 so every weight is sqrt(1/4).
    assert lg.sigma_heuristic(x0, "mean-diag") == pytest.approx(0.5, rel=1e-14)
    assert lg.sigma_heuristic(x0) == lg.sigma_heuristic(x0, "mean-diag")

    with pytest.raises(ValueError, match="sigma mode"):
        ls.sigma_heuristic(x0, "median-sv")


def test_barrier_domain_error():
    a = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    barr = Barrier(a, np.zeros(2), 1.0, 1.0)
    inside = np.array([0.3, 0.3])
    assert barr.margins_ok(inside)
    assert np.isfinite(barr.objective(inside))
    on_edge = np.array([1.0, 0.0])
    assert not barr.margins_ok(on_edge)
    with pytest.raises(DomainError) as err:
        barr.objective(on_edge)
    assert err.value.worst_margin == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        barr.gradient(np.array([2.0, 0.0]))


def test_barrier_objective_convex_along_segment():
    p = make_each_kind(seed=70)[3]
    rng = RngStream(71).generator()
    x1 = 1e-3 * rng.standard_normal(p.d)
    x2 = 1e-3 * rng.standard_normal(p.d)
    mid = 0.5 * (x1 + x2)
    assert p.objective(mid) <= 0.5 * (p.objective(x1) + p.objective(x2)) + 1e-12


def test_logistic_label_validation():
    a = np.ones((3, 2))
    with pytest.raises(ValueError, match="labels"):
        Logistic(a, np.array([0.0, 0.5, 1.0]), 0.0)


def test_vector_validation():
    a = np.ones((4, 2))
    with pytest.raises(ValueError, match="length"):
        LeastSquares(a, np.ones(3))
    p = LeastSquares(a, np.ones(4))
    with pytest.raises(ValueError, match="length"):
        p.objective(np.ones(3))
    with pytest.raises(ValueError, match="non-finite"):
        p.objective(np.array([np.nan, 1.0]))


def test_generate_problem_determinism():
    p1 = generate_problem("ridge", 20, 4, RngStream(72).generator(),
                          noise=0.3, lambda1=1.0)
    p2 = generate_problem("ridge", 20, 4, RngStream(72).generator(),
                          noise=0.3, lambda1=1.0)
    assert np.array_equal(p1.a, p2.a)
    assert np.array_equal(p1.b, p2.b)
    assert np.array_equal(p1.x_planted, p2.x_planted)


def test_generate_problem_identical_sv():
    p = generate_problem("lstsq", 50, 8, RngStream(73).generator(),
                         identical_sv=True, sigma0=2.0)
    sv = np.linalg.svd(p.a, compute_uv=False)
    assert np.allclose(sv, 2.0, atol=1e-10)


def test_generate_problem_mean_sv_scaling():
    p = generate_problem("lstsq", 50, 8, RngStream(74).generator(), sigma0=3.0)
    sv = np.linalg.svd(p.a, compute_uv=False)
    assert sv.mean() == pytest.approx(3.0, rel=1e-12)


def test_generate_noiseless_planted_optimum():
    p = generate_problem("lstsq", 40, 6, RngStream(75).generator(), noise=0.0)
    assert np.linalg.norm(p.gradient(p.x_planted)) <= 1e-10
    assert abs(np.linalg.norm(p.x_planted) - 1.0) <= 1e-12


def test_generate_validation():
    rng = RngStream(76).generator()
    with pytest.raises(ValueError, match="unknown problem kind"):
        generate_problem("lasso", 10, 2, rng)
    with pytest.raises(ValueError, match="n >= d >= 1"):
        generate_problem("lstsq", 2, 10, rng)


@pytest.mark.parametrize("kind,kwargs", [
    ("lstsq", {"noise": 0.2}),
    ("ridge", {"noise": 0.2, "lambda1": 0.9}),
    ("logistic", {"lambda1": 0.4}),
    ("barrier", {"lambda1": 1.5, "bound": 3.0}),
])
def test_save_load_round_trip(tmp_path, kind, kwargs):
    p = generate_problem(kind, 15, 3, RngStream(77).generator(), **kwargs)
    out = tmp_path / kind
    save_problem(p, str(out), extra_manifest={"seed": 77})
    q = load_problem(str(out))
    assert q.kind == p.kind
    assert np.array_equal(q.a, p.a)
    assert q.lambda1 == p.lambda1
    assert np.array_equal(q.x_planted, p.x_planted)
    if kind == "barrier":
        assert np.array_equal(q.c, p.c)
        assert q.bound == p.bound
    elif kind == "logistic":
        assert np.array_equal(q.y, p.y)
    else:
        assert np.array_equal(q.b, p.b)
    x = 0.01 * np.ones(p.d)
    assert q.objective(x) == p.objective(x)
