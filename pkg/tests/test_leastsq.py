import math

import numpy as np
import pytest

from oracles import lstsq_coefficients
from recovery.bases import BasisFamily, SpectrumModel, eval_basis, eval_matrix
from recovery.index import WeightRule, hyperbolic_cross
from recovery.leastsq import (
    Approximant,
    DesignMatrix,
    RankDeficiencyError,
    assemble_design,
    assemble_weighted_design,
    gram_deviation,
    least_squares,
    load_approximant,
    lsqr_solve,
    moore_penrose_norm,
    qr_solve,
    save_approximant,
    weighted_least_squares,
)
from recovery.sampling import NodeSet, RngStream, draw_chebyshev, draw_importance, draw_uniform_torus
from recovery.testfns import make_function, projection_error, recovery_error

FOURIER2 = BasisFamily("fourier", 2)


def _synthetic(mat: np.ndarray) -> DesignMatrix:
    n, M = mat.shape
    fam = BasisFamily("fourier", 1)
    iset = hyperbolic_cross(1, M, WeightRule("plain"))
    return DesignMatrix(n, M, "dense", mat, fam, iset)


def _probe_adjoint(A: DesignMatrix, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.M) + 1j * rng.standard_normal(A.M)
    w = rng.standard_normal(A.n) + 1j * rng.standard_normal(A.n)
    lhs = np.vdot(w, A.matvec(v))
    rhs = np.vdot(A.rmatvec(w), v)
    return abs(lhs - rhs) / (np.linalg.norm(v) * np.linalg.norm(w) * math.sqrt(A.n))


def test_fourier_entries_have_unit_modulus():
    nodes = draw_uniform_torus(300, 2, RngStream(0))
    iset = hyperbolic_cross(2, 40, WeightRule("plain"))
    A = assemble_design(FOURIER2, iset, nodes)
    np.testing.assert_allclose(np.abs(A.to_dense()), 1.0, rtol=1e-14)
    np.testing.assert_allclose(A.to_dense()[:, 0], 1.0, rtol=1e-14)


def test_hand_nodes_match_pointwise_evaluation():
    nodes = NodeSet(np.array([[0.1, 0.2], [0.5, 0.9], [0.33, 0.0]]), "external")
    iset = hyperbolic_cross(2, 2, WeightRule("plain"))
    A = assemble_design(FOURIER2, iset, nodes).to_dense()
    for j in range(3):
        for c, k in enumerate(iset.indices):
            assert A[j, c] == pytest.approx(eval_basis(FOURIER2, k, nodes.points[j]), abs=1e-15)


def test_weighted_design_scaling():
    pts = np.array([[-0.5], [0.2], [0.7]])
    fam = BasisFamily("chebyshev", 1)
    iset = hyperbolic_cross(1, 3, WeightRule("plain"), nonnegative=True)
    plain = assemble_design(fam, iset, NodeSet(pts, "external")).to_dense()
    weighted = assemble_weighted_design(fam, iset, NodeSet(pts, "external", np.array([4.0, 1.0, 0.0]))).to_dense()
    np.testing.assert_allclose(weighted[0], plain[0] / 2)
    np.testing.assert_allclose(weighted[1], plain[1])
    np.testing.assert_array_equal(weighted[2], 0.0)


def test_weighted_equals_plain_for_unit_density():
    nodes = draw_importance(400, SpectrumModel("fourier", 2, WeightRule("star", 1.0)), 10, RngStream(2))
    iset = hyperbolic_cross(2, 30, WeightRule("star", 1.0))
    np.testing.assert_array_equal(assemble_weighted_design(FOURIER2, iset, nodes).to_dense(),
                                  assemble_design(FOURIER2, iset, nodes).to_dense())


@pytest.mark.parametrize("kind,d", [("fourier", 2), ("chebyshev", 2), ("fourier", 3)])
def test_nufft_matches_dense(kind, d):
    fam = BasisFamily(kind, d)
    stream = RngStream(4)
    nodes = draw_uniform_torus(700, d, stream) if kind == "fourier" else draw_chebyshev(700, d, stream)
    iset = hyperbolic_cross(d, 120, WeightRule("plain"), nonnegative=fam.nonnegative)
    dense = assemble_design(fam, iset, nodes, storage="dense")
    fast = assemble_design(fam, iset, nodes, storage="nufft")
    rng = np.random.default_rng(1)
    c = rng.standard_normal(120) + 1j * rng.standard_normal(120)
    y = rng.standard_normal(700) + 1j * rng.standard_normal(700)
    np.testing.assert_allclose(fast.matvec(c), dense.matvec(c), atol=1e-7 * np.linalg.norm(c))
    np.testing.assert_allclose(fast.rmatvec(y), dense.rmatvec(y), atol=1e-7 * np.linalg.norm(y))
    assert _probe_adjoint(fast) < 1e-8
    assert _probe_adjoint(dense) < 1e-12


def test_adjoint_consistency_weighted():
    model = SpectrumModel("legendre", 1, s=2.0)
    nodes = draw_importance(300, model, 12, RngStream(3))
    A = assemble_weighted_design(BasisFamily("legendre"), model.index_set(11), nodes)
    assert _probe_adjoint(A) < 1e-12


def test_orthonormal_columns_give_adjoint_product():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((80, 10)))
    A = _synthetic(q.astype(complex))
    rhs = rng.standard_normal(80)
    coef, report = lsqr_solve(A, rhs, tol=1e-12, maxit=50)
    np.testing.assert_allclose(coef, q.T @ rhs, atol=1e-10)
    assert report.converged


def test_consistent_system_recovered():
    rng = np.random.default_rng(5)
    mat = rng.standard_normal((200, 50)) + 1j * rng.standard_normal((200, 50))
    c0 = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    A = _synthetic(mat)
    coef, _ = lsqr_solve(A, mat @ c0, tol=1e-12, maxit=500)
    np.testing.assert_allclose(coef, c0, atol=1e-6)
    ref = lstsq_coefficients(mat, mat @ c0)
    np.testing.assert_allclose(qr_solve(A, mat @ c0)[0], ref, atol=1e-10)


def test_well_conditioned_iteration_count():
    rng = np.random.default_rng(8)
    for trial in range(5):
        u, _ = np.linalg.qr(rng.standard_normal((400, 60)))
        v, _ = np.linalg.qr(rng.standard_normal((60, 60)))
        sv = np.linspace(1.0, math.sqrt(3.0), 60)
        A = _synthetic((u * sv) @ v.T)
        _, report = lsqr_solve(A, rng.standard_normal(400), tol=5e-8, maxit=100)
        assert report.iterations <= 17


def test_span_reproduction_fourier():
    iset = hyperbolic_cross(2, 25, WeightRule("plain"))
    nodes = draw_uniform_torus(400, 2, RngStream(6))
    rng = np.random.default_rng(6)
    c0 = rng.standard_normal(25) + 1j * rng.standard_normal(25)
    samples = eval_matrix(FOURIER2, iset, nodes.points) @ c0
    approx = least_squares(nodes, samples, FOURIER2, iset, tol=1e-13, maxit=200)
    np.testing.assert_allclose(approx.coefficients, c0, atol=1e-6)


def test_zero_samples_give_zero():
    iset = hyperbolic_cross(2, 10, WeightRule("plain"))
    nodes = draw_uniform_torus(100, 2, RngStream(1))
    assert np.all(least_squares(nodes, np.zeros(100), FOURIER2, iset).coefficients == 0)
    model = SpectrumModel("legendre", 1, s=2.0)
    lnodes = draw_importance(100, model, 5, RngStream(1))
    out = weighted_least_squares(lnodes, np.zeros(100), BasisFamily("legendre"), model.index_set(4))
    assert np.all(out.coefficients == 0)


def test_weighted_fourier_bit_equal_to_plain():
    model = SpectrumModel("fourier", 2, WeightRule("star", 1.0))
    nodes = draw_importance(500, model, 20, RngStream(12))
    iset = model.index_set(19)
    f = make_function("torus_kink", 2)
    y = f.eval(nodes.points)
    a = least_squares(nodes, y, FOURIER2, iset)
    b = weighted_least_squares(nodes, y, FOURIER2, iset)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)


def test_weighted_legendre_reproduces_eta3():
    model = SpectrumModel("legendre", 1, s=2.0)
    nodes = draw_importance(500, model, 20, RngStream(14))
    iset = model.index_set(19)
    fam = BasisFamily("legendre")
    y = eval_matrix(fam, np.array([[3]]), nodes.points)[:, 0]
    approx = weighted_least_squares(nodes, y, fam, iset, tol=1e-13, maxit=300)
    expected = np.zeros(19)
    expected[3] = 1.0
    np.testing.assert_allclose(approx.coefficients, expected, atol=1e-6)


def test_gram_deviation_orthogonal_columns():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.standard_normal((64, 8)))
    assert gram_deviation(_synthetic(q * 8.0)) < 1e-12


def test_gram_deviation_two_by_two():
    mat = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
    G = mat.T @ mat / 4
    a, b, c = G[0, 0], G[0, 1], G[1, 1]
    mid, rad = (a + c) / 2, math.hypot((a - c) / 2, b)
    expected = max(abs(mid - rad - 1), abs(mid + rad - 1))
    assert gram_deviation(_synthetic(mat.astype(complex))) == pytest.approx(expected, rel=1e-12)


def test_moore_penrose_norm():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((100, 12)))
    assert moore_penrose_norm(_synthetic(q * 10.0)) == pytest.approx(0.1, rel=1e-12)
    mat = rng.standard_normal((60, 9))
    assert moore_penrose_norm(_synthetic(mat)) == pytest.approx(np.linalg.norm(np.linalg.pinv(mat), 2), rel=1e-10)


def test_rank_deficiency_detected():
    mat = np.ones((30, 3))
    with pytest.raises(RankDeficiencyError):
        moore_penrose_norm(_synthetic(mat))
    nodes = NodeSet(np.zeros((20, 2)), "external")
    with pytest.raises(RankDeficiencyError):
        least_squares(nodes, np.ones(20), FOURIER2, hyperbolic_cross(2, 5, WeightRule("plain")))


def test_unbiased_gram():
    trials, n = 200, 50
    iset = hyperbolic_cross(2, 6, WeightRule("plain"))
    acc = np.zeros((6, 6), dtype=complex)
    for t in range(trials):
        L = eval_matrix(FOURIER2, iset, draw_uniform_torus(n, 2, RngStream(77, t)).points)
        acc += L.conj().T @ L / n
    assert np.max(np.abs(acc / trials - np.eye(6))) <= 5 / math.sqrt(trials * n)


def _kink_fit(n, M, seed):
    f = make_function("torus_kink", 2)
    iset = hyperbolic_cross(2, M, WeightRule("star", 1.0))
    nodes = draw_uniform_torus(n, 2, RngStream(seed))
    return f, iset, least_squares(nodes, f.eval(nodes.points), FOURIER2, iset)


def test_pythagoras_split():
    f, iset, approx = _kink_fit(2000, 60, 21)
    total, rem = recovery_error(f, approx)
    proj, prem = projection_error(f, iset)
    coef_ref, _ = f.coefficients(iset.indices)
    inner = float(np.sum(np.abs(approx.coefficients - coef_ref) ** 2))
    assert total ** 2 == pytest.approx(proj ** 2 + inner, rel=1e-6, abs=4 * (rem + prem))


def test_residual_local_optimality():
    f = make_function("torus_kink", 2)
    iset = hyperbolic_cross(2, 20, WeightRule("star", 1.0))
    nodes = draw_uniform_torus(400, 2, RngStream(31))
    y = f.eval(nodes.points)
    approx = least_squares(nodes, y, FOURIER2, iset, tol=1e-14, maxit=500)
    L = eval_matrix(FOURIER2, iset, nodes.points)
    base = np.linalg.norm(y - L @ approx.coefficients)
    for j in range(20):
        for delta in (1e-3, -1e-3, 1e-3j, -1e-3j):
            c = approx.coefficients.copy()
            c[j] += delta
            assert np.linalg.norm(y - L @ c) >= base - 1e-12


def test_approximant_roundtrip(tmp_path):
    _, iset, approx = _kink_fit(300, 15, 1)
    save_approximant(approx, tmp_path / "i.txt", tmp_path / "c.csv")
    back = load_approximant(FOURIER2, tmp_path / "i.txt", tmp_path / "c.csv", WeightRule("star", 1.0))
    np.testing.assert_array_equal(back.coefficients, approx.coefficients)
    pts = np.random.default_rng(0).random((10, 2))
    np.testing.assert_array_equal(back.evaluate(pts), approx.evaluate(pts))


def test_approximant_length_check():
    with pytest.raises(ValueError):
        Approximant(FOURIER2, hyperbolic_cross(2, 3, WeightRule("plain")), np.zeros(4))
