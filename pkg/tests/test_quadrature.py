import math

import numpy as np
import pytest

from oracles import pinv_cubature
from recovery.bases import BasisFamily, SpectrumModel, eval_matrix
from recovery.index import WeightRule, hyperbolic_cross
from recovery.leastsq import (
    DesignMatrix,
    RankDeficiencyError,
    assemble_design,
    assemble_weighted_design,
    least_squares,
    weighted_least_squares,
)
from recovery.quadrature import (
    CubatureRule,
    basis_integrals,
    cubature_weights,
    integrate,
    integrate_approximant,
    load_cubature,
    reweighted_cubature_weights,
    save_cubature,
)
from recovery.sampling import (
    NodeSet,
    RngStream,
    draw_chebyshev,
    draw_importance,
    draw_uniform_box,
    draw_uniform_torus,
)
from recovery.testfns import make_function
from recovery.wavelet import WaveletSpec, build_wavelet_index_set, extended_domain

CHEB1 = BasisFamily("chebyshev", 1)
CHEB2 = BasisFamily("chebyshev", 2)
FOURIER2 = BasisFamily("fourier", 2)


def test_fourier_integrals_indicator():
    iset = hyperbolic_cross(2, 9, WeightRule("plain"))
    b = basis_integrals(FOURIER2, iset, "torus")
    assert b[0] == 1 and np.all(b[1:] == 0)


def test_chebyshev_integrals():
    from recovery.index import IndexSet

    iset = IndexSet(1, WeightRule("plain"), np.array([[2]]), np.ones(1), True)
    assert basis_integrals(CHEB1, iset, "cube")[0].real == pytest.approx(-2 * math.sqrt(2) / 3, rel=1e-15)
    pair = IndexSet(2, WeightRule("plain"), np.array([[1, 4]]), np.ones(1), True)
    assert basis_integrals(CHEB2, pair, "cube")[0] == 0


def test_chebyshev_integrals_by_quadrature():
    iset = hyperbolic_cross(2, 40, WeightRule("plain"), nonnegative=True)
    g, w = np.polynomial.legendre.leggauss(80)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    ww = np.outer(w, w).ravel()
    ref = ww @ eval_matrix(CHEB2, iset, pts)
    np.testing.assert_allclose(basis_integrals(CHEB2, iset, "cube").real, ref, atol=1e-12)


def test_unsupported_measure():
    iset = hyperbolic_cross(2, 3, WeightRule("plain"))
    with pytest.raises(ValueError):
        basis_integrals(FOURIER2, iset, "cube")
    with pytest.raises(ValueError):
        basis_integrals(FOURIER2, iset, "sphere")


def test_single_constant_column_gives_monte_carlo():
    iset = hyperbolic_cross(2, 1, WeightRule("plain"))
    nodes = draw_uniform_torus(37, 2, RngStream(1))
    A = assemble_design(FOURIER2, iset, nodes)
    rule = cubature_weights(A, np.ones(1), nodes, "torus")
    np.testing.assert_allclose(rule.weights, np.full(37, 1 / 37), atol=1e-15)


def test_random_design_matches_pinv_oracle():
    rng = np.random.default_rng(0)
    mat = rng.standard_normal((60, 12)) + 1j * rng.standard_normal((60, 12))
    iset = hyperbolic_cross(1, 12, WeightRule("plain"))
    A = DesignMatrix(60, 12, "dense", mat, BasisFamily("fourier", 1), iset)
    nodes = NodeSet(rng.random((60, 1)), "external")
    b = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    rule = cubature_weights(A, b, nodes)
    np.testing.assert_allclose(rule.weights, pinv_cubature(mat, b), atol=1e-12)
    np.testing.assert_allclose(rule.weights @ mat, b, atol=1e-8)


def _check_exact(A, rule, b, dense):
    np.testing.assert_allclose(rule.weights @ dense, b, atol=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_exactness_property_fourier_and_chebyshev(seed):
    stream = RngStream(500, seed)
    iset = hyperbolic_cross(2, 30, WeightRule("plain"))
    nodes = draw_uniform_torus(200, 2, stream)
    A = assemble_design(FOURIER2, iset, nodes)
    b = basis_integrals(FOURIER2, iset, "torus")
    _check_exact(A, cubature_weights(A, b, nodes, "torus"), b, A.to_dense())
    ciset = hyperbolic_cross(2, 30, WeightRule("plain"), nonnegative=True)
    cnodes = draw_chebyshev(200, 2, stream.child(1))
    C = assemble_design(CHEB2, ciset, cnodes)
    cb = basis_integrals(CHEB2, ciset, "cube")
    _check_exact(C, cubature_weights(C, cb, cnodes, "cube"), cb, C.to_dense())


def test_exactness_nufft_storage():
    iset = hyperbolic_cross(2, 80, WeightRule("plain"), nonnegative=True)
    nodes = draw_chebyshev(600, 2, RngStream(3))
    A = assemble_design(CHEB2, iset, nodes, storage="nufft")
    b = basis_integrals(CHEB2, iset, "cube")
    rule = cubature_weights(A, b, nodes, "cube")
    dense = eval_matrix(CHEB2, iset, nodes.points)
    np.testing.assert_allclose(rule.weights @ dense, b, atol=1e-8)


def test_exactness_legendre_reweighted():
    model = SpectrumModel("legendre", 1, s=2.0)
    nodes = draw_importance(400, model, 16, RngStream(8))
    fam = BasisFamily("legendre")
    iset = model.index_set(15)
    A = assemble_weighted_design(fam, iset, nodes)
    b = basis_integrals(fam, iset, "cube")
    rule = reweighted_cubature_weights(A, b, nodes, "cube")
    np.testing.assert_allclose(rule.weights @ eval_matrix(fam, iset, nodes.points), b, atol=1e-8)
    assert integrate(rule, np.zeros(400)) == 0
    with pytest.raises(ValueError):
        reweighted_cubature_weights(assemble_design(fam, iset, nodes), b, nodes)


def test_exactness_wavelet():
    spec = WaveletSpec.daubechies(2)
    iset = build_wavelet_index_set(1, 2, spec)
    fam = BasisFamily("wavelet", 1, spec)
    box = extended_domain(1, 2, spec)
    nodes = draw_uniform_box(400, box, RngStream(4))
    A = assemble_design(fam, iset, nodes)
    b = basis_integrals(fam, iset, "omega")
    rule = cubature_weights(A, b, nodes, "omega")
    dense = eval_matrix(fam, iset, nodes.points)
    np.testing.assert_allclose(rule.weights @ dense, b, atol=1e-8)


def test_reweighted_equals_plain_for_fourier_model():
    model = SpectrumModel("fourier", 2, WeightRule("star", 1.0))
    nodes = draw_importance(300, model, 20, RngStream(2))
    iset = model.index_set(19)
    b = basis_integrals(FOURIER2, iset, "torus")
    plain = cubature_weights(assemble_design(FOURIER2, iset, nodes), b, nodes, "torus")
    weighted = reweighted_cubature_weights(assemble_weighted_design(FOURIER2, iset, nodes), b, nodes, "torus")
    np.testing.assert_allclose(weighted.weights, plain.weights, atol=1e-15)


def test_constant_reproduction_and_zero():
    iset = hyperbolic_cross(2, 20, WeightRule("plain"))
    nodes = draw_uniform_torus(150, 2, RngStream(5))
    rule = cubature_weights(assemble_design(FOURIER2, iset, nodes), basis_integrals(FOURIER2, iset, "torus"),
                            nodes, "torus")
    assert integrate(rule, np.full(150, 3.5)) == pytest.approx(3.5, abs=1e-8)
    assert integrate(rule, np.zeros(150)) == 0


def test_implicit_projection_identity():
    f = make_function("cube_bspline2", 2)
    iset = hyperbolic_cross(2, 50, WeightRule("plain"), nonnegative=True)
    nodes = draw_chebyshev(800, 2, RngStream(9))
    y = f.eval(nodes.points)
    A = assemble_design(CHEB2, iset, nodes)
    b = basis_integrals(CHEB2, iset, "cube")
    rule = cubature_weights(A, b, nodes, "cube")
    approx = least_squares(nodes, y, CHEB2, iset, tol=1e-14, maxit=1000)
    assert integrate(rule, y) == pytest.approx(integrate_approximant(approx, b), abs=1e-10)


def test_implicit_identity_weighted():
    model = SpectrumModel("legendre", 1, s=2.0)
    nodes = draw_importance(500, model, 20, RngStream(10))
    fam = BasisFamily("legendre")
    iset = model.index_set(19)
    y = np.exp(nodes.points[:, 0])
    A = assemble_weighted_design(fam, iset, nodes)
    b = basis_integrals(fam, iset, "cube")
    rule = reweighted_cubature_weights(A, b, nodes, "cube")
    approx = weighted_least_squares(nodes, y, fam, iset, tol=1e-14, maxit=1000)
    assert integrate(rule, y) == pytest.approx(integrate_approximant(approx, b), abs=1e-10)
    assert integrate(rule, y).real == pytest.approx(math.e - 1 / math.e, abs=1e-6)


def test_rank_deficient_design():
    iset = hyperbolic_cross(2, 5, WeightRule("plain"))
    nodes = NodeSet(np.zeros((10, 2)), "external")
    A = assemble_design(FOURIER2, iset, nodes)
    with pytest.raises(RankDeficiencyError):
        cubature_weights(A, basis_integrals(FOURIER2, iset, "torus"), nodes)


def test_length_checks():
    iset = hyperbolic_cross(2, 5, WeightRule("plain"))
    nodes = draw_uniform_torus(20, 2, RngStream(1))
    A = assemble_design(FOURIER2, iset, nodes)
    with pytest.raises(ValueError):
        cubature_weights(A, np.ones(4), nodes)
    rule = cubature_weights(A, basis_integrals(FOURIER2, iset, "torus"), nodes)
    with pytest.raises(ValueError):
        integrate(rule, np.ones(19))
    with pytest.raises(ValueError):
        CubatureRule(nodes, np.ones(3), "torus")


def test_save_load(tmp_path):
    iset = hyperbolic_cross(2, 10, WeightRule("plain"))
    nodes = draw_uniform_torus(40, 2, RngStream(1))
    rule = cubature_weights(assemble_design(FOURIER2, iset, nodes), basis_integrals(FOURIER2, iset, "torus"),
                            nodes, "torus")
    save_cubature(rule, tmp_path / "q.csv")
    back = load_cubature(tmp_path / "q.csv", "torus")
    np.testing.assert_array_equal(back.weights, rule.weights)
    np.testing.assert_array_equal(back.nodes.points, rule.nodes.points)
