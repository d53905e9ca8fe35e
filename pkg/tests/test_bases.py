import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.legendre import leggauss

from oracles import chebyshev_normalized, legendre_normalized
from recovery.bases import (
    BasisFamily,
    DomainError,
    SpectrumModel,
    eval_basis,
    eval_legendre,
    eval_matrix,
    legendre_eigenvalue,
    legendre_kernel_diag,
    legendre_table,
    legendre_trace_tail,
)
from recovery.index import WeightRule, hyperbolic_cross


def test_fourier_constant():
    assert eval_basis(BasisFamily("fourier", 3), (0, 0, 0), (0.1, 0.7, 0.3)) == 1 + 0j


def test_chebyshev_examples():
    fam = BasisFamily("chebyshev", 1)
    assert abs(eval_basis(fam, (1,), 0.0)) < 1e-15
    assert eval_basis(fam, (2,), 1.0).real == pytest.approx(math.sqrt(2), rel=1e-15)


def test_legendre_examples():
    assert eval_legendre(0, 0.3) == 1.0
    assert eval_legendre(1, 1.0) == pytest.approx(math.sqrt(3), rel=1e-15)


def test_legendre_orthogonality_gauss():
    x, w = leggauss(20)
    assert abs(np.sum(w * eval_legendre(2, x) * eval_legendre(3, x)) / 2) < 1e-12


def test_legendre_table_matches_library_special_function():
    x = np.linspace(-1, 1, 101)
    table = legendre_table(40, x)
    for k in range(41):
        np.testing.assert_allclose(table[:, k], legendre_normalized(k, x), atol=1e-12)


def test_chebyshev_matches_polynomial_oracle():
    x = np.linspace(-1, 1, 57)
    fam = BasisFamily("chebyshev", 1)
    mat = eval_matrix(fam, np.arange(30)[:, None], x[:, None])
    for h in range(30):
        np.testing.assert_allclose(mat[:, h], chebyshev_normalized(h, x), atol=1e-12)


@pytest.mark.parametrize("kind,d", [("fourier", 2), ("chebyshev", 2), ("legendre", 1)])
def test_orthonormality_by_quadrature(kind, d):
    fam = BasisFamily(kind, d)
    iset = hyperbolic_cross(d, 25, WeightRule("plain"), nonnegative=fam.nonnegative)
    if kind == "fourier":
        g = (np.arange(64) + 0.5) / 64
        pts = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    elif kind == "chebyshev":
        g = np.cos(np.pi * (np.arange(64) + 0.5) / 64)
        pts = np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        g, gw = leggauss(64)
        pts, w = g[:, None], gw / 2
    L = eval_matrix(fam, iset, pts)
    G = L.conj().T @ (w[:, None] * L)
    np.testing.assert_allclose(G, np.eye(len(iset)), atol=1e-12)


def test_tensor_product_structure():
    fam = BasisFamily("chebyshev", 3)
    x = np.array([0.2, -0.7, 0.9])
    k = (3, 0, 5)
    expected = np.prod([chebyshev_normalized(h, np.array([t]))[0] for h, t in zip(k, x)])
    assert eval_basis(fam, k, x).real == pytest.approx(expected, rel=1e-13)


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_basis(BasisFamily("chebyshev", 1), (1,), 1.5)
    with pytest.raises(DomainError):
        eval_legendre(2, -1.2)
    with pytest.raises(ValueError):
        BasisFamily("legendre", 2)
    with pytest.raises(ValueError):
        BasisFamily("hermite", 1)


def test_fourier_periodic():
    fam = BasisFamily("fourier", 2)
    a = eval_basis(fam, (3, -2), (0.25, 0.6))
    b = eval_basis(fam, (3, -2), (1.25, -0.4))
    assert abs(a - b) < 1e-12


@given(st.floats(-1, 1), st.integers(0, 60))
@settings(max_examples=60, deadline=None)
def test_legendre_bounded_by_normalization(x, k):
    assert abs(eval_legendre(k, x)) <= math.sqrt(2 * k + 1) * (1 + 1e-12)


def test_kernel_diag_truncation_consistency():
    coarse, tail_coarse = legendre_kernel_diag(2.0, 0.0, 200)
    fine, tail_fine = legendre_kernel_diag(2.0, 0.0, 2000)
    assert coarse <= fine + 1e-15
    assert fine - coarse <= tail_coarse
    assert tail_fine < tail_coarse
    assert coarse >= 1.0


def test_kernel_diag_integrates_to_trace():
    x, w = leggauss(300)
    vals, tail = legendre_kernel_diag(2.0, x, 250)
    trace, rem = legendre_trace_tail(2.0, 0, 250)
    assert np.sum(w * vals) / 2 == pytest.approx(trace, rel=1e-12)


def test_kernel_diag_matches_eigen_sum_at_endpoint():
    # eta_k(1)^2 = 2k + 1, so K(1, 1) is a pure eigenvalue series.
    val, tail = legendre_kernel_diag(2.0, 1.0, 3000)
    k = np.arange(200000, dtype=float)
    ref = math.fsum(legendre_eigenvalue(k, 2.0) * (2 * k + 1))
    assert val <= ref + 1e-12 and ref <= val + tail


def test_spectrum_model_orders():
    model = SpectrumModel("fourier", 2, WeightRule("star", 1.0))
    lam = model.eigenvalues(50)
    assert lam[0] == 1.0 and np.all(np.diff(lam) <= 0)
    np.testing.assert_allclose(model.singular_values(50), np.sqrt(lam))
    leg = SpectrumModel("legendre", 1, s=2.0)
    lam = leg.eigenvalues(10)
    assert lam[1] == pytest.approx(1 / 5)
    assert np.all(np.diff(lam) < 0)
    assert leg.index_set(4).indices[:, 0].tolist() == [0, 1, 2, 3]


def test_spectrum_model_validation():
    with pytest.raises(ValueError):
        SpectrumModel("fourier", 2, WeightRule("plain"))
    with pytest.raises(ValueError):
        SpectrumModel("legendre", 2)
