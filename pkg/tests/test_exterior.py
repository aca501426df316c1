from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocycle_spectra.exterior import (
    GrassmannPoint, HyperplaneSection, InKernelError, MultiVector, QuasiProjectiveMap,
    apply_linear, complement, conorm_ratio, eccentricity, exterior_power, exterior_power_stack,
    fs_distance, hodge_complement, hyperplane_contains, kernel_hyperplane, permutation_sign,
    plucker_embed, quasi_projective_apply, subsets)
from cocycle_spectra.numeric_kernel import NumericError, exact_matrix, random_invertible

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 6)


def brute_minors(L, ell):
    # independent oracle: one numpy determinant per pair of index subsets
    d = L.shape[0]
    ss = list(combinations(range(d), ell))
    return np.array([[np.linalg.det(L[np.ix_(r, c)]) for c in ss] for r in ss])


def test_permutation_sign_and_complement():
    assert permutation_sign((0, 1, 2)) == 1
    assert permutation_sign((1, 0, 2)) == -1
    assert permutation_sign((2, 0, 1)) == 1
    assert permutation_sign((0, 0)) == 0
    assert complement((1, 3), 5) == (0, 2, 4)
    assert subsets(4, 2)[:3] == ((0, 1), (0, 2), (0, 3))


@given(seeds, dims, st.data())
def test_exterior_power_matches_brute_minors(seed, d, data):
    ell = data.draw(st.integers(1, d))
    L = np.random.default_rng(seed).standard_normal((d, d))
    assert np.allclose(exterior_power(L, ell), brute_minors(L, ell), atol=1e-10)


@given(seeds, dims, st.data())
def test_singular_values_are_products(seed, d, data):
    ell = data.draw(st.integers(1, d - 1))
    L = np.random.default_rng(seed).standard_normal((d, d))
    s = np.linalg.svd(L, compute_uv=False)
    expected = sorted((np.prod([s[i] for i in c]) for c in combinations(range(d), ell)),
                      reverse=True)
    got = np.linalg.svd(exterior_power(L, ell), compute_uv=False)
    assert np.allclose(got, expected, rtol=1e-8)


@given(seeds, dims, st.data())
def test_functoriality_and_action_on_wedges(seed, d, data):
    ell = data.draw(st.integers(0, d))
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, d, d))
    lhs = exterior_power(A @ B, ell)
    rhs = exterior_power(A, ell) @ exterior_power(B, ell)
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(np.linalg.norm(lhs), 1.0)
    if ell:
        V = rng.standard_normal((d, ell))
        assert np.allclose(exterior_power(A, ell) @ MultiVector.from_vectors(V).coeffs,
                           MultiVector.from_vectors(A @ V).coeffs)


def test_exact_exterior_power():
    L = exact_matrix([[1, 2, 0], [0, 1, 3], ["1/2", 0, 1]])
    P = exterior_power(L, 2)
    assert P.dtype == object
    # minor on rows (0,1), columns (0,1): 1*1 - 2*0
    assert P[0, 0] == 1
    assert np.allclose(P.astype(float), brute_minors(L.astype(float), 2))
    assert exterior_power(L, 3)[0, 0] == Fraction(4)
    with pytest.raises(ValueError):
        exterior_power(L, 4)


def test_exterior_power_stack_matches_single(rng):
    mats = rng.standard_normal((5, 4, 4))
    st_ = exterior_power_stack(mats, 2)
    for k in range(5):
        assert np.allclose(st_[k], exterior_power(mats[k], 2))
    assert exterior_power_stack(mats, 0).shape == (5, 1, 1)


def test_wedge_basis_and_anticommutativity(rng):
    e = [MultiVector.basis(4, (i,)) for i in range(4)]
    w = e[0].wedge(e[1])
    assert np.allclose(w.coeffs, MultiVector.basis(4, (0, 1)).coeffs)
    assert np.allclose(e[1].wedge(e[0]).coeffs, -w.coeffs)
    assert np.allclose(e[0].wedge(e[0]).coeffs, 0)
    assert MultiVector.basis(4, (1, 0)).coefficient((0, 1)) == -1
    u, v, x = (MultiVector.from_vectors(rng.standard_normal(4)) for _ in range(3))
    assert np.allclose(u.wedge(v).wedge(x).coeffs, u.wedge(v.wedge(x)).coeffs)
    with pytest.raises(ValueError):
        w.wedge(w).wedge(w)


def test_exact_wedge_stays_exact():
    a = MultiVector.from_vectors(exact_matrix([[1], [2], [3]]))
    b = MultiVector.from_vectors(exact_matrix([[0], ["1/2"], [1]]))
    c = a.wedge(b)
    assert c.coeffs.dtype == object
    assert list(c.coeffs) == [Fraction(1, 2), Fraction(1), Fraction(1, 2)]


@given(seeds, st.integers(2, 6), st.data())
def test_hodge_complement_pairs_to_inner_product(seed, d, data):
    ell = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(seed)
    omega = MultiVector(d, ell, rng.standard_normal(comb(d, ell)) + 1j * rng.standard_normal(comb(d, ell)))
    eta = MultiVector(d, ell, rng.standard_normal(comb(d, ell)))
    assert np.isclose(eta.top_scalar(hodge_complement(omega)), np.vdot(omega.coeffs, eta.coeffs))


@given(seeds, st.integers(4, 6), st.data())
def test_plucker_relations(seed, d, data):
    ell = data.draw(st.integers(2, d - 2))
    V = np.random.default_rng(seed).standard_normal((d, ell))
    assert MultiVector.from_vectors(V).plucker_residual() < 1e-10


def test_non_decomposable_detected():
    w = MultiVector.basis(4, (0, 1)).coeffs + MultiVector.basis(4, (2, 3)).coeffs
    mv = MultiVector(4, 2, w)
    # normalized relation p01 p23 - p02 p13 + p03 p12 = 1/2
    assert np.isclose(mv.plucker_residual(), 0.5)
    assert not mv.is_decomposable()
    with pytest.raises(NumericError):
        GrassmannPoint.from_vector(w, 4, 2)


def test_fs_distance_is_angle():
    for theta in (0.0, 1e-9, 0.3, np.pi / 2):
        assert np.isclose(fs_distance(np.array([1, 0]), np.array([np.cos(theta), np.sin(theta)])),
                          theta, atol=1e-15)
    assert fs_distance(np.array([1, 1j]), np.array([1j, -1])) < 1e-15


@given(seeds, st.integers(2, 6), st.data())
def test_grassmann_point_basis_roundtrip(seed, d, data):
    ell = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((d, ell))
    xi = plucker_embed(V)
    F = xi.basis()
    assert np.allclose(F.conj().T @ F, np.eye(ell), atol=1e-10)
    assert plucker_embed(F) == xi
    assert plucker_embed(V @ rng.standard_normal((ell, ell))) == xi


def test_rank_deficient_embedding_rejected():
    with pytest.raises(NumericError):
        plucker_embed(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_apply_linear_consistent_with_exterior_power(rng):
    L = random_invertible(5, rng)
    xi = plucker_embed(rng.standard_normal((5, 2)))
    image = apply_linear(L, xi)
    via_power = GrassmannPoint(MultiVector(5, 2, exterior_power(L, 2) @ xi.coords))
    assert image == via_power


def test_hyperplane_section_membership(rng):
    V = rng.standard_normal((4, 2))
    xi = plucker_embed(V)
    sec = HyperplaneSection.orthogonal_to(xi)
    assert sec.ell == 2
    assert not hyperplane_contains(sec, xi)
    perp = np.linalg.svd(V.T)[2][-1]  # a vector orthogonal to xi
    eta = plucker_embed(np.column_stack([perp, rng.standard_normal(4)]))
    assert hyperplane_contains(sec, eta)
    with pytest.raises(ValueError):
        hyperplane_contains(sec, plucker_embed(rng.standard_normal((4, 1))))
    with pytest.raises(ValueError):
        HyperplaneSection(MultiVector(4, 2, np.zeros(6)))


def test_eccentricity_diagonal():
    value, point = eccentricity(np.diag([8.0, 2.0, 1.0]), 1)
    assert np.isclose(value, 4.0)
    assert point == plucker_embed(np.array([1.0, 0, 0]))
    value, point = eccentricity(np.eye(3), 1)
    assert value == pytest.approx(1.0) and point.non_unique
    with pytest.raises(ValueError):
        eccentricity(np.eye(3), 3)


@given(seeds, st.integers(2, 6), st.data())
def test_most_expanded_subspace_is_optimal(seed, d, data):
    ell = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(seed)
    L = random_invertible(d, rng, max_cond=1e4)
    value, best = eccentricity(L, ell)
    s = np.linalg.svd(L, compute_uv=False)
    assert np.isclose(value, s[ell - 1] / s[ell], rtol=1e-9)
    assert np.isclose(conorm_ratio(L, best), value, rtol=1e-8)
    for _ in range(5):
        other = plucker_embed(rng.standard_normal((d, ell)))
        assert conorm_ratio(L, other) <= value * (1 + 1e-6)


def test_quasi_projective_kernel_in_section(rng):
    P = np.diag([3.0, 1.0, 0.0])
    Q = QuasiProjectiveMap.from_linear(P, 1)
    assert len(Q.kernel_basis) == 1
    sec = kernel_hyperplane(Q)
    kernel_point = plucker_embed(np.array([0.0, 0.0, 1.0]))
    assert hyperplane_contains(sec, kernel_point)
    with pytest.raises(InKernelError):
        quasi_projective_apply(Q, kernel_point)
    generic = plucker_embed(rng.standard_normal(3))
    out = quasi_projective_apply(Q, generic)
    assert abs(out.coords[2]) < 1e-12


def test_quasi_projective_invertible_has_empty_kernel(rng):
    L = random_invertible(4, rng)
    Q = QuasiProjectiveMap.from_linear(L, 2)
    assert kernel_hyperplane(Q) is None
    xi = plucker_embed(rng.standard_normal((4, 2)))
    assert quasi_projective_apply(Q, xi) == apply_linear(L, xi)
    Qc = QuasiProjectiveMap.from_carrier(exterior_power(np.diag([1.0, 1.0, 0.0]), 2), 3, 2)
    sec = kernel_hyperplane(Qc)
    assert sec is not None and hyperplane_contains(sec, plucker_embed(np.array([[1.0, 0], [0, 0], [0, 1]])))
