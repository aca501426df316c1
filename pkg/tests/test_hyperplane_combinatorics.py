import itertools
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from cocycle_spectra.exterior import HyperplaneSection, MultiVector, exterior_power
from cocycle_spectra.hyperplane_combinatorics import (
    KCube, PreconditionError, check_disjointness_preconditions, complement_weights,
    decomposable_in_span, disjointness_check, exponent_matrix, find_k_cube, grouped_matrix,
    has_positive_coefficients, invariant_subspace_from_cube, is_decomposable, kernel2_check,
    kernel2_refutation, schur_polynomial, vandermonde, weight_classes)
from cocycle_spectra.numeric_kernel import exact_matrix

F = Fraction


def basis4(*subset):
    mv = MultiVector.basis(4, subset)
    return np.array([F(int(v.real)) for v in mv.coeffs], dtype=object)


def ups4():
    return MultiVector.from_vectors(exact_matrix([[1, 1], [2, -1], [3, 5], [1, 7]]))


# ---------------------------------------------------------------------------
# cubes

def test_kcube_basics():
    c = KCube(3, (2, 5))
    assert c.elements() == [3, 8, 5, 10]
    assert c.is_proper and c.k == 2
    assert KCube(0, (2, 2)).elements() == [0, 2, 2, 4] and not KCube(0, (2, 2)).is_proper
    lo, hi = c.faces()
    assert lo == KCube(3, (2,)) and hi == KCube(8, (2,))
    assert c.contained_in(range(11)) and not c.contained_in({3, 8, 5})
    with pytest.raises(ValueError):
        KCube(0, (0,))


def brute_has_cube(J, N, k):
    J = set(J)
    for sides in itertools.product(range(1, N), repeat=k):
        for c in J:
            if KCube(c, sides).contained_in(J):
                return True
    return False


@given(st.sets(st.integers(0, 23), min_size=1), st.integers(1, 2))
@settings(max_examples=60)
def test_find_k_cube_against_brute_force(J, k):
    N = 24
    fam = find_k_cube(J, N, len(J) / N, k)
    assert (fam is not None) == brute_has_cube(J, N, k)
    if fam is not None:
        assert len(fam.sides) == k and fam.bases
        assert all(cube.contained_in(J) for cube in fam.cubes())


def test_find_k_cube_known_sets():
    fam = find_k_cube(range(10), 10, 1.0, 1)
    assert fam.sides == (1,) and fam.bases == tuple(range(9)) and fam.constructive
    evens = [x for x in range(10) if x % 2 == 0]
    assert find_k_cube(evens, 10, 0.5, 1).sides == (2,)
    assert find_k_cube([x for x in range(20) if x % 2 == 0], 20, 0.5, 2).sides == (2, 2)
    with pytest.raises(ValueError):
        find_k_cube([1], 10, 0.5, 1)
    with pytest.raises(ValueError):
        find_k_cube(range(10), 10, 1.0, 0)


# ---------------------------------------------------------------------------
# invariant subspaces

def subspace_of_translates(H, B, idx):
    """Oracle: orthonormal basis of the intersection of B^i(H) by nullspaces."""
    normals = []
    for i in idx:
        img = np.linalg.matrix_power(B, i) @ H
        normals.append(np.linalg.svd(img.T)[2][-1])
    N = np.array(normals)
    _, s, vh = np.linalg.svd(N)
    rank = int(np.sum(s > 1e-9 * s[0]))
    return vh[rank:].conj().T


def test_invariant_subspace_generic_and_checked():
    rng = np.random.default_rng(1)
    d = 3
    B = rng.standard_normal((d, d))
    H = rng.standard_normal((d, d - 1))
    cube = KCube(0, (1, 2, 3))
    # H(I) for a 3-cube of translates of a generic plane in R^3 is {0}: codim 3 <= k
    sub, l = invariant_subspace_from_cube(H, B, cube)
    S = subspace_of_translates(H, B, sub.elements())
    S2 = subspace_of_translates(H, B, [i + l for i in sub.elements()])
    assert S.shape[1] == S2.shape[1]
    if S.shape[1]:
        Bl = np.linalg.matrix_power(B, l)
        image = Bl @ S
        assert np.allclose(image - S @ (S.conj().T @ image), 0, atol=1e-8)


def test_invariant_hyperplane_returns_smallest_side():
    B = exact_matrix([[2, 0, 0], [0, 3, 0], [0, 0, 5]])
    H = exact_matrix([[1, 0], [0, 1], [0, 0]])  # B-invariant coordinate plane
    sub, l = invariant_subspace_from_cube(H, B, KCube(4, (3, 2)))
    assert l == 2 and sub == KCube(4)


def test_invariant_subspace_precondition():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((4, 4))
    H = rng.standard_normal((4, 3))
    with pytest.raises(PreconditionError) as err:
        invariant_subspace_from_cube(H, B, KCube(0, (1, 2)), codim_cap=1)
    assert err.value.kind == "codimension"
    with pytest.raises(PreconditionError):
        invariant_subspace_from_cube(rng.standard_normal((4, 2)), B, KCube(0, (1,)))


# ---------------------------------------------------------------------------
# Vandermonde-type determinants

def test_vandermonde_known_values():
    r = vandermonde([0, 1, 2], [1, 2, 3])
    assert (r.det, r.product_part, r.schur_part) == (2, 2, 1)
    r = vandermonde([0, 2, 3], [1, 2, 3])
    # schur part is e_2(1, 2, 3) = 2 + 3 + 6
    assert (r.det, r.product_part, r.schur_part) == (22, 2, 11)
    assert not vandermonde([0, 1], [2, 2]).defined
    with pytest.raises(ValueError):
        vandermonde([1, 1], [1, 2])
    f = vandermonde([0, 2, 3], [1.0, 2.0, 3.0], exact=False)
    assert f.schur_part == pytest.approx(11.0)


@given(st.lists(st.integers(0, 7), min_size=2, max_size=4, unique=True),
       st.lists(st.fractions(F(1, 5), F(5)), min_size=4, max_size=4, unique=True))
@settings(max_examples=40)
def test_schur_quotient_positive_and_matches_sympy(ms, xs):
    m = sorted(ms)
    x = xs[:len(m)]
    r = vandermonde(m, x)
    poly = schur_polynomial(m)
    assert has_positive_coefficients(poly)
    assert r.schur_part == poly.eval(tuple(sympy.Rational(v.numerator, v.denominator) for v in x))
    assert r.schur_part > 0


# ---------------------------------------------------------------------------
# decomposability

@given(st.integers(0, 2**32 - 1), st.integers(4, 6), st.data())
def test_is_decomposable_agrees_with_plucker_relations(seed, d, data):
    ell = data.draw(st.integers(2, d - 2))
    rng = np.random.default_rng(seed)
    dec = MultiVector.from_vectors(rng.standard_normal((d, ell))).coeffs
    assert is_decomposable(dec, d, ell)
    generic = rng.standard_normal(len(dec))
    assert is_decomposable(generic, d, ell) == MultiVector(d, ell, generic).is_decomposable()


def test_exact_decomposability():
    assert is_decomposable(basis4(0, 1), 4, 2)
    assert not is_decomposable(basis4(0, 1) + basis4(2, 3), 4, 2)
    assert not is_decomposable(np.array([F(0)] * 6, dtype=object), 4, 2)


def test_span_search_pencils():
    # Plücker quadric on a(e01 + e23) + b(e02 - e13) is a^2 + b^2: complex roots only
    K = np.stack([basis4(0, 1) + basis4(2, 3), basis4(0, 2) - basis4(1, 3)], axis=1)
    res = decomposable_in_span(K, 4, 2)
    assert res.certified and res.witness is not None
    w = np.asarray(res.witness, dtype=complex)
    assert MultiVector(4, 2, w).plucker_residual() < 1e-12
    # a(e01 + e23) + b(e02 + e13): a^2 - b^2, rational roots
    K = np.stack([basis4(0, 1) + basis4(2, 3), basis4(0, 2) + basis4(1, 3)], axis=1)
    res = decomposable_in_span(K, 4, 2)
    assert res.witness.dtype == object and is_decomposable(res.witness, 4, 2)
    single = decomposable_in_span(K[:, :1], 4, 2)
    assert single.witness is None and single.certified
    assert decomposable_in_span(np.zeros((6, 0), dtype=object), 4, 2).witness is None


# ---------------------------------------------------------------------------
# disjointness

def test_disjointness_repeated_weights():
    B = exact_matrix([[8, 0, 0, 0], [0, 4, 0, 0], [0, 0, 2, 0], [0, 0, 0, 1]])
    sec = HyperplaneSection(ups4())
    full = disjointness_check(B, sec, 2, range(6))
    assert full.empty and full.kernel_dim == 1 and full.exact and full.certified
    short = disjointness_check(B, sec, 2, range(4))
    assert not short.empty and short.witness is not None
    # the witness lies in every translated section
    w = short.witness.coords
    for m in range(4):
        translated = exterior_power(np.diag(np.array([8.0, 4, 2, 1]) ** -m), 2) @ np.asarray(ups4().coeffs, dtype=float)
        assert abs(MultiVector(4, 2, w).top_scalar(MultiVector(4, 2, translated))) < 1e-8
    assert full.to_json()["empty"] is True


def test_disjointness_distinct_weights_and_float():
    B = exact_matrix([[7, 0, 0, 0], [0, 5, 0, 0], [0, 0, 3, 0], [0, 0, 0, 2]])
    res = disjointness_check(B, HyperplaneSection(ups4()), 2, range(6))
    assert res.empty and res.kernel_dim == 0
    rng = np.random.default_rng(3)
    V = rng.standard_normal((4, 4))
    Bf = V @ np.diag([7.0, 5, 3, 2]) @ np.linalg.inv(V)
    upsf = MultiVector.from_vectors(rng.standard_normal((4, 2)))
    resf = disjointness_check(Bf, HyperplaneSection(upsf), 2, range(6))
    assert resf.empty and not resf.exact


def test_disjointness_preconditions():
    sec = ups4()
    with pytest.raises(PreconditionError) as err:
        check_disjointness_preconditions(exact_matrix([[2, 0], [0, -2]]), MultiVector.from_vectors(exact_matrix([[1], [1]])))
    assert err.value.kind == "pinching"
    rot = np.array([[0.0, -2.0, 0, 0], [2.0, 0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 0.5]])
    with pytest.raises(PreconditionError) as err:
        check_disjointness_preconditions(rot, MultiVector(4, 2, as_complex(sec)))
    assert err.value.kind in ("complex", "pinching")
    B = exact_matrix([[8, 0, 0, 0], [0, 4, 0, 0], [0, 0, 2, 0], [0, 0, 0, 1]])
    # e01 pairs to zero with the eigenspace sum spanned by e0, e1
    with pytest.raises(PreconditionError) as err:
        check_disjointness_preconditions(B, MultiVector(4, 2, basis4(0, 1)))
    assert err.value.kind == "eigenspace"


def as_complex(mv):
    return np.array([complex(v) for v in mv.coeffs])


# ---------------------------------------------------------------------------
# grouped equations

def test_weights_and_classes():
    b = [F(8), F(4), F(2), F(1)]
    w = complement_weights(b, 2)
    assert w == [2, 4, 8, 8, 16, 32]
    assert weight_classes(w) == [[5], [4], [2, 3], [1], [0]]
    X = exponent_matrix(w, [0, 1, 2])
    assert X[2, 5] == 32 ** 2 and X.dtype == object
    G = grouped_matrix(w, ups4(), 2)
    assert G.shape == (5, 6)


def test_kernel2_on_basis_vectors_and_repeated_class():
    b = [8, 4, 2, 1]
    ups = ups4()
    for I in itertools.combinations(range(4), 2):
        res = kernel2_check(MultiVector(4, 2, basis4(*I)), b, ups)
        assert res.holds and not res.satisfies
        assert len(res.certificate) == 5
    zero = kernel2_check(MultiVector(4, 2, np.array([F(0)] * 6, dtype=object)), b, ups)
    assert zero.satisfies and zero.holds and zero.omega_zero
    with pytest.raises(ValueError):
        kernel2_check(MultiVector(4, 2, basis4(0, 3) + basis4(1, 2)), b, ups)


def test_kernel2_refutation_repeated_instance():
    rep = kernel2_refutation([8, 4, 2, 1], ups4(), 2, 2000, np.random.default_rng(4))
    assert rep.counterexamples == 0 and rep.min_residual > 1e-3
    assert rep.kernel_dim == 1 and rep.kernel_has_decomposable is False
    assert rep.to_json()["draws"] == 2000
