from fractions import Fraction

import numpy as np
import pytest

from cocycle_spectra.holonomy import holder_perturbation
from cocycle_spectra.lyapunov import estimate_spectrum
from cocycle_spectra.numeric_kernel import exact_matrix
from cocycle_spectra.shift_space import CocycleSpec, MarkovMeasure, TwoSidedPoint
from cocycle_spectra.simplicity import (
    adjoint_cocycle, check_pinching, check_simple, check_twisting, homoclinic_data,
    homoclinic_point, mirrored_pair, monoid_eccentricity, monoid_pinching_twisting,
    periodic_data, transition_map)
from simplicity_corpus import corpus

F = Fraction


def verdict(spec, float_mode=False):
    if float_mode:
        spec = CocycleSpec(tuple(m.astype(float) for m in spec.matrices),
                           MarkovMeasure.bernoulli([0.5, 0.5]))
    pd = periodic_data(spec, [0])
    hd = homoclinic_data(spec, pd, [1])
    return check_simple(spec, pd, hd)


def test_homoclinic_point_layout():
    z = homoclinic_point([0, 1], [1, 1, 1], 4)
    assert z.window(-4, 8) == (0, 1, 0, 1, 1, 1, 1, 1, 0, 1, 0, 1)
    assert z.same_past(TwoSidedPoint.periodic([0, 1]))
    with pytest.raises(ValueError):
        homoclinic_point([0, 1], [1], 3)
    with pytest.raises(ValueError):
        homoclinic_point([0], [1, 1], 1)


def test_corpus_verdicts_exact():
    for spec, expected in corpus(24, seed=7):
        v = verdict(spec)
        assert v.exact
        assert v.simple == expected


def test_corpus_verdicts_float():
    for spec, expected in corpus(12, seed=8):
        assert verdict(spec, float_mode=True).simple == expected


def test_pinching_exact_gap():
    spec = CocycleSpec((exact_matrix([[4, 0], [0, 1]]), exact_matrix([[1, 1], [1, 2]])),
                       MarkovMeasure.bernoulli([0.5, 0.5]))
    pd = periodic_data(spec, [0])
    assert pd.exact
    assert check_pinching(pd) == (True, 3.0)
    rot = CocycleSpec((np.array([[0.0, -1.0], [1.0, 0.0]]), np.eye(2)), MarkovMeasure.bernoulli([0.5, 0.5]))
    ok, gap = check_pinching(periodic_data(rot, [0]))
    assert not ok and gap == pytest.approx(0.0)


def test_twisting_minor_witness():
    T = exact_matrix([[1, 2, 3], [2, 4, 1], [1, 1, 1]])
    res = check_twisting(T)
    # the 2x2 minor on rows 1,2 and columns 1,2 vanishes
    assert not res.ok and res.smallest_minor == 0
    assert res.witness == ((1, 2), (1, 2))
    good = exact_matrix([[2, 1], [1, 1]])
    assert check_twisting(good).ok
    with pytest.raises(ValueError):
        check_twisting(np.eye(2), exact=True)


def test_periodic_transition_map_in_eigenbasis():
    spec, _ = corpus(1, seed=3)[0]
    pd = periodic_data(spec, [0])
    hd = homoclinic_data(spec, pd, [1])
    tm = transition_map(spec, pd, hd)
    V = pd.eigen.eigenvectors
    assert all(a == b for a, b in zip((V @ tm.matrix).flat, (spec.matrices[1] @ V).flat))


def test_holder_perturbed_spec_uses_holonomies():
    base = CocycleSpec((np.diag([1.2, 0.9]), np.array([[1.0, 1.0], [1.0, 2.0]])),
                       MarkovMeasure.bernoulli([0.5, 0.5]))
    P = (np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))
    spec = holder_perturbation(base, P, P, 0.01)
    pd = periodic_data(spec, [0])
    hd = homoclinic_data(spec, pd, [1])
    assert hd.stable_h.iterations_used > 0 and hd.unstable_h.iterations_used > 0
    tm = transition_map(spec, pd, hd)
    psi = hd.stable_h.matrix @ hd.along_matrix @ hd.unstable_h.matrix
    assert np.allclose(pd.eigen.eigenvectors @ tm.matrix, psi @ pd.eigen.eigenvectors)
    v = check_simple(spec, pd, hd)
    assert v.simple and not v.exact
    assert v.to_json()["simple"] is True


def test_adjoint_is_involution_and_mirrors_verdict():
    for spec, expected in corpus(6, seed=9):
        adj = adjoint_cocycle(spec)
        back = adjoint_cocycle(adj)
        assert all(np.array_equal(a, b) for a, b in zip(back.matrices, spec.matrices))
        assert adj.mirrored and not back.mirrored
        pd = periodic_data(spec, [0])
        hd = homoclinic_data(spec, pd, [1])
        word, insert, l = mirrored_pair(pd, hd)
        pda = periodic_data(adj, word)
        hda = homoclinic_data(adj, pda, insert, l)
        assert check_simple(adj, pda, hda).simple == expected


def test_adjoint_spectrum_markov(rng):
    spec = CocycleSpec(tuple(rng.standard_normal((2, 2, 2))),
                       MarkovMeasure.from_transition(np.array([[0.8, 0.2], [0.4, 0.6]])))
    adj = adjoint_cocycle(spec)
    assert not adj.measure.is_bernoulli()
    a = estimate_spectrum(spec, 50_000, 10, np.random.default_rng(1))
    b = estimate_spectrum(adj, 50_000, 10, np.random.default_rng(2))
    assert np.all(np.abs(a.exponents - b.exponents) < 4 * np.hypot(a.standard_errors, b.standard_errors))


def test_monoid_search():
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    B = np.array([[1.0, 0.0], [1.0, 1.0]])
    rep = monoid_pinching_twisting([A, B], 20, np.random.default_rng(0), max_length=4,
                                   F=np.array([1.0, 0.0]), Gs=[np.array([0.0, 1.0])])
    assert rep.best_eccentricity >= monoid_eccentricity(np.linalg.matrix_power(A, 4)) * (1 - 1e-9)
    assert rep.twisting_found and rep.words_examined == 2 + 4 + 8 + 16 + 20
    # a diagonal monoid never moves e1 off the axis e1
    D = monoid_pinching_twisting([np.diag([2.0, 1.0])], 5, np.random.default_rng(0), max_length=3,
                                 F=np.array([1.0, 0.0]), Gs=[np.array([1.0, 0.0])])
    assert not D.twisting_found
    assert monoid_eccentricity(np.diag([4.0, 2.0, 1.0])) == 2.0
