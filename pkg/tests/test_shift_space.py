import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocycle_spectra.numeric_kernel import exact_matrix
from cocycle_spectra.shift_space import (
    CocycleSpec, DepthIncompatible, MarkovMeasure, Potential, PotentialDepthError, TwoSidedPoint,
    ZeroMeasureBase, backward_average, build_induced, constant_spec, cylinder_measure,
    distortion_bound, induce_cocycle, log_jacobian_potential, oscillation, symbol_distance)

F = Fraction


def exact_markov():
    P = exact_matrix([["1/2", "1/2", 0], ["1/3", 0, "2/3"], ["1/4", "1/4", "1/2"]])
    # stationary vector solved by hand: pi P = pi
    pi = np.array([F(4, 11), F(3, 11), F(4, 11)], dtype=object)
    return MarkovMeasure(P, pi)


@st.composite
def markov_measures(draw, max_n=4):
    n = draw(st.integers(2, max_n))
    rows = [draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)) for _ in range(n)]
    P = np.array(rows)
    P /= P.sum(axis=1, keepdims=True)
    return MarkovMeasure.from_transition(P)


def test_periodic_and_homoclinic_points():
    p = TwoSidedPoint.periodic([0, 1, 2])
    assert p.window(-3, 6) == (0, 1, 2, 0, 1, 2, 0, 1, 2)
    assert p.shift(3).window(0, 5) == p.window(0, 5)
    assert p.shift(1).coord(0) == 1 and p.shift(-1).coord(0) == 2
    z = TwoSidedPoint.homoclinic([0], [1, 1])
    assert z.window(-3, 4) == (0, 0, 0, 1, 1, 0, 0)
    assert z.same_past(TwoSidedPoint.periodic([0]))
    assert z.shift(2).same_future(TwoSidedPoint.periodic([0]))
    with pytest.raises(ValueError):
        TwoSidedPoint((), (), (), (0,))


@given(st.lists(st.integers(0, 3), min_size=1, max_size=4),
       st.lists(st.integers(0, 3), max_size=4), st.integers(-6, 6))
def test_mirror_reflects_coordinates(period, insert, shift):
    x = TwoSidedPoint.homoclinic(period, insert).shift(shift)
    y = x.mirrored()
    for n in range(-10, 10):
        assert y.coord(n) == x.coord(-n - 1)
    assert y.mirrored().window(-10, 10) == x.window(-10, 10)


def test_symbol_distance():
    x = TwoSidedPoint.periodic([0])
    y = TwoSidedPoint.homoclinic([0], [0, 0, 1])
    assert symbol_distance(x, y) == 0.5 ** 2
    assert symbol_distance(x, x) == 0.0


def test_measure_validation():
    with pytest.raises(ValueError):
        MarkovMeasure(np.array([[0.5, 0.4], [0.5, 0.5]]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        MarkovMeasure(np.array([[0.9, 0.1], [0.5, 0.5]]), np.array([0.5, 0.5]))


@given(markov_measures(), st.integers(1, 4))
def test_cylinders_of_fixed_length_partition(mu, n):
    total = sum(cylinder_measure(mu, w) for w in itertools.product(range(mu.size), repeat=n))
    assert np.isclose(total, 1.0)


def test_exact_cylinders_and_null_cylinder():
    mu = exact_markov()
    assert cylinder_measure(mu, (0, 1, 2)) == F(4, 11) * F(1, 2) * F(2, 3)
    assert cylinder_measure(mu, (0, 2)) == 0
    assert cylinder_measure(mu, ()) == 1
    with pytest.raises(ValueError):
        cylinder_measure(mu, (5,))


@given(markov_measures(), st.integers(1, 4))
def test_reversal_preserves_cylinder_masses(mu, n):
    rev = mu.reversed()
    for w in itertools.product(range(mu.size), repeat=n):
        assert np.isclose(cylinder_measure(rev, w[::-1]), cylinder_measure(mu, w))


@pytest.mark.parametrize("k", range(1, 7))
def test_backward_average_exact_normalization(k):
    mu = exact_markov()
    for anchor in range(3):
        ba = backward_average(mu, (anchor,), k)
        assert sum(w for _, w in ba.branches) == 1
        assert ba.unaccounted == 0 and not ba.warning


def test_backward_average_truncation_accounting():
    mu = MarkovMeasure.bernoulli([0.5, 0.25, 0.25])
    ba = backward_average(mu, (0,), 2, truncation=2)
    assert np.isclose(ba.total, 0.75 ** 2)
    assert np.isclose(ba.total + ba.unaccounted, 1.0) and ba.warning
    carried = MarkovMeasure.bernoulli([0.5, 0.5], truncated_mass=0.003)
    ba = backward_average(carried, (1,), 3)
    assert np.isclose(ba.total + ba.unaccounted, 1.003) and not ba.warning
    with pytest.raises(ValueError):
        backward_average(mu, (0,), 0)


def test_sample_path_frequencies():
    mu = MarkovMeasure.from_transition(np.array([[0.9, 0.1], [0.3, 0.7]]))
    assert np.allclose(mu.stationary, [0.75, 0.25])
    path = mu.sample_path(200_000, np.random.default_rng(1))
    assert abs(np.mean(path == 0) - 0.75) < 0.01
    pairs = np.mean((path[:-1] == 0) & (path[1:] == 1))
    assert abs(pairs - 0.075) < 0.005
    b = MarkovMeasure.bernoulli([0.2, 0.8]).sample_path(100_000, np.random.default_rng(2))
    assert abs(np.mean(b) - 0.8) < 0.01


def test_distortion_and_oscillation():
    bern = MarkovMeasure.bernoulli([0.3, 0.7])
    assert distortion_bound(bern) == 1.0
    assert oscillation(log_jacobian_potential(bern), 1) == pytest.approx(0.0)
    mu = MarkovMeasure.from_transition(np.array([[0.9, 0.1], [0.3, 0.7]]))
    psi = log_jacobian_potential(mu)
    assert oscillation(psi, 1) > 0
    assert oscillation(psi, 2) == 0.0
    assert distortion_bound(mu) > 1
    assert distortion_bound(exact_markov()) == float("inf")


def test_oscillation_tail_and_schedule():
    psi = Potential(lambda x: sum(s * 0.5 ** i for i, s in enumerate(x)), 4, 2,
                    tail_bound=lambda depth: 0.5 ** depth)
    # coordinates 1..3 move the value by at most 0.5 + 0.25 + 0.125
    assert oscillation(psi, 1) == pytest.approx(0.875 + 2 * 0.0625)
    big = Potential(lambda x: 0.0, 30, 2)
    with pytest.raises(PotentialDepthError):
        oscillation(big, 1)
    scheduled = Potential(lambda x: 0.0, 30, 2, schedule=lambda k: 2.0 ** -k)
    assert oscillation(scheduled, 3) == 0.125


def test_spec_products():
    A = exact_matrix([[2, 0], [0, 1]])
    B = exact_matrix([[1, 1], [0, 1]])
    spec = CocycleSpec((A, B), MarkovMeasure.bernoulli([0.5, 0.5]))
    assert spec.exact and spec.locally_constant and spec.dim == 2
    x = TwoSidedPoint.homoclinic([0], [1, 0, 1])
    expected = B @ A @ B
    assert all(a == b for a, b in zip(spec.product_along(x, 3).flat, expected.flat))
    assert all(a == b for a, b in zip(spec.word_product([1, 0, 1]).flat, expected.flat))
    with pytest.raises(ValueError):
        CocycleSpec((A,), MarkovMeasure.bernoulli([0.5, 0.5]))


def test_perturbed_matrix_at():
    base = (np.eye(2), 2 * np.eye(2))
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    spec = CocycleSpec(base, MarkovMeasure.bernoulli([0.5, 0.5]),
                       past_perturbation=(np.zeros((2, 2)), E),
                       future_perturbation=(np.zeros((2, 2)), np.zeros((2, 2))),
                       amplitude=1.0, decay=0.5, depth=40)
    assert not spec.locally_constant
    x = TwoSidedPoint.periodic([1])  # every past coordinate is symbol 1
    assert np.allclose(spec.matrix_at(x), 2 * np.eye(2) + E)  # sum of 0.5**k
    assert np.allclose(spec.step_at(x, 5), spec.matrix_at(x.shift(5)))


def test_first_return_words_bernoulli():
    mu = MarkovMeasure.bernoulli([F(1, 2), F(1, 2)])
    ind = build_induced(mu, (0,), 6)
    # returns to [0] at time r read 0 1^{r-1} 0 with mass 2^{-r}
    assert [rw.word for rw in ind.return_words] == [(0,) + (1,) * (r - 1) + (0,) for r in range(1, 7)]
    assert [rw.mass for rw in ind.return_words] == [2.0 ** -r for r in range(1, 7)]
    assert ind.captured_mass == pytest.approx(1 - 2.0 ** -6)
    with pytest.raises(ZeroMeasureBase):
        build_induced(exact_markov(), (0, 2), 4)


def test_overlapping_base_first_return():
    mu = MarkovMeasure.bernoulli([0.5, 0.5])
    ind = build_induced(mu, (0, 0), 3)
    words = {rw.word: rw.r for rw in ind.return_words}
    assert words == {(0, 0, 0): 1, (0, 0, 1, 0, 0): 3}
    # Kac with a long horizon: mean return time of [00] is 1 / (1/4)
    long = build_induced(mu, (0, 0), 24)
    assert not long.truncated
    assert abs(long.mean_return_time - 4) / 4 < 0.05
    skew = build_induced(MarkovMeasure.bernoulli([0.3, 0.7]), (0,), 60)
    assert skew.mean_return_time == pytest.approx(1 / 0.3, rel=1e-6)


def test_induce_cocycle_products():
    A, B = np.diag([2.0, 0.5]), np.array([[1.0, 1.0], [0.0, 1.0]])
    spec = CocycleSpec((A, B), MarkovMeasure.bernoulli([0.5, 0.5]))
    ind = build_induced(spec.measure, (0,), 5)
    induced = induce_cocycle(spec, ind)
    for rw, M in zip(ind.return_words, induced.matrices):
        assert np.allclose(M, spec.word_product(rw.word[:rw.r]))
    assert induced.return_times == tuple(range(1, 6))
    assert induced.measure.truncated_mass == pytest.approx(2.0 ** -5)
    pert = CocycleSpec((A, B), spec.measure, past_perturbation=(A, B), amplitude=0.1)
    with pytest.raises(DepthIncompatible):
        induce_cocycle(pert, ind)


def test_constant_spec_and_json():
    spec = constant_spec(np.eye(2), 3)
    assert spec.alphabet_size == 3
    assert spec.to_json()["measure"]["stationary"] == [pytest.approx(1 / 3)] * 3
    assert exact_markov().to_json()["stationary"] == ["4/11", "3/11", "4/11"]
