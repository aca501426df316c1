"""Shift spaces, Markov measures, cocycle specifications and inducing.

Symbols are non-negative integers. A two-sided point is stored as its
stable half ``(x_{-1}, x_{-2}, ...)`` and its unstable half ``(x_0, x_1, ...)``,
each a finite word followed by a periodic tail.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .numeric_kernel import as_float, exact_identity, is_exact

Word = tuple  # tuple[int, ...]


class NullCylinderWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# points

@dataclass(frozen=True)
class TwoSidedPoint:
    """Eventually periodic two-sided sequence.

    ``future`` holds ``x_0, x_1, ...`` and is followed by ``future_tail``
    repeated forever; ``past`` holds ``x_{-1}, x_{-2}, ...`` followed by
    ``past_tail`` repeated forever (listed in the same backward order).
    ``offset`` shifts the origin: coordinate ``n`` reads raw position ``n + offset``.
    """

    past: Word
    future: Word
    past_tail: Word
    future_tail: Word
    offset: int = 0

    def __post_init__(self):
        if not self.past_tail or not self.future_tail:
            raise ValueError("periodic tails must be nonempty")

    @classmethod
    def periodic(cls, word: Sequence[int]) -> "TwoSidedPoint":
        """The periodic point ``... w w . w w ...`` with ``x_0 = w[0]``."""
        w = tuple(word)
        return cls((), (), tuple(reversed(w)), w)

    @classmethod
    def homoclinic(cls, period_word: Sequence[int], insert: Sequence[int]) -> "TwoSidedPoint":
        """``... p p . insert p p ...``: agrees with the periodic point in the past."""
        p = tuple(period_word)
        return cls((), tuple(insert), tuple(reversed(p)), p)

    def _raw(self, n: int) -> int:
        if n >= 0:
            if n < len(self.future):
                return self.future[n]
            return self.future_tail[(n - len(self.future)) % len(self.future_tail)]
        m = -n - 1
        if m < len(self.past):
            return self.past[m]
        return self.past_tail[(m - len(self.past)) % len(self.past_tail)]

    def coord(self, n: int) -> int:
        return self._raw(n + self.offset)

    def window(self, lo: int, hi: int) -> Word:
        return tuple(self.coord(n) for n in range(lo, hi))

    def shift(self, n: int = 1) -> "TwoSidedPoint":
        """``f^n`` of this point (negative ``n`` shifts backwards)."""
        return replace(self, offset=self.offset + n)

    def mirrored(self) -> "TwoSidedPoint":
        """Reflection ``y_n = x_{-n-1}``; conjugates the inverse shift to the shift."""
        return TwoSidedPoint(self.future, self.past, self.future_tail, self.past_tail, -self.offset)

    def same_future(self, other: "TwoSidedPoint", depth: int = 64) -> bool:
        return self.window(0, depth) == other.window(0, depth)

    def same_past(self, other: "TwoSidedPoint", depth: int = 64) -> bool:
        return self.window(-depth, 0) == other.window(-depth, 0)

    def to_json(self) -> dict:
        return {"past": list(self.past), "future": list(self.future),
                "past_tail": list(self.past_tail), "future_tail": list(self.future_tail),
                "offset": self.offset}


def symbol_distance(x: TwoSidedPoint, y: TwoSidedPoint, theta: float = 0.5,
                    depth: int = 128) -> float:
    """``theta ** N`` with ``N`` the first |n| where the points disagree."""
    for n in range(depth):
        if x.coord(n) != y.coord(n) or x.coord(-n - 1) != y.coord(-n - 1):
            return theta ** n
    return 0.0


# ---------------------------------------------------------------------------
# measures

@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Stationary Markov measure on a finite (possibly truncated) alphabet.

    ``truncated_mass`` is the probability of symbols dropped when a countable
    alphabet was cut to a finite one; it is 0 for genuinely finite alphabets.
    """

    transition: np.ndarray
    stationary: np.ndarray
    truncated_mass: float = 0.0

    def __post_init__(self):
        P = as_float(self.transition).astype(float)
        pi = as_float(self.stationary).astype(float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or pi.shape != (P.shape[0],):
            raise ValueError("transition must be square and match the stationary vector")
        if np.any(P < 0) or np.any(pi < 0):
            raise ValueError("negative probabilities")
        if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError("rows of the transition matrix must sum to 1")
        if not np.allclose(pi @ P, pi, atol=1e-10, rtol=0) or abs(pi.sum() - 1) > 1e-10:
            raise ValueError("stationary vector is not invariant")

    @property
    def size(self) -> int:
        return len(self.stationary)

    @classmethod
    def bernoulli(cls, probs: Sequence, truncated_mass: float = 0.0) -> "MarkovMeasure":
        p = np.asarray(probs)
        exact = p.dtype == object
        P = np.tile(p, (len(p), 1))
        if not exact:
            P = P.astype(float)
        return cls(P, p, truncated_mass)

    @classmethod
    def from_transition(cls, transition) -> "MarkovMeasure":
        P = np.asarray(transition, dtype=float)
        w, v = np.linalg.eig(P.T)
        k = int(np.argmin(np.abs(w - 1)))
        pi = np.real(v[:, k])
        pi = pi / pi.sum()
        return cls(P, pi)

    def is_bernoulli(self) -> bool:
        P = as_float(self.transition).astype(float)
        return bool(np.allclose(P, P[0][None, :], atol=1e-14))

    def reversed(self) -> "MarkovMeasure":
        """Time reversal: ``Q_ij = pi_j P_ji / pi_i``."""
        P = as_float(self.transition).astype(float)
        pi = as_float(self.stationary).astype(float)
        Q = (P.T * pi[None, :]) / pi[:, None]
        return MarkovMeasure(Q, pi, self.truncated_mass)

    def sample_path(self, n: int, rng: np.random.Generator, start: Optional[int] = None) -> np.ndarray:
        P = as_float(self.transition).astype(float)
        pi = as_float(self.stationary).astype(float)
        if self.is_bernoulli():
            out = rng.choice(self.size, size=n, p=pi / pi.sum())
            if start is not None and n:
                out[0] = start
            return out
        cum = np.cumsum(P, axis=1)
        u = rng.random(n)
        out = np.empty(n, dtype=np.int64)
        s = int(rng.choice(self.size, p=pi)) if start is None else start
        for i in range(n):
            out[i] = s
            s = min(int(np.searchsorted(cum[s], u[i], side="right")), self.size - 1)
        return out

    def to_json(self) -> dict:
        return {"transition": _json_matrix(self.transition),
                "stationary": [_json_scalar(v) for v in self.stationary]}


def _json_scalar(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    if isinstance(v, complex) or isinstance(v, np.complexfloating):
        return [float(v.real), float(v.imag)]
    return float(v)


def _json_matrix(m) -> list:
    return [[_json_scalar(v) for v in row] for row in np.asarray(m)]


def cylinder_measure(mu: MarkovMeasure, w: Sequence[int]):
    """Mass of the cylinder ``[w_0, ..., w_{n-1}]``; 0 marks a null cylinder."""
    w = tuple(w)
    if not w:
        return mu.stationary.dtype.type(1) if mu.stationary.dtype != object else Fraction(1)
    for s in w:
        if not 0 <= s < mu.size:
            raise ValueError(f"symbol {s} outside the alphabet")
    mass = mu.stationary[w[0]]
    for a, b in zip(w, w[1:]):
        mass = mass * mu.transition[a, b]
    return mass


# ---------------------------------------------------------------------------
# backward averages and Jacobians

@dataclass(frozen=True)
class BackwardAverage:
    branches: list  # (preimage word I + anchor, weight)
    total: float
    unaccounted: float
    warning: bool


def branch_weight(mu: MarkovMeasure, branch: Sequence[int], anchor: int):
    """Conditional mass ``J f^k_I`` of the branch ``I`` into the anchor symbol."""
    return cylinder_measure(mu, tuple(branch) + (anchor,)) / mu.stationary[anchor]


def backward_average(mu: MarkovMeasure, x_prefix: Sequence[int], k: int,
                     truncation: Optional[int] = None) -> BackwardAverage:
    if k < 1:
        raise ValueError("k must be at least 1")
    x_prefix = tuple(x_prefix)
    if not x_prefix:
        raise ValueError("need the first symbol of x")
    anchor = x_prefix[0]
    n = mu.size if truncation is None else min(mu.size, truncation)
    branches = []
    total = 0
    for I in itertools.product(range(n), repeat=k):
        w = branch_weight(mu, I, anchor)
        if w > 0:
            branches.append((I + x_prefix, w))
            total += w
    # mass lost by cutting the alphabet, either here or when the measure was built
    unaccounted = float(1 - total) + float(mu.truncated_mass)
    unaccounted = max(unaccounted, 0.0)
    return BackwardAverage(branches, float(total), unaccounted, unaccounted > 0.01)


def distortion_bound(mu: MarkovMeasure, k: int = 1) -> float:
    """Largest ratio ``J f^k_I(x) / J f^k_I(y)`` over branches ``I`` and anchors."""
    P = as_float(mu.transition).astype(float)
    pi = as_float(mu.stationary).astype(float)
    # for Markov measures the ratio only depends on the last branch symbol
    ratios = P / pi[None, :]
    worst = 1.0
    for i in range(mu.size):
        row = ratios[i]
        if np.any(row == 0):
            if np.any(row > 0):
                return float("inf")
            continue
        worst = max(worst, float(row.max() / row.min()))
    return worst


# ---------------------------------------------------------------------------
# potentials and oscillation

@dataclass(frozen=True)
class Potential:
    """Function of one-sided sequences, read to a finite ``depth``.

    ``tail_bound(depth)`` bounds the contribution of coordinates at index
    ``>= depth``; ``schedule(k)`` optionally declares an upper bound for
    ``osc_k`` used when exhaustive enumeration is too large.
    """

    evaluator: Callable[[tuple], float]
    depth: int
    alphabet_size: int
    tail_bound: Callable[[int], float] = lambda depth: 0.0
    schedule: Optional[Callable[[int], float]] = None


class PotentialDepthError(ValueError):
    pass


ENUMERATION_LIMIT = 10 ** 6


def oscillation(psi: Potential, k: int, truncation: Optional[int] = None) -> float:
    """Upper bound on ``sup_I sup{psi(x) - psi(y) : x, y in [I]}`` for depth-k cylinders."""
    if k < 1:
        raise ValueError("k must be at least 1")
    n = psi.alphabet_size if truncation is None else min(psi.alphabet_size, truncation)
    tail = psi.tail_bound(psi.depth)
    if k >= psi.depth:
        return float(tail)
    free = psi.depth - k
    if n ** psi.depth > ENUMERATION_LIMIT:
        if psi.schedule is None:
            raise PotentialDepthError(
                f"{n ** psi.depth} cylinders exceed the enumeration limit and no schedule is declared")
        return float(psi.schedule(k))
    worst = 0.0
    for I in itertools.product(range(n), repeat=k):
        vals = [psi.evaluator(I + cont) for cont in itertools.product(range(n), repeat=free)]
        worst = max(worst, max(vals) - min(vals))
    # the tail may move both extremes, hence twice the bound
    return float(worst + 2 * tail)


def log_jacobian_potential(mu: MarkovMeasure) -> Potential:
    """``log J f`` of a Markov measure: ``log(pi_{x1} / (pi_{x0} P_{x0 x1}))``."""
    P = as_float(mu.transition).astype(float)
    pi = as_float(mu.stationary).astype(float)

    def ev(x):
        return float(np.log(pi[x[1]] / (pi[x[0]] * P[x[0], x[1]])))

    return Potential(ev, 2, mu.size)


# ---------------------------------------------------------------------------
# cocycle specifications

@dataclass(frozen=True, eq=False)
class CocycleSpec:
    """A cocycle over the two-sided shift with a Markov measure.

    The step matrix at ``x`` is ``matrices[x_0]`` plus, for Hölder cocycles,
    ``amplitude * sum_k decay**k * (past_perturbation[x_{-k}] + future_perturbation[x_k])``
    for ``k = 1 .. depth``.
    """

    matrices: tuple
    measure: MarkovMeasure
    past_perturbation: Optional[tuple] = None
    future_perturbation: Optional[tuple] = None
    amplitude: float = 0.0
    decay: float = 0.5
    depth: int = 60
    metric_theta: float = 0.5
    labels: Optional[tuple] = None  # e.g. return words of an induced system
    return_times: Optional[tuple] = None
    mirrored: bool = False  # built by adjoint_cocycle (time-reversed coordinates)

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(np.asarray(m) for m in self.matrices))
        if len(self.matrices) != self.measure.size:
            raise ValueError("need one matrix per symbol")
        shapes = {m.shape for m in self.matrices}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError("matrices must share one square shape")

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def alphabet_size(self) -> int:
        return len(self.matrices)

    @property
    def locally_constant(self) -> bool:
        return self.amplitude == 0 or (self.past_perturbation is None
                                       and self.future_perturbation is None)

    @property
    def exact(self) -> bool:
        return all(is_exact(m) for m in self.matrices) and self.locally_constant

    def matrix_at(self, x: TwoSidedPoint) -> np.ndarray:
        base = self.matrices[x.coord(0)]
        if self.locally_constant:
            return base
        out = as_float(base).astype(complex if np.iscomplexobj(as_float(base)) else float).copy()
        for k in range(1, self.depth + 1):
            w = self.amplitude * self.decay ** k
            if self.past_perturbation is not None:
                out = out + w * self.past_perturbation[x.coord(-k)]
            if self.future_perturbation is not None:
                out = out + w * self.future_perturbation[x.coord(k)]
        return out

    def product_along(self, x: TwoSidedPoint, n: int) -> np.ndarray:
        """``A^n(x) = A(f^{n-1} x) ... A(x)``."""
        d = self.dim
        out = exact_identity(d) if self.exact else np.eye(d)
        for j in range(n):
            out = self.step_at(x, j) @ out
        return out

    def step_at(self, x: TwoSidedPoint, j: int) -> np.ndarray:
        """Matrix at ``f^j(x)`` without building the shifted point."""
        if self.locally_constant:
            return self.matrices[x.coord(j)]
        shifted = _ShiftedView(x, j)
        return self.matrix_at(shifted)  # type: ignore[arg-type]

    def word_product(self, word: Sequence[int]) -> np.ndarray:
        """Product ``A_{w_{n-1}} ... A_{w_0}`` for a locally constant spec."""
        d = self.dim
        out = exact_identity(d) if self.exact else np.eye(d)
        for s in word:
            out = self.matrices[s] @ out
        return out

    def to_json(self) -> dict:
        return {"alphabet": self.alphabet_size,
                "matrices": [_json_matrix(m) for m in self.matrices],
                "measure": self.measure.to_json()}


class _ShiftedView:
    """Coordinates of ``f^j(x)`` without materialising the shifted point."""

    def __init__(self, x: TwoSidedPoint, j: int):
        self.x, self.j = x, j

    def coord(self, n: int) -> int:
        return self.x.coord(n + self.j)


def constant_spec(A, n_symbols: int = 1, probs=None) -> CocycleSpec:
    probs = np.full(n_symbols, 1.0 / n_symbols) if probs is None else np.asarray(probs)
    return CocycleSpec(tuple(np.asarray(A) for _ in range(n_symbols)), MarkovMeasure.bernoulli(probs))


# ---------------------------------------------------------------------------
# inducing

@dataclass(frozen=True)
class ReturnWord:
    word: Word
    r: int
    mass: float  # conditional mass given the base cylinder


@dataclass(frozen=True)
class InducedSystem:
    base_cylinder: Word
    return_words: tuple
    measure_of_base: float
    truncated: bool = False

    @property
    def captured_mass(self) -> float:
        return float(sum(rw.mass for rw in self.return_words))

    @property
    def mean_return_time(self) -> float:
        cap = self.captured_mass
        return float(sum(rw.r * rw.mass for rw in self.return_words) / cap)

    def to_json(self) -> dict:
        return {"base": list(self.base_cylinder),
                "return_words": [{"word": list(rw.word), "r": rw.r, "mass": float(rw.mass)}
                                 for rw in self.return_words],
                "captured_mass": self.captured_mass}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


class ZeroMeasureBase(ValueError):
    pass


def _occurs_at(seq: Sequence[int], base: Word, pos: int) -> bool:
    return tuple(seq[pos:pos + len(base)]) == base


def build_induced(mu: MarkovMeasure, base: Sequence[int], max_return_time: int,
                  word_limit: int = 200_000) -> InducedSystem:
    """First-return words ``[base ... base]`` with return time ``r <= max_return_time``."""
    base = tuple(base)
    base_mass = cylinder_measure(mu, base)
    if not base_mass > 0:
        raise ZeroMeasureBase("base cylinder has zero measure")
    k = len(base)
    found: list[ReturnWord] = []
    truncated = False

    # depth-first over extensions; stack entries are words starting with base
    stack = [base]
    while stack:
        w = stack.pop()
        r_next = len(w) - k + 1  # return time if base occurs at the next offset
        for s in reversed(range(mu.size)):
            cand = w + (s,)
            if cylinder_measure(mu, cand) == 0:
                continue
            r = len(cand) - k
            if r >= 1 and _occurs_at(cand, base, r):
                found.append(ReturnWord(cand, r, float(cylinder_measure(mu, cand) / base_mass)))
            elif r < max_return_time or (r == max_return_time and len(cand) < r + k):
                # keep extending while a return at time <= max is still possible
                if _occurrence_free(cand, base) and len(cand) < max_return_time + k:
                    stack.append(cand)
        if len(found) + len(stack) > word_limit:
            truncated = True
            break
    found.sort(key=lambda rw: (rw.r, rw.word))
    return InducedSystem(base, tuple(found), float(base_mass), truncated)


def _occurrence_free(w: Word, base: Word) -> bool:
    """No occurrence of ``base`` starting at positions ``1 .. len(w)-len(base)``."""
    k = len(base)
    return not any(_occurs_at(w, base, p) for p in range(1, len(w) - k + 1))


class DepthIncompatible(ValueError):
    pass


def induce_cocycle(spec: CocycleSpec, ind: InducedSystem) -> CocycleSpec:
    """Locally constant cocycle over the return words: the product before return."""
    if not spec.locally_constant:
        raise DepthIncompatible("inducing needs a locally constant cocycle")
    mats = tuple(spec.word_product(rw.word[:rw.r]) for rw in ind.return_words)
    masses = np.array([rw.mass for rw in ind.return_words], dtype=float)
    cap = masses.sum()
    measure = MarkovMeasure.bernoulli(masses / cap, truncated_mass=float(1 - cap))
    return CocycleSpec(mats, measure, metric_theta=spec.metric_theta,
                       labels=tuple(rw.word for rw in ind.return_words),
                       return_times=tuple(rw.r for rw in ind.return_words))
