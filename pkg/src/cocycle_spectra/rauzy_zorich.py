"""Rauzy induction, its Zorich acceleration and the associated integer cocycles.

A pair ``pi = (pi_0, pi_1)`` lists the symbols ``1..d`` in the order they
appear on the top and bottom rows of an interval exchange. ``alpha(eps)`` is
the last symbol of row ``eps``. A step of type ``eps`` has winner
``w = alpha(eps)`` and loser ``l = alpha(1-eps)``; lengths update as
``lambda_w -= lambda_l`` followed by renormalization.

Matrix conventions (symbols ``s`` map to index ``s - 1``):

* ``R = I - E_{w,l}`` sends old unnormalized lengths to new ones;
* ``R^{-1} = I + E_{w,l}`` has non-negative integer entries;
* the cocycle acting on cohomology is ``R^{-*} = I + E_{l,w}``.

The Zorich step groups a maximal run of same-type Rauzy steps. All inverse
matrices in a run share the winner row, so the composite inverse is
``I + sum_b c_b E_{w,b}`` with ``c_b`` counting how often ``b`` lost.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from functools import lru_cache
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .numeric_kernel import exact_identity, exact_rank, exact_column_space, exact_zeros

DEFAULT_CAP = 10 ** 6
ORBIT_SCHEMA = "cocycle_spectra.zorich_orbit/1"


class ReduciblePairError(ValueError):
    pass


class RauzyUndefinedError(ValueError):
    """Tie ``lambda_{alpha(0)} = lambda_{alpha(1)}``: the step is not defined."""


class AccelerationCapError(RuntimeError):
    def __init__(self, msg, partial_n: int):
        super().__init__(msg)
        self.partial_n = partial_n


# ---------------------------------------------------------------------------
# permutation pairs

@dataclass(frozen=True)
class PermutationPair:
    top: tuple
    bottom: tuple

    def __post_init__(self):
        top, bottom = tuple(self.top), tuple(self.bottom)
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "bottom", bottom)
        d = len(top)
        if d < 2 or sorted(top) != list(range(1, d + 1)) or sorted(bottom) != list(range(1, d + 1)):
            raise ValueError("rows must be permutations of 1..d with d >= 2")

    @property
    def d(self) -> int:
        return len(self.top)

    def row(self, eps: int) -> tuple:
        return self.top if eps == 0 else self.bottom

    def alpha(self, eps: int) -> int:
        return self.row(eps)[-1]

    def positions(self, eps: int) -> dict:
        return {s: i for i, s in enumerate(self.row(eps))}

    def is_irreducible(self) -> bool:
        return all(set(self.top[:k]) != set(self.bottom[:k]) for k in range(1, self.d))

    def require_irreducible(self) -> None:
        if not self.is_irreducible():
            raise ReduciblePairError(f"pair {self.top} / {self.bottom} is reducible")

    def move(self, eps: int) -> "PermutationPair":
        """Pair after a type-``eps`` step: the loser is reinserted right after the winner."""
        w, l = self.alpha(eps), self.alpha(1 - eps)
        other = list(self.row(1 - eps))
        other.pop()  # l sits at the end
        k = other.index(w)
        other.insert(k + 1, l)
        return PermutationPair(self.top, tuple(other)) if eps == 0 else \
            PermutationPair(tuple(other), self.bottom)

    @classmethod
    def reversal(cls, d: int) -> "PermutationPair":
        return cls(tuple(range(1, d + 1)), tuple(range(d, 0, -1)))

    def label(self) -> str:
        return " ".join(map(str, self.top)) + " / " + " ".join(map(str, self.bottom))


# ---------------------------------------------------------------------------
# single steps

def _check_simplex(lam: Sequence) -> None:
    if any(not v > 0 for v in lam):
        raise ValueError("lengths must be strictly positive")


def _elementary(d: int, i: int, j: int, sign: int) -> np.ndarray:
    m = exact_identity(d)
    m[i, j] += sign
    return m


@dataclass(frozen=True)
class RauzyStep:
    type_eps: int
    new_pair: PermutationPair
    new_lambda: tuple
    matrix: np.ndarray  # R
    inverse_matrix: np.ndarray  # R^{-1}, non-negative integers
    normalizer: object  # a = 1 - lambda_l

    @property
    def cocycle_matrix(self) -> np.ndarray:
        """``R^{-*}``, the matrix acting on the cohomological side."""
        return self.inverse_matrix.T.copy()


def step_type(pi: PermutationPair, lam: Sequence) -> int:
    a0, a1 = pi.alpha(0), pi.alpha(1)
    l0, l1 = lam[a0 - 1], lam[a1 - 1]
    if l0 == l1:
        raise RauzyUndefinedError("tie between the last intervals")
    return 0 if l0 > l1 else 1


def rauzy_step(pi: PermutationPair, lam: Sequence) -> RauzyStep:
    _check_simplex(lam)
    eps = step_type(pi, lam)
    w, l = pi.alpha(eps), pi.alpha(1 - eps)
    a = 1 - lam[l - 1]
    new = [v / a for v in lam]
    new[w - 1] = (lam[w - 1] - lam[l - 1]) / a
    d = pi.d
    return RauzyStep(eps, pi.move(eps), tuple(new),
                     _elementary(d, w - 1, l - 1, -1), _elementary(d, w - 1, l - 1, +1), a)


# ---------------------------------------------------------------------------
# Zorich acceleration

@dataclass(frozen=True)
class ZorichStep:
    type_eps: int
    n: int
    winner: int  # symbol
    counts: tuple  # counts[b-1] = number of steps in which b lost
    start_pair: PermutationPair
    end_pair: PermutationPair
    end_lambda: tuple

    @property
    def inverse_matrix(self) -> np.ndarray:
        """``Z^{-1} = I + sum_b c_b E_{w,b}``, exact non-negative integers."""
        m = exact_identity(len(self.counts))
        for b, c in enumerate(self.counts):
            m[self.winner - 1, b] += c
        return m

    @property
    def composite_matrix(self) -> np.ndarray:
        """``Z = R_n ... R_1 = I - sum_b c_b E_{w,b}``."""
        m = exact_identity(len(self.counts))
        for b, c in enumerate(self.counts):
            m[self.winner - 1, b] -= c
        return m

    @property
    def cocycle_matrix(self) -> np.ndarray:
        return self.inverse_matrix.T.copy()


def _zorich_core(top, bottom, lam, cap):
    """Shared accelerated step. ``lam`` is a mutable list of floats or Fractions.

    Returns (eps, n, winner, counts, new_top, new_bottom); ``lam`` is updated
    in place to the unnormalized end lengths.
    """
    d = len(top)
    a0, a1 = top[-1], bottom[-1]
    if lam[a0 - 1] == lam[a1 - 1]:
        raise RauzyUndefinedError("tie between the last intervals")
    eps = 0 if lam[a0 - 1] > lam[a1 - 1] else 1
    row = list(bottom if eps == 0 else top)
    w = a0 if eps == 0 else a1
    k = row.index(w)
    block = row[k + 1:]
    m = len(block)
    S = sum(lam[b - 1] for b in block)
    counts = [0] * d
    lw = lam[w - 1]
    n = 0
    # whole cycles through the block keep the type fixed while lw stays above S
    if lw > S:
        q = math.ceil(lw / S) - 1
        if isinstance(lw, float):
            while q > 0 and lw - q * S <= 0:
                q -= 1
        if q > 0:
            lw = lw - q * S
            for b in block:
                counts[b - 1] += q
            n += q * m
            if cap is not None and n > cap:
                raise AccelerationCapError(f"more than {cap} Rauzy steps in one Zorich step", n)
    pos = 0  # rotation offset of the block
    while True:
        loser = block[(m - 1 - pos) % m]
        ll = lam[loser - 1]
        if lw == ll:
            raise RauzyUndefinedError("tie reached inside a Zorich step")
        if lw < ll:
            if n == 0:  # pragma: no cover - excluded by the type computation
                raise AssertionError("empty Zorich step")
            break
        lw = lw - ll
        counts[loser - 1] += 1
        n += 1
        pos += 1
        if cap is not None and n > cap:
            raise AccelerationCapError(f"more than {cap} Rauzy steps in one Zorich step", n)
    lam[w - 1] = lw
    r = pos % m
    new_block = block[m - r:] + block[:m - r] if r else block
    new_row = tuple(row[:k + 1] + new_block)
    if eps == 0:
        return eps, n, w, counts, tuple(top), new_row
    return eps, n, w, counts, new_row, tuple(bottom)


def zorich_step(pi: PermutationPair, lam: Sequence, cap: int = DEFAULT_CAP) -> ZorichStep:
    _check_simplex(lam)
    work = list(lam)
    eps, n, w, counts, top, bottom = _zorich_core(pi.top, pi.bottom, work, cap)
    total = sum(work)
    end = tuple(v / total for v in work)
    return ZorichStep(eps, n, w, tuple(counts), pi, PermutationPair(top, bottom), end)


# ---------------------------------------------------------------------------
# Rauzy classes and the symplectic structure

def rauzy_class(pi: PermutationPair, move_order: Sequence[int] = (0, 1)) -> frozenset:
    pi.require_irreducible()
    seen = {pi}
    queue = deque([pi])
    while queue:
        p = queue.popleft()
        for eps in move_order:
            q = p.move(eps)
            if q not in seen:
                seen.add(q)
                queue.append(q)
    return frozenset(seen)


@dataclass(frozen=True)
class SymplecticStructure:
    omega: np.ndarray  # exact integer entries
    range_basis: np.ndarray  # exact columns spanning H_pi
    genus: int

    def orthonormal_basis(self) -> np.ndarray:
        q, _ = np.linalg.qr(self.range_basis.astype(float))
        return q


@lru_cache(maxsize=1024)
def omega_matrix(pi: PermutationPair) -> SymplecticStructure:
    """Cached per pair; the returned arrays are read-only."""
    d = pi.d
    p0, p1 = pi.positions(0), pi.positions(1)
    om = exact_zeros((d, d))
    for i in range(1, d + 1):
        for j in range(1, d + 1):
            om[i - 1, j - 1] = Fraction(int(p1[j] < p1[i]) - int(p0[j] < p0[i]))
    rank = exact_rank(om)
    basis = exact_column_space(om)
    om.setflags(write=False)
    basis.setflags(write=False)
    return SymplecticStructure(om, basis, rank // 2)


def _as_int(M: np.ndarray) -> np.ndarray:
    # integer matrices multiply much faster as Python ints than as Fractions
    if all(Fraction(v).denominator == 1 for v in M.flat):
        return np.vectorize(lambda v: int(v), otypes=[object])(M)
    return M


def check_symplectic_invariance(step_matrix: np.ndarray, pi_before: PermutationPair,
                                pi_after: PermutationPair,
                                inverse_matrix: Optional[np.ndarray] = None) -> bool:
    """Exact check of ``Omega_after R = R^{-*} Omega_before``.

    ``step_matrix`` is ``R`` (or a Zorich composite ``Z``); the inverse is
    computed exactly unless supplied.
    """
    from .numeric_kernel import exact_inverse, exact_equal

    R = np.asarray(step_matrix, dtype=object)
    Rinv = exact_inverse(R) if inverse_matrix is None else np.asarray(inverse_matrix, dtype=object)
    lhs = _as_int(omega_matrix(pi_after).omega) @ _as_int(R)
    rhs = _as_int(Rinv).T @ _as_int(omega_matrix(pi_before).omega)
    return all(a == b for a, b in zip(lhs.flat, rhs.flat))


def symplectic_form(pi: PermutationPair, u: np.ndarray, v: np.ndarray):
    """``omega_pi(Omega u, Omega v) = (Omega u) . v`` on ``H_pi``; arguments lie in ``R^d``."""
    om = omega_matrix(pi).omega
    return (om @ u) @ v


# ---------------------------------------------------------------------------
# orbits

def random_simplex_point(d: int, rng: np.random.Generator) -> tuple:
    x = rng.exponential(size=d)
    return tuple(float(v) for v in x / x.sum())


@dataclass
class ZorichOrbit:
    """Compact record of a float Zorich orbit.

    ``pair_index[k]`` indexes ``pairs`` for the pair at the start of step
    ``k``; the final pair index is stored at position ``steps``.
    """

    pairs: list
    pair_index: np.ndarray
    types: np.ndarray
    ns: np.ndarray
    winners: np.ndarray  # 0-based indices
    counts: np.ndarray  # (steps, d)
    start_lambda: tuple
    end_lambda: tuple

    @property
    def steps(self) -> int:
        return len(self.types)

    @property
    def d(self) -> int:
        return self.counts.shape[1]

    def cocycle_matrices(self, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
        """Stack of ``Z_k^{-*} = I + sum_b c_b E_{b,w}`` for steps ``lo..hi-1``."""
        hi = self.steps if hi is None else hi
        k = hi - lo
        d = self.d
        M = np.broadcast_to(np.eye(d), (k, d, d)).copy()
        M[np.arange(k), :, self.winners[lo:hi]] += self.counts[lo:hi]
        return M

    def to_csv(self, log_norms: bool = True, lambdas: Optional[np.ndarray] = None) -> str:
        buf = io.StringIO()
        extra = "" if lambdas is None else "".join(f",lambda_{i + 1}" for i in range(self.d))
        buf.write(f"# {ORBIT_SCHEMA} columns: step,type,n,log_norm_Z{extra}\n")
        writer = csv.writer(buf, lineterminator="\n")
        mats = self.cocycle_matrices()
        norms = np.log(np.linalg.norm(mats, ord=2, axis=(1, 2)))
        for k in range(self.steps):
            row = [k, int(self.types[k]), int(self.ns[k]), repr(float(norms[k]))]
            if lambdas is not None:
                row += [repr(float(v)) for v in lambdas[k]]
            writer.writerow(row)
        return buf.getvalue()


def zorich_orbit(pi: PermutationPair, steps: int, rng: np.random.Generator,
                 burn_in: int = 100, cap: Optional[int] = None, record_lambda: bool = False,
                 max_retries: int = 10):
    """Float Zorich orbit from a random start in the simplex.

    Whole cycles are skipped in one arithmetic step, so long runs of a single
    type cost nothing extra; ``cap`` is therefore off by default here.

    Returns the orbit (and the per-step normalized lengths when requested).
    A tie restarts from a fresh random point, up to ``max_retries`` times.
    """
    pi.require_irreducible()
    for _ in range(max_retries):
        try:
            return _zorich_orbit_once(pi, steps, rng, burn_in, cap, record_lambda)
        except RauzyUndefinedError:
            continue
    raise RauzyUndefinedError("ties persisted across retries")


def _zorich_orbit_once(pi, steps, rng, burn_in, cap, record_lambda):
    d = pi.d
    lam = list(random_simplex_point(d, rng))
    top, bottom = pi.top, pi.bottom
    for _ in range(burn_in):
        _, _, _, _, top, bottom = _zorich_core(top, bottom, lam, cap)
        t = sum(lam)
        lam = [v / t for v in lam]
    start = tuple(lam)
    index: dict = {}
    pairs: list = []

    def intern(key):
        i = index.get(key)
        if i is None:
            i = index[key] = len(pairs)
            pairs.append(PermutationPair(*key))
        return i

    pair_index = np.empty(steps + 1, dtype=np.int32)
    types = np.empty(steps, dtype=np.int8)
    ns = np.empty(steps, dtype=np.int64)
    winners = np.empty(steps, dtype=np.int8)
    counts = np.zeros((steps, d), dtype=np.float64)
    lams = np.empty((steps, d)) if record_lambda else None
    core = _zorich_core
    for k in range(steps):
        pair_index[k] = intern((top, bottom))
        if record_lambda:
            lams[k] = lam
        eps, n, w, c, top, bottom = core(top, bottom, lam, cap)
        t = lam[0]
        for v in lam[1:]:
            t += v
        lam = [v / t for v in lam]
        types[k] = eps
        ns[k] = n
        winners[k] = w - 1
        counts[k] = c
    pair_index[steps] = intern((top, bottom))
    orbit = ZorichOrbit(pairs, pair_index, types, ns, winners, counts, start, tuple(lam))
    return (orbit, lams) if record_lambda else orbit


def continued_fraction(x: Fraction | float, terms: int) -> list:
    """Partial quotients of a positive number (used as an independent check)."""
    out = []
    for _ in range(terms):
        a = math.floor(x)
        out.append(int(a))
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return out


def orthonormal_range_bases(pairs: Sequence[PermutationPair]) -> np.ndarray:
    """Stack of orthonormal bases of ``H_pi`` (one ``d x 2g`` block per pair)."""
    return np.stack([omega_matrix(p).orthonormal_basis() for p in pairs])


@dataclass(frozen=True)
class ZorichCocycle:
    """The Zorich cocycle ``Z^{-*}`` started from a random point of the simplex.

    With ``restricted`` the cocycle acts on ``H_pi`` through orthonormal bases.
    """

    pair: PermutationPair
    restricted: bool = True
    burn_in: int = 100
    cap: Optional[int] = None

    def __post_init__(self):
        self.pair.require_irreducible()

    @property
    def dim(self) -> int:
        return 2 * omega_matrix(self.pair).genus if self.restricted else self.pair.d

    def orbit(self, steps: int, rng: np.random.Generator) -> ZorichOrbit:
        return zorich_orbit(self.pair, steps, rng, burn_in=self.burn_in, cap=self.cap)
