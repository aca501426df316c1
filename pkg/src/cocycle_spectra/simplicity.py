"""Pinching and twisting at a periodic point and a homoclinic point.

The transition map ``psi = H^s_{f^l z, p} A^l(z) H^u_{p, z}`` is written in
the eigenbasis of the return matrix ``A^q(p)``. Twisting asks every minor
of that matrix to be nonzero. Exact specs with rational eigenvalues are
decided in rational arithmetic; otherwise a scale-aware float threshold is
used and the margin is reported.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exterior import exterior_power, subsets
from .holonomy import HolonomyMap, stable_holonomy, unstable_holonomy
from .numeric_kernel import (EigenData, as_float, eigen_decomposition, eigen_order,
                             exact_eigen_decomposition, exact_inverse, is_exact,
                             singular_decomposition)
from .shift_space import CocycleSpec, MarkovMeasure, TwoSidedPoint

DEFAULT_REL_GAP = 1e-6
DEFAULT_ZERO_TOL = 1e-9


# ---------------------------------------------------------------------------
# periodic and homoclinic data

@dataclass(frozen=True)
class PeriodicData:
    point: TwoSidedPoint
    period: int
    word: tuple
    return_matrix: np.ndarray
    eigen: EigenData
    exact: bool


def periodic_data(spec: CocycleSpec, word: Sequence[int]) -> PeriodicData:
    word = tuple(word)
    if not word:
        raise ValueError("periodic word must be nonempty")
    p = TwoSidedPoint.periodic(word)
    M = spec.product_along(p, len(word))
    eig = exact_eigen_decomposition(M) if is_exact(M) else None
    if eig is None:
        eig = eigen_decomposition(as_float(M))
    return PeriodicData(p, len(word), word, M, eig, eig.eigenvalues.dtype == object)


@dataclass(frozen=True)
class HomoclinicData:
    point: TwoSidedPoint
    l: int
    insert: tuple
    along_matrix: np.ndarray
    stable_h: HolonomyMap
    unstable_h: HolonomyMap


def homoclinic_point(period_word: Sequence[int], insert: Sequence[int], l: int) -> TwoSidedPoint:
    """``z`` with ``z_n = p_n`` for ``n < 0``, ``insert`` from 0, and ``z_{l+n} = p_n``."""
    p = tuple(period_word)
    q = len(p)
    insert = tuple(insert)
    if l < 1 or l % q:
        raise ValueError("l must be a positive multiple of the period")
    if len(insert) > l:
        raise ValueError("insert longer than l")
    padded = insert + tuple(p[(i - l) % q] for i in range(len(insert), l))
    return TwoSidedPoint((), padded, tuple(reversed(p)), p)


def homoclinic_data(spec: CocycleSpec, pd: PeriodicData, insert: Sequence[int],
                    l: Optional[int] = None, tol: float = 1e-12, cap: int = 500) -> HomoclinicData:
    insert = tuple(insert)
    if l is None:
        l = -(-len(insert) // pd.period) * pd.period
    z = homoclinic_point(pd.word, insert, l)
    if not z.same_past(pd.point):
        raise ValueError("z is not in the local unstable set of p")
    fz = z.shift(l)
    if not fz.same_future(pd.point):  # pragma: no cover - guaranteed by construction
        raise ValueError("f^l(z) is not in the local stable set of p")
    along = spec.product_along(z, l)
    hs = stable_holonomy(spec, fz, pd.point, tol, cap)
    hu = unstable_holonomy(spec, pd.point, z, tol, cap)
    return HomoclinicData(z, l, z.window(0, l), along, hs, hu)


# ---------------------------------------------------------------------------
# pinching

def check_pinching(pd: PeriodicData, rel_gap_tol: float = DEFAULT_REL_GAP) -> tuple:
    """(ok, gap) with ``gap = min |l_i| / |l_{i+1}| - 1`` over consecutive moduli."""
    vals = pd.eigen.eigenvalues
    if pd.exact:
        mods = [abs(v) for v in vals]  # rational, hence exact
        ratios = [mods[i] / mods[i + 1] if mods[i + 1] != 0 else None for i in range(len(mods) - 1)]
        if any(r is None for r in ratios):
            return True, float("inf")
        if not ratios:
            return True, float("inf")
        gap = min(ratios) - 1
        return bool(gap > 0), float(gap)
    mods = np.abs(np.asarray(vals, dtype=complex))
    if len(mods) < 2:
        return True, float("inf")
    with np.errstate(divide="ignore"):
        ratios = mods[:-1] / mods[1:]
    gap = float(np.min(ratios) - 1)
    return bool(gap >= rel_gap_tol), gap


# ---------------------------------------------------------------------------
# transition map and twisting

@dataclass(frozen=True)
class TransitionMap:
    matrix: np.ndarray
    basis: np.ndarray
    exact: bool


def transition_map(spec: CocycleSpec, pd: PeriodicData, hd: HomoclinicData) -> TransitionMap:
    hs, hu = hd.stable_h.matrix, hd.unstable_h.matrix
    psi = hs @ hd.along_matrix @ hu
    V = pd.eigen.eigenvectors
    exact = pd.exact and is_exact(psi)
    if exact:
        return TransitionMap(exact_inverse(V) @ psi @ V, V, True)
    Vf = as_float(V).astype(complex)
    return TransitionMap(np.linalg.solve(Vf, as_float(psi) @ Vf), Vf, False)


@dataclass(frozen=True)
class TwistingResult:
    ok: bool
    smallest_minor: float
    witness: Optional[tuple]  # (rows, cols), 1-based

    def __iter__(self):
        return iter((self.ok, self.smallest_minor, self.witness))


def check_twisting(tm, exact: Optional[bool] = None,
                   zero_tol: float = DEFAULT_ZERO_TOL) -> TwistingResult:
    """Every minor of the transition matrix must be nonzero.

    Float mode compares ``|minor|`` to ``zero_tol`` times the product of the
    norms of the rows involved, and reports the smallest such ratio.
    """
    M = tm.matrix if isinstance(tm, TransitionMap) else np.asarray(tm)
    exact = is_exact(M) if exact is None else exact
    if exact and not is_exact(M):
        raise ValueError("exact twisting test needs a rational matrix")
    d = M.shape[0]
    row_norms = None if exact else np.linalg.norm(as_float(M), axis=1)
    best, witness = None, None
    zero_witness = None
    for ell in range(1, d + 1):
        L = exterior_power(M, ell)
        subs = subsets(d, ell)
        for a, I in enumerate(subs):
            for b, J in enumerate(subs):
                v = L[a, b]
                if exact:
                    size = abs(v)
                else:
                    scale = float(np.prod(row_norms[list(I)])) or 1.0
                    size = abs(complex(v)) / scale
                if best is None or size < best:
                    best, witness = size, (tuple(i + 1 for i in I), tuple(j + 1 for j in J))
                if zero_witness is None and ((exact and v == 0) or (not exact and size <= zero_tol)):
                    zero_witness = (tuple(i + 1 for i in I), tuple(j + 1 for j in J))
    ok = zero_witness is None
    return TwistingResult(ok, float(best), zero_witness if not ok else None)


@dataclass(frozen=True)
class SimplicityVerdict:
    pinching: bool
    gap: float
    twisting: bool
    smallest_minor: float
    witness: Optional[tuple]
    exact: bool

    @property
    def simple(self) -> bool:
        return self.pinching and self.twisting

    def to_json(self) -> dict:
        w = None if self.witness is None else {"rows": list(self.witness[0]),
                                                "cols": list(self.witness[1])}
        return {"pinching": {"ok": self.pinching, "gap": _finite(self.gap)},
                "twisting": {"ok": self.twisting, "smallest_minor": _finite(self.smallest_minor),
                             "witness": w},
                "simple": self.simple, "exact": self.exact}


def _finite(v: float):
    return v if np.isfinite(v) else str(v)


def check_simple(spec: CocycleSpec, pd: PeriodicData, hd: HomoclinicData,
                 rel_gap_tol: float = DEFAULT_REL_GAP,
                 zero_tol: float = DEFAULT_ZERO_TOL) -> SimplicityVerdict:
    pin, gap = check_pinching(pd, rel_gap_tol)
    tm = transition_map(spec, pd, hd)
    tw = check_twisting(tm, tm.exact, zero_tol)
    return SimplicityVerdict(pin, gap, tw.ok, tw.smallest_minor, tw.witness, tm.exact)


# ---------------------------------------------------------------------------
# monoid form

def monoid_eccentricity(B: np.ndarray) -> float:
    """``min_l sigma_l / sigma_{l+1}``."""
    s = np.linalg.svd(as_float(B), compute_uv=False)
    if s[-1] == 0:
        return float("inf")
    return float(np.min(s[:-1] / s[1:])) if len(s) > 1 else float("inf")


def _intersection_margin(B: np.ndarray, F: np.ndarray, Gs: Sequence[np.ndarray]) -> float:
    """Smallest normalized ``|det [B F | G_i]|``; zero means some ``B(F) ∩ G_i != {0}``."""
    BF = as_float(B) @ F
    BF = np.linalg.qr(BF)[0]
    worst = np.inf
    for G in Gs:
        Gq = np.linalg.qr(G)[0]
        worst = min(worst, abs(np.linalg.det(np.concatenate([BF, Gq], axis=1))))
    return float(worst)


@dataclass(frozen=True)
class MonoidReport:
    best_eccentricity: float
    pinching_word: tuple
    twisting_found: bool
    twisting_word: Optional[tuple]
    twisting_margin: float
    words_examined: int

    def to_json(self) -> dict:
        return {"pinching": {"best_eccentricity": _finite(self.best_eccentricity),
                             "word": list(self.pinching_word)},
                "twisting": {"found": self.twisting_found,
                             "word": None if self.twisting_word is None else list(self.twisting_word),
                             "margin": self.twisting_margin},
                "words_examined": self.words_examined}


def monoid_pinching_twisting(generators: Sequence[np.ndarray], trials: int,
                             rng: np.random.Generator, max_length: int = 6,
                             F: Optional[np.ndarray] = None, Gs: Optional[Sequence] = None,
                             twist_tol: float = 1e-9) -> MonoidReport:
    """Search words in the generators for large eccentricity and for twisting.

    Words up to ``max_length`` are enumerated in order of length, then
    ``trials`` random longer words are sampled. If ``F``/``Gs`` are not
    given, a random ``k``-plane and one random complementary plane are drawn.
    """
    gens = [as_float(g) for g in generators]
    d = gens[0].shape[0]
    if F is None:
        k = max(1, d // 2)
        F = rng.standard_normal((d, k))
        Gs = [rng.standard_normal((d, d - k))]
    F = np.asarray(F, dtype=float).reshape(d, -1)
    Gs = [np.asarray(G, dtype=float).reshape(d, -1) for G in Gs]
    best, best_word = 0.0, ()
    tw_word, tw_margin = None, 0.0
    examined = 0

    def consider(word, B):
        nonlocal best, best_word, tw_word, tw_margin, examined
        examined += 1
        e = monoid_eccentricity(B)
        if e > best:
            best, best_word = e, word
        if tw_word is None:
            m = _intersection_margin(B, F, Gs)
            if m > twist_tol:
                tw_word, tw_margin = word, m

    for length in range(1, max_length + 1):
        for word in itertools.product(range(len(gens)), repeat=length):
            B = np.eye(d)
            for s in word:
                B = gens[s] @ B
                B = B / np.linalg.norm(B)
            consider(word, B)
    for _ in range(trials):
        length = int(rng.integers(max_length + 1, 4 * max_length + 2))
        word = tuple(int(v) for v in rng.integers(0, len(gens), length))
        B = np.eye(d)
        for s in word:
            B = gens[s] @ B
            B = B / np.linalg.norm(B)
        consider(word, B)
    return MonoidReport(best, best_word, tw_word is not None, tw_word, tw_margin, examined)


# ---------------------------------------------------------------------------
# adjoint cocycle

def _adjoint_matrix(m):
    m = np.asarray(m)
    if is_exact(m):
        return m.T.copy()  # rational entries: conjugation is trivial
    return m.conj().T.copy()


def adjoint_cocycle(spec: CocycleSpec) -> CocycleSpec:
    """Adjoint cocycle ``B(x) = A(f^{-1} x)^*`` over the inverse shift.

    It is returned in mirrored coordinates ``y_n = x_{-n-1}``, in which the
    inverse shift becomes the forward shift. There ``B`` reads
    ``A_{y_0}^*``, the Markov chain is time reversed, and the past and future
    perturbations trade places. Applying the map twice gives back ``spec``.
    """
    mats = tuple(_adjoint_matrix(m) for m in spec.matrices)
    measure = spec.measure if spec.measure.is_bernoulli() else spec.measure.reversed()
    past = None if spec.future_perturbation is None else tuple(
        _adjoint_matrix(p) for p in spec.future_perturbation)
    fut = None if spec.past_perturbation is None else tuple(
        _adjoint_matrix(p) for p in spec.past_perturbation)
    return replace(spec, matrices=mats, measure=measure, past_perturbation=past,
                   future_perturbation=fut, mirrored=not spec.mirrored)


def mirrored_pair(pd: PeriodicData, hd: HomoclinicData) -> tuple:
    """Periodic word, insert and ``l`` describing ``(p, f^l z)`` in mirrored coordinates."""
    p = pd.word
    word = tuple(p[(-n - 1) % len(p)] for n in range(len(p)))
    return word, tuple(reversed(hd.insert)), hd.l
