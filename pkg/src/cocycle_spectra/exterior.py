"""Exterior powers, Plücker coordinates, hyperplane sections and eccentricity.

Index subsets are 0-based sorted tuples; the basis of the ``ell``-th exterior
power is ordered lexicographically, as produced by
``itertools.combinations(range(d), ell)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Optional, Sequence

import numpy as np

from .numeric_kernel import (
    NumericError,
    as_float,
    check_square,
    exact_det,
    exact_zeros,
    is_exact,
    singular_decomposition,
)

PLUCKER_TOL = 1e-8


class InKernelError(NumericError):
    """The point lies in the kernel of a quasi-projective map."""


@lru_cache(maxsize=None)
def subsets(d: int, ell: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(d), ell))


@lru_cache(maxsize=None)
def subset_index(d: int, ell: int) -> dict:
    return {s: i for i, s in enumerate(subsets(d, ell))}


@lru_cache(maxsize=None)
def _subset_arrays(d: int, ell: int) -> np.ndarray:
    return np.array(subsets(d, ell), dtype=np.intp).reshape(-1, ell)


def permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq``; 0 if it has repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def complement(subset: Sequence[int], d: int) -> tuple[int, ...]:
    s = set(subset)
    return tuple(i for i in range(d) if i not in s)


# ---------------------------------------------------------------------------
# multivectors

@dataclass(frozen=True, eq=False)
class MultiVector:
    d: int
    ell: int
    coeffs: np.ndarray  # length comb(d, ell), lexicographic subset order

    def __post_init__(self):
        if len(self.coeffs) != comb(self.d, self.ell):
            raise ValueError("coefficient vector has the wrong length")

    @classmethod
    def basis(cls, d: int, subset: Sequence[int]) -> "MultiVector":
        ell = len(subset)
        c = np.zeros(comb(d, ell), dtype=complex)
        c[subset_index(d, ell)[tuple(sorted(subset))]] = permutation_sign(subset)
        return cls(d, ell, c)

    @classmethod
    def from_vectors(cls, columns: np.ndarray) -> "MultiVector":
        """The wedge ``v_1 ^ ... ^ v_ell`` of the columns of a d x ell matrix."""
        columns = np.asarray(columns)
        if columns.ndim == 1:
            columns = columns[:, None]
        d, ell = columns.shape
        if is_exact(columns):
            c = np.array([exact_det(columns[list(s), :]) for s in subsets(d, ell)],
                         dtype=object)
        else:
            idx = _subset_arrays(d, ell)
            c = np.linalg.det(columns[idx, :]) if ell else np.ones(1)
        return cls(d, ell, c)

    def coefficient(self, subset: Sequence[int]):
        return self.coeffs[subset_index(self.d, self.ell)[tuple(subset)]]

    def norm(self) -> float:
        return float(np.linalg.norm(as_float(self.coeffs)))

    def wedge(self, other: "MultiVector") -> "MultiVector":
        if self.d != other.d:
            raise ValueError("ambient dimensions differ")
        p, q, d = self.ell, other.ell, self.d
        if p + q > d:
            raise ValueError("wedge degree exceeds the ambient dimension")
        exact = is_exact(self.coeffs) and is_exact(other.coeffs)
        out = exact_zeros(comb(d, p + q)) if exact else np.zeros(comb(d, p + q), dtype=complex)
        target = subset_index(d, p + q)
        for i, a in enumerate(subsets(d, p)):
            ca = self.coeffs[i]
            if ca == 0:
                continue
            for j, b in enumerate(subsets(d, q)):
                cb = other.coeffs[j]
                if cb == 0:
                    continue
                sgn = permutation_sign(a + b)
                if sgn:
                    out[target[tuple(sorted(a + b))]] += sgn * ca * cb
        return MultiVector(d, p + q, out)

    def top_scalar(self, other: "MultiVector"):
        """The scalar ``self ^ other`` for complementary degrees."""
        if self.ell + other.ell != self.d:
            raise ValueError(f"degree mismatch: {self.ell} + {other.ell} != {self.d}")
        total = 0
        d = self.d
        idx = subset_index(d, other.ell)
        for i, a in enumerate(subsets(d, self.ell)):
            c = complement(a, d)
            total += permutation_sign(a + c) * self.coeffs[i] * other.coeffs[idx[c]]
        return total

    def plucker_residual(self) -> float:
        """Largest violation of the quadratic Plücker relations (unit-normalized)."""
        d, ell = self.d, self.ell
        if ell <= 1 or ell >= d - 1:
            return 0.0
        n = self.norm()
        if n == 0:
            return 0.0
        w = as_float(self.coeffs) / n
        idx = subset_index(d, ell)

        def coord(seq):
            s = permutation_sign(seq)
            return s * w[idx[tuple(sorted(seq))]] if s else 0.0

        worst = 0.0
        for A in combinations(range(d), ell - 1):
            for B in combinations(range(d), ell + 1):
                total = 0.0
                for k, b in enumerate(B):
                    if b in A:
                        continue
                    rest = B[:k] + B[k + 1:]
                    total += (-1) ** k * coord(A + (b,)) * coord(rest)
                worst = max(worst, abs(total))
        return worst

    def is_decomposable(self, tol: float = PLUCKER_TOL) -> bool:
        return self.plucker_residual() <= tol


def hodge_complement(omega: MultiVector) -> MultiVector:
    """A (d-ell)-vector ``u`` with ``eta ^ u = <eta, omega>`` for every ``eta``."""
    d, ell = omega.d, omega.ell
    out = np.zeros(comb(d, d - ell), dtype=complex)
    idx = subset_index(d, d - ell)
    for i, a in enumerate(subsets(d, ell)):
        c = complement(a, d)
        out[idx[c]] = permutation_sign(a + c) * np.conj(as_float(omega.coeffs)[i])
    return MultiVector(d, d - ell, out)


# ---------------------------------------------------------------------------
# Grassmannian points

def _canonical(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(as_float(coeffs), dtype=complex)
    n = np.linalg.norm(c)
    if n == 0:
        raise NumericError("zero multivector has no projective class")
    c = c / n
    k = int(np.argmax(np.abs(c) > 1e-12))
    return c * (np.conj(c[k]) / abs(c[k]))


def fs_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Fubini-Study distance between the lines spanned by ``u`` and ``v``."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    overlap = np.vdot(u, v)
    # atan2 keeps full precision for nearly equal lines, unlike arccos
    return float(np.arctan2(np.linalg.norm(v - overlap * u), abs(overlap)))


@dataclass(frozen=True, eq=False)
class GrassmannPoint:
    plucker: MultiVector
    non_unique: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "plucker",
            MultiVector(self.plucker.d, self.plucker.ell, _canonical(self.plucker.coeffs)))

    @property
    def d(self) -> int:
        return self.plucker.d

    @property
    def ell(self) -> int:
        return self.plucker.ell

    @property
    def coords(self) -> np.ndarray:
        return self.plucker.coeffs

    def distance(self, other: "GrassmannPoint") -> float:
        return fs_distance(self.coords, other.coords)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrassmannPoint):
            return NotImplemented
        return self.ell == other.ell and self.d == other.d and self.distance(other) < 1e-9

    __hash__ = None

    @classmethod
    def from_vector(cls, coeffs: np.ndarray, d: int, ell: int,
                    tol: float = PLUCKER_TOL) -> "GrassmannPoint":
        mv = MultiVector(d, ell, np.asarray(coeffs))
        if not mv.is_decomposable(tol):
            raise NumericError("multivector is not decomposable")
        return cls(mv)

    def basis(self) -> np.ndarray:
        """An orthonormal d x ell frame spanning the subspace."""
        d, ell = self.d, self.ell
        # v lies in the subspace iff v ^ omega = 0
        rows = []
        for e in range(d):
            rows.append(MultiVector.basis(d, (e,)).wedge(self.plucker).coeffs)
        m = np.array(rows).T  # maps coefficient vector v to v ^ omega
        _, s, vh = np.linalg.svd(m)
        return vh[-ell:].conj().T if ell else np.zeros((d, 0))


def plucker_embed(basis_columns, rank_tol: float = 1e-10) -> GrassmannPoint:
    cols = np.asarray(basis_columns)
    if cols.ndim == 1:
        cols = cols[:, None]
    fcols = as_float(cols)
    s = np.linalg.svd(fcols, compute_uv=False)
    if s.size == 0 or s[-1] <= rank_tol * max(s[0], 1e-300):
        raise NumericError("rank-deficient basis")
    return GrassmannPoint(MultiVector.from_vectors(cols))


def grassmann_from_frame(frame: np.ndarray) -> GrassmannPoint:
    return plucker_embed(frame)


# ---------------------------------------------------------------------------
# exterior powers

def exterior_power(L, ell: int) -> np.ndarray:
    """Matrix of ``ell x ell`` minors of ``L`` in lexicographic subset order."""
    L = np.asarray(L)
    d = check_square(L)
    if not 0 <= ell <= d:
        raise ValueError(f"ell={ell} out of range for d={d}")
    if ell == 0:
        return np.ones((1, 1), dtype=L.dtype)
    if is_exact(L):
        ss = subsets(d, ell)
        out = np.empty((len(ss), len(ss)), dtype=object)
        for i, r in enumerate(ss):
            for j, c in enumerate(ss):
                out[i, j] = exact_det(L[np.ix_(r, c)])
        return out
    idx = _subset_arrays(d, ell)
    sub = L[idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def exterior_power_stack(mats: np.ndarray, ell: int) -> np.ndarray:
    """Float exterior powers of a stack ``(n, d, d)`` in one vectorized pass."""
    mats = np.asarray(mats)
    n, d, _ = mats.shape
    if ell == 0:
        return np.ones((n, 1, 1), dtype=mats.dtype)
    idx = _subset_arrays(d, ell)
    sub = mats[:, idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def apply_linear(L, xi: GrassmannPoint) -> GrassmannPoint:
    """Image subspace ``L(xi)`` computed on a frame (no exterior power)."""
    return plucker_embed(np.asarray(L) @ xi.basis())


# ---------------------------------------------------------------------------
# hyperplane sections

@dataclass(frozen=True, eq=False)
class HyperplaneSection:
    """Subspaces of dimension ``ell`` meeting the (d-ell)-space of ``defining``."""

    defining: MultiVector

    def __post_init__(self):
        if self.defining.norm() == 0:
            raise ValueError("defining multivector must be nonzero")
        if not self.defining.is_decomposable():
            raise ValueError("defining multivector must be decomposable")

    @property
    def ell(self) -> int:
        return self.defining.d - self.defining.ell

    def functional(self, omega: MultiVector):
        return omega.top_scalar(self.defining)

    def contains_vector(self, omega: MultiVector, tol: float = 1e-9) -> bool:
        """Linear membership ``omega ^ defining = 0`` for any ell-multivector."""
        scale = omega.norm() * self.defining.norm()
        return abs(self.functional(omega)) <= tol * max(scale, 1e-300)

    @classmethod
    def orthogonal_to(cls, xi: GrassmannPoint) -> "HyperplaneSection":
        """Section of subspaces meeting the orthogonal complement of ``xi``."""
        return cls(hodge_complement(xi.plucker))


def hyperplane_contains(section: HyperplaneSection, xi: GrassmannPoint,
                        tol: float = 1e-9) -> bool:
    if section.ell != xi.ell or section.defining.d != xi.d:
        raise ValueError("degree mismatch between section and Grassmannian point")
    return section.contains_vector(xi.plucker, tol)


# ---------------------------------------------------------------------------
# eccentricity

def eccentricity(L, ell: int) -> tuple[float, GrassmannPoint]:
    """``a_ell / a_{ell+1}`` and the most expanded ell-subspace."""
    L = as_float(np.asarray(L))
    d = check_square(L)
    if not 1 <= ell <= d - 1:
        raise ValueError(f"ell={ell} out of range for d={d}")
    sd = singular_decomposition(L)
    a = sd.singular_values
    if a[-1] <= 1e-14 * a[0]:
        raise NumericError("singular input")
    value = float(a[ell - 1] / a[ell])
    frame = sd.right_frame[:ell].conj().T
    non_unique = value <= 1 + 1e-12
    point = GrassmannPoint(MultiVector.from_vectors(frame), non_unique=non_unique)
    return value, point


def conorm_ratio(L, xi: GrassmannPoint) -> float:
    """``m(L|xi) / ||L|xi_perp||`` for a subspace ``xi``."""
    L = as_float(np.asarray(L))
    frame = xi.basis()
    d = L.shape[0]
    q, _ = np.linalg.qr(np.concatenate([frame, np.eye(d)], axis=1))
    perp = q[:, xi.ell:d]
    m = np.linalg.svd(L @ frame, compute_uv=False)[-1]
    top = np.linalg.svd(L @ perp, compute_uv=False)[0]
    return float(m / top)


# ---------------------------------------------------------------------------
# quasi-projective maps

@dataclass(frozen=True, eq=False)
class QuasiProjectiveMap:
    carrier: np.ndarray
    d: int
    ell: int
    source: Optional[np.ndarray] = None  # d x d map whose exterior power is the carrier
    kernel_basis: list = field(default_factory=list)

    @classmethod
    def from_linear(cls, P, ell: int, tol: float = 1e-12) -> "QuasiProjectiveMap":
        P = as_float(np.asarray(P))
        d = check_square(P)
        carrier = exterior_power(P, ell)
        n = np.linalg.norm(carrier, 2)
        if n == 0:
            raise NumericError("zero map")
        carrier = carrier / n
        return cls(carrier, d, ell, P / np.linalg.norm(P, 2), _kernel(carrier, d, ell, tol))

    @classmethod
    def from_carrier(cls, carrier, d: int, ell: int, tol: float = 1e-12) -> "QuasiProjectiveMap":
        carrier = as_float(np.asarray(carrier))
        carrier = carrier / np.linalg.norm(carrier, 2)
        return cls(carrier, d, ell, None, _kernel(carrier, d, ell, tol))


def _kernel(carrier: np.ndarray, d: int, ell: int, tol: float) -> list:
    _, s, vh = np.linalg.svd(carrier)
    null = vh[s <= tol * s[0]]
    return [MultiVector(d, ell, row.conj()) for row in null]


def quasi_projective_apply(Q: QuasiProjectiveMap, xi: GrassmannPoint,
                           tol: float = 1e-12) -> GrassmannPoint:
    image = Q.carrier @ xi.coords
    if np.linalg.norm(image) <= tol:
        raise InKernelError("point lies in the kernel of the quasi-projective map")
    return GrassmannPoint(MultiVector(Q.d, Q.ell, image))


EMPTY_KERNEL = None


def kernel_hyperplane(Q: QuasiProjectiveMap) -> Optional[HyperplaneSection]:
    """A hyperplane section containing the kernel of ``Q``.

    Returns ``EMPTY_KERNEL`` (None) when ``Q`` is invertible.
    """
    if not Q.kernel_basis:
        return EMPTY_KERNEL
    if Q.source is not None:
        sd = np.linalg.svd(Q.source)
        top = MultiVector.from_vectors(sd[2][:Q.ell].conj().T)
    else:
        _, _, vh = np.linalg.svd(Q.carrier)
        top = MultiVector(Q.d, Q.ell, vh[0].conj())
        if not top.is_decomposable():
            raise NumericError("top singular direction is not decomposable")
    return HyperplaneSection(hodge_complement(top))
