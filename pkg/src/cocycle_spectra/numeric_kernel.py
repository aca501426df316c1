"""Dense matrices over two scalar domains, factorizations and seeded randomness.

Float matrices are ordinary numpy arrays (real or complex). Exact matrices
are numpy object arrays whose entries are :class:`fractions.Fraction`; numpy's
``@`` works on them without rounding. The two domains are never mixed inside
one matrix.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

DEFAULT_RTOL = 1e-9


class NumericError(ValueError):
    pass


class EigenDivergedError(NumericError):
    """Raised when the eigensolver does not converge."""


# ---------------------------------------------------------------------------
# scalar domains

def to_fraction(value) -> Fraction:
    """Parse ``value`` ("p/q" strings, ints, Fractions) into a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if not np.isfinite(value):
            raise NumericError("non-finite entry")
        return Fraction(value)
    if isinstance(value, numbers.Rational):
        return Fraction(int(value.numerator), int(value.denominator))
    raise NumericError(f"cannot convert {value!r} to an exact rational")


def exact_matrix(rows: Iterable[Iterable]) -> np.ndarray:
    rows = [list(r) for r in rows]
    out = np.empty((len(rows), len(rows[0]) if rows else 0), dtype=object)
    for i, r in enumerate(rows):
        if len(r) != out.shape[1]:
            raise NumericError("ragged matrix")
        for j, v in enumerate(r):
            out[i, j] = to_fraction(v)
    return out


def is_exact(m: np.ndarray) -> bool:
    return np.asarray(m).dtype == object


def as_exact(m) -> np.ndarray:
    m = np.asarray(m, dtype=object) if not isinstance(m, np.ndarray) else m
    if m.ndim == 1:
        return np.array([to_fraction(v) for v in m], dtype=object)
    return exact_matrix(m.tolist())


def as_float(m) -> np.ndarray:
    m = np.asarray(m)
    if m.dtype == object:
        if any(isinstance(v, complex) for v in m.flat):
            return m.astype(complex)
        return m.astype(float)
    return m


def exact_identity(d: int) -> np.ndarray:
    out = np.empty((d, d), dtype=object)
    out[...] = Fraction(0)
    for i in range(d):
        out[i, i] = Fraction(1)
    return out


def exact_zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out[...] = Fraction(0)
    return out


def check_finite(m: np.ndarray) -> None:
    if not is_exact(m) and not np.all(np.isfinite(m)):
        raise NumericError("non-finite entries")


def check_square(m: np.ndarray) -> int:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericError(f"expected a square matrix, got shape {m.shape}")
    return m.shape[0]


# ---------------------------------------------------------------------------
# exact linear algebra

def _row_reduce(m: np.ndarray):
    """Reduced row echelon form over Q. Returns (rref, pivot columns)."""
    a = [list(r) for r in np.asarray(m, dtype=object)]
    nrows = len(a)
    ncols = len(a[0]) if nrows else 0
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, nrows) if a[i][c] != 0), None)
        if p is None:
            continue
        a[r], a[p] = a[p], a[r]
        inv = 1 / Fraction(a[r][c])
        a[r] = [v * inv for v in a[r]]
        for i in range(nrows):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [vi - f * vr for vi, vr in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return a, pivots


def exact_det(m: np.ndarray) -> Fraction:
    """Determinant over Q by fraction-exact Gaussian elimination."""
    d = check_square(m)
    a = [[to_fraction(v) for v in row] for row in np.asarray(m, dtype=object)]
    det = Fraction(1)
    for c in range(d):
        p = next((i for i in range(c, d) if a[i][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        piv = a[c][c]
        det *= piv
        for i in range(c + 1, d):
            if a[i][c] != 0:
                f = a[i][c] / piv
                a[i] = [vi - f * vc for vi, vc in zip(a[i], a[c])]
    return det


def exact_rank(m: np.ndarray) -> int:
    m = np.asarray(m, dtype=object)
    if m.size == 0:
        return 0
    return len(_row_reduce(m)[1])


def exact_nullspace(m: np.ndarray) -> np.ndarray:
    """Basis of the right kernel over Q, as columns."""
    m = np.asarray(m, dtype=object)
    ncols = m.shape[1]
    rref, pivots = _row_reduce(m)
    free = [c for c in range(ncols) if c not in pivots]
    basis = exact_zeros((ncols, len(free)))
    for k, f in enumerate(free):
        basis[f, k] = Fraction(1)
        for i, p in enumerate(pivots):
            basis[p, k] = -rref[i][f]
    return basis


def exact_column_space(m: np.ndarray) -> np.ndarray:
    """Columns of ``m`` forming a basis of its column space."""
    m = np.asarray(m, dtype=object)
    _, pivots = _row_reduce(m)
    return m[:, pivots]


def exact_inverse(m: np.ndarray) -> np.ndarray:
    d = check_square(m)
    aug = np.concatenate([np.asarray(m, dtype=object), exact_identity(d)], axis=1)
    rref, pivots = _row_reduce(aug)
    if pivots[:d] != list(range(d)):
        raise NumericError("singular matrix")
    return np.array([row[d:] for row in rref[:d]], dtype=object)


def exact_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and all(x == y for x, y in zip(a.flat, b.flat))


# ---------------------------------------------------------------------------
# float factorizations

@dataclass(frozen=True)
class SingularData:
    """``L = left_frame @ diag(singular_values) @ right_frame``."""

    singular_values: np.ndarray
    left_frame: np.ndarray
    right_frame: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_frame * self.singular_values) @ self.right_frame


@dataclass(frozen=True)
class EigenData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


def singular_decomposition(L, rtol: float = DEFAULT_RTOL) -> SingularData:
    L = as_float(np.asarray(L))
    check_square(L)
    check_finite(L)
    u, s, vh = np.linalg.svd(L)
    data = SingularData(s, u, vh)
    scale = max(np.linalg.norm(L), np.finfo(float).tiny)
    if np.linalg.norm(data.reconstruct() - L) > max(rtol, 1e-12) * scale * 10:
        raise NumericError("singular value reconstruction failed")
    return data


def eigen_order(values: Sequence[complex]) -> list[int]:
    """Indices sorting by modulus descending, then argument descending."""
    vals = np.asarray(values, dtype=complex)
    # round the modulus so that equal-modulus pairs from LAPACK tie reliably
    keys = [(-round(abs(v), 12), -np.angle(v) if abs(v) > 0 else 0.0) for v in vals]
    return sorted(range(len(vals)), key=lambda i: keys[i])


def eigen_decomposition(B, rtol: float = DEFAULT_RTOL) -> EigenData:
    B = as_float(np.asarray(B))
    check_square(B)
    check_finite(B)
    try:
        w, v = np.linalg.eig(B)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigenDivergedError("eigensolver diverged") from exc
    order = eigen_order(w)
    w, v = w[order], v[:, order]
    norm_b = max(np.linalg.norm(B, 2), np.finfo(float).tiny)
    for k in range(len(w)):
        resid = np.linalg.norm(B @ v[:, k] - w[k] * v[:, k])
        if resid > max(rtol, 1e-12) * 1e3 * norm_b * np.linalg.norm(v[:, k]):
            raise EigenDivergedError(f"eigensolver diverged (residual {resid:.3e})")
    return EigenData(w, v)


def exact_eigen_decomposition(B: np.ndarray):
    """Rational eigenvalues and eigenvectors of an exact matrix, if they exist.

    Returns ``EigenData`` with object arrays, or ``None`` when some eigenvalue
    is irrational or the matrix is not diagonalizable over Q.
    """
    import sympy

    d = check_square(B)
    M = sympy.Matrix(d, d, [sympy.Rational(v.numerator, v.denominator) for v in B.flat])
    lam = sympy.Symbol("lam")
    poly = sympy.Poly(M.charpoly(lam).as_expr(), lam)
    roots = sympy.roots(poly, filter="Q")
    if sum(roots.values()) != d:
        return None
    pairs = []
    for r in roots:
        r_frac = Fraction(int(sympy.fraction(r)[0]), int(sympy.fraction(r)[1]))
        shifted = B - exact_identity(d) * r_frac
        ker = exact_nullspace(shifted)
        if ker.shape[1] != roots[r]:
            return None
        for k in range(ker.shape[1]):
            vec = ker[:, k]
            lead = next(x for x in vec if x != 0)
            pairs.append((r_frac, np.array([x / lead for x in vec], dtype=object)))
    order = eigen_order([float(p[0]) for p in pairs])
    values = np.array([pairs[i][0] for i in order], dtype=object)
    vectors = np.stack([pairs[i][1] for i in order], axis=1)
    return EigenData(values, vectors)


# ---------------------------------------------------------------------------
# randomness

@dataclass(frozen=True)
class RandomSource:
    """Reproducible stream: identical (seed, stream_id) gives identical draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, k: int) -> "RandomSource":
        # stream ids are packed so nested substreams never collide with siblings
        return RandomSource(self.seed, self.stream_id * 1_000_003 + k + 1)


def random_unitary(d: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    z = rng.standard_normal((d, d))
    if not real:
        z = z + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_invertible(d: int, rng: np.random.Generator, max_cond: float = 1e6,
                      complex_entries: bool = False) -> np.ndarray:
    while True:
        m = rng.standard_normal((d, d))
        if complex_entries:
            m = m + 1j * rng.standard_normal((d, d))
        if np.linalg.cond(m) < max_cond:
            return m


def random_rational_matrix(d: int, rng: np.random.Generator, bound: int = 9) -> np.ndarray:
    num = rng.integers(-bound, bound + 1, size=(d, d))
    den = rng.integers(1, bound + 1, size=(d, d))
    return exact_matrix([[Fraction(int(num[i, j]), int(den[i, j])) for j in range(d)]
                         for i in range(d)])
