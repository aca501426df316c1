"""k-cubes, iterated hyperplane sections, Vandermonde-type determinants.

A *k-cube* with sides ``c_1..c_k`` based on ``c`` is the set of sums
``c + sum a_i c_i`` with ``a_i`` in ``{0, 1}``.

For a matrix ``B`` with eigenvectors ``theta_1..theta_d`` and eigenvalues
``b_1 > ... > b_d > 0``, an ``ell``-subset ``I`` gets the weight
``b_I = prod_{j not in I} b_j`` (the product over the complement) and the
sign ``sigma_I`` of the permutation ``I + complement(I)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, prod
from typing import Optional, Sequence

import numpy as np

from .exterior import (
    GrassmannPoint,
    HyperplaneSection,
    MultiVector,
    complement,
    exterior_power,
    permutation_sign,
    subset_index,
    subsets,
)
from .numeric_kernel import (
    as_exact,
    as_float,
    check_square,
    eigen_decomposition,
    exact_det,
    exact_eigen_decomposition,
    exact_identity,
    exact_inverse,
    exact_nullspace,
    exact_rank,
    is_exact,
    to_fraction,
)


class PreconditionError(ValueError):
    """A hypothesis of the underlying statement fails; ``kind`` says which."""

    def __init__(self, kind: str, msg: str):
        super().__init__(f"{kind}: {msg}")
        self.kind = kind


# ---------------------------------------------------------------------------
# k-cubes

@dataclass(frozen=True)
class KCube:
    base: int
    sides: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if self.base < 0 or any(s < 1 for s in self.sides):
            raise ValueError("base must be >= 0 and sides positive")

    @property
    def k(self) -> int:
        return len(self.sides)

    def elements(self) -> list:
        """The ``2^k`` sums, with multiplicity, in binary order of ``a``."""
        return [self.base + sum(a * s for a, s in zip(bits, self.sides))
                for bits in itertools.product((0, 1), repeat=self.k)]

    def as_set(self) -> frozenset:
        return frozenset(self.elements())

    @property
    def is_proper(self) -> bool:
        """True when all ``2^k`` sums are distinct."""
        return len(self.as_set()) == 2 ** self.k

    def faces(self) -> tuple:
        """The two (k-1)-cubes split along the last side."""
        head = self.sides[:-1]
        return KCube(self.base, head), KCube(self.base + self.sides[-1], head)

    def contained_in(self, J) -> bool:
        return self.as_set() <= set(J)


@dataclass(frozen=True)
class CubeFamily:
    """Sides and the set of bases at which ``J`` contains the cube."""

    sides: tuple
    bases: tuple
    delta: float  # density guaranteed by the constructive chain
    density: float  # achieved density #bases / N
    constructive: bool

    def cubes(self) -> list:
        return [KCube(c, self.sides) for c in self.bases]


def _gap_step(A: Sequence[int], eps: float) -> Optional[tuple]:
    """One level of the gap-frequency argument on a sorted set ``A``."""
    if len(A) < 2:
        return None
    gaps = np.diff(np.asarray(A))
    small = gaps[gaps <= 4 / eps] if eps > 0 else gaps
    pool = small if len(small) else gaps
    values, counts = np.unique(pool, return_counts=True)
    c = int(values[np.argmax(counts)])  # most frequent gap; ties go to the smallest
    bases = tuple(int(A[i]) for i in range(len(A) - 1) if gaps[i] == c)
    return c, bases


def _exhaustive(J: frozenset, N: int, k: int) -> Optional[tuple]:
    """Depth-first search over side tuples; bases shrink as sides are added."""
    def rec(sides, bases):
        if len(sides) == k:
            return sides, bases
        for s in range(1, N):
            nb = tuple(c for c in bases if c + s in set(bases))
            if nb:
                found = rec(sides + (s,), nb)
                if found:
                    return found
        return None

    start = tuple(sorted(x for x in J if 0 <= x < N))
    return rec((), start) if start else None


def find_k_cube(J, N: int, eps: float, k: int) -> Optional[CubeFamily]:
    """Sides ``c_1..c_k`` and bases at which ``J`` contains the k-cube.

    Follows the induction of the density argument: at each level the most
    frequent short gap of the current base set becomes the next side, and
    the bases keep those points followed by that gap. The guaranteed density
    shrinks as ``delta -> delta^2 / 16`` per level. When the construction
    runs dry (small ``N``) an exhaustive search decides; ``None`` means no
    such cube exists.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    J = frozenset(int(j) for j in J if 0 <= j < N)
    if len(J) < eps * N:
        raise ValueError("J is not eps-dense")
    level = tuple(sorted(J))
    sides: tuple = ()
    delta = eps
    for _ in range(k):
        step = _gap_step(level, delta)
        if step is None:
            break
        c, level = step
        sides += (c,)
        delta = delta ** 2 / 16
    if len(sides) == k and level:
        fam = CubeFamily(sides, level, delta, len(level) / N, True)
    else:
        found = _exhaustive(J, N, k)
        if found is None:
            return None
        fam = CubeFamily(found[0], found[1], delta, len(found[1]) / N, False)
    # the recursion already guarantees containment; check it anyway
    assert all(cube.contained_in(J) for cube in fam.cubes())
    return fam


# ---------------------------------------------------------------------------
# invariant subspaces from cubes

def _normal_of(H_basis, exact: bool):
    H = np.asarray(H_basis)
    if exact:
        ns = exact_nullspace(as_exact(H).T)
        if ns.shape[1] != 1:
            raise PreconditionError("codimension", "H must be a hyperplane")
        return ns[:, 0]
    _, s, vh = np.linalg.svd(as_float(H).T)
    if H.shape[1] != H.shape[0] - 1 or s[-1] <= 1e-12 * s[0]:
        raise PreconditionError("codimension", "H must be a hyperplane")
    return vh[-1].conj()


class _Translates:
    """Normals of ``B^i(H)``: ``B^i(H) = ker(nu^* B^{-i})``."""

    def __init__(self, H_basis, B, exact: bool, tol: float):
        self.exact = exact
        self.tol = tol
        self.nu = _normal_of(H_basis, exact)
        self.Binv = exact_inverse(as_exact(B)) if exact else np.linalg.inv(as_float(B))
        self.dim = len(self.nu)
        self._rows = {}

    def row(self, i: int):
        if i not in self._rows:
            if self.exact:
                r = self.nu.copy()
                for _ in range(i):
                    r = r.dot(self.Binv)
                self._rows[i] = r
            else:
                r = self.nu.conj() @ np.linalg.matrix_power(self.Binv, i)
                self._rows[i] = r / np.linalg.norm(r)
        return self._rows[i]

    def stack(self, idx) -> np.ndarray:
        return np.array([self.row(i) for i in sorted(set(idx))],
                        dtype=object if self.exact else complex)

    def codim(self, idx) -> int:
        M = self.stack(idx)
        if self.exact:
            return exact_rank(M)
        s = np.linalg.svd(M, compute_uv=False)
        return int(np.sum(s > self.tol * s[0]))

    def same_subspace(self, a, b) -> bool:
        ra, rb = self.codim(a), self.codim(b)
        return ra == rb == self.codim(list(a) + list(b))


def invariant_subspace_from_cube(H_basis, B, cube: KCube, codim_cap: Optional[int] = None,
                                 tol: float = 1e-9) -> tuple:
    """A subcube ``I'`` and ``l >= 1`` with ``B^l(H(I')) = H(I')``.

    ``H(I)`` is the intersection of ``B^i(H)`` over ``i`` in ``I``. Requires
    ``codim H(I) <= k``; sides are treated in increasing order, so an
    invariant ``H`` returns the smallest side.
    """
    exact = is_exact(np.asarray(H_basis)) and is_exact(np.asarray(B))
    k = cube.k if codim_cap is None else codim_cap
    if cube.k < 1:
        raise ValueError("need a cube of dimension >= 1")
    cube = KCube(cube.base, tuple(sorted(cube.sides)))
    T = _Translates(H_basis, B, exact, tol)
    if T.codim(cube.elements()) > k:
        raise PreconditionError("codimension", f"H(I) has codimension > {k}")

    def rec(c: KCube) -> tuple:
        if c.k == 1:
            return KCube(c.base), c.sides[0]
        first, second = c.faces()
        if T.codim(first.elements()) <= c.k - 1:
            return rec(first)
        if T.codim(second.elements()) <= c.k - 1:
            return rec(second)
        return first, c.sides[-1]

    sub, l = rec(cube)
    shifted = [i + l for i in sub.elements()]
    if not T.same_subspace(sub.elements(), shifted):
        raise ArithmeticError("invariance check failed; tolerance too loose or too tight")
    return sub, l


# ---------------------------------------------------------------------------
# Vandermonde-type determinants

@dataclass(frozen=True)
class VandermondeResult:
    det: object
    product_part: object
    schur_part: object  # None when some x repeat
    defined: bool


def _check_exponents(m) -> tuple:
    m = tuple(int(v) for v in m)
    if any(v < 0 for v in m) or any(a >= b for a, b in zip(m, m[1:])):
        raise ValueError("exponents must be non-negative and strictly increasing")
    return m


def vandermonde(m: Sequence[int], x: Sequence, exact: bool = True) -> VandermondeResult:
    """``det (x_j^{m_u})`` split as product of differences times the rest."""
    m = _check_exponents(m)
    if len(x) != len(m):
        raise ValueError("need as many points as exponents")
    N = len(m)
    if exact:
        xs = [to_fraction(v) for v in x]
        M = np.array([[xj ** mu for xj in xs] for mu in m], dtype=object)
        det = exact_det(M)
        product = prod((xs[j] - xs[i] for i in range(N) for j in range(i + 1, N)), start=Fraction(1))
    else:
        xs = np.asarray(x, dtype=float)
        M = xs[None, :] ** np.asarray(m, dtype=float)[:, None]
        det = float(np.linalg.det(M))
        product = float(np.prod([xs[j] - xs[i] for i in range(N) for j in range(i + 1, N)]))
    if product == 0:
        return VandermondeResult(det, product, None, False)
    return VandermondeResult(det, product, det / product, True)


def schur_polynomial(m: Sequence[int]):
    """The quotient polynomial in ``x_1..x_N`` as a sympy ``Poly``."""
    import sympy
    from sympy.polys.domains import ZZ
    from sympy.polys.rings import ring

    m = _check_exponents(m)
    N = len(m)
    names = [f"x{i + 1}" for i in range(N)]
    R, *X = ring(",".join(names), ZZ)
    # Leibniz expansion: each permutation contributes one signed monomial
    terms = {}
    for perm in itertools.permutations(range(N)):
        expo = [0] * N
        for u, j in enumerate(perm):
            expo[j] = m[u]
        terms[tuple(expo)] = permutation_sign(perm)
    diff = R.one
    for i in range(N):
        for j in range(i + 1, N):
            diff *= X[j] - X[i]
    q, r = R.from_dict(terms).div(diff)
    if r != 0:
        raise ArithmeticError("determinant not divisible by the difference product")
    return sympy.Poly.from_dict(dict(q.items()), *sympy.symbols(names), domain="ZZ")


def has_positive_coefficients(poly) -> bool:
    return all(c > 0 for c in poly.coeffs())


# ---------------------------------------------------------------------------
# decomposable vectors in a linear span

def _wedge_map(coeffs, d: int, ell: int) -> np.ndarray:
    """Matrix of ``v -> v ^ omega`` (columns indexed by the basis ``e_i``)."""
    coeffs = np.asarray(coeffs)
    omega = MultiVector(d, ell, coeffs)
    exact = is_exact(coeffs)
    cols = []
    for i in range(d):
        e = np.array([Fraction(int(i == j)) for j in range(d)], dtype=object) if exact \
            else np.eye(d)[i]
        cols.append(MultiVector(d, 1, e).wedge(omega).coeffs)
    return np.array(cols, dtype=object if exact else complex).T


def is_decomposable(coeffs, d: int, ell: int, tol: float = 1e-9) -> bool:
    """Nonzero ``omega`` is decomposable iff ``v -> v ^ omega`` has rank ``d - ell``."""
    coeffs = np.asarray(coeffs)
    if ell <= 1 or ell >= d - 1:
        return any(c != 0 for c in coeffs)
    W = _wedge_map(coeffs, d, ell)
    if is_exact(coeffs):
        return any(c != 0 for c in coeffs) and exact_rank(W) == d - ell
    s = np.linalg.svd(W, compute_uv=False)
    return bool(s[0] > 0 and s[d - ell] <= tol * s[0])


@dataclass(frozen=True)
class SpanSearch:
    witness: Optional[np.ndarray]  # a decomposable vector of the span, if found
    certified: bool  # True when absence (or presence) is proved, not sampled


def _pencil_exact(K1, K2, d, ell) -> Optional[np.ndarray]:
    import sympy

    t = sympy.Symbol("t")
    W1 = _wedge_map(K1, d, ell)
    W2 = _wedge_map(K2, d, ell)
    S = sympy.Matrix(W1.shape[0], d, lambda i, j: sympy.Rational(W1[i, j].numerator,
                                                                  W1[i, j].denominator)
                     + t * sympy.Rational(W2[i, j].numerator, W2[i, j].denominator))
    size = d - ell + 1
    g = sympy.Integer(0)
    for rows in itertools.combinations(range(S.shape[0]), size):
        for cols in itertools.combinations(range(d), size):
            g = sympy.gcd(g, sympy.expand(S.extract(list(rows), list(cols)).det()))
            if g == 1:
                return None
    if g == 0:
        return np.asarray(K1, dtype=object)
    roots = sympy.Poly(g, t).all_roots()
    r = roots[0]
    if r.is_rational:
        f = Fraction(int(sympy.fraction(r)[0]), int(sympy.fraction(r)[1]))
        return np.array([a + f * b for a, b in zip(K1, K2)], dtype=object)
    rc = complex(sympy.N(r, 30))
    return as_float(K1).astype(complex) + rc * as_float(K2)


def _pencil_float(K1, K2, d, ell, tol) -> Optional[np.ndarray]:
    W1, W2 = _wedge_map(K1, d, ell), _wedge_map(K2, d, ell)
    size = d - ell + 1
    deg = size
    ts = np.exp(2j * np.pi * np.arange(deg + 1) / (deg + 1))
    best, best_norm = None, 0.0
    for rows in itertools.combinations(range(W1.shape[0]), size):
        for cols in itertools.combinations(range(d), size):
            ix = np.ix_(rows, cols)
            vals = [np.linalg.det(W1[ix] + t * W2[ix]) for t in ts]
            coef = np.polyfit(ts, vals, deg)
            n = np.linalg.norm(coef)
            if n > best_norm:
                best, best_norm = coef, n
    if best is None or best_norm == 0:
        return np.asarray(K1)
    candidates = list(np.roots(np.trim_zeros(best / best_norm, "f")))
    for t in candidates:
        v = np.asarray(K1) + t * np.asarray(K2)
        if is_decomposable(v, d, ell, tol):
            return v
    return None


def decomposable_in_span(K: np.ndarray, d: int, ell: int, rng: Optional[np.random.Generator] = None,
                         draws: int = 2000, tol: float = 1e-9) -> SpanSearch:
    """Search the column span of ``K`` for a nonzero decomposable ``ell``-vector.

    Spans of dimension one and two are decided (rank of the wedge map, and a
    common root of its minors along a pencil); larger spans are tried
    pairwise and then sampled, which can only refute, not certify.
    """
    K = np.asarray(K)
    r = K.shape[1] if K.ndim == 2 else 0
    if r == 0:
        return SpanSearch(None, True)
    if ell <= 1 or ell >= d - 1:
        return SpanSearch(K[:, 0], True)
    exact = is_exact(K)
    for j in range(r):
        if is_decomposable(K[:, j], d, ell, tol):
            return SpanSearch(K[:, j], True)
    if r == 1:
        return SpanSearch(None, True)
    for a, b in itertools.combinations(range(r), 2):
        for first, second in ((a, b), (b, a)):
            w = (_pencil_exact(K[:, first], K[:, second], d, ell) if exact
                 else _pencil_float(K[:, first], K[:, second], d, ell, tol))
            if w is not None:
                return SpanSearch(w, True)
            if r == 2:
                break
    if r == 2:
        return SpanSearch(None, True)
    rng = np.random.default_rng(0) if rng is None else rng
    Kf = as_float(K).astype(complex)
    for _ in range(draws):
        c = rng.standard_normal(r) + 1j * rng.standard_normal(r)
        v = Kf @ c
        if is_decomposable(v, d, ell, tol):
            return SpanSearch(v, False)
    return SpanSearch(None, False)


# ---------------------------------------------------------------------------
# N-wise disjointness of translated sections

@dataclass(frozen=True)
class DisjointnessResult:
    empty: bool
    witness: Optional[GrassmannPoint]
    kernel_dim: int
    certified: bool
    exact: bool
    positive_spectrum: bool  # False when the guarantee goes through B^2

    def to_json(self) -> dict:
        return {"empty": self.empty, "kernel_dim": self.kernel_dim, "certified": self.certified,
                "exact": self.exact, "positive_spectrum": self.positive_spectrum,
                "witness": None if self.witness is None else
                [[float(v.real), float(v.imag)] for v in self.witness.coords]}


def _eigen(B, exact: bool):
    if exact:
        ed = exact_eigen_decomposition(B)
        if ed is not None:
            return ed, True
    return eigen_decomposition(as_float(B)), False


def check_disjointness_preconditions(B, upsilon: MultiVector, tol: float = 1e-9) -> bool:
    """Raise ``PreconditionError`` unless the statement applies; return eigen exactness.

    Eigenvalues must have distinct moduli and be real, and the
    ``(d-ell)``-vector ``upsilon`` must pair nontrivially with every sum
    of ``ell`` eigenspaces.
    """
    B = np.asarray(B)
    d = check_square(B)
    exact = is_exact(B) and is_exact(np.asarray(upsilon.coeffs))
    ed, ex = _eigen(B, exact)
    vals = ed.eigenvalues
    mod = [abs(v) for v in vals] if ex else list(np.abs(vals))
    for i in range(d - 1):
        same = mod[i] == mod[i + 1] if ex else abs(mod[i] - mod[i + 1]) <= tol * mod[0]
        if same:
            raise PreconditionError("pinching", "eigenvalues with equal absolute value")
    if not ex and np.max(np.abs(np.imag(vals))) > tol * mod[0]:
        raise PreconditionError("complex", "non-real eigenvalues are not handled here")
    ell = d - upsilon.ell
    vecs = ed.eigenvectors if ex else np.real_if_close(ed.eigenvectors)
    for I in subsets(d, ell):
        theta = MultiVector.from_vectors(vecs[:, list(I)])
        val = theta.top_scalar(upsilon)
        if ex:
            bad = val == 0
        else:
            bad = abs(val) <= tol * theta.norm() * upsilon.norm()
        if bad:
            raise PreconditionError("eigenspace", f"section contains the eigenspace sum {I}")
    return ex


def _translate_rows(B, upsilon: MultiVector, ell: int, exponents, exact: bool) -> np.ndarray:
    """Row ``u`` is the functional ``omega -> omega ^ Lambda(B^{-m_u}) upsilon``."""
    d = upsilon.d
    q = d - ell
    Binv = exact_inverse(as_exact(B)) if exact else np.linalg.inv(as_float(B))
    idx = subset_index(d, q)
    rows = []
    for m in exponents:
        if exact:
            P = exact_identity(d)
            for _ in range(m):
                P = P.dot(Binv)
            u = exterior_power(P, q).dot(as_exact(upsilon.coeffs))
        else:
            u = exterior_power(np.linalg.matrix_power(Binv, m), q) @ as_float(upsilon.coeffs)
            u = u / np.linalg.norm(u)
        row = [permutation_sign(I + complement(I, d)) * u[idx[complement(I, d)]]
               for I in subsets(d, ell)]
        rows.append(row)
    return np.array(rows, dtype=object if exact else complex)


def disjointness_check(B, section: HyperplaneSection, ell: int, exponents: Sequence[int],
                       tol: float = 1e-9, rng: Optional[np.random.Generator] = None
                       ) -> DisjointnessResult:
    """Decide whether the translates ``B^{-m_u}(V)`` have a common point.

    The common points are the decomposable vectors in the kernel of a
    linear system on the exterior power; the kernel is exact for rational
    input.
    """
    exponents = _check_exponents(exponents)
    ups = section.defining
    if section.ell != ell:
        raise ValueError("section degree does not match ell")
    B = np.asarray(B)
    exact = is_exact(B) and is_exact(np.asarray(ups.coeffs))
    check_disjointness_preconditions(B, ups, tol)
    vals = _eigen(B, exact)[0].eigenvalues
    positive = all(float(np.real(v)) > 0 for v in vals)
    d = ups.d
    X = _translate_rows(B, ups, ell, exponents, exact)
    if exact:
        K = exact_nullspace(X)
    else:
        _, s, vh = np.linalg.svd(X)
        rank = int(np.sum(s > tol * s[0]))
        K = vh[rank:].conj().T
    found = decomposable_in_span(K, d, ell, rng, tol=tol)
    witness = None
    if found.witness is not None:
        witness = GrassmannPoint(MultiVector(d, ell, as_float(np.asarray(found.witness))
                                             .astype(complex)))
    return DisjointnessResult(found.witness is None, witness, K.shape[1], found.certified,
                              exact, positive)


def exponent_matrix(b_I: Sequence, exponents: Sequence[int]) -> np.ndarray:
    """``X = (b_I^{m_u})``, exact when the weights are rational."""
    exponents = _check_exponents(exponents)
    vals = [to_fraction(b) if not isinstance(b, float) or float(b).is_integer() else b
            for b in b_I]
    if all(isinstance(v, Fraction) for v in vals):
        return np.array([[v ** m for v in vals] for m in exponents], dtype=object)
    return np.array([[float(v) ** m for v in vals] for m in exponents])


# ---------------------------------------------------------------------------
# the grouped equations

def complement_weights(b: Sequence, ell: int) -> list:
    """``b_I`` for every ``ell``-subset: product over the complement."""
    d = len(b)
    return [prod((b[j] for j in complement(I, d)), start=Fraction(1) if is_exact(np.asarray(b))
                 else 1.0) for I in subsets(d, ell)]


def weight_classes(b_I: Sequence) -> list:
    """Subset indices grouped by equal weight, heaviest class first."""
    groups: dict = {}
    for i, v in enumerate(b_I):
        groups.setdefault(v, []).append(i)
    return [groups[v] for v in sorted(groups, reverse=True)]


def _resolve_weights(B_moduli: Sequence, d: int, ell: int) -> list:
    B_moduli = list(B_moduli)
    if len(B_moduli) == comb(d, ell) and len(B_moduli) != d:
        return B_moduli
    if len(B_moduli) == d:
        return complement_weights([to_fraction(v) for v in B_moduli] if all(
            isinstance(v, (int, Fraction)) for v in B_moduli) else B_moduli, ell)
    raise ValueError("B_moduli must list per-index or per-subset weights")


def grouped_matrix(b_I: Sequence, upsilon: MultiVector, ell: int, sigma=None) -> np.ndarray:
    """Rows ``sum_{b_J = b} sigma_J omega(J) upsilon(J)`` as functionals of ``omega``."""
    d = upsilon.d
    ss = subsets(d, ell)
    idx = subset_index(d, d - ell)
    sigma = [permutation_sign(I + complement(I, d)) for I in ss] if sigma is None else sigma
    exact = is_exact(np.asarray(upsilon.coeffs))
    coeff = [upsilon.coeffs[idx[complement(I, d)]] for I in ss]
    rows = []
    for cls in weight_classes(b_I):
        row = [0] * len(ss) if exact else np.zeros(len(ss), dtype=complex)
        for j in cls:
            row[j] = sigma[j] * coeff[j]
        rows.append(row)
    return np.array(rows, dtype=object if exact else complex)


@dataclass(frozen=True)
class Kernel2Result:
    satisfies: bool  # omega solves the grouped equations
    omega_zero: bool
    holds: bool  # the implication "solves => omega = 0"
    residual: float
    certificate: tuple = field(default=())

    def __bool__(self) -> bool:
        return self.holds


def kernel2_check(omega: MultiVector, B_moduli: Sequence, upsilon: MultiVector,
                  sigma=None, tol: float = 1e-10) -> Kernel2Result:
    """Check the implication for one decomposable ``omega`` (eigen-coordinates).

    For exact input the lexicographic certificate is attached: classes are
    visited from the heaviest down, each is checked to hold at most one
    nonzero coordinate, and that coordinate is forced to vanish.
    """
    d, ell = omega.d, omega.ell
    if upsilon.d != d or upsilon.ell != d - ell:
        raise ValueError("upsilon must be a (d-ell)-vector in the same dimension")
    idx = subset_index(d, d - ell)
    for I in subsets(d, ell):
        if upsilon.coeffs[idx[complement(I, d)]] == 0:
            raise PreconditionError("upsilon", f"upsilon vanishes on {I}")
    if not is_decomposable(omega.coeffs, d, ell) and any(c != 0 for c in omega.coeffs):
        raise ValueError("omega must be decomposable")
    b_I = _resolve_weights(B_moduli, d, ell)
    G = grouped_matrix(b_I, upsilon, ell, sigma)
    exact = is_exact(np.asarray(omega.coeffs)) and is_exact(G)
    if exact:
        res = G.dot(np.asarray(omega.coeffs, dtype=object))
        satisfies = all(v == 0 for v in res)
        residual = float(max(abs(float(v)) for v in res))
        zero = all(c == 0 for c in omega.coeffs)
    else:
        w = as_float(np.asarray(omega.coeffs)).astype(complex)
        nw = np.linalg.norm(w)
        zero = nw == 0
        res = as_float(G) @ w
        scale = nw * float(np.max(np.abs(as_float(upsilon.coeffs)))) if nw else 1.0
        residual = float(np.max(np.abs(res)) / scale)
        satisfies = residual <= tol
    cert = lexicographic_certificate(omega, b_I, G) if exact else ()
    return Kernel2Result(satisfies, zero, (not satisfies) or zero, residual, cert)


def lexicographic_certificate(omega: MultiVector, b_I: Sequence, G: np.ndarray) -> tuple:
    """Per weight class: (class subsets, nonzero coordinates, equation value)."""
    d, ell = omega.d, omega.ell
    ss = subsets(d, ell)
    out = []
    for r, cls in enumerate(weight_classes(b_I)):
        nonzero = [ss[j] for j in cls if omega.coeffs[j] != 0]
        value = sum((G[r][j] * omega.coeffs[j] for j in cls), Fraction(0))
        out.append((tuple(ss[j] for j in cls), tuple(nonzero), value))
    return tuple(out)


@dataclass(frozen=True)
class RefutationReport:
    draws: int
    min_residual: float
    counterexamples: int
    kernel_dim: int
    kernel_has_decomposable: Optional[bool]

    def to_json(self) -> dict:
        return {"draws": self.draws, "min_residual": self.min_residual,
                "counterexamples": self.counterexamples, "kernel_dim": self.kernel_dim,
                "kernel_has_decomposable": self.kernel_has_decomposable}


def kernel2_refutation(B_moduli: Sequence, upsilon: MultiVector, ell: int, draws: int,
                       rng: np.random.Generator, tol: float = 1e-8) -> RefutationReport:
    """Random decomposable ``omega`` against the grouped equations, plus an exact
    search of the grouped kernel for decomposable vectors."""
    d = upsilon.d
    b_I = _resolve_weights(B_moduli, d, ell)
    G = grouped_matrix(b_I, upsilon, ell)
    Gf = as_float(G).astype(complex)
    frames = rng.standard_normal((draws, d, ell)) + 1j * rng.standard_normal((draws, d, ell))
    from .exterior import _subset_arrays

    idx = _subset_arrays(d, ell)
    W = np.linalg.det(frames[:, idx, :])
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    scale = float(np.max(np.abs(as_float(upsilon.coeffs))))
    res = np.max(np.abs(W @ Gf.T), axis=1) / scale
    K = exact_nullspace(G) if is_exact(G) else None
    has = None
    if K is not None:
        has = decomposable_in_span(K, d, ell, rng).witness is not None
    kdim = K.shape[1] if K is not None else int(Gf.shape[1] - np.linalg.matrix_rank(Gf))
    return RefutationReport(draws, float(res.min()), int(np.sum(res <= tol)), kdim, has)
