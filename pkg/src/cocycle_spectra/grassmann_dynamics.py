"""Monte Carlo experiments on Grassmannian fibers along backward orbits.

For a point ``x`` and ``n >= 1`` write ``M_k = A(f^{-k} x)`` and
``L_n = M_1 M_2 ... M_n``. The experiments push an initial measure on
``Grass(ell, d)`` forward by ``L_n`` and watch it collapse, measure the
eccentricity of ``L_n`` and track the image of its most expanded subspace.

Everything is done in Plücker coordinates: the running product is kept as
a normalized exterior power, so no vector ever underflows.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .exterior import (
    GrassmannPoint,
    InKernelError,
    MultiVector,
    _subset_arrays,
    exterior_power,
    exterior_power_stack,
)
from .lyapunov import _spec_matrices, _zorich_groups
from .numeric_kernel import as_float
from .rauzy_zorich import ZorichCocycle, ZorichOrbit
from .shift_space import CocycleSpec

TRACE_SCHEMA = "cocycle_spectra.grassmann_trace/1"
CONVERGED = 1e-6


def _canonical_rows(coords: np.ndarray) -> np.ndarray:
    """Unit rows with the first non-negligible entry real and positive."""
    c = np.asarray(coords, dtype=complex)
    c = c / np.linalg.norm(c, axis=1, keepdims=True)
    k = np.argmax(np.abs(c) > 1e-12, axis=1)
    lead = c[np.arange(len(c)), k]
    return c * (np.conj(lead) / np.abs(lead))[:, None]


# ---------------------------------------------------------------------------
# empirical measures

@dataclass(frozen=True, eq=False)
class EmpiricalFiberMeasure:
    """Finitely many weighted points of ``Grass(ell, d)``.

    ``coords`` holds one canonical Plücker vector per row.
    """

    coords: np.ndarray
    weights: np.ndarray
    d: int
    ell: int

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coords))
        w = np.asarray(self.weights, dtype=float)
        if c.shape[1] != comb(self.d, self.ell):
            raise ValueError("Plücker vectors have the wrong length")
        if len(w) != len(c):
            raise ValueError("one weight per atom is required")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "coords", _canonical_rows(c))
        object.__setattr__(self, "weights", w)

    @property
    def count(self) -> int:
        return len(self.weights)

    @property
    def atoms(self) -> list:
        return [(GrassmannPoint(MultiVector(self.d, self.ell, c)), float(w))
                for c, w in zip(self.coords, self.weights)]

    @classmethod
    def from_points(cls, points, weights=None) -> "EmpiricalFiberMeasure":
        points = list(points)
        w = np.full(len(points), 1 / len(points)) if weights is None else np.asarray(weights, float)
        return cls(np.stack([p.coords for p in points]), w, points[0].d, points[0].ell)

    @classmethod
    def random(cls, d: int, ell: int, count: int, rng: np.random.Generator,
               field: str = "complex") -> "EmpiricalFiberMeasure":
        """Uniform atoms: orthonormalized Gaussian frames, equal weights."""
        shape = (count, d, ell)
        g = rng.standard_normal(shape)
        if field == "complex":
            g = g + 1j * rng.standard_normal(shape)
        elif field != "real":
            raise ValueError("field must be 'real' or 'complex'")
        q, _ = np.linalg.qr(g)
        idx = _subset_arrays(d, ell)
        coords = np.linalg.det(q[:, idx, :])
        return cls(coords, np.full(count, 1 / count), d, ell)


def pushforward(measure: EmpiricalFiberMeasure, L, ell: Optional[int] = None,
                kernel_tol: float = 1e-13) -> EmpiricalFiberMeasure:
    """Image measure under the projective action of an invertible ``L``."""
    ell = measure.ell if ell is None else ell
    if ell != measure.ell:
        raise ValueError("ell does not match the measure")
    L = as_float(np.asarray(L))
    s = np.linalg.svd(L, compute_uv=False)
    if s[-1] <= 1e-14 * s[0]:
        raise ValueError("pushforward needs an invertible matrix")
    carrier = exterior_power(L, ell)
    return _push_coords(measure, carrier, kernel_tol)


def _push_coords(measure, carrier, kernel_tol):
    image = measure.coords @ carrier.T
    norms = np.linalg.norm(image, axis=1)
    if np.any(norms <= kernel_tol * np.linalg.norm(carrier, 2)):
        raise InKernelError("an atom is numerically in the kernel")
    return EmpiricalFiberMeasure(image, measure.weights, measure.d, measure.ell)


@dataclass(frozen=True)
class DispersionStat:
    mean_point: GrassmannPoint
    dispersion: float
    mean_vector: np.ndarray = field(repr=False, default=None)


def dispersion_stat(measure: EmpiricalFiberMeasure) -> DispersionStat:
    """Weighted mean squared Fubini-Study distance to the extrinsic mean.

    The extrinsic mean is the top eigenvector of ``sum w xi xi^*``; it is
    reported as the nearest atom, which is always decomposable.
    """
    c, w = measure.coords, measure.weights
    cov = (c.T * w) @ c.conj()
    _, vecs = np.linalg.eigh(cov)
    u = vecs[:, -1]
    fs = _fs_to(c, u)
    i = int(np.argmin(fs))
    point = GrassmannPoint(MultiVector(measure.d, measure.ell, c[i]))
    return DispersionStat(point, float(np.dot(w, fs ** 2)), u)


def _fs_to(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    u = u / np.linalg.norm(u)
    ov = rows @ u.conj()
    resid = rows - ov[:, None] * u[None, :]
    return np.arctan2(np.linalg.norm(resid, axis=1), np.abs(ov))


def pairwise_distances(measure: EmpiricalFiberMeasure) -> np.ndarray:
    c = measure.coords
    ov = np.abs(c.conj() @ c.T).clip(0, 1)
    return np.arccos(ov)


# ---------------------------------------------------------------------------
# backward orbits

def _forward_stack(source, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` consecutive step matrices in time order along a typical orbit."""
    if isinstance(source, CocycleSpec):
        return _spec_matrices(source, n, rng)
    if isinstance(source, ZorichCocycle):
        orbit = source.orbit(n, rng)
        return np.concatenate(list(_zorich_groups(orbit, source.restricted, 1)))
    if isinstance(source, ZorichOrbit):
        return np.concatenate(list(_zorich_groups(source, True, 1)))[:n]
    raise TypeError(f"unsupported cocycle source {type(source).__name__}")


def backward_matrices(source, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``M_1, ..., M_n`` with ``M_k = A(f^{-k} x)`` for a typical ``x``.

    A 2-d array is a constant cocycle and a 3-d array is taken to be the
    backward sequence already. Otherwise a stationary stretch of length
    ``n`` is sampled and ``x`` is placed at its right end.
    """
    if isinstance(source, np.ndarray) or isinstance(source, (list, tuple)):
        arr = as_float(np.asarray(source))
        if arr.ndim == 2:
            return np.broadcast_to(arr, (n,) + arr.shape)
        if arr.ndim == 3:
            if len(arr) < n:
                raise ValueError("matrix sequence shorter than the requested orbit")
            return arr[:n]
        raise ValueError("matrix source must be 2-d or 3-d")
    rng = np.random.default_rng(0) if rng is None else rng
    return _forward_stack(source, n, rng)[::-1]


def two_sided_matrices(source, n: int, rng: Optional[np.random.Generator] = None):
    """Backward sequence at ``x`` and the backward sequence of the adjoint at ``x``.

    The adjoint sequence is ``A(x)^*, A(f x)^*, ...``, whose collapse point
    is the orthogonal complement of the slow directions at ``x``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if isinstance(source, np.ndarray) and source.ndim == 2:
        A = as_float(source)
        return (np.broadcast_to(A, (n,) + A.shape),
                np.broadcast_to(A.conj().T, (n,) + A.shape))
    mats = _forward_stack(source, 2 * n, rng)
    back = mats[n - 1::-1]
    adj = np.conj(np.swapaxes(mats[n:], 1, 2))
    return back, adj


# ---------------------------------------------------------------------------
# Dirac convergence

@dataclass(frozen=True)
class DiracTrace:
    dispersion: np.ndarray  # entry k is after pushing by L_k (k = 0 is the initial measure)
    mean_vectors: np.ndarray = field(repr=False)
    final: EmpiricalFiberMeasure = field(repr=False)
    final_stat: DispersionStat = field(repr=False)

    @property
    def steps(self) -> int:
        return len(self.dispersion) - 1

    @property
    def location(self) -> GrassmannPoint:
        return self.final_stat.mean_point

    def converged(self, threshold: float = CONVERGED) -> bool:
        return bool(self.dispersion[-1] < threshold)

    def lower_bound(self) -> float:
        return float(self.dispersion.min())

    def decay_rate(self, floor: float = 1e-26) -> float:
        """Least-squares slope of ``log dispersion`` per step above ``floor``."""
        ok = np.flatnonzero(self.dispersion > floor)
        ok = ok[ok > 0]
        if len(ok) < 2:
            return float("nan")
        return float(np.polyfit(ok, np.log(self.dispersion[ok]), 1)[0])

    def to_json(self) -> dict:
        return {"steps": self.steps, "final_dispersion": float(self.dispersion[-1]),
                "min_dispersion": self.lower_bound(), "converged": self.converged(),
                "location": [[float(v.real), float(v.imag)] for v in self.location.coords]}


def dirac_convergence_experiment(source, ell: int, orbit_length: int, atom_count: int = 100,
                                 rng: Optional[np.random.Generator] = None,
                                 initial: Optional[EmpiricalFiberMeasure] = None) -> DiracTrace:
    """Push a uniform measure by ``L_n`` for ``n = 1..orbit_length``.

    Non-convergence is a legitimate outcome and is reported, not raised.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    M = backward_matrices(source, orbit_length, rng)
    d = M.shape[1]
    measure = EmpiricalFiberMeasure.random(d, ell, atom_count, rng) if initial is None else initial
    E = exterior_power_stack(M, ell)
    W = np.eye(E.shape[1], dtype=complex)
    disp = np.empty(orbit_length + 1)
    means = np.empty((orbit_length + 1, E.shape[1]), dtype=complex)
    stat = dispersion_stat(measure)
    disp[0], means[0] = stat.dispersion, stat.mean_vector
    current = measure
    for k in range(orbit_length):
        W = W @ E[k]
        W = W / np.abs(W).max()
        current = _push_coords(measure, W, 0.0)
        stat = dispersion_stat(current)
        disp[k + 1], means[k + 1] = stat.dispersion, stat.mean_vector
    return DiracTrace(disp, means, current, stat)


# ---------------------------------------------------------------------------
# eccentricity and the most expanded subspace

def _exterior_run(M: np.ndarray, ell: int, stride: int, vectors: bool):
    """Log norms of ``Lambda^k L_n`` (k = ell-1, ell, ell+1) and top left vectors."""
    d = M.shape[1]
    if not 1 <= ell <= d - 1:
        raise ValueError(f"ell={ell} out of range for d={d}")
    n = len(M)
    degrees = (ell - 1, ell, ell + 1)
    stacks = [exterior_power_stack(M, k) for k in degrees]
    W = [np.eye(s.shape[1], dtype=s.dtype) for s in stacks]
    scale = np.zeros(3)
    rec = np.arange(stride, n + 1, stride)
    lognorm = np.empty((len(rec), 3))
    tops = np.empty((len(rec), stacks[1].shape[1]), dtype=complex) if vectors else None
    r = 0
    for k in range(n):
        for j in range(3):
            W[j] = W[j] @ stacks[j][k]
            m = np.abs(W[j]).max()
            W[j] = W[j] / m
            scale[j] += np.log(m)
        if (k + 1) % stride == 0:
            for j in range(3):
                if j == 1 and vectors:
                    u, s, _ = np.linalg.svd(W[1])
                    tops[r] = u[:, 0]
                    top = s[0]
                else:
                    top = np.linalg.norm(W[j], 2)
                lognorm[r, j] = scale[j] + np.log(top)
            r += 1
    log_ecc = 2 * lognorm[:, 1] - lognorm[:, 0] - lognorm[:, 2]
    return rec, log_ecc, tops


@dataclass(frozen=True)
class EccentricityTrace:
    ell: int
    steps: np.ndarray
    log_eccentricity: np.ndarray
    slope: float
    slope_se: float

    @property
    def non_unique(self) -> np.ndarray:
        return self.log_eccentricity <= 1e-12

    def positive(self, n_sigma: float = 3.0) -> bool:
        return self.slope > n_sigma * self.slope_se

    def agrees_with(self, gap: float, gap_se: float, n_sigma: float = 3.0,
                    atol: float = 0.0) -> bool:
        return abs(self.slope - gap) <= n_sigma * float(np.hypot(self.slope_se, gap_se)) + atol

    def to_json(self) -> dict:
        return {"ell": self.ell, "slope": self.slope, "slope_se": self.slope_se,
                "final_log_eccentricity": float(self.log_eccentricity[-1])}


def _slope_with_error(steps: np.ndarray, trace: np.ndarray, batches: int) -> tuple:
    """Least-squares slope on the second half, with a batch-means error bar.

    For a random walk the least-squares slope has variance 6/5 times that of
    the end-to-end increment, hence the factor on the batch-means error.
    """
    half = len(trace) // 2
    x, y = steps[half:], trace[half:]
    if len(x) < 2:
        return float("nan"), float("inf")
    slope = float(np.polyfit(x, y, 1)[0])
    inc = np.diff(y)
    dt = np.diff(x)
    nb = min(batches, len(inc))
    if nb < 2:
        return slope, float("inf")
    per = len(inc) // nb
    bm = (inc[:per * nb].reshape(nb, per).sum(axis=1)
          / dt[:per * nb].reshape(nb, per).sum(axis=1))
    se = float(bm.std(ddof=1) / np.sqrt(nb)) * np.sqrt(6 / 5)
    return slope, se


def eccentricity_divergence(source, ell: int, orbit_length: int,
                            rng: Optional[np.random.Generator] = None, stride: int = 1,
                            batches: int = 50) -> EccentricityTrace:
    """``log E(ell, L_n)`` along one backward orbit and its growth rate."""
    M = backward_matrices(source, orbit_length, rng)
    steps, log_ecc, _ = _exterior_run(M, ell, stride, vectors=False)
    slope, se = _slope_with_error(steps, log_ecc, batches)
    return EccentricityTrace(ell, steps, log_ecc, slope, se)


@dataclass(frozen=True)
class TrackingTrace:
    points: list  # GrassmannPoint per recorded step
    steps: np.ndarray
    increments: np.ndarray  # FS distance between consecutive recorded points
    log_eccentricity: np.ndarray = field(repr=False)

    @property
    def final(self) -> GrassmannPoint:
        return self.points[-1]

    @property
    def non_unique(self) -> np.ndarray:
        return np.array([p.non_unique for p in self.points])

    def to_json(self) -> dict:
        return {"steps": int(self.steps[-1]),
                "final_increment": float(self.increments[-1]) if len(self.increments) else 0.0,
                "non_unique_steps": [int(s) for s, p in zip(self.steps, self.points)
                                     if p.non_unique]}


def most_expanded_tracking(source, ell: int, orbit_length: int,
                           rng: Optional[np.random.Generator] = None,
                           stride: int = 1) -> TrackingTrace:
    """Image ``L_n(zeta_n)`` of the most expanded ``ell``-subspace of ``L_n``."""
    M = backward_matrices(source, orbit_length, rng)
    d = M.shape[1]
    steps, log_ecc, tops = _exterior_run(M, ell, stride, vectors=True)
    points = [GrassmannPoint(MultiVector(d, ell, t), non_unique=bool(e <= 1e-12))
              for t, e in zip(tops, log_ecc)]
    inc = np.array([points[i].distance(points[i + 1]) for i in range(len(points) - 1)])
    return TrackingTrace(points, steps, inc, log_ecc)


# ---------------------------------------------------------------------------
# combined runs

@dataclass(frozen=True)
class GrassmannRun:
    dirac: DiracTrace
    eccentricity: EccentricityTrace
    tracking: TrackingTrace

    def location_gap(self) -> float:
        """FS distance between the Dirac location and the tracked image."""
        return self.dirac.location.distance(self.tracking.final)

    def to_csv(self) -> str:
        return trace_csv(self.dirac, self.eccentricity, self.tracking)

    def to_json(self) -> dict:
        return {"dirac": self.dirac.to_json(), "eccentricity": self.eccentricity.to_json(),
                "tracking": self.tracking.to_json(), "location_gap": self.location_gap()}


def grassmann_experiment(source, ell: int, orbit_length: int, atom_count: int = 100,
                         rng: Optional[np.random.Generator] = None) -> GrassmannRun:
    """All three experiments on one shared backward orbit."""
    rng = np.random.default_rng(0) if rng is None else rng
    M = np.ascontiguousarray(backward_matrices(source, orbit_length, rng))
    dirac = dirac_convergence_experiment(M, ell, orbit_length, atom_count, rng)
    ecc = eccentricity_divergence(M, ell, orbit_length)
    track = most_expanded_tracking(M, ell, orbit_length)
    return GrassmannRun(dirac, ecc, track)


def trace_csv(dirac: DiracTrace, ecc: Optional[EccentricityTrace] = None,
              tracking: Optional[TrackingTrace] = None) -> str:
    """Rows ``step, dispersion, log_eccentricity, fs_increment``; blanks where absent."""
    buf = io.StringIO()
    buf.write(f"# {TRACE_SCHEMA} columns: step,dispersion,log_eccentricity,fs_increment\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "dispersion", "log_eccentricity", "fs_increment"])
    le = {} if ecc is None else dict(zip(ecc.steps.tolist(), ecc.log_eccentricity.tolist()))
    fi = {} if tracking is None else dict(zip(tracking.steps[1:].tolist(),
                                              tracking.increments.tolist()))
    for k, v in enumerate(dirac.dispersion):
        w.writerow([k, repr(float(v)),
                    repr(le[k]) if k in le else "", repr(fi[k]) if k in fi else ""])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# transversality of the two collapse points

@dataclass(frozen=True)
class TransversalityReport:
    xi: GrassmannPoint
    xi_star: GrassmannPoint
    distance: float  # arcsin |<xi, xi*>|: FS distance to the section when ell = 1
    dispersion: float
    adjoint_dispersion: float

    def transverse(self, threshold: float = 1e-3) -> bool:
        return self.distance > threshold

    def to_json(self) -> dict:
        return {"distance": self.distance, "dispersion": self.dispersion,
                "adjoint_dispersion": self.adjoint_dispersion, "transverse": self.transverse()}


def transversality_check(source, ell: int, orbit_length: int, atom_count: int = 50,
                         rng: Optional[np.random.Generator] = None) -> TransversalityReport:
    """Distance from the collapse point to the section orthogonal to the adjoint one."""
    rng = np.random.default_rng(0) if rng is None else rng
    back, adj = two_sided_matrices(source, orbit_length, rng)
    a = dirac_convergence_experiment(np.ascontiguousarray(back), ell, orbit_length, atom_count, rng)
    b = dirac_convergence_experiment(np.ascontiguousarray(adj), ell, orbit_length, atom_count, rng)
    u, v = a.location.coords, b.location.coords
    pairing = abs(np.vdot(v, u)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return TransversalityReport(a.location, b.location, float(np.arcsin(min(1.0, pairing))),
                                float(a.dispersion[-1]), float(b.dispersion[-1]))
