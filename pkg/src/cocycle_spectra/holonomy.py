"""Fiber bunching and stable/unstable holonomies as Cauchy limits.

The shift carries the symbolic metric ``d(x, y) = theta0 ** N`` where ``N``
is the first ``|n|`` at which the points disagree (``theta0`` comes from the
spec, 1/2 unless overridden). On a local stable set one shift step
contracts ``d`` by ``theta0``, so ``N`` steps contract by ``theta0 ** N``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numeric_kernel import as_float, exact_identity
from .shift_space import CocycleSpec, TwoSidedPoint, symbol_distance

ENUMERATION_LIMIT = 100_000


class NotFinitelyCheckable(ValueError):
    pass


class HolonomyDiverged(RuntimeError):
    def __init__(self, msg, increments):
        super().__init__(msg)
        self.increments = list(increments)


@dataclass(frozen=True)
class BunchingReport:
    N: int
    C: float
    nu: float
    tau: float
    theta: float
    satisfied: bool
    worst_pair: tuple  # witness word realizing tau

    def to_json(self) -> dict:
        return {"N": self.N, "C": self.C, "nu": self.nu, "tau": self.tau, "theta": self.theta,
                "satisfied": self.satisfied, "worst_word": list(self.worst_pair)}


def _norm_product(M: np.ndarray) -> tuple:
    s = np.linalg.svd(as_float(M), compute_uv=False)
    return float(s[0]), float(1.0 / s[-1])


def _representatives(spec: CocycleSpec, word: tuple, rng: np.random.Generator, samples: int):
    """Points of the cylinder ``[word]`` used to evaluate ``A^N``."""
    if spec.locally_constant:
        yield TwoSidedPoint.periodic(word)
        return
    n = spec.alphabet_size
    # constant tails on both sides, then random tails
    for a, b in itertools.product(range(n), repeat=2):
        yield TwoSidedPoint((), word, (a,), (b,))
    for _ in range(samples):
        past = tuple(int(v) for v in rng.integers(0, n, spec.depth))
        fut = tuple(int(v) for v in rng.integers(0, n, spec.depth))
        yield TwoSidedPoint(past, word + fut, (0,), (0,))


def check_fiber_bunching(spec: CocycleSpec, N: int = 1, nu: float = 1.0,
                         theta0: Optional[float] = None, margin: float = 1e-9,
                         samples: int = 4, rng: Optional[np.random.Generator] = None
                         ) -> BunchingReport:
    """Evaluate the bunching constants over cylinder representatives of depth ``N``."""
    if N < 1 or not 0 < nu <= 1:
        raise ValueError("need N >= 1 and nu in (0, 1]")
    if spec.measure.truncated_mass > 0:
        raise NotFinitelyCheckable("truncated alphabet: the matrix family is not finite")
    if spec.alphabet_size ** N > ENUMERATION_LIMIT:
        raise NotFinitelyCheckable(f"{spec.alphabet_size ** N} cylinders exceed the check limit")
    theta0 = spec.metric_theta if theta0 is None else theta0
    theta = theta0 ** N
    rng = np.random.default_rng(0) if rng is None else rng
    worst, witness = -np.inf, ()
    bound = 0.0
    for word in itertools.product(range(spec.alphabet_size), repeat=N):
        for x in _representatives(spec, word, rng, samples):
            M = spec.product_along(x, N)
            a, b = _norm_product(M)
            bound = max(bound, a, b)
            val = a * b * theta ** nu
            if val > worst:
                worst, witness = val, word
    C = bound
    if not spec.locally_constant:
        C = max(C, _holder_constant(spec, N, nu, theta0, rng, samples))
    return BunchingReport(N, float(C), nu, float(worst), theta, bool(worst < 1 - margin),
                          tuple(witness))


def _holder_constant(spec, N, nu, theta0, rng, samples) -> float:
    """Sampled ``sup ||A^N(x) - A^N(y)|| / d(x, y)^nu``."""
    n = spec.alphabet_size
    best = 0.0
    for k in range(1, min(spec.depth, 30)):
        for _ in range(samples):
            core = tuple(int(v) for v in rng.integers(0, n, 2 * k))
            tail_x = tuple(int(v) for v in rng.integers(0, n, 2))
            tail_y = tuple(int(v) for v in rng.integers(0, n, 2))
            x = TwoSidedPoint(core[:k][::-1] + (tail_x[0],), core[k:] + (tail_x[1],), (0,), (0,))
            y = TwoSidedPoint(core[:k][::-1] + (tail_y[0],), core[k:] + (tail_y[1],), (1,), (1,))
            dist = symbol_distance(x, y, theta0)
            if dist == 0:
                continue
            diff = np.linalg.norm(as_float(spec.product_along(x, N)) - as_float(spec.product_along(y, N)), 2)
            best = max(best, diff / dist ** nu)
    return best


# ---------------------------------------------------------------------------
# holonomies

@dataclass(frozen=True)
class HolonomyMap:
    source: TwoSidedPoint
    target: TwoSidedPoint
    direction: str  # "stable" or "unstable"
    matrix: np.ndarray
    residual: float
    iterations_used: int
    increments: tuple = field(default=())

    def fitted_ratio(self) -> float:
        """Geometric ratio from a least-squares fit of the log increments."""
        inc = np.array([v for v in self.increments if v > 0])
        if len(inc) < 3:
            return 0.0
        slope = np.polyfit(np.arange(len(inc)), np.log(inc), 1)[0]
        return float(np.exp(slope))


def _identity_like(spec: CocycleSpec) -> np.ndarray:
    return exact_identity(spec.dim) if spec.exact else np.eye(spec.dim)


def _checked_pair(spec, x, y, side: str, depth: int = 64):
    agree = x.same_future(y, depth) if side == "stable" else x.same_past(y, depth)
    if not agree:
        raise ValueError(f"points are not in the same local {side} set")


def stable_holonomy(spec: CocycleSpec, x: TwoSidedPoint, y: TwoSidedPoint,
                    tol: float = 1e-12, cap: int = 500) -> HolonomyMap:
    """``H^s_{x,y} = lim A^n(y)^{-1} A^n(x)`` for points with the same future."""
    _checked_pair(spec, x, y, "stable")
    if spec.locally_constant or x == y or x.window(-spec.depth - 1, 0) == y.window(-spec.depth - 1, 0):
        return HolonomyMap(x, y, "stable", _identity_like(spec), 0.0, 0)
    d = spec.dim
    X = np.eye(d, dtype=complex)
    Yinv = np.eye(d, dtype=complex)
    H = np.eye(d, dtype=complex)
    history = []
    for n in range(cap):
        ax = as_float(spec.step_at(x, n))
        ay = as_float(spec.step_at(y, n))
        ay_inv = np.linalg.inv(ay)
        # H_{n+1} - H_n = A^n(y)^{-1} A(f^n y)^{-1} [A(f^n x) - A(f^n y)] A^n(x)
        delta = Yinv @ ay_inv @ (ax - ay) @ X
        H = H + delta
        X = ax @ X
        Yinv = Yinv @ ay_inv
        inc = float(np.linalg.norm(delta, 2))
        history.append(inc)
        tail = _tail_bound(history)
        if tail < tol:
            _check_decay(history, "stable")
            return HolonomyMap(x, y, "stable", _realify(H), tail, n + 1, tuple(history))
    raise HolonomyDiverged(f"stable holonomy did not converge in {cap} steps", history)


def unstable_holonomy(spec: CocycleSpec, x: TwoSidedPoint, y: TwoSidedPoint,
                      tol: float = 1e-12, cap: int = 500) -> HolonomyMap:
    """``H^u_{x,y} = lim A^n(f^{-n} y) A^n(f^{-n} x)^{-1}`` for points with the same past."""
    _checked_pair(spec, x, y, "unstable")
    if spec.locally_constant or x == y or x.window(0, spec.depth + 1) == y.window(0, spec.depth + 1):
        return HolonomyMap(x, y, "unstable", _identity_like(spec), 0.0, 0)
    d = spec.dim
    U = np.eye(d, dtype=complex)
    Vinv = np.eye(d, dtype=complex)
    H = np.eye(d, dtype=complex)
    history = []
    for n in range(1, cap + 1):
        my = as_float(spec.step_at(y, -n))
        mx = as_float(spec.step_at(x, -n))
        mx_inv = np.linalg.inv(mx)
        # same telescoping as the stable case, read backwards in time
        delta = U @ (my - mx) @ mx_inv @ Vinv
        H = H + delta
        U = U @ my
        Vinv = mx_inv @ Vinv
        inc = float(np.linalg.norm(delta, 2))
        history.append(inc)
        tail = _tail_bound(history)
        if tail < tol:
            _check_decay(history, "unstable")
            return HolonomyMap(x, y, "unstable", _realify(H), tail, n, tuple(history))
    raise HolonomyDiverged(f"unstable holonomy did not converge in {cap} steps", history)


def _tail_bound(history: list) -> float:
    """Geometric extrapolation of the remaining increments from the last ratio."""
    last = history[-1]
    if last == 0.0:
        return 0.0
    if len(history) < 2 or history[-2] == 0.0:
        return float("inf")
    r = last / history[-2]
    if r >= 1:
        return float("inf")
    return last / (1 - r)


def _check_decay(history: list, side: str) -> None:
    """A truncated perturbation stops the increments exactly; they must have been shrinking."""
    inc = np.array([v for v in history if v > 0])
    if len(inc) >= 3 and np.polyfit(np.arange(len(inc)), np.log(inc), 1)[0] >= 0:
        raise HolonomyDiverged(f"{side} holonomy increments grow until the truncation depth",
                               history)


def _realify(H: np.ndarray) -> np.ndarray:
    return H.real.copy() if np.all(np.abs(H.imag) < 1e-300) else H


def holder_perturbation(base: CocycleSpec, past, future, amplitude: float,
                        nu: float = 1.0) -> CocycleSpec:
    """Perturb a locally constant spec by ``amplitude * sum_k theta0^(k nu) (P[x_-k] + F[x_k])``."""
    from dataclasses import replace

    decay = base.metric_theta ** nu
    depth = int(np.ceil(np.log(1e-18) / np.log(decay)))
    return replace(base, matrices=tuple(as_float(m) for m in base.matrices),
                   past_perturbation=tuple(np.asarray(p, dtype=float) for p in past),
                   future_perturbation=tuple(np.asarray(f, dtype=float) for f in future),
                   amplitude=amplitude, decay=decay, depth=depth)
