"""Lyapunov spectra by QR re-orthonormalization, with batch-mean error bars.

A *source* is one of

* a :class:`~cocycle_spectra.shift_space.CocycleSpec` (orbit sampled from its measure),
* a :class:`~cocycle_spectra.rauzy_zorich.ZorichCocycle` (random start in the simplex),
* a precomputed :class:`~cocycle_spectra.rauzy_zorich.ZorichOrbit`,
* an array of step matrices ``(n, d, d)`` in time order.

Matrices are multiplied on the left (``A^n = A_{n-1} ... A_0``). Every
``renorm_period`` steps the running frame is QR-factorized and the logs of
the diagonal of ``R`` are accumulated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .numeric_kernel import as_float
from .rauzy_zorich import ZorichCocycle, ZorichOrbit, orthonormal_range_bases
from .shift_space import CocycleSpec

CHUNK = 100_000
MIN_BATCHES = 20


class SpectrumOverflowError(FloatingPointError):
    pass


@dataclass
class SpectrumEstimate:
    exponents: np.ndarray
    standard_errors: np.ndarray
    iterations: int
    renorm_period: int
    restricted_to: Optional[str] = None
    batch_estimates: Optional[np.ndarray] = None  # (batches, dim)
    log_growth: Optional[np.ndarray] = None  # (groups, dim) log |r_ii| per QR sweep
    log_det_average: Optional[float] = None
    burn_in_groups: int = 0

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def gaps(self) -> list:
        """Adjacent gaps with their batch-mean standard errors."""
        out = []
        b = self.batch_estimates
        for i in range(self.dim - 1):
            diff = b[:, i] - b[:, i + 1]
            se = float(diff.std(ddof=1) / np.sqrt(len(diff)))
            out.append({"index": i + 1, "gap": float(self.exponents[i] - self.exponents[i + 1]),
                        "se": se})
        return out

    def symmetry_defects(self) -> list:
        """``lambda_i + lambda_{m+1-i}`` with standard errors, ``i <= m/2``."""
        m = self.dim
        b = self.batch_estimates
        out = []
        for i in range(m // 2):
            s = b[:, i] + b[:, m - 1 - i]
            out.append({"index": i + 1, "sum": float(s.mean()),
                        "se": float(s.std(ddof=1) / np.sqrt(len(s)))})
        return out

    def is_symmetric(self, n_sigma: float = 3.0, atol: float = 1e-12) -> bool:
        return all(abs(r["sum"]) < n_sigma * r["se"] + atol for r in self.symmetry_defects())

    def to_json(self) -> dict:
        return {"exponents": [float(v) for v in self.exponents],
                "se": [float(v) for v in self.standard_errors],
                "iterations": self.iterations, "renorm_period": self.renorm_period,
                "restricted_to": self.restricted_to,
                "gaps": self.gaps() if self.batch_estimates is not None else [],
                "symmetric": self.is_symmetric() if self.batch_estimates is not None else None}


# ---------------------------------------------------------------------------
# step-matrix streams

def group_products(mats: np.ndarray, period: int) -> np.ndarray:
    """Products ``M_{p-1} ... M_0`` over consecutive groups of ``period`` matrices."""
    n = len(mats) // period * period
    if n == 0:
        return mats[:0]
    g = mats[:n].reshape(n // period, period, *mats.shape[1:])
    out = g[:, 0]
    for j in range(1, period):
        out = g[:, j] @ out
    return out


def _spec_matrices(spec: CocycleSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Step matrices along a sampled orbit of the spec's measure."""
    if spec.locally_constant:
        stack = np.stack([as_float(m) for m in spec.matrices])
        return stack[spec.measure.sample_path(n, rng)]
    depth = spec.depth
    sym = spec.measure.sample_path(n + 2 * depth, rng)
    base = np.stack([as_float(m) for m in spec.matrices])
    dtype = np.result_type(base, *(np.asarray(p) for p in (spec.past_perturbation or ())),
                           *(np.asarray(p) for p in (spec.future_perturbation or ())))
    out = base[sym[depth:depth + n]].astype(dtype)
    past = None if spec.past_perturbation is None else np.stack(spec.past_perturbation)
    fut = None if spec.future_perturbation is None else np.stack(spec.future_perturbation)
    for k in range(1, depth + 1):
        w = spec.amplitude * spec.decay ** k
        if past is not None:
            out += w * past[sym[depth - k:depth - k + n]]
        if fut is not None:
            out += w * fut[sym[depth + k:depth + k + n]]
    return out


def _zorich_steps(orbit: ZorichOrbit, restricted: bool, usable: int,
                  chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """Per-step (optionally restricted) Zorich cocycle matrices, chunk by chunk."""
    Q = orthonormal_range_bases(orbit.pairs) if restricted else None
    for lo in range(0, usable, chunk):
        hi = min(lo + chunk, usable)
        M = orbit.cocycle_matrices(lo, hi)
        if Q is not None:
            # M maps H_pi of the start pair onto H_pi of the next pair
            M = np.einsum("kji,kjl,klm->kim", Q[orbit.pair_index[lo + 1:hi + 1]], M,
                          Q[orbit.pair_index[lo:hi]], optimize=True)
        yield M


def _zorich_groups(orbit: ZorichOrbit, restricted: bool, period: int) -> Iterator[np.ndarray]:
    """Grouped (and optionally restricted) Zorich cocycle products, chunk by chunk."""
    usable = orbit.steps // period * period
    for M in _zorich_steps(orbit, restricted, usable, max(period, CHUNK // period * period)):
        yield group_products(M, period)


def step_chunks(source, iterations: int, period: int, rng: Optional[np.random.Generator],
                restrict=None) -> Iterator[np.ndarray]:
    """Yield per-step matrices in time order, each chunk a multiple of ``period`` long."""
    chunk = max(period, CHUNK // period * period)
    if isinstance(source, ZorichCocycle):
        source, restrict = (source.orbit(iterations, rng),
                            source.restricted if restrict is None else restrict)
    if isinstance(source, ZorichOrbit):
        usable = min(iterations, source.steps) // period * period
        yield from _zorich_steps(source, bool(restrict), usable, chunk)
        return
    if isinstance(source, CocycleSpec):
        Pbasis = None if restrict is None else np.asarray(restrict)
        remaining = iterations
        while remaining > 0:
            n = min(chunk, remaining)
            n -= n % period
            if n == 0:
                break
            mats = _spec_matrices(source, n, rng)
            if Pbasis is not None:
                mats = np.einsum("ji,njk,kl->nil", Pbasis.conj(), mats, Pbasis)
            yield mats
            remaining -= n
        return
    mats = np.asarray(source)
    if mats.ndim != 3:
        raise TypeError(f"unsupported cocycle source {type(source).__name__}")
    mats = as_float(mats) if mats.dtype == object else mats
    if restrict is not None:
        B = np.asarray(restrict)
        mats = np.einsum("ji,njk,kl->nil", B.conj(), mats, B)
    n = min(iterations, len(mats)) // period * period
    yield mats[:n]


def step_groups(source, iterations: int, period: int, rng: Optional[np.random.Generator],
                restrict=None) -> Iterator[np.ndarray]:
    """Yield arrays of grouped step products for any supported source."""
    for mats in step_chunks(source, iterations, period, rng, restrict):
        yield group_products(mats, period)


# ---------------------------------------------------------------------------
# QR sweep

def qr_sweep(groups: Iterator[np.ndarray]) -> np.ndarray:
    """Log growth ``log |r_ii|`` for each group of a left-multiplied product."""
    frame = None
    logs = []
    for block in groups:
        if frame is None and len(block):
            frame = _initial_frame(block.shape[1], block.dtype)
        out = np.empty((len(block), block.shape[1]))
        for g, G in enumerate(block):
            frame, out[g] = _qr_step(G, frame)
        logs.append(out)
    if not logs:
        raise ValueError("no complete renormalization group")
    return np.concatenate(logs)


def _initial_frame(d: int, dtype) -> np.ndarray:
    """A fixed generic orthonormal frame, so invariant coordinate flags do not trap the sweep."""
    q, _ = np.linalg.qr(np.random.default_rng(d).standard_normal((d, d)))
    return q.astype(np.result_type(dtype, float))


def _qr_step(G: np.ndarray, frame: np.ndarray) -> tuple:
    q, r = np.linalg.qr(G @ frame)
    diag = np.abs(np.diagonal(r))
    if not np.all(np.isfinite(diag)) or np.any(diag == 0):
        raise SpectrumOverflowError("overflow or collapse despite renormalization")
    return q, np.log(diag)


def qr_sweep_steps(chunks: Iterator[np.ndarray], period: int,
                   det_tol: float = 1e-8) -> tuple:
    """QR sweep over groups of ``period`` steps, guarded by the determinant.

    The logs of ``|r_ii|`` for a group must add up to ``log |det|`` of the
    group. When roundoff breaks that (ill-conditioned groups, as produced by
    heavy-tailed steps) the group is redone one step at a time.
    Returns the log growth per group and the number of redone groups.
    """
    frame = None
    logs = []
    redone = 0
    for mats in chunks:
        if not len(mats):
            continue
        if frame is None:
            frame = _initial_frame(mats.shape[1], mats.dtype)
        P = group_products(mats, period)
        logdet = np.linalg.slogdet(mats)[1].reshape(len(P), period).sum(axis=1)
        out = np.empty((len(P), mats.shape[1]))
        for g, G in enumerate(P):
            try:
                q, lg = _qr_step(G, frame)
                bad = abs(lg.sum() - logdet[g]) > det_tol * max(1.0, abs(logdet[g]))
            except SpectrumOverflowError:
                if period == 1:
                    raise
                bad = True
            if period > 1 and bad:
                lg = np.zeros(mats.shape[1])
                q = frame
                for M in mats[g * period:(g + 1) * period]:
                    q, step = _qr_step(M, q)
                    lg += step
                redone += 1
            frame, out[g] = q, lg
        logs.append(out)
    if not logs:
        raise ValueError("no complete renormalization group")
    return np.concatenate(logs), redone


def spectrum_from_log_growth(log_growth: np.ndarray, period: int, batches: int = 50,
                             restricted_to: Optional[str] = None,
                             burn_in: Optional[int] = None) -> SpectrumEstimate:
    """Exponents and batch-mean errors from per-group ``log |r_ii|``.

    The first ``burn_in`` groups (default 5%) are left out of the averages:
    they carry the transient of the generic starting frame.
    """
    groups = len(log_growth)
    burn = groups // 20 if burn_in is None else burn_in
    kept = log_growth[burn:]
    batches = min(batches, len(kept))
    if batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} renormalization groups for error bars")
    per = len(kept) // batches
    used = kept[:per * batches]
    bm = used.reshape(batches, per, -1).sum(axis=1) / (per * period)
    exps = kept.sum(axis=0) / (len(kept) * period)
    se = bm.std(axis=0, ddof=1) / np.sqrt(batches)
    return SpectrumEstimate(exps, se, groups * period, period, restricted_to, bm, log_growth,
                            float(exps.sum()), burn)


def estimate_spectrum(source, iterations: int, renorm_period: int = 10,
                      rng: Optional[np.random.Generator] = None, restrict=None,
                      batches: int = 50) -> SpectrumEstimate:
    """Lyapunov exponents (per step) of ``source`` along one long orbit."""
    if iterations < 1000:
        raise ValueError("iterations must be at least 1000")
    if renorm_period < 1:
        raise ValueError("renorm_period must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    chunks = step_chunks(source, iterations, renorm_period, rng, restrict)
    label = None
    if isinstance(source, ZorichCocycle) and (source.restricted if restrict is None else restrict):
        label = "H_pi"
    elif isinstance(source, ZorichOrbit) and restrict:
        label = "H_pi"
    elif restrict is not None and not isinstance(source, (ZorichCocycle, ZorichOrbit)):
        label = "basis"
    log_growth, _ = qr_sweep_steps(chunks, renorm_period)
    return spectrum_from_log_growth(log_growth, renorm_period, batches, label)


def birkhoff_log_det(source, iterations: int, renorm_period: int = 10,
                     rng: Optional[np.random.Generator] = None, restrict=None) -> float:
    """Average of ``log |det|`` per step; equals the exponent sum."""
    rng = np.random.default_rng(0) if rng is None else rng
    total, steps = 0.0, 0
    for block in step_groups(source, iterations, renorm_period, rng, restrict):
        sign, logdet = np.linalg.slogdet(block)
        total += float(logdet.sum())
        steps += len(block) * renorm_period
    return total / steps


# ---------------------------------------------------------------------------
# the Delta^n diagnostic

@dataclass(frozen=True)
class GapDiagnostic:
    ell: int
    slope: float
    slope_se: float
    predicted: float
    predicted_se: float
    final_log_delta: float
    trace: np.ndarray  # log Delta^n at the end of each renormalization group

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.slope_se, self.predicted_se))

    def agrees(self, n_sigma: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.slope - self.predicted) <= n_sigma * self.combined_se + atol

    def to_json(self) -> dict:
        return {"ell": self.ell, "slope": self.slope, "slope_se": self.slope_se,
                "predicted": self.predicted, "predicted_se": self.predicted_se,
                "final_log_delta": self.final_log_delta}


def gap_diagnostic(spectrum: SpectrumEstimate, ell: int, d_u: int = 1, d_s: int = 1,
                   batches: int = 50) -> GapDiagnostic:
    """Growth rate of ``log Delta^n`` along the orbit recorded in ``spectrum``.

    ``xi^u`` is proxied by frame directions ``ell-d_u+1 .. ell`` and ``eta^s``
    by ``ell+1 .. ell+d_s`` of the QR sweep. Volumes along these evolved
    frames are Gram determinants, whose logs are partial sums of the recorded
    ``log |r_ii|``.
    """
    if spectrum.log_growth is None:
        raise ValueError("spectrum carries no orbit trace")
    m = spectrum.dim
    if not (1 <= ell < m and ell - d_u >= 0 and ell + d_s <= m):
        raise ValueError("ell, d_u, d_s do not fit the dimension")
    lg = spectrum.log_growth
    xi_u = lg[:, ell - d_u:ell].sum(axis=1)
    eta_s = lg[:, ell:ell + d_s].sum(axis=1)
    increments = xi_u / d_u - (xi_u + eta_s) / (d_u + d_s)
    trace = np.cumsum(increments)
    if not np.all(np.isfinite(trace)):
        bad = int(np.argmin(np.isfinite(trace)))
        raise FloatingPointError(f"degenerate frames at step {bad * spectrum.renorm_period}")
    period = spectrum.renorm_period
    half = len(trace) // 2
    n = (np.arange(len(trace)) + 1) * period
    slope = float(np.polyfit(n[half:], trace[half:], 1)[0])
    # batch means of the increments over the fitted half give its error bar
    tail = increments[half:]
    nb = min(batches, len(tail))
    per = len(tail) // nb
    bm = tail[:per * nb].reshape(nb, per).sum(axis=1) / (per * period)
    slope_se = float(bm.std(ddof=1) / np.sqrt(nb)) if nb > 1 else 0.0
    b = spectrum.batch_estimates
    lam_u = b[:, ell - d_u:ell].mean(axis=1)
    lam_s = b[:, ell:ell + d_s].mean(axis=1)
    pred_batches = d_s / (d_u + d_s) * (lam_u - lam_s)
    predicted = float(d_s / (d_u + d_s) * (spectrum.exponents[ell - d_u:ell].mean()
                                          - spectrum.exponents[ell:ell + d_s].mean()))
    predicted_se = float(pred_batches.std(ddof=1) / np.sqrt(len(pred_batches)))
    return GapDiagnostic(ell, slope, slope_se, predicted, predicted_se, float(trace[-1]), trace)


# ---------------------------------------------------------------------------
# cross checks

@dataclass(frozen=True)
class ComparisonReport:
    first: list
    second: list
    first_se: list
    second_se: list
    differences: list
    combined_se: list
    ok: bool
    inconclusive: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in ("first", "second", "first_se", "second_se",
                                              "differences", "combined_se", "ok", "inconclusive")}
        out.update(self.extra)
        return out


def _compare(a: SpectrumEstimate, b: SpectrumEstimate, scale_a: float = 1.0,
             n_sigma: float = 3.0, atol: float = 1e-9) -> ComparisonReport:
    ea, sa = a.exponents * scale_a, a.standard_errors * abs(scale_a)
    eb, sb = b.exponents, b.standard_errors
    diff = eb - ea
    comb = np.hypot(sa, sb)
    ok = bool(np.all(np.abs(diff) <= n_sigma * comb + atol))
    # large error bars make a pass meaningless; flag instead of passing
    scale = np.maximum(np.abs(ea), np.abs(eb))
    inconclusive = bool(np.any((comb > 0.5 * scale) & (scale > atol)))
    return ComparisonReport([float(v) for v in ea], [float(v) for v in eb],
                            [float(v) for v in sa], [float(v) for v in sb],
                            [float(v) for v in diff], [float(v) for v in comb],
                            ok and not inconclusive, inconclusive)


def verify_inducing_rescale(base_spec: CocycleSpec, induced: CocycleSpec, base_cyl_mass: float,
                            iterations: int, rng: np.random.Generator,
                            renorm_period: int = 10) -> ComparisonReport:
    """Induced exponents against base exponents divided by the base mass."""
    base = estimate_spectrum(base_spec, iterations, renorm_period, rng)
    ind = estimate_spectrum(induced, iterations, renorm_period, rng)
    report = _compare(base, ind, 1.0 / base_cyl_mass)
    # Birkhoff average of the return time along a sampled induced orbit
    if induced.return_times is None:
        raise ValueError("induced spec carries no return times")
    r = np.asarray(induced.return_times)
    path = induced.measure.sample_path(iterations, rng)
    mean_r = float(r[path].mean())
    report.extra.update({"mean_return_time": mean_r, "kac": 1.0 / base_cyl_mass,
                         "kac_relative_error": abs(mean_r * base_cyl_mass - 1.0)})
    return report


def adjoint_spectrum_check(source, iterations: int, rng: np.random.Generator,
                           renorm_period: int = 10) -> ComparisonReport:
    """Spectrum of ``source`` against that of its adjoint, from independent runs."""
    if isinstance(source, ZorichCocycle):
        first = estimate_spectrum(source, iterations, renorm_period, rng)
        orbit = source.orbit(iterations, rng)
        second = _adjoint_zorich_spectrum(orbit, source.restricted, renorm_period)
        return _compare(first, second)
    from .simplicity import adjoint_cocycle

    first = estimate_spectrum(source, iterations, renorm_period, rng)
    second = estimate_spectrum(adjoint_cocycle(source), iterations, renorm_period, rng)
    return _compare(first, second)


def _adjoint_zorich_spectrum(orbit: ZorichOrbit, restricted: bool, period: int) -> SpectrumEstimate:
    """``(M_n ... M_1)^* = M_1^* ... M_n^*``: sweep the reversed transposed sequence."""
    usable = orbit.steps // period * period
    steps = np.concatenate(list(_zorich_steps(orbit, restricted, usable)))
    adj = np.conj(np.swapaxes(steps[::-1], 1, 2))
    return spectrum_from_log_growth(qr_sweep_steps(iter([adj]), period)[0], period,
                                    restricted_to="H_pi" if restricted else None)
