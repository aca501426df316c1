"""Command-line entry point: seed-pinned runs with JSON or CSV reports.

Exit codes: 0 the run completed (a negative scientific outcome included),
1 a definitive criterion failed, 2 bad input or an operational error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction
from importlib import resources
from typing import Optional

REPORT_SCHEMA = "cocycle_spectra.report/1"
SPEC_SCHEMA = "cocycle_spectra.spec/1"
THREADS_ENV = "COCYCLE_SPECTRA_THREADS"

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

DEFAULTS = {
    "simplicity": {"iters": 0, "tol": 1e-9},
    "zorich": {"iters": 100_000, "tol": 3.0},
    "dirac": {"iters": 200, "tol": 1e-6},
    "vandermonde": {"iters": 0, "tol": 0.0},
    "induce": {"iters": 200_000, "tol": 3.0},
    "holonomy": {"iters": 500, "tol": 1e-12},
}


class InputError(ValueError):
    """Malformed command-line or spec-file input."""


# ---------------------------------------------------------------------------
# spec files

def _parse_scalar(v, mode: str):
    if isinstance(v, bool) or v is None:
        raise InputError(f"bad matrix entry {v!r}")
    if isinstance(v, list) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            f = Fraction(v.strip())
        except ValueError as exc:
            raise InputError(f"bad rational {v!r}") from exc
        return float(f) if mode == "float" else f
    if isinstance(v, int):
        return float(v) if mode == "float" else Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v)) if mode == "exact" else v
    raise InputError(f"bad matrix entry {v!r}")


def _matrix(rows, mode: str):
    import numpy as np

    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise InputError("matrices must be lists of rows")
    vals = [[_parse_scalar(v, mode) for v in r] for r in rows]
    if len({len(r) for r in vals}) != 1:
        raise InputError("ragged matrix")
    if all(isinstance(v, Fraction) for r in vals for v in r):
        return np.array(vals, dtype=object)
    return np.array([[complex(v) if isinstance(v, complex) else float(v) for v in r]
                     for r in vals])


def load_spec_document(path: str) -> dict:
    if path == "example":
        text = resources.files("cocycle_spectra").joinpath("data/example_simple.json").read_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read spec file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"spec file is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("spec file must hold an object")
    return doc


def spec_from_document(doc: dict, mode: str = "auto"):
    """Build a ``CocycleSpec`` from the spec-file object."""
    import numpy as np

    from .holonomy import holder_perturbation
    from .shift_space import CocycleSpec, MarkovMeasure

    try:
        mats = tuple(_matrix(m, mode) for m in doc["matrices"])
        meas = doc.get("measure", {})
        if "probs" in meas:
            measure = MarkovMeasure.bernoulli([_parse_scalar(v, "float") for v in meas["probs"]])
        elif "transition" in meas:
            P = np.array([[float(_parse_scalar(v, "auto")) for v in r] for r in meas["transition"]])
            if "stationary" in meas:
                pi = np.array([float(_parse_scalar(v, "auto")) for v in meas["stationary"]])
                measure = MarkovMeasure(P, pi)
            else:
                measure = MarkovMeasure.from_transition(P)
        else:
            measure = MarkovMeasure.bernoulli(np.full(len(mats), 1 / len(mats)))
    except KeyError as exc:
        raise InputError(f"spec file lacks {exc}") from exc
    if "alphabet" in doc and int(doc["alphabet"]) != len(mats):
        raise InputError("alphabet size does not match the number of matrices")
    try:
        spec = CocycleSpec(mats, measure)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    pert = doc.get("perturbation")
    if pert:
        spec = holder_perturbation(spec, [_matrix(m, "float") for m in pert["past"]],
                                   [_matrix(m, "float") for m in pert["future"]],
                                   float(pert["amplitude"]), float(pert.get("nu", 1.0)))
    return spec


# ---------------------------------------------------------------------------
# commands

def _rng(seed: int):
    import numpy as np

    return np.random.default_rng(seed)


def _points(doc: dict):
    word = doc.get("periodic_point")
    hom = doc.get("homoclinic_point")
    if word is None or hom is None:
        raise InputError("spec file needs periodic_point and homoclinic_point")
    return [int(s) for s in word], [int(s) for s in hom.get("insert", [])], hom.get("l")


def cmd_simplicity(cfg: dict) -> tuple:
    from .simplicity import (adjoint_cocycle, check_simple, homoclinic_data, mirrored_pair,
                             periodic_data)

    doc = load_spec_document(cfg["spec"])
    spec = spec_from_document(doc, cfg["mode"])
    word, insert, l = _points(doc)
    pd = periodic_data(spec, word)
    hd = homoclinic_data(spec, pd, insert, l)
    verdict = check_simple(spec, pd, hd, zero_tol=cfg["tol"])
    result = {"verdict": verdict.to_json()}
    if cfg.get("adjoint"):
        w2, i2, l2 = mirrored_pair(pd, hd)
        adj = adjoint_cocycle(spec)
        pd2 = periodic_data(adj, w2)
        result["adjoint_verdict"] = check_simple(adj, pd2, homoclinic_data(adj, pd2, i2, l2),
                                                 zero_tol=cfg["tol"]).to_json()
    return result, EXIT_OK if verdict.simple else EXIT_FAIL, None


def _pair(cfg: dict):
    from .rauzy_zorich import PermutationPair

    if cfg.get("top") and cfg.get("bottom"):
        top = tuple(int(v) for v in cfg["top"].split(","))
        bottom = tuple(int(v) for v in cfg["bottom"].split(","))
        return PermutationPair(top, bottom)
    return PermutationPair.reversal(int(cfg["d"]))


def cmd_zorich(cfg: dict) -> tuple:
    from .lyapunov import estimate_spectrum, gap_diagnostic
    from .rauzy_zorich import ZorichCocycle, omega_matrix

    pair = _pair(cfg)
    pair.require_irreducible()
    rng = _rng(cfg["seed"])
    source = ZorichCocycle(pair, restricted=not cfg.get("full"))
    orbit = source.orbit(cfg["iters"], rng)
    est = estimate_spectrum(orbit, cfg["iters"], cfg["renorm"], restrict=source.restricted)
    n_sigma = cfg["tol"]
    table = []
    for ell in range(1, est.dim):
        g = gap_diagnostic(est, ell)
        table.append({**g.to_json(), "agrees": g.agrees(n_sigma)})
    genus = omega_matrix(pair).genus
    result = {"pair": pair.label(), "genus": genus, "spectrum": est.to_json(),
              "symmetric": est.is_symmetric(n_sigma),
              "symmetry_defects": est.symmetry_defects(), "gap_table": table}
    if est.dim >= 2 * genus and genus > 0:
        lam_g, se_g = float(est.exponents[genus - 1]), float(est.standard_errors[genus - 1])
        result["lambda_g_positive"] = lam_g > n_sigma * se_g
    return result, EXIT_OK, orbit.to_csv


def _dirac_source(cfg: dict):
    import numpy as np

    from .rauzy_zorich import ZorichCocycle

    if cfg.get("rotation") is not None:
        th = float(cfg["rotation"])
        return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]), "rotation"
    if cfg.get("spec"):
        return spec_from_document(load_spec_document(cfg["spec"]), "float"), "spec"
    return ZorichCocycle(_pair(cfg)), "zorich"


def cmd_dirac(cfg: dict) -> tuple:
    from .grassmann_dynamics import grassmann_experiment

    source, kind = _dirac_source(cfg)
    run = grassmann_experiment(source, cfg["ell"], cfg["iters"], cfg["atoms"], _rng(cfg["seed"]))
    result = run.to_json()
    result["source"] = kind
    result["outcome"] = ("converged" if run.dirac.converged(cfg["tol"]) else "no convergence")
    return result, EXIT_OK, run.to_csv()


def cmd_vandermonde(cfg: dict) -> tuple:
    from .hyperplane_combinatorics import vandermonde

    try:
        m = [int(v) for v in cfg["m"].split(",")]
        x = [Fraction(v.strip()) for v in cfg["x"].split(",")]
    except (ValueError, AttributeError) as exc:
        raise InputError(f"bad --m/--x list: {exc}") from exc
    exact = cfg["mode"] != "float"
    res = vandermonde(m, x if exact else [float(v) for v in x], exact=exact)

    def enc(v):
        if v is None:
            return None
        if isinstance(v, Fraction):
            return str(v)
        return float(v)

    result = {"det": enc(res.det), "product_part": enc(res.product_part),
              "schur_part": enc(res.schur_part), "schur_defined": res.defined}
    if res.defined:
        result["schur_positive"] = bool(res.schur_part > 0)
    return result, EXIT_OK, None


def cmd_induce(cfg: dict) -> tuple:
    from .lyapunov import verify_inducing_rescale
    from .shift_space import build_induced, induce_cocycle

    spec = spec_from_document(load_spec_document(cfg["spec"]), "float")
    base = [int(v) for v in cfg["base"].split(",")]
    ind = build_induced(spec.measure, base, cfg["max_return"])
    induced = induce_cocycle(spec, ind)
    rep = verify_inducing_rescale(spec, induced, ind.measure_of_base, cfg["iters"],
                                  _rng(cfg["seed"]), cfg["renorm"])
    result = {"base": base, "base_mass": ind.measure_of_base, "return_words": len(ind.return_words),
              "captured_mass": ind.captured_mass, "mean_return_time": ind.mean_return_time,
              "comparison": rep.to_json()}
    ok = rep.ok and rep.extra["kac_relative_error"] < 0.05
    return result, EXIT_OK if ok else EXIT_FAIL, None


def cmd_holonomy(cfg: dict) -> tuple:
    from .holonomy import (HolonomyDiverged, NotFinitelyCheckable, check_fiber_bunching,
                           stable_holonomy, unstable_holonomy)
    from .simplicity import homoclinic_point

    doc = load_spec_document(cfg["spec"])
    spec = spec_from_document(doc, cfg["mode"])
    word, insert, l = _points(doc)
    l = l if l is not None else -(-len(insert) // len(word)) * len(word)
    from .shift_space import TwoSidedPoint

    p = TwoSidedPoint.periodic(word)
    z = homoclinic_point(word, insert, l)
    try:
        hu = unstable_holonomy(spec, p, z, cfg["tol"], cfg["iters"])
        hs = stable_holonomy(spec, z.shift(l), p, cfg["tol"], cfg["iters"])
    except HolonomyDiverged as exc:
        return {"error": str(exc), "increments": exc.increments[-10:]}, EXIT_ERROR, None

    def enc(h):
        import numpy as np

        from .numeric_kernel import as_float

        M = as_float(np.asarray(h.matrix))
        return {"matrix": [[float(v.real) if not np.iscomplexobj(M) else [float(v.real), float(v.imag)]
                            for v in row] for row in M],
                "residual": float(h.residual), "iterations": h.iterations_used,
                "fitted_ratio": h.fitted_ratio()}

    result = {"unstable": enc(hu), "stable": enc(hs), "locally_constant": spec.locally_constant}
    try:
        result["bunching"] = check_fiber_bunching(spec, rng=_rng(cfg["seed"])).to_json()
    except NotFinitelyCheckable as exc:
        result["bunching"] = {"error": str(exc)}
    return result, EXIT_OK, None


COMMANDS = {
    "simplicity": cmd_simplicity,
    "zorich": cmd_zorich,
    "dirac": cmd_dirac,
    "vandermonde": cmd_vandermonde,
    "induce": cmd_induce,
    "holonomy": cmd_holonomy,
}


# ---------------------------------------------------------------------------
# argument handling and reports

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--iters", type=int, default=None,
                        help="iterations or orbit length (command-specific default)")
    common.add_argument("--renorm", type=int, default=10, help="QR renormalization period")
    common.add_argument("--tol", type=float, default=None,
                        help="tolerance or sigma multiplier (command-specific default)")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=None,
                        help=f"BLAS threads (fallback: ${THREADS_ENV}, then 1)")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--float", dest="mode", action="store_const", const="float")
    common.set_defaults(mode="auto")

    p = argparse.ArgumentParser(prog="cocycle-spectra", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simplicity", parents=[common], help="pinching and twisting verdict")
    s.add_argument("--spec", default="example", help="spec file, or 'example'")
    s.add_argument("--adjoint", action="store_true", help="also decide the adjoint cocycle")

    for name, help_ in (("zorich", "Lyapunov spectrum of the Zorich cocycle"),
                        ("dirac", "Dirac convergence, eccentricity and tracking run")):
        z = sub.add_parser(name, parents=[common], help=help_)
        z.add_argument("--d", type=int, default=2 if name == "zorich" else 4)
        z.add_argument("--top", default=None, help="comma-separated top row (symbols 1..d)")
        z.add_argument("--bottom", default=None, help="comma-separated bottom row")
        if name == "zorich":
            z.add_argument("--full", action="store_true", help="do not restrict to H_pi")
        else:
            z.add_argument("--spec", default=None, help="use a spec file instead of Zorich")
            z.add_argument("--rotation", type=float, default=None,
                           help="constant rotation by this angle (control run)")
            z.add_argument("--ell", type=int, default=1)
            z.add_argument("--atoms", type=int, default=100)

    v = sub.add_parser("vandermonde", parents=[common], help="generalized Vandermonde split")
    v.add_argument("--m", required=True, help="exponents, e.g. 0,1,3")
    v.add_argument("--x", required=True, help="points, e.g. 1,2,3 (rationals allowed)")

    i = sub.add_parser("induce", parents=[common], help="first-return cocycle rescaling check")
    i.add_argument("--spec", default="example")
    i.add_argument("--base", default="0", help="base cylinder word, e.g. 0 or 0,1")
    i.add_argument("--max-return", dest="max_return", type=int, default=20)

    h = sub.add_parser("holonomy", parents=[common], help="holonomies at the homoclinic point")
    h.add_argument("--spec", default="example")
    return p


def effective_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items()}
    d = DEFAULTS[cfg["command"]]
    if cfg["iters"] is None:
        cfg["iters"] = d["iters"]
    if cfg["tol"] is None:
        cfg["tol"] = d["tol"]
    if cfg["threads"] is None:
        env = os.environ.get(THREADS_ENV)
        cfg["threads"] = int(env) if env and env.isdigit() else 1
    return cfg


def _limit_threads(n: int) -> None:
    # only effective before numpy loads its BLAS, i.e. in a fresh process
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def render(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def run(cfg: dict) -> tuple:
    """Execute a command; returns (report dict, exit code, csv text or None)."""
    from . import __version__

    start = time.perf_counter()
    csv_text = None
    try:
        result, code, csv_text = COMMANDS[cfg["command"]](cfg)
    except InputError as exc:
        result, code = {"error": f"input: {exc}"}, EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        result, code = {"error": f"{type(exc).__name__}: {exc}"}, EXIT_ERROR
    report = {"schema": REPORT_SCHEMA, "version": __version__, "command": cfg["command"],
              "config": cfg, "result": result, "exit_code": code,
              "wall_time": round(time.perf_counter() - start, 6)}
    return report, code, csv_text


def _flat_csv(report: dict) -> str:
    rows = []

    def walk(prefix, v):
        if isinstance(v, dict):
            for k in sorted(v):
                walk(f"{prefix}.{k}" if prefix else k, v[k])
        elif isinstance(v, list):
            for i, item in enumerate(v):
                walk(f"{prefix}[{i}]", item)
        else:
            rows.append(f"{prefix},{json.dumps(v)}")

    walk("", {k: v for k, v in report.items() if k != "wall_time"})
    return f"# {REPORT_SCHEMA} key,value\nkey,value\n" + "\n".join(rows) + "\n"


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = effective_config(args)
    _limit_threads(cfg["threads"])
    report, code, csv_text = run(cfg)
    if cfg["format"] == "csv":
        if csv_text is not None and code != EXIT_ERROR:
            text = csv_text() if callable(csv_text) else csv_text
        else:
            text = _flat_csv(report)
    else:
        text = render(report)
    if cfg["out"] == "-":
        sys.stdout.write(text)
    else:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
