"""Command-line interface ``mudich``.

Exit codes: 0 when every verdict passes, 2 when a certification fails,
1 on usage or validation errors (malformed scenarios report the field
path).  ``MUDICH_THREADS`` caps the BLAS thread pools.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def _limit_threads() -> None:
    n = os.environ.get("MUDICH_THREADS")
    if not n:
        return
    if not n.isdigit() or int(n) < 1:
        raise SystemExit(f"mudich: MUDICH_THREADS must be a positive integer, got {n!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = n


class UsageError(Exception):
    pass


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("range needs LO < HI")
    return lo, hi


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be positive and finite")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mudich",
                                description="Time rescaling, dichotomies, spectra and "
                                            "conjugacies of linear difference equations.")
    p.add_argument("--version", action="store_true", help="print the version and exit")
    sub = p.add_subparsers(dest="command")

    def scen(sp, out=True):
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--rate", help="rate name from the scenario (default mu)")
        sp.add_argument("--horizon", type=_positive_int, help="override the base horizon")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        if out:
            sp.add_argument("--out", help="output JSON path (default: stdout)")

    sp = sub.add_parser("validate-rate", help="audit a growth rate")
    scen(sp)
    sp.add_argument("--grid", type=_positive_int, default=1000)

    sp = sub.add_parser("rescale", help="emit tau and rescaled operator tables")
    scen(sp)
    sp.add_argument("--eta", help="target rate: scenario rate name or 'exponential'")

    sp = sub.add_parser("dichotomy", help="certify a dichotomy")
    scen(sp)
    sp.add_argument("--kind", choices=["ordinary", "mu", "exponential"], default="mu")
    sp.add_argument("--tol", type=_positive_float, help="residual tolerance")
    sp.add_argument("--rescaled", action="store_true",
                    help="certify the rescaled system (with --eta) instead of the base")
    sp.add_argument("--eta", help="target rate for --rescaled")
    sp.add_argument("--csv", help="fit scatter CSV (x, y per side)")

    sp = sub.add_parser("spectrum", help="estimate the dichotomy spectrum")
    scen(sp)
    sp.add_argument("--method", choices=["mu", "ed-rescaled", "both"], default="mu")
    sp.add_argument("--range", type=_range, dest="lam_range", help="LO:HI shift range")
    sp.add_argument("--step", type=_positive_float, default=None, help="grid step")
    sp.add_argument("--min-window", type=_positive_float, default=None)
    sp.add_argument("--csv", help="margin series CSV (lambda, margin, verdict)")

    sp = sub.add_parser("resonance", help="resonance check of a spectrum file")
    sp.add_argument("--spec", required=True, help="spectrum JSON (from 'spectrum')")
    sp.add_argument("--order", type=int, required=True, help="order t >= 2")
    sp.add_argument("--which", choices=["mu", "ed"], default="mu",
                    help="estimate to use when the file holds both")
    sp.add_argument("--out")

    sp = sub.add_parser("bandgap", help="band-gap check of a spectrum file")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--which", choices=["mu", "ed"], default="mu")
    sp.add_argument("--out")

    sp = sub.add_parser("linearize", help="build and verify the conjugacy")
    scen(sp)
    sp.add_argument("--tail", type=_positive_int, help="Green-sum tail (default: automatic)")
    sp.add_argument("--tol", type=_positive_float, help="conjugacy tolerance")
    sp.add_argument("--samples", type=_positive_int, default=1000)
    sp.add_argument("--kmax", type=_positive_int, default=100, help="largest sampled time")
    sp.add_argument("--radius", type=_positive_float, default=1.0)
    sp.add_argument("--csv", help="residual histogram CSV")

    sp = sub.add_parser("verify", help="run a bundled reproduction suite")
    sp.add_argument("--suite", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    return p


# -- helpers --------------------------------------------------------------


def _emit(payload: dict, out: str | None) -> None:
    from .report import dumps, write_json
    if out:
        try:
            write_json(out, payload)
        except OSError as exc:
            raise UsageError(f"cannot write {out}: {exc.strerror}") from None
    else:
        sys.stdout.write(dumps(payload))


def _csv(path, columns, rows):
    from .report import write_csv
    if not path:
        return
    try:
        write_csv(path, columns, rows)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _scenario(args):
    from .scenario import load_scenario
    sc = load_scenario(args.scenario)
    if args.horizon is not None:
        if args.horizon < 2:
            raise UsageError("--horizon must be >= 2")
        sc.horizon = args.horizon
    if args.seed is not None:
        sc.seed = args.seed
    return sc


def _header(args, sc=None, **extra):
    from .report import make_header
    info = {}
    if sc is not None:
        info.update(scenario=sc.name, seed=sc.seed, horizon=sc.horizon)
    info.update(extra)
    return make_header(args.command, **info)


# -- commands -------------------------------------------------------------


def cmd_validate_rate(args) -> int:
    sc = _scenario(args)
    rate = sc.rate(args.rate)
    audit = rate.validate(sc.horizon, grid=args.grid)
    _emit({"header": _header(args, sc), "rate": rate.describe(), "audit": audit.as_dict(),
           "unbounded": "assumed (not testable on a finite horizon)"}, args.out)
    return EXIT_PASS if audit.ok else EXIT_FAIL


def cmd_rescale(args) -> int:
    from .rescale import build
    sc = _scenario(args)
    mu, eta = sc.rate(args.rate), sc.eta(args.eta)
    rs = build(sc.family, mu, eta, sc.horizon)
    tables = rs.tables()
    payload = {"header": _header(args, sc), "mu": mu.describe(), "eta": eta.describe(),
               "rescaled_horizon": rs.horizon, "tau": tables["tau"], "Q": tables["Q"],
               "system": {"kind": "table", "matrices": tables["Q"]}}
    _emit(payload, args.out)
    return EXIT_PASS


def cmd_dichotomy(args) -> int:
    from .dichotomy import check_ordinary, fit_mu, pair_grid, side_measurements
    from .rescale import build
    sc = _scenario(args)
    proj = sc.projections()
    if proj is None:
        raise UsageError("scenario has no projections; dichotomy checks need them")
    tol = args.tol if args.tol is not None else sc.tolerances["fit"]
    mu = sc.rate(args.rate)
    fam, norms, hz, rate = sc.family, sc.norms(), sc.horizon, mu
    target = "base"
    if args.rescaled:
        rs = build(fam, mu, sc.eta(args.eta), hz, norms=norms, projections=proj)
        fam, norms, proj, hz, rate = rs.family, rs.norms, rs.projections, rs.horizon, rs.eta
        target = "rescaled"
    if args.kind == "ordinary":
        cert = check_ordinary(fam, proj, norms, hz, sc.tolerances["ordinary_cap"], tol,
                              seed=sc.seed)
    else:
        if args.kind == "exponential" and not args.rescaled:
            from .growth import exponential
            rate = exponential()
        cert = fit_mu(fam, rate, proj, norms, hz, tol, sc.tolerances["nu_min"],
                      kind=args.kind, seed=sc.seed)
        if args.csv:
            pairs = pair_grid(hz)
            x, ys, yu = side_measurements(fam, rate, proj, pairs, norms, sc.seed)
            _csv(args.csv, ["x", "y_stable", "y_unstable"], zip(x, ys, yu))
    if args.kind == "ordinary":
        _csv(args.csv, ["x", "y_stable", "y_unstable"], [])
    _emit({"header": _header(args, sc, target=target), "certificate": cert.as_dict()},
          args.out)
    return EXIT_PASS if cert.verdict else EXIT_FAIL


def cmd_spectrum(args) -> int:
    from .rescale import build
    from .spectrum import compare_spectra, ed_spectrum_rescaled, mu_spectrum
    sc = _scenario(args)
    step = args.step if args.step is not None else sc.tolerances["grid_step"]
    mu = sc.rate(args.rate)
    payload = {"header": _header(args, sc, method=args.method)}
    rows = []
    if args.method == "mu":
        est = mu_spectrum(sc.family, mu, args.lam_range, step, sc.horizon,
                          min_window=args.min_window, norms=sc.norms())
        payload.update(est.as_dict())
        ests = {"mu": est}
    else:
        rs = build(sc.family, mu, sc.eta(), sc.horizon, norms=sc.norms())
        if args.method == "ed-rescaled":
            est = ed_spectrum_rescaled(rs, args.lam_range, step, min_window=args.min_window)
            payload.update(est.as_dict())
            ests = {"ed": est}
        else:
            cmp = compare_spectra(rs, args.lam_range, step, args.min_window)
            payload.update({"mu": cmp["mu"].as_dict(), "ed": cmp["ed"].as_dict(),
                            "hausdorff": cmp["hausdorff"], "min_window": cmp["min_window"]})
            ests = {"mu": cmp["mu"], "ed": cmp["ed"]}
    for label, est in ests.items():
        for lam, m, v in zip(est.grid, est.margins, est.verdicts):
            rows.append((label, lam, m, "resolvent" if v else "spectrum"))
    _csv(args.csv, ["method", "lambda", "margin", "verdict"], rows)
    _emit(payload, args.out)
    if args.method == "both" and not payload["hausdorff"] <= 2 * step:
        return EXIT_FAIL
    return EXIT_PASS


def _load_spec(args):
    from .report import read_json
    try:
        data = read_json(args.spec)
    except OSError as exc:
        raise UsageError(f"cannot read {args.spec}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{args.spec}: invalid JSON ({exc})") from None
    if "intervals" not in data:
        key = args.which
        if key not in data or "intervals" not in data[key]:
            raise UsageError(f"{args.spec}: no 'intervals' field")
        data = data[key]
    return data


def cmd_resonance(args) -> int:
    from .spectrum import check_resonance
    spec = _load_spec(args)
    if args.order < 2:
        raise UsageError("--order must be at least 2")
    hits = check_resonance(spec, args.order)
    _emit({"header": _header(args, order=args.order), "intervals": spec["intervals"],
           "resonances": hits, "non_resonant": not hits}, args.out)
    return EXIT_PASS if not hits else EXIT_FAIL


def cmd_bandgap(args) -> int:
    from .spectrum import NoHyperbolicSplitting, check_band_gap
    spec = _load_spec(args)
    try:
        res = check_band_gap(spec)
    except NoHyperbolicSplitting as exc:
        _emit({"header": _header(args), "intervals": spec["intervals"], "ok": False,
               "cause": str(exc)}, args.out)
        return EXIT_FAIL
    _emit({"header": _header(args), "intervals": spec["intervals"], **res}, args.out)
    return EXIT_PASS if res["ok"] else EXIT_FAIL


def cmd_linearize(args) -> int:
    import numpy as np
    from .linearize import solve_psi, verify_conjugacy
    from .rescale import build
    sc = _scenario(args)
    proj = sc.projections()
    if proj is None:
        raise UsageError("scenario has no projections; the conjugacy needs them")
    mu = sc.rate(args.rate)
    tol = args.tol if args.tol is not None else sc.tolerances["conjugacy"]
    rs = build(sc.family, mu, sc.eta(), sc.horizon, projections=proj)
    pert = sc.perturbation(mu)
    top = rs.index.block_of(args.kmax + 1)
    conj = solve_psi(rs, pert, proj, top=top, tail=args.tail, tol=tol)
    rep = verify_conjugacy(conj, args.samples, (1, args.kmax), radius=args.radius,
                           tolerance=tol, seed=sc.seed)
    res = rep.residuals
    if args.csv:
        pos = res[res > 0]
        if len(pos):
            edges = np.logspace(np.floor(np.log10(pos.min())), np.ceil(np.log10(pos.max())), 21)
            counts, _ = np.histogram(pos, edges)
            rows = [(lo, hi, int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        else:
            rows = []
        rows.append((0.0, 0.0, int(np.sum(res == 0))))
        _csv(args.csv, ["bin_low", "bin_high", "count"], rows)
    _emit({"header": _header(args, sc), "perturbation": pert.describe(),
           "report": rep.as_dict()}, args.out)
    return EXIT_PASS if rep.verdict else EXIT_FAIL


def cmd_verify(args) -> int:
    from .suites import run_suite, suite_names
    try:
        result = run_suite(args.suite, args.seed)
    except KeyError:
        raise UsageError(f"unknown suite {args.suite!r}; choose from "
                         f"{', '.join(suite_names())}") from None
    header = _header(args, suite=result["suite"], claim=result["claim"])
    if args.seed is not None:
        header["seed"] = args.seed
    _emit({"header": header, "result": result}, args.out)
    return EXIT_PASS if result["verdict"] == "pass" else EXIT_FAIL


COMMANDS = {
    "validate-rate": cmd_validate_rate,
    "rescale": cmd_rescale,
    "dichotomy": cmd_dichotomy,
    "spectrum": cmd_spectrum,
    "resonance": cmd_resonance,
    "bandgap": cmd_bandgap,
    "linearize": cmd_linearize,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    _limit_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    if args.version:
        from . import __version__
        print(__version__)
        return EXIT_PASS
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    from .errors import MudichError, ScenarioError
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"mudich: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"mudich: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MudichError, ValueError) as exc:
        print(f"mudich: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
