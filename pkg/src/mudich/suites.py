"""Bundled reproduction suites run by ``mudich verify``.

Every suite builds its systems from bundled scenarios, runs the relevant
certifications and compares each outcome with the expected one.  A suite
passes when every expectation is met; the report lists each check with
its observed value and bound.
"""

from __future__ import annotations

import math
import time
import warnings
from typing import Callable

import numpy as np

from . import growth
from .dichotomy import (check_bounded_growth, check_ordinary, fit_mu,
                        pull_back_projections)
from .linearize import (NonlinearPerturbation, ball_samples, check_class,
                        gronwall_audit, solve_psi, verify_conjugacy)
from .rescale import build
from .scenario import bundled
from .spectrum import compare_spectra
from .system import ProjectionFamily, check_invariance

__all__ = ["SUITES", "SUITE_ALIASES", "run_suite", "suite_names"]


class _Checks:
    def __init__(self):
        self.items = []

    def add(self, name: str, ok: bool, observed=None, bound=None, note: str | None = None):
        item = {"name": name, "pass": bool(ok)}
        if observed is not None:
            item["observed"] = observed
        if bound is not None:
            item["bound"] = bound
        if note:
            item["note"] = note
        self.items.append(item)
        return ok

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.items)


def _finish(name, claim, checks, **extra) -> dict:
    out = {"suite": name, "claim": claim, "checks": checks.items,
           "verdict": "pass" if checks.ok else "fail"}
    out.update(extra)
    return out


def suite_counterexample(seed: int | None = None) -> dict:
    """Spike system: no growth-rate dichotomy, yet its rescaling has one."""
    sc = bundled("spike")
    seed = sc.seed if seed is None else seed
    fam, mu, eta = sc.family, sc.rate("mu"), sc.eta()
    hz = sc.horizon
    ch = _Checks()
    certs = {}
    for label, p in (("P=1", [[1.0]]), ("P=0", [[0.0]])):
        proj = ProjectionFamily.constant(p, 1)
        cert = fit_mu(fam, mu, proj, horizon=hz, seed=seed)
        certs[f"base_mu_{label}"] = cert.as_dict()
        ch.add(f"base mu-dichotomy with {label} fails", not cert.verdict,
               observed=cert.cause)
        ordc = check_ordinary(fam, proj, horizon=hz, seed=seed)
        certs[f"base_ordinary_{label}"] = ordc.as_dict()
        ch.add(f"base ordinary dichotomy with {label} fails", not ordc.verdict,
               observed=ordc.cause)
    rs = build(fam, mu, eta, hz)
    qmax = max(abs(float(rs.Q(n)[0, 0])) for n in range(1, rs.horizon))
    ch.add("rescaled operators vanish up to the horizon", qmax == 0.0,
           observed=qmax, bound=0.0)
    cert = fit_mu(rs.family, eta, ProjectionFamily.constant([[1.0]], 1),
                  horizon=rs.horizon, seed=seed, kind="exponential")
    certs["rescaled_exponential"] = cert.as_dict()
    ch.add("rescaled exponential dichotomy passes", cert.verdict, observed=cert.cause)
    ch.add("rescaled constant N = 1", cert.constants["N"] <= 1.0,
           observed=cert.constants["N"], bound=1.0)
    return _finish("counterexample",
                   "a non-invertible system without growth-rate dichotomy whose "
                   "rescaling admits an exponential dichotomy",
                   ch, scenario=sc.name, horizon=hz, rescaled_horizon=rs.horizon,
                   tau=[rs.tau(k) for k in range(1, rs.horizon + 1)],
                   certificates=certs)


def _diag_setup(seed):
    sc = bundled("diagonal")
    seed = sc.seed if seed is None else seed
    fam, mu, eta = sc.family, sc.rate("mu"), sc.eta()
    proj = sc.projections()
    rs = build(fam, mu, eta, sc.horizon, projections=proj)
    return sc, seed, fam, mu, eta, proj, rs


def suite_rescale_forward(seed: int | None = None) -> dict:
    """Growth-rate dichotomy of the base gives an exponential one after rescaling."""
    sc, seed, fam, mu, eta, proj, rs = _diag_setup(seed)
    ch = _Checks()
    tol = sc.tolerances
    base = fit_mu(fam, mu, proj, horizon=sc.horizon, tolerance=tol["fit"], seed=seed)
    ch.add("base fit passes", base.verdict, observed=base.cause)
    nu_s = base.constants["nu_stable"]
    ch.add("base stable rate within 5% of 1", abs(nu_s - 1.0) <= 0.05, observed=nu_s)
    resc = fit_mu(rs.family, eta, rs.projections, horizon=rs.horizon,
                  tolerance=tol["fit"], seed=seed, kind="exponential")
    ch.add("rescaled fit passes", resc.verdict, observed=resc.cause)
    nu_r = resc.constants["nu"]
    ch.add("rescaled rate within 5% of 1", abs(nu_r - 1.0) <= 0.05, observed=nu_r)
    bound = base.constants["N"] * mu.theta ** 4 * 1.1
    ch.add("rescaled constant within N theta^(4 nu)", resc.constants["N"] <= bound,
           observed=resc.constants["N"], bound=bound)
    return _finish("rescale-forward",
                   "a growth-rate dichotomy becomes an exponential dichotomy of the "
                   "rescaled system with constant at most N theta^(4 nu)",
                   ch, scenario=sc.name,
                   certificates={"base": base.as_dict(), "rescaled": resc.as_dict()})


def suite_rescale_reverse(seed: int | None = None) -> dict:
    """Ordinary dichotomy plus rescaled exponential dichotomy give a growth-rate one."""
    sc, seed, fam, mu, eta, proj, rs = _diag_setup(seed)
    ch = _Checks()
    tol = sc.tolerances
    ordc = check_ordinary(fam, proj, horizon=sc.horizon, cap=tol["ordinary_cap"],
                          seed=seed)
    ch.add("base ordinary dichotomy passes", ordc.verdict, observed=ordc.cause)
    resc = fit_mu(rs.family, eta, rs.projections, horizon=rs.horizon,
                  tolerance=tol["fit"], seed=seed, kind="exponential")
    ch.add("rescaled exponential dichotomy passes", resc.verdict, observed=resc.cause)
    base = fit_mu(fam, mu, proj, horizon=sc.horizon, tolerance=tol["fit"], seed=seed)
    ch.add("reconstructed growth-rate dichotomy passes", base.verdict, observed=base.cause)
    K, N, nu, th = ordc.constants["K"], resc.constants["N"], resc.constants["nu"], mu.theta
    bound = max(K * K * N * th ** (2 * nu), K * th ** nu) * 1.1
    ch.add("reconstructed constant within max(K^2 N theta^(2 nu), K theta^nu)",
           base.constants["N"] <= bound, observed=base.constants["N"], bound=bound)
    ch.add("reconstructed rate at least the rescaled one (5% slack)",
           base.constants["nu"] >= 0.95 * nu, observed=base.constants["nu"], bound=nu)
    return _finish("rescale-reverse",
                   "an ordinary dichotomy together with an exponential dichotomy of the "
                   "rescaled system yields a growth-rate dichotomy",
                   ch, scenario=sc.name,
                   certificates={"ordinary": ordc.as_dict(), "rescaled": resc.as_dict(),
                                 "reconstructed": base.as_dict()})


def suite_pullback(seed: int | None = None) -> dict:
    """Projections transported from time 1 are invariant and uniformly bounded."""
    sc = bundled("skewed")
    seed = sc.seed if seed is None else seed
    fam, mu, eta = sc.family, sc.rate("mu"), sc.eta()
    p1 = np.array([[float(v) for v in row] for row in sc.raw["projections"]["matrix"]])
    ch = _Checks()
    rs0 = build(fam, mu, eta, sc.horizon)
    proj = pull_back_projections(rs0, p1)
    hz = sc.horizon
    inv = check_invariance(fam, proj, horizon=hz)
    ch.add("invariance residual", inv <= sc.tolerances["invariance"], observed=inv,
           bound=sc.tolerances["invariance"])
    rs = build(fam, mu, eta, hz, projections=proj)
    align = max(float(np.max(np.abs(proj(rs.tau(n)) - rs.projections(n))))
                for n in range(1, rs.horizon + 1))
    ch.add("alignment with the rescaled projections", align == 0.0, observed=align)
    bg = check_bounded_growth(fam, mu, horizon=hz)
    L = max(float(np.linalg.norm(rs.projections(n), 2)) for n in range(1, rs.horizon + 1))
    bound = bg.K ** 2 * L * mu.theta ** (4 * bg.a) * 1.1
    rng = np.random.default_rng(seed)
    ks = rng.integers(1, hz, 1000)
    xs = rng.standard_normal((1000, sc.dim))
    ratios = [np.linalg.norm(proj(int(k)) @ x) / np.linalg.norm(x) for k, x in zip(ks, xs)]
    worst = float(max(ratios))
    ch.add("projection bound K^2 L theta^(4a) on 1000 samples", worst <= bound,
           observed=worst, bound=bound)
    rbg = check_bounded_growth(rs.family, eta, horizon=rs.horizon)
    kb = bg.K * mu.theta ** (3 * bg.a)
    ch.add("rescaled bounded-growth constant within K theta^(3a)", rbg.K <= kb * 1.1,
           observed=rbg.K, bound=kb * 1.1)
    return _finish("pullback",
                   "projections transported from the first rescaled time define an "
                   "invariant family with a uniform bound",
                   ch, scenario=sc.name, bounded_growth=bg.as_dict(),
                   rescaled_bounded_growth=rbg.as_dict(), L=L)


SPECTRUM_SYSTEMS = ("diagonal-long", "diagonal3", "switched", "identity")


def suite_spectrum_equality(seed: int | None = None, systems=SPECTRUM_SYSTEMS,
                            grid_step: float = 0.05) -> dict:
    """Growth-rate spectrum equals the exponential spectrum of the rescaling."""
    ch = _Checks()
    results = {}
    for name in systems:
        sc = bundled(name)
        rs = build(sc.family, sc.rate("mu"), sc.eta(), sc.horizon)
        t0 = time.perf_counter()
        cmp = compare_spectra(rs, grid_step=grid_step)
        elapsed = time.perf_counter() - t0
        h = cmp["hausdorff"]
        ch.add(f"{name}: Hausdorff distance", h <= 2 * grid_step, observed=h,
               bound=2 * grid_step)
        n_mu, n_ed = len(cmp["mu"].intervals), len(cmp["ed"].intervals)
        ch.add(f"{name}: interval count at most the dimension",
               max(n_mu, n_ed) <= sc.dim, observed=[n_mu, n_ed], bound=sc.dim)
        ch.add(f"{name}: runtime under 2 minutes", elapsed < 120.0)
        results[name] = {"mu": cmp["mu"].as_dict(), "ed": cmp["ed"].as_dict(),
                         "hausdorff": h, "min_window": cmp["min_window"]}
    return _finish("spectrum-equality",
                   "the growth-rate dichotomy spectrum coincides with the exponential "
                   "dichotomy spectrum of the rescaled system",
                   ch, grid_step=grid_step, systems=results)


def suite_conjugacy(seed: int | None = None, samples: int = 1000) -> dict:
    """Topological conjugacy of the perturbed diagonal system."""
    sc = bundled("conjugacy")
    seed = sc.seed if seed is None else seed
    mu, eta = sc.rate("mu"), sc.eta()
    proj = sc.projections()
    rs = build(sc.family, mu, eta, sc.horizon, projections=proj)
    pert = sc.perturbation(mu)
    tol = sc.tolerances["conjugacy"]
    ch = _Checks()
    k_range = (1, 100)
    top = rs.index.block_of(k_range[1] + 1)
    reports = {}
    for tail in (3, 6):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            conj = solve_psi(rs, pert, proj, top=top, tail=tail, tol=tol)
        rep = verify_conjugacy(conj, samples, k_range, tolerance=tol, seed=seed)
        reports[f"tail_{tail}"] = rep.as_dict()
        reports[f"tail_{tail}"]["warnings"] = [str(w.message) for w in caught]
        ch.add(f"tail {tail}: conjugacy residual", rep.residual <= tol,
               observed=rep.residual, bound=tol)
        ch.add(f"tail {tail}: inverse round trip", rep.roundtrip <= tol,
               observed=rep.roundtrip, bound=tol)
    d3, d6 = reports["tail_3"]["D_hat"], reports["tail_6"]["D_hat"]
    ch.add("D_hat finite", math.isfinite(d3) and math.isfinite(d6), observed=[d3, d6])
    rel = abs(d6 - d3) / max(d6, 1e-300)
    ch.add("D_hat stable under doubling the tail", rel <= 0.05, observed=rel, bound=0.05)
    zero = NonlinearPerturbation.none(mu)
    zconj = solve_psi(rs, zero, proj, top=top, tail=3, tol=tol)
    zrep = verify_conjugacy(zconj, samples, k_range, tolerance=tol, seed=seed)
    reports["zero"] = zrep.as_dict()
    ch.add("zero perturbation: residual exactly 0", zrep.residual == 0.0,
           observed=zrep.residual, bound=0.0)
    ch.add("zero perturbation: Hoelder exponent 1", abs(zrep.rho_hat - 1.0) <= 1e-9,
           observed=zrep.rho_hat)
    cls = check_class(pert, sc.horizon, sc.dim, seed=seed)
    ch.add("perturbation bounds uniform in time", cls["lipschitz_ok"],
           observed=[cls["M_hat"], cls["c_hat"]])
    ch.add("measured constants within declared M and c",
           cls["M_hat"] <= pert.M * 1.001 and cls["c_hat"] <= pert.c * 1.001,
           observed=[cls["M_hat"], cls["c_hat"]], bound=[pert.M, pert.c])
    bg = check_bounded_growth(sc.family, mu, horizon=2000)
    pairs = [(m, n) for n in (1, 3, 10, 30) for m in (n + 1, 2 * n + 5, 10 * n + 20, 300)]
    ga = gronwall_audit(sc.family.ops, pert, mu, bg.K, bg.a, pairs,
                        ball_samples(16, sc.dim, 1.0, seed))
    ch.add("Lipschitz growth envelope (1.05 slack)", ga["worst_lipschitz_ratio"] <= 1.05,
           observed=ga["worst_lipschitz_ratio"], bound=1.05)
    ch.add("derivative growth envelope (1.05 slack)", ga["worst_derivative_ratio"] <= 1.05,
           observed=ga["worst_derivative_ratio"], bound=1.05)
    for rep in reports.values():
        rep.pop("residuals", None)
    return _finish("conjugacy",
                   "small perturbations in the scaled class are topologically "
                   "conjugate to the linear system",
                   ch, scenario=sc.name, reports=reports, class_check=cls,
                   gronwall=ga, bounded_growth=bg.as_dict())


def suite_rate_audits(seed: int | None = None) -> dict:
    """Logarithmic sum bound and interpolant ratio bound for three rates."""
    ch = _Checks()
    rates = {"polynomial": growth.polynomial(2.0), "exponential": growth.exponential(),
             "geometric-3": growth.geometric(3.0)}
    out = {}
    for name, rate in rates.items():
        worst, pairs = 0.0, 0
        for n in range(0, 60, 3):
            for m in (n + 1, n + 2, n + 7, n + 40):
                s, b = rate.log_sum_bound(n, m)
                worst = max(worst, s / b)
                pairs += 1
        ch.add(f"{name}: log-sum bound", worst <= 1.0, observed=worst, bound=1.0)
        audit = rate.validate(100, grid=1000)
        ch.add(f"{name}: ratio and interpolant bounds", audit.ok,
               observed=[audit.max_ratio, audit.max_interp_ratio],
               bound=[rate.theta, rate.theta ** 2])
        out[name] = {"ratio": audit.as_dict(),
                     "log_sum": {"pairs": pairs, "worst_ratio": worst}}
    return _finish("rate-audits", "growth-rate sum and ratio bounds", ch, audits=out)


SUITES: dict[str, Callable[..., dict]] = {
    "counterexample": suite_counterexample,
    "rescale-forward": suite_rescale_forward,
    "rescale-reverse": suite_rescale_reverse,
    "pullback": suite_pullback,
    "spectrum-equality": suite_spectrum_equality,
    "conjugacy": suite_conjugacy,
    "rate-audits": suite_rate_audits,
}

SUITE_ALIASES = {
    "paper-example": "counterexample",
    "teo-main-forward": "rescale-forward",
    "teo-main-reverse": "rescale-reverse",
    "newthm-pullback": "pullback",
    "dicspec-equality": "spectrum-equality",
    "ntl-conjugacy": "conjugacy",
}


def suite_names() -> list[str]:
    return sorted(SUITES) + sorted(SUITE_ALIASES)


def run_suite(name: str, seed: int | None = None) -> dict:
    """Run a suite by name (aliases accepted)."""
    key = SUITE_ALIASES.get(name, name)
    if key not in SUITES:
        raise KeyError(name)
    return SUITES[key](seed)
