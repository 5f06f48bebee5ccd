"""Acceptance criteria 1-10.

Each test appends one ``[PASS]`` or ``[FAIL]`` line to the acceptance
summary printed at the end of the run.  Suite reports are produced once
per session through the command-line entry point and shared.
"""

import itertools
import json
import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mudich.cli import main
from mudich.report import TIMESTAMP_KEY
from mudich.rescale import build
from mudich.scenario import bundled
from mudich.spectrum import NoHyperbolicSplitting, check_band_gap, check_resonance, hausdorff

SUITES = ("counterexample", "rescale-forward", "rescale-reverse", "pullback",
          "spectrum-equality", "conjugacy", "rate-audits")

# pinned tolerances
RATE_SLACK = 0.05
CONSTANT_SLACK = 1.1
INVARIANCE_TOL = 1e-8
GRID_STEP = 0.05
SPECTRUM_SECONDS = 120.0
COUNTEREXAMPLE_SECONDS = 10.0
CONJUGACY_TOL = 1e-6
D_HAT_STABILITY = 0.05
GRONWALL_SLACK = 1.05


@contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"[FAIL] criterion {number}: {title} ({type(exc).__name__}: "
                                f"{str(exc).splitlines()[0] if str(exc) else ''})")
        raise
    ACCEPTANCE_LINES.append(f"[PASS] criterion {number}: {title}")


def run_suite(name, path):
    t0 = time.perf_counter()
    code = main(["verify", "--suite", name, "--out", str(path)])
    elapsed = time.perf_counter() - t0
    return code, path.read_text(encoding="utf-8"), elapsed


@pytest.fixture(scope="session")
def reports(tmp_path_factory):
    root = tmp_path_factory.mktemp("suites")
    out = {}
    for name in SUITES:
        code, text, elapsed = run_suite(name, root / f"{name}.json")
        out[name] = {"code": code, "text": text, "seconds": elapsed,
                     "result": json.loads(text)["result"]}
    return out


def check_map(result):
    return {c["name"]: c for c in result["checks"]}


# -- 1 --------------------------------------------------------------------


def test_criterion_01_rescaling_identity():
    with criterion(1, "rescaling with eta = mu reproduces A_n exactly on 5 systems"):
        for name in ("diagonal", "identity", "switched", "spike", "table3"):
            sc = bundled(name)
            mu = sc.rate("mu")
            rs = build(sc.family, mu, mu, 1000)
            assert rs.horizon == 1000
            for n in range(1, rs.horizon):
                assert rs.tau(n) == n
                assert np.array_equal(rs.Q(n), sc.family.ops(n)), (name, n)


# -- 2 --------------------------------------------------------------------


def test_criterion_02_counterexample(reports):
    with criterion(2, "spike system: rescaling vanishes, ED with N = 1, every base fit fails"):
        rep = reports["counterexample"]
        res = rep["result"]
        assert rep["code"] == 0 and res["verdict"] == "pass"
        assert res["horizon"] == 2 ** 14
        assert res["tau"][:6] == [1, 2, 4, 8, 16, 32]
        checks = check_map(res)
        assert checks["rescaled operators vanish up to the horizon"]["observed"] == 0.0
        certs = res["certificates"]
        ed = certs["rescaled_exponential"]
        assert ed["verdict"] == "pass" and ed["constants"]["N"] == 1.0
        for key in ("base_mu_P=1", "base_mu_P=0", "base_ordinary_P=1", "base_ordinary_P=0"):
            assert certs[key]["verdict"] == "fail", key
        assert rep["seconds"] < COUNTEREXAMPLE_SECONDS


# -- 3 --------------------------------------------------------------------


def test_criterion_03_forward(reports):
    with criterion(3, "growth-rate dichotomy carries over to the rescaled system"):
        res = reports["rescale-forward"]["result"]
        base = res["certificates"]["base"]
        resc = res["certificates"]["rescaled"]
        assert base["verdict"] == "pass" and resc["verdict"] == "pass"
        assert base["horizon"] == 10 ** 4
        assert abs(base["constants"]["nu_stable"] - 1.0) <= RATE_SLACK
        assert abs(resc["constants"]["nu"] - 1.0) <= RATE_SLACK
        theta = 2.0
        assert resc["constants"]["N"] <= base["constants"]["N"] * theta ** 4 * CONSTANT_SLACK


# -- 4 --------------------------------------------------------------------


def test_criterion_04_reverse(reports):
    with criterion(4, "ordinary plus rescaled ED dichotomy reconstructs the base dichotomy"):
        res = reports["rescale-reverse"]["result"]
        certs = res["certificates"]
        ordc, resc, base = certs["ordinary"], certs["rescaled"], certs["reconstructed"]
        assert ordc["verdict"] == resc["verdict"] == base["verdict"] == "pass"
        assert base["horizon"] == 10 ** 4
        K, N, nu = ordc["constants"]["K"], resc["constants"]["N"], resc["constants"]["nu"]
        theta = 2.0
        assert base["constants"]["N"] <= K ** 2 * N * theta ** (2 * nu) * CONSTANT_SLACK


# -- 5 --------------------------------------------------------------------


def test_criterion_05_pullback(reports):
    with criterion(5, "transported projections are invariant and uniformly bounded"):
        res = reports["pullback"]["result"]
        checks = check_map(res)
        assert checks["invariance residual"]["observed"] <= INVARIANCE_TOL
        bg = res["bounded_growth"]
        bound = bg["K"] ** 2 * res["L"] * 2.0 ** (4 * bg["a"]) * CONSTANT_SLACK
        item = checks["projection bound K^2 L theta^(4a) on 1000 samples"]
        assert item["bound"] == pytest.approx(bound, rel=1e-12)
        assert item["observed"] <= bound


# -- 6 --------------------------------------------------------------------


def test_criterion_06_spectrum_equality(reports):
    with criterion(6, "growth-rate spectrum equals the rescaled exponential spectrum"):
        res = reports["spectrum-equality"]["result"]
        assert res["grid_step"] == GRID_STEP
        assert set(res["systems"]) == {"diagonal-long", "diagonal3", "switched", "identity"}
        checks = check_map(res)
        for name, sysrep in res["systems"].items():
            mu_iv = [tuple(iv) for iv in sysrep["mu"]["intervals"]]
            ed_iv = [tuple(iv) for iv in sysrep["ed"]["intervals"]]
            assert hausdorff(mu_iv, ed_iv) <= 2 * GRID_STEP, name
            dim = bundled(name).dim
            assert len(mu_iv) <= dim and len(ed_iv) <= dim, name
            assert checks[f"{name}: runtime under 2 minutes"]["pass"], name
        assert reports["spectrum-equality"]["seconds"] < len(res["systems"]) * SPECTRUM_SECONDS


# -- 7 --------------------------------------------------------------------


def test_criterion_07_growth_audits(reports):
    with criterion(7, "sum bound, interpolant bound and Lipschitz growth envelope"):
        res = reports["rate-audits"]["result"]
        assert len(res["audits"]) == 3
        for name, audit in res["audits"].items():
            assert audit["log_sum"]["worst_ratio"] <= 1.0, name
            assert audit["ratio"]["interp_ok"] and audit["ratio"]["grid_points"] >= 1000, name
        gr = reports["conjugacy"]["result"]["gronwall"]
        assert gr["worst_lipschitz_ratio"] <= GRONWALL_SLACK


# -- 8 --------------------------------------------------------------------


def test_criterion_08_conjugacy(reports):
    with criterion(8, "perturbed system is conjugate to the linear one on 1000 samples"):
        res = reports["conjugacy"]["result"]
        reps = res["reports"]
        for tail in ("tail_3", "tail_6"):
            r = reps[tail]
            assert r["samples"] == 1000
            assert r["residual"] <= CONJUGACY_TOL
            assert r["roundtrip"] <= CONJUGACY_TOL
            assert math.isfinite(r["D_hat"]) and r["D_hat"] > 0
        d3, d6 = reps["tail_3"]["D_hat"], reps["tail_6"]["D_hat"]
        assert abs(d6 - d3) <= D_HAT_STABILITY * d6
        zero = reps["zero"]
        assert zero["residual"] == 0.0 and zero["D_hat"] == 0.0
        assert zero["rho_hat"] == pytest.approx(1.0, abs=1e-9)


# -- 9 --------------------------------------------------------------------


def brute_resonance(ivs, t):
    out = []
    for q in itertools.product(range(t + 1), repeat=len(ivs)):
        if not 2 <= sum(q) <= t:
            continue
        lo = sum(a * c for (a, _), c in zip(ivs, q))
        hi = sum(b * c for (_, b), c in zip(ivs, q))
        for i, (a, b) in enumerate(ivs):
            if max(lo, a) <= min(hi, b):
                out.append((i + 1, q))
    return sorted(out)


def test_criterion_09_resonance_and_band_gap():
    with criterion(9, "resonance and band-gap examples plus exhaustive cross-check"):
        assert check_resonance([(2, 2), (4, 4)], 2) == [{"i": 2, "q": [2, 0]}]
        assert all(check_resonance([(-3, -2.5)], t) == [] for t in range(2, 11))
        assert check_resonance([(1, 1)], 5) == []
        rep = check_band_gap([(-3, -2.9), (2, 2.05)])
        assert rep["gap_ok"] and rep["band_ok_stable"] and rep["band_ok_unstable"]
        assert not check_band_gap([(-1, -0.5), (0.4, 0.6)])["gap_ok"]
        assert check_band_gap([(-1, -1), (1, 1)])["ok"]
        with pytest.raises(NoHyperbolicSplitting):
            check_band_gap([(-1, 1)])
        # half-integer endpoints: float arithmetic is exact, the oracle is rational
        vals = [Fraction(v, 2) for v in range(-4, 5)]
        cases = 0
        for r in (1, 2, 3):
            for ends in itertools.combinations(vals, 2 * r):
                exact = [(ends[2 * i], ends[2 * i + 1]) for i in range(r)]
                variants = [exact, [(exact[0][0], exact[0][0])] + exact[1:]]
                for ivs in variants:
                    floats = [(float(a), float(b)) for a, b in ivs]
                    for t in range(2, 7):
                        got = sorted((v["i"], tuple(v["q"])) for v in check_resonance(floats, t))
                        assert got == brute_resonance(ivs, t), (ivs, t)
                        cases += 1
        assert cases > 1000


# -- 10 -------------------------------------------------------------------


def test_criterion_10_determinism(reports, tmp_path):
    with criterion(10, "suite reruns are byte-identical apart from the timestamp"):
        for name in SUITES:
            code, text, _ = run_suite(name, tmp_path / f"{name}.json")
            first = reports[name]["text"]
            assert code == reports[name]["code"], name
            stamp_a = json.loads(first)["header"][TIMESTAMP_KEY]
            stamp_b = json.loads(text)["header"][TIMESTAMP_KEY]
            key = json.dumps(TIMESTAMP_KEY)
            assert first.count(f"{key}: {json.dumps(stamp_a)}") == 1
            assert first.replace(f"{key}: {json.dumps(stamp_a)}",
                                 f"{key}: {json.dumps(stamp_b)}") == text, name
