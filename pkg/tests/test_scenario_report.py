import json
import math

import numpy as np
import pytest

from mudich.dichotomy import DichotomyCertificate, fit_mu
from mudich.errors import ScenarioError
from mudich.report import (csv_text, dumps, make_header, read_json, sanitize,
                           strip_timestamp, write_csv, write_json)
from mudich.scenario import (DEFAULT_TOLERANCES, bundled, bundled_names, load_scenario,
                             parse_scenario)


def base(**over):
    d = {
        "dim": 2, "horizon": 1000, "seed": 3,
        "rates": {"mu": {"kind": "polynomial", "theta": "2"}},
        "system": {"kind": "diagonal", "rate": "mu", "exponents": ["-1", "2"]},
        "projections": {"kind": "coordinate", "stable": [0]},
    }
    d.update(over)
    return d


# -- scenarios ------------------------------------------------------------


def test_bundled_scenarios_load():
    names = bundled_names()
    for expected in ("conjugacy", "diagonal", "spike", "switched", "table3"):
        assert expected in names
    for name in names:
        sc = bundled(name)
        assert sc.name == name and sc.horizon >= 2
        assert sc.family.dim == sc.dim


def test_decimal_strings_equal_numbers():
    a = parse_scenario(base())
    b = parse_scenario(base(system={"kind": "diagonal", "rate": "mu", "exponents": [-1, 2]},
                            rates={"mu": {"kind": "polynomial", "theta": 2}}))
    for n in (1, 10, 500):
        assert np.array_equal(a.family.ops(n), b.family.ops(n))
    assert a.rate().theta == b.rate().theta == 2.0


def test_defaults():
    sc = parse_scenario(base())
    assert sc.tolerances == DEFAULT_TOLERANCES
    assert sc.eta().theta == pytest.approx(math.e)
    assert sc.perturbation().zero


def test_tolerance_override():
    sc = parse_scenario(base(tolerances={"fit": "0.25"}))
    assert sc.tolerances["fit"] == 0.25


@pytest.mark.parametrize("data,path", [
    (base(rates={"mu": {"kind": "polynomial"}}), "rates.mu.theta"),
    (base(rates={"mu": {"kind": "polynomial", "theta": "abc"}}), "rates.mu.theta"),
    (base(rates={"mu": {"kind": "polynomial", "theta": "-1"}}), "rates.mu.theta"),
    (base(horizon=1), "horizon"),
    (base(horizon="2.5"), "horizon"),
    (base(dim=True), "dim"),
    (base(colour="blue"), "colour"),
    (base(system={"kind": "diagonal", "rate": "mu", "exponents": ["1"]}), "system.exponents"),
    (base(system={"kind": "diagonal", "rate": "nu", "exponents": ["1", "2"]}), "system.rate"),
    (base(system={"kind": "warp"}), "system.kind"),
    (base(system={"kind": "table", "matrices": [[[1, 0], [0]]]}), "system.matrices[0][1]"),
    (base(projections={"kind": "coordinate", "stable": [5]}), "projections.stable[0]"),
    (base(projections={"kind": "matrix", "matrix": [[1, 1], [0, 1]]}), "projections.matrix"),
    (base(perturbation={"kind": "sine"}), "perturbation.amplitude"),
    (base(tolerances={"speed": "1"}), "tolerances.speed"),
    ({"horizon": 10}, "$.dim"),
])
def test_error_paths(data, path):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert err.value.path == path
    assert str(err.value).startswith(path)


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json", encoding="utf-8")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(bad)
    with pytest.raises(ScenarioError):
        bundled("nope")


def test_load_round_trip(tmp_path):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(base(name="mine")), encoding="utf-8")
    sc = load_scenario(p)
    assert sc.name == "mine" and sc.seed == 3


def test_projection_kinds():
    sc = parse_scenario(base(projections={"kind": "matrix", "matrix": [[1, 0], [0, 0]]}))
    assert np.array_equal(sc.projections()(4), np.diag([1.0, 0.0]))
    sk = bundled("skewed")
    p = sk.projections()
    assert np.max(np.abs(p(7) @ p(7) - p(7))) < 1e-10


# -- reports --------------------------------------------------------------


def test_sanitize_and_dumps():
    obj = {"b": np.float64(1.5), "a": [np.int64(2), math.inf, -math.inf, math.nan],
           "t": (1, 2), "m": np.eye(2), "f": np.bool_(True)}
    text = dumps(obj)
    assert text.endswith("\n") and "\r" not in text
    back = json.loads(text)
    assert back["a"] == [2, "inf", "-inf", "nan"]
    assert back["m"] == [[1.0, 0.0], [0.0, 1.0]] and back["f"] is True
    assert list(back) == sorted(back)
    assert sanitize({1: 2}) == {"1": 2}


def test_header_timestamp(monkeypatch):
    monkeypatch.setenv("MUDICH_TIMESTAMP", "fixed")
    head = make_header("verify", suite="x")
    assert head["timestamp"] == "fixed" and head["suite"] == "x" and head["tool"] == "mudich"
    monkeypatch.delenv("MUDICH_TIMESTAMP")
    assert make_header("verify")["timestamp"] != "fixed"


def test_strip_timestamp():
    rep = {"header": make_header("x"), "value": 1}
    assert strip_timestamp(dumps(rep)) == {"header": {k: v for k, v in rep["header"].items()
                                                      if k != "timestamp"}, "value": 1}


def test_csv_header_always_present(tmp_path):
    assert csv_text(["k", "residual"], []) == "k,residual\n"
    text = csv_text(["k", "r"], [(1, 0.1), (2, math.inf)])
    assert text == "k,r\n1,0.1\n2,inf\n"
    p = tmp_path / "sub" / "out.csv"
    write_csv(p, ["a"], [])
    assert p.read_bytes() == b"a\n"


def test_certificate_json_round_trip(tmp_path):
    sc = parse_scenario(base())
    cert = fit_mu(sc.family, sc.rate(), sc.projections())
    p = tmp_path / "cert.json"
    write_json(p, {"header": make_header("dichotomy"), "certificate": cert.as_dict()})
    back = read_json(p)["certificate"]
    assert back == json.loads(dumps(cert.as_dict()))
    assert back["verdict"] == "pass" and back["constants"]["nu"] == pytest.approx(1.0)
    assert back["seed"] == cert.seed and back["grid"] == cert.grid


def test_failed_certificate_encodes_infinity():
    cert = DichotomyCertificate("mu", {"N": math.inf, "nu": -math.inf}, 10, math.inf, 0.1,
                                False, "cause")
    d = json.loads(dumps(cert.as_dict()))
    assert d["constants"] == {"N": "inf", "nu": "-inf"} and d["residual"] == "inf"
    assert d["verdict"] == "fail"


def test_reports_are_deterministic(monkeypatch):
    monkeypatch.setenv("MUDICH_TIMESTAMP", "t")
    sc = parse_scenario(base())
    runs = [dumps({"header": make_header("dichotomy"),
                   "certificate": fit_mu(sc.family, sc.rate(), sc.projections()).as_dict()})
            for _ in range(2)]
    assert runs[0] == runs[1]
