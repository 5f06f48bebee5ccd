"""Scenario files: JSON descriptions of a system, its rates and tolerances.

Schema (all numbers may be given as decimal strings)::

    {
      "name": "diagonal",                      # optional label
      "dim": 2,
      "horizon": 10000,                        # base horizon, >= 2
      "seed": 20240611,                        # optional
      "rates": {                               # named growth rates
        "mu":  {"kind": "polynomial", "theta": "2"},
        "eta": {"kind": "exponential", "theta": "2.718281828459045"}
      },
      "system": {"kind": "diagonal", "rate": "mu", "exponents": ["-1", "2"]},
      "norms": {"kind": "euclidean"},          # optional
      "projections": {"kind": "coordinate", "stable": [0]},   # optional
      "perturbation": {"kind": "sin-cos", "amplitude": "0.01"},  # optional
      "tolerances": {"fit": "0.1"}             # optional overrides
    }

Rate kinds: ``polynomial``, ``exponential``, ``geometric`` (field ``h``)
and ``table`` (field ``values``); ``theta`` is required for all of them.

System kinds: ``diagonal`` (``rate``, ``exponents``, optional ``basis``),
``switched`` (``rate``, ``breaks``, ``exponents`` rows), ``table``
(``matrices``, optional ``repeat_last``), ``spike`` (the scalar sparse
spike system, alias ``paper-example``).

Projection kinds: ``coordinate`` (``stable`` axes), ``matrix``
(``matrix``), ``pull-back`` (``matrix`` at time 1, transported by the
flow).  Perturbation kinds: ``zero``, ``sin-cos`` and ``sine``
(``amplitude``), ``constant`` (``value``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import growth
from .errors import ScenarioError
from .growth import GrowthRate
from .linearize import NonlinearPerturbation
from .system import (EvolutionFamily, NormFamily, OperatorSequence, ProjectionFamily,
                     diagonal_power, sparse_spike, switched_power, table_operators)

__all__ = ["Scenario", "DEFAULT_TOLERANCES", "parse_scenario", "load_scenario",
           "bundled", "bundled_names", "build_rate"]

DEFAULT_TOLERANCES = {
    "fit": 0.1,
    "nu_min": 1e-3,
    "ordinary_cap": 1e6,
    "grid_step": 0.05,
    "conjugacy": 1e-6,
    "invariance": 1e-8,
}

_TOP_FIELDS = {"name", "description", "dim", "horizon", "seed", "rates", "system",
               "norms", "projections", "perturbation", "tolerances"}


def _num(value: Any, path: str, positive: bool = False, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ScenarioError(path, f"expected a number, got {type(value).__name__}")
    try:
        dec = Decimal(value.strip()) if isinstance(value, str) else Decimal(repr(value))
    except InvalidOperation:
        raise ScenarioError(path, f"not a decimal number: {value!r}") from None
    if not dec.is_finite():
        raise ScenarioError(path, "must be finite")
    if integer:
        if dec != dec.to_integral_value():
            raise ScenarioError(path, f"expected an integer, got {value!r}")
        out = int(dec)
    else:
        out = float(dec)
    if positive and not out > 0:
        raise ScenarioError(path, "must be positive")
    return out


def _int(value, path, minimum=None) -> int:
    out = int(_num(value, path, integer=True))
    if minimum is not None and out < minimum:
        raise ScenarioError(path, f"must be >= {minimum}")
    return out


def _obj(value, path) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, "expected an object")
    return value


def _list(value, path) -> list:
    if not isinstance(value, list):
        raise ScenarioError(path, "expected a list")
    return value


def _need(obj, key, path):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return obj[key]


def _matrix(value, path, dim) -> np.ndarray:
    rows = _list(value, path)
    if dim == 1 and rows and not isinstance(rows[0], list):
        rows = [rows]
    if len(rows) != dim:
        raise ScenarioError(path, f"expected {dim} rows")
    out = np.empty((dim, dim))
    for i, row in enumerate(rows):
        row = _list(row, f"{path}[{i}]")
        if len(row) != dim:
            raise ScenarioError(f"{path}[{i}]", f"expected {dim} entries")
        for j, v in enumerate(row):
            out[i, j] = _num(v, f"{path}[{i}][{j}]")
    return out


def build_rate(spec: Any, path: str = "rate") -> GrowthRate:
    """Growth rate from its scenario description."""
    spec = _obj(spec, path)
    kind = _need(spec, "kind", path)
    theta = _num(_need(spec, "theta", path), f"{path}.theta", positive=True)
    try:
        if kind == "polynomial":
            return growth.polynomial(theta)
        if kind == "exponential":
            return growth.exponential(theta)
        if kind == "geometric":
            return growth.geometric(_num(_need(spec, "h", path), f"{path}.h"), theta)
        if kind == "table":
            vals = _list(_need(spec, "values", path), f"{path}.values")
            return growth.table([_num(v, f"{path}.values[{i}]") for i, v in enumerate(vals)],
                                theta)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None
    raise ScenarioError(f"{path}.kind", f"unknown rate kind {kind!r}")


@dataclass
class Scenario:
    """Validated scenario with factories for the described objects."""

    raw: dict
    dim: int
    horizon: int
    seed: int
    rates: dict
    tolerances: dict
    name: str = "scenario"
    source: str = "<memory>"
    _family: EvolutionFamily | None = field(default=None, repr=False)

    def rate(self, name: str | None = None) -> GrowthRate:
        """Named rate; ``None`` picks ``mu`` (or the only rate).  Built-in
        kind names (``exponential`` ...) are accepted with their default ``theta``."""
        if name is None:
            if "mu" in self.rates:
                return self.rates["mu"]
            if len(self.rates) == 1:
                return next(iter(self.rates.values()))
            raise ScenarioError("rates", "several rates defined; choose one")
        if name in self.rates:
            return self.rates[name]
        builtin = {"polynomial": growth.polynomial, "exponential": growth.exponential}
        if name in builtin:
            return builtin[name]()
        raise ScenarioError("rates", f"no rate named {name!r}")

    def eta(self, name: str | None = None) -> GrowthRate:
        if name is None:
            return self.rates.get("eta") or growth.exponential()
        return self.rate(name)

    @property
    def family(self) -> EvolutionFamily:
        if self._family is None:
            self._family = EvolutionFamily(self._operators())
        return self._family

    def _operators(self) -> OperatorSequence:
        spec, path, d = self.raw["system"], "system", self.dim
        kind = spec["kind"]
        hz = self.horizon
        if kind == "diagonal":
            ex = [_num(v, f"{path}.exponents[{i}]")
                  for i, v in enumerate(_list(_need(spec, "exponents", path), f"{path}.exponents"))]
            basis = _matrix(spec["basis"], f"{path}.basis", d) if "basis" in spec else None
            return diagonal_power(self._sys_rate(spec), ex, basis, hz)
        if kind == "switched":
            breaks = [_int(v, f"{path}.breaks[{i}]", 1)
                      for i, v in enumerate(_list(_need(spec, "breaks", path), f"{path}.breaks"))]
            rows = _list(_need(spec, "exponents", path), f"{path}.exponents")
            ex = [[_num(v, f"{path}.exponents[{i}][{j}]")
                   for j, v in enumerate(_list(row, f"{path}.exponents[{i}]"))]
                  for i, row in enumerate(rows)]
            try:
                return switched_power(self._sys_rate(spec), breaks, ex, hz)
            except ValueError as exc:
                raise ScenarioError(path, str(exc)) from None
        if kind == "table":
            mats = [_matrix(m, f"{path}.matrices[{i}]", d)
                    for i, m in enumerate(_list(_need(spec, "matrices", path), f"{path}.matrices"))]
            if not mats:
                raise ScenarioError(f"{path}.matrices", "empty table")
            repeat = bool(spec.get("repeat_last", False))
            if not repeat and len(mats) + 1 < hz:
                raise ScenarioError(f"{path}.matrices",
                                    f"{len(mats)} matrices do not reach horizon {hz}")
            return table_operators(mats, hz, repeat)
        return sparse_spike(hz)

    def _sys_rate(self, spec) -> GrowthRate:
        return self.rate(spec.get("rate", "mu") if self.rates else None)

    def projections(self) -> ProjectionFamily | None:
        spec = self.raw.get("projections")
        if spec is None:
            return None
        kind, d = spec["kind"], self.dim
        if kind == "coordinate":
            return ProjectionFamily.coordinate(d, [int(i) for i in spec["stable"]])
        p = _matrix(spec["matrix"], "projections.matrix", d)
        if kind == "matrix":
            return ProjectionFamily.constant(p, d)
        from .dichotomy import pull_back_projections
        return pull_back_projections(self.family, p)

    def norms(self) -> NormFamily | None:
        spec = self.raw.get("norms")
        if spec is None or spec["kind"] == "euclidean":
            return None
        w = _matrix(spec["matrix"], "norms.matrix", self.dim)
        return NormFamily(self.dim, lambda n: w, name="weighted")

    def perturbation(self, rate: GrowthRate | None = None) -> NonlinearPerturbation:
        spec = self.raw.get("perturbation") or {"kind": "zero"}
        rate = rate or self.rate(spec.get("rate"))
        kind = spec["kind"]
        if kind == "zero":
            return NonlinearPerturbation.none(rate)
        if kind == "sin-cos":
            return NonlinearPerturbation.sin_cos(rate, spec["amplitude"])
        if kind == "sine":
            return NonlinearPerturbation.sine(rate, spec["amplitude"])
        return NonlinearPerturbation.constant(rate, spec["value"])


def _check_system(spec, dim, rates):
    path = "system"
    spec = _obj(spec, path)
    kind = _need(spec, "kind", path)
    if kind in ("diagonal", "switched"):
        rname = spec.get("rate", "mu")
        if rname not in rates:
            raise ScenarioError(f"{path}.rate", f"no rate named {rname!r}")
        ex = _list(_need(spec, "exponents", path), f"{path}.exponents")
        if kind == "diagonal" and len(ex) != dim:
            raise ScenarioError(f"{path}.exponents", f"expected {dim} exponents")
        if kind == "diagonal":
            for i, v in enumerate(ex):
                _num(v, f"{path}.exponents[{i}]")
            if "basis" in spec:
                b = _matrix(spec["basis"], f"{path}.basis", dim)
                if abs(np.linalg.det(b)) < 1e-12:
                    raise ScenarioError(f"{path}.basis", "basis matrix is singular")
        else:
            breaks = _list(_need(spec, "breaks", path), f"{path}.breaks")
            if len(ex) != len(breaks) + 1:
                raise ScenarioError(f"{path}.exponents",
                                    "need one more exponent row than break points")
            for i, row in enumerate(ex):
                if len(_list(row, f"{path}.exponents[{i}]")) != dim:
                    raise ScenarioError(f"{path}.exponents[{i}]", f"expected {dim} exponents")
                for j, v in enumerate(row):
                    _num(v, f"{path}.exponents[{i}][{j}]")
    elif kind == "table":
        for i, m in enumerate(_list(_need(spec, "matrices", path), f"{path}.matrices")):
            _matrix(m, f"{path}.matrices[{i}]", dim)
    elif kind in ("spike", "paper-example"):
        if dim != 1:
            raise ScenarioError("dim", "the spike system is scalar (dim 1)")
    else:
        raise ScenarioError(f"{path}.kind", f"unknown system kind {kind!r}")


def _check_projections(spec, dim):
    path = "projections"
    spec = _obj(spec, path)
    kind = _need(spec, "kind", path)
    if kind == "coordinate":
        st = _list(_need(spec, "stable", path), f"{path}.stable")
        for i, v in enumerate(st):
            v = _int(v, f"{path}.stable[{i}]", 0)
            if v >= dim:
                raise ScenarioError(f"{path}.stable[{i}]", f"axis {v} out of range")
    elif kind in ("matrix", "pull-back"):
        p = _matrix(_need(spec, "matrix", path), f"{path}.matrix", dim)
        if np.max(np.abs(p @ p - p)) > 1e-10:
            raise ScenarioError(f"{path}.matrix", "matrix is not a projection")
    else:
        raise ScenarioError(f"{path}.kind", f"unknown projection kind {kind!r}")


def _check_perturbation(spec, dim, rates):
    path = "perturbation"
    spec = _obj(spec, path)
    kind = _need(spec, "kind", path)
    if "rate" in spec and spec["rate"] not in rates:
        raise ScenarioError(f"{path}.rate", f"no rate named {spec['rate']!r}")
    if kind in ("sin-cos", "sine"):
        spec["amplitude"] = _num(_need(spec, "amplitude", path), f"{path}.amplitude")
        if kind == "sin-cos" and dim != 2:
            raise ScenarioError(f"{path}.kind", "sin-cos needs dim 2")
    elif kind == "constant":
        spec["value"] = _num(_need(spec, "value", path), f"{path}.value")
    elif kind != "zero":
        raise ScenarioError(f"{path}.kind", f"unknown perturbation kind {kind!r}")


def _check_norms(spec, dim):
    spec = _obj(spec, "norms")
    kind = _need(spec, "kind", "norms")
    if kind == "weighted":
        w = _matrix(_need(spec, "matrix", "norms"), "norms.matrix", dim)
        if abs(np.linalg.det(w)) < 1e-12:
            raise ScenarioError("norms.matrix", "weight matrix is singular")
    elif kind != "euclidean":
        raise ScenarioError("norms.kind", f"unknown norm kind {kind!r}")


def parse_scenario(data: Any, source: str = "<memory>") -> Scenario:
    """Validate a decoded scenario; errors name the offending field path."""
    data = _obj(data, "$")
    extra = sorted(set(data) - _TOP_FIELDS)
    if extra:
        raise ScenarioError(extra[0], "unknown field")
    data = json.loads(json.dumps(data))  # private copy
    dim = _int(_need(data, "dim", "$"), "dim", 1)
    horizon = _int(_need(data, "horizon", "$"), "horizon", 2)
    seed = _int(data.get("seed", 0), "seed", 0)
    rates_spec = _obj(data.get("rates", {}), "rates")
    rates = {name: build_rate(spec, f"rates.{name}") for name, spec in rates_spec.items()}
    _check_system(_need(data, "system", "$"), dim, rates)
    if data.get("projections") is not None:
        _check_projections(data["projections"], dim)
    if data.get("norms") is not None:
        _check_norms(data["norms"], dim)
    if data.get("perturbation") is not None:
        _check_perturbation(data["perturbation"], dim, rates)
    tol = dict(DEFAULT_TOLERANCES)
    for key, v in _obj(data.get("tolerances", {}), "tolerances").items():
        if key not in DEFAULT_TOLERANCES:
            raise ScenarioError(f"tolerances.{key}", "unknown tolerance")
        tol[key] = _num(v, f"tolerances.{key}", positive=True)
    return Scenario(data, dim, horizon, seed, rates, tol,
                    str(data.get("name", Path(source).stem)), source)


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file (JSON, UTF-8)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read file: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_scenario(data, str(path))


def bundled_names() -> list[str]:
    """Names of the scenarios shipped with the package."""
    root = resources.files("mudich") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled(name: str) -> Scenario:
    """Load a bundled scenario by name."""
    root = resources.files("mudich") / "scenarios"
    res = root / f"{name}.json"
    if not res.is_file():
        raise ScenarioError("scenario", f"no bundled scenario {name!r}")
    return parse_scenario(json.loads(res.read_text(encoding="utf-8")), f"{name}.json")
