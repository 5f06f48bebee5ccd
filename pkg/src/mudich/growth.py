"""Growth rates: positive, strictly increasing sequences starting at 1.

A growth rate supplies the time scale against which decay and growth of
a linear cocycle are measured.  Besides the raw values the module offers
the piecewise-linear interpolant through the nodes ``(n, mu_n)``, its
closed-form inverse, and the audits needed by the rescaling machinery.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GrowthRateError, HorizonError

__all__ = [
    "GrowthRate",
    "RateAudit",
    "polynomial",
    "exponential",
    "geometric",
    "table",
]

_RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class RateAudit:
    """Outcome of :meth:`GrowthRate.validate`."""

    horizon: int
    theta: float
    max_ratio: float
    argmax_ratio: int
    max_interp_ratio: float
    argmax_interp: float
    ratio_ok: bool
    interp_ok: bool
    grid_points: int = 0

    @property
    def ok(self) -> bool:
        return self.ratio_ok and self.interp_ok

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "theta": self.theta,
            "max_ratio": self.max_ratio,
            "argmax_ratio": self.argmax_ratio,
            "max_interp_ratio": self.max_interp_ratio,
            "argmax_interp": self.argmax_interp,
            "ratio_ok": self.ratio_ok,
            "interp_ok": self.interp_ok,
            "grid_points": self.grid_points,
            "ok": self.ok,
        }


class GrowthRate:
    """Lazily evaluated, memoised growth rate.

    Parameters
    ----------
    generator : callable
        Maps ``n >= 0`` to ``mu_n``.  Must return 1 at ``n = 0``.
    theta : float
        Declared bound on consecutive ratios ``mu_{n+1} / mu_n``.
    name : str
        Label used in reports.
    limit : int, optional
        Largest index the generator can serve (tables).

    Notes
    -----
    Values are validated as they are generated; the first bad index is
    reported in the error message.
    """

    def __init__(self, generator: Callable[[int], float], theta: float,
                 name: str = "custom", limit: int | None = None,
                 params: dict | None = None):
        theta = float(theta)
        if not (theta >= 1.0 and math.isfinite(theta)):
            raise GrowthRateError(f"theta must be a finite number >= 1, got {theta}")
        self._gen = generator
        self.theta = theta
        self.name = name
        self.limit = limit
        self.params = dict(params or {})
        self._values: list[float] = []

    def __repr__(self):
        return f"GrowthRate({self.name!r}, theta={self.theta:g})"

    # -- raw values -------------------------------------------------------

    def _extend(self, n: int) -> None:
        if self.limit is not None and n > self.limit:
            raise HorizonError(
                f"rate {self.name!r} is only tabulated up to index {self.limit}",
                largest=self.limit)
        vals = self._values
        while len(vals) <= n:
            i = len(vals)
            try:
                v = float(self._gen(i))
            except OverflowError:
                v = math.inf
            if not math.isfinite(v):
                raise GrowthRateError(f"non-finite rate value at index {i}")
            if i == 0 and v != 1.0:
                raise GrowthRateError(f"rate must start at 1 (index 0 gives {v!r})")
            if v <= 0.0:
                raise GrowthRateError(f"non-positive rate value {v!r} at index {i}")
            if i > 0 and not v > vals[-1]:
                raise GrowthRateError(
                    f"rate not strictly increasing at index {i}: "
                    f"{vals[-1]!r} -> {v!r}")
            vals.append(v)

    def value(self, n: int) -> float:
        """Return ``mu_n`` for an integer ``n >= 0``."""
        n = int(n)
        if n < 0:
            raise ValueError(f"rate index must be >= 0, got {n}")
        if n >= len(self._values):
            self._extend(n)
        return self._values[n]

    def values(self, start: int, stop: int) -> np.ndarray:
        """Array of ``mu_n`` for ``start <= n < stop``."""
        if stop > 0:
            self.value(stop - 1)
        return np.asarray(self._values[start:stop], dtype=float)

    def increment(self, n: int) -> float:
        """Forward difference ``mu_{n+1} - mu_n``."""
        return self.value(n + 1) - self.value(n)

    def log_increment(self, n: int) -> float:
        """Relative increment ``(mu_{n+1} - mu_n) / mu_n``."""
        return self.increment(n) / self.value(n)

    def ratio(self, m: int, k: int) -> float:
        """``mu_m / mu_k``."""
        return self.value(m) / self.value(k)

    # -- interpolation ----------------------------------------------------

    def interp(self, t: float) -> float:
        """Piecewise-linear interpolant through the nodes ``(n, mu_n)``."""
        t = float(t)
        if t < 0:
            raise ValueError(f"interpolation argument must be >= 0, got {t}")
        n = int(math.floor(t))
        lo = self.value(n)
        if t == n:
            return lo
        return lo + (t - n) * (self.value(n + 1) - lo)

    def interp_inv(self, s: float) -> float:
        """Inverse of :meth:`interp`; exact integers at the nodes.

        Raises
        ------
        ValueError
            If ``s < 1`` (outside the range of the interpolant).
        """
        s = float(s)
        if not s >= 1.0:
            raise ValueError(f"inverse interpolation needs s >= 1, got {s}")
        if not math.isfinite(s):
            raise ValueError("inverse interpolation needs a finite argument")
        # extend the (contiguous) cache one node at a time until it brackets s
        vals = self._values
        if not vals:
            self.value(0)
        while vals[-1] <= s:
            n = len(vals)
            if self.limit is not None and n > self.limit:
                raise HorizonError(
                    f"rate {self.name!r} never exceeds {s} within its table",
                    largest=self.limit)
            self._extend(n)
        j = bisect.bisect_right(self._values, s) - 1
        lo = self._values[j]
        if lo == s:
            return float(j)
        return j + (s - lo) / (self._values[j + 1] - lo)

    # -- audits -----------------------------------------------------------

    def validate(self, horizon: int, grid: int = 1000) -> RateAudit:
        """Check the ratio bounds up to ``horizon``.

        Consecutive ratios ``mu_{n+1}/mu_n`` for ``n < horizon`` are
        compared with ``theta``; the interpolant ratio
        ``interp(t+1)/interp(t)`` on a grid of ``t`` in ``[0, horizon-1]``
        is compared with ``theta**2``.
        """
        horizon = int(horizon)
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        mu = self.values(0, horizon + 1)
        ratios = mu[1:] / mu[:-1]
        i = int(np.argmax(ratios))
        ts = np.unique(np.concatenate([
            np.linspace(0.0, horizon - 1, grid),
            np.arange(horizon, dtype=float),
        ]))

        def lin(t):
            k = np.minimum(np.floor(t).astype(int), horizon - 1)
            return mu[k] + (t - k) * (mu[k + 1] - mu[k])

        iratio = lin(ts + 1.0) / lin(ts)
        j = int(np.argmax(iratio))
        th = self.theta
        return RateAudit(
            horizon=horizon,
            theta=th,
            max_ratio=float(ratios[i]),
            argmax_ratio=i,
            max_interp_ratio=float(iratio[j]),
            argmax_interp=float(ts[j]),
            ratio_ok=bool(ratios[i] <= th * (1 + _RATIO_SLACK)),
            interp_ok=bool(iratio[j] <= th * th * (1 + _RATIO_SLACK)),
            grid_points=int(len(ts)),
        )

    def log_sum_bound(self, n: int, m: int) -> tuple[float, float]:
        """Sum of relative increments over ``[n, m)`` and its log bound.

        Returns
        -------
        (total, bound) : tuple of float
            ``sum_{j=n}^{m-1} (mu_{j+1}-mu_j)/mu_j`` and
            ``theta * log(mu_m / mu_n)``.
        """
        if m < n:
            raise ValueError("need m >= n")
        mu = self.values(n, m + 1)
        total = float(np.sum(np.diff(mu) / mu[:-1])) if m > n else 0.0
        bound = self.theta * math.log(mu[-1] / mu[0])
        return total, bound

    def describe(self) -> dict:
        d = {"kind": self.name, "theta": self.theta}
        d.update(self.params)
        return d


# -- built-in rates -------------------------------------------------------


def polynomial(theta: float = 2.0) -> GrowthRate:
    """``mu_n = n + 1``; the largest ratio is 2 (at ``n = 0``)."""
    return GrowthRate(lambda n: n + 1.0, theta, "polynomial")


def exponential(theta: float = math.e) -> GrowthRate:
    """``mu_n = e**n``."""
    return GrowthRate(lambda n: math.exp(n), theta, "exponential")


def geometric(h: float, theta: float | None = None) -> GrowthRate:
    """``mu_n = h**n`` for ``h > 1``."""
    h = float(h)
    if not h > 1.0:
        raise GrowthRateError(f"geometric rate needs h > 1, got {h}")
    return GrowthRate(lambda n: h ** n, h if theta is None else theta,
                      "geometric", params={"h": h})


def table(values: Sequence[float], theta: float) -> GrowthRate:
    """Rate given by an explicit finite table ``values[n] = mu_n``."""
    vals = [float(v) for v in values]
    if not vals:
        raise GrowthRateError("empty rate table")
    rate = GrowthRate(lambda n: vals[n], theta, "table", limit=len(vals) - 1)
    rate.value(len(vals) - 1)  # validate eagerly
    return rate
