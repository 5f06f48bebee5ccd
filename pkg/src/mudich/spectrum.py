"""Dichotomy spectra on a finite horizon.

The spectrum is the set of shifts ``lambda`` for which the shifted system
``(mu_{n+1}/mu_n)**(-lambda) A_n`` has no dichotomy.  On a finite horizon
a shift counts as resolvent when, for a projection obtained from a
singular-value split, every window of log-length at least ``min_window``
decays on the stable side (and grows on the unstable side) at a rate of at
least ``tolerance``.  These worst-case finite-time rates are computed for
the unshifted system once; a shift only moves them by ``lambda``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dichotomy import check_bounded_growth, log_points
from .errors import MudichError
from .growth import GrowthRate
from .system import EvolutionFamily, NormFamily, OperatorSequence

__all__ = [
    "SpectrumEstimate",
    "shift_system",
    "SplitScanner",
    "mu_spectrum",
    "ed_spectrum_rescaled",
    "hausdorff",
    "check_resonance",
    "check_band_gap",
    "NoHyperbolicSplitting",
    "compare_spectra",
]

BISECTION_STEPS = 12
GAP_THRESHOLD = 10.0
RESONANCE_CAP = 1_000_000


class NoHyperbolicSplitting(MudichError, ValueError):
    """Zero lies inside a spectral interval."""


@dataclass
class SpectrumEstimate:
    """Spectral intervals with the per-shift verdicts that produced them."""

    intervals: list
    grid: list
    verdicts: list
    margins: list
    resolution: float
    horizon: int
    method: str
    tolerance: float
    min_window: float
    dim: int
    open_ends: list = field(default_factory=list)

    def as_dict(self) -> dict:
        def fin(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
        return {
            "method": self.method,
            "intervals": [[float(a), float(b)] for a, b in self.intervals],
            "grid": [float(g) for g in self.grid],
            "verdicts": ["resolvent" if v else "spectrum" for v in self.verdicts],
            "margins": [fin(float(m)) for m in self.margins],
            "resolution": self.resolution,
            "horizon": self.horizon,
            "tolerance": self.tolerance,
            "min_window": self.min_window,
            "dim": self.dim,
            "open_ends": self.open_ends,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumEstimate":
        return cls(
            intervals=[tuple(map(float, iv)) for iv in d["intervals"]],
            grid=list(d.get("grid", [])),
            verdicts=[v == "resolvent" for v in d.get("verdicts", [])],
            margins=[float(m) for m in d.get("margins", [])],
            resolution=float(d.get("resolution", 0.0)),
            horizon=int(d.get("horizon", 0)),
            method=d.get("method", "given"),
            tolerance=float(d.get("tolerance", 0.0)),
            min_window=float(d.get("min_window", 0.0)),
            dim=int(d.get("dim", len(d["intervals"]))),
            open_ends=list(d.get("open_ends", [])),
        )


def shift_system(ops: OperatorSequence | EvolutionFamily, rate: GrowthRate,
                 lam: float) -> OperatorSequence:
    """``n -> (mu_{n+1}/mu_n)**(-lam) A_n``."""
    ops = ops.ops if isinstance(ops, EvolutionFamily) else ops
    lam = float(lam)
    return ops.map(lambda n, a: (rate.value(n + 1) / rate.value(n)) ** (-lam) * a,
                   name=f"{ops.name} shifted by {lam:g}")


def _log(v):
    with np.errstate(divide="ignore"):
        return np.log(np.where(v > 1e-300, v, 0.0))


class SplitScanner:
    """Per-shift dichotomy test for one system.

    Parameters
    ----------
    fam : EvolutionFamily
        Invertible system.
    rate : GrowthRate
        Rate of the dichotomy being tested.
    horizon : int
        Last time index used.
    min_window : float, optional
        Minimal log-length ``log(mu_late/mu_early)`` of the windows whose
        rates are inspected; defaults to a third of the available range.
    gap : float
        Singular-value ratio needed to accept a split into stable and
        unstable directions.
    norms : NormFamily, optional
        Weighted norms (Euclidean by default).
    start : int
        First time index.
    num : int
        Density of the logarithmic early-time and offset sets.
    """

    def __init__(self, fam: EvolutionFamily, rate: GrowthRate, horizon: int,
                 min_window: float | None = None, gap: float = GAP_THRESHOLD,
                 norms: NormFamily | None = None, start: int = 1, num: int = 40,
                 cond_cap: float = 1e8):
        if not fam.ops.invertible:
            raise ValueError("spectral scans need an invertible system")
        self.fam, self.rate, self.horizon = fam, rate, int(horizon)
        self.dim = d = fam.dim
        self.gap = float(gap)
        self.start = int(start)
        hz = self.horizon
        log_mu = lambda n: math.log(rate.value(n))
        span = log_mu(hz) - log_mu(self.start)
        if span <= 0:
            raise ValueError("horizon too short for a spectral scan")
        self.min_window = float(span / 3.0 if min_window is None else min_window)
        emax = self.start
        while emax + 1 < hz and log_mu(hz) - log_mu(emax + 1) >= self.min_window:
            emax += 1
        if log_mu(hz) - log_mu(self.start) < self.min_window:
            raise ValueError(
                f"no window of log-length {self.min_window:g} fits in the horizon")
        earlies = log_points(self.start, emax, num)
        self.earlies = earlies

        # singular-value splits of the windows reaching the horizon
        self.chis, self.vs, self.lens = [], [], []
        for e in earlies:
            phi = fam.transition(hz, int(e))
            _, s, vt = np.linalg.svd(phi)
            length = log_mu(hz) - log_mu(int(e))
            order = np.argsort(s)
            self.chis.append(np.log(s[order]) / length)
            self.vs.append(vt[order].T)          # columns: most contracted first
            self.lens.append(length)
        self.chis = np.asarray(self.chis)
        self.lens = np.asarray(self.lens)

        # window pairs of log-length >= min_window
        pairs = []
        for e in earlies:
            offs = np.concatenate([log_points(1, hz - int(e), num), [hz - int(e)]])
            for o in np.unique(offs):
                late = int(e + o)
                if log_mu(late) - log_mu(int(e)) >= self.min_window * (1 - 1e-12):
                    pairs.append((late, int(e)))
        self.pairs = np.asarray(sorted(set(pairs)), dtype=int)
        self.x = np.array([log_mu(l) - log_mu(e) for l, e in self.pairs])

        # unstable directions transported from the first early time
        v0 = self.vs[0]
        self._data = {}
        for s in range(d + 1):
            self._data[s] = self._side_logs(s, v0, norms, cond_cap)

    def _projection(self, s: int, i: int, v0: np.ndarray, cond_cap: float):
        d = self.dim
        if s == 0:
            return np.zeros((d, d))
        if s == d:
            return np.eye(d)
        e = int(self.earlies[i])
        stable = self.vs[i][:, :s]
        unstable = self.fam.transition(e, int(self.earlies[0])) @ v0[:, s:]
        unstable, _ = np.linalg.qr(unstable)
        m = np.hstack([stable, unstable])
        if np.linalg.cond(m) > cond_cap:
            return None
        sel = np.diag([1.0] * s + [0.0] * (d - s))
        return m @ sel @ np.linalg.inv(m)

    def _side_logs(self, s, v0, norms, cond_cap):
        d = self.dim
        projs = [self._projection(s, i, v0, cond_cap) for i in range(len(self.earlies))]
        where = {int(e): i for i, e in enumerate(self.earlies)}
        ys = np.full(len(self.pairs), -np.inf)
        yu = np.full(len(self.pairs), -np.inf)
        bad = np.zeros(len(self.earlies), dtype=bool)
        for j, (l, e) in enumerate(self.pairs):
            i = where[int(e)]
            p = projs[i]
            if p is None:
                bad[i] = True
                continue
            phi = self.fam.transition(int(l), int(e))
            fwd = phi @ p
            bwd = (np.eye(d) - p) @ self.fam.backward_transition(int(e), int(l))
            if norms is not None and norms.weight(1) is not None:
                fwd = norms.weight(int(l)) @ fwd @ norms.weight_inv(int(e))
                bwd = norms.weight(int(e)) @ bwd @ norms.weight_inv(int(l))
            ys[j] = np.linalg.norm(fwd, 2)
            yu[j] = np.linalg.norm(bwd, 2)
        return _log(np.where(np.isfinite(ys), ys, 0.0)), \
            _log(np.where(np.isfinite(yu), yu, 0.0)), bad

    def rates(self, lam: float) -> tuple[float, float, int | None]:
        """Worst-case stable and unstable rates of the shift by ``lam``.

        Returns ``(stable_rate, unstable_rate, rank)``; rank is ``None``
        (and the rates ``-inf``) when no coherent split exists.
        """
        lam = float(lam)
        ranks = np.sum(self.chis < lam, axis=1)
        s = int(ranks[0])
        if np.any(ranks != s):
            return -math.inf, -math.inf, None
        if 0 < s < self.dim:
            sep = (self.chis[:, s] - self.chis[:, s - 1]) * self.lens
            if np.any(sep < math.log(self.gap)):
                return -math.inf, -math.inf, None
        ys, yu, bad = self._data[s]
        if np.any(bad):
            return -math.inf, -math.inf, None
        x = self.x
        rs = math.inf
        if s > 0:
            fin = np.isfinite(ys)
            rs = lam - float(np.max(ys[fin] / x[fin])) if np.any(fin) else math.inf
        ru = math.inf
        if s < self.dim:
            fin = np.isfinite(yu)
            ru = -lam - float(np.max(yu[fin] / x[fin])) if np.any(fin) else math.inf
        return rs, ru, s

    def margin(self, lam: float, tolerance: float) -> float:
        rs, ru, _ = self.rates(lam)
        return min(rs, ru) - tolerance


def _scan(scanner: SplitScanner, lo: float, hi: float, step: float,
          tolerance: float, method: str) -> SpectrumEstimate:
    n = int(round((hi - lo) / step))
    grid = [lo + i * step for i in range(n + 1)]
    margins = [scanner.margin(g, tolerance) for g in grid]
    verdicts = [m >= 0 for m in margins]

    def refine(a, b):
        """Boundary between resolvent ``a`` and spectral ``b``; returns the
        spectral-side limit."""
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (a + b)
            if scanner.margin(mid, tolerance) >= 0:
                a = mid
            else:
                b = mid
        return b

    intervals, open_ends = [], []
    i = 0
    while i <= n:
        if verdicts[i]:
            i += 1
            continue
        j = i
        while j + 1 <= n and not verdicts[j + 1]:
            j += 1
        left = grid[i] if i == 0 else refine(grid[i - 1], grid[i])
        right = grid[j] if j == n else refine(grid[j + 1], grid[j])
        if i == 0:
            open_ends.append([len(intervals), "left"])
        if j == n:
            open_ends.append([len(intervals), "right"])
        intervals.append((left, right))
        i = j + 1
    return SpectrumEstimate(intervals, grid, verdicts, margins, step,
                            scanner.horizon, method, tolerance,
                            scanner.min_window, scanner.dim, open_ends)


def _default_range(fam, rate, horizon, norms):
    bg = check_bounded_growth(fam, rate, norms, horizon)
    if not bg.finite:
        raise MudichError("bounded-growth audit failed: non-finite growth constant")
    return bg


def mu_spectrum(fam: EvolutionFamily, rate: GrowthRate,
                lambda_range: tuple[float, float] | None = None,
                grid_step: float = 0.05, horizon: int | None = None,
                tolerance: float | None = None, min_window: float | None = None,
                norms: NormFamily | None = None, gap: float = GAP_THRESHOLD) -> SpectrumEstimate:
    """Growth-rate dichotomy spectrum by direct scanning of shifts.

    Parameters
    ----------
    lambda_range : (lo, hi), optional
        Scanned shifts; defaults to ``+-(a + 1)`` with ``a`` the fitted
        bounded-growth exponent.
    grid_step : float
        Grid spacing; interval ends are refined by bisection.
    tolerance : float, optional
        Minimal worst-case rate for a shift to count as resolvent;
        defaults to ``grid_step / 2`` so that a spectral point always
        covers at least one grid node.
    """
    hz = horizon if horizon is not None else fam.horizon
    if hz is None:
        raise ValueError("a finite horizon is required")
    if not fam.ops.invertible:
        raise MudichError("bounded-growth audit failed: system is not invertible")
    bg = _default_range(fam, rate, hz, norms)
    if lambda_range is None:
        r = math.ceil((bg.a + 1.0) / grid_step) * grid_step
        lambda_range = (-r, r)
    tol = grid_step / 2 if tolerance is None else tolerance
    scanner = SplitScanner(fam, rate, hz, min_window, gap, norms)
    return _scan(scanner, float(lambda_range[0]), float(lambda_range[1]),
                 grid_step, tol, "mu-direct")


def ed_spectrum_rescaled(rs, lambda_range: tuple[float, float] | None = None,
                         grid_step: float = 0.05, tolerance: float | None = None,
                         min_window: float | None = None, start: int = 2,
                         gap: float = GAP_THRESHOLD) -> SpectrumEstimate:
    """Exponential-dichotomy spectrum of the rescaled system ``e**(-lambda) Q_n``.

    ``rs`` must be rescaled to the exponential rate.  ``start`` lets the
    scan skip the first rescaled steps.
    """
    fam, eta = rs.family, rs.eta
    hz = rs.horizon
    if lambda_range is None:
        bg = _default_range(rs.base, rs.mu, rs.base_horizon, None)
        r = math.ceil((bg.a + 1.0) / grid_step) * grid_step
        lambda_range = (-r, r)
    tol = grid_step / 2 if tolerance is None else tolerance
    scanner = SplitScanner(fam, eta, hz, min_window, gap, rs.norms, start=start)
    return _scan(scanner, float(lambda_range[0]), float(lambda_range[1]),
                 grid_step, tol, "ed-rescaled")


def hausdorff(a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf

    def dist_point(p, ivs):
        return min(0.0 if lo <= p <= hi else min(abs(p - lo), abs(p - hi))
                   for lo, hi in ivs)

    def one_sided(x, y):
        # the farthest point of a union of intervals from another union is an
        # endpoint or a midpoint between neighbouring intervals of y
        cands = [p for iv in x for p in iv]
        ends = sorted(p for iv in y for p in iv)
        mids = [(u + v) / 2 for u, v in zip(ends, ends[1:])]
        for lo, hi in x:
            cands += [m for m in mids if lo <= m <= hi]
        return max(dist_point(p, y) for p in cands)

    return max(one_sided(a, b), one_sided(b, a))


def _intervals(spec) -> list[tuple[float, float]]:
    if isinstance(spec, SpectrumEstimate):
        ivs = spec.intervals
    elif isinstance(spec, dict):
        ivs = spec["intervals"]
    else:
        ivs = spec
    out = sorted((float(a), float(b)) for a, b in ivs)
    for a, b in out:
        if a > b:
            raise ValueError(f"malformed interval [{a}, {b}]")
    for (_, b1), (a2, _) in zip(out, out[1:]):
        if not b1 < a2:
            raise ValueError("spectral intervals must be disjoint")
    return out


def _lattice(r: int, t: int) -> Iterable[tuple[int, ...]]:
    """All ``q`` in ``N_0^r`` with ``2 <= |q| <= t``."""
    def rec(prefix, left, slots):
        if slots == 1:
            for v in range(left + 1):
                yield prefix + (v,)
            return
        for v in range(left + 1):
            yield from rec(prefix + (v,), left - v, slots - 1)

    for q in rec((), t, r):
        if sum(q) >= 2:
            yield q


def check_resonance(spec, t: int, cap: int = RESONANCE_CAP) -> list[dict]:
    """Resonances ``[a_i, b_i]`` meeting ``[<a, q>, <b, q>]`` with ``2 <= |q| <= t``.

    Returns a list of violations ``{"i": i, "q": q}`` (``i`` counted from 1);
    an empty list means the spectrum is non-resonant up to order ``t``.
    """
    ivs = _intervals(spec)
    r, t = len(ivs), int(t)
    if t < 2 or r == 0:
        return []
    count = math.comb(r + t, r) - 1 - r
    if count > cap:
        raise ValueError(f"{count} lattice points exceed the enumeration cap {cap}")
    a = np.array([iv[0] for iv in ivs])
    b = np.array([iv[1] for iv in ivs])
    out = []
    for q in _lattice(r, t):
        qa = float(np.dot(a, q))
        qb = float(np.dot(b, q))
        for i in range(r):
            if a[i] <= qb and qa <= b[i]:
                out.append({"i": i + 1, "q": list(q)})
    return out


def check_band_gap(spec) -> dict:
    """Gap and band-width conditions for a hyperbolic spectrum.

    With ``b_k < 0 < a_{k+1}`` the conditions are
    ``a_{k+1} - b_k > max(b_r, -a_1)``, ``b_i - a_i <= -b_k`` for ``i <= k``
    and ``b_i - a_i <= a_{k+1}`` for ``i > k``.  Conditions that refer to a
    missing stable or unstable part hold vacuously.

    Raises
    ------
    NoHyperbolicSplitting
        If 0 lies in a spectral interval.
    """
    ivs = _intervals(spec)
    for a, b in ivs:
        if a <= 0.0 <= b:
            raise NoHyperbolicSplitting(f"no hyperbolic splitting: 0 lies in [{a}, {b}]")
    k = sum(1 for _, b in ivs if b < 0)
    widths = [b - a for a, b in ivs]
    has_s, has_u = k > 0, k < len(ivs)
    if has_s and has_u:
        gap_ok = ivs[k][0] - ivs[k - 1][1] > max(ivs[-1][1], -ivs[0][0])
    else:
        gap_ok = True
    band_s = all(w <= -ivs[k - 1][1] for w in widths[:k]) if has_s else True
    band_u = all(w <= ivs[k][0] for w in widths[k:]) if has_u else True
    return {"gap_ok": bool(gap_ok), "band_ok_stable": bool(band_s),
            "band_ok_unstable": bool(band_u), "k_split": k,
            "ok": bool(gap_ok and band_s and band_u)}


def compare_spectra(rs, lambda_range: tuple[float, float] | None = None,
                    grid_step: float = 0.05, min_window: float | None = None,
                    start: int = 2, gap: float = GAP_THRESHOLD) -> dict:
    """Growth-rate spectrum of the base and exponential spectrum of its rescaling.

    Both scans use the same window length: by default a third of the
    shorter of the two available log-ranges.  Returns the two estimates
    and their Hausdorff distance.
    """
    fam, mu = rs.base, rs.mu
    if min_window is None:
        span_mu = math.log(mu.value(rs.base_horizon)) - math.log(mu.value(1))
        span_ed = math.log(rs.eta.value(rs.horizon)) - math.log(rs.eta.value(start))
        min_window = min(span_mu, span_ed) / 3.0
    if lambda_range is None:
        bg = _default_range(fam, mu, rs.base_horizon, None)
        r = math.ceil((bg.a + 1.0) / grid_step) * grid_step
        lambda_range = (-r, r)
    est_mu = mu_spectrum(fam, mu, lambda_range, grid_step, rs.base_horizon,
                         min_window=min_window, norms=rs.base_norms, gap=gap)
    est_ed = ed_spectrum_rescaled(rs, lambda_range, grid_step, min_window=min_window,
                                  start=start, gap=gap)
    return {"mu": est_mu, "ed": est_ed,
            "hausdorff": hausdorff(est_mu.intervals, est_ed.intervals),
            "min_window": float(min_window)}
