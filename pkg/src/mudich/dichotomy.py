"""Numerical certificates for ordinary, exponential and growth-rate dichotomies.

All certificates are finite-horizon statements.  A fit is sampled on a
grid of window pairs ``(late, early)`` with the early times on a
logarithmic set and the window lengths on logarithmic offsets.  The
*residual* of a certificate measures how much the constant calibrated on
the first half of the horizon has to grow to cover the whole horizon;
a genuine dichotomy keeps it near zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConditionError, SingularRestrictionError
from .growth import GrowthRate, exponential
from .system import (EvolutionFamily, NormFamily, ProjectionFamily,
                     check_invariance, image_basis, sample_directions)

__all__ = [
    "DichotomyCertificate",
    "SideFit",
    "BoundedGrowth",
    "pair_grid",
    "check_ordinary",
    "fit_mu",
    "check_bounded_growth",
    "pull_back_projections",
    "AdaptedNorms",
    "build_adapted_norms",
]

MAX_PAIRS = 20_000
INVARIANCE_TOL = 1e-8
SAMPLE_SEED = 20240611
N_RANDOM_SAMPLES = 8


def log_points(lo: int, hi: int, num: int) -> np.ndarray:
    """About ``num`` integers in ``[lo, hi]``, logarithmically spaced."""
    if hi < lo:
        return np.zeros(0, dtype=int)
    if hi - lo + 1 <= num:
        return np.arange(lo, hi + 1)
    pts = np.geomspace(1.0, hi - lo + 1.0, num) + (lo - 1)
    pts = np.unique(np.round(pts).astype(int))
    return pts[(pts >= lo) & (pts <= hi)]


def pair_grid(horizon: int, start: int = 1, num: int = 48,
              max_pairs: int = MAX_PAIRS, early_max: int | None = None) -> np.ndarray:
    """Window pairs ``(late, early)`` with ``start <= early <= late <= horizon``.

    Early times lie on a logarithmic set, window lengths on logarithmic
    offsets (including the window that ends at the horizon).  Small
    horizons use every pair.
    """
    horizon, start = int(horizon), int(start)
    emax = horizon if early_max is None else min(int(early_max), horizon)
    n = emax - start + 1
    if n <= 0:
        return np.zeros((0, 2), dtype=int)
    span = horizon - start + 1
    if n * span <= 2 * max_pairs and span <= 4 * num:
        out = [(l, e) for e in range(start, emax + 1) for l in range(e, horizon + 1)]
        return np.asarray(out, dtype=int)
    earlies = log_points(start, emax, num)
    out = set()
    for e in earlies:
        offs = np.concatenate([[0], log_points(1, horizon - e, num), [horizon - e]])
        for o in np.unique(offs):
            if o >= 0:
                out.add((int(e + o), int(e)))
    pairs = np.asarray(sorted(out, key=lambda p: (p[1], p[0])), dtype=int)
    if len(pairs) > max_pairs:
        idx = np.linspace(0, len(pairs) - 1, max_pairs).round().astype(int)
        pairs = pairs[np.unique(idx)]
    return pairs


def _finite_dict(d: dict) -> dict:
    return {k: (v if not isinstance(v, float) or math.isfinite(v) else
                ("inf" if v > 0 else "-inf" if v < 0 else "nan"))
            for k, v in d.items()}


@dataclass
class SideFit:
    """Power-law fit ``ratio <= N * (rate ratio)**(-nu)`` for one side."""

    side: str
    nu: float
    N: float
    intercept: float
    residual: float
    points: int
    trivial: bool = False

    def as_dict(self) -> dict:
        return _finite_dict({
            "side": self.side, "nu": self.nu, "N": self.N,
            "intercept": self.intercept, "residual": self.residual,
            "points": self.points, "trivial": self.trivial,
        })


@dataclass
class DichotomyCertificate:
    """Finite-horizon dichotomy verdict with fitted constants.

    ``verdict`` is ``True`` exactly when no structural check failed
    (``cause is None``), the residual is within ``tolerance`` and, for
    growth-rate fits, every non-trivial side decays at a rate of at least
    ``nu_min``.
    """

    kind: str
    constants: dict
    horizon: int
    residual: float
    tolerance: float
    verdict: bool
    cause: str | None = None
    grid: dict = field(default_factory=dict)
    seed: int = SAMPLE_SEED
    sides: list = field(default_factory=list)
    invariance_residual: float = 0.0

    def __bool__(self):
        return bool(self.verdict)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "constants": _finite_dict(dict(self.constants)),
            "horizon": self.horizon,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "cause": self.cause,
            "grid": self.grid,
            "seed": self.seed,
            "sides": [s.as_dict() for s in self.sides],
            "invariance_residual": self.invariance_residual,
        }


# -- measurements ---------------------------------------------------------


def _samples_for(p: np.ndarray, dim: int, seed: int) -> np.ndarray:
    basis = image_basis(p).T
    return np.vstack([basis, sample_directions(dim, N_RANDOM_SAMPLES, seed)])


def _op_norms(mats: np.ndarray, norms: NormFamily | None, lates, earlies,
              seed: int, projs=None) -> np.ndarray:
    """Operator norms ``||T||_{early -> late}`` for a stack of matrices."""
    if norms is None or (norms.is_weighted and norms.weight(1) is None):
        return np.linalg.norm(mats, ord=2, axis=(1, 2))
    out = np.empty(len(mats))
    for i, (t, l, e) in enumerate(zip(mats, lates, earlies)):
        samples = None
        if not norms.is_weighted and projs is not None:
            samples = _samples_for(projs[i], t.shape[0], seed)
        out[i] = norms.op_norm(t, int(l), int(e), samples)
    return out


def _forward_stack(fam: EvolutionFamily, pairs: np.ndarray,
                   proj: ProjectionFamily | None) -> np.ndarray:
    mats = np.empty((len(pairs), fam.dim, fam.dim))
    for i, (l, e) in enumerate(pairs):
        t = fam.transition(int(l), int(e))
        mats[i] = t if proj is None else t @ proj(int(e))
    return mats


def _backward_stack(fam: EvolutionFamily, pairs: np.ndarray,
                    proj: ProjectionFamily) -> np.ndarray:
    """``Phi(early, late) (Id - P_late)`` via the kernel-restricted inverse."""
    mats = np.empty((len(pairs), fam.dim, fam.dim))
    eye = np.eye(fam.dim)
    for i, (l, e) in enumerate(pairs):
        if l == e + 1 and fam.ops.invertible:
            # invariant projections: the restricted inverse of one step is A^{-1}(Id - P)
            mats[i] = fam.ops.inverse(int(e)) @ (eye - proj(int(l)))
        else:
            mats[i] = fam.backward_transition(int(e), int(l), restriction=proj)
    return mats


def _log(v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.where(v > 1e-300, v, 0.0))


def _fit_side(side: str, x: np.ndarray, y: np.ndarray, cal: np.ndarray) -> SideFit:
    """Least-squares slope, envelope constant and half-horizon residual."""
    ok = np.isfinite(y)
    if not np.any(ok):
        return SideFit(side, math.inf, 1.0, 0.0, 0.0, 0, trivial=True)
    xs, ys, cs = x[ok], y[ok], cal[ok]
    if np.ptp(xs) <= 0:
        # every non-zero value sits on a zero-length window: nilpotent side
        n_hat = max(1.0, float(np.exp(ys.max())))
        return SideFit(side, math.inf, n_hat, float(ys.max()), 0.0, int(ok.sum()),
                       trivial=True)
    slope, intercept = np.polyfit(xs, ys, 1)
    nu = float(-slope)
    env = ys + nu * xs
    n_hat = float(np.exp(env.max()))
    if np.any(cs):
        n_cal = float(np.exp(env[cs].max()))
        residual = max(0.0, n_hat / n_cal - 1.0)
    else:
        residual = 0.0
    return SideFit(side, nu, n_hat, float(intercept), float(residual), int(ok.sum()))


def _structural_checks(fam, proj, pairs, horizon):
    """Invariance residual and kernel-restriction check; returns (residual, cause)."""
    steps = sorted({int(e) for e in pairs[:, 1] if e < horizon})
    tested = [(e + 1, e) for e in steps] + [tuple(map(int, p)) for p in pairs[::7]]
    inv = check_invariance(fam, proj, tested)
    if inv > INVARIANCE_TOL:
        return inv, "projections not invariant"
    if not fam.ops.invertible:
        for e in steps:
            try:
                fam.backward_transition(e, e + 1, restriction=proj)
            except SingularRestrictionError as exc:
                return inv, f"restriction to Ker P not invertible: {exc}"
    return inv, None


def _grid_info(pairs: np.ndarray) -> dict:
    return {
        "pairs": int(len(pairs)),
        "early_min": int(pairs[:, 1].min()) if len(pairs) else 0,
        "early_max": int(pairs[:, 1].max()) if len(pairs) else 0,
        "late_max": int(pairs[:, 0].max()) if len(pairs) else 0,
    }


def _resolve_horizon(fam: EvolutionFamily, horizon: int | None) -> int:
    hz = horizon if horizon is not None else fam.horizon
    if hz is None:
        raise ValueError("a finite horizon is required")
    if fam.horizon is not None and hz > fam.horizon:
        hz = fam.horizon
    return int(hz)


# -- certificates ---------------------------------------------------------


def check_ordinary(fam: EvolutionFamily, proj: ProjectionFamily,
                   norms: NormFamily | None = None, horizon: int | None = None,
                   cap: float = 1e6, tolerance: float = 0.1,
                   num: int = 48, seed: int = SAMPLE_SEED) -> DichotomyCertificate:
    """Certify an ordinary dichotomy (uniformly bounded forward and backward parts).

    ``K`` is the largest forward ``||Phi(m,k) P_k||`` and backward
    ``||Phi(m,k) (Id - P_k)||`` over the grid plus every single step
    ``(k+1, k)`` up to the horizon.  The residual compares it
    with the same maximum restricted to the first half of the horizon.
    """
    hz = _resolve_horizon(fam, horizon)
    pairs = pair_grid(hz, num=num)
    inv, cause = _structural_checks(fam, proj, pairs, hz)
    grid = _grid_info(pairs)
    if cause is not None:
        return DichotomyCertificate("ordinary", {"K": math.inf}, hz, math.inf,
                                    tolerance, False, cause, grid, seed,
                                    invariance_residual=inv)
    # single steps are scanned exhaustively: one unbounded operator is enough
    # to break a uniform bound and log-spaced grids can miss it
    steps = np.array([(k + 1, k) for k in range(1, hz)], dtype=int).reshape(-1, 2)
    pairs = np.unique(np.vstack([pairs, steps]), axis=0)
    grid["single_steps"] = int(len(steps))
    lates, earlies = pairs[:, 0], pairs[:, 1]
    fwd = _op_norms(_forward_stack(fam, pairs, proj), norms, lates, earlies,
                    seed, [proj(int(e)) for e in earlies])
    bwd = _op_norms(_backward_stack(fam, pairs, proj), norms, earlies, lates,
                    seed, [proj(int(l)) for l in lates])
    both = np.maximum(fwd, bwd)
    k_hat = float(both.max())
    cal = lates <= max(1, hz // 2)
    k_cal = float(both[cal].max()) if np.any(cal) else k_hat
    residual = max(0.0, k_hat / k_cal - 1.0) if k_cal > 0 else 0.0
    finite = math.isfinite(k_hat)
    verdict = finite and k_hat <= cap and residual <= tolerance
    if not finite:
        cause = "non-finite norms"
    elif k_hat > cap:
        cause = f"constant {k_hat:.3g} exceeds cap {cap:.3g}"
    elif residual > tolerance:
        cause = "constant grows with the horizon"
    return DichotomyCertificate(
        "ordinary", {"K": k_hat, "K_forward": float(fwd.max()),
                     "K_backward": float(bwd.max())},
        hz, residual, tolerance, verdict, cause, grid, seed,
        invariance_residual=inv)


def side_measurements(fam: EvolutionFamily, rate: GrowthRate,
                      proj: ProjectionFamily, pairs: np.ndarray,
                      norms: NormFamily | None = None,
                      seed: int = SAMPLE_SEED) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-window lengths and log-norms of the stable and unstable parts.

    Returns ``(x, y_stable, y_unstable)`` where ``x = log(mu_late/mu_early)``,
    ``y_stable = log||Phi(late, early) P_early||`` and
    ``y_unstable = log||Phi(early, late)(Id - P_late)||``.
    """
    lates, earlies = pairs[:, 0], pairs[:, 1]
    mu_l = np.array([rate.value(int(l)) for l in lates])
    mu_e = np.array([rate.value(int(e)) for e in earlies])
    x = np.log(mu_l / mu_e)
    fwd = _op_norms(_forward_stack(fam, pairs, proj), norms, lates, earlies,
                    seed, [proj(int(e)) for e in earlies])
    bwd = _op_norms(_backward_stack(fam, pairs, proj), norms, earlies, lates,
                    seed, [proj(int(l)) for l in lates])
    return x, _log(fwd), _log(bwd)


def fit_mu(fam: EvolutionFamily, rate: GrowthRate | None, proj: ProjectionFamily,
           norms: NormFamily | None = None, horizon: int | None = None,
           tolerance: float = 0.1, nu_min: float = 1e-3, kind: str = "mu",
           num: int = 48, seed: int = SAMPLE_SEED) -> DichotomyCertificate:
    """Fit growth-rate dichotomy constants ``(N, nu)`` on both sides.

    The stable side regresses ``log||Phi(m,k) P_k||`` on
    ``log(mu_m/mu_k)``; ``nu`` is minus the slope and ``N`` the smallest
    constant that makes every sampled pair satisfy the bound.  The
    unstable side does the same for the backward evolution on
    ``Ker P``.  Pass ``rate=None`` (or ``kind="exponential"``) for the
    exponential rate.
    """
    if rate is None:
        rate = exponential()
    hz = _resolve_horizon(fam, horizon)
    pairs = pair_grid(hz, num=num)
    grid = _grid_info(pairs)
    inv, cause = _structural_checks(fam, proj, pairs, hz)
    if cause is not None:
        return DichotomyCertificate(kind, {"N": math.inf, "nu": -math.inf}, hz,
                                    math.inf, tolerance, False, cause, grid, seed,
                                    invariance_residual=inv)
    x, ys, yu = side_measurements(fam, rate, proj, pairs, norms, seed)
    cal = pairs[:, 0] <= max(1, hz // 2)
    sides = [_fit_side("stable", x, ys, cal), _fit_side("unstable", x, yu, cal)]
    residual = max(s.residual for s in sides)
    nu = min(s.nu for s in sides)
    big_n = max(s.N for s in sides)
    slow = [s.side for s in sides if not s.trivial and not s.nu >= nu_min]
    if slow:
        cause = f"{' and '.join(slow)} rate below {nu_min:g}"
    elif residual > tolerance:
        cause = "constant grows with the horizon"
    verdict = cause is None
    return DichotomyCertificate(
        kind, {"N": big_n, "nu": nu, "nu_stable": sides[0].nu,
               "nu_unstable": sides[1].nu, "N_stable": sides[0].N,
               "N_unstable": sides[1].N, "nu_min": nu_min},
        hz, residual, tolerance, verdict, cause, grid, seed, sides, inv)


@dataclass
class BoundedGrowth:
    """Fitted bound ``||Phi(m,k)|| <= K (mu_max/mu_min)**a`` in both directions."""

    K: float
    a: float
    a_forward: float
    a_backward: float
    horizon: int
    finite: bool

    def __iter__(self):
        return iter((self.K, self.a))

    def as_dict(self) -> dict:
        return _finite_dict({"K": self.K, "a": self.a, "a_forward": self.a_forward,
                             "a_backward": self.a_backward, "horizon": self.horizon,
                             "finite": self.finite})


def check_bounded_growth(fam: EvolutionFamily, rate: GrowthRate,
                         norms: NormFamily | None = None,
                         horizon: int | None = None, num: int = 48) -> BoundedGrowth:
    """Fit ``(K, a)`` such that both evolution directions grow at most like a power.

    ``a`` is the largest growth exponent seen over the longest half of
    the windows (never negative); ``K`` is the envelope constant for that
    exponent over all windows.  Non-invertible systems only get the
    forward fit.
    """
    hz = _resolve_horizon(fam, horizon)
    pairs = pair_grid(hz, num=num)
    lates, earlies = pairs[:, 0], pairs[:, 1]
    x = np.log(np.array([rate.value(int(l)) / rate.value(int(e))
                         for l, e in pairs]))
    fwd = _op_norms(_forward_stack(fam, pairs, None), norms, lates, earlies, 0)
    ys = [_log(fwd)]
    if fam.ops.invertible:
        bmats = np.stack([fam.backward_transition(int(e), int(l)) for l, e in pairs])
        ys.append(_log(_op_norms(bmats, norms, earlies, lates, 0)))
    long_ = x >= 0.5 * x.max()
    exps = []
    for y in ys:
        fin = np.isfinite(y) & long_ & (x > 0)
        exps.append(float(np.max(y[fin] / x[fin])) if np.any(fin) else 0.0)
    a = max(0.0, *exps)
    env = max(float(np.max(np.where(np.isfinite(y), y - a * x, -np.inf))) for y in ys)
    k_hat = float(np.exp(env)) if np.isfinite(env) else 1.0
    k_hat = max(k_hat, 1.0)
    return BoundedGrowth(k_hat, a, exps[0], exps[1] if len(exps) > 1 else math.nan,
                         hz, bool(np.isfinite(k_hat)))


def pull_back_projections(rs, p1, cond_cap: float = 1e10) -> ProjectionFamily:
    """Projections ``P_k = Phi(k, 1) P1 Phi(k, 1)^{-1}`` on the base system.

    ``p1`` is the projection at time 1 of the rescaled system (base time
    ``tau(1) = 1``).  The family is exactly invariant, and at the rescaled
    times it coincides with the transported rescaled projections.

    Raises
    ------
    ConditionError
        If ``Phi(k, 1)`` is too ill-conditioned to invert reliably.
    """
    fam = rs.base if hasattr(rs, "base") else rs
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    if not fam.ops.invertible:
        raise ConditionError("pull-back needs an invertible system")

    def gen(k):
        phi = fam.transition(k, 1)
        c = np.linalg.cond(phi)
        if not c <= cond_cap:
            raise ConditionError(
                f"Phi({k}, 1) has condition number {c:.3g} above {cond_cap:.3g}")
        return np.linalg.solve(phi.T, (phi @ p1).T).T

    return ProjectionFamily(fam.dim, gen, "pull-back")


# -- adapted norms --------------------------------------------------------


class AdaptedNorms:
    """Lyapunov-type norms that turn a nonuniform dichotomy into a uniform one.

    ``||x||_n`` is the sum of a stable and an unstable part; each part is a
    supremum over times ``m`` in ``[1, horizon]`` of the weighted norm of the
    evolved projected vector, with weight ``(mu ratio)**nu`` in the
    direction of decay and ``(mu ratio)**(-nutilde)`` against it.
    """

    def __init__(self, fam: EvolutionFamily, proj: ProjectionFamily,
                 rate: GrowthRate, nu: float, nutilde: float, epsilon: float,
                 N: float, horizon: int):
        if nutilde < nu:
            raise ValueError("need nutilde >= nu")
        self.fam, self.proj, self.rate = fam, proj, rate
        self.nu, self.nutilde, self.epsilon, self.N = nu, nutilde, epsilon, N
        self.horizon = int(horizon)
        self._stacks: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.truncated: set[int] = set()
        self.family = NormFamily(fam.dim, evaluator=self._eval, name="adapted")

    def _stack(self, n: int):
        st = self._stacks.get(n)
        if st is not None:
            return st
        fam, hz, mu = self.fam, self.horizon, self.rate
        p = self.proj(n)
        q = np.eye(fam.dim) - p
        s_mats, u_mats = [], []
        for m in range(1, hz + 1):
            r = mu.value(m) / mu.value(n)
            phi = fam.transition(m, n) if m >= n else fam.backward_transition(m, n)
            if m >= n:
                s_mats.append(phi @ p * r ** self.nu)
                u_mats.append(phi @ q * r ** (-self.nutilde))
            else:
                s_mats.append(phi @ p * r ** self.nutilde)
                u_mats.append(phi @ q * r ** (-self.nu))
        st = (np.stack(s_mats), np.stack(u_mats))
        self._stacks[n] = st
        return st

    def parts(self, n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s_st, u_st = self._stack(n)
        s_vals = np.linalg.norm(np.einsum("mij,bj->bmi", s_st, x), axis=-1)
        u_vals = np.linalg.norm(np.einsum("mij,bj->bmi", u_st, x), axis=-1)
        for vals in (s_vals, u_vals):
            # rounding noise on a flat supremum is not growth
            last, rest = vals[:, -1], vals[:, :-1].max(axis=1, initial=0.0)
            if np.any(last > rest * (1 + 1e-9)):
                if n not in self.truncated:
                    self.truncated.add(n)
                    warnings.warn(
                        f"adapted norm at time {n}: supremum still growing at "
                        f"the horizon {self.horizon}", RuntimeWarning, stacklevel=3)
        return s_vals.max(axis=1), u_vals.max(axis=1)

    def _eval(self, n: int, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        s, u = self.parts(n, x.reshape(-1, x.shape[-1]))
        out = (s + u).reshape(x.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def norm(self, n: int, x):
        return self._eval(n, x)

    def sandwich_audit(self, times, samples: np.ndarray) -> dict:
        """Check ``|x| <= ||x||_n <= 4 N mu_n**epsilon |x|`` on samples."""
        lo_worst, hi_worst = math.inf, 0.0
        violations = 0
        for n in times:
            e = np.linalg.norm(samples, axis=1)
            a = np.asarray(self._eval(int(n), samples))
            upper = 4.0 * self.N * self.rate.value(int(n)) ** self.epsilon
            lo_worst = min(lo_worst, float(np.min(a / e)))
            hi_worst = max(hi_worst, float(np.max(a / (upper * e))))
            violations += int(np.sum(a < e * (1 - 1e-12)) + np.sum(a > upper * e * (1 + 1e-12)))
        return {"min_lower_ratio": lo_worst, "max_upper_ratio": hi_worst,
                "violations": violations, "ok": violations == 0,
                "truncated_times": sorted(self.truncated)}


def build_adapted_norms(fam: EvolutionFamily, proj: ProjectionFamily,
                        rate: GrowthRate, nu: float, nutilde: float,
                        epsilon: float, horizon: int, N: float = 1.0) -> AdaptedNorms:
    """Adapted norms for a strong nonuniform dichotomy with constants
    ``(N, nu, nutilde, epsilon)``, truncated to ``[1, horizon]``."""
    if not fam.ops.invertible:
        raise SingularRestrictionError("adapted norms need an invertible system")
    return AdaptedNorms(fam, proj, rate, nu, nutilde, epsilon, N, horizon)
