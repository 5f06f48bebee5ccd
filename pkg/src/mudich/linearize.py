"""Topological linearization of small nonlinear perturbations.

For ``x_{n+1} = A_n x_n + g_n(x_n)`` with ``||g_n|| <= M mu'_n/mu_n`` and a
matching Lipschitz bound, the nonlinear system is conjugated to the
linear one in three stages:

1. rescale to exponential time, where one step ``Q_n`` of the linear
   system is a whole block of base steps and the perturbation of that
   block is the aggregate ``f_n``;
2. solve the conjugacy ``psi_{n+1} o (Q_n + f_n) = Q_n o psi_n`` for the
   rescaled pair with bounded Green sums;
3. carry ``psi`` back to every base time by the linear and nonlinear flows.

Green sums are truncated at a single global index ``J``.  Because the
truncation point does not move with ``n``, the truncated maps satisfy the
conjugacy identity exactly (up to rounding); the truncation only selects
one of the bounded solutions, which differ by terms of size
``||Phi_Q(n, J+1)(Id - P)||``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ContractionError, HorizonError
from .growth import GrowthRate
from .rescale import RescaledSystem
from .system import OperatorSequence, ProjectionFamily

__all__ = [
    "NonlinearPerturbation",
    "nonlinear_transition",
    "aggregate_f",
    "TwoSidedSystem",
    "extend_two_sided",
    "RescaledConjugacy",
    "solve_psi",
    "compose_h",
    "compose_hbar",
    "ConjugacyReport",
    "verify_conjugacy",
    "check_class",
    "gronwall_audit",
    "ball_samples",
    "log_uniform_times",
]

PICARD_TOL = 1e-12
HOELDER_MIN_DIST = 1e-6
PICARD_CAP = 200
FD_STEP = 1e-5


# -- perturbations --------------------------------------------------------


class NonlinearPerturbation:
    """Perturbation sequence ``g_n`` with its declared constants.

    Parameters
    ----------
    g : callable
        ``(n, X) -> g_n(X)`` for row vectors ``X`` of shape ``(..., d)``.
    M : float
        Declared bound ``||g_n(x)|| <= M mu'_n / mu_n``.
    c : float
        Declared Lipschitz constant in units of ``mu'_n / mu_n``.
    rate : GrowthRate
    k : int
        Smoothness order (for the derivative class check).
    zero : bool
        Marks the trivial perturbation; conjugacies are then the identity.
    """

    def __init__(self, g: Callable[[int, np.ndarray], np.ndarray], M: float,
                 c: float, rate: GrowthRate, k: int = 1, name: str = "custom",
                 zero: bool = False, params: dict | None = None):
        self.g, self.M, self.c, self.rate, self.k = g, float(M), float(c), rate, int(k)
        self.name, self.zero = name, bool(zero)
        self.params = dict(params or {})

    def __call__(self, n: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.zero:
            return np.zeros_like(x)
        return np.asarray(self.g(int(n), x), dtype=float)

    def weight(self, n: int) -> float:
        return self.rate.log_increment(n)

    def describe(self) -> dict:
        d = {"kind": self.name, "M": self.M, "c": self.c, "k": self.k}
        d.update(self.params)
        return d

    # standard families

    @classmethod
    def none(cls, rate: GrowthRate) -> "NonlinearPerturbation":
        return cls(lambda n, x: np.zeros_like(x), 0.0, 0.0, rate, name="zero", zero=True)

    @classmethod
    def sin_cos(cls, rate: GrowthRate, amplitude: float = 0.01) -> "NonlinearPerturbation":
        """``amplitude * mu'_n/mu_n * (sin x_1, cos x_2 - 1)`` in two dimensions."""
        amp = float(amplitude)

        def g(n, x):
            w = amp * rate.log_increment(n)
            out = np.empty_like(x)
            out[..., 0] = w * np.sin(x[..., 0])
            out[..., 1] = w * (np.cos(x[..., 1]) - 1.0)
            return out

        return cls(g, amp * math.sqrt(5.0), amp, rate, k=3, name="sin-cos",
                   params={"amplitude": amp})

    @classmethod
    def sine(cls, rate: GrowthRate, amplitude: float = 1.0) -> "NonlinearPerturbation":
        """``amplitude * mu'_n/mu_n * sin(x)`` componentwise."""
        amp = float(amplitude)
        return cls(lambda n, x: amp * rate.log_increment(n) * np.sin(x), amp, amp,
                   rate, k=3, name="sine", params={"amplitude": amp})

    @classmethod
    def constant(cls, rate: GrowthRate, value: float = 1.0) -> "NonlinearPerturbation":
        """``g_n(x) = value`` (not of the required class; used as a negative control)."""
        v = float(value)
        return cls(lambda n, x: np.full_like(x, v), v, 0.0, rate, name="constant",
                   params={"value": v})


# -- nonlinear evolution --------------------------------------------------


def _inverse_step(ops: OperatorSequence, pert: NonlinearPerturbation, j: int,
                  y: np.ndarray, tol: float = PICARD_TOL,
                  max_iter: int = PICARD_CAP) -> np.ndarray:
    """Solve ``A_j x + g_j(x) = y`` by Picard iteration."""
    ainv = ops.inverse(j)
    x = y @ ainv.T
    if pert.zero:
        return x
    factor = pert.c * pert.weight(j) * np.linalg.norm(ainv, 2)
    if factor >= 1.0:
        raise ContractionError(
            f"inverse step {j} is not a contraction (factor {factor:.3g})", factor)
    prev = None
    for _ in range(max_iter):
        x_new = (y - pert(j, x)) @ ainv.T
        step = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        x = x_new
        if step <= tol * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0):
            return x
        if prev is not None and prev > 0 and step / prev >= 1.0:
            raise ContractionError(
                f"inverse step {j} diverges (measured factor {step / prev:.3g})",
                step / prev)
        prev = step
    raise ContractionError(f"inverse step {j} did not converge in {max_iter} iterations",
                           factor)


def nonlinear_transition(ops: OperatorSequence, pert: NonlinearPerturbation,
                         m: int, n: int, x: np.ndarray) -> np.ndarray:
    """Nonlinear evolution ``G(m, n) x`` of ``x_{j+1} = A_j x_j + g_j(x_j)``.

    Backward evolution (``m < n``) inverts every step by Picard iteration;
    a non-contracting step raises :class:`ContractionError`.
    """
    y = np.array(x, dtype=float)
    if m >= n:
        for j in range(n, m):
            y = y @ ops(j).T + pert(j, y)
    else:
        for j in range(n - 1, m - 1, -1):
            y = _inverse_step(ops, pert, j, y)
    return y


def _forward_block(ops, pert, start, stop, y):
    """Advance ``y`` from ``start`` to ``stop``; also return the accumulated
    perturbation ``sum Phi(stop, j+1) g_j(G(j, start) y)``."""
    acc = np.zeros_like(y)
    for j in range(start, stop):
        a = ops(j).T
        gj = pert(j, y)
        y = y @ a + gj
        acc = acc @ a + gj
    return y, acc


def aggregate_f(rs: RescaledSystem, pert: NonlinearPerturbation, n: int,
                x: np.ndarray, return_image: bool = False):
    """Aggregated perturbation of rescaled step ``n``.

    ``f_n(x) = sum_{j=tau(n)}^{tau(n+1)-1} Phi(tau(n+1), j+1) g_j(G(j, tau(n)) x)``,
    so that ``Q_n x + f_n(x) = G(tau(n+1), tau(n)) x``.  With
    ``return_image`` the pair ``(f_n(x), G(tau(n+1), tau(n)) x)`` is returned.
    """
    if n + 1 > rs.horizon:
        raise HorizonError(f"block {n} ends beyond the horizon", largest=rs.horizon - 1)
    y, acc = _forward_block(rs.base.ops, pert, rs.tau(n), rs.tau(n + 1),
                            np.array(x, dtype=float))
    return (acc, y) if return_image else acc


# -- two-sided extension --------------------------------------------------


class TwoSidedSystem:
    """Rescaled system extended to negative times.

    For ``n <= 0`` the operator is ``P/2 + 2 (Id - P)`` with ``P`` the
    projection at time 1 and the perturbation vanishes; for ``n >= 1`` the
    rescaled operators and projections are used.
    """

    def __init__(self, rs: RescaledSystem, proj: ProjectionFamily):
        self.rs, self.proj = rs, proj
        p1 = proj(1)
        self.p1 = p1
        self.b_neg = 0.5 * p1 + 2.0 * (np.eye(rs.ops.dim) - p1)

    def B(self, n: int) -> np.ndarray:
        return self.rs.Q(n) if n >= 1 else self.b_neg

    def P(self, n: int) -> np.ndarray:
        return self.proj(n) if n >= 1 else self.p1

    def f(self, n: int, pert: NonlinearPerturbation, x: np.ndarray) -> np.ndarray:
        if n <= 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return aggregate_f(self.rs, pert, n, x)

    def transition(self, m: int, n: int) -> np.ndarray:
        """Linear evolution between any two integer times."""
        d = self.rs.ops.dim
        if m == n:
            return np.eye(d)
        if m > n:
            out = np.eye(d)
            for j in range(n, min(m, 1)):
                out = self.b_neg @ out
            if m > 1:
                out = self.rs.family.transition(m, max(n, 1)) @ out
            return out
        return np.linalg.inv(self.transition(n, m))

    def dichotomy_bound(self, lo: int, hi: int) -> dict:
        """Largest stable and unstable norms scaled by ``e**(|m-n| nu)``
        over ``lo <= n, m <= hi`` for ``nu = log 2`` on the negative half."""
        worst_s = worst_u = 0.0
        for n in range(lo, hi + 1):
            for m in range(lo, hi + 1):
                phi = self.transition(m, n)
                if m >= n:
                    worst_s = max(worst_s, np.linalg.norm(phi @ self.P(n), 2))
                else:
                    worst_u = max(worst_u, np.linalg.norm(phi @ (np.eye(len(phi)) - self.P(n)), 2))
        return {"stable": float(worst_s), "unstable": float(worst_u)}


def extend_two_sided(rs: RescaledSystem, proj: ProjectionFamily | None = None) -> TwoSidedSystem:
    """Two-sided extension used by the rescaled conjugacy."""
    proj = proj or rs.projections
    if proj is None:
        raise ValueError("a projection family is required")
    return TwoSidedSystem(rs, proj)


# -- rescaled conjugacy ---------------------------------------------------


class RescaledConjugacy:
    """Conjugacy ``psi_n`` between ``Q_n + f_n`` and ``Q_n``, for ``1 <= n <= J``.

    Built by :func:`solve_psi`; ``provenance`` records the horizon, the
    truncation, the tail bound and the iteration counts.
    """

    def __init__(self, rs: RescaledSystem, pert: NonlinearPerturbation,
                 proj: ProjectionFamily, top: int, tail: int, tol: float):
        self.rs, self.pert, self.proj = rs, pert, proj
        self.top, self.tail, self.tol = int(top), int(tail), float(tol)
        self.J = self.top + self.tail
        if self.J + 1 > rs.horizon:
            raise HorizonError(
                f"truncation index {self.J} needs rescaled time {self.J + 1} "
                f"beyond the rescaled horizon {rs.horizon}", largest=rs.horizon - 1)
        self.ops = rs.base.ops
        self.dim = rs.ops.dim
        self._green = self._green_matrices()
        self.iterations = 0
        self.provenance = {
            "rescaled_horizon": rs.horizon,
            "base_horizon": rs.base_horizon,
            "top": self.top,
            "tail": self.tail,
            "truncation_index": self.J,
            "tail_bound": self.tail_bound(),
            "green_constant": float(np.max(np.sum(
                np.linalg.norm(self._green, ord=2, axis=(2, 3)), axis=1))),
        }

    def _green_matrices(self) -> np.ndarray:
        J, d = self.J, self.dim
        fam = self.rs.family
        out = np.zeros((J + 1, J + 1, d, d))
        eye = np.eye(d)
        for i in range(1, J + 1):
            for j in range(1, J + 1):
                p = self.proj(j + 1)
                if j < i:
                    out[i, j] = -fam.transition(i, j + 1) @ p
                else:
                    out[i, j] = fam.backward_transition(i, j + 1) @ (eye - p)
        return out

    def block_bound(self, n: int) -> float:
        """Bound on ``sup ||f_n||`` from the declared ``M``."""
        base, t0, t1 = self.rs.base, self.rs.tau(n), self.rs.tau(n + 1)
        return float(sum(np.linalg.norm(base.transition(t1, j + 1), 2) * self.pert.M
                         * self.pert.weight(j) for j in range(t0, t1)))

    def tail_bound(self) -> float:
        """Size of the first neglected Green term at the top index."""
        if self.pert.zero:
            return 0.0
        J = self.J
        fam = self.rs.family
        phi = fam.backward_transition(self.top, J + 1) @ (np.eye(self.dim) - self.proj(J + 1))
        return float(np.linalg.norm(phi, 2) * self.block_bound(J))

    # orbit helpers

    def _blocks_forward(self, y, first, w):
        """Fill ``w[j]`` with ``f_j`` along the orbit from block ``first`` (per sample)."""
        rs, ops, pert = self.rs, self.ops, self.pert
        y = y.copy()
        for j in range(int(first.min()), self.J + 1):
            act = first <= j
            if not np.any(act):
                continue
            ya, acc = _forward_block(ops, pert, rs.tau(j), rs.tau(j + 1), y[act])
            y[act] = ya
            w[j, act] = acc

    def _blocks_backward(self, y, first, w):
        rs, ops, pert = self.rs, self.ops, self.pert
        y = y.copy()
        for j in range(int(first.max()) - 1, 0, -1):
            act = first > j
            if not np.any(act):
                continue
            ya = y[act]
            for i in range(rs.tau(j + 1) - 1, rs.tau(j) - 1, -1):
                ya = _inverse_step(ops, pert, i, ya)
            y[act] = ya
            _, acc = _forward_block(ops, pert, rs.tau(j), rs.tau(j + 1), ya)
            w[j, act] = acc

    def _check_index(self, n):
        n = np.asarray(n)
        if np.any(n < 1) or np.any(n > self.J):
            raise HorizonError(f"psi is only available for 1 <= n <= {self.J}",
                               largest=self.J)

    def psi(self, n, x: np.ndarray) -> np.ndarray:
        """``psi_n(x)``; ``n`` may be an integer or one index per row of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = np.broadcast_to(np.asarray(n, dtype=int), (len(x),)).copy()
        self._check_index(n)
        if self.pert.zero:
            return x.copy()
        w = np.zeros((self.J + 1,) + x.shape)
        self._blocks_forward(x, n, w)
        self._blocks_backward(x, n, w)
        return x + np.einsum("bjpq,jbq->bp", self._green[n], w)

    def psi_inv(self, n, y: np.ndarray) -> np.ndarray:
        """``psi_n^{-1}(y)`` by Picard iteration on the whole truncated orbit."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = np.broadcast_to(np.asarray(n, dtype=int), (len(y),)).copy()
        self._check_index(n)
        if self.pert.zero:
            return y.copy()
        J, fam, rs = self.J, self.rs.family, self.rs
        z = np.zeros((J + 1,) + y.shape)
        for j in range(1, J + 1):
            for nn in np.unique(n):
                sel = n == nn
                if j >= nn:
                    t = fam.transition(j, int(nn))
                else:
                    t = fam.backward_transition(j, int(nn))
                z[j, sel] = y[sel] @ t.T
        q = np.zeros_like(z)
        prev = None
        factor = 0.0
        for it in range(1, PICARD_CAP + 1):
            w = np.zeros_like(z)
            for j in range(1, J + 1):
                _, w[j] = _forward_block(self.ops, self.pert, rs.tau(j),
                                         rs.tau(j + 1), z[j] + q[j])
            q_new = np.zeros_like(q)
            q_new[1:] = -np.einsum("ijpq,jbq->ibp", self._green[1:, 1:], w[1:])
            step = float(np.max(np.abs(q_new - q)))
            q = q_new
            if prev is not None and prev > 0:
                factor = max(factor, step / prev)
                if step / prev >= 1.0 and step > self.tol:
                    raise ContractionError(
                        f"smallness violated: Picard factor {step / prev:.3g}",
                        step / prev)
            self.iterations = max(self.iterations, it)
            if step <= PICARD_TOL * max(1.0, float(np.max(np.abs(y)))):
                break
            prev = step
        else:
            raise ContractionError("smallness violated: no convergence", factor)
        self.provenance["picard_factor"] = max(self.provenance.get("picard_factor", 0.0), factor)
        self.provenance["iterations"] = self.iterations
        return y + q[n, np.arange(len(y))]


def solve_psi(rs: RescaledSystem, pert: NonlinearPerturbation,
              proj: ProjectionFamily | None = None, top: int = 1,
              tail: int | None = None, tol: float = 1e-6,
              lip_samples: int = 16, seed: int = 0) -> RescaledConjugacy:
    """Build the rescaled conjugacy for rescaled times ``1 .. top``.

    Parameters
    ----------
    top : int
        Largest rescaled index at which ``psi`` will be evaluated.
    tail : int, optional
        Number of Green terms kept beyond ``top``.  By default the
        smallest tail whose first neglected term is below ``tol / 10``
        (or the largest the horizon allows).
    tol : float
        Target accuracy.

    Raises
    ------
    ContractionError
        ``"smallness violated"`` when the estimated contraction factor
        (Green constant times measured Lipschitz constant of ``f``) is
        at least 1.
    """
    proj = proj or rs.projections
    if proj is None:
        raise ValueError("a projection family for the rescaled system is required")
    max_tail = rs.horizon - 1 - top
    if max_tail < 1:
        raise HorizonError(f"no room for a tail above rescaled index {top}",
                           largest=rs.horizon - 1)
    if tail is None:
        tail = 1
        while True:
            conj = RescaledConjugacy(rs, pert, proj, top, tail, tol)
            if conj.provenance["tail_bound"] < tol / 10 or tail >= max_tail:
                break
            tail += 1
    else:
        conj = RescaledConjugacy(rs, pert, proj, top, tail, tol)
        if conj.provenance["tail_bound"] >= tol / 10:
            warnings.warn(f"tail {tail} leaves a tail term of "
                          f"{conj.provenance['tail_bound']:.3g} (target {tol / 10:.3g})",
                          RuntimeWarning, stacklevel=2)
    if not pert.zero:
        lip = _lipschitz_f(conj, lip_samples, seed)
        factor = conj.provenance["green_constant"] * lip
        conj.provenance["lipschitz_f"] = lip
        conj.provenance["contraction_estimate"] = factor
        if factor >= 1.0:
            raise ContractionError(f"smallness violated: factor {factor:.3g}", factor)
    return conj


def _lipschitz_f(conj: RescaledConjugacy, count: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    d = conj.dim
    x = rng.standard_normal((count, d))
    h = 1e-4 * rng.standard_normal((count, d))
    worst = 0.0
    for j in range(1, conj.J + 1):
        a = aggregate_f(conj.rs, conj.pert, j, x)
        b = aggregate_f(conj.rs, conj.pert, j, x + h)
        worst = max(worst, float(np.max(np.linalg.norm(a - b, axis=1)
                                        / np.linalg.norm(h, axis=1))))
    return worst


# -- conjugacy on the base times -------------------------------------------


def _blocks(conj, k):
    return np.array([conj.rs.index.block_of(int(kk)) for kk in k])


def _retreat(conj, x, k, t):
    """Nonlinear backward flow from per-sample times ``k`` to ``t <= k``."""
    x = x.copy()
    for j in range(int(k.max()) - 1, int(t.min()) - 1, -1):
        act = (j >= t) & (j < k)
        if np.any(act):
            x[act] = _inverse_step(conj.ops, conj.pert, j, x[act])
    return x


def _advance(conj, x, t, k):
    """Nonlinear forward flow from per-sample times ``t`` to ``k >= t``."""
    x = x.copy()
    for j in range(int(t.min()), int(k.max())):
        act = (j >= t) & (j < k)
        if np.any(act):
            x[act] = x[act] @ conj.ops(j).T + conj.pert(j, x[act])
    return x


def _linear(conj, x, m, n):
    """Linear evolution from per-sample times ``n`` to ``m``."""
    out = np.empty_like(x)
    fam = conj.rs.base
    for i in range(len(x)):
        a, b = int(m[i]), int(n[i])
        t = fam.transition(a, b) if a >= b else fam.backward_transition(a, b)
        out[i] = t @ x[i]
    return out


def compose_h(conj: RescaledConjugacy, k, x: np.ndarray) -> np.ndarray:
    """``h_k(x) = Phi(k, tau(n)) psi_n(G(tau(n), k) x)`` with ``tau(n) <= k < tau(n+1)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.broadcast_to(np.asarray(k, dtype=int), (len(x),)).copy()
    if conj.pert.zero:
        return x.copy()
    n = _blocks(conj, k)
    t = np.array([conj.rs.tau(int(v)) for v in n])
    z = _retreat(conj, x, k, t)
    return _linear(conj, conj.psi(n, z), k, t)


def compose_hbar(conj: RescaledConjugacy, k, y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`compose_h`: ``G(k, tau(n)) psi_n^{-1}(Phi(tau(n), k) y)``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    k = np.broadcast_to(np.asarray(k, dtype=int), (len(y),)).copy()
    if conj.pert.zero:
        return y.copy()
    n = _blocks(conj, k)
    t = np.array([conj.rs.tau(int(v)) for v in n])
    z = _linear(conj, y, t, k)
    return _advance(conj, conj.psi_inv(n, z), t, k)


# -- verification ---------------------------------------------------------


def ball_samples(count: int, dim: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points inside the ball of the given radius."""
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    out = []
    total = 0
    while total < count:
        pts = 2.0 * sob.random_base2(max(6, math.ceil(math.log2(2 * count)))) - 1.0
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        out.append(pts)
        total += len(pts)
    return radius * np.vstack(out)[:count]


def log_uniform_times(count: int, lo: int, hi: int, seed: int = 0) -> np.ndarray:
    """Integer times log-uniformly spread over ``[lo, hi]``."""
    sob = qmc.Sobol(1, scramble=True, seed=seed + 1)
    u = sob.random_base2(max(1, math.ceil(math.log2(count))))[:count, 0]
    t = np.exp(np.log(lo) + u * (np.log(hi + 1) - np.log(lo)))
    return np.clip(np.floor(t).astype(int), lo, hi)


@dataclass
class ConjugacyReport:
    """Outcome of :func:`verify_conjugacy`."""

    residual: float
    D_hat: float
    D_inv_hat: float
    roundtrip: float
    rho_hat: float
    r_squared: float
    slope: float
    samples: int
    k_range: tuple
    tolerance: float
    provenance: dict
    residuals: np.ndarray = field(repr=False, default=None)
    verdict: bool = False

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "D_hat": self.D_hat,
            "D_inv_hat": self.D_inv_hat,
            "roundtrip": self.roundtrip,
            "rho_hat": self.rho_hat,
            "loglog_slope": self.slope,
            "r_squared": self.r_squared,
            "samples": self.samples,
            "k_range": list(self.k_range),
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "provenance": self.provenance,
        }


def verify_conjugacy(conj: RescaledConjugacy, samples: int = 1000,
                     k_range: tuple[int, int] | None = None, radius: float = 1.0,
                     delta: float = 1e-2, tolerance: float = 1e-6,
                     seed: int = 0, roundtrip_samples: int | None = 200) -> ConjugacyReport:
    """Check ``h_{k+1} o (A_k + g_k) = A_k o h_k`` on sampled ``(k, x)``.

    Also reports ``D_hat = max ||h_k(x) - x||``, the same for the inverse,
    the round-trip error of ``hbar_k o h_k`` and a Hoelder exponent: the
    log-log regression slope over pairs at distances in ``[1e-6, delta]``,
    capped at 1.
    """
    rs, ops, pert = conj.rs, conj.ops, conj.pert
    if k_range is None:
        k_range = (1, rs.tau(conj.top + 1) - 2)
    lo, hi = int(k_range[0]), int(k_range[1])
    if rs.index.block_of(hi + 1) > conj.top:
        raise HorizonError(f"times up to {hi + 1} need psi beyond index {conj.top}",
                           largest=conj.top)
    k = log_uniform_times(samples, lo, hi, seed)
    x = ball_samples(samples, conj.dim, radius, seed)
    hx = compose_h(conj, k, x)
    step = np.stack([x[i] @ ops(int(k[i])).T for i in range(samples)]) + \
        np.stack([pert(int(k[i]), x[i]) for i in range(samples)])
    lhs = compose_h(conj, k + 1, step)
    rhs = np.stack([ops(int(k[i])) @ hx[i] for i in range(samples)])
    res = np.linalg.norm(lhs - rhs, axis=1)
    d_hat = float(np.max(np.linalg.norm(hx - x, axis=1)))

    m = samples if roundtrip_samples is None else min(samples, roundtrip_samples)
    back = compose_hbar(conj, k[:m], hx[:m])
    roundtrip = float(np.max(np.linalg.norm(back - x[:m], axis=1)))
    hbar_x = compose_hbar(conj, k[:m], x[:m])
    d_inv = float(np.max(np.linalg.norm(hbar_x - x[:m], axis=1)))

    slope, r2 = _hoelder_fit(conj, k[:m], x[:m], delta, seed)
    # exponents above 1 carry no information for a non-constant map
    rho = min(1.0, slope)
    verdict = bool(np.max(res) <= tolerance and math.isfinite(d_hat))
    prov = dict(conj.provenance)
    return ConjugacyReport(float(np.max(res)), d_hat, d_inv, roundtrip, rho, r2, slope,
                           samples, (lo, hi), tolerance, prov, res, verdict)


def _hoelder_fit(conj, k, x, delta, seed):
    rng = np.random.default_rng(seed + 7)
    u = rng.standard_normal(x.shape)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = np.exp(rng.uniform(np.log(HOELDER_MIN_DIST), np.log(delta), len(x)))
    y = x + r[:, None] * u
    both = compose_h(conj, np.concatenate([k, k]), np.vstack([x, y]))
    hx, hy = both[:len(x)], both[len(x):]
    dist = np.linalg.norm(hx - hy, axis=1)
    ok = dist > 0
    lx, ly = np.log(r[ok]), np.log(dist[ok])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def check_class(pert: NonlinearPerturbation, horizon: int, dim: int,
                samples: int = 64, radius: float = 2.0, step: float = FD_STEP,
                tolerance: float = 0.1, seed: int = 0) -> dict:
    """Finite-difference audit of the perturbation class.

    Estimates ``M_hat = sup ||g_n|| / (mu'_n/mu_n)`` and the analogous
    Lipschitz constant ``c_hat`` (largest Jacobian norm, central
    differences) over sampled times and points.  The bounds count as
    uniform when the second half of the times needs at most ``1 + tolerance``
    times the constant of the first half.  ``class_ok`` additionally needs
    ``g_n(0) = 0`` and ``Dg_n(0) = 0``.
    """
    from .dichotomy import log_points
    times = log_points(1, horizon, 48)
    pts = np.vstack([np.zeros((1, dim)), ball_samples(samples, dim, radius, seed)])
    m_t, c_t, g0, dg0 = [], [], 0.0, 0.0
    eye = np.eye(dim)
    for n in times:
        w = pert.weight(int(n))
        vals = pert(int(n), pts)
        jac = np.stack([(pert(int(n), pts + step * e) - pert(int(n), pts - step * e)) / (2 * step)
                        for e in eye], axis=-1)
        m_t.append(float(np.max(np.linalg.norm(vals, axis=1))) / w)
        c_t.append(float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2)))) / w)
        g0 = max(g0, float(np.linalg.norm(vals[0])) / w)
        dg0 = max(dg0, float(np.linalg.norm(jac[0], 2)) / w)
    m_t, c_t = np.array(m_t), np.array(c_t)
    half = times <= horizon // 2

    def uniform(v):
        first = v[half].max() if np.any(half) else v.max()
        return bool(np.isfinite(v).all() and v.max() <= (1 + tolerance) * max(first, 1e-300))

    m_hat, c_hat = float(m_t.max()), float(c_t.max())
    bounded = uniform(m_t) and uniform(c_t)
    zero_ok = g0 <= 1e-9
    flat_ok = dg0 <= 1e-6
    return {
        "M_hat": m_hat, "c_hat": c_hat, "bounded": bounded,
        "g0": g0, "Dg0": dg0, "zero_at_origin": zero_ok, "flat_at_origin": flat_ok,
        "lipschitz_ok": bounded and zero_ok,
        "class_ok": bounded and zero_ok and flat_ok,
        "horizon": int(horizon),
    }


def gronwall_audit(ops: OperatorSequence, pert: NonlinearPerturbation,
                   rate: GrowthRate, K: float, a: float,
                   pairs, samples: np.ndarray, slack: float = 1.05,
                   step: float = FD_STEP) -> dict:
    """Compare nonlinear growth with the Gronwall envelopes.

    Lipschitz growth ``||G(m,n)x - G(m,n)y|| <= K (mu_m/mu_n)**(a + c K theta) ||x - y||``
    and derivative growth ``||DG(m,n)(x)|| <= K (mu_m/mu_n)**(a + M K theta)``
    are checked on the given ``(m, n)`` pairs (``m >= n``) and sample points.
    """
    theta = rate.theta
    a_lip = a + pert.c * K * theta
    a_der = a + pert.M * K * theta
    d = samples.shape[1]
    rng = np.random.default_rng(1)
    other = samples + 1e-3 * rng.standard_normal(samples.shape)
    worst_lip = worst_der = 0.0
    for m, n in pairs:
        m, n = int(m), int(n)
        r = rate.value(m) / rate.value(n)
        gx = nonlinear_transition(ops, pert, m, n, samples)
        gy = nonlinear_transition(ops, pert, m, n, other)
        ratio = np.linalg.norm(gx - gy, axis=1) / np.linalg.norm(samples - other, axis=1)
        worst_lip = max(worst_lip, float(ratio.max() / (K * r ** a_lip)))
        cols = []
        for e in np.eye(d):
            cols.append((nonlinear_transition(ops, pert, m, n, samples + step * e)
                         - nonlinear_transition(ops, pert, m, n, samples - step * e)) / (2 * step))
        jac = np.stack(cols, axis=-1)
        worst_der = max(worst_der, float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2)))
                                         / (K * r ** a_der)))
    return {"lipschitz_exponent": a_lip, "derivative_exponent": a_der,
            "worst_lipschitz_ratio": worst_lip, "worst_derivative_ratio": worst_der,
            "slack": slack,
            "ok": bool(worst_lip <= slack and worst_der <= slack)}
