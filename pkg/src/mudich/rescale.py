"""Time rescaling of a linear system from one growth rate to another.

Given the system's rate ``mu`` and a target rate ``eta`` the index map

    tau(k) = floor(interp_inv_mu(eta_{k-1})) + 1

picks the first base time at which ``mu`` has passed ``eta_{k-1}``.  The
rescaled system steps from ``tau(n)`` to ``tau(n+1)`` in one move:
``Q_n = Phi(tau(n+1), tau(n))``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonError
from .growth import GrowthRate, exponential
from .system import EvolutionFamily, NormFamily, OperatorSequence, ProjectionFamily

__all__ = ["RescaleIndexMap", "RescaledSystem", "build"]


class RescaleIndexMap:
    """Cached index map ``k -> tau(k)`` for ``k >= 1``."""

    def __init__(self, mu: GrowthRate, eta: GrowthRate):
        self.mu = mu
        self.eta = eta
        self._tau: list[int] = [0]  # slot 0 unused

    def __call__(self, k: int) -> int:
        k = int(k)
        if k < 1:
            raise ValueError(f"rescaled index must be >= 1, got {k}")
        tau = self._tau
        while len(tau) <= k:
            j = len(tau)
            s = self.mu.interp_inv(self.eta.value(j - 1))
            t = int(math.floor(s)) + 1
            # the interpolant is monotone, so tau must be too
            tau.append(max(t, tau[-1]))
        return tau[k]

    def table(self, count: int) -> list[int]:
        return [self(k) for k in range(1, count + 1)]

    def last_within(self, base_horizon: int) -> int:
        """Largest ``k`` with ``tau(k) <= base_horizon``."""
        k = 1
        if self(1) > base_horizon:
            return 0
        while self(k + 1) <= base_horizon:
            k += 1
        return k

    def block_of(self, j: int) -> int:
        """Largest ``n`` with ``tau(n) <= j`` (base time ``j >= 1``)."""
        if j < 1:
            raise ValueError("base time must be >= 1")
        n = 1
        while self(n + 1) <= j:
            n += 1
        return n


@dataclass
class RescaledSystem:
    """Result of :func:`build`.

    Attributes
    ----------
    base : EvolutionFamily
        The original system.
    index : RescaleIndexMap
        ``tau``.
    ops : OperatorSequence
        ``Q_n``.
    family : EvolutionFamily
        Evolution of ``Q``.
    horizon : int
        Largest rescaled time with ``tau(horizon) <= base horizon``.
    norms, projections : optional
        Base families reindexed through ``tau``.
    """

    base: EvolutionFamily
    index: RescaleIndexMap
    ops: OperatorSequence
    family: EvolutionFamily
    horizon: int
    base_horizon: int
    norms: NormFamily | None = None
    projections: ProjectionFamily | None = None
    base_norms: NormFamily | None = None
    base_projections: ProjectionFamily | None = None

    @property
    def mu(self) -> GrowthRate:
        return self.index.mu

    @property
    def eta(self) -> GrowthRate:
        return self.index.eta

    def tau(self, k: int) -> int:
        return self.index(k)

    def _check(self, n: int) -> None:
        if n > self.horizon:
            raise HorizonError(
                f"rescaled index {n} needs base time {self.index(n)} beyond "
                f"horizon {self.base_horizon}; largest usable index is {self.horizon}",
                largest=self.horizon)

    def Q(self, n: int) -> np.ndarray:
        return self.ops(n)

    def rescaled_transition(self, m: int, n: int) -> np.ndarray:
        """``Phi_Q(m, n) = Phi(tau(m), tau(n))`` for ``m >= n``."""
        self._check(m)
        return self.base.transition(self.index(m), self.index(n))

    def tables(self, count: int | None = None) -> dict:
        """``tau`` and ``Q`` tables for reporting."""
        count = self.horizon - 1 if count is None else min(count, self.horizon - 1)
        return {
            "tau": [self.index(k) for k in range(1, count + 2)],
            "Q": [self.Q(n).tolist() for n in range(1, count + 1)],
        }


def build(fam: EvolutionFamily, mu: GrowthRate, eta: GrowthRate | None = None,
          base_horizon: int | None = None, norms: NormFamily | None = None,
          projections: ProjectionFamily | None = None) -> RescaledSystem:
    """Rescale a system from rate ``mu`` to rate ``eta`` (default ``e**n``).

    Parameters
    ----------
    fam : EvolutionFamily
        Base system.
    mu, eta : GrowthRate
        Source and target rates.
    base_horizon : int, optional
        Largest usable base time; defaults to the system's horizon.
    norms, projections : optional
        Base norm and projection families, transported as
        ``||.||_{tau(k)}`` and ``P_{tau(k)}``.
    """
    eta = eta or exponential()
    hz = base_horizon if base_horizon is not None else fam.horizon
    if hz is None:
        raise ValueError("a finite base horizon is required")
    index = RescaleIndexMap(mu, eta)
    rh = index.last_within(hz)
    if rh < 2:
        raise HorizonError(
            f"base horizon {hz} is too short for a single rescaled step "
            f"(tau(2) = {index(2)})", largest=rh)

    def q(n):
        if n + 1 > rh:
            raise HorizonError(
                f"Q_{n} needs base time {index(n + 1)} beyond horizon {hz}; "
                f"largest usable index is {rh - 1}", largest=rh - 1)
        return fam.transition(index(n + 1), index(n))

    ops = OperatorSequence(fam.dim, q, fam.ops.invertible, rh,
                           f"rescaled {fam.ops.name}")
    return RescaledSystem(
        base=fam, index=index, ops=ops, family=EvolutionFamily(ops), horizon=rh,
        base_horizon=hz,
        norms=norms.reindexed(index) if norms is not None else None,
        projections=projections.reindexed(index) if projections is not None else None,
        base_norms=norms, base_projections=projections)
