"""Linear nonautonomous systems ``x_{n+1} = A_n x_n`` and their evolution.

The evolution ``Phi(m, k) = A_{m-1} ... A_k`` is assembled from cached
products over dyadically aligned index blocks, so any window costs
``O(log(m - k))`` matrix products once the blocks exist.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (ConditionError, HorizonError, NonFiniteError,
                     SingularRestrictionError)
from .growth import GrowthRate

__all__ = [
    "OperatorSequence",
    "EvolutionFamily",
    "NormFamily",
    "ProjectionFamily",
    "check_invariance",
    "diagonal_power",
    "switched_power",
    "table_operators",
    "sparse_spike",
    "kernel_basis",
]

IDEMPOTENCE_TOL = 1e-10
COCYCLE_TOL = 1e-10


def _as_matrix(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {a.shape}")
    return a


class OperatorSequence:
    """Sequence of ``d x d`` matrices ``A_n`` for ``n >= 1``.

    Parameters
    ----------
    dim : int
        State dimension.
    generator : callable
        ``n -> A_n``.  Scalars are accepted when ``dim == 1``.
    invertible : bool
        Whether every ``A_n`` is invertible.
    horizon : int, optional
        Largest time index reachable; ``A_n`` exists for ``n < horizon``.
    """

    def __init__(self, dim: int, generator: Callable[[int], np.ndarray],
                 invertible: bool = True, horizon: int | None = None,
                 name: str = "system"):
        self.dim = int(dim)
        self._gen = generator
        self.invertible = bool(invertible)
        self.horizon = None if horizon is None else int(horizon)
        self.name = name
        self._cache: dict[int, np.ndarray] = {}
        self._inv: dict[int, np.ndarray] = {}

    def __repr__(self):
        return f"OperatorSequence({self.name!r}, dim={self.dim})"

    def _check(self, n: int) -> None:
        if n < 1:
            raise ValueError(f"operator index must be >= 1, got {n}")
        if self.horizon is not None and n >= self.horizon:
            raise HorizonError(
                f"operator A_{n} lies beyond the horizon {self.horizon}",
                largest=self.horizon - 1)

    def __call__(self, n: int) -> np.ndarray:
        n = int(n)
        a = self._cache.get(n)
        if a is None:
            self._check(n)
            a = _as_matrix(self._gen(n), self.dim)
            if not np.all(np.isfinite(a)):
                raise NonFiniteError(f"A_{n} has non-finite entries")
            a.setflags(write=False)
            self._cache[n] = a
        return a

    def inverse(self, n: int) -> np.ndarray:
        n = int(n)
        b = self._inv.get(n)
        if b is None:
            try:
                b = np.linalg.inv(self(n))
            except np.linalg.LinAlgError as exc:
                raise SingularRestrictionError(f"A_{n} is singular") from exc
            b.setflags(write=False)
            self._inv[n] = b
        return b

    def map(self, func: Callable[[int, np.ndarray], np.ndarray],
            name: str | None = None,
            invertible: bool | None = None) -> "OperatorSequence":
        """New sequence ``n -> func(n, A_n)`` sharing the horizon."""
        return OperatorSequence(
            self.dim, lambda n: func(n, self(n)),
            self.invertible if invertible is None else invertible,
            self.horizon, name or self.name)


class EvolutionFamily:
    """Evolution operator of an :class:`OperatorSequence`.

    Forward windows are products of cached dyadic blocks; backward windows
    either invert a forward window or, for non-invertible systems, invert
    the restriction to the kernels of a projection family.
    """

    def __init__(self, ops: OperatorSequence):
        self.ops = ops
        self.dim = ops.dim
        self._blocks: dict[tuple[int, int], np.ndarray] = {}
        self._iblocks: dict[tuple[int, int], np.ndarray] = {}
        self._ipairs: dict[tuple[int, int], np.ndarray] = {}
        self._pairs: dict[tuple[int, int], np.ndarray] = {}
        self._lock = threading.Lock()
        self._eye = np.eye(self.dim)
        self._eye.setflags(write=False)

    @property
    def horizon(self):
        return self.ops.horizon

    def _block(self, level: int, j: int) -> np.ndarray:
        key = (level, j)
        b = self._blocks.get(key)
        if b is not None:
            return b
        if level == 0:
            b = self.ops(j)
        else:
            lo = self._block(level - 1, 2 * j)
            hi = self._block(level - 1, 2 * j + 1)
            b = hi @ lo
            if not np.all(np.isfinite(b)):
                s = j << level
                raise NonFiniteError(
                    f"evolution over [{s}, {s + (1 << level)}) is not finite")
            b.setflags(write=False)
        self._blocks[key] = b
        return b

    def _iblock(self, level: int, j: int) -> np.ndarray:
        key = (level, j)
        b = self._iblocks.get(key)
        if b is not None:
            return b
        if level == 0:
            b = self.ops.inverse(j)
        else:
            lo = self._iblock(level - 1, 2 * j)
            hi = self._iblock(level - 1, 2 * j + 1)
            b = lo @ hi
            if not np.all(np.isfinite(b)):
                s = j << level
                raise NonFiniteError(
                    f"inverse evolution over [{s}, {s + (1 << level)}) is not finite")
            b.setflags(write=False)
        self._iblocks[key] = b
        return b

    def _decompose(self, k: int, m: int):
        i = k
        while i < m:
            level = 0
            while (i % (2 << level) == 0) and i + (2 << level) <= m:
                level += 1
            yield level, i >> level
            i += 1 << level

    def transition(self, m: int, k: int) -> np.ndarray:
        """``Phi(m, k) = A_{m-1} ... A_k`` for ``m >= k >= 1``."""
        m, k = int(m), int(k)
        if k < 1:
            raise ValueError(f"time index must be >= 1, got {k}")
        if m < k:
            raise ValueError(f"forward transition needs m >= k (got m={m}, k={k})")
        if m == k:
            return self._eye
        hz = self.ops.horizon
        if hz is not None and m > hz:
            raise HorizonError(f"Phi({m}, {k}) reaches beyond horizon {hz}",
                               largest=hz)
        key = (m, k)
        out = self._pairs.get(key)
        if out is not None:
            return out
        with self._lock:
            out = None
            for level, j in self._decompose(k, m):
                b = self._block(level, j)
                out = b if out is None else b @ out
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(f"Phi({m}, {k}) is not finite")
            out = np.array(out)
            out.setflags(write=False)
            if len(self._pairs) < 200_000:
                self._pairs[key] = out
        return out

    def apply(self, m: int, k: int, x: np.ndarray) -> np.ndarray:
        """Apply ``Phi(m, k)`` to row vectors ``x`` of shape ``(..., d)``.

        For ``m < k`` the system must be invertible.
        """
        x = np.asarray(x, dtype=float)
        if m >= k:
            return x @ self.transition(m, k).T
        return x @ self.backward_transition(m, k).T

    def backward_transition(self, m: int, k: int,
                            restriction: "ProjectionFamily | None" = None,
                            cond_cap: float = 1e12) -> np.ndarray:
        """Backward evolution from time ``k`` to time ``m <= k``.

        Without ``restriction`` this is ``Phi(k, m)^{-1}`` and requires an
        invertible system.  With a projection family ``P`` the result is
        the ``d x d`` matrix ``x -> y`` where ``y`` is the unique element of
        ``Ker P_m`` with ``Phi(k, m) y = (Id - P_k) x``.

        Raises
        ------
        SingularRestrictionError
            If the relevant map is not invertible.
        """
        m, k = int(m), int(k)
        if m > k:
            raise ValueError(f"backward transition needs m <= k (got m={m}, k={k})")
        if restriction is None:
            if m == k:
                return self._eye
            if not self.ops.invertible:
                raise SingularRestrictionError(
                    "system is not invertible; pass a projection family")
            return self._inverse_product(m, k)
        qk = self._eye - restriction(k)
        if m == k:
            return qk
        um = kernel_basis(restriction(m))
        uk = kernel_basis(restriction(k))
        if um.shape[1] != uk.shape[1]:
            raise SingularRestrictionError(
                f"kernel dimensions differ at times {m} and {k}")
        if um.shape[1] == 0:
            return np.zeros((self.dim, self.dim))
        r = uk.T @ self.transition(k, m) @ um
        s = np.linalg.svd(r, compute_uv=False)
        if s[-1] == 0 or s[0] / s[-1] > cond_cap:
            raise SingularRestrictionError(
                f"restriction of Phi({k}, {m}) to the kernel is singular "
                f"(smallest singular value {s[-1]:.3g})")
        return um @ np.linalg.solve(r, uk.T @ qk)

    def _inverse_product(self, m: int, k: int) -> np.ndarray:
        """``A_m^{-1} ... A_{k-1}^{-1}`` from cached inverse blocks."""
        hz = self.ops.horizon
        if hz is not None and k > hz:
            raise HorizonError(f"Phi({m}, {k}) reaches beyond horizon {hz}",
                               largest=hz)
        key = (m, k)
        out = self._ipairs.get(key)
        if out is not None:
            return out
        with self._lock:
            for level, j in self._decompose(m, k):
                b = self._iblock(level, j)
                out = b if out is None else out @ b
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(f"Phi({m}, {k}) is not finite")
            out = np.array(out)
            out.setflags(write=False)
            if len(self._ipairs) < 200_000:
                self._ipairs[key] = out
        return out

    def cocycle_defect(self, triples: Iterable[tuple[int, int, int]]) -> float:
        """Max relative defect of ``Phi(m, l) Phi(l, k) = Phi(m, k)``."""
        worst = 0.0
        for m, l, k in triples:
            lhs = self.transition(m, l) @ self.transition(l, k)
            rhs = self.transition(m, k)
            scale = max(1.0, np.linalg.norm(rhs, 2))
            worst = max(worst, float(np.linalg.norm(lhs - rhs, 2) / scale))
        return worst


def kernel_basis(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of ``Ker p = Im(Id - p)`` for a projection."""
    q = np.eye(p.shape[0]) - p
    u, s, _ = np.linalg.svd(q)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return u[:, :r]


def image_basis(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of ``Im p``."""
    u, s, _ = np.linalg.svd(p)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return u[:, :r]


class NormFamily:
    """Time-dependent norms ``||x||_n``.

    Parameters
    ----------
    dim : int
        State dimension.
    weight : callable, optional
        ``n -> S_n`` (invertible); ``||x||_n = |S_n x|``.  ``None`` means
        the Euclidean norm at every time.
    evaluator : callable, optional
        ``(n, X) -> norms`` for general (non-Euclidean) families, ``X`` of
        shape ``(..., d)``.  Mutually exclusive with ``weight``.
    """

    def __init__(self, dim: int, weight: Callable[[int], np.ndarray] | None = None,
                 evaluator: Callable[[int, np.ndarray], np.ndarray] | None = None,
                 name: str | None = None):
        if weight is not None and evaluator is not None:
            raise ValueError("give either weight or evaluator, not both")
        self.dim = int(dim)
        self._weight = weight
        self._eval = evaluator
        self.name = name or ("weighted" if weight else
                             "custom" if evaluator else "euclidean")
        self._w: dict[int, np.ndarray] = {}
        self._winv: dict[int, np.ndarray] = {}

    @property
    def is_weighted(self) -> bool:
        return self._eval is None

    def weight(self, n: int) -> np.ndarray | None:
        if self._weight is None:
            return None
        w = self._w.get(n)
        if w is None:
            w = _as_matrix(self._weight(n), self.dim)
            self._w[n] = w
        return w

    def weight_inv(self, n: int) -> np.ndarray | None:
        if self._weight is None:
            return None
        w = self._winv.get(n)
        if w is None:
            w = np.linalg.inv(self.weight(n))
            self._winv[n] = w
        return w

    def norm(self, n: int, x: np.ndarray):
        """Norm of vector(s) ``x`` (shape ``(..., d)``) at time ``n``."""
        x = np.asarray(x, dtype=float)
        if self._eval is not None:
            return self._eval(n, x)
        w = self.weight(n)
        if w is not None:
            x = x @ w.T
        return np.linalg.norm(x, axis=-1)

    def op_norm(self, t: np.ndarray, m: int, k: int,
                samples: np.ndarray | None = None) -> float:
        """Operator norm of ``t`` from ``(R^d, ||.||_k)`` to ``(R^d, ||.||_m)``.

        Exact (spectral norm of ``S_m t S_k^{-1}``) for weighted families;
        for general families the maximum ratio over ``samples`` is returned.
        """
        if self._eval is None:
            a = np.asarray(t, dtype=float)
            wm, wki = self.weight(m), self.weight_inv(k)
            if wm is not None:
                a = wm @ a @ wki
            return float(np.linalg.norm(a, 2))
        if samples is None:
            samples = sample_directions(self.dim, 16, seed=0)
        num = self.norm(m, samples @ np.asarray(t).T)
        den = self.norm(k, samples)
        ok = den > 0
        return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0

    @classmethod
    def euclidean(cls, dim: int) -> "NormFamily":
        return cls(dim)

    def reindexed(self, index: Callable[[int], int], name: str | None = None) -> "NormFamily":
        """Family ``n -> ||.||_{index(n)}``."""
        if self._eval is not None:
            ev = self._eval
            return NormFamily(self.dim, evaluator=lambda n, x: ev(index(n), x),
                              name=name or self.name)
        if self._weight is None:
            return NormFamily(self.dim, name=name or self.name)
        return NormFamily(self.dim, weight=lambda n: self.weight(index(n)),
                          name=name or self.name)


def sample_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """``count`` random unit vectors from a seeded generator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class ProjectionFamily:
    """Family of projections ``P_n`` (idempotent matrices).

    Idempotence is checked on first access to every ``P_n``.
    """

    def __init__(self, dim: int, generator: Callable[[int], np.ndarray],
                 name: str = "projections", tol: float = IDEMPOTENCE_TOL):
        self.dim = int(dim)
        self._gen = generator
        self.name = name
        self.tol = tol
        self._cache: dict[int, np.ndarray] = {}
        self._last_raw = self._last = None

    def __call__(self, n: int) -> np.ndarray:
        n = int(n)
        p = self._cache.get(n)
        if p is None:
            raw = self._gen(n)
            if raw is self._last_raw:
                p = self._last
            else:
                p = _as_matrix(raw, self.dim)
                defect = np.linalg.norm(p @ p - p)
                if defect > self.tol * max(1.0, np.linalg.norm(p) ** 2):
                    raise ValueError(f"P_{n} is not idempotent (defect {defect:.3g})")
                p = np.array(p)
                p.setflags(write=False)
                self._last_raw, self._last = raw, p
            self._cache[n] = p
        return p

    def rank(self, n: int) -> int:
        return int(round(np.trace(self(n))))

    def complement(self, n: int) -> np.ndarray:
        return np.eye(self.dim) - self(n)

    @classmethod
    def constant(cls, p, dim: int | None = None, name: str = "constant") -> "ProjectionFamily":
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return cls(dim or p.shape[0], lambda n: p, name)

    @classmethod
    def coordinate(cls, dim: int, stable: Sequence[int]) -> "ProjectionFamily":
        """Orthogonal projection onto the listed coordinate axes."""
        p = np.zeros((dim, dim))
        for i in stable:
            p[i, i] = 1.0
        return cls.constant(p, dim, "coordinate")

    def reindexed(self, index: Callable[[int], int], name: str | None = None) -> "ProjectionFamily":
        return ProjectionFamily(self.dim, lambda n: self(index(n)),
                                name or self.name, self.tol)


def check_invariance(fam: EvolutionFamily, proj: ProjectionFamily,
                     pairs: Iterable[tuple[int, int]] | None = None,
                     horizon: int | None = None) -> float:
    """Largest invariance residual of a projection family.

    The residual of a pair ``(m, n)``, ``m >= n``, is
    ``||Phi(m,n) P_n - P_m Phi(m,n)|| / max(1, ||Phi(m,n)||)`` (spectral
    norms).  With no pairs given, all single steps up to ``horizon`` are
    checked.
    """
    if pairs is None:
        hz = horizon or fam.horizon
        if hz is None:
            raise ValueError("need pairs or a horizon")
        pairs = [(n + 1, n) for n in range(1, hz)]
    worst = 0.0
    for m, n in pairs:
        phi = fam.transition(m, n)
        d = phi @ proj(n) - proj(m) @ phi
        scale = max(1.0, np.linalg.norm(phi, 2))
        worst = max(worst, float(np.linalg.norm(d, 2) / scale))
    return worst


# -- concrete systems -----------------------------------------------------


def _conjugator(basis, dim):
    if basis is None:
        return None, None
    t = _as_matrix(basis, dim)
    return t, np.linalg.inv(t)


def diagonal_power(rate: GrowthRate, exponents: Sequence[float],
                   basis=None, horizon: int | None = None) -> OperatorSequence:
    """``A_n = T diag((mu_{n+1}/mu_n)**c_i) T^{-1}``.

    The evolution is ``T diag((mu_m/mu_k)**c_i) T^{-1}``, so each
    exponent ``c_i`` is a point of the dichotomy spectrum.
    """
    c = np.asarray(exponents, dtype=float)
    d = c.size
    t, ti = _conjugator(basis, d)

    def gen(n):
        r = rate.value(n + 1) / rate.value(n)
        a = np.diag(r ** c)
        return a if t is None else t @ a @ ti

    return OperatorSequence(d, gen, True, horizon, "diagonal")


def switched_power(rate: GrowthRate, breaks: Sequence[int],
                   exponents: Sequence[Sequence[float]],
                   horizon: int | None = None) -> OperatorSequence:
    """Diagonal power system whose exponents switch at index ``breaks``.

    Block ``j`` covers ``breaks[j-1] <= n < breaks[j]`` (with an implicit
    ``breaks[-1] = 1``) and uses ``exponents[j]``; the last block runs
    forever.
    """
    ex = np.atleast_2d(np.asarray(exponents, dtype=float))
    br = [int(b) for b in breaks]
    if len(ex) != len(br) + 1:
        raise ValueError("need exactly one more exponent row than break points")
    if any(b2 <= b1 for b1, b2 in zip(br, br[1:])):
        raise ValueError("break points must increase")
    import bisect

    def gen(n):
        c = ex[bisect.bisect_right(br, n)]
        r = rate.value(n + 1) / rate.value(n)
        return np.diag(r ** c)

    return OperatorSequence(ex.shape[1], gen, True, horizon, "switched")


def table_operators(matrices: Sequence, horizon: int | None = None,
                    repeat_last: bool = False) -> OperatorSequence:
    """Operators listed explicitly, ``matrices[0] = A_1``."""
    mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in matrices]
    if not mats:
        raise ValueError("empty operator table")
    d = mats[0].shape[0]
    inv = all(abs(np.linalg.det(a)) > 0 for a in mats)

    def gen(n):
        if n - 1 < len(mats):
            return mats[n - 1]
        if repeat_last:
            return mats[-1]
        raise HorizonError(f"operator table has no entry for A_{n}",
                           largest=len(mats))

    hz = horizon if horizon is not None else (None if repeat_last else len(mats) + 1)
    return OperatorSequence(d, gen, inv, hz, "table")


def sparse_spike(horizon: int | None = None) -> OperatorSequence:
    """Scalar system with ``A_n = n`` when ``n = 2**j - 1`` (``j >= 2``), else 0.

    Every forward product over a window ``[2**(j-1), 2**j)`` contains a
    zero factor, yet ``sup A_n`` is infinite.
    """

    def gen(n):
        j = (n + 1).bit_length() - 1
        spike = j >= 2 and (n + 1) == (1 << j)
        return np.array([[float(n) if spike else 0.0]])

    return OperatorSequence(1, gen, False, horizon, "sparse-spike")
