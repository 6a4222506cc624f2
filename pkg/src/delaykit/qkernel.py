"""The lower-triangular operator family ``Q_{k+1}(l tau)``.

``Q_{k+1}(l tau)`` is the coefficient of ``(t - l tau)^k / k!`` in the
expansion of the fundamental solution.  The entries do not depend on the
numeric value of tau; tau only labels the delay index ``l``.

The table is built with the recursion

    Q_{k+1}(l) = A0 Q_k(l) + A1 Q_k(l - 1),   Q_0 = 0,  Q_k(-1) = 0,

which is cheaper than the nested definitional sum and gives identical values.
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import InvalidArgumentError
from .matcore import as_matrix

__all__ = ["QTable", "build", "build_scaled", "entry_commuting"]


def _check_pair(A0, A1):
    A0 = as_matrix(A0, "A0")
    A1 = as_matrix(A1, "A1")
    if A0.shape != A1.shape:
        raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
    return A0, A1


def _check_orders(K, L):
    if int(K) != K or int(L) != L:
        raise InvalidArgumentError("K and L must be integers")
    if K < 0 or L < 0:
        raise InvalidArgumentError(f"K and L must be non-negative, got K={K}, L={L}")
    return int(K), int(L)


@dataclass(frozen=True)
class QTable:
    """Dense storage of ``Q_{k+1}(l tau)`` for ``0 <= k <= K``, ``0 <= l <= L``.

    ``data[k, l]`` holds ``Q_{k+1}(l tau)``; entries with ``l > k`` are zero.
    """

    A0: np.ndarray
    A1: np.ndarray
    K: int
    L: int
    data: np.ndarray = field(repr=False)
    tau: float | None = None

    def entry(self, k, l):
        """Return ``Q_{k+1}(l tau)``; zero outside the stored triangle."""
        if k < 0 or l < 0 or l > k:
            return np.zeros_like(self.A0)
        if k > self.K or l > self.L:
            raise InvalidArgumentError(f"(k={k}, l={l}) outside table with K={self.K}, L={self.L}")
        return self.data[k, l].copy()

    def __getitem__(self, kl):
        return self.entry(*kl)

    @property
    def dim(self):
        return self.A0.shape[0]


def _recurse(A0, A1, K, L, scaled):
    d = A0.shape[0]
    data = np.zeros((K + 1, L + 1, d, d))
    data[0, 0] = np.eye(d)
    for k in range(1, K + 1):
        prev = data[k - 1]
        cur = data[k]
        for l in range(0, min(k, L) + 1):
            acc = A0 @ prev[l]
            if l >= 1:
                acc = acc + A1 @ prev[l - 1]
            cur[l] = acc / k if scaled else acc
    return data


def build(A0, A1, K, L, tau=None):
    """Fill ``Q_{k+1}(l tau)`` for ``k <= K``, ``l <= L`` by the Pascal-type recursion.

    Entries grow like ``(|A0| + |A1|)^k``; keep ``K`` modest (tens) or use
    :func:`build_scaled` for evaluation work.
    """
    A0, A1 = _check_pair(A0, A1)
    K, L = _check_orders(K, L)
    data = _recurse(A0, A1, K, L, scaled=False)
    if not np.all(np.isfinite(data)):
        raise InvalidArgumentError("Q table overflowed; reduce K")
    data.setflags(write=False)
    return QTable(A0=A0, A1=A1, K=K, L=L, data=data, tau=tau)


def build_scaled(A0, A1, K, L):
    """Array ``C[k, l] = Q_{k+1}(l tau) / k!`` of shape ``(K+1, L+1, d, d)``.

    Same recursion with the factorial folded in, so the entries stay bounded
    by ``(|A0| + |A1|)^k / k!`` and never overflow.
    """
    A0, A1 = _check_pair(A0, A1)
    K, L = _check_orders(K, L)
    return _recurse(A0, A1, K, L, scaled=True)


def entry_commuting(A0, A1, k, l):
    """``binom(k, l) A0^(k-l) A1^l``, valid when A0 and A1 commute.

    Returns the zero matrix for ``l > k`` (lower-triangular convention).
    Commutativity is the caller's responsibility.
    """
    A0, A1 = _check_pair(A0, A1)
    if k < 0 or l < 0:
        raise InvalidArgumentError("k and l must be non-negative")
    if l > k:
        return np.zeros_like(A0)
    return comb(k, l) * np.linalg.matrix_power(A0, k - l) @ np.linalg.matrix_power(A1, l)
