"""Fundamental solution S(t; tau) of ``S' = A0 S(t) + A1 S(t - tau)``.

Initial data: ``S = 0`` on ``[-tau, 0)`` and ``S(0) = I``.  Four evaluation
routes are provided:

* :func:`eval_pure_delayed`     -- ``A0 = 0``; finite sum, exact.
* :func:`eval_permutable`       -- ``A0 A1 = A1 A0``; exponential times a
  delayed exponential.
* :func:`eval_nonpermutable`    -- general pair; truncated double series over
  the Q table.
* :func:`dyson_phillips_partial` -- partial sums of iterated convolutions,
  evaluated by quadrature.  Slow, used as an oracle.

Every evaluator accepts a scalar ``t`` (returns a ``(d, d)`` array) or a 1-D
array of times (returns a ``(len(t), d, d)`` stack).  A time that is an exact
multiple ``n tau`` belongs to the piece ``((n-1) tau, n tau]``.
"""
from dataclasses import dataclass, field
from enum import Enum
from math import lgamma, log, factorial
import threading

import numpy as np

from . import qkernel
from .errors import InvalidArgumentError, PreconditionError, TruncationError, NumericRangeError
from .matcore import as_matrix, expm, commutator, opnorm
from .quadrature import panel_edges, _rule

__all__ = [
    "Method",
    "TruncationPolicy",
    "FundamentalSolution",
    "piece_index",
    "eval_pure_delayed",
    "eval_permutable",
    "eval_nonpermutable",
    "dyson_phillips_partial",
    "resolvent_series_check",
    "series_tail_bound",
    "is_commuting",
]


class Method(str, Enum):
    PURE_DELAYED = "pure_delayed"
    PERMUTABLE = "permutable"
    NONPERMUTABLE = "nonpermutable"
    DYSON_PHILLIPS = "dyson_phillips"


@dataclass(frozen=True)
class TruncationPolicy:
    """Truncation controls.

    tol         -- target absolute entrywise error of the series tail
    Kmax        -- cap on the power index k of the Q series
    quad_points -- Gauss-Legendre nodes per panel in the Dyson-Phillips route

    Tail estimates use the growth bound ``|exp(A0 t)| <= exp(|A0| t)``, i.e.
    ``M = 1`` and ``omega = |A0|`` in the induced 2-norm.
    """

    tol: float = 1e-12
    Kmax: int = 300
    quad_points: int = 16

    def __post_init__(self):
        if not (self.tol > 0 and np.isfinite(self.tol)):
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if self.Kmax < 1:
            raise InvalidArgumentError(f"Kmax must be >= 1, got {self.Kmax}")
        if self.quad_points < 2:
            raise InvalidArgumentError(f"quad_points must be >= 2, got {self.quad_points}")


def _check_tau(tau):
    tau = float(tau)
    if not (tau > 0 and np.isfinite(tau)):
        raise InvalidArgumentError(f"tau must be positive and finite, got {tau}")
    return tau


def _times(t):
    ts = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(ts)):
        raise InvalidArgumentError("t must be finite")
    if ts.ndim > 1:
        raise InvalidArgumentError("t must be a scalar or a 1-D array")
    return np.atleast_1d(ts), ts.ndim == 0


def piece_index(t, tau):
    """Index n with ``n tau < t <= (n+1) tau`` (0 for ``t <= 0``)."""
    ts = np.asarray(t, dtype=float)
    n = np.ceil(ts / tau) - 1
    n = np.where(ts > 0, np.maximum(n, 0), 0).astype(int)
    return n if ts.ndim else int(n)


def _apply_initial_data(out, ts):
    d = out.shape[-1]
    out[ts < 0] = 0.0
    out[ts == 0] = np.eye(d)
    return out


def is_commuting(A0, A1, rtol=1e-10):
    """True when ``|[A0, A1]| <= rtol (1 + |A0| |A1|)``."""
    return opnorm(commutator(A0, A1)) <= rtol * (1.0 + opnorm(A0) * opnorm(A1))


def series_tail_bound(x, K):
    """Upper bound on ``sum_{k > K} x^k / k!`` for ``x >= 0``.

    Ratio-test bound ``x^(K+1)/(K+1)! / (1 - x/(K+2))``; infinite when
    ``K + 2 <= x``.
    """
    if x == 0:
        return 0.0
    if K + 2 <= x:
        return float("inf")
    log_first = (K + 1) * log(x) - lgamma(K + 2)
    return float(np.exp(log_first) / (1.0 - x / (K + 2)))


def _choose_order(x, tol, Kmax):
    K = 0
    while K <= Kmax:
        if series_tail_bound(x, K) < tol:
            return K
        K += 1
    bound = series_tail_bound(x, Kmax)
    raise TruncationError(
        f"series tail bound {bound:.3e} still above tol={tol:.1e} at Kmax={Kmax}", achieved_bound=bound
    )


# --- pure delayed exponential ------------------------------------------------


def eval_pure_delayed(A1, tau, t):
    """Delayed exponential ``sum_{l<=n} A1^l (t - l tau)^l / l!`` on ``(n tau, (n+1) tau]``.

    Zero for ``t < 0`` and the identity at ``t = 0``.
    """
    A1 = as_matrix(A1, "A1")
    tau = _check_tau(tau)
    ts, scalar = _times(t)
    d = A1.shape[0]
    n = piece_index(ts, tau)
    n_max = int(n.max()) if ts.size else 0
    powers = np.empty((n_max + 1, d, d))
    powers[0] = np.eye(d)
    for l in range(1, n_max + 1):
        powers[l] = powers[l - 1] @ A1 / l
    ls = np.arange(n_max + 1)
    s = np.clip(ts[:, None] - ls[None, :] * tau, 0.0, None)
    weights = np.where(ls[None, :] <= n[:, None], s ** ls[None, :], 0.0)
    out = np.einsum("ml,lij->mij", weights, powers)
    _apply_initial_data(out, ts)
    return out[0] if scalar else out


# --- permutable pair ---------------------------------------------------------


def _require_commuting(A0, A1):
    c = opnorm(commutator(A0, A1))
    limit = 1e-10 * (1.0 + opnorm(A0) * opnorm(A1))
    if c > limit:
        raise PreconditionError(f"A0 and A1 do not commute: |[A0, A1]| = {c:.3e} > {limit:.3e}")


def eval_permutable(A0, A1, tau, t, form="product"):
    """Fundamental solution for commuting ``A0, A1``.

    ``form="product"`` evaluates ``exp(A0 t) exp_tau(A2 t)`` with
    ``A2 = A1 exp(-A0 tau)``.  ``form="factored"`` evaluates the same function
    as ``sum_l A1^l (t - l tau)^l / l! exp(A0 (t - l tau))``, which never forms
    ``exp(-A0 tau)`` and so stays in range when ``A0`` is strongly dissipative.
    """
    A0 = as_matrix(A0, "A0")
    A1 = as_matrix(A1, "A1")
    if A0.shape != A1.shape:
        raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
    tau = _check_tau(tau)
    _require_commuting(A0, A1)
    ts, scalar = _times(t)
    if form == "product":
        with np.errstate(over="ignore", invalid="ignore"):
            A2 = A1 @ expm(A0, -tau)
        if not np.all(np.isfinite(A2)):
            raise NumericRangeError("A1 exp(-A0 tau) overflows; use form='factored'")
        out = expm(A0, np.clip(ts, 0.0, None)) @ eval_pure_delayed(A2, tau, ts)
    elif form == "factored":
        out = _permutable_factored(A0, A1, tau, ts)
    else:
        raise InvalidArgumentError(f"unknown form {form!r}")
    if not np.all(np.isfinite(out)):
        raise NumericRangeError("fundamental solution left the floating point range")
    _apply_initial_data(out, ts)
    return out[0] if scalar else out


def _permutable_factored(A0, A1, tau, ts):
    d = A0.shape[0]
    n = piece_index(ts, tau)
    out = np.zeros((ts.size, d, d))
    power = np.eye(d)
    for l in range(int(n.max()) + 1 if ts.size else 0):
        if l:
            power = power @ A1 / l
        sel = (n >= l) & (ts > 0)
        if not sel.any():
            continue
        s = ts[sel] - l * tau
        term = (s**l)[:, None, None] * (power @ expm(A0, s))
        if not np.all(np.isfinite(term)):
            raise NumericRangeError(f"term l={l} of the factored series overflowed")
        out[sel] += term
    return out


# --- non-permutable pair -----------------------------------------------------


class _ScaledTableCache:
    """Grow-only cache of ``Q_{k+1}(l) / k!`` for one (A0, A1) pair."""

    def __init__(self, A0, A1):
        self.A0, self.A1 = A0, A1
        self._lock = threading.Lock()
        self._table = None
        self._K = self._L = -1

    def get(self, K, L):
        with self._lock:
            if K > self._K or L > self._L:
                self._K, self._L = max(K, self._K), max(L, self._L)
                self._table = qkernel.build_scaled(self.A0, self.A1, self._K, self._L)
            return self._table


def _nonpermutable(A0, A1, tau, ts, trunc, cache=None):
    d = A0.shape[0]
    out = np.zeros((ts.size, d, d))
    pos = ts > 0
    if not pos.any():
        return out
    n = piece_index(ts, tau)
    x = (opnorm(A0) + opnorm(A1)) * float(ts.max())
    K = _choose_order(x, trunc.tol, trunc.Kmax)
    L = int(n.max())
    table = cache.get(K, L) if cache is not None else qkernel.build_scaled(A0, A1, K, L)
    for l in range(L + 1):
        sel = pos & (n >= l)
        if not sel.any():
            continue
        s = (ts[sel] - l * tau)[:, None, None]
        # Horner in s over k = K..l; lower k vanish by triangularity
        acc = np.broadcast_to(table[K, l], (s.shape[0], d, d)).copy()
        for k in range(K - 1, l - 1, -1):
            acc = acc * s + table[k, l]
        if l:
            acc = acc * s**l
        out[sel] += acc
    return out


def eval_nonpermutable(A0, A1, tau, t, trunc=None):
    """Truncated series ``sum_{l<=n} sum_{k>=l} Q_{k+1}(l tau) (t - l tau)^k / k!``.

    The cut-off K is the smallest order with
    ``sum_{k>K} ((|A0| + |A1|) t)^k / k! < trunc.tol``, which bounds the
    neglected tail in operator norm.  Raises :class:`TruncationError` if
    ``trunc.Kmax`` is not enough.
    """
    A0 = as_matrix(A0, "A0")
    A1 = as_matrix(A1, "A1")
    if A0.shape != A1.shape:
        raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
    tau = _check_tau(tau)
    trunc = trunc or TruncationPolicy()
    ts, scalar = _times(t)
    out = _nonpermutable(A0, A1, tau, ts, trunc)
    _apply_initial_data(out, ts)
    return out[0] if scalar else out


# --- delayed Dyson-Phillips series -------------------------------------------


def _dp_term(A0, A1, tau, n, ts, q):
    """``S_n(t, n tau)`` for every t in `ts` (zero where ``t < n tau``)."""
    d = A0.shape[0]
    if n == 0:
        out = np.zeros((ts.size, d, d))
        ok = ts >= 0
        out[ok] = expm(A0, ts[ok])
        return out
    out = np.zeros((ts.size, d, d))
    start = n * tau
    active = np.nonzero(ts > start)[0]
    if active.size == 0:
        return out
    x, w = _rule(q)
    nodes, weights, owner = [], [], []
    for i in active:
        t = ts[i]
        last = int(np.floor(t / tau))
        edges = np.asarray(panel_edges(start, t, [k * tau for k in range(n + 1, last + 1)]))
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        nodes.append(((0.5 * (lo + hi))[:, None] + half[:, None] * x).ravel())
        weights.append((half[:, None] * w).ravel())
        owner.append(np.full(nodes[-1].size, i))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    owner = np.concatenate(owner)
    inner = _dp_term(A0, A1, tau, n - 1, nodes - tau, q)
    integrand = expm(A0, ts[owner] - nodes) @ (A1 @ inner)
    np.add.at(out, owner, weights[:, None, None] * integrand)
    return out


def dyson_phillips_partial(A0, A1, tau, t, N, quad_points=16):
    """Partial sum ``sum_{n<=N} S_n(t, n tau) 1_{t >= n tau}`` of the delayed Dyson-Phillips series.

    ``S_0(t) = exp(A0 t)`` and
    ``S_n(t) = int_{n tau}^t exp(A0 (t - s)) A1 S_{n-1}(s - tau) ds``, each
    integral computed by composite Gauss-Legendre with `quad_points` nodes on
    panels split at multiples of tau.  Terms with ``n tau >= t`` vanish, so
    the sum is exact in N once ``N >= ceil(t / tau)``.
    """
    A0 = as_matrix(A0, "A0")
    A1 = as_matrix(A1, "A1")
    if A0.shape != A1.shape:
        raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
    tau = _check_tau(tau)
    if N < 0:
        raise InvalidArgumentError(f"N must be >= 0, got {N}")
    if quad_points < 2:
        raise InvalidArgumentError(f"quad_points must be >= 2, got {quad_points}")
    ts, scalar = _times(t)
    out = np.zeros((ts.size, A0.shape[0], A0.shape[0]))
    for n in range(int(N) + 1):
        out += _dp_term(A0, A1, tau, n, ts, int(quad_points))
    _apply_initial_data(out, ts)
    return out[0] if scalar else out


# --- resolvent identity --------------------------------------------------------


def resolvent_series_check(A0, A1, tau, lambda0, N):
    """Residual of the truncated Neumann series for ``(lambda0 I - A0 - A1 e^{-lambda0 tau})^{-1}``.

    Returns ``|(lambda0 I - A0 - A1 e^{-lambda0 tau}) P_N - I|`` where
    ``P_N = sum_{n<=N} R (A1 R)^n e^{-n lambda0 tau}`` and
    ``R = (lambda0 I - A0)^{-1}``.  Algebraically the residual equals
    ``|B^{N+1}|`` with ``B = A1 R e^{-lambda0 tau}``, so it decays at least
    like ``|B|^{N+1}``.
    """
    A0 = as_matrix(A0, "A0")
    A1 = as_matrix(A1, "A1")
    if A0.shape != A1.shape:
        raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
    tau = _check_tau(tau)
    lam = float(lambda0)
    if N < 0:
        raise InvalidArgumentError(f"N must be >= 0, got {N}")
    d = A0.shape[0]
    shifted = lam * np.eye(d) - A0
    if np.linalg.cond(shifted) > 1e14:
        raise InvalidArgumentError(f"lambda0 = {lam} is (numerically) an eigenvalue of A0")
    R = np.linalg.solve(shifted, np.eye(d))
    decay = np.exp(-lam * tau)
    B = A1 @ R * decay
    if opnorm(B) >= 1.0:
        raise PreconditionError(f"|A1 R(lambda0; A0)| e^(-lambda0 tau) = {opnorm(B):.3f} >= 1; Neumann series diverges")
    term = R.copy()
    partial = R.copy()
    for _ in range(int(N)):
        term = term @ A1 @ R * decay
        partial = partial + term
    residual = (shifted - A1 * decay) @ partial - np.eye(d)
    return opnorm(residual)


# --- front object ----------------------------------------------------------------


@dataclass(frozen=True)
class FundamentalSolution:
    """A fundamental solution bound to one evaluation route.

    Call it with a scalar time or an array of times.  Use :meth:`auto` to
    pick the cheapest exact route for a given pair.
    """

    A0: np.ndarray
    A1: np.ndarray
    tau: float
    method: Method = Method.NONPERMUTABLE
    trunc: TruncationPolicy = field(default_factory=TruncationPolicy)
    _cache: _ScaledTableCache = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A0 = as_matrix(self.A0, "A0")
        A1 = as_matrix(self.A1, "A1")
        if A0.shape != A1.shape:
            raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
        A0.setflags(write=False)
        A1.setflags(write=False)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "tau", _check_tau(self.tau))
        object.__setattr__(self, "method", Method(self.method))
        if self.method is Method.PURE_DELAYED and np.any(A0 != 0):
            raise PreconditionError("pure delayed route needs A0 = 0")
        if self.method is Method.PERMUTABLE:
            _require_commuting(A0, A1)
        object.__setattr__(self, "_cache", _ScaledTableCache(A0, A1))

    @classmethod
    def auto(cls, A0, A1, tau, trunc=None):
        A0 = as_matrix(A0, "A0")
        A1 = as_matrix(A1, "A1")
        trunc = trunc or TruncationPolicy()
        if not np.any(A0):
            method = Method.PURE_DELAYED
        elif is_commuting(A0, A1):
            method = Method.PERMUTABLE
        else:
            method = Method.NONPERMUTABLE
        return cls(A0, A1, tau, method, trunc)

    @property
    def dim(self):
        return self.A0.shape[0]

    def __call__(self, t):
        ts, scalar = _times(t)
        if self.method is Method.PURE_DELAYED:
            out = eval_pure_delayed(self.A1, self.tau, ts)
        elif self.method is Method.PERMUTABLE:
            out = _permutable_factored(self.A0, self.A1, self.tau, ts)
            if not np.all(np.isfinite(out)):
                raise NumericRangeError("fundamental solution left the floating point range")
        elif self.method is Method.NONPERMUTABLE:
            out = _nonpermutable(self.A0, self.A1, self.tau, ts, self.trunc, self._cache)
        else:
            N = int(piece_index(ts.max(), self.tau)) + 1 if ts.size else 0
            out = dyson_phillips_partial(self.A0, self.A1, self.tau, ts, N, self.trunc.quad_points)
        out = _apply_initial_data(np.array(out, copy=True), ts)
        return out[0] if scalar else out
