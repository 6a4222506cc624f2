"""Initial value problems ``u' = A0 u(t) + A1 u(t - tau) + g(t)``, ``u = phi`` on ``[-tau, 0]``.

Two independent routes:

* representation formulas built on the fundamental solution
  (:func:`solve_homogeneous`, :func:`solve_homogeneous_c1`,
  :func:`solve_nonhomogeneous`), with all integrals done by adaptive
  Gauss-Legendre on panels split where the kernel has kinks;
* a classical method-of-steps RK4 integrator (:func:`solve_method_of_steps`)
  that never touches the fundamental solution.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOperationError
from .fundsol import FundamentalSolution, Method, TruncationPolicy
from .matcore import as_matrix, opnorm
from .quadrature import adaptive_gauss_legendre

__all__ = [
    "DelaySystem",
    "SolutionGrid",
    "solve_homogeneous",
    "solve_homogeneous_c1",
    "solve_nonhomogeneous",
    "solve_method_of_steps",
    "max_threads",
]


def max_threads():
    """Worker cap from ``DELAYKIT_THREADS`` (default 1)."""
    raw = os.environ.get("DELAYKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DelaySystem:
    """One delay IVP instance.

    phi  -- history ``t -> vector`` on ``[-tau, 0]``
    dphi -- derivative of phi, only needed by :func:`solve_homogeneous_c1`
    g    -- forcing ``t -> vector`` on ``[0, inf)``; ``None`` means zero

    With ``vectorized=True`` the callables receive a 1-D array of m times and
    return an ``(m, d)`` array, which removes per-node Python overhead in the
    quadratures.
    """

    A0: np.ndarray
    A1: np.ndarray
    tau: float
    phi: Callable[[float], np.ndarray]
    dphi: Optional[Callable[[float], np.ndarray]] = None
    g: Optional[Callable[[float], np.ndarray]] = None
    vectorized: bool = False

    def __post_init__(self):
        A0 = as_matrix(self.A0, "A0")
        A1 = as_matrix(self.A1, "A1")
        if A0.shape != A1.shape:
            raise InvalidArgumentError(f"A0 is {A0.shape} but A1 is {A1.shape}")
        tau = float(self.tau)
        if not (tau > 0 and np.isfinite(tau)):
            raise InvalidArgumentError(f"tau must be positive and finite, got {self.tau}")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "tau", tau)
        self.history(0.0)
        if self.g is not None:
            self.forcing(0.0)

    @property
    def dim(self):
        return self.A0.shape[0]

    def _many(self, fn, ss, name):
        ss = np.asarray(ss, dtype=float).ravel()
        try:
            if self.vectorized:
                out = np.asarray(fn(ss), dtype=float).reshape(ss.size, self.dim)
            else:
                out = np.array([fn(float(s)) for s in ss], dtype=float).reshape(ss.size, self.dim)
        except ValueError as exc:
            raise InvalidArgumentError(f"{name} must return vectors of length {self.dim}: {exc}") from None
        if not np.all(np.isfinite(out)):
            raise InvalidArgumentError(f"{name} returned non-finite values")
        return out

    def history(self, s):
        return self._many(self.phi, [s], "phi")[0]

    def forcing(self, s):
        if self.g is None:
            return np.zeros(self.dim)
        return self._many(self.g, [s], "g")[0]

    def history_many(self, ss):
        return self._many(self.phi, ss, "phi")

    def dhistory_many(self, ss):
        if self.dphi is None:
            raise UnsupportedOperationError("history derivative dphi not supplied")
        return self._many(self.dphi, ss, "dphi")

    def forcing_many(self, ss):
        if self.g is None:
            return np.zeros((np.size(ss), self.dim))
        return self._many(self.g, ss, "g")


@dataclass
class SolutionGrid:
    """Sampled solution: ``values[i]`` is the state at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size:
            raise InvalidArgumentError("times and values disagree in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidArgumentError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("solution contains non-finite values")

    def __len__(self):
        return self.times.size


def _times(grid):
    ts = np.atleast_1d(np.asarray(grid, dtype=float))
    if ts.ndim != 1 or not np.all(np.isfinite(ts)):
        raise InvalidArgumentError("time grid must be a finite 1-D sequence")
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise InvalidArgumentError("time grid must be strictly increasing")
    return ts


def _fundamental(sys, method, trunc):
    trunc = trunc or TruncationPolicy()
    if method is None:
        return FundamentalSolution.auto(sys.A0, sys.A1, sys.tau, trunc)
    return FundamentalSolution(sys.A0, sys.A1, sys.tau, Method(method), trunc)


def _kinks(t, tau, lo, hi, shift, scale=None):
    """Panel breakpoints for a kernel ``S(t - shift - s)`` on ``[lo, hi]``.

    Splits wherever ``t - shift - s`` is a multiple of tau.  With a length
    `scale` (``1/|A0|`` for strongly dissipative A0), also adds points at
    ``scale * 2^i`` below each kink.  The kernel is a boundary layer there,
    and adaptive bisection alone cannot find it.
    """
    k_lo = int(np.floor((t - shift - hi) / tau)) - 1
    k_hi = int(np.ceil((t - shift - lo) / tau)) + 1
    kinks = [t - shift - k * tau for k in range(max(k_lo, 0), k_hi + 1)]
    if scale is None:
        return kinks
    points = list(kinks)
    for c in kinks:
        step = scale
        while step < tau:
            points.append(c - step)
            step *= 2.0
    return points


def _layer_scale(sys):
    rate = opnorm(sys.A0)
    return 1.0 / rate if rate * sys.tau > 8.0 else None


def _map(fn, ts):
    workers = min(max_threads(), len(ts))
    if workers <= 1:
        return [fn(t) for t in ts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ts))


def _history_integral(sys, S, t, quad_tol):
    """``int_{-tau}^{0} S(t - tau - s) A1 phi(s) ds`` (integrand vanishes for s > t - tau)."""
    tau, d = sys.tau, sys.dim
    hi = min(0.0, t - tau)
    if hi <= -tau:
        return np.zeros(d), 0.0

    def integrand(ss):
        return np.einsum("mij,mj->mi", S(t - tau - ss), sys.history_many(ss) @ sys.A1.T)

    return adaptive_gauss_legendre(integrand, -tau, hi, tol=quad_tol, breakpoints=_kinks(t, tau, -tau, hi, tau, _layer_scale(sys)))


def _forcing_integral(sys, S, t, quad_tol):
    """``int_0^t S(t - s) g(s) ds``."""
    d = sys.dim
    if sys.g is None or t <= 0:
        return np.zeros(d), 0.0

    def integrand(ss):
        return np.einsum("mij,mj->mi", S(t - ss), sys.forcing_many(ss))

    return adaptive_gauss_legendre(integrand, 0.0, t, tol=quad_tol, breakpoints=_kinks(t, sys.tau, 0.0, t, 0.0, _layer_scale(sys)))


def solve_homogeneous(sys, grid, *, trunc=None, quad_tol=1e-10, method=None):
    """``u(t) = S(t) phi(0) + int_{-tau}^0 S(t - tau - s) A1 phi(s) ds`` for ``t >= 0``.

    Only continuity of phi is needed.  Any forcing attached to `sys` is
    ignored; use :func:`solve_nonhomogeneous` for that.
    """
    ts = _times(grid)
    if ts.size and ts[0] < 0:
        raise InvalidArgumentError("solve_homogeneous needs t >= 0")
    S = _fundamental(sys, method, trunc)
    phi0 = sys.history(0.0)
    base = S(ts) @ phi0 if ts.size else np.zeros((0, sys.dim))

    def one(t):
        return _history_integral(sys, S, t, quad_tol)

    parts = _map(one, ts)
    values = base + np.array([p[0] for p in parts]).reshape(ts.size, sys.dim)
    return SolutionGrid(
        ts,
        values,
        "homogeneous",
        {"fundamental": S.method.value, "trunc_tol": S.trunc.tol, "quad_tol": quad_tol,
         "quad_error": float(sum(p[1] for p in parts))},
    )


def solve_homogeneous_c1(sys, grid, *, trunc=None, quad_tol=1e-10, method=None):
    """``u(t) = S(t + tau) phi(-tau) + int_{-tau}^0 S(t - s) [phi'(s) - A0 phi(s)] ds`` for ``t >= -tau``.

    Requires ``sys.dphi``.  On ``[-tau, 0]`` the formula reproduces the history.
    """
    if sys.dphi is None:
        raise UnsupportedOperationError("solve_homogeneous_c1 needs the history derivative dphi")
    ts = _times(grid)
    if ts.size and ts[0] < -sys.tau:
        raise InvalidArgumentError("solve_homogeneous_c1 needs t >= -tau")
    S = _fundamental(sys, method, trunc)
    tau, d = sys.tau, sys.dim
    start = sys.history(-tau)
    base = S(ts + tau) @ start if ts.size else np.zeros((0, d))

    def one(t):
        hi = min(0.0, t)
        if hi <= -tau:
            return np.zeros(d), 0.0

        def integrand(ss):
            src = sys.dhistory_many(ss) - sys.history_many(ss) @ sys.A0.T
            return np.einsum("mij,mj->mi", S(t - ss), src)

        return adaptive_gauss_legendre(integrand, -tau, hi, tol=quad_tol, breakpoints=_kinks(t, tau, -tau, hi, 0.0, _layer_scale(sys)))

    parts = _map(one, ts)
    values = base + np.array([p[0] for p in parts]).reshape(ts.size, d)
    return SolutionGrid(
        ts,
        values,
        "homogeneous_c1",
        {"fundamental": S.method.value, "trunc_tol": S.trunc.tol, "quad_tol": quad_tol,
         "quad_error": float(sum(p[1] for p in parts))},
    )


def solve_nonhomogeneous(sys, grid, *, trunc=None, quad_tol=1e-10, method=None, history_route="continuous"):
    """Homogeneous part plus the convolution ``int_0^t S(t - s) g(s) ds``.

    ``history_route="continuous"`` builds the homogeneous part with
    :func:`solve_homogeneous`; ``"differentiable"`` uses
    :func:`solve_homogeneous_c1` (needs ``sys.dphi``).
    """
    ts = _times(grid)
    if history_route == "continuous":
        hom = solve_homogeneous(sys, ts, trunc=trunc, quad_tol=quad_tol, method=method)
    elif history_route == "differentiable":
        hom = solve_homogeneous_c1(sys, ts, trunc=trunc, quad_tol=quad_tol, method=method)
    else:
        raise InvalidArgumentError(f"unknown history_route {history_route!r}")
    S = _fundamental(sys, method, trunc)

    def one(t):
        return _forcing_integral(sys, S, t, quad_tol)

    parts = _map(one, ts)
    values = hom.values + np.array([p[0] for p in parts]).reshape(ts.size, sys.dim)
    meta = dict(hom.meta)
    meta["quad_error"] += float(sum(p[1] for p in parts))
    return SolutionGrid(ts, values, "nonhomogeneous", meta)


def _hermite(theta, h, y0, y1, m0, m1):
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * y0
        + (t3 - 2 * t2 + theta) * h * m0
        + (-2 * t3 + 3 * t2) * y1
        + (t3 - t2) * h * m1
    )


def solve_method_of_steps(sys, t_end, h):
    """Classical RK4 method of steps on the uniform grid ``0, h, 2h, ...``.

    `h` must divide tau so lagged values at whole steps land on stored
    nodes; lagged values at half steps come from cubic Hermite interpolation
    of the stored states and derivatives.  Global error is O(h^4).  The final
    step is shortened so the last node is exactly `t_end`.
    """
    tau, d = sys.tau, sys.dim
    h = float(h)
    t_end = float(t_end)
    if not (h > 0 and np.isfinite(h)):
        raise InvalidArgumentError(f"step must be positive, got {h}")
    if t_end < 0:
        raise InvalidArgumentError("t_end must be >= 0")
    M = int(round(tau / h))
    if M < 1 or abs(M * h - tau) > 1e-9 * tau:
        raise InvalidArgumentError(f"step h={h} does not divide tau={tau}")
    h = tau / M
    n_full = int(np.floor(t_end / h + 1e-9))
    times = [j * h for j in range(n_full + 1)]
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times.append(t_end)
    times = np.array(times)

    U = np.zeros((times.size, d))
    F = np.zeros((times.size, d))

    def lag(s):
        if s <= 0:
            return sys.history(s)
        j = min(int(np.floor(s / h)), times.size - 2)
        theta = (s - times[j]) / (times[j + 1] - times[j])
        if theta == 0.0:
            return U[j]
        return _hermite(theta, times[j + 1] - times[j], U[j], U[j + 1], F[j], F[j + 1])

    def rhs(t, u, delayed):
        return sys.A0 @ u + sys.A1 @ delayed + sys.forcing(t)

    U[0] = sys.history(0.0)
    F[0] = rhs(0.0, U[0], sys.history(-tau))
    for j in range(times.size - 1):
        t, dt = times[j], times[j + 1] - times[j]
        u = U[j]
        mid = lag(t + 0.5 * dt - tau)
        k1 = F[j]
        k2 = rhs(t + 0.5 * dt, u + 0.5 * dt * k1, mid)
        k3 = rhs(t + 0.5 * dt, u + 0.5 * dt * k2, mid)
        end_lag = lag(t + dt - tau)
        k4 = rhs(t + dt, u + dt * k3, end_lag)
        U[j + 1] = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        F[j + 1] = rhs(t + dt, U[j + 1], end_lag)
    return SolutionGrid(times, U, "method_of_steps", {"step": h})
