"""Delayed heat equation on ``[0, pi]`` with homogeneous Dirichlet data.

    u_t(x, t) = a^2 u_xx(x, t) + b u(x, t - tau) + psi(x, t),
    u(x, t)   = phi(x, t)          for t in [-tau, 0],
    u(0, t)   = u(pi, t) = 0.

The spectral solver expands in ``sin(n x)``.  Each amplitude obeys the scalar
delay equation ``c' = -a^2 n^2 c + b c(t - tau) + Psi_n(t)`` with history
``Phi_n``, and is solved with :mod:`delaykit.ivpsolver`.  The fundamental
solution of a mode is evaluated term by term as
``b^k exp(-a^2 n^2 (t - k tau)) (t - k tau)^k / k!``, so the huge factor
``b exp(a^2 n^2 tau)`` never appears.

:func:`solve_fd_oracle` is an independent check: second-order finite
differences in x and a fourth-order method of steps in t.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import DivergedError, InvalidArgumentError, UnsupportedOperationError
from .fundsol import Method, TruncationPolicy
from .ivpsolver import DelaySystem, solve_nonhomogeneous, _map
from .quadrature import _rule

__all__ = [
    "HeatProblem",
    "SpectralConfig",
    "FieldGrid",
    "fourier_coeffs",
    "orthonormal_coeffs",
    "solve_spectral",
    "solve_fd_oracle",
]


@dataclass(frozen=True)
class HeatProblem:
    """Data of the delayed heat problem.

    phi, psi and dphi_dt take ``(x, t)`` with `x` a numpy array and `t` a
    float, and return an array shaped like `x`.
    """

    a: float
    b: float
    tau: float
    phi: Callable
    psi: Optional[Callable] = None
    dphi_dt: Optional[Callable] = None

    def __post_init__(self):
        for name in ("a", "b", "tau"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be positive, got {self.tau}")
        ends = np.array([0.0, np.pi])
        for t in np.linspace(-self.tau, 0.0, 5):
            vals = np.asarray(self.phi(ends, t), dtype=float)
            if np.any(np.abs(vals) > 1e-10):
                raise InvalidArgumentError(f"phi must vanish at x=0 and x=pi (t={t:g}: {vals})")


@dataclass(frozen=True)
class SpectralConfig:
    n_modes: int = 64
    quad_points_x: int = 128
    quad_tol: float = 1e-10

    def __post_init__(self):
        if self.n_modes < 1 or self.quad_points_x < 1 or not self.quad_tol > 0:
            raise InvalidArgumentError("n_modes, quad_points_x and quad_tol must be positive")


@dataclass
class FieldGrid:
    """Space-time samples: ``values[i, j] = u(xs[j], ts[i])``."""

    xs: np.ndarray
    ts: np.ndarray
    values: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)
    modes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ts = np.asarray(self.ts, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.ts.size, self.xs.size):
            raise InvalidArgumentError("values must have shape (len(ts), len(xs))")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("field contains non-finite values")


class _SineProjector:
    """Composite Gauss-Legendre projection onto ``sin(n x)``, ``n = 1..n_max``."""

    panel_order = 16

    def __init__(self, n_max, quad_points_x):
        # enough nodes to resolve the highest mode as well as the data
        total = max(int(quad_points_x), 2 * int(n_max) + 32)
        panels = -(-total // self.panel_order)
        x, w = _rule(self.panel_order)
        edges = np.linspace(0.0, np.pi, panels + 1)
        half = 0.5 * np.diff(edges)
        self.nodes = ((0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * x).ravel()
        weights = (half[:, None] * w).ravel()
        n = np.arange(1, n_max + 1)
        self.kernel = (2.0 / np.pi) * np.sin(np.outer(n, self.nodes)) * weights

    def __call__(self, values):
        return self.kernel @ values


def fourier_coeffs(f, n_max, quad_points_x=64):
    """Sine coefficients ``(2/pi) int_0^pi f(x) sin(n x) dx`` for ``n = 1..n_max``.

    `f` is evaluated once on an array of quadrature nodes.
    """
    if n_max < 1:
        raise InvalidArgumentError("n_max must be >= 1")
    proj = _SineProjector(n_max, quad_points_x)
    return proj(np.asarray(f(proj.nodes), dtype=float))


def orthonormal_coeffs(f, n_max, quad_points_x=64):
    """``<f, u_n>`` with the orthonormal basis ``u_n = sqrt(2/pi) sin(n x)``.

    Equal to ``sqrt(pi/2)`` times :func:`fourier_coeffs`, so
    ``sum <f, u_n> u_n(x) = sum Phi_n sin(n x)``.
    """
    proj = _SineProjector(n_max, quad_points_x)
    w = proj.kernel * (np.pi / 2.0) * np.sqrt(2.0 / np.pi)
    return w @ np.asarray(f(proj.nodes), dtype=float)


class _ModalSource:
    """Modal coefficients of a time-dependent field ``f(x, t)``.

    ``many(ss)`` evaluates `f` once on the ``(len(ss), n_nodes)`` grid by
    broadcasting; fields that do not broadcast in t fall back to one call per time.
    """

    def __init__(self, f, proj):
        self.f = f
        self.proj = proj

    def _field(self, ss):
        nodes = self.proj.nodes
        try:
            vals = np.asarray(self.f(nodes[None, :], ss[:, None]), dtype=float)
            return np.broadcast_to(vals, (ss.size, nodes.size))
        except (ValueError, TypeError):
            return np.array([np.broadcast_to(np.asarray(self.f(nodes, float(s)), dtype=float), nodes.shape) for s in ss])

    def many(self, ss, mode=None):
        """Coefficients at times `ss`, all modes or only the 0-based `mode` (as a column)."""
        ss = np.asarray(ss, dtype=float).ravel()
        k = self.proj.kernel if mode is None else self.proj.kernel[mode : mode + 1]
        return self._field(ss) @ k.T

    def __call__(self, t):
        return self.many([t])[0]


def _sine_basis(xs, n_modes):
    basis = np.sin(np.outer(xs, np.arange(1, n_modes + 1)))
    basis[(xs == 0.0) | (xs == np.pi)] = 0.0
    return basis


def solve_spectral(p, cfg=None, xs=None, ts=None, *, route="continuous", trunc=None):
    """Truncated sine-series solution sampled on ``xs x ts``.

    ``route="continuous"`` uses the phi(0)-based representation per mode;
    ``route="differentiable"`` uses the phi(-tau)/phi'-based one and needs
    ``p.dphi_dt``.  The returned grid carries the modal amplitudes in
    ``.modes`` (shape ``(len(ts), n_modes)``) and the largest amplitude among
    the last four modes in ``meta["coefficient_tail"]`` (several modes, so a
    parity zero cannot hide the decay).
    """
    cfg = cfg or SpectralConfig()
    xs = np.linspace(0.0, np.pi, 65) if xs is None else np.asarray(xs, dtype=float)
    ts = np.linspace(0.0, 2 * p.tau, 21) if ts is None else np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise InvalidArgumentError("solve_spectral needs t >= 0")
    if route == "differentiable" and p.dphi_dt is None:
        raise UnsupportedOperationError("route='differentiable' needs dphi_dt")
    trunc = trunc or TruncationPolicy()
    proj = _SineProjector(cfg.n_modes, cfg.quad_points_x)
    Phi = _ModalSource(p.phi, proj)
    Psi = _ModalSource(p.psi, proj) if p.psi is not None else None
    dPhi = _ModalSource(p.dphi_dt, proj) if p.dphi_dt is not None else None

    def mode(n):
        i = n - 1
        sys = DelaySystem(
            [[-(p.a**2) * n * n]],
            [[p.b]],
            p.tau,
            phi=lambda ss: Phi.many(ss, i),
            dphi=(lambda ss: dPhi.many(ss, i)) if dPhi is not None else None,
            g=(lambda ss: Psi.many(ss, i)) if Psi is not None else None,
            vectorized=True,
        )
        sol = solve_nonhomogeneous(
            sys, ts, trunc=trunc, quad_tol=cfg.quad_tol, method=Method.PERMUTABLE, history_route=route
        )
        return sol.values[:, 0]

    amplitudes = np.column_stack(_map(mode, list(range(1, cfg.n_modes + 1))))
    values = amplitudes @ _sine_basis(xs, cfg.n_modes).T
    return FieldGrid(
        xs,
        ts,
        values,
        "spectral",
        {"n_modes": cfg.n_modes, "quad_tol": cfg.quad_tol, "route": route,
         "coefficient_tail": float(np.abs(amplitudes[:, -4:]).max()) if amplitudes.size else 0.0},
        modes=amplitudes,
    )


def _hermite(theta, h, y0, y1, m0, m1):
    t2 = theta * theta
    t3 = t2 * theta
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + theta) * h * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m1


def solve_fd_oracle(p, m_interior=200, h=None, t_end=None, *, scheme="lawson"):
    """Method of lines with central differences and a fourth-order method of steps.

    The interior grid has `m_interior` points, ``dx = pi / (m_interior + 1)``.
    `h` must divide tau.  Two time integrators are available:

    * ``"lawson"`` (default) -- integrating-factor RK4: the stiff diffusion
      part is propagated exactly with ``expm(L h/2)``, and classical RK4 handles
      the delay and forcing terms.  Stable for any h.
    * ``"rk4"`` -- plain explicit RK4, stable only for
      ``h < 2.78 dx^2 / (4 a^2)``.  Raises :class:`DivergedError` once the
      solution exceeds 1e12.

    Lagged values at half steps come from cubic Hermite interpolation of the
    stored history.  Returns a :class:`FieldGrid` on the time nodes, with the
    boundary points included.
    """
    if m_interior < 8:
        raise InvalidArgumentError("m_interior must be >= 8")
    tau = p.tau
    h = tau / 200 if h is None else float(h)
    t_end = 2 * tau if t_end is None else float(t_end)
    M = int(round(tau / h))
    if M < 1 or abs(M * h - tau) > 1e-9 * tau:
        raise InvalidArgumentError(f"step h={h} does not divide tau={tau}")
    h = tau / M
    if scheme not in ("lawson", "rk4"):
        raise InvalidArgumentError(f"unknown scheme {scheme!r}")

    dx = np.pi / (m_interior + 1)
    x = dx * np.arange(1, m_interior + 1)
    Lap = (p.a**2 / dx**2) * (
        np.diag(np.full(m_interior, -2.0)) + np.diag(np.ones(m_interior - 1), 1) + np.diag(np.ones(m_interior - 1), -1)
    )

    n_steps = int(np.floor(t_end / h + 1e-9))
    times = [j * h for j in range(n_steps + 1)]
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times.append(t_end)
    times = np.array(times)
    U = np.zeros((times.size, m_interior))
    F = np.zeros((times.size, m_interior))

    def history(s):
        return np.asarray(p.phi(x, s), dtype=float)

    def forcing(t):
        if p.psi is None:
            return 0.0
        return np.asarray(p.psi(x, t), dtype=float)

    def lag(s):
        if s <= 0:
            return history(s)
        j = min(int(np.floor(s / h)), times.size - 2)
        dt = times[j + 1] - times[j]
        theta = (s - times[j]) / dt
        if theta == 0.0:
            return U[j]
        return _hermite(theta, dt, U[j], U[j + 1], F[j], F[j + 1])

    def source(t, delayed):
        return p.b * delayed + forcing(t)

    props = {}

    def propagators(dt):
        key = round(dt / h, 12)
        if key not in props:
            half = scipy.linalg.expm(Lap * (0.5 * dt))
            props[key] = (half, half @ half)
        return props[key]

    U[0] = history(0.0)
    F[0] = Lap @ U[0] + source(0.0, history(-tau))
    for j in range(times.size - 1):
        t, dt = times[j], times[j + 1] - times[j]
        u = U[j]
        mid = lag(t + 0.5 * dt - tau)
        end_lag = lag(t + dt - tau)
        if scheme == "rk4":
            k1 = F[j]
            k2 = Lap @ (u + 0.5 * dt * k1) + source(t + 0.5 * dt, mid)
            k3 = Lap @ (u + 0.5 * dt * k2) + source(t + 0.5 * dt, mid)
            k4 = Lap @ (u + dt * k3) + source(t + dt, end_lag)
            new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            E, E2 = propagators(dt)
            # the source is state independent, so stages 2 and 3 coincide
            n1 = source(t, lag(t - tau))
            n2 = source(t + 0.5 * dt, mid)
            n4 = source(t + dt, end_lag)
            new = E2 @ u + dt / 6.0 * (E2 @ n1 + 4.0 * (E @ n2) + n4)
        if not np.all(np.isfinite(new)) or np.abs(new).max() > 1e12:
            raise DivergedError(f"FD solution diverged at t={times[j + 1]:.4g}; use a smaller step than h={h:.3g}")
        U[j + 1] = new
        F[j + 1] = Lap @ new + source(times[j + 1], end_lag)

    xs = np.concatenate([[0.0], x, [np.pi]])
    values = np.zeros((times.size, xs.size))
    values[:, 1:-1] = U
    return FieldGrid(xs, times, values, f"fd_{scheme}", {"m_interior": m_interior, "step": h, "dx": dx})
