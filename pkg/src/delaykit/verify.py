"""Fixed-seed invariant suite behind ``delaykit verify``.

Each check returns one number and a threshold.  Sample sizes are smaller
than in the test suite so the whole run takes a few seconds; the seeds are
fixed, so the table is reproducible to the last digit.
"""
from dataclasses import dataclass

import numpy as np

from . import qkernel
from .fundsol import (
    FundamentalSolution,
    Method,
    TruncationPolicy,
    dyson_phillips_partial,
    eval_nonpermutable,
    eval_permutable,
    resolvent_series_check,
)
from .heatdelay import HeatProblem, SpectralConfig, solve_spectral
from .ivpsolver import DelaySystem, solve_homogeneous, solve_homogeneous_c1, solve_method_of_steps, solve_nonhomogeneous
from .matcore import opnorm

__all__ = ["Check", "run_suite", "CHECKS"]

SEED = 20240607


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    upper: bool = True  # value must stay below threshold; False means above

    @property
    def passed(self):
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.upper else self.value > self.threshold


def _rng(offset):
    return np.random.default_rng(SEED + offset)


def _pair(rng, d):
    return rng.uniform(-1, 1, (d, d)), rng.uniform(-1, 1, (d, d))


def ode_residual():
    rng = _rng(1)
    worst = 0.0
    h = 1e-6
    for _ in range(5):
        A0, A1 = _pair(rng, int(rng.integers(1, 5)))
        ts = np.array([0.37, 1.41, 2.73])
        dS = (eval_nonpermutable(A0, A1, 1.0, ts + h) - eval_nonpermutable(A0, A1, 1.0, ts - h)) / (2 * h)
        rhs = A0 @ eval_nonpermutable(A0, A1, 1.0, ts) + A1 @ eval_nonpermutable(A0, A1, 1.0, ts - 1.0)
        worst = max(worst, np.abs(dS - rhs).max())
    return Check("fundsol_ode_residual", worst, 1e-5)


def cross_formula():
    rng = _rng(2)
    worst = 0.0
    ts = np.linspace(0.0, 3.0, 13)
    for _ in range(4):
        d = int(rng.integers(1, 4))
        A0 = rng.uniform(-1, 1, (d, d))
        c = rng.uniform(-1, 1, 3)
        A1 = c[0] * np.eye(d) + c[1] * A0 + c[2] * A0 @ A0
        P = eval_permutable(A0, A1, 1.0, ts)
        N = eval_nonpermutable(A0, A1, 1.0, ts, TruncationPolicy(tol=1e-10))
        D = dyson_phillips_partial(A0, A1, 1.0, ts, 3, 16)
        worst = max(worst, np.abs(P - N).max(), np.abs(P - D).max(), np.abs(N - D).max())
    return Check("fundsol_cross_formula", worst, 1e-7)


def _system(rng, d, forced):
    A0, A1 = _pair(rng, d)
    c = rng.uniform(-1, 1, (3, d))
    w = rng.uniform(0.5, 2.0, d)
    phi = lambda s: c[0] + c[1] * np.cos(w * s)
    dphi = lambda s: -c[1] * w * np.sin(w * s)
    g = (lambda s: c[2] * np.sin(w * s)) if forced else None
    return DelaySystem(A0, A1, 1.0, phi=phi, dphi=dphi, g=g)


def ivp_vs_steps():
    rng = _rng(3)
    worst = 0.0
    for i in range(3):
        sys_ = _system(rng, int(rng.integers(1, 4)), forced=bool(i % 2))
        ref = solve_method_of_steps(sys_, 3.0, 1.0 / 200)
        idx = np.arange(0, ref.times.size, 50)
        sol = solve_nonhomogeneous(sys_, ref.times[idx])
        worst = max(worst, np.abs(sol.values - ref.values[idx]).max())
    return Check("ivp_formula_vs_steps", worst, 1e-5)


def hand_value():
    # u' = u(t - 1), u = 1 on [-1, 0]: u = 1 + t on [0, 1], 1 + t + (t - 1)^2 / 2 on [1, 2]
    sys_ = DelaySystem([[0.0]], [[1.0]], 1.0, phi=lambda s: [1.0])
    formula = solve_homogeneous(sys_, [2.0]).values[0, 0]
    steps = solve_method_of_steps(sys_, 2.0, 1.0 / 200).values[-1, 0]
    return Check("ivp_hand_value_u2", max(abs(formula - 3.5), abs(steps - 3.5)), 1e-6)


def counterexample_gap():
    S = FundamentalSolution(np.eye(2), -np.eye(2), 1.0, Method.NONPERMUTABLE)
    half = S(0.6)
    return Check("semigroup_gap_counterexample", opnorm(half @ half - S(1.2)), 0.01, upper=False)


def counterexample_value():
    S = FundamentalSolution(np.eye(2), -np.eye(2), 1.0, Method.NONPERMUTABLE)
    exact = np.exp(0.2) * (np.e + 1.0 - 1.2)
    return Check("counterexample_S(1.2)", np.abs(S(1.2) - exact * np.eye(2)).max(), 1e-10)


def qtable_rows():
    rng = _rng(4)
    worst = 0.0
    for _ in range(3):
        A0, A1 = _pair(rng, 3)
        tab = qkernel.build(A0, A1, 8, 8)
        for k in range(9):
            row = sum(tab.entry(k, l) for l in range(k + 1))
            worst = max(worst, np.abs(row - np.linalg.matrix_power(A0 + A1, k)).max())
    return Check("qtable_row_sums", worst, 1e-10)


def resolvent():
    rng = _rng(5)
    worst = 0.0
    for _ in range(3):
        A0, A1 = _pair(rng, 3)
        lam = 2 * (opnorm(A0) + opnorm(A1)) + 1
        worst = max(worst, resolvent_series_check(A0, A1, 1.0, lam, 40))
    return Check("resolvent_residual_N40", worst, 1e-10)


def continuity_bound():
    rng = _rng(6)
    worst = -np.inf
    for _ in range(10):
        A0, A1 = _pair(rng, int(rng.integers(1, 5)))
        t = rng.uniform(0.0, 3.0)
        S = eval_nonpermutable(A0, A1, 1.0, t)
        bound = np.expm1((opnorm(A0) + opnorm(A1)) * t)
        worst = max(worst, opnorm(S - np.eye(A0.shape[0])) - bound)
    return Check("continuity_bound_excess", worst, 1e-12)


def heat_undelayed():
    p = HeatProblem(1.0, 0.0, 1.0, lambda x, t: np.sin(x) + 0 * t)
    ts = np.linspace(0.0, 2.0, 5)
    xs = np.linspace(0.0, np.pi, 17)
    grid = solve_spectral(p, SpectralConfig(n_modes=8), xs, ts)
    exact = np.exp(-ts)[:, None] * np.sin(xs)[None, :]
    return Check("heat_b0_exact", np.abs(grid.values - exact).max(), 1e-6)


def heat_routes():
    p = HeatProblem(
        1.0, 0.5, 1.0,
        lambda x, t: x * (np.pi - x) * (1 + t),
        dphi_dt=lambda x, t: x * (np.pi - x) + 0 * t,
    )
    ts = np.linspace(0.0, 2.0, 5)
    cfg = SpectralConfig(n_modes=16)
    a = solve_spectral(p, cfg, None, ts, route="continuous")
    b = solve_spectral(p, cfg, None, ts, route="differentiable")
    return Check("heat_route_agreement", np.abs(a.values - b.values).max(), 1e-7)


def sol1_vs_sol2():
    rng = _rng(7)
    worst = 0.0
    ts = np.linspace(0.0, 3.0, 7)
    for _ in range(3):
        sys_ = _system(rng, int(rng.integers(1, 4)), forced=False)
        worst = max(worst, np.abs(solve_homogeneous(sys_, ts).values - solve_homogeneous_c1(sys_, ts).values).max())
    return Check("sol1_vs_sol2", worst, 1e-7)


CHECKS = (
    ode_residual,
    cross_formula,
    ivp_vs_steps,
    hand_value,
    counterexample_gap,
    counterexample_value,
    qtable_rows,
    resolvent,
    continuity_bound,
    heat_undelayed,
    heat_routes,
    sol1_vs_sol2,
)


def run_suite(checks=CHECKS):
    return [c() for c in checks]
