import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from delaykit.errors import NumericRangeError, PreconditionError, TruncationError, InvalidArgumentError
from delaykit.fundsol import (
    FundamentalSolution,
    Method,
    TruncationPolicy,
    dyson_phillips_partial,
    eval_nonpermutable,
    eval_permutable,
    eval_pure_delayed,
    piece_index,
    resolvent_series_check,
    series_tail_bound,
)
from delaykit.matcore import expm, opnorm

from conftest import commuting_pair, random_pair

TAU = 1.0


def steps_oracle(A0, A1, tau, t_end):
    """S(t) by scipy's adaptive RK on successive delay intervals (dense output for the lag)."""
    d = A0.shape[0]
    pieces = []
    start = np.eye(d).ravel()
    n = int(np.ceil(t_end / tau))
    for k in range(n):
        prev = pieces[-1] if pieces else None

        def rhs(t, y, prev=prev):
            lag = prev(t - tau).reshape(d, d) if prev is not None else np.zeros((d, d))
            return (A0 @ y.reshape(d, d) + A1 @ lag).ravel()

        sol = solve_ivp(rhs, (k * tau, (k + 1) * tau), start, method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)
        pieces.append(sol.sol)
        start = sol.y[:, -1]

    def S(t):
        k = min(max(int(np.ceil(t / tau)) - 1, 0), n - 1)
        return pieces[k](t).reshape(d, d)

    return S


# --- pure delayed ------------------------------------------------------------


def test_pure_delayed_examples():
    A1 = np.array([[0.3, -1.0], [2.0, 0.1]])
    assert np.array_equal(eval_pure_delayed(A1, 1.0, -0.5), np.zeros((2, 2)))
    assert np.array_equal(eval_pure_delayed(A1, 1.0, 0.0), np.eye(2))
    assert np.allclose(eval_pure_delayed(np.zeros((2, 2)), 1.0, 2.3), np.eye(2))
    assert eval_pure_delayed([[1.0]], 1.0, 1.5)[0, 0] == pytest.approx(1.5)


def test_pure_delayed_scalar_closed_form():
    # scalar exp_tau(t) with a=1, tau=1 on (2, 3]: 1 + (t-1) + (t-2)^2/2
    t = 2.7
    exact = 1 + (t - 1) + (t - 2) ** 2 / 2
    assert eval_pure_delayed([[1.0]], 1.0, t)[0, 0] == pytest.approx(exact, rel=1e-15)


def test_piece_convention():
    assert piece_index(1.0, 1.0) == 0
    assert piece_index(1.0 + 1e-12, 1.0) == 1
    assert piece_index(3.0, 1.0) == 2
    assert piece_index(0.0, 1.0) == 0


# --- permutable --------------------------------------------------------------


def test_counterexample_value():
    S = eval_permutable(np.eye(2), -np.eye(2), 1.0, 1.2)
    exact = np.exp(0.2) * (np.e + 1 - 1.2)
    assert exact == pytest.approx(3.0758363711045136, rel=1e-15)
    assert np.abs(S - exact * np.eye(2)).max() < 1e-10


def test_counterexample_no_semigroup():
    # the two displayed pieces: e^t on (0,1], e^(t-1)(e + 1 - t) on (1,2]
    half = np.exp(0.6)
    full = np.exp(0.2) * (np.e + 1 - 1.2)
    gap_formula = abs(half * half - full) * np.sqrt(1.0)  # 2-norm of a multiple of I
    for method in (Method.PERMUTABLE, Method.NONPERMUTABLE, Method.DYSON_PHILLIPS):
        S = FundamentalSolution(np.eye(2), -np.eye(2), 1.0, method)
        gap = opnorm(S(0.6) @ S(0.6) - S(1.2))
        assert gap == pytest.approx(gap_formula, rel=1e-9)
        assert gap > 0.01


def test_permutable_special_cases():
    rng = np.random.default_rng(3)
    A0 = rng.uniform(-1, 1, (3, 3))
    ts = np.linspace(-0.5, 3.0, 15)
    assert np.allclose(eval_permutable(A0, np.zeros((3, 3)), TAU, ts)[ts > 0], expm(A0, ts[ts > 0]), atol=1e-13)
    A1 = rng.uniform(-1, 1, (3, 3))
    assert np.allclose(eval_permutable(np.zeros((3, 3)), A1, TAU, ts), eval_pure_delayed(A1, TAU, ts), atol=1e-13)


def test_permutable_rejects_noncommuting():
    A0 = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(PreconditionError, match="commut"):
        eval_permutable(A0, A0.T, 1.0, 0.5)


def test_factored_form_survives_stiff_generator():
    A0, A1 = np.array([[-1000.0]]), np.array([[0.5]])
    with pytest.raises(NumericRangeError):
        eval_permutable(A0, A1, 1.0, 1.5)
    val = eval_permutable(A0, A1, 1.0, 1.5, form="factored")[0, 0]
    assert val == pytest.approx(np.exp(-1500.0) + 0.5 * 0.5 * np.exp(-500.0), rel=1e-12, abs=0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_product_and_factored_agree(seed, d):
    A0, A1 = commuting_pair(np.random.default_rng(seed), d)
    ts = np.linspace(-1.0, 3.0, 17)
    a = eval_permutable(A0, A1, TAU, ts)
    b = eval_permutable(A0, A1, TAU, ts, form="factored")
    assert np.abs(a - b).max() < 1e-12 * (1 + np.abs(a).max())


# --- non-permutable ----------------------------------------------------------


def test_first_piece_is_exponential():
    A0, A1 = random_pair(np.random.default_rng(11), 3)
    ts = np.linspace(0.05, 1.0, 9)
    assert np.abs(eval_nonpermutable(A0, A1, TAU, ts) - expm(A0, ts)).max() < 1e-12


def test_against_independent_ode_oracle():
    A0, A1 = random_pair(np.random.default_rng(5), 3)
    ref = steps_oracle(A0, A1, TAU, 3.0)
    ts = np.array([0.3, 0.99, 1.0, 1.5, 2.0, 2.5, 2.999])
    S = eval_nonpermutable(A0, A1, TAU, ts, TruncationPolicy(tol=1e-13))
    for t, M in zip(ts, S):
        assert np.abs(M - ref(t)).max() < 1e-9


def test_against_dyson_phillips_at_2_5_tau():
    A0, A1 = random_pair(np.random.default_rng(21), 3)
    N = eval_nonpermutable(A0, A1, TAU, 2.5)
    D = dyson_phillips_partial(A0, A1, TAU, 2.5, 3, 16)
    assert np.abs(N - D).max() < 1e-7


def test_truncation_error_reports_bound():
    A0, A1 = random_pair(np.random.default_rng(2), 3, scale=3.0)
    with pytest.raises(TruncationError) as info:
        eval_nonpermutable(A0, A1, TAU, 3.0, TruncationPolicy(tol=1e-12, Kmax=5))
    assert info.value.achieved_bound > 1e-12


def test_tail_bound_is_an_upper_bound():
    import mpmath

    for x in (0.5, 3.0, 10.0):
        for K in (5, 20, 40):
            exact = mpmath.nsum(lambda k: mpmath.mpf(x) ** k / mpmath.factorial(k), [K + 1, mpmath.inf])
            assert series_tail_bound(x, K) >= float(exact) * (1 - 1e-12)


def test_policy_validation():
    with pytest.raises(InvalidArgumentError):
        TruncationPolicy(tol=0.0)
    with pytest.raises(InvalidArgumentError):
        TruncationPolicy(Kmax=0)
    with pytest.raises(InvalidArgumentError):
        TruncationPolicy(quad_points=1)


# --- Dyson-Phillips ----------------------------------------------------------


def test_dyson_phillips_base_cases():
    A0, A1 = random_pair(np.random.default_rng(4), 2)
    assert np.allclose(dyson_phillips_partial(A0, A1, TAU, 2.3, 0), expm(A0, 2.3), atol=1e-14)
    for N in (1, 2, 5):
        assert np.allclose(dyson_phillips_partial(A0, A1, TAU, 0.7, N), expm(A0, 0.7), atol=1e-14)


def test_dyson_phillips_converges_with_quad_points():
    A0, A1 = random_pair(np.random.default_rng(9), 3)
    ref = eval_nonpermutable(A0, A1, TAU, 2.8, TruncationPolicy(tol=1e-14))
    errs = [np.abs(dyson_phillips_partial(A0, A1, TAU, 2.8, 3, q) - ref).max() for q in (2, 4, 8)]
    assert errs[0] > errs[1] > errs[2]


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_routes_agree_on_commuting_pairs(seed, d):
    A0, A1 = commuting_pair(np.random.default_rng(seed), d)
    ts = np.linspace(0.0, 3.0, 13)
    P = eval_permutable(A0, A1, TAU, ts)
    N = eval_nonpermutable(A0, A1, TAU, ts, TruncationPolicy(tol=1e-10))
    D = dyson_phillips_partial(A0, A1, TAU, ts, 3, 16)
    assert np.abs(P - N).max() < 1e-9
    assert np.abs(P - D).max() < 1e-7


def test_pure_delayed_route_agrees():
    A1 = np.random.default_rng(1).uniform(-1, 1, (3, 3))
    Z = np.zeros((3, 3))
    ts = np.linspace(-0.9, 3.0, 20)
    P = eval_pure_delayed(A1, TAU, ts)
    for m in Method:
        assert np.abs(FundamentalSolution(Z, A1, TAU, m)(ts) - P).max() < 1e-9


# --- invariants of S ---------------------------------------------------------


def _away_from_kinks(rng, n, t_max=3.0, gap=1e-4):
    ts = []
    while len(ts) < n:
        t = rng.uniform(0, t_max)
        if np.min(np.abs(t - np.arange(0, t_max + 1))) > gap:
            ts.append(t)
    return np.array(ts)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.sampled_from(list(Method)))
def test_defining_ode_left_and_right(seed, d, method):
    rng = np.random.default_rng(seed)
    A0, A1 = commuting_pair(rng, d) if method is Method.PERMUTABLE else random_pair(rng, d)
    if method is Method.PURE_DELAYED:
        A0 = np.zeros((d, d))
    S = FundamentalSolution(A0, A1, TAU, method)
    ts = _away_from_kinks(rng, 6)
    h = 1e-5
    dS = (S(ts + h) - S(ts - h)) / (2 * h)
    now, lag = S(ts), S(ts - TAU)
    assert np.abs(dS - (A0 @ now + A1 @ lag)).max() < 1e-5
    assert np.abs(dS - (now @ A0 + lag @ A1)).max() < 1e-5


def test_initial_data():
    A0, A1 = random_pair(np.random.default_rng(8), 3)
    for m in (Method.NONPERMUTABLE, Method.DYSON_PHILLIPS):
        S = FundamentalSolution(A0, A1, TAU, m)
        assert np.array_equal(S(np.array([-1.0, -0.3, -1e-12])), np.zeros((3, 3, 3)))
        assert np.array_equal(S(0.0), np.eye(3))


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_continuity_at_piece_boundaries(seed, d):
    A0, A1 = random_pair(np.random.default_rng(seed), d)
    for n in (1, 2, 3):
        left = eval_nonpermutable(A0, A1, TAU, n * TAU - 1e-12)
        at = eval_nonpermutable(A0, A1, TAU, n * TAU)
        right = eval_nonpermutable(A0, A1, TAU, n * TAU + 1e-12)
        assert np.abs(left - at).max() < 1e-9
        assert np.abs(right - at).max() < 1e-9


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(0, 3))
def test_uniform_continuity_bound(seed, d, t):
    A0, A1 = random_pair(np.random.default_rng(seed), d)
    S = eval_nonpermutable(A0, A1, TAU, t)
    assert opnorm(S - np.eye(d)) <= np.expm1((opnorm(A0) + opnorm(A1)) * t) + 1e-12


def test_auto_selection():
    A = np.array([[1.0, 2.0], [0.0, 3.0]])
    assert FundamentalSolution.auto(np.zeros((2, 2)), A, 1.0).method is Method.PURE_DELAYED
    assert FundamentalSolution.auto(A, A @ A, 1.0).method is Method.PERMUTABLE
    assert FundamentalSolution.auto(A, A.T, 1.0).method is Method.NONPERMUTABLE


def test_scalar_and_vector_calls_agree():
    A0, A1 = random_pair(np.random.default_rng(6), 2)
    S = FundamentalSolution(A0, A1, TAU)
    ts = np.array([0.2, 1.3, 2.9])
    stack = S(ts)
    for t, M in zip(ts, stack):
        assert np.allclose(S(t), M, rtol=1e-14, atol=1e-14)


# --- resolvent ---------------------------------------------------------------


def test_resolvent_zero_delay_term():
    A0 = np.random.default_rng(1).uniform(-1, 1, (3, 3))
    for N in (0, 3, 10):
        assert resolvent_series_check(A0, np.zeros((3, 3)), 1.0, 5.0, N) < 1e-12


def test_resolvent_first_remainder():
    A0, A1 = random_pair(np.random.default_rng(2), 3)
    lam = 2 * (opnorm(A0) + opnorm(A1)) + 1
    B = A1 @ np.linalg.inv(lam * np.eye(3) - A0) * np.exp(-lam)
    assert resolvent_series_check(A0, A1, 1.0, lam, 0) == pytest.approx(opnorm(B), rel=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_resolvent_geometric_decay(seed, d):
    A0, A1 = random_pair(np.random.default_rng(seed), d)
    lam = 2 * (opnorm(A0) + opnorm(A1)) + 1
    q = opnorm(A1 @ np.linalg.inv(lam * np.eye(d) - A0)) * np.exp(-lam)
    prev = None
    for N in range(0, 6):
        r = resolvent_series_check(A0, A1, 1.0, lam, N)
        assert r <= q ** (N + 1) * (1 + 1e-8) + 1e-15
        if prev is not None and prev > 1e-13:
            assert r <= prev * (q + 1e-12) + 1e-15
        prev = r
    assert resolvent_series_check(A0, A1, 1.0, lam, 40) < 1e-10


def test_resolvent_errors():
    with pytest.raises(InvalidArgumentError):
        resolvent_series_check(np.eye(2), np.eye(2), 1.0, 1.0, 3)
    with pytest.raises(PreconditionError):
        resolvent_series_check(np.zeros((1, 1)), [[100.0]], 0.01, 1.0, 3)
