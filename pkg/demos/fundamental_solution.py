"""Fundamental solution of x' = A0 x + A1 x(t - tau).

Tabulates S(t) with the three evaluators, then shows that S is not a
semigroup: with A0 = I and A1 = -I, S(0.6)^2 differs from S(1.2).
"""
import numpy as np

from delaykit import FundamentalSolution, Method, opnorm
from delaykit.fundsol import dyson_phillips_partial, eval_nonpermutable, eval_permutable

rng = np.random.default_rng(7)
A0 = rng.uniform(-1, 1, (3, 3))
A1 = 0.5 * np.eye(3) - 0.3 * A0 + 0.1 * A0 @ A0  # a polynomial in A0, so the pair commutes
ts = np.linspace(0.0, 3.0, 7)

P = eval_permutable(A0, A1, 1.0, ts)
N = eval_nonpermutable(A0, A1, 1.0, ts)
D = dyson_phillips_partial(A0, A1, 1.0, ts, 3, 16)
print("max |permutable - nonpermutable| =", np.abs(P - N).max())
print("max |permutable - dyson-phillips| =", np.abs(P - D).max())

S = FundamentalSolution(np.eye(2), -np.eye(2), 1.0, Method.NONPERMUTABLE)
half = S(0.6)
print("S(1.2) =", S(1.2)[0, 0], " expected", np.exp(0.2) * (np.e - 0.2))
print("|S(0.6)^2 - S(1.2)| =", opnorm(half @ half - S(1.2)))
