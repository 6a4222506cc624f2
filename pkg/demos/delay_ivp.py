"""Delay initial value problem: closed form against a method-of-steps run.

The forced 2x2 system below has a cosine history; the integral formula and
an RK4 method of steps (h = tau/400) agree far below 1e-9.
"""
import numpy as np

from delaykit import DelaySystem
from delaykit.ivpsolver import solve_method_of_steps, solve_nonhomogeneous

A0 = np.array([[-0.5, 1.0], [-1.0, -0.5]])
A1 = np.array([[0.2, 0.0], [0.3, -0.4]])
sys_ = DelaySystem(
    A0, A1, 1.0,
    phi=lambda s: np.array([np.cos(s), 1.0 + 0.5 * s]),
    dphi=lambda s: np.array([-np.sin(s), 0.5]),
    g=lambda s: np.array([np.sin(2 * s), 0.0]),
)

ref = solve_method_of_steps(sys_, 3.0, 1.0 / 400)
pick = np.arange(0, ref.times.size, 100)
sol = solve_nonhomogeneous(sys_, ref.times[pick])
for t, u, v in zip(sol.times, sol.values, ref.values[pick]):
    print(f"t={t:4.2f}  formula={u}  steps={v}  diff={np.abs(u - v).max():.2e}")

# scalar hand check: u' = u(t-1), u = 1 on [-1, 0] gives u(2) = 1 + 2 + 1/2
hand = DelaySystem([[0.0]], [[1.0]], 1.0, phi=lambda s: [1.0])
print("u(2) =", solve_nonhomogeneous(hand, [2.0]).values[0, 0])
