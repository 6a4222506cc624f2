"""Linear autonomous delay equations ``u' = A0 u(t) + A1 u(t - tau) + g(t)``.

Everything is built on the fundamental solution ``S(t; tau)``:

* :mod:`delaykit.fundsol`   -- four evaluation routes for S
* :mod:`delaykit.qkernel`   -- the coefficient table of the non-commuting series
* :mod:`delaykit.ivpsolver` -- representation formulas and a method-of-steps oracle
* :mod:`delaykit.heatdelay` -- delayed heat equation by sine series, with an FD oracle
"""
from .errors import (
    DelayKitError,
    DivergedError,
    InvalidArgumentError,
    NumericRangeError,
    PreconditionError,
    TruncationError,
    UnsupportedOperationError,
)
from .fundsol import (
    FundamentalSolution,
    Method,
    TruncationPolicy,
    dyson_phillips_partial,
    eval_nonpermutable,
    eval_permutable,
    eval_pure_delayed,
    resolvent_series_check,
)
from .heatdelay import HeatProblem, SpectralConfig, fourier_coeffs, solve_fd_oracle, solve_spectral
from .ivpsolver import (
    DelaySystem,
    SolutionGrid,
    solve_homogeneous,
    solve_homogeneous_c1,
    solve_method_of_steps,
    solve_nonhomogeneous,
)
from .matcore import expm, opnorm

__version__ = "0.1.0"
