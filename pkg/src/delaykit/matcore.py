"""Dense real matrix helpers and the matrix exponential.

Matrices are plain ``numpy.ndarray`` objects of shape ``(d, d)``; vectors have
shape ``(d,)``.  The public helpers validate and copy their input, so callers
may pass nested lists.
"""
import numpy as np

from .errors import InvalidArgumentError

__all__ = ["as_matrix", "as_vector", "identity", "zeros", "expm", "commutator", "opnorm"]


def as_matrix(A, name="matrix"):
    """Return `A` as a finite square float array, raising on anything else."""
    try:
        M = np.array(A, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name}: not a numeric array ({exc})") from None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidArgumentError(f"{name}: expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidArgumentError(f"{name}: entries must be finite")
    return M


def as_vector(v, dim=None, name="vector"):
    try:
        x = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name}: not a numeric array ({exc})") from None
    x = np.atleast_1d(x)
    if x.ndim != 1:
        raise InvalidArgumentError(f"{name}: expected a 1-D array, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise InvalidArgumentError(f"{name}: expected length {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name}: entries must be finite")
    return x


def identity(d):
    return np.eye(d)


def zeros(d):
    return np.zeros((d, d))


# Taylor degree and scaling target: with |X|_1 <= 1/2 the truncated tail is
# below 0.5^19 / 19! ~ 2e-23, far under extended-precision rounding.
_TAYLOR_DEGREE = 18
_THETA = 0.5
_WORK = np.longdouble


def _expm_stack(X):
    """exp of every matrix in the ``(m, d, d)`` stack X, in extended precision."""
    if X.shape[-1] == 1:
        with np.errstate(over="ignore"):
            return np.exp(X)
    X = X.astype(_WORK)
    norms = np.abs(X).sum(axis=1).max(axis=1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norms / _THETA))
    s = np.where(norms > _THETA, s, 0).astype(int)
    X = X / np.ldexp(np.ones_like(norms), s)[:, None, None]
    I = np.broadcast_to(np.eye(X.shape[-1], dtype=_WORK), X.shape)
    E = I.copy()
    for k in range(_TAYLOR_DEGREE, 0, -1):
        E = I + np.matmul(X, E) / k
    for j in range(int(s.max()) if s.size else 0):
        E = np.where((s > j)[:, None, None], np.matmul(E, E), E)
    with np.errstate(over="ignore"):
        return E.astype(float)


def expm(A, t=1.0):
    """Matrix exponential ``exp(A t)``.

    Scaling and squaring around a degree-18 Taylor core, carried out in
    ``numpy.longdouble``.  On x86-64 that is 80-bit extended precision, which
    keeps the relative 2-norm error near 1e-16 up to ``|A t| = 50`` even for
    non-normal A.  Where longdouble is plain double the same algorithm runs in
    double precision.  ``t`` may be a scalar or a 1-D array, in which case a
    stack of shape ``(len(t), d, d)`` is returned.  ``expm(A, 0)`` is exactly
    the identity.  Results that overflow come back as inf.
    """
    A = as_matrix(A, "A")
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise InvalidArgumentError("t must be finite")
    if t_arr.ndim > 1:
        raise InvalidArgumentError("t must be a scalar or a 1-D array")
    ts = np.atleast_1d(t_arr)
    out = _expm_stack(A[None, :, :] * ts[:, None, None])
    out[ts == 0.0] = np.eye(A.shape[0])
    return out[0] if t_arr.ndim == 0 else out


def commutator(A, B):
    """``[A, B] = AB - BA``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape:
        raise InvalidArgumentError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return A @ B - B @ A


def opnorm(A):
    """Induced 2-norm (largest singular value).

    Every norm inequality in this package is stated and tested in this norm.
    """
    M = np.asarray(A, dtype=float)
    if M.ndim == 0:
        return abs(float(M))
    return float(np.linalg.norm(M, 2))
