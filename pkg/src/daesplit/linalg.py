"""Small dense linear algebra helpers.

Everything here works on plain ``numpy`` arrays. Problem sizes in this package
are tiny (a few dozen unknowns at most), so no attempt is made at sparse
storage or blocking.
"""
import math
import warnings

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotSPD, SingularMatrix

PIVOT_RTOL = 1e-14


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array or raise."""
    arr = np.array(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name="vector"):
    arr = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _require_square(A, name="A"):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")


class LUFactor:
    """Partially pivoted LU factorization with a relative pivot floor.

    Parameters
    ----------
    A : array_like
        Square matrix.

    Raises
    ------
    SingularMatrix
        If some pivot is smaller than ``1e-14 * max|A|``.
    """

    __slots__ = ("n", "_lu", "_piv")

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        _require_square(A)
        self.n = A.shape[0]
        if self.n == 0:
            self._lu = self._piv = None
            return
        scale = np.max(np.abs(A))
        if not np.isfinite(scale):
            raise SingularMatrix("matrix has non-finite entries")
        if scale == 0.0:
            raise SingularMatrix("matrix is identically zero")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        pivots = np.abs(np.diag(lu))
        k = int(np.argmin(pivots))
        if pivots[k] < PIVOT_RTOL * scale:
            raise SingularMatrix(
                f"pivot {k} has magnitude {pivots[k]:.3e} < {PIVOT_RTOL:g}*max|A|"
            )
        self._lu, self._piv = lu, piv

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {self.n}")
        if self.n == 0:
            return b.copy()
        return scipy.linalg.lu_solve((self._lu, self._piv), b, check_finite=False)


def lu_solve(A, b):
    """Solve ``A x = b`` by LU with partial pivoting."""
    A = np.asarray(A, dtype=float)
    _require_square(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"b has length {b.shape[0]}, A is {A.shape}")
    return LUFactor(A).solve(b)


def weighted_norm(x, Q):
    """Return ``sqrt(x^T Q x)`` for symmetric positive definite ``Q``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (x.size, x.size):
        raise DimensionMismatch(f"Q has shape {Q.shape}, x has length {x.size}")
    q = float(x @ Q @ x)
    if q < 0.0:
        raise NotSPD(f"x^T Q x = {q:.3e} < 0")
    return math.sqrt(q)


# Taylor degree 18 on a matrix of norm <= 0.5 leaves a remainder below 1e-24.
_EXPM_DEGREE = 18
_EXPM_THETA = 0.5


def expm(A):
    """Matrix exponential by scaling and squaring with a truncated Taylor series.

    Used as an oracle for exact linear flows, so it deliberately avoids
    sharing code with the Pade-based routine in scipy.
    """
    A = np.asarray(A, dtype=float)
    _require_square(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norm = np.max(np.sum(np.abs(A), axis=0))
    s = 0
    if norm > _EXPM_THETA:
        s = int(math.ceil(math.log2(norm / _EXPM_THETA)))
    X = A / (2.0**s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _EXPM_DEGREE + 1):
        term = term @ X / k
        result = result + term
        if not term.any():
            break
    for _ in range(s):
        result = result @ result
    return result


def check_symmetric_psd(A, tol=1e-10):
    """True iff ``A`` is symmetric and positive semidefinite up to ``tol``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    if A.size == 0:
        return True
    if not np.all(np.isfinite(A)):
        return False
    if np.max(np.abs(A - A.T)) > tol:
        return False
    return min_symmetric_eigenvalue(A) >= -tol


def min_symmetric_eigenvalue(A):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return math.inf
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def condition_estimate(A):
    """1-norm condition number ``|A|_1 |A^-1|_1`` (exact for these sizes)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 1.0
    lu = LUFactor(A)
    inv = lu.solve(np.eye(A.shape[0]))
    return float(np.linalg.norm(A, 1) * np.linalg.norm(inv, 1))
