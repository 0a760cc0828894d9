"""Small dense linear algebra under the sup norm, and the cubic root finder."""
from dataclasses import dataclass

import numpy as np

from gridcert import kernels

SINGULAR_RTOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix was singular to working tolerance."""


class NoRootError(ValueError):
    """A polynomial has no positive real root."""


def _as_vector(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    return x


def _as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def sup_norm(x):
    """max_i |x_i|."""
    return float(np.max(np.abs(_as_vector(x))))


def induced_norm(a):
    """Operator norm induced by the sup norm: the maximum absolute row sum."""
    return float(np.max(np.sum(np.abs(_as_matrix(a)), axis=1)))


@dataclass(frozen=True)
class LUFactor:
    """LU factors of a square matrix, reusable for many right-hand sides."""

    lu: np.ndarray
    piv: np.ndarray

    @classmethod
    def factor(cls, a):
        a = _as_matrix(a)
        n, m = a.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {a.shape}")
        tiny = SINGULAR_RTOL * induced_norm(a)
        lu, piv, ok = kernels.lu_factor(np.ascontiguousarray(a), tiny)
        if not ok:
            raise SingularMatrixError("matrix is singular to working precision")
        return cls(lu, piv)

    @property
    def size(self):
        return self.lu.shape[0]

    def solve(self, b):
        b = _as_vector(b)
        if b.shape[0] != self.size:
            raise ValueError(f"rhs has length {b.shape[0]}, expected {self.size}")
        return kernels.lu_solve(self.lu, self.piv, np.ascontiguousarray(b))

    def inverse(self):
        eye = np.eye(self.size)
        return np.column_stack([self.solve(eye[:, j]) for j in range(self.size)])


def solve_linear(a, b):
    """Solve ``a x = b`` by LU with partial pivoting.

    Raises SingularMatrixError when a pivot drops below
    ``1e-12 * induced_norm(a)``.
    """
    return LUFactor.factor(a).solve(b)


def inverse_sup_norm(a):
    """Exact ``||a^{-1}||`` (explicit inverse, no estimation)."""
    return induced_norm(LUFactor.factor(a).inverse())


def _polyval(coeffs, x):
    out = 0.0
    for c in reversed(coeffs):
        out = out * x + c
    return out


def _refine(coeffs, lo, hi, iters=200):
    flo = _polyval(coeffs, lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fmid = _polyval(coeffs, mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def min_positive_real_root(coeffs, imag_tol=1e-9):
    """Smallest positive real root of ``sum(coeffs[k] * x**k)``.

    Coefficients are in ascending order. Candidates come from the eigenvalues
    of the companion matrix and are then polished by bisection on a bracket
    around each candidate.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=np.float64), "b")
    if c.size < 2:
        raise NoRootError("constant polynomial has no roots")
    if c.size > 4:
        raise ValueError("degree must be at most 3")
    deg = c.size - 1
    comp = np.zeros((deg, deg))
    comp[1:, :-1] = np.eye(deg - 1)
    comp[:, -1] = -c[:-1] / c[-1]
    eig = np.linalg.eigvals(comp)
    cands = sorted(z.real for z in eig if abs(z.imag) < imag_tol and z.real > 0)
    for z in cands:
        # bracket generously; companion eigenvalues are accurate to ~1e-12 relative
        w = 1e-6 * max(1.0, z)
        lo, hi = max(z - w, 0.0), z + w
        if np.sign(_polyval(c, lo)) != np.sign(_polyval(c, hi)):
            return _refine(c, lo, hi)
        if abs(_polyval(c, z)) < 1e-12:
            # even-multiplicity root, no sign change to bisect on
            return float(z)
    raise NoRootError("no positive real root")
