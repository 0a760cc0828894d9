"""Hot inner loops: residual/Jacobian evaluation and dense LU.

Each kernel has a numba-compiled loop version and a vectorised numpy version.
The public names (``residual``, ``jacobian``, ``lu_factor``, ``lu_solve``)
dispatch to one of them depending on :data:`gridcert._accel.USE_NUMBA`.

Both power-flow modes share one residual form::

    F(v) = a / v - c - b - Y v
    DF(v) = -diag(a / v**2) - Y

master-slave: a = P, c = 0, b = Y_pv v_v, Y = Y_pp.
island:       a = P + C v_n, c = C, b = 0, Y = Y_s.
"""
import numpy as np

from gridcert._accel import USE_NUMBA, njit


# -- residual / jacobian ------------------------------------------------------

def _residual_np(a, c, b, y, v):
    return a / v - c - b - y @ v


def _jacobian_np(a, y, v):
    jac = -y.copy()
    jac[np.diag_indices_from(jac)] -= a / (v * v)
    return jac


@njit
def _residual_nb(a, c, b, y, v):
    n = v.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += y[i, j] * v[j]
        out[i] = a[i] / v[i] - c[i] - b[i] - s
    return out


@njit
def _jacobian_nb(a, y, v):
    n = v.shape[0]
    jac = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            jac[i, j] = -y[i, j]
        jac[i, i] -= a[i] / (v[i] * v[i])
    return jac


# -- LU with partial pivoting -------------------------------------------------
# Returns (lu, piv, ok). ok is False when a pivot falls below ``tiny``.

def _lu_factor_np(a, tiny):
    lu = np.array(a, dtype=np.float64, copy=True)
    n = lu.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= tiny:
            return lu, piv, False
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv, True


def _lu_solve_np(lu, piv, b):
    n = lu.shape[0]
    x = np.asarray(b, dtype=np.float64)[piv].copy()
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


@njit
def _lu_factor_nb(a, tiny):
    n = a.shape[0]
    lu = a.copy()
    piv = np.arange(n)
    for k in range(n):
        p = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            if abs(lu[i, k]) > best:
                best = abs(lu[i, k])
                p = i
        if best <= tiny:
            return lu, piv, False
        if p != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[p, j]
                lu[p, j] = tmp
            t = piv[k]
            piv[k] = piv[p]
            piv[p] = t
        inv = 1.0 / lu[k, k]
        for i in range(k + 1, n):
            lu[i, k] *= inv
            f = lu[i, k]
            for j in range(k + 1, n):
                lu[i, j] -= f * lu[k, j]
    return lu, piv, True


@njit
def _lu_solve_nb(lu, piv, b):
    n = lu.shape[0]
    x = np.empty(n)
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(1, n):
        s = x[i]
        for j in range(i):
            s -= lu[i, j] * x[j]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * x[j]
        x[i] = s / lu[i, i]
    return x


NUMPY_KERNELS = {
    "residual": _residual_np,
    "jacobian": _jacobian_np,
    "lu_factor": _lu_factor_np,
    "lu_solve": _lu_solve_np,
}
NUMBA_KERNELS = {
    "residual": _residual_nb,
    "jacobian": _jacobian_nb,
    "lu_factor": _lu_factor_nb,
    "lu_solve": _lu_solve_nb,
}
BACKEND = "numba" if USE_NUMBA else "numpy"
_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

residual = _active["residual"]
jacobian = _active["jacobian"]
lu_factor = _active["lu_factor"]
lu_solve = _active["lu_solve"]
