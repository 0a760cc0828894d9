"""Residual maps, Jacobians, and the full / constant-Jacobian Newton iterations."""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gridcert import kernels
from gridcert.netmodel import Mode, reduce_case
from gridcert.numerics import LUFactor, SingularMatrixError, sup_norm


class ShortCircuitError(ZeroDivisionError):
    """A voltage entry is zero, so constant-power currents are undefined."""


class Variant(str, Enum):
    NEWTON = "newton"
    APPROX = "approx"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace("-", "_")
        if key in ("approx_newton", "approximated"):
            key = "approx"
        return cls(key)


@dataclass(frozen=True)
class ResidualModel:
    """F(v) for one operating mode.

    master-slave: F = diag(v)^-1 P - Y_pv v_v - Y_pp v
    island:       F = diag(v)^-1 (P - C (v - v_n)) - Y_s v
    """

    mode: Mode
    net: object
    power: np.ndarray
    droop: np.ndarray
    v_ref: np.ndarray
    v_master: float = 1.0

    def __post_init__(self):
        n = self.net.size
        for name in ("power", "droop", "v_ref"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.mode is Mode.ISLAND:
            a = self.power + self.droop * self.v_ref
            c = self.droop.copy()
            b = np.zeros(n)
            y = self.net.y_s
        else:
            a = self.power.copy()
            c = np.zeros(n)
            b = (self.net.y_pv @ np.full(self.net.y_pv.shape[1], self.v_master)
                 if self.net.y_pv.size else np.zeros(n))
            y = self.net.y_pp
        # kernel operands, contiguous for numba
        object.__setattr__(self, "_a", np.ascontiguousarray(a))
        object.__setattr__(self, "_c", np.ascontiguousarray(c))
        object.__setattr__(self, "_b", np.ascontiguousarray(b))
        object.__setattr__(self, "_y", np.ascontiguousarray(y, dtype=np.float64))

    @property
    def size(self):
        return self.net.size

    @property
    def effective_power(self):
        """P in master-slave mode, P + C v_n in island mode."""
        return self._a

    @property
    def matrix(self):
        """Y_pp in master-slave mode, Y_s in island mode."""
        return self._y

    @property
    def injection(self):
        """Constant current term: Y_pv v_v (master-slave) or zero."""
        return self._b

    def scaled(self, factor):
        return ResidualModel(self.mode, self.net, self.power * factor, self.droop,
                             self.v_ref, self.v_master)


def _check_voltage(v, n):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"voltage vector has shape {v.shape}, expected ({n},)")
    if np.any(v == 0.0):
        raise ShortCircuitError("zero voltage entry")
    return v


def residual(model, v):
    v = _check_voltage(v, model.size)
    return kernels.residual(model._a, model._c, model._b, model._y, v)


def jacobian(model, v):
    v = _check_voltage(v, model.size)
    return kernels.jacobian(model._a, model._y, v)


def build_model(case, mode=None):
    """ResidualModel for ``case`` in ``mode`` (defaults to the case's own mode)."""
    mode = case.mode if mode is None else Mode.parse(mode) if not isinstance(mode, Mode) else mode
    net = reduce_case(case, mode)
    nodes = [case.node(n) for n in net.index_map]
    power = np.array([n.power for n in nodes])
    droop = np.array([n.droop for n in nodes])
    v_ref = np.array([case.v_ref.get(n.id, 1.0) for n in nodes])
    if mode is Mode.ISLAND and case.vref_from_master:
        ms = newton_solve(build_model(case, Mode.MASTER_SLAVE), SolverConfig())
        if not ms.converged:
            raise RuntimeError("master-slave solve for droop reference did not converge")
        v_ref = ms.voltages
    v_master = case.v_master if case.master is not None else 1.0
    return ResidualModel(mode, net, power, droop, v_ref, v_master)


# -- solvers -------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 50
    variant: Variant = Variant.NEWTON
    v0: np.ndarray = None
    divergence_window: int = 3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not isinstance(self.variant, Variant):
            object.__setattr__(self, "variant", Variant.parse(self.variant))


@dataclass(frozen=True)
class IterRecord:
    v: np.ndarray
    residual_norm: float
    step_norm: float  # nan on the last record (no step taken)


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"

    @property
    def iterations(self):
        return max(len(self.records) - 1, 0)

    @property
    def residual_norms(self):
        return np.array([r.residual_norm for r in self.records])

    @property
    def step_norms(self):
        return np.array([r.step_norm for r in self.records])


@dataclass
class SolveResult:
    voltages: np.ndarray
    trace: SolveTrace

    @property
    def converged(self):
        return self.trace.converged

    @property
    def status(self):
        return self.trace.status

    @property
    def iterations(self):
        return self.trace.iterations

    @property
    def min_voltage(self):
        return float(np.min(self.voltages))

    @property
    def final_residual(self):
        return self.trace.records[-1].residual_norm if self.trace.records else float("nan")


def _iterate(model, cfg, step_operator):
    """Shared loop. ``step_operator(k, v, f)`` returns the step dv with v_new = v - dv."""
    v = np.ones(model.size) if cfg.v0 is None else np.array(cfg.v0, dtype=np.float64)
    trace = SolveTrace()
    growth = 0
    prev = np.inf
    for k in range(cfg.max_iter + 1):
        if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
            trace.records.append(IterRecord(v.copy(), float("nan"), float("nan")))
            trace.status = "diverged"
            break
        f = residual(model, v)
        rn = sup_norm(f) if np.all(np.isfinite(f)) else float("inf")
        if rn <= cfg.tol:
            trace.records.append(IterRecord(v.copy(), rn, float("nan")))
            trace.converged = True
            trace.status = "converged"
            break
        growth = growth + 1 if rn > prev else 0
        prev = rn
        if growth >= cfg.divergence_window or not np.isfinite(rn):
            trace.records.append(IterRecord(v.copy(), rn, float("nan")))
            trace.status = "diverged"
            break
        if k == cfg.max_iter:
            trace.records.append(IterRecord(v.copy(), rn, float("nan")))
            trace.status = "max_iter"
            break
        try:
            dv = step_operator(k, v, f)
        except SingularMatrixError:
            trace.records.append(IterRecord(v.copy(), rn, float("nan")))
            trace.status = "singular_jacobian"
            break
        trace.records.append(IterRecord(v.copy(), rn, sup_norm(dv)))
        v = v - dv
    return SolveResult(v, trace)


def newton_solve(model, cfg=None):
    """v_{k+1} = v_k - DF(v_k)^{-1} F(v_k), refactoring every step."""
    cfg = cfg or SolverConfig()

    def step(k, v, f):
        return LUFactor.factor(jacobian(model, v)).solve(f)

    return _iterate(model, cfg, step)


def approx_newton_solve(model, cfg=None):
    """v_{k+1} = v_k - Gamma0 F(v_k) with Gamma0 = DF(v_0)^{-1} factored once."""
    cfg = cfg or SolverConfig(variant=Variant.APPROX)
    v0 = np.ones(model.size) if cfg.v0 is None else np.asarray(cfg.v0, dtype=np.float64)
    try:
        gamma0 = LUFactor.factor(jacobian(model, v0))
    except SingularMatrixError:
        gamma0 = None

    def step(k, v, f):
        if gamma0 is None:
            raise SingularMatrixError("initial Jacobian is singular")
        return gamma0.solve(f)

    return _iterate(model, cfg, step)


def solve(model, cfg=None):
    cfg = cfg or SolverConfig()
    if cfg.variant is Variant.APPROX:
        return approx_newton_solve(model, cfg)
    return newton_solve(model, cfg)
