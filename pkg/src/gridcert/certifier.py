"""A priori convergence certificates for the power-flow iterations.

Everything here is closed-form in a handful of norms of the reduced network and
the load vector; no iteration of the power flow is run.
"""
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from gridcert.netmodel import Mode
from gridcert.numerics import (LUFactor, NoRootError, SingularMatrixError, induced_norm,
                               inverse_sup_norm, min_positive_real_root, sup_norm)
from gridcert.powerflow import Variant

DELTA_STEP = 1e-4
DEFAULT_DELTA_PROBE = 0.1


class Verdict(str, Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    NO_GUARANTEE = "no_guarantee"


@dataclass(frozen=True)
class ConstantSet:
    """Norm constants of one operating point.

    ``rho`` and ``mu`` are master-slave only, ``gamma`` island only; unused
    entries are None. ``first_step`` is ||Gamma0 F(e)|| when the constants were
    computed from a network (None when supplied by hand).
    """

    alpha: float
    xi: float
    rho: float = None
    mu: float = None
    gamma: float = None
    first_step: float = None

    def lipschitz_k(self, delta):
        """Lipschitz constant of DF on the ball ||v - e|| <= delta."""
        if not 0 <= delta < 1:
            return float("inf")
        return 2.0 * self.alpha / (1.0 - delta) ** 3

    @property
    def mode(self):
        return Mode.ISLAND if self.gamma is not None else Mode.MASTER_SLAVE


@dataclass(frozen=True)
class Certificate:
    mode: Mode
    method: Variant
    constants: ConstantSet
    verdict: Verdict
    h_ratio: float = None
    h_threshold: float = None
    h_theorem1: float = None
    delta: float = None
    beta: float = None
    lipschitz_k: float = None
    r_move: float = None
    alpha_max: float = None
    beta_report: float = None
    delta_report: float = None
    delta_probe: float = None

    @property
    def guaranteed(self):
        return self.verdict is not Verdict.NO_GUARANTEE

    def as_dict(self):
        d = asdict(self)
        d["mode"] = self.mode.value
        d["method"] = self.method.value
        d["verdict"] = self.verdict.value
        return d


# -- constants -----------------------------------------------------------------

def constants_master(net, power, v_master=1.0):
    y_pp = net.y_pp
    n = y_pp.shape[0]
    p = np.asarray(power, dtype=np.float64)
    e = np.ones(n)
    try:
        rho = inverse_sup_norm(y_pp)
    except SingularMatrixError:
        raise SingularMatrixError("Y_pp is singular") from None
    inj = net.y_pv @ np.full(net.y_pv.shape[1], v_master) if net.y_pv.size else np.zeros(n)
    alpha = sup_norm(p)
    xi = sup_norm(inj)
    mu = sup_norm(inj + y_pp @ e)
    first = None
    try:
        f0 = p - inj - y_pp @ e
        first = sup_norm(LUFactor.factor(-np.diag(p) - y_pp).solve(f0))
    except SingularMatrixError:
        pass
    return ConstantSet(alpha=alpha, xi=xi, rho=rho, mu=mu, first_step=first)


def constants_island(net, power, droop, v_ref):
    y_s = net.y_s
    n = y_s.shape[0]
    p = np.asarray(power, dtype=np.float64)
    c = np.asarray(droop, dtype=np.float64)
    vn = np.asarray(v_ref, dtype=np.float64)
    e = np.ones(n)
    a = p + c * vn
    try:
        lu = LUFactor.factor(y_s + np.diag(a))
    except SingularMatrixError:
        raise SingularMatrixError("island Jacobian at the flat start is singular") from None
    gamma = induced_norm(lu.inverse())
    f0 = p - c * (e - vn) - y_s @ e
    return ConstantSet(alpha=sup_norm(a), xi=sup_norm(f0), gamma=gamma,
                       first_step=sup_norm(lu.solve(f0)))


def constants_for(model):
    if model.mode is Mode.ISLAND:
        return constants_island(model.net, model.power, model.droop, model.v_ref)
    return constants_master(model.net, model.power, model.v_master)


# -- Newton --------------------------------------------------------------------

def newton_h_master(alpha, rho, mu):
    """alpha rho^2 (1 - alpha rho)(alpha + mu) / (1 - 2 alpha rho - mu rho)^3, inf past the pole."""
    den = 1.0 - 2.0 * alpha * rho - mu * rho
    if den <= 0:
        return float("inf")
    return alpha * rho**2 * (1.0 - alpha * rho) * (alpha + mu) / den**3


def certify_newton_master(c):
    alpha, rho, mu = c.alpha, c.rho, c.mu
    kw = dict(mode=Mode.MASTER_SLAVE, method=Variant.NEWTON, constants=c,
              h_threshold=0.25, r_move=c.first_step)
    try:
        kw["alpha_max"] = max_power_master(rho, mu)
    except (NoRootError, ValueError):
        kw["alpha_max"] = None
    if alpha * rho >= 1 or 1.0 - 2.0 * alpha * rho - mu * rho <= 0:
        return Certificate(verdict=Verdict.NO_GUARANTEE, h_ratio=float("inf"), **kw)
    h = newton_h_master(alpha, rho, mu)
    bound = rho / (1.0 - alpha * rho)
    delta = (alpha + mu) * bound
    k = c.lipschitz_k(delta)
    h1 = (alpha + mu) * bound**2 * k
    ok = h < 0.25 and delta < 1
    return Certificate(verdict=Verdict.QUADRATIC if ok else Verdict.NO_GUARANTEE,
                       h_ratio=h, h_theorem1=h1, delta=delta, lipschitz_k=k, **kw)


def certify_newton_island(c):
    alpha, gamma, xi = c.alpha, c.gamma, c.xi
    delta = xi * gamma
    kw = dict(mode=Mode.ISLAND, method=Variant.NEWTON, constants=c,
              h_threshold=0.5, delta=delta, r_move=c.first_step)
    if delta >= 1:
        return Certificate(verdict=Verdict.NO_GUARANTEE, h_ratio=float("inf"), **kw)
    h = xi * gamma**2 * alpha / (1.0 - delta) ** 3
    k = c.lipschitz_k(delta)
    ok = h < 0.5
    return Certificate(verdict=Verdict.QUADRATIC if ok else Verdict.NO_GUARANTEE,
                       h_ratio=h, h_theorem1=xi * gamma**2 * k, lipschitz_k=k, **kw)


# -- approximated Newton -------------------------------------------------------

def _search(gain, offset, drift):
    """Smallest delta on a 1e-4 grid with beta(delta) < 1 and gain*drift/(1-beta) <= delta.

    beta(delta) = gain * (offset + 1/(1-delta)^2).
    """
    deltas = np.arange(1, int(round(1 / DELTA_STEP))) * DELTA_STEP
    beta = gain * (offset + 1.0 / (1.0 - deltas) ** 2)
    with np.errstate(divide="ignore"):
        need = np.where(beta < 1, gain * drift / (1.0 - beta), np.inf)
    ok = np.flatnonzero((beta < 1) & (need <= deltas))
    if ok.size == 0:
        return None, None
    i = ok[0]
    return float(beta[i]), float(deltas[i])


def _approx_certificate(mode, c, gain, drift, delta_probe):
    if delta_probe is None:
        delta_probe = DEFAULT_DELTA_PROBE
    kw = dict(mode=mode, method=Variant.APPROX, constants=c, r_move=c.first_step,
              delta_probe=delta_probe)
    if not np.isfinite(gain):
        return Certificate(verdict=Verdict.NO_GUARANTEE, **kw)
    beta, delta = _search(gain, c.alpha, drift)
    beta_rep = gain * (c.alpha + 1.0 / (1.0 - delta_probe) ** 2)
    delta_rep = gain * drift / (1.0 - beta_rep) if beta_rep < 1 else float("inf")
    verdict = Verdict.LINEAR if beta is not None else Verdict.NO_GUARANTEE
    return Certificate(verdict=verdict, beta=beta, delta=delta,
                       lipschitz_k=c.lipschitz_k(delta) if delta is not None else None,
                       beta_report=beta_rep, delta_report=delta_rep, **kw)


def certify_approx_master(c, delta_probe=None):
    """Contraction certificate for the constant-Jacobian iteration, master-slave.

    ``beta``/``delta`` come from a strict grid search; ``beta_report`` is beta at
    ``delta_probe`` and ``delta_report`` the matching fixed-point distance bound.
    """
    ar = c.alpha * c.rho
    gain = c.rho / (1.0 - ar) if ar < 1 else float("inf")
    return _approx_certificate(Mode.MASTER_SLAVE, c, gain, c.alpha + c.mu, delta_probe)


def certify_approx_island(c, delta_probe=None):
    return _approx_certificate(Mode.ISLAND, c, c.gamma, c.xi, delta_probe)


def certify(constants, method, delta_probe=None):
    method = Variant.parse(method) if not isinstance(method, Variant) else method
    island = constants.mode is Mode.ISLAND
    if method is Variant.NEWTON:
        return certify_newton_island(constants) if island else certify_newton_master(constants)
    if island:
        return certify_approx_island(constants, delta_probe)
    return certify_approx_master(constants, delta_probe)


def certify_model(model, method, delta_probe=None):
    return certify(constants_for(model), method, delta_probe)


# -- loadability -------------------------------------------------------------

def loadability_cubic(rho, mu):
    """Ascending coefficients of 4 a rho^2 (1 - a rho)(a + mu) - (1 - 2 a rho - mu rho)^3."""
    p = np.polynomial.Polynomial
    a = p([0.0, 1.0])
    s = 4 * a * rho**2 * (1 - a * rho) * (a + mu) - (1 - 2 * a * rho - mu * rho) ** 3
    return s.coef


def max_power_master(rho, mu):
    """Largest load magnitude ||P|| for which Newton is certified quadratic."""
    if not rho > 0:
        raise ValueError("rho must be > 0")
    return min_positive_real_root(loadability_cubic(rho, mu))
