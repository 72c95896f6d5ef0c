"""Filtered-error robust adaptive tracking laws.

The controller only sees the measured state, the reference derivatives, time
and its own adaptive state (zeta, theta_hat). Plant terms, the auxiliary
matrix and the fault schedule never enter here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import DomainError, SpecError
from .nussbaum import NussbaumFn, nussbaum_eval

log = logging.getLogger(__name__)


def routh_hurwitz(coeffs) -> bool:
    """True if the polynomial with descending ``coeffs`` has all roots in Re < 0.

    Exact rational arithmetic; a zero in the first column counts as not Hurwitz.
    """
    c = [Fraction(x) for x in coeffs]
    if not c or c[0] == 0:
        raise DomainError("leading coefficient must be nonzero")
    if c[0] < 0:
        c = [-x for x in c]
    deg = len(c) - 1
    if deg == 0:
        return True
    rows = [c[0::2], c[1::2]]
    width = len(rows[0])
    rows = [r + [Fraction(0)] * (width - len(r)) for r in rows]
    for _ in range(deg - 1):
        a, b = rows[-2], rows[-1]
        if b[0] == 0:
            return False
        new = [(b[0] * a[j + 1] - a[0] * b[j + 1]) / b[0] for j in range(width - 1)] + [Fraction(0)]
        rows.append(new)
    return all(r[0] > 0 for r in rows[: deg + 1])


@dataclass(frozen=True)
class FilterConfig:
    """Coefficients lambda_1 .. lambda_{n-1} of the filtered error."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        # z^{n-1} + lambda_{n-1} z^{n-2} + ... + lambda_1
        if not routh_hurwitz([1.0, *reversed(self.lambdas)]):
            raise DomainError(f"filter polynomial with lambdas {self.lambdas} is not Hurwitz")

    @property
    def order(self) -> int:
        """Plant order n implied by the coefficient count."""
        return len(self.lambdas) + 1


def filtered_error(cfg: FilterConfig, e_stack) -> np.ndarray:
    """s = lambda_1 e_1 + ... + lambda_{n-1} e_{n-1} + e_n; ``e_stack`` has rows e_1..e_n."""
    e_stack = np.asarray(e_stack, dtype=float)
    s = e_stack[-1].copy()
    for lam, e in zip(cfg.lambdas, e_stack[:-1]):
        s += lam * e
    return s


def error_chain_rate(cfg: FilterConfig, e_head, s) -> np.ndarray:
    """Time derivative of (e_1, ..., e_{n-1}) when s is prescribed.

    Inverts the filter: e_i' = e_{i+1} for i < n-1 and
    e_{n-1}' = e_n = s - (lambda_1 e_1 + ... + lambda_{n-1} e_{n-1}).
    ``e_head`` has shape (..., n-1) and ``s`` shape (...); batches broadcast.
    """
    e_head = np.asarray(e_head, dtype=float)
    out = np.empty_like(e_head)
    out[..., :-1] = e_head[..., 1:]
    out[..., -1] = np.asarray(s, dtype=float) - e_head @ np.asarray(cfg.lambdas)
    return out


def phi_vector(cfg: FilterConfig, e_stack) -> np.ndarray:
    """Phi = lambda_1 e_2 + ... + lambda_{n-1} e_n."""
    e_stack = np.asarray(e_stack, dtype=float)
    out = np.zeros(e_stack.shape[1])
    for lam, e in zip(cfg.lambdas, e_stack[1:]):
        out += lam * e
    return out


@dataclass(frozen=True)
class CoreFunctionSpec:
    """phi = phi_1 (|Phi| + phi_f + 1) + phi_2 |s| / 2.

    Each builder takes the state blocks (array of shape (n, m)).
    """

    phi_f: Callable[[np.ndarray], float]
    phi_1: Callable[[np.ndarray], float]
    phi_2: Callable[[np.ndarray], float]
    name: str = "custom"


def _norm(v) -> float:
    return math.sqrt(float(np.dot(v, v)))


def core_phi(spec: CoreFunctionSpec, blocks, Phi, s) -> float:
    pf = spec.phi_f(blocks)
    p1 = spec.phi_1(blocks)
    p2 = spec.phi_2(blocks)
    if pf < 0 or p1 < 0 or p2 < 0:
        raise SpecError(f"core function component is negative (phi_f={pf}, phi_1={p1}, phi_2={p2})")
    return p1 * (_norm(Phi) + pf + 1.0) + 0.5 * p2 * _norm(s)


def _one(blocks):
    return 1.0


def _phi_f_two_channel(blocks):
    n1, n2 = _norm(blocks[0]), _norm(blocks[1])
    return n1 * n2 + n2 + 1.0


def _phi_f_planar_3link(blocks):
    nq, nqd = _norm(blocks[0]), _norm(blocks[1])
    return nqd * nqd + nqd * nq + nqd + nq + 1.0


def _qdot_norm(blocks):
    return _norm(blocks[1])


CORE_FUNCTIONS = {
    "unit": CoreFunctionSpec(_one, _one, _one, "unit"),
    "two_channel": CoreFunctionSpec(_phi_f_two_channel, _one, _one, "two_channel"),
    "planar_3link": CoreFunctionSpec(_phi_f_planar_3link, _one, _qdot_norm, "planar_3link"),
}


@dataclass(frozen=True)
class GateFunction:
    """nu(t) = amplitude * exp(-rate t) (``exp``) or amplitude (``constant``)."""

    kind: str = "exp"
    amplitude: float = 0.5
    rate: float = 0.5

    def __post_init__(self):
        if self.kind not in ("exp", "constant"):
            raise DomainError(f"unknown gate kind {self.kind!r}")
        if self.amplitude < 0:
            raise DomainError("gate amplitude must be >= 0")
        if self.kind == "exp" and not self.rate > 0:
            raise DomainError("exponential gate needs a positive rate")
        if self.kind == "constant" and self.amplitude > 0:
            log.info("constant gate nu=%g is not integrable; tracking is only bounded", self.amplitude)

    def __call__(self, t: float) -> float:
        if self.kind == "exp":
            return self.amplitude * math.exp(-self.rate * t)
        return self.amplitude

    @property
    def integrable(self) -> bool:
        return self.kind == "exp" or self.amplitude == 0

    @property
    def nu_bar(self) -> float:
        """Bound on the integral of nu over [0, inf)."""
        if self.kind == "exp":
            return self.amplitude / self.rate
        return 0.0 if self.amplitude == 0 else math.inf

    def integral(self, t: float) -> float:
        if self.kind == "exp":
            return self.amplitude / self.rate * (1.0 - math.exp(-self.rate * t))
        return self.amplitude * t


class Variant(str, Enum):
    FAULT_FREE_NUSSBAUM = "fault_free_nussbaum"
    FAULT_TOLERANT_NUSSBAUM = "fault_tolerant_nussbaum"
    KNOWN_DIRECTION_SIMPLIFIED = "known_direction_simplified"

    @property
    def uses_nussbaum(self) -> bool:
        return self is not Variant.KNOWN_DIRECTION_SIMPLIFIED


@dataclass(frozen=True)
class ControllerConfig:
    variant: Variant
    k: float
    sigma1: float
    sigma2: float
    filter: FilterConfig
    core: CoreFunctionSpec
    gate: GateFunction
    nussbaum: NussbaumFn | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise DomainError("k must be positive")
        if not self.sigma1 > 0:
            raise DomainError("sigma1 must be positive")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.variant.uses_nussbaum and self.nussbaum is None:
            raise DomainError(f"variant {self.variant.value} needs a Nussbaum function")


def _adaptive_denominator(phi: float, s_norm: float, nu_t: float) -> float:
    return phi * s_norm + nu_t


def control_action(cfg: ControllerConfig, zeta: float, theta_hat: float, s, phi: float, nu_t: float):
    """Return ``(u, eta, hbar)``.

    eta = k s + theta_hat phi^2 s / (phi |s| + nu). Nussbaum variants apply
    u = h(zeta) eta, the known-direction variant u = -eta (hbar reported as nan).
    The 0/0 case s = 0, nu = 0 takes the limit value of the adaptive term, 0.
    """
    s = np.asarray(s, dtype=float)
    den = _adaptive_denominator(phi, _norm(s), nu_t)
    if den > 0:
        eta = (cfg.k + theta_hat * phi * phi / den) * s
    else:
        log.debug("adaptive term 0/0 (s = 0, nu = 0); using its limit 0")
        eta = cfg.k * s
    if cfg.variant.uses_nussbaum:
        hbar = nussbaum_eval(cfg.nussbaum, zeta)
        return hbar * eta, eta, hbar
    return -eta, eta, math.nan


def adaptive_rates(cfg: ControllerConfig, s, eta, phi: float, nu_t: float):
    """Return ``(zeta_dot, theta_hat_dot)``; zeta_dot is 0 without a Nussbaum gain."""
    s = np.asarray(s, dtype=float)
    s2 = float(np.dot(s, s))
    den = _adaptive_denominator(phi, math.sqrt(s2), nu_t)
    theta_dot = cfg.sigma2 * phi * phi * s2 / den if den > 0 else 0.0
    zeta_dot = cfg.sigma1 * float(np.dot(s, eta)) if cfg.variant.uses_nussbaum else 0.0
    return zeta_dot, theta_dot


@dataclass(frozen=True)
class BoundingReport:
    norm: float
    rhs_za: float
    rhs_zb: float
    za_holds: bool
    zb_holds: bool
    ordered: bool

    @property
    def ok(self) -> bool:
        return self.za_holds and self.zb_holds and self.ordered


def check_bounding_inequalities(phi_vec, nu_t: float, rtol: float = 1e-12) -> BoundingReport:
    """|phi| <= |phi|^2/(|phi|+nu) + nu <= |phi|^2/sqrt(|phi|^2+nu^2) + nu."""
    if nu_t < 0:
        raise DomainError("nu must be >= 0")
    p = _norm(np.atleast_1d(np.asarray(phi_vec, dtype=float)))
    if p == 0.0:
        za = zb = nu_t
    else:
        za = p * p / (p + nu_t) + nu_t
        zb = p * p / math.sqrt(p * p + nu_t * nu_t) + nu_t
    slack = rtol * max(1.0, p, nu_t)
    return BoundingReport(p, za, zb, p <= za + slack, p <= zb + slack, za <= zb + slack)


@dataclass
class ControlOutput:
    e: np.ndarray
    s: np.ndarray
    Phi: np.ndarray
    phi: float
    nu: float
    hbar: float
    eta: np.ndarray
    u: np.ndarray
    zeta_dot: float
    theta_dot: float


class Controller:
    """Evaluates one of the three laws from measurements only."""

    def __init__(self, cfg: ControllerConfig, m: int, n: int):
        if cfg.filter.order != n:
            raise DomainError(f"filter has {len(cfg.filter.lambdas)} coefficients; plant order {n} needs {n - 1}")
        self.cfg = cfg
        self.m = m
        self.n = n

    def error_stack(self, xbar, yref) -> np.ndarray:
        """Rows e_1..e_n from the state and rows y*, ..., y*^(n-1) of the reference."""
        return np.asarray(xbar, dtype=float).reshape(self.n, self.m) - yref[: self.n]

    def evaluate(self, t: float, xbar, yref, zeta: float, theta_hat: float) -> ControlOutput:
        cfg = self.cfg
        blocks = np.asarray(xbar, dtype=float).reshape(self.n, self.m)
        e_stack = blocks - yref[: self.n]
        s = filtered_error(cfg.filter, e_stack)
        Phi = phi_vector(cfg.filter, e_stack)
        phi = core_phi(cfg.core, blocks, Phi, s)
        nu = cfg.gate(t)
        u, eta, hbar = control_action(cfg, zeta, theta_hat, s, phi, nu)
        zeta_dot, theta_dot = adaptive_rates(cfg, s, eta, phi, nu)
        return ControlOutput(e_stack[0], s, Phi, phi, nu, hbar, eta, u, zeta_dot, theta_dot)
