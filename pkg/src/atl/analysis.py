"""Sampling-based certification of the controllability and bounding assumptions,
plus trace diagnostics (Rayleigh sandwich, skew identity, Lyapunov budget,
tracking metrics).

Everything here may read plant internals; the controller never does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, SpecError
from .faults import FaultSchedule
from .numerics import sym_eig_extrema
from .plant import PlantModel
from .simulate import SimulationTrace


@dataclass(frozen=True)
class AuxiliaryMatrixSpec:
    """alpha(xbar, t), symmetric positive definite, with optional bound data."""

    alpha: Callable[[np.ndarray, float], np.ndarray]
    name: str = "custom"
    a1: float | None = None
    a2: float | None = None
    phi_1: Callable[[np.ndarray], float] | None = None
    phi_2: Callable[[np.ndarray], float] | None = None

    def __call__(self, xbar, t) -> np.ndarray:
        A = np.asarray(self.alpha(xbar, t), dtype=float)
        if np.max(np.abs(A - A.T)) > 1e-12:
            raise SpecError(f"auxiliary matrix {self.name!r} is not symmetric at t={t}")
        return A


def _identity_alpha(m):
    I = np.eye(m)
    return AuxiliaryMatrixSpec(lambda xbar, t: I, "identity", a1=1.0, a2=0.0)


def alpha_indefinite_gain(xbar, t):
    s1 = 0.1 * math.sin(xbar[0])
    return np.array([[0.9 + 0.1 * math.sin(t), s1], [s1, 0.4 + 0.1 * math.cos(t)]])


def alpha_two_channel(xbar, t):
    s1 = 0.1 * math.sin(xbar[0])
    return np.array([[1.0 + 0.1 * math.sin(t), s1], [s1, 0.4 + 0.1 * math.cos(t)]])


def alpha_planar_3link(xbar, t):
    a = 0.01 * math.sin(xbar[0])
    b = 0.01 * math.sin(xbar[1])
    return np.array([
        [0.6 + 0.05 * math.sin(t), a, 0.0],
        [a, 0.2 + 0.05 * math.cos(t), b],
        [0.0, b, 0.2 - 0.05 * math.tanh(t)],
    ])


def make_alpha(name: str, m: int) -> AuxiliaryMatrixSpec:
    if name == "identity":
        return _identity_alpha(m)
    table = {"indefinite_gain": (alpha_indefinite_gain, 2), "two_channel": (alpha_two_channel, 2), "planar_3link": (alpha_planar_3link, 3)}
    try:
        fn, dim = table[name]
    except KeyError:
        raise DomainError(f"unknown auxiliary matrix {name!r}") from None
    if dim != m:
        raise DomainError(f"auxiliary matrix {name!r} is {dim}x{dim}, plant has {m} channels")
    return AuxiliaryMatrixSpec(fn, name)


@dataclass
class OracleSpec:
    """Analysis-only knowledge: alpha and (optionally) the true bound theta."""

    alpha: AuxiliaryMatrixSpec
    theta: float | None = None  # None: derive from the trace
    theta_margin: float = 1.1


# --- controllability ----------------------------------------------------------

class CertVerdict(str, Enum):
    UNIFORMLY_POSITIVE = "UniformlyPositive"
    UNIFORMLY_NEGATIVE = "UniformlyNegative"
    VIOLATED = "Violated"


@dataclass
class ControllabilityCertificate:
    times: np.ndarray
    lam_min: np.ndarray
    lam_max: np.ndarray
    verdict: CertVerdict
    bound: float  # lower bound for positive, upper bound for negative, nan otherwise
    witness_index: int | None = None
    witness_state: np.ndarray | None = None
    beta_range: tuple[float, float] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def witness_time(self) -> float | None:
        return None if self.witness_index is None else float(self.times[self.witness_index])

    @property
    def uniform(self) -> bool:
        return self.verdict is not CertVerdict.VIOLATED

    def to_text(self) -> str:
        lines = [f"verdict: {self.verdict.value}", f"samples: {len(self.times)}"]
        if self.uniform:
            label = "lambda_lower" if self.verdict is CertVerdict.UNIFORMLY_POSITIVE else "lambda_upper"
            lines.append(f"{label}: {self.bound:.17g}")
        else:
            lines.append(f"witness_t: {self.witness_time:.17g}")
            lines.append("witness_state: " + " ".join(f"{v:.17g}" for v in self.witness_state))
            i = self.witness_index
            lines.append(f"witness_eigs: {self.lam_min[i]:.17g} {self.lam_max[i]:.17g}")
        lines.append(f"lambda_min_range: {np.min(self.lam_min):.17g} {np.max(self.lam_min):.17g}")
        lines.append(f"lambda_max_range: {np.min(self.lam_max):.17g} {np.max(self.lam_max):.17g}")
        if self.beta_range is not None:
            lines.append(f"beta_range: {self.beta_range[0]:.17g} {self.beta_range[1]:.17g}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def gain_product(plant: PlantModel, schedule: FaultSchedule | None, xbar, t, segment=None):
    """Effective input matrix g rho (g alone when ``schedule`` is None)."""
    g = plant.eval_g(xbar, t)
    if schedule is None:
        return g
    rho, _ = schedule.evaluate(t, segment)
    return g * rho  # scales column j by rho_j


def symmetrized_gain(alpha: AuxiliaryMatrixSpec, plant, schedule, xbar, t, segment=None):
    """S = alpha g rho + rho g^T alpha."""
    A = alpha(xbar, t)
    G = gain_product(plant, schedule, xbar, t, segment)
    AG = A @ G
    return AG + AG.T


def _samples_from(obj):
    if isinstance(obj, SimulationTrace):
        return obj.t, obj.xbar
    times, states = obj
    return np.asarray(times, dtype=float), np.asarray(states, dtype=float)


def certify_controllability(plant: PlantModel, schedule: FaultSchedule | None,
                            alpha: AuxiliaryMatrixSpec, samples) -> ControllabilityCertificate:
    """Eigenvalue extrema of S at every sample and a sign-uniformity verdict.

    ``samples`` is a trace or a ``(times, states)`` pair.
    """
    times, states = _samples_from(samples)
    lo = np.empty(len(times))
    hi = np.empty(len(times))
    for i, (t, x) in enumerate(zip(times, states)):
        lo[i], hi[i] = sym_eig_extrema(symmetrized_gain(alpha, plant, schedule, x, float(t)), assume_symmetric=True)
    notes = ["sampling-based: certifies the listed samples only"]
    if np.all(lo > 0):
        verdict, bound, w = CertVerdict.UNIFORMLY_POSITIVE, float(np.min(lo)), None
    elif np.all(hi < 0):
        verdict, bound, w = CertVerdict.UNIFORMLY_NEGATIVE, float(np.max(hi)), None
    else:
        verdict, bound = CertVerdict.VIOLATED, math.nan
        # the most indefinite sample (or the first sign flip if none is indefinite)
        indefinite = (lo < 0) & (hi > 0)
        if np.any(indefinite):
            w = int(np.argmin(np.where(indefinite, lo * hi, np.inf)))
        else:
            w = int(np.argmax(np.sign(lo) != np.sign(lo[0])))
    beta_range = None
    if isinstance(samples, SimulationTrace):
        b = beta_along_trace(samples, alpha, plant, schedule)
        if len(b.beta):
            beta_range = (float(np.min(b.beta)), float(np.max(b.beta)))
    return ControllabilityCertificate(times, lo, hi, verdict, bound, w,
                                      None if w is None else states[w].copy(), beta_range, notes)


def grid_samples(bounds, counts, t_values, fixed=None):
    """Cartesian state samples: ``bounds[j] = (lo, hi)`` for state entry j.

    Entries without bounds take ``fixed`` (default 0). Returns (times, states).
    """
    dims = len(bounds)
    axes = [np.linspace(lo, hi, c) if c > 1 else np.array([lo]) for (lo, hi), c in zip(bounds, counts)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=float)
        full = np.tile(fixed, (len(mesh), 1))
        full[:, : dims] = mesh
        mesh = full
    t_values = np.asarray(t_values, dtype=float)
    times = np.repeat(t_values, len(mesh))
    states = np.tile(mesh, (len(t_values), 1))
    return times, states


# --- Rayleigh sandwich and skew identity ----------------------------------------

@dataclass
class BetaSamples:
    t: np.ndarray
    beta: np.ndarray
    lam_min: np.ndarray
    lam_max: np.ndarray
    within: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.within))


def beta_from(S, s, rtol: float = 1e-10):
    """beta = s^T S s / (2 s^T s) and whether lam_min/2 <= beta <= lam_max/2."""
    lo, hi = sym_eig_extrema(S, assume_symmetric=True)
    ss = float(s @ s)
    beta = float(s @ S @ s) / (2.0 * ss)
    slack = rtol * max(1.0, abs(lo), abs(hi))
    return beta, lo, hi, (lo / 2 - slack <= beta <= hi / 2 + slack)


def beta_along_trace(trace: SimulationTrace, alpha: AuxiliaryMatrixSpec, plant: PlantModel,
                     schedule: FaultSchedule | None, stride: int = 1, s_floor: float = 1e-12) -> BetaSamples:
    out = ([], [], [], [], [])
    S_all = trace.s
    for i in range(0, len(trace), stride):
        s = S_all[i]
        if math.sqrt(float(s @ s)) < s_floor:
            continue
        t = float(trace.t[i])
        S = symmetrized_gain(alpha, plant, schedule, trace.xbar[i], t)
        beta, lo, hi, ok = beta_from(S, s)
        for lst, v in zip(out, (t, beta, lo, hi, ok)):
            lst.append(v)
    return BetaSamples(*(np.array(v) for v in out))


@dataclass
class SkewReport:
    max_relative: float
    samples: int
    ok: bool
    worst_index: int | None


def skew_identity_check(alpha: AuxiliaryMatrixSpec, plant: PlantModel, schedule: FaultSchedule | None,
                        samples, vectors=None, tol: float = 1e-10, rng=None) -> SkewReport:
    """|s^T (A - A^T) s| <= tol |s|^2 |alpha g rho| at every sample (A = alpha g rho).

    ``vectors`` supplies s per sample (the trace's s when ``samples`` is a
    trace); otherwise random directions are drawn.
    """
    times, states = _samples_from(samples)
    if vectors is None and isinstance(samples, SimulationTrace):
        vectors = samples.s
    if vectors is None:
        rng = np.random.default_rng(0) if rng is None else rng
        vectors = rng.standard_normal((len(times), plant.m))
    worst, worst_i = 0.0, None
    for i, (t, x, s) in enumerate(zip(times, states, vectors)):
        A = alpha(x, float(t)) @ gain_product(plant, schedule, x, float(t))
        ss = float(s @ s)
        if ss == 0.0:
            continue
        rel = abs(float(s @ (A - A.T) @ s)) / (ss * max(np.linalg.norm(A, 2), 1e-300))
        if rel > worst:
            worst, worst_i = rel, i
    return SkewReport(worst, len(times), worst <= tol, worst_i)


# --- Lyapunov budget ------------------------------------------------------------

def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def alpha_total_derivative(alpha: AuxiliaryMatrixSpec, xbar, t, m: int, n: int, step: float = 1e-6):
    """d/dt alpha(xbar(t), t) along the canonical flow x_i' = x_{i+1} (i < n).

    alpha depends on x_1..x_{n-1} only, so the chain rule needs no model terms.
    """
    xbar = np.asarray(xbar, dtype=float)
    direction = np.zeros_like(xbar)
    direction[: m * (n - 1)] = xbar[m:]
    plus = alpha(xbar + step * direction, t + step)
    minus = alpha(xbar - step * direction, t - step)
    return (plus - minus) / (2 * step)


def _budget_terms(trace: SimulationTrace, alpha: AuxiliaryMatrixSpec, plant: PlantModel,
                  schedule: FaultSchedule | None, reference, want_ratio: bool = True):
    """Per-node (V1, beta, bound ratio) in one pass over the trace.

    The effectiveness and bias come from the recorded trace columns, so a
    switch node uses the same (left) segment the simulator recorded.
    """
    m, n = trace.m, trace.n
    N = len(trace)
    V1, beta, ratio = np.empty(N), np.zeros(N), np.full(N, np.nan)
    t_all, x_all, s_all = trace.t, trace.xbar, trace.s
    rho_all, eps_all, Phi_all, phi_all = trace.rho, trace.eps, trace.Phi, trace.phi
    faulty = schedule is not None
    for i in range(N):
        t, x, s = float(t_all[i]), x_all[i], s_all[i]
        A = alpha(x, t)
        G = plant.eval_g(x, t)
        V1[i] = 0.5 * float(s @ A @ s)
        ss = float(s @ s)
        if ss > 0:
            AG = A @ (G * rho_all[i] if faulty else G)
            beta[i] = float(s @ AG @ s) / ss  # = s^T S s / (2 s^T s)
        if want_ratio:
            lumped = plant.eval_f(x) + plant.eval_d(x, t)
            if faulty:
                lumped = lumped + G @ eps_all[i]
            vec = A @ (Phi_all[i] + lumped - reference.derivatives(t, n)[n])
            vec += 0.5 * alpha_total_derivative(alpha, x, t, m, n) @ s
            ratio[i] = math.sqrt(float(vec @ vec)) / phi_all[i]
    return V1, beta, ratio


def theta_bound_ratio(trace: SimulationTrace, alpha: AuxiliaryMatrixSpec, plant: PlantModel,
                      schedule: FaultSchedule | None, reference) -> np.ndarray:
    """|alpha (Phi + f + g eps + d - y*^(n)) + alpha' s / 2| / phi at every node.

    Its maximum over a trace is the smallest theta consistent with the
    observed states; the oracle takes a margin above it.
    """
    return _budget_terms(trace, alpha, plant, schedule, reference)[2]


@dataclass
class LyapunovDiagnostic:
    t: np.ndarray
    V2: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    s_sq_integral: np.ndarray
    theta: float
    delta: float
    nu_bar: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def last_quarter_fraction(self) -> float:
        """Share of the final integral of |s|^2 accrued during the last quarter."""
        I = self.s_sq_integral
        total = I[-1]
        if total == 0:
            return 0.0
        k = int(np.searchsorted(self.t, self.t[0] + 0.75 * (self.t[-1] - self.t[0])))
        return float((I[-1] - I[k]) / total)


def lyapunov_budget(trace: SimulationTrace, oracle: OracleSpec, plant: PlantModel,
                    schedule: FaultSchedule | None, reference, controller) -> LyapunovDiagnostic:
    """Both sides of V2(t) + k int |s|^2 <= (1/sigma1) int (beta h(zeta) + 1) zeta' + Delta.

    ``controller`` is the ControllerConfig the trace was produced with.
    """
    if oracle is None:
        raise DomainError("lyapunov budget needs an oracle block")
    cfg = controller
    if not cfg.variant.uses_nussbaum:
        raise DomainError("lyapunov budget is defined for the Nussbaum variants")
    alpha = oracle.alpha
    V1, beta, ratio = _budget_terms(trace, alpha, plant, schedule, reference, want_ratio=oracle.theta is None)
    theta = oracle.theta
    if theta is None:
        theta = oracle.theta_margin * float(np.max(ratio))
    t = trace.t
    s = trace.s
    nu_bar = cfg.gate.nu_bar
    V2 = V1 + (theta - trace.theta_hat) ** 2 / (2 * cfg.sigma2)
    s_sq = np.einsum("ij,ij->i", s, s)
    zeta_dot = cfg.sigma1 * np.einsum("ij,ij->i", s, trace.eta)
    integrand = (beta * trace.hbar + 1.0) * zeta_dot
    delta = float(V2[0] + theta * nu_bar)
    I_s = _cumtrapz(s_sq, t)
    lhs = V2 + cfg.k * I_s
    rhs = _cumtrapz(integrand, t) / cfg.sigma1 + delta
    return LyapunovDiagnostic(t, V2, lhs, rhs, rhs - lhs, I_s, theta, delta, nu_bar)


# --- core-function growth bound checks ------------------------------------------------

@dataclass
class BoundCheckReport:
    checks: dict[str, tuple[float, float, bool]]  # name -> (max ratio, declared constant, ok)
    witnesses: dict[str, np.ndarray]
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v[2] for v in self.checks.values())

    def to_text(self) -> str:
        lines = [f"bounds: {'Pass' if self.ok else 'Fail'}"]
        for name, (r, c, ok) in self.checks.items():
            lines.append(f"  {name}: max ratio {r:.17g} vs declared {c:.17g} -> {'ok' if ok else 'VIOLATED'}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def growth_bound_check(core, plant: PlantModel, alpha: AuxiliaryMatrixSpec | None, samples,
                       a_f: float, a1: float | None = None, a2: float | None = None,
                       schedule: FaultSchedule | None = None, fd_step: float = 1e-6) -> BoundCheckReport:
    """Check |f + (g eps) + d| <= a_f phi_f, |alpha| <= a1 phi_1, |d alpha/dt| <= a2 phi_2.

    The bias term enters when a fault schedule is given. Norms are spectral.
    """
    times, states = _samples_from(samples)
    m, n = plant.m, plant.n
    ratios = {"lumped": [], "alpha": [], "alpha_dt": []}
    for t, x in zip(times, states):
        t = float(t)
        blocks = x.reshape(n, m)
        lumped = plant.eval_f(x) + plant.eval_d(x, t)
        if schedule is not None:
            _, eps = schedule.evaluate(t)
            lumped = lumped + plant.eval_g(x, t) @ eps
        ratios["lumped"].append(np.linalg.norm(lumped) / core.phi_f(blocks))
        if alpha is not None:
            ratios["alpha"].append(np.linalg.norm(alpha(x, t), 2) / core.phi_1(blocks))
            dA = (alpha(x, t + fd_step) - alpha(x, t - fd_step)) / (2 * fd_step)
            p2 = core.phi_2(blocks)
            ratios["alpha_dt"].append(np.linalg.norm(dA, 2) / p2 if p2 > 0 else
                                      (0.0 if np.linalg.norm(dA, 2) == 0 else math.inf))
    checks, witnesses = {}, {}
    for name, const in (("lumped", a_f), ("alpha", a1), ("alpha_dt", a2)):
        r = np.asarray(ratios[name])
        if const is None or not len(r):
            continue
        i = int(np.argmax(r))
        checks[name] = (float(r[i]), float(const), bool(r[i] <= const))
        witnesses[name] = np.concatenate([[times[i]], states[i]])
    notes = ["sampling-based over the given box; radial unboundedness of the phi functions is not certified"]
    return BoundCheckReport(checks, witnesses, notes)


# name used by existing callers
assumption2_bound_check = growth_bound_check


# --- tracking metrics ------------------------------------------------------------------

@dataclass
class TrackingMetrics:
    sup_norms: dict[str, float]
    error_at: dict[float, float]
    steady_band: float
    chatter_index: float
    tail_start: float

    def to_text(self) -> str:
        lines = [f"steady_band: {self.steady_band:.17g}", f"chatter_index: {self.chatter_index:.17g}",
                 f"tail_start: {self.tail_start:.17g}"]
        lines += [f"e_norm_at_{c:g}: {v:.17g}" for c, v in self.error_at.items()]
        lines += [f"sup_{k}: {v:.17g}" for k, v in self.sup_norms.items()]
        return "\n".join(lines) + "\n"


def error_norm(trace: SimulationTrace) -> np.ndarray:
    e = trace.e
    return np.sqrt(np.einsum("ij,ij->i", e, e))


def tracking_metrics(trace: SimulationTrace, checkpoints=(5.0, 10.0, 20.0, 30.0),
                     tail_fraction: float = 0.2) -> TrackingMetrics:
    """Sup norms, |e| at checkpoints, steady band and chatter over the final tail.

    The chatter index is the total variation of u (summed over channels) per
    second over the tail window.
    """
    t = trace.t
    en = error_norm(trace)
    sup = {}
    for name in ("e", "s", "u", "u_a", "eta", "xbar"):
        block = getattr(trace, name)
        sup[name] = float(np.max(np.linalg.norm(block, axis=1)))
    for name in ("zeta", "theta_hat", "phi"):
        sup[name] = float(np.max(np.abs(getattr(trace, name))))
    error_at = {}
    for c in checkpoints:
        if t[0] <= c <= t[-1]:
            error_at[float(c)] = float(en[int(np.argmin(np.abs(t - c)))])
    t0 = t[-1] - tail_fraction * (t[-1] - t[0])
    tail = t >= t0 - 1e-12
    band = float(np.max(en[tail]))
    u = trace.u[tail]
    duration = t[tail][-1] - t[tail][0]
    tv = float(np.sum(np.abs(np.diff(u, axis=0))))
    chatter = tv / duration if duration > 0 else 0.0
    return TrackingMetrics(sup, error_at, band, chatter, float(t0))


def boundedness_growth(values, t, tail_fraction: float = 0.1) -> float:
    """Growth of a nondecreasing signal over the final tail relative to its total."""
    values = np.asarray(values, dtype=float)
    k = int(np.searchsorted(t, t[-1] - tail_fraction * (t[-1] - t[0]) - 1e-12))
    total = abs(values[-1])
    if total == 0:
        return 0.0
    return float((values[-1] - values[k]) / total)


def is_nondecreasing(values, atol: float = 0.0) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) >= -atol))


@dataclass
class TransientReport:
    pre_level: float
    peak: float
    reentry_time: float | None  # first time after which |e| stays inside the band

    def visible(self) -> bool:
        return self.peak > self.pre_level

    def reconverged_within(self, t_event: float, window: float) -> bool:
        return self.reentry_time is not None and self.reentry_time <= t_event + window


def transient_after(trace: SimulationTrace, t_event: float, band: float, pre_window: float = 1.0) -> TransientReport:
    t = trace.t
    en = error_norm(trace)
    pre = (t >= t_event - pre_window) & (t <= t_event)
    post = t > t_event
    pre_level = float(np.max(en[pre])) if np.any(pre) else 0.0
    peak = float(np.max(en[post])) if np.any(post) else 0.0
    idx = np.nonzero(post)[0]
    outside = idx[en[idx] >= band]
    if len(outside) == 0:
        reentry = float(t[idx[0]]) if len(idx) else None
    elif outside[-1] + 1 < len(t):
        reentry = float(t[outside[-1] + 1])
    else:
        reentry = None
    return TransientReport(pre_level, peak, reentry)
