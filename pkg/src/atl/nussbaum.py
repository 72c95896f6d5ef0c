"""Nussbaum gain functions and finite-horizon probes of their defining limits.

The limits that define BL-type and B-type functions cannot be checked on a
computer, so :func:`probe_bl` returns falsifiable "consistent with" verdicts
computed from the positive and negative integral masses on a finite horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, GainOverflowError

DEFAULT_OVERFLOW_CAP = 1e12


@dataclass(frozen=True)
class NussbaumFn:
    """A scalar gain h(zeta) on [0, inf).

    ``kind`` is one of ``exp_quad_cos`` (exp(a z^2) cos(b pi z)),
    ``exp_quad_sin`` (exp(a z^2) sin z), ``quad_sin`` (z^2 sin z),
    ``exp_sin`` (exp(z) sin z) or ``custom`` (``func``).
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    func: Callable[[float], float] | None = field(default=None, compare=False)
    overflow_cap: float = DEFAULT_OVERFLOW_CAP

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown Nussbaum kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise DomainError("custom Nussbaum function needs func")

    def __call__(self, zeta: float) -> float:
        return nussbaum_eval(self, zeta)

    def values(self, zeta: np.ndarray) -> np.ndarray:
        """Vectorized evaluation without the overflow check."""
        z = np.asarray(zeta, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.kind == "exp_quad_cos":
                return np.exp(self.a * z * z) * np.cos(self.b * np.pi * z)
            if self.kind == "exp_quad_sin":
                return np.exp(self.a * z * z) * np.sin(z)
            if self.kind == "quad_sin":
                return z * z * np.sin(z)
            if self.kind == "exp_sin":
                return np.exp(z) * np.sin(z)
        return np.array([float(self.func(float(v))) for v in z.ravel()]).reshape(z.shape)

    @property
    def period(self) -> float | None:
        """Period of the oscillating factor, or ``None`` for custom functions."""
        if self.kind == "exp_quad_cos":
            return 2.0 / self.b
        if self.kind == "custom":
            return None
        return 2.0 * math.pi


_KINDS = ("exp_quad_cos", "exp_quad_sin", "quad_sin", "exp_sin", "custom")


def exp_quad_cos(a: float = 0.07, b: float = 0.1, overflow_cap=DEFAULT_OVERFLOW_CAP):
    return NussbaumFn("exp_quad_cos", a=a, b=b, overflow_cap=overflow_cap)


def exp_quad_sin(a: float = 1.0, overflow_cap=DEFAULT_OVERFLOW_CAP):
    return NussbaumFn("exp_quad_sin", a=a, overflow_cap=overflow_cap)


def quad_sin(overflow_cap=DEFAULT_OVERFLOW_CAP):
    return NussbaumFn("quad_sin", overflow_cap=overflow_cap)


def exp_sin(overflow_cap=DEFAULT_OVERFLOW_CAP):
    return NussbaumFn("exp_sin", overflow_cap=overflow_cap)


def custom(func, overflow_cap=DEFAULT_OVERFLOW_CAP):
    return NussbaumFn("custom", func=func, overflow_cap=overflow_cap)


def make_nussbaum(kind: str, a: float | None = None, b: float | None = None,
                  overflow_cap: float = DEFAULT_OVERFLOW_CAP) -> NussbaumFn:
    """Built-in functions by name; ``constant`` (value ``a``, default 1) is a negative control."""
    if kind == "exp_quad_cos":
        return exp_quad_cos(0.07 if a is None else a, 0.1 if b is None else b, overflow_cap)
    if kind == "exp_quad_sin":
        return exp_quad_sin(1.0 if a is None else a, overflow_cap)
    if kind == "quad_sin":
        return quad_sin(overflow_cap)
    if kind == "exp_sin":
        return exp_sin(overflow_cap)
    if kind == "constant":
        value = 1.0 if a is None else float(a)
        return custom(lambda z: value, overflow_cap)
    raise DomainError(f"unknown Nussbaum function {kind!r}")


def nussbaum_eval(fn: NussbaumFn, zeta: float) -> float:
    zeta = float(zeta)
    if not (zeta >= 0 and math.isfinite(zeta)):
        raise DomainError(f"Nussbaum argument must be finite and >= 0, got {zeta!r}")
    try:
        if fn.kind == "exp_quad_cos":
            val = math.exp(fn.a * zeta * zeta) * math.cos(fn.b * math.pi * zeta)
        elif fn.kind == "exp_quad_sin":
            val = math.exp(fn.a * zeta * zeta) * math.sin(zeta)
        elif fn.kind == "quad_sin":
            val = zeta * zeta * math.sin(zeta)
        elif fn.kind == "exp_sin":
            val = math.exp(zeta) * math.sin(zeta)
        else:
            val = float(fn.func(zeta))
    except OverflowError:
        raise GainOverflowError(f"Nussbaum gain overflowed at zeta={zeta!r}", zeta=zeta) from None
    if not abs(val) <= fn.overflow_cap:
        raise GainOverflowError(
            f"|h(zeta)| = {abs(val):.3g} exceeds cap {fn.overflow_cap:.3g} at zeta={zeta!r}",
            zeta=zeta,
        )
    return val


class ProbeVerdict(str, Enum):
    CONSISTENT_WITH_BL = "ConsistentWithBL"
    CONSISTENT_WITH_B = "ConsistentWithB"
    INCONSISTENT = "Inconsistent"


@dataclass
class BLProbeReport:
    zeta_grid: np.ndarray
    pos_integral: np.ndarray
    neg_integral: np.ndarray
    growth_pos: np.ndarray
    growth_neg: np.ndarray
    ratio_sup_pos_over_neg: float
    ratio_sup_neg_over_pos: float
    pos_peaks: list[float]
    neg_peaks: list[float]
    verdict: ProbeVerdict
    reason: str = ""

    def to_text(self) -> str:
        lines = [
            f"verdict: {self.verdict.value}",
            f"reason: {self.reason}",
            f"ratio_sup_pos_over_neg: {self.ratio_sup_pos_over_neg:.17g}",
            f"ratio_sup_neg_over_pos: {self.ratio_sup_neg_over_pos:.17g}",
            "zeta,pos_integral,neg_integral,growth_pos,growth_neg",
        ]
        for row in zip(self.zeta_grid, self.pos_integral, self.neg_integral,
                       self.growth_pos, self.growth_neg):
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def _sign_changes(fn: NussbaumFn, a: float, b: float, step: float, tol: float = 1e-10):
    """Roots of h in (a, b) bracketed on a grid of width ``step``, refined by bisection."""
    n = max(2, math.ceil((b - a) / step))
    z = np.linspace(a, b, n + 1)
    v = fn.values(z)
    roots = []
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    for i in idx:
        lo, hi = float(z[i]), float(z[i + 1])
        flo = float(v[i])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = float(fn.values(np.array([mid]))[0])
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    # exact zeros on the sampling grid are kinks as well
    roots.extend(float(z[i]) for i in np.nonzero(v[1:-1] == 0.0)[0] + 1)
    return sorted(roots)


def _simpson(fn: NussbaumFn, a: float, b: float, step: float):
    """Simpson integrals of h+ and h- over [a, b], on which h has one sign."""
    if b <= a:
        return 0.0, 0.0
    n = max(2, math.ceil((b - a) / step))
    n += n % 2
    z = np.linspace(a, b, n + 1)
    v = fn.values(z)
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > fn.overflow_cap:
        raise GainOverflowError(f"Nussbaum gain overflowed on [{a}, {b}]", zeta=b)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    hz = (b - a) / n
    # endpoints sit within the root tolerance of a sign change; the lobe sign
    # comes from the interior so that no spurious opposite-sign mass leaks in
    sign = np.sign(v[n // 2]) if v[n // 2] != 0 else np.sign(np.sum(v[1:-1]))
    mass = float(np.dot(w, np.maximum(sign * v, 0.0)) * hz / 3.0)
    return (mass, 0.0) if sign > 0 else (0.0, mass)


def accumulated_integrals(fn: NussbaumFn, points, step: float):
    """Cumulative integrals of h+ and h- from 0 to each of ``points``.

    Also returns the root list used for kink splitting.
    """
    points = np.asarray(points, dtype=float)
    top = float(points[-1])
    roots = [r for r in _sign_changes(fn, 0.0, top, step) if 0.0 < r < top]
    breaks = sorted(set([0.0, *roots, *points.tolist()]))
    pos_acc = {0.0: 0.0}
    neg_acc = {0.0: 0.0}
    p = q = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        dp, dq = _simpson(fn, a, b, step)
        p += dp
        q += dq
        pos_acc[b] = p
        neg_acc[b] = q
    pos = np.array([pos_acc[float(x)] for x in points])
    neg = np.array([neg_acc[float(x)] for x in points])
    return pos, neg, roots, pos_acc, neg_acc


def probe_bl(fn: NussbaumFn, horizons, L_target: float, step: float | None = None,
             growth_margin: float = 1.01) -> BLProbeReport:
    """Probe the BL-type / B-type limits of ``fn`` on the given horizons.

    The ratio pos/neg peaks at the end of each positive lobe and neg/pos at the
    end of each negative lobe; those lobe-end values are the finite-horizon
    stand-ins for the two limsups. Verdicts:

    * Inconsistent: a mass vanishes, integral/zeta decreases over the last
      three horizons or does not grow across the tested range, or a
      lobe-end ratio never exceeds 1.
    * ConsistentWithB: both lobe-end ratio sequences grow by at least
      ``growth_margin`` from lobe to lobe (last two or three completed
      lobes) and end above ``L_target``.
    * ConsistentWithBL: otherwise.
    """
    horizons = np.asarray(horizons, dtype=float)
    if horizons.ndim != 1 or len(horizons) == 0 or np.any(horizons <= 0):
        raise DomainError("horizons must be a non-empty list of positive values")
    if np.any(np.diff(horizons) <= 0):
        raise DomainError("horizons must be strictly increasing")
    if step is None:
        period = fn.period
        step = 1e-3 * period if period is not None else 1e-3

    try:
        pos, neg, roots, pos_acc, neg_acc = accumulated_integrals(fn, horizons, step)
    except GainOverflowError as exc:
        raise GainOverflowError(f"{exc} (probe horizons up to {horizons[-1]})", zeta=exc.zeta) from None

    growth_pos = pos / horizons
    growth_neg = neg / horizons

    pos_peaks, neg_peaks = [], []
    for r in roots:
        # sign just before the root decides which lobe ended there
        left = float(fn.values(np.array([max(r - 0.5 * step, 0.0)]))[0])
        P, Q = pos_acc[r], neg_acc[r]
        if left > 0 and Q > 0:
            pos_peaks.append(P / Q)
        elif left < 0 and P > 0:
            neg_peaks.append(Q / P)
    P, Q = pos[-1], neg[-1]
    ratio_pn = pos_peaks[-1] if pos_peaks else (math.inf if P > 0 else 0.0)
    ratio_np = neg_peaks[-1] if neg_peaks else (math.inf if Q > 0 else 0.0)

    def stalls(g):
        # integral/zeta must diverge: it may not fall over the last three
        # horizons, nor fail to rise across the whole tested range
        return (len(g) >= 3 and g[-1] < g[-2] < g[-3]) or g[-1] < growth_margin * g[0]

    def grows(peaks):
        tail = peaks[-3:]
        return len(tail) >= 2 and all(b >= growth_margin * a for a, b in zip(tail[:-1], tail[1:]))

    if pos[-1] <= 0 or neg[-1] <= 0:
        verdict, reason = ProbeVerdict.INCONSISTENT, "one of the integral masses is zero"
    elif stalls(growth_pos) or stalls(growth_neg):
        verdict, reason = ProbeVerdict.INCONSISTENT, "integral/zeta stalls instead of growing without bound"
    elif not (ratio_pn > 1 and ratio_np > 1):
        verdict, reason = ProbeVerdict.INCONSISTENT, "a lobe-end ratio does not exceed 1"
    elif grows(pos_peaks) and grows(neg_peaks) and ratio_pn > L_target and ratio_np > L_target:
        verdict, reason = ProbeVerdict.CONSISTENT_WITH_B, "lobe-end ratios grow without bound and exceed L_target"
    else:
        verdict, reason = ProbeVerdict.CONSISTENT_WITH_BL, "masses grow, lobe-end ratios exceed 1 but stay bounded"

    return BLProbeReport(
        zeta_grid=horizons,
        pos_integral=pos,
        neg_integral=neg,
        growth_pos=growth_pos,
        growth_neg=growth_neg,
        ratio_sup_pos_over_neg=float(ratio_pn),
        ratio_sup_neg_over_pos=float(ratio_np),
        pos_peaks=pos_peaks,
        neg_peaks=neg_peaks,
        verdict=verdict,
        reason=reason,
    )
