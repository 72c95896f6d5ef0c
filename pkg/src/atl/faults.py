"""Actuator fault model u_a = rho(t) u + eps(t) with piecewise schedules.

Segments own half-open intervals (t_a, t_b]; the first segment also owns the
initial instant t = 0 so that a run can be evaluated at its start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class FaultSegment:
    t_end: float  # right end of (t_start, t_end]; math.inf for the last segment
    rho: Callable[[float], np.ndarray]  # diagonal of the effectiveness matrix
    eps: Callable[[float], np.ndarray]  # additive bias


@dataclass(frozen=True)
class FaultSchedule:
    segments: tuple[FaultSegment, ...]
    eps_bar: float = 0.0
    name: str = "custom"
    m: int = field(default=0)

    def __post_init__(self):
        if not self.segments:
            raise DomainError("fault schedule needs at least one segment")
        ends = [s.t_end for s in self.segments]
        if any(b <= a for a, b in zip(ends[:-1], ends[1:])):
            raise DomainError("segment end times must be strictly increasing")
        if ends[-1] != math.inf:
            raise DomainError("last segment must extend to infinity")

    @property
    def switch_instants(self) -> tuple[float, ...]:
        return tuple(s.t_end for s in self.segments[:-1])

    def segment_index(self, t: float) -> int:
        if t < 0 or not math.isfinite(t):
            raise DomainError(f"time {t!r} is not covered by the schedule")
        for i, seg in enumerate(self.segments):
            if t <= seg.t_end:
                return i
        raise DomainError(f"time {t!r} is not covered by the schedule")  # pragma: no cover

    def segment_for_step(self, t_start: float, h: float) -> int:
        """Segment owning the open step (t_start, t_start + h)."""
        return self.segment_index(t_start + 0.5 * h)

    def evaluate(self, t: float, segment: int | None = None):
        """(rho diagonal, eps) at ``t``; ``segment`` forces a given piece."""
        seg = self.segments[self.segment_index(t) if segment is None else segment]
        return np.asarray(seg.rho(t), dtype=float), np.asarray(seg.eps(t), dtype=float)


def apply_fault(schedule: FaultSchedule, u, t: float, segment: int | None = None):
    """Return (u_a, rho as a diagonal matrix, eps)."""
    u = np.asarray(u, dtype=float)
    rho, eps = schedule.evaluate(t, segment)
    return rho * u + eps, np.diag(rho), eps


@dataclass
class PloeReport:
    ok: bool
    violations: list[tuple[float, str, int, float]]  # (t, what, channel, value)
    samples: int

    def to_text(self) -> str:
        head = f"ploe: {'Pass' if self.ok else 'Fail'} ({self.samples} samples)"
        rows = [f"  t={t:.17g} {what}[{j}]={v:.17g}" for t, what, j, v in self.violations[:20]]
        return "\n".join([head, *rows]) + "\n"


def validate_ploe(schedule: FaultSchedule, horizon: float, sample_step: float) -> PloeReport:
    """Sample every channel on a grid plus both one-sided limits at switches.

    Effectiveness must lie in (0, 1]; the bias norm must not exceed the
    declared ``eps_bar``.
    """
    if not sample_step > 0:
        raise DomainError("sample_step must be positive")
    n = max(1, math.ceil(round(horizon / sample_step, 9)))
    points = [(float(t), None) for t in np.linspace(0.0, horizon, n + 1)]
    for i, ts in enumerate(schedule.switch_instants):
        if ts <= horizon:
            points.append((ts, i))      # left limit: the segment ending at ts
            points.append((ts, i + 1))  # right limit: continuation of the next one
    violations = []
    for t, seg in points:
        rho, eps = schedule.evaluate(t, seg)
        for j, r in enumerate(rho):
            if not (0.0 < r <= 1.0):
                violations.append((t, "rho", j, float(r)))
        en = float(np.linalg.norm(eps))
        if en > schedule.eps_bar:
            violations.append((t, "|eps|", -1, en))
    return PloeReport(not violations, violations, len(points))


# --- built-in schedules -----------------------------------------------------

def healthy(m: int) -> FaultSchedule:
    ones, zeros = np.ones(m), np.zeros(m)
    return FaultSchedule((FaultSegment(math.inf, lambda t: ones, lambda t: zeros),), 0.0, "healthy", m)


def _eps_two_channel(t):
    return np.array([0.02 * math.tanh(2 * t), 0.02 * math.cos(3 * t)])


def two_channel_jump() -> FaultSchedule:
    """Two-channel jump fault switching at t = 3 s."""
    return FaultSchedule(
        (
            FaultSegment(3.0, lambda t: np.array([0.9 + 0.1 * math.sin(t), 1.0 - 0.2 * math.tanh(t)]), _eps_two_channel),
            FaultSegment(math.inf, lambda t: np.array([0.8 + 0.2 * math.sin(t), 0.2]), _eps_two_channel),
        ),
        eps_bar=0.03,
        name="two_channel_jump",
        m=2,
    )


def _eps_three_channel(t):
    return np.array([0.01 * math.tanh(2 * t), 0.01 * math.cos(t), 0.01 * math.sin(3 * t)])


def three_channel_jump() -> FaultSchedule:
    """Three-channel jump fault switching at t = 5 s."""
    return FaultSchedule(
        (
            FaultSegment(5.0, lambda t: np.array([
                1.0 - 0.2 * math.tanh(t), 0.9 + 0.1 * math.sin(t), 0.9 + 0.1 * math.cos(t)]), _eps_three_channel),
            FaultSegment(math.inf, lambda t: np.array([
                0.8 + 0.05 * math.sin(t), 0.2 + 0.05 * math.cos(t), 0.2 - 0.05 * math.tanh(t)]), _eps_three_channel),
        ),
        eps_bar=0.02,
        name="three_channel_jump",
        m=3,
    )


def piecewise_constant(m: int, switches, rhos, eps=None, eps_bar: float | None = None) -> FaultSchedule:
    """Schedule from a table: ``rhos[i]`` holds on the i-th interval between ``switches``."""
    switches = [float(s) for s in switches]
    if len(rhos) != len(switches) + 1:
        raise DomainError("need one effectiveness row per interval")
    eps = [np.zeros(m)] * len(rhos) if eps is None else [np.asarray(e, dtype=float) for e in eps]
    ends = [*switches, math.inf]
    segs = tuple(
        FaultSegment(te, (lambda r: (lambda t: r))(np.asarray(r, dtype=float)), (lambda e: (lambda t: e))(e))
        for te, r, e in zip(ends, rhos, eps)
    )
    if eps_bar is None:
        eps_bar = max(float(np.linalg.norm(e)) for e in eps)
    return FaultSchedule(segs, eps_bar, "table", m)


SCHEDULES = {"two_channel_jump": two_channel_jump, "three_channel_jump": three_channel_jump}


def make_schedule(name: str, m: int) -> FaultSchedule:
    if name == "healthy":
        return healthy(m)
    try:
        sched = SCHEDULES[name]()
    except KeyError:
        raise DomainError(f"unknown fault schedule {name!r}") from None
    if sched.m != m:
        raise DomainError(f"schedule {name!r} has {sched.m} channels, plant has {m}")
    return sched
