"""Closed-loop assembly and event-aligned RK4 time stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .controller import Controller, ControllerConfig
from .errors import DivergenceError, DomainError, GainOverflowError
from .faults import FaultSchedule, validate_ploe
from .numerics import build_grid
from .plant import PlantModel, ReferenceTrajectory

DEFAULT_H = 1e-3


@dataclass
class Scenario:
    name: str
    plant: PlantModel
    controller: ControllerConfig
    reference: ReferenceTrajectory
    faults: FaultSchedule
    x0: np.ndarray
    zeta0: float = 0.0
    theta0: float = 0.0
    t_end: float = 30.0
    h: float = DEFAULT_H
    oracle: Any = None
    divergence_cap: float = 1e8

    def validate(self):
        m, n = self.plant.m, self.plant.n
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (m * n,):
            raise DomainError(f"initial state needs {m * n} entries, got {self.x0.size}")
        if self.reference.m != m:
            raise DomainError(f"reference has {self.reference.m} channels, plant has {m}")
        if self.theta0 < 0:
            raise DomainError("theta_hat(0) must be >= 0")
        if self.zeta0 < 0:
            raise DomainError("zeta(0) must be >= 0")
        if self.controller.filter.order != n:
            raise DomainError(f"filter needs {n - 1} coefficients for a plant of order {n}")
        if self.faults.m not in (0, m):
            raise DomainError(f"fault schedule has {self.faults.m} channels, plant has {m}")
        report = validate_ploe(self.faults, self.t_end, max(self.h, 1e-3))
        if not report.ok:
            t, what, j, v = report.violations[0]
            raise DomainError(f"fault schedule leaves the PLOE range: {what}[{j}]={v} at t={t}")
        return self


class Verdict(str, Enum):
    COMPLETED = "Completed"
    DIVERGED = "Diverged"
    GAIN_OVERFLOW = "GainOverflow"


def augment_state(xbar, zeta: float, theta_hat: float) -> np.ndarray:
    """Flat integrator state: xbar block, then zeta, then theta_hat."""
    xbar = np.asarray(xbar, dtype=float).ravel()
    return np.concatenate([xbar, [float(zeta), float(theta_hat)]])


def split_state(y, state_dim: int):
    y = np.asarray(y, dtype=float)
    if y.shape != (state_dim + 2,):
        raise DomainError(f"flat state must have {state_dim + 2} entries, got {y.shape}")
    return y[:state_dim], float(y[state_dim]), float(y[state_dim + 1])


def trace_columns(m: int, n: int) -> list[str]:
    """CSV column order."""
    cols = ["t"]
    cols += [f"x_{i}_{j}" for i in range(1, n + 1) for j in range(1, m + 1)]
    for name in ("y_star", "e", "s", "Phi"):
        cols += [f"{name}_{j}" for j in range(1, m + 1)]
    cols += ["phi", "nu", "zeta", "hbar", "theta_hat"]
    for name in ("eta", "u", "rho", "eps", "u_a"):
        cols += [f"{name}_{j}" for j in range(1, m + 1)]
    return cols


@dataclass
class SimulationTrace:
    m: int
    n: int
    data: np.ndarray  # rows = nodes, columns = trace_columns(m, n)
    verdict: Verdict = Verdict.COMPLETED
    verdict_time: float | None = None
    message: str = ""
    clamp_events: int = 0
    stage_segments: np.ndarray | None = field(default=None, repr=False)
    scenario_name: str = ""

    @property
    def columns(self) -> list[str]:
        return trace_columns(self.m, self.n)

    def _block(self, prefix: str) -> np.ndarray:
        cols = self.columns
        idx = [i for i, c in enumerate(cols) if c.startswith(prefix + "_") and c[len(prefix) + 1:].isdigit()]
        return self.data[:, idx]

    @property
    def t(self):
        return self.data[:, 0]

    @property
    def xbar(self):
        return self.data[:, 1: 1 + self.m * self.n]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def __getattr__(self, name):
        if name in ("y_star", "e", "s", "Phi", "eta", "u", "rho", "eps", "u_a"):
            return self._block(name)
        if name in ("phi", "nu", "zeta", "hbar", "theta_hat"):
            return self.column(name)
        raise AttributeError(name)

    def __len__(self):
        return self.data.shape[0]

    @property
    def completed(self) -> bool:
        return self.verdict is Verdict.COMPLETED


def run(scenario: Scenario, instrument: bool = False) -> SimulationTrace:
    """Integrate plant, faults and controller as one ODE on an event-aligned grid.

    Every RK4 stage re-evaluates the controller at the stage time and state.
    All stages of a step read the fault segment that owns the open step, so a
    switch instant is never straddled. Records at a switch node use the left
    segment, matching the (t_a, t_b] convention.
    """
    scenario.validate()
    plant, sched, ref = scenario.plant, scenario.faults, scenario.reference
    m, n = plant.m, plant.n
    N = m * n
    ctrl = Controller(scenario.controller, m, n)
    grid = build_grid(0.0, scenario.t_end, scenario.h,
                      [t for t in sched.switch_instants if t <= scenario.t_end])
    nodes = grid.nodes
    cols = trace_columns(m, n)
    data = np.full((len(nodes), len(cols)), np.nan)
    cap = scenario.divergence_cap
    stage_segments = np.zeros((grid.n_steps, 4), dtype=int) if instrument else None

    def deriv(t, y, seg):
        xbar = y[:N]
        yref = ref.derivatives(t, n - 1)
        out = ctrl.evaluate(t, xbar, yref, y[N], y[N + 1])
        rho, eps = sched.evaluate(t, seg)
        u_a = rho * out.u + eps
        dy = np.empty(N + 2)
        dy[: N - m] = xbar[m:]
        dy[N - m: N] = plant.top_derivative(xbar, u_a, t)
        dy[N] = out.zeta_dot
        dy[N + 1] = out.theta_dot
        return dy, out, rho, eps, u_a

    def record(k, t, y, out, seg):
        rho, eps = sched.evaluate(t, seg)
        u_a = rho * out.u + eps
        yref = ref.derivatives(t, 0)[0]
        data[k] = np.concatenate([
            [t], y[:N], yref, out.e, out.s, out.Phi,
            [out.phi, out.nu, y[N], out.hbar, y[N + 1]],
            out.eta, out.u, rho, eps, u_a,
        ])

    def check(dy, t):
        # an overflowing dot product is as much a divergence as a nan entry
        if not math.isfinite(dy @ dy):
            raise DivergenceError(f"non-finite state derivative at t={t!r}", t=t)

    y = augment_state(scenario.x0, scenario.zeta0, scenario.theta0)
    clamps = 0
    verdict, vt, msg = Verdict.COMPLETED, None, ""
    last = 0
    k = 0
    t = float(nodes[0])
    try:
        for k in range(grid.n_steps):
            t = float(nodes[k])
            h = float(nodes[k + 1]) - t
            seg = sched.segment_for_step(t, h)
            half = 0.5 * h
            k1, out, *_ = deriv(t, y, seg)
            check(k1, t)
            record(k, t, y, out, sched.segment_index(t))
            last = k
            k2 = deriv(t + half, y + half * k1, seg)[0]
            check(k2, t + half)
            k3 = deriv(t + half, y + half * k2, seg)[0]
            check(k3, t + half)
            k4 = deriv(t + h, y + h * k3, seg)[0]
            check(k4, t + h)
            if instrument:
                stage_segments[k] = seg
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if y[N + 1] < 0:
                y[N + 1] = 0.0
                clamps += 1
            if not math.isfinite(y @ y) or np.max(np.abs(y[:N])) > cap:
                raise DivergenceError(f"state left the divergence cap {cap:g}", t=float(nodes[k + 1]))
        t = float(nodes[-1])
        _, out, *_ = deriv(t, y, sched.segment_index(t))
        record(len(nodes) - 1, t, y, out, sched.segment_index(t))
        last = len(nodes) - 1
    except GainOverflowError as exc:
        verdict, vt, msg = Verdict.GAIN_OVERFLOW, t if exc.t is None else exc.t, str(exc)
    except DivergenceError as exc:
        verdict, vt, msg = Verdict.DIVERGED, t if exc.t is None else exc.t, str(exc)
    except DomainError as exc:
        # a blown-up state can push the Nussbaum argument out of its domain
        if math.isfinite(y[N]) and y[N] >= 0:
            raise
        verdict, vt, msg = Verdict.DIVERGED, t, str(exc)

    return SimulationTrace(
        m, n, data[: last + 1], verdict, vt, msg, clamps,
        stage_segments[: max(last, 0)] if instrument else None, scenario.name,
    )
