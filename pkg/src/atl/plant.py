"""Canonical-form MIMO plants and the built-in plant registry.

State layout: ``xbar`` is a flat array ``[x_1; x_2; ...; x_n]`` of length
``m*n`` where each block ``x_i`` has ``m`` entries. ``xbar.reshape(n, m)[i]``
is the i-th derivative block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, DomainError


class PlantModel:
    """x_i' = x_{i+1} (i < n),  x_n' = f(xbar) + b g(xbar, t) u_a + d(xbar, t)."""

    def __init__(self, m: int, n: int, f, g, d=None, direction_sign_b: int = 1, name: str = "plant"):
        if direction_sign_b not in (1, -1):
            raise DomainError(f"direction sign must be +1 or -1, got {direction_sign_b}")
        self.m = int(m)
        self.n = int(n)
        self._f = f
        self._g = g
        self._d = d
        self.direction_sign_b = int(direction_sign_b)
        self.name = name

    @property
    def state_dim(self) -> int:
        return self.m * self.n

    def eval_f(self, xbar):
        return np.asarray(self._f(xbar), dtype=float)

    def eval_g_raw(self, xbar, t):
        """Input gain without the direction multiplier."""
        return np.asarray(self._g(xbar, t), dtype=float)

    def eval_g(self, xbar, t):
        """Input gain with the direction multiplier applied."""
        g = self.eval_g_raw(xbar, t)
        return g if self.direction_sign_b == 1 else -g

    def eval_d(self, xbar, t):
        if self._d is None:
            return np.zeros(self.m)
        return np.asarray(self._d(xbar, t), dtype=float)

    def top_derivative(self, xbar, u_a, t):
        return self.eval_f(xbar) + self.eval_g(xbar, t) @ u_a + self.eval_d(xbar, t)

    def with_direction(self, b: int) -> "PlantModel":
        return PlantModel(self.m, self.n, self._f, self._g, self._d, b, self.name)


def canonical_derivative(plant: PlantModel, xbar, u_a, t) -> np.ndarray:
    """Time derivative of the stacked canonical state."""
    xbar = np.asarray(xbar, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    m, n = plant.m, plant.n
    if xbar.shape != (m * n,) or u_a.shape != (m,):
        raise DomainError(f"expected xbar of size {m * n} and u_a of size {m}, "
                          f"got {xbar.shape} and {u_a.shape}")
    out = np.empty(m * n)
    out[: m * (n - 1)] = xbar[m:]
    out[m * (n - 1):] = plant.top_derivative(xbar, u_a, t)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite plant derivative at t={t!r}", t=t)
    return out


# --- two-channel numerical example -----------------------------------------

def example_f(xbar):
    x11, x12, x21, x22 = xbar
    return np.array([0.5 * x21 * math.sin(x11), 0.6 * x22 * math.tanh(x21)])


def example_g(xbar, t):
    x11, x12, x21, x22 = xbar
    return np.array([
        [2.0 + 0.1 * math.cos(t), 2.0 + 0.1 * math.cos(x11 * x21)],
        [2.0 + 0.1 * math.sin(x12 * x22), 3.0 + 0.1 * math.sin(t)],
    ])


def example_disturbance(xbar, t):
    x11, x12, x21, x22 = xbar
    st = math.sin(t)
    return np.array([0.05 * x11 * x21 * st, 0.05 * x12 * x22 * st])


def numerical_example_plant(b: int = 1) -> PlantModel:
    return PlantModel(2, 2, example_f, example_g, example_disturbance, b, "two_channel_example")


def indefinite_gain(xbar, t):
    """Gain whose symmetric part loses definiteness for large cos(x11*x21)."""
    c = math.cos(xbar[0] * xbar[2])
    return np.array([[2.0, 0.6 + 0.1 * c], [2.0 + 0.1 * c, 0.9]])


# --- rigid-link planar manipulator -----------------------------------------

def robot_disturbance(qd, t):
    return np.array([0.02 * qd[0] * math.sin(t), 0.02 * qd[1] * math.cos(t), 0.02 * qd[2] * math.sin(t)])


@dataclass(frozen=True)
class RobotModel:
    """Planar serial chain of revolute links; gravity acts along the plane's y axis.

    Joint angles are relative; link i's absolute angle is q_1 + ... + q_i.
    """

    masses: tuple[float, ...] = (0.5, 0.5, 0.5)
    lengths: tuple[float, ...] = (1.0, 1.0, 1.0)
    com: tuple[float, ...] = (0.5, 0.5, 0.5)
    inertias: tuple[float, ...] = (1.5, 1.0, 0.5)
    gravity: float = 9.81
    disturbance: Callable | None = field(default=robot_disturbance, compare=False)

    def __post_init__(self):
        N = len(self.masses)
        if not (len(self.lengths) == len(self.com) == len(self.inertias) == N):
            raise DomainError("link parameter tuples must have equal length")
        # W[i, j]: lever of link j's absolute direction in the position of com i
        W = np.zeros((N, N))
        for i in range(N):
            W[i, :i] = self.lengths[:i]
            W[i, i] = self.com[i]
        m = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "_A", np.einsum("i,ij,ik->jk", m, W, W))
        object.__setattr__(self, "_b", m @ W)
        object.__setattr__(self, "_T", np.tril(np.ones((N, N))))  # absolute rates = T qd
        object.__setattr__(self, "_I", np.diag(np.asarray(self.inertias, dtype=float)))

    @property
    def dof(self) -> int:
        return len(self.masses)

    def absolute_terms(self, q, qd):
        """(M, C qd, G) from the absolute-angle form of the chain.

        With link angles th = T q and rates w = T qd the kinetic energy is
        w^T (A o cos(th_j - th_k) + I) w / 2, so M = T^T D T,
        C qd = T^T (A o sin(th_j - th_k)) w^2 and G = g T^T (b o cos th).
        Agrees with the Jacobian/Christoffel route in :meth:`terms`.
        """
        T = self._T
        th = T @ q
        w = T @ qd
        dth = th[:, None] - th[None, :]
        D = self._A * np.cos(dth) + self._I
        M = T.T @ D @ T
        cq = T.T @ ((self._A * np.sin(dth)) @ (w * w))
        G = self.gravity * (T.T @ (self._b * np.cos(th)))
        return M, cq, G

    def _kinematics(self, q):
        """COM Jacobians J[i] (2 x dof) and second derivatives H[i] (dof x dof x 2)."""
        N = self.dof
        th = np.cumsum(q)
        c, s = np.cos(th), np.sin(th)
        J = np.zeros((N, 2, N))
        H = np.zeros((N, N, N, 2))
        for i in range(N):
            # lever arm seen from joint k: sum of full links k..i-1 plus com of link i
            arm_c = np.zeros(N)
            arm_s = np.zeros(N)
            for k in range(i + 1):
                arm_c[k] = sum(self.lengths[j] * c[j] for j in range(k, i)) + self.com[i] * c[i]
                arm_s[k] = sum(self.lengths[j] * s[j] for j in range(k, i)) + self.com[i] * s[i]
            J[i, 0, : i + 1] = -arm_s[: i + 1]
            J[i, 1, : i + 1] = arm_c[: i + 1]
            for k in range(i + 1):
                for l in range(i + 1):
                    r = max(k, l)
                    H[i, k, l, 0] = -arm_c[r]
                    H[i, k, l, 1] = -arm_s[r]
        return J, H

    def mass_matrix(self, q) -> np.ndarray:
        J, _ = self._kinematics(np.asarray(q, dtype=float))
        return self._mass_from(J)

    def _mass_from(self, J):
        N = self.dof
        M = np.zeros((N, N))
        for i in range(N):
            M += self.masses[i] * J[i].T @ J[i]
            a = np.zeros(N)
            a[: i + 1] = 1.0
            M += self.inertias[i] * np.outer(a, a)
        return M

    def _dmass_from(self, J, H):
        """dM[k] = dM/dq_k."""
        N = self.dof
        dM = np.zeros((N, N, N))
        for i in range(N):
            # d/dq_k of J_i^T J_i = H_i[k]^T J_i + J_i^T H_i[k]
            for k in range(N):
                Hk = H[i, :, k, :].T  # 2 x N, column l = d^2 p_i / dq_l dq_k
                prod = Hk.T @ J[i]
                dM[k] += self.masses[i] * (prod + prod.T)
        return dM

    def mass_matrix_derivative(self, q) -> np.ndarray:
        J, H = self._kinematics(np.asarray(q, dtype=float))
        return self._dmass_from(J, H)

    def coriolis(self, q, qd) -> np.ndarray:
        """Christoffel-symbol factorization; M' - 2C is skew-symmetric."""
        J, H = self._kinematics(np.asarray(q, dtype=float))
        return self._coriolis_from(self._dmass_from(J, H), np.asarray(qd, dtype=float))

    @staticmethod
    def _coriolis_from(dM, qd):
        # C[k, j] = 1/2 sum_i (dM_kj/dq_i + dM_ki/dq_j - dM_ij/dq_k) qd_i
        t1 = np.einsum("ikj,i->kj", dM, qd)
        t2 = np.einsum("jki,i->kj", dM, qd)
        t3 = np.einsum("kij,i->kj", dM, qd)
        return 0.5 * (t1 + t2 - t3)

    def gravity_vector(self, q) -> np.ndarray:
        J, _ = self._kinematics(np.asarray(q, dtype=float))
        return self._gravity_from(J)

    def _gravity_from(self, J):
        return self.gravity * sum(self.masses[i] * J[i, 1, :] for i in range(self.dof))

    def eval_tau_d(self, qd, t) -> np.ndarray:
        if self.disturbance is None:
            return np.zeros(self.dof)
        return np.asarray(self.disturbance(qd, t), dtype=float)

    def terms(self, q, qd):
        """(M, C, G) at one configuration, sharing the kinematics."""
        J, H = self._kinematics(np.asarray(q, dtype=float))
        M = self._mass_from(J)
        C = self._coriolis_from(self._dmass_from(J, H), np.asarray(qd, dtype=float))
        return M, C, self._gravity_from(J)

    def acceleration(self, q, qd, u_a, t) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        M, cq, G = self.absolute_terms(q, qd)
        return np.linalg.solve(M, u_a - cq - G - self.eval_tau_d(qd, t))


class RobotPlant(PlantModel):
    """Canonical form of a manipulator: x_1 = q, x_2 = q', g = M^-1."""

    def __init__(self, robot: RobotModel, direction_sign_b: int = 1, name: str = "planar_3link"):
        self.robot = robot
        N = robot.dof
        super().__init__(N, 2, self._f_impl, self._g_impl, self._d_impl, direction_sign_b, name)

    def _split(self, xbar):
        N = self.m
        return np.asarray(xbar[:N], dtype=float), np.asarray(xbar[N:], dtype=float)

    def _minv(self, M):
        lam_min = np.linalg.eigvalsh(M)[0]
        if lam_min < 1e-10:
            raise DomainError(f"inertia matrix is singular (min eigenvalue {lam_min:.3g})")
        return np.linalg.inv(M)

    def _f_impl(self, xbar):
        q, qd = self._split(xbar)
        M, cq, G = self.robot.absolute_terms(q, qd)
        return np.linalg.solve(M, -cq - G)

    def _g_impl(self, xbar, t):
        q, _ = self._split(xbar)
        return self._minv(self.robot.mass_matrix(q))

    def _d_impl(self, xbar, t):
        q, qd = self._split(xbar)
        return np.linalg.solve(self.robot.mass_matrix(q), -self.robot.eval_tau_d(qd, t))

    def top_derivative(self, xbar, u_a, t):
        q, qd = self._split(xbar)
        return self.robot.acceleration(q, qd, self.direction_sign_b * u_a, t)

    def with_direction(self, b: int) -> "RobotPlant":
        return RobotPlant(self.robot, b, self.name)


def robot_to_canonical(robot: RobotModel, direction_sign_b: int = 1) -> RobotPlant:
    M0 = robot.mass_matrix(np.zeros(robot.dof))
    if np.linalg.eigvalsh(M0)[0] < 1e-10:
        raise DomainError("inertia matrix is singular at the home configuration")
    return RobotPlant(robot, direction_sign_b)


# --- reference trajectories -------------------------------------------------

@dataclass(frozen=True)
class Harmonic:
    """offset + amplitude * fn(frequency * t) with fn in {sin, cos}."""

    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    fn: str = "sin"


class ReferenceTrajectory:
    """Closed-form reference y*(t) with derivatives up to a fixed order."""

    def __init__(self, channels):
        self.channels = tuple(channels)
        for ch in self.channels:
            if ch.fn not in ("sin", "cos"):
                raise DomainError(f"unknown harmonic {ch.fn!r}")

    @property
    def m(self) -> int:
        return len(self.channels)

    def derivatives(self, t: float, order: int) -> np.ndarray:
        """Array of shape (order + 1, m): rows y*, y*', ..., y*^(order)."""
        out = np.empty((order + 1, self.m))
        for j, ch in enumerate(self.channels):
            w = ch.frequency
            if ch.fn == "sin":
                sin_v, cos_v = math.sin(w * t), math.cos(w * t)
            else:
                sin_v, cos_v = math.cos(w * t), -math.sin(w * t)
            # cycle sin, cos, -sin, -cos
            cyc = (sin_v, cos_v, -sin_v, -cos_v)
            a = ch.amplitude
            for k in range(order + 1):
                out[k, j] = a * cyc[k % 4]
                a *= w
            out[0, j] += ch.offset
        return out

    def eval_y_star(self, t: float) -> np.ndarray:
        return self.derivatives(t, 0)[0]


def constant_reference(values) -> ReferenceTrajectory:
    return ReferenceTrajectory([Harmonic(offset=float(v)) for v in values])


def example_reference() -> ReferenceTrajectory:
    return ReferenceTrajectory([Harmonic(0.2, 0.2, 1.0, "cos"), Harmonic(0.25, 0.25, 1.0, "sin")])


def robot_reference() -> ReferenceTrajectory:
    return ReferenceTrajectory([
        Harmonic(0.5, 0.5, 1.0, "sin"),
        Harmonic(0.5, -0.5, 1.0, "cos"),
        Harmonic(0.5, -0.5, 1.0, "sin"),
    ])


# --- registry ---------------------------------------------------------------

def _custom_plant(m: int = 1, n: int = 2, gain: float = 1.0, b: int = 1, **_):
    """Chain of integrators with a constant diagonal gain and no drift."""
    m, n = int(m), int(n)
    G = float(gain) * np.eye(m)
    return PlantModel(m, n, lambda x: np.zeros(m), lambda x, t: G, None, int(b), "custom")


def _example_factory(b: int = 1, **_):
    return numerical_example_plant(int(b))


def _robot_factory(b: int = 1, gravity: float = 9.81, disturbance: bool = True, **_):
    robot = RobotModel(gravity=float(gravity), disturbance=robot_disturbance if disturbance else None)
    return robot_to_canonical(robot, int(b))


def _indefinite_gain_factory(b: int = 1, **_):
    """Drift-free plant carrying the gain whose symmetric part is indefinite."""
    return PlantModel(2, 2, lambda x: np.zeros(2), indefinite_gain, None, int(b), "indefinite_gain")


PLANTS = {
    "two_channel_example": _example_factory,
    "indefinite_gain": _indefinite_gain_factory,
    "planar_3link": _robot_factory,
    "custom": _custom_plant,
}


def make_plant(name: str, **params) -> PlantModel:
    try:
        factory = PLANTS[name]
    except KeyError:
        raise DomainError(f"unknown plant {name!r}; known: {sorted(PLANTS)}") from None
    return factory(**params)
