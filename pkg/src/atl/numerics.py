"""Small dense linear algebra and fixed-step integration.

Vectors and matrices are plain float64 numpy arrays. The eigensolver is a
cyclic Jacobi iteration, which is accurate to a few ulps for the 2x2 to 6x6
symmetric matrices this package certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError

MAX_EIG_DIM = 8


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        raise DomainError("matrix has dimension 0")
    if not np.all(np.isfinite(A)):
        raise DivergenceError("matrix has non-finite entries")
    return A


def jacobi_eigh(A, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with eigenvalues ``w`` in ascending order and the
    matching orthonormal eigenvectors as the columns of ``V``. Only the upper
    triangle of ``A`` is trusted; callers symmetrize beforehand.
    """
    A = _as_square(A)
    n = A.shape[0]
    a = [[float(A[i][j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            a[i][j] = a[j][i]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    scale = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n))) or 1.0

    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(i + 1, n)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq

    w = np.array([a[i][i] for i in range(n)])
    V = np.array(v)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_eig_extrema(A, assume_symmetric: bool = False) -> tuple[float, float]:
    """Smallest and largest eigenvalue of ``A`` (or of ``(A + A.T)/2``)."""
    A = _as_square(A)
    if A.shape[0] > MAX_EIG_DIM:
        raise DomainError(f"dimension {A.shape[0]} exceeds {MAX_EIG_DIM}")
    if not assume_symmetric:
        A = 0.5 * (A + A.T)
    if A.shape[0] == 2:
        # closed form; the upper triangle is trusted as in the Jacobi path
        a, b, d = float(A[0, 0]), float(A[0, 1]), float(A[1, 1])
        mid, rad = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
        return mid - rad, mid + rad
    w, _ = jacobi_eigh(A)
    return float(w[0]), float(w[-1])


def min_singular_value(A) -> float:
    A = _as_square(A)
    lam_min, _ = sym_eig_extrema(A.T @ A, assume_symmetric=True)
    return math.sqrt(max(lam_min, 0.0))


def rk4_step(deriv, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step; ``deriv`` is sampled at t, t+h/2, t+h."""
    if not h > 0:
        raise DomainError(f"step must be positive, got {h}")
    half = 0.5 * h
    k1 = _checked(deriv(t, y), t)
    k2 = _checked(deriv(t + half, y + half * k1), t + half)
    k3 = _checked(deriv(t + half, y + half * k2), t + half)
    k4 = _checked(deriv(t + h, y + h * k3), t + h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(dy, t):
    dy = np.asarray(dy, dtype=float)
    if not np.all(np.isfinite(dy)):
        raise DivergenceError(f"non-finite derivative at t={t!r}", t=t)
    return dy


@dataclass(frozen=True)
class StepGrid:
    t0: float
    t_end: float
    h: float
    events: tuple[float, ...]
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    def steps(self):
        """Iterate over ``(t_k, h_k)`` pairs."""
        nodes = self.nodes
        for k in range(len(nodes) - 1):
            yield float(nodes[k]), float(nodes[k + 1] - nodes[k])

    def node_index(self, t: float) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is not a node."""
        k = int(np.searchsorted(self.nodes, t))
        if k < len(self.nodes) and self.nodes[k] == t:
            return k
        raise DomainError(f"{t!r} is not a grid node")


def build_grid(t0: float, t_end: float, h_nominal: float, events=()) -> StepGrid:
    """Uniform-per-segment grid that places every event instant on a node."""
    if not h_nominal > 0:
        raise DomainError(f"step must be positive, got {h_nominal}")
    if not t_end > t0:
        raise DomainError(f"horizon end {t_end} must exceed start {t0}")
    events = tuple(sorted({float(e) for e in events}))
    for e in events:
        if e < t0 or e > t_end:
            raise DomainError(f"event {e} lies outside [{t0}, {t_end}]")

    breaks = [float(t0)] + [e for e in events if t0 < e < t_end] + [float(t_end)]
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil(round((b - a) / h_nominal, 9)))
        seg = a + (b - a) * np.arange(n + 1) / n
        seg[-1] = b
        pieces.append(seg if not pieces else seg[1:])
    nodes = np.concatenate(pieces)
    return StepGrid(float(t0), float(t_end), float(h_nominal), events, nodes)
