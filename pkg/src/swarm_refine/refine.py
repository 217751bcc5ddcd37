"""Damped Gauss-Newton fusion of a local prior with weighted range constraints.

Cost minimized for a single UAV position ``p``::

    1/2 (p - p0)^T I0 (p - p0) + 1/2 sum_j w_j r_j(p)^2

with ``I0`` the prior information matrix, ``r_j(p) = |p - p_j| - d_j`` and
``w_j = omega_j / sigma_j**2``. Each iteration solves the damped 3x3 normal
system ``(H + damping*I) delta = g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Cov3, RefinedState, Vec3, as_vec3
from .linalg3 import NotPositiveDefinite, Sym3, cho_solve3, cholesky3, spd_inverse3, sym_from_matrix, sym_to_rows
from .trust import RangeObservation


class SolverError(RuntimeError):
    """The damped normal system could not be solved; ``matrix`` is the offending 3x3."""

    def __init__(self, message: str, matrix):
        super().__init__(message)
        self.matrix = np.array(matrix, dtype=float)


@dataclass(frozen=True)
class NeighborConstraint:
    p_j: Vec3
    obs: RangeObservation
    omega: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.omega) and self.omega >= 0.0):
            raise ValueError(f"omega must be finite and >= 0, got {self.omega}")
        object.__setattr__(self, "p_j", as_vec3(self.p_j))


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 5
    damping: float = 1e-6
    step_tol: float = 1e-4
    min_dist: float = 1e-6

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("damping", "step_tol", "min_dist"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")


def residual(p: Vec3, c: NeighborConstraint) -> float:
    return math.dist(p, c.p_j) - c.obs.d_hat


def _active(constraints: Sequence[NeighborConstraint]) -> list[tuple[float, float, float, float, float]]:
    # Zero-weight constraints are dropped, not multiplied by zero, so that
    # removing them from the input cannot change a single bit of the output.
    return [
        (float(c.p_j[0]), float(c.p_j[1]), float(c.p_j[2]), c.obs.d_hat, c.omega / (c.obs.sigma_d * c.obs.sigma_d))
        for c in constraints
        if c.omega > 0.0
    ]


def _normal_system(p, prior_pos, info: Sym3, active, min_dist: float):
    i00, i01, i02, i11, i12, i22 = info
    e0, e1, e2 = prior_pos[0] - p[0], prior_pos[1] - p[1], prior_pos[2] - p[2]
    g0 = i00 * e0 + i01 * e1 + i02 * e2
    g1 = i01 * e0 + i11 * e1 + i12 * e2
    g2 = i02 * e0 + i12 * e1 + i22 * e2
    h00, h01, h02, h11, h12, h22 = info
    for x, y, z, d_hat, w in active:
        u0, u1, u2 = p[0] - x, p[1] - y, p[2] - z
        dist = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        if dist == 0.0:
            # direction undefined at coincidence; fall back to +x
            u0, u1, u2 = 1.0, 0.0, 0.0
        else:
            s = 1.0 / max(dist, min_dist)
            u0, u1, u2 = u0 * s, u1 * s, u2 * s
        wr = w * (dist - d_hat)
        g0 -= wr * u0
        g1 -= wr * u1
        g2 -= wr * u2
        h00 += w * u0 * u0
        h01 += w * u0 * u1
        h02 += w * u0 * u2
        h11 += w * u1 * u1
        h12 += w * u1 * u2
        h22 += w * u2 * u2
    return (h00, h01, h02, h11, h12, h22), (g0, g1, g2)


def _damped(H: Sym3, damping: float) -> Sym3:
    return (H[0] + damping, H[1], H[2], H[3] + damping, H[4], H[5] + damping)


def _solve(A: Sym3, g) -> tuple[float, float, float]:
    try:
        delta = cho_solve3(cholesky3(A), g)
    except (NotPositiveDefinite, ZeroDivisionError):
        raise SolverError("damped normal matrix is not positive definite", sym_to_rows(A)) from None
    if not all(math.isfinite(v) for v in delta):
        raise SolverError("non-finite Gauss-Newton update", sym_to_rows(A))
    return delta


def gauss_newton_step(
    p: Vec3,
    prior_pos: Vec3,
    prior_info,
    constraints: Sequence[NeighborConstraint],
    params: SolverParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One damped Gauss-Newton update; returns ``(delta, H)`` with ``H`` undamped."""
    pf = [float(v) for v in p]
    qf = [float(v) for v in prior_pos]
    H, g = _normal_system(pf, qf, sym_from_matrix(np.asarray(prior_info, dtype=float)), _active(constraints), params.min_dist)
    delta = _solve(_damped(H, params.damping), g)
    return np.array(delta), np.array(sym_to_rows(H))


def refine_position(
    prior: tuple[Vec3, Cov3],
    constraints: Sequence[NeighborConstraint],
    params: SolverParams,
    epoch: int = 0,
) -> RefinedState:
    """Iterate Gauss-Newton from the prior position.

    Stops after ``max_iters`` steps or once ``|delta| < step_tol``. The refined
    covariance is the inverse of the last damped normal matrix.
    """
    prior_pos = [float(v) for v in prior[0]]
    info = prior[1].information_sym()
    active = _active(constraints)

    p = list(prior_pos)
    H = info
    for _ in range(params.max_iters):
        H, g = _normal_system(p, prior_pos, info, active, params.min_dist)
        d0, d1, d2 = _solve(_damped(H, params.damping), g)
        p = [p[0] + d0, p[1] + d1, p[2] + d2]
        if math.sqrt(d0 * d0 + d1 * d1 + d2 * d2) < params.step_tol:
            break

    A = _damped(H, params.damping)
    if not all(math.isfinite(v) for v in p):
        raise SolverError("refined position is not finite", sym_to_rows(A))
    try:
        cov = spd_inverse3(A)
    except NotPositiveDefinite:
        raise SolverError("cannot invert final normal matrix", sym_to_rows(A)) from None
    return RefinedState(position=p, covariance=Cov3.from_sym(cov), epoch=epoch)


def weighted_cost(
    p: Vec3,
    prior_pos: Vec3,
    prior_info,
    constraints: Sequence[NeighborConstraint],
) -> float:
    """The objective the solver descends; used by tests and diagnostics."""
    e = np.asarray(p, dtype=float) - np.asarray(prior_pos, dtype=float)
    cost = 0.5 * float(e @ np.asarray(prior_info) @ e)
    for c in constraints:
        if c.omega > 0.0:
            cost += 0.5 * c.omega / c.obs.sigma_d**2 * residual(p, c) ** 2
    return cost
