"""Shared geometric and state types.

Positions are plain ``numpy`` float arrays of shape ``(3,)`` in a local
East-North-Up frame, meters. Covariances are wrapped in :class:`Cov3`, which
validates symmetry and positive definiteness at construction time.

JSON shape used for message logs and golden files::

    {"uav_id": 3, "epoch": 7,
     "position": [x, y, z] | null,
     "covariance": [c00, c01, c02, c10, ..., c22] | null}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Optional, Sequence

import numpy as np

from .linalg3 import NotPositiveDefinite, Sym3, cholesky3, spd_inverse3, sym_from_matrix

SYM_TOL = 1e-9

Vec3 = np.ndarray


class CovarianceError(ValueError):
    """Raised when a matrix is not a valid 3x3 covariance."""


def as_vec3(values: Sequence[float] | np.ndarray) -> Vec3:
    """Return a read-only float64 copy of a 3-vector, rejecting non-finite input."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 components, got shape {arr.shape}")
    x, y, z = arr.tolist()
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f"non-finite position {arr.tolist()}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Cov3:
    """Symmetric positive-definite 3x3 covariance, meters squared.

    Small asymmetries (below ``SYM_TOL``) are symmetrized away; larger ones
    are rejected. Positive definiteness is checked by attempting a Cholesky
    factorization.
    """

    matrix: np.ndarray
    sym: Sym3 = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise CovarianceError(f"covariance must be 3x3, got {m.shape}")
        rows = m.tolist()
        if not all(math.isfinite(v) for row in rows for v in row):
            raise CovarianceError("covariance has non-finite entries")
        for i, j in ((0, 1), (0, 2), (1, 2)):
            if abs(rows[i][j] - rows[j][i]) > SYM_TOL:
                raise CovarianceError("covariance is not symmetric")
        if rows[0][1] != rows[1][0] or rows[0][2] != rows[2][0] or rows[1][2] != rows[2][1]:
            m = 0.5 * (m + m.T)
        sym = sym_from_matrix(m)
        try:
            cholesky3(sym)
        except NotPositiveDefinite:
            raise CovarianceError("covariance is not positive definite") from None
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "sym", sym)

    @classmethod
    def from_sym(cls, sym: Sym3) -> "Cov3":
        a00, a01, a02, a11, a12, a22 = sym
        return cls(np.array([[a00, a01, a02], [a01, a11, a12], [a02, a12, a22]]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cov3):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    def information_sym(self) -> Sym3:
        return spd_inverse3(self.sym)

    def information(self) -> np.ndarray:
        """Inverse covariance (information matrix)."""
        a00, a01, a02, a11, a12, a22 = self.information_sym()
        return np.array([[a00, a01, a02], [a01, a11, a12], [a02, a12, a22]])

    def trace(self) -> float:
        return cov_trace(self)


def make_cov_diag(sx2: float, sy2: float, sz2: float) -> Cov3:
    """Diagonal covariance from per-axis variances."""
    for name, v in (("sx2", sx2), ("sy2", sy2), ("sz2", sz2)):
        if not math.isfinite(v) or v <= 0.0:
            raise CovarianceError(f"{name} must be positive and finite, got {v}")
    return Cov3(np.diag([float(sx2), float(sy2), float(sz2)]))


def inflate_cov(c: Cov3, gamma: float) -> Cov3:
    """Scale every entry of ``c`` by ``gamma`` (> 0)."""
    if not math.isfinite(gamma) or gamma <= 0.0:
        raise CovarianceError(f"inflation factor must be positive and finite, got {gamma}")
    return Cov3(c.matrix * gamma)


def cov_trace(c: Cov3) -> float:
    s = c.sym
    return s[0] + s[3] + s[5]


@dataclass(frozen=True)
class StateSummary:
    """A UAV's local estimate at one epoch; ``position is None`` means no fix."""

    uav_id: Hashable
    epoch: int
    position: Optional[Vec3] = None
    covariance: Optional[Cov3] = None

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {self.epoch}")
        if (self.position is None) != (self.covariance is None):
            raise ValueError("position and covariance must be both present or both missing")
        if self.position is not None:
            object.__setattr__(self, "position", as_vec3(self.position))

    @property
    def missing(self) -> bool:
        return self.position is None


@dataclass(frozen=True)
class RefinedState:
    """Output of the refinement step. ``low_confidence`` marks broad-prior fallbacks."""

    position: Vec3
    covariance: Cov3
    epoch: int
    low_confidence: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", as_vec3(self.position))


# JSON helpers


def vec3_to_json(v: Optional[Vec3]) -> Optional[list[float]]:
    return None if v is None else [float(x) for x in v]


def vec3_from_json(data: Optional[Sequence[float]]) -> Optional[Vec3]:
    return None if data is None else as_vec3(data)


def cov3_to_json(c: Optional[Cov3]) -> Optional[list[float]]:
    return None if c is None else [float(x) for x in c.matrix.reshape(-1)]


def cov3_from_json(data: Optional[Sequence[float]]) -> Optional[Cov3]:
    if data is None:
        return None
    if len(data) != 9:
        raise CovarianceError(f"covariance JSON must have 9 entries, got {len(data)}")
    return Cov3(np.asarray(data, dtype=np.float64).reshape(3, 3))


def state_summary_to_json(s: StateSummary) -> dict[str, Any]:
    return {
        "uav_id": s.uav_id,
        "epoch": s.epoch,
        "position": vec3_to_json(s.position),
        "covariance": cov3_to_json(s.covariance),
    }


def state_summary_from_json(data: dict[str, Any]) -> StateSummary:
    return StateSummary(
        uav_id=data["uav_id"],
        epoch=int(data["epoch"]),
        position=vec3_from_json(data.get("position")),
        covariance=cov3_from_json(data.get("covariance")),
    )
