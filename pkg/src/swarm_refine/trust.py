"""Range-consistency trust: mismatch scoring, EMA smoothing, flagging, weights.

Each UAV keeps its own :class:`TrustLedger`; nothing here is shared between
UAVs. A neighbor whose reported position disagrees with the range measured to
it gets a low instantaneous score; the score is smoothed over epochs and the
neighbor is excluded (weight zero) while the smoothed value sits below
``s_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Sequence, Tuple

from .core import Vec3


@dataclass(frozen=True)
class TrustParams:
    # ``lam`` is the kernel width; spelled ``lambda`` in config files.
    lam: float = 3.0
    eta: float = 0.7
    s_min: float = 0.2
    s_init: float = 0.5
    enabled: bool = True

    def __post_init__(self) -> None:
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        for name in ("eta", "s_min", "s_init"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class RangeObservation:
    d_hat: float
    sigma_d: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d_hat) and self.d_hat >= 0.0):
            raise ValueError(f"d_hat must be finite and >= 0, got {self.d_hat}")
        if not (math.isfinite(self.sigma_d) and self.sigma_d > 0.0):
            raise ValueError(f"sigma_d must be finite and > 0, got {self.sigma_d}")


@dataclass(frozen=True)
class TrustLedger:
    smoothed: Mapping[Hashable, float] = field(default_factory=dict)
    flagged: frozenset = frozenset()

    def trust_of(self, uav_id: Hashable, params: TrustParams) -> float:
        return self.smoothed.get(uav_id, params.s_init)


@dataclass(frozen=True)
class NeighborReport:
    uav_id: Hashable
    p_j: Vec3
    obs: RangeObservation
    q: float


def range_mismatch(p_ref: Vec3, p_j: Vec3, obs: RangeObservation) -> float:
    """Normalized range mismatch ``| |p_ref - p_j| - d_hat | / sigma_d``."""
    d = math.dist(p_ref, p_j)
    return abs(d - obs.d_hat) / obs.sigma_d


def instantaneous_trust(epsilon: float, lam: float) -> float:
    return math.exp(-(epsilon * epsilon) / (2.0 * lam * lam))


def update_trust(prev: float, inst: float, eta: float) -> float:
    s = eta * prev + (1.0 - eta) * inst
    # convex combination; clamp guards the last ulp
    return min(max(s, min(prev, inst)), max(prev, inst))


def _as_report(r) -> NeighborReport:
    if isinstance(r, NeighborReport):
        return r
    uav_id, p_j, obs, q = r
    return NeighborReport(uav_id, p_j, obs, q)


def evaluate_neighbors(
    p_ref: Optional[Vec3],
    reports: Iterable[NeighborReport | Tuple[Hashable, Vec3, RangeObservation, float]],
    ledger: TrustLedger,
    params: TrustParams,
) -> tuple[dict[Hashable, float], TrustLedger]:
    """Score every report and return ``(weights, updated_ledger)``.

    Weight is ``q * smoothed_trust`` for unflagged neighbors and exactly 0 for
    flagged ones. The flagged set is rebuilt from this epoch's evaluations.

    ``p_ref=None`` means there is no reference position at all (no local fix
    and no history); trust is then left untouched and weights fall back to
    the stored smoothed values, keeping previously flagged neighbors at 0.
    With ``params.enabled`` false the weights are the raw link qualities.
    """
    reps: Sequence[NeighborReport] = [_as_report(r) for r in reports]

    if not params.enabled:
        return {r.uav_id: float(r.q) for r in reps}, ledger

    if p_ref is None:
        weights = {}
        for r in reps:
            if r.uav_id in ledger.flagged:
                weights[r.uav_id] = 0.0
            else:
                weights[r.uav_id] = r.q * ledger.trust_of(r.uav_id, params)
        return weights, ledger

    smoothed = dict(ledger.smoothed)
    flagged = set()
    for r in reps:
        eps = range_mismatch(p_ref, r.p_j, r.obs)
        s = instantaneous_trust(eps, params.lam)
        s_tilde = update_trust(ledger.trust_of(r.uav_id, params), s, params.eta)
        smoothed[r.uav_id] = s_tilde
        if s_tilde < params.s_min:
            flagged.add(r.uav_id)

    weights = {}
    for r in reps:
        weights[r.uav_id] = 0.0 if r.uav_id in flagged else r.q * smoothed[r.uav_id]
    return weights, TrustLedger(smoothed=smoothed, flagged=frozenset(flagged))
