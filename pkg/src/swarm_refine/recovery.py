"""Per-UAV epoch pipeline: prior preparation, trust weighting, refinement.

The prior is chosen by three mutually exclusive cases:

* confident local fix (covariance trace <= ``sigma_max``): used as is;
* low-confidence local fix: covariance inflated by ``gamma_boot``;
* missing fix: last refined state, covariance inflated by ``gamma_loss``.

Inflation from the last refined state compounds over consecutive missing
epochs because each call starts from the previous call's output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

from .core import Cov3, RefinedState, StateSummary, Vec3, as_vec3, cov_trace, inflate_cov, make_cov_diag
from .link import LinkParams, NeighborMessage, filter_stale, link_quality, select_neighbors
from .refine import NeighborConstraint, SolverParams, refine_position
from .trust import NeighborReport, RangeObservation, TrustLedger, TrustParams, evaluate_neighbors

log = logging.getLogger(__name__)

CONFIDENT, LOW_CONFIDENCE, LOSS = "confident", "low_confidence", "loss"


class NoPriorError(LookupError):
    """No local fix and no refined history: the caller must supply a broad prior."""


@dataclass(frozen=True)
class RecoveryParams:
    sigma_max: float = 75.0
    gamma_boot: float = 3.0
    gamma_loss: float = 4.0
    # broad prior for the history-less cold start; the simulator derives
    # these from the arena (center, half-extent squared)
    broad_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    broad_var: float = 625.0

    def __post_init__(self) -> None:
        if not (self.sigma_max > 0.0 and math.isfinite(self.sigma_max)):
            raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")
        if not self.gamma_boot >= 1.0:
            raise ValueError(f"gamma_boot must be >= 1, got {self.gamma_boot}")
        if not self.gamma_loss >= 1.0:
            raise ValueError(f"gamma_loss must be >= 1, got {self.gamma_loss}")
        if not self.broad_var > 0.0:
            raise ValueError(f"broad_var must be positive, got {self.broad_var}")

    def broad_prior(self) -> tuple[Vec3, Cov3]:
        v = self.broad_var
        return as_vec3(self.broad_center), make_cov_diag(v, v, v)


@dataclass(frozen=True)
class PipelineParams:
    link: LinkParams = field(default_factory=LinkParams)
    trust: TrustParams = field(default_factory=TrustParams)
    recovery: RecoveryParams = field(default_factory=RecoveryParams)
    solver: SolverParams = field(default_factory=SolverParams)


@dataclass(frozen=True)
class UavPipelineState:
    last_refined: Optional[RefinedState] = None
    trust_ledger: TrustLedger = field(default_factory=TrustLedger)


def prior_case(local: StateSummary, params: RecoveryParams) -> str:
    if local.position is None:
        return LOSS
    if cov_trace(local.covariance) > params.sigma_max:
        return LOW_CONFIDENCE
    return CONFIDENT


def prepare_prior(
    local: StateSummary, state: UavPipelineState, params: RecoveryParams
) -> tuple[Vec3, Cov3]:
    case = prior_case(local, params)
    if case == CONFIDENT:
        return local.position, local.covariance
    if case == LOW_CONFIDENCE:
        return local.position, inflate_cov(local.covariance, params.gamma_boot)
    if state.last_refined is None:
        raise NoPriorError(f"UAV {local.uav_id}: no local fix and no refined history")
    last = state.last_refined
    return last.position, inflate_cov(last.covariance, params.gamma_loss)


def refine_epoch(
    local: StateSummary,
    messages: Sequence[NeighborMessage],
    ranges: Mapping[Hashable, RangeObservation],
    state: UavPipelineState,
    params: PipelineParams,
) -> tuple[RefinedState, UavPipelineState]:
    """Run one epoch for one UAV and return ``(refined, new_state)``."""
    now = local.epoch
    low_conf = False
    try:
        prior = prepare_prior(local, state, params.recovery)
    except NoPriorError:
        log.debug("UAV %s epoch %d: no prior, using broad arena prior", local.uav_id, now)
        prior = params.recovery.broad_prior()
        low_conf = True

    fresh = filter_stale(messages, now, params.link.max_age)
    paired = [
        m for m in fresh
        if m.sender in ranges and m.state.position is not None and m.sender != local.uav_id
    ]
    selected = select_neighbors(paired, params.link)

    if local.position is not None:
        p_ref = local.position
    elif state.last_refined is not None:
        p_ref = state.last_refined.position
    else:
        p_ref = None

    reports = [
        NeighborReport(m.sender, m.state.position, ranges[m.sender], link_quality(m.link, params.link.alpha))
        for m in selected
    ]
    weights, ledger = evaluate_neighbors(p_ref, reports, state.trust_ledger, params.trust)

    # fixed summation order: sorted by sender id
    constraints = [
        NeighborConstraint(r.p_j, r.obs, weights[r.uav_id])
        for r in sorted(reports, key=lambda r: r.uav_id)
    ]
    refined = refine_position(prior, constraints, params.solver, epoch=now)
    if low_conf:
        refined = RefinedState(refined.position, refined.covariance, now, low_confidence=True)
    return refined, UavPipelineState(last_refined=refined, trust_ledger=ledger)
