"""Decentralized uncertainty-aware 3D position refinement for UAV swarms."""

from .core import Cov3, RefinedState, StateSummary, as_vec3, cov_trace, inflate_cov, make_cov_diag
from .link import LinkObservables, LinkParams, NeighborMessage, filter_stale, link_quality, select_neighbors
from .recovery import PipelineParams, RecoveryParams, UavPipelineState, prepare_prior, refine_epoch
from .refine import NeighborConstraint, SolverError, SolverParams, gauss_newton_step, refine_position, residual
from .trust import (
    RangeObservation,
    TrustLedger,
    TrustParams,
    evaluate_neighbors,
    instantaneous_trust,
    range_mismatch,
    update_trust,
)

__version__ = "0.1.0"

__all__ = [
    "Cov3",
    "LinkObservables",
    "LinkParams",
    "NeighborConstraint",
    "NeighborMessage",
    "PipelineParams",
    "RangeObservation",
    "RecoveryParams",
    "RefinedState",
    "SolverError",
    "SolverParams",
    "StateSummary",
    "TrustLedger",
    "TrustParams",
    "UavPipelineState",
    "as_vec3",
    "cov_trace",
    "evaluate_neighbors",
    "filter_stale",
    "gauss_newton_step",
    "inflate_cov",
    "instantaneous_trust",
    "link_quality",
    "make_cov_diag",
    "prepare_prior",
    "range_mismatch",
    "refine_epoch",
    "refine_position",
    "residual",
    "select_neighbors",
    "update_trust",
]
