"""Link quality scoring, neighbor budget and staleness filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable

from .core import StateSummary


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class LinkObservables:
    rssi_score: float
    prr: float

    def __post_init__(self) -> None:
        _check_unit("rssi_score", self.rssi_score)
        _check_unit("prr", self.prr)


@dataclass(frozen=True)
class NeighborMessage:
    """A neighbor's broadcast state summary plus the receiver-side link observables."""

    sender: Hashable
    state: StateSummary
    sent_epoch: int
    link: LinkObservables


@dataclass(frozen=True)
class LinkParams:
    alpha: float = 0.5
    budget: int = 5
    q_min: float = 0.0
    max_age: int = 1

    def __post_init__(self) -> None:
        _check_unit("alpha", self.alpha)
        _check_unit("q_min", self.q_min)
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.max_age < 0:
            raise ValueError(f"max_age must be >= 0, got {self.max_age}")


def _pow(base: float, exponent: float) -> float:
    # 0**0 == 1 so that alpha in {0, 1} disables one factor entirely
    if exponent == 0.0:
        return 1.0
    return base**exponent


def link_quality(obs: LinkObservables, alpha: float) -> float:
    """Weighted geometric mean ``rssi**alpha * prr**(1 - alpha)``."""
    _check_unit("alpha", alpha)
    return _pow(obs.rssi_score, alpha) * _pow(obs.prr, 1.0 - alpha)


def filter_stale(messages: Iterable[NeighborMessage], now: int, max_age: int) -> list[NeighborMessage]:
    return [m for m in messages if now - m.sent_epoch <= max_age]


def select_neighbors(messages: Iterable[NeighborMessage], params: LinkParams) -> list[NeighborMessage]:
    """Keep the ``budget`` best links with quality >= ``q_min``.

    Ordering is by descending quality, ties broken by the smaller sender id,
    so the result does not depend on the input order.
    """
    scored = []
    for m in messages:
        q = link_quality(m.link, params.alpha)
        if q >= params.q_min and not math.isnan(q):
            scored.append((q, m))
    scored.sort(key=lambda qm: (-qm[0], qm[1].sender))
    return [m for _, m in scored[: params.budget]]
