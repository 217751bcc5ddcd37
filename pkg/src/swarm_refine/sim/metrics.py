"""Per-epoch error metrics and Monte-Carlo aggregation across seeded runs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence

import numpy as np

RECOVERY_THRESHOLD_M = 5.0
RECOVERY_WINDOW = 3


@dataclass
class EpochMetrics:
    epoch: int
    mean_local_error_honest: float
    mean_refined_error_honest: float
    local_errors: list[float]
    refined_errors: list[float]
    flagged_count: int
    loss_flags: list[bool]
    low_confidence: list[bool]
    malicious: list[bool]
    trust: Optional[dict[int, dict[int, float]]] = None

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        if d["trust"] is None:
            del d["trust"]
        else:
            d["trust"] = {str(k): {str(j): s for j, s in v.items()} for k, v in d["trust"].items()}
        return d

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "EpochMetrics":
        data = dict(data)
        trust = data.pop("trust", None)
        if trust is not None:
            trust = {int(k): {int(j): s for j, s in v.items()} for k, v in trust.items()}
        return cls(trust=trust, **data)


def metrics_to_jsonl(metrics: Sequence[EpochMetrics]) -> str:
    return "".join(json.dumps(m.to_json(), sort_keys=True) + "\n" for m in metrics)


def metrics_from_jsonl(text: str) -> list[EpochMetrics]:
    return [EpochMetrics.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def recovery_epoch(
    errors: Sequence[float],
    start: int,
    threshold: float = RECOVERY_THRESHOLD_M,
    window: int = RECOVERY_WINDOW,
) -> Optional[int]:
    """First epoch ``>= start`` opening a run of ``window`` errors all ``<= threshold``."""
    for t in range(start, len(errors) - window + 1):
        if all(e <= threshold for e in errors[t : t + window]):
            return t
    return None


def _band(x: np.ndarray) -> dict[str, list[float]]:
    return {
        "mean": x.mean(axis=0).tolist(),
        "p10": np.percentile(x, 10, axis=0).tolist(),
        "p90": np.percentile(x, 90, axis=0).tolist(),
    }


def _window_stats(local: np.ndarray, refined: np.ndarray) -> dict[str, Any]:
    if local.shape[1] == 0:
        return {"n_epochs": 0}
    lw, rw = local.mean(axis=1), refined.mean(axis=1)
    return {
        "n_epochs": int(local.shape[1]),
        "mean_local": float(lw.mean()),
        "mean_refined": float(rw.mean()),
        "win_rate": float(np.mean(rw < lw)),
        "local_p10": float(np.percentile(lw, 10)),
        "local_p90": float(np.percentile(lw, 90)),
        "refined_p10": float(np.percentile(rw, 10)),
        "refined_p90": float(np.percentile(rw, 90)),
    }


def _recovery_stats(epochs: list[Optional[int]]) -> dict[str, Any]:
    got = [e for e in epochs if e is not None]
    return {
        "per_run": epochs,
        "recovered": len(got),
        "median": float(np.median(got)) if got else None,
        "p90": float(np.percentile(got, 90)) if got else None,
    }


def aggregate_runs(runs: Sequence[Sequence[EpochMetrics]], cold_start_epochs: int) -> dict[str, Any]:
    """Summarize equal-length runs: bands per epoch, window win rates, recovery."""
    if not runs:
        raise ValueError("aggregate_runs needs at least one run")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"ragged runs: lengths {sorted(lengths)}")
    local = np.array([[m.mean_local_error_honest for m in r] for r in runs], dtype=float)
    refined = np.array([[m.mean_refined_error_honest for m in r] for r in runs], dtype=float)
    flagged = np.array([[m.flagged_count for m in r] for r in runs], dtype=float)
    n_epochs = local.shape[1]
    cs = min(cold_start_epochs, n_epochs)

    summary: dict[str, Any] = {"n_runs": len(runs), "n_epochs": n_epochs, "cold_start_epochs": cold_start_epochs}
    if n_epochs:
        summary["local"] = _band(local)
        summary["refined"] = _band(refined)
        summary["flagged_mean"] = flagged.mean(axis=0).tolist()
    summary["cold_start_window"] = _window_stats(local[:, :cs], refined[:, :cs])
    summary["post_window"] = _window_stats(local[:, cs:], refined[:, cs:])
    summary["recovery"] = {
        "local": _recovery_stats([recovery_epoch(row.tolist(), cold_start_epochs) for row in local]),
        "refined": _recovery_stats([recovery_epoch(row.tolist(), cold_start_epochs) for row in refined]),
    }
    return summary
