"""Seeded swarm world: motion, sensing, connectivity, ranging, adversaries.

Every random quantity comes from its own stream keyed by ``(purpose, uav)``
and is drawn unconditionally each epoch, so two runs that differ only in the
trust setting (or in anything downstream of the draws) see identical motion,
sensing noise, losses, ranges and spoof offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..core import StateSummary, as_vec3, make_cov_diag
from ..link import LinkObservables, NeighborMessage
from ..recovery import PipelineParams, UavPipelineState, refine_epoch
from ..trust import RangeObservation
from .config import MIN_SENSE_STD, SwarmConfig
from .metrics import EpochMetrics

# rng purposes
_INIT, _NOISE, _ROLES, _COHORT, _MOTION, _SENSE, _LOSS, _RANGE, _SPOOF = range(9)


def make_rng(seed: int, purpose: int, uav: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, uav)))


def reflect_into(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold coordinates back into ``[lo, hi]`` by repeated mirror reflection."""
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


def step_motion(p, step_scale: float, bounds, rng: Optional[np.random.Generator] = None, step=None) -> np.ndarray:
    """Gaussian random-walk step with reflective walls.

    ``step`` may be given explicitly (tests); otherwise it is drawn from ``rng``.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if step is None:
        step = rng.normal(0.0, step_scale, size=3)
    return reflect_into(np.asarray(p, dtype=np.float64) + np.asarray(step, dtype=np.float64), lo, hi)


def sense_local(
    truth,
    uav: int,
    config: SwarmConfig,
    epoch: int,
    noise_scale: float,
    cohort: bool,
    z: np.ndarray,
    loss_draw: float,
) -> StateSummary:
    """Local fix for one UAV given pre-drawn standard normals ``z`` and a uniform ``loss_draw``."""
    cold = epoch < config.cold_start_epochs
    if (cold and cohort) or (not cold and loss_draw < config.loss_prob):
        return StateSummary(uav_id=uav, epoch=epoch)
    h = noise_scale * (config.cold_start_inflation if cold else 1.0)
    h = max(h, MIN_SENSE_STD)
    v = max(h * config.vertical_factor, MIN_SENSE_STD)
    std = np.array([h, h, v])
    pos = np.asarray(truth, dtype=np.float64) + z * std
    return StateSummary(uav_id=uav, epoch=epoch, position=pos, covariance=make_cov_diag(h * h, h * h, v * v))


def range_sigma(d: float, config: SwarmConfig) -> float:
    return config.range_noise_base + config.range_noise_slope * d


def measure_range(
    p_i, p_j, config: SwarmConfig, rng: Optional[np.random.Generator] = None, z: Optional[float] = None
) -> RangeObservation:
    """True distance plus zero-mean noise whose std grows with distance, clamped at 0.

    ``z`` is a pre-drawn standard normal; if omitted it is drawn from ``rng``.
    """
    d = float(np.linalg.norm(np.asarray(p_i, dtype=np.float64) - np.asarray(p_j, dtype=np.float64)))
    sigma = range_sigma(d, config)
    if z is None:
        z = float(rng.standard_normal())
    return RangeObservation(d_hat=max(0.0, d + sigma * z), sigma_d=sigma)


def link_observables_from_distance(d: float, comm_radius: float) -> LinkObservables:
    q = min(max(1.0 - d / comm_radius, 0.0), 1.0)
    return LinkObservables(rssi_score=q, prr=q)


def spoof_offset(config: SwarmConfig, rng: np.random.Generator) -> np.ndarray:
    direction = rng.normal(size=3)
    n = np.linalg.norm(direction)
    direction = direction / n if n > 0 else np.array([1.0, 0.0, 0.0])
    return direction * rng.uniform(config.spoof_min, config.spoof_max)


def spoof_report(truth, config: SwarmConfig, rng: np.random.Generator) -> np.ndarray:
    """Broadcast position for a malicious UAV: truth shifted by a random offset."""
    return np.asarray(truth, dtype=np.float64) + spoof_offset(config, rng)


@dataclass
class WorldState:
    config: SwarmConfig
    params: PipelineParams
    epoch: int
    true_positions: np.ndarray
    malicious: np.ndarray
    cohort: np.ndarray
    noise_scales: np.ndarray
    pipeline_states: list[UavPipelineState]
    # last available local fix, the no-refinement baseline during outages
    last_local: list[Optional[np.ndarray]]
    rngs: dict[tuple[int, int], np.random.Generator] = field(repr=False, default_factory=dict)

    @property
    def bounds(self):
        return np.asarray(self.config.bounds_lo, float), np.asarray(self.config.bounds_hi, float)

    def rng(self, purpose: int, uav: int = 0) -> np.random.Generator:
        key = (purpose, uav)
        if key not in self.rngs:
            self.rngs[key] = make_rng(self.config.seed, purpose, uav)
        return self.rngs[key]


def init_world(config: SwarmConfig) -> WorldState:
    config.validate()
    n = config.n_uavs
    lo, hi = np.asarray(config.bounds_lo, float), np.asarray(config.bounds_hi, float)
    world = WorldState(
        config=config,
        params=config.pipeline_params(),
        epoch=0,
        true_positions=np.zeros((n, 3)),
        malicious=np.zeros(n, dtype=bool),
        cohort=np.zeros(n, dtype=bool),
        noise_scales=np.zeros(n),
        pipeline_states=[UavPipelineState() for _ in range(n)],
        last_local=[None] * n,
    )
    world.true_positions = world.rng(_INIT).uniform(lo, hi, size=(n, 3))
    if config.noise_scales:
        world.noise_scales = np.array(config.noise_scales, dtype=float)
    else:
        log_lo, log_hi = np.log(config.noise_min), np.log(config.noise_max)
        world.noise_scales = np.exp(world.rng(_NOISE).uniform(log_lo, log_hi, size=n))
    n_mal = int(round(config.malicious_fraction * n))
    world.malicious[world.rng(_ROLES).permutation(n)[:n_mal]] = True
    world.cohort[world.rng(_COHORT).permutation(n)[: config.cohort_size]] = True
    return world


@dataclass
class EpochSnapshot:
    epoch: int
    truth: np.ndarray
    local: list[Optional[np.ndarray]]
    refined: np.ndarray
    malicious: np.ndarray

    def to_json(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "uavs": [
                {
                    "uav_id": i,
                    "role": "malicious" if self.malicious[i] else "honest",
                    "truth": self.truth[i].tolist(),
                    "local": None if self.local[i] is None else self.local[i].tolist(),
                    "refined": self.refined[i].tolist(),
                }
                for i in range(len(self.truth))
            ],
        }


def run_epoch(world: WorldState, record_trust: bool = False) -> tuple[WorldState, EpochMetrics, EpochSnapshot]:
    """Advance the world one epoch and refine every UAV.

    All random draws happen before any refinement, so per-UAV refinements
    only read the world snapshot.
    """
    cfg = world.config
    n = cfg.n_uavs
    t = world.epoch
    if t >= cfg.n_epochs:
        raise ValueError(f"epoch {t} is past n_epochs={cfg.n_epochs}")
    lo, hi = world.bounds

    # motion (epoch 0 uses the initial placement)
    if t > 0:
        for i in range(n):
            world.true_positions[i] = step_motion(
                world.true_positions[i], cfg.step_scale, (lo, hi), world.rng(_MOTION, i)
            )
    truth = world.true_positions

    # draws
    z_sense = np.array([world.rng(_SENSE, i).standard_normal(3) for i in range(n)])
    u_loss = np.array([world.rng(_LOSS, i).uniform() for i in range(n)])
    z_range = np.array([world.rng(_RANGE, i).standard_normal(n) for i in range(n)])
    offsets = [spoof_offset(cfg, world.rng(_SPOOF, i)) if world.malicious[i] else None for i in range(n)]

    locals_ = [
        sense_local(truth[i], i, cfg, t, float(world.noise_scales[i]), bool(world.cohort[i]), z_sense[i], u_loss[i])
        for i in range(n)
    ]

    # broadcasts: current local fix, else last refined state
    broadcasts: list[Optional[StateSummary]] = []
    sent: list[int] = []
    for i in range(n):
        last = world.pipeline_states[i].last_refined
        if world.malicious[i]:
            cov = locals_[i].covariance if locals_[i].covariance is not None else make_cov_diag(1.0, 1.0, 1.0)
            broadcasts.append(StateSummary(i, t, as_vec3(truth[i] + offsets[i]), cov))
            sent.append(t)
        elif locals_[i].position is not None:
            broadcasts.append(locals_[i])
            sent.append(t)
        elif last is not None and cfg.broadcast_refined:
            broadcasts.append(StateSummary(i, last.epoch, last.position, last.covariance))
            sent.append(last.epoch)
        else:
            broadcasts.append(None)
            sent.append(t)

    # proximity graph and symmetric ranges
    diff = truth[:, None, :] - truth[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    ranges: list[dict[int, RangeObservation]] = [{} for _ in range(n)]
    links: list[dict[int, LinkObservables]] = [{} for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = float(dist[i, j])
            if d > cfg.comm_radius:
                continue
            obs = measure_range(truth[i], truth[j], cfg, z=float(z_range[i, j]))
            ranges[i][j] = ranges[j][i] = obs
            links[i][j] = links[j][i] = link_observables_from_distance(d, cfg.comm_radius)

    refined = np.zeros((n, 3))
    new_states = []
    low_conf = []
    for i in range(n):
        msgs = [
            NeighborMessage(sender=j, state=broadcasts[j], sent_epoch=sent[j], link=links[i][j])
            for j in sorted(links[i])
            if broadcasts[j] is not None
        ]
        r, st = refine_epoch(locals_[i], msgs, ranges[i], world.pipeline_states[i], world.params)
        refined[i] = r.position
        low_conf.append(r.low_confidence)
        new_states.append(st)
    world.pipeline_states = new_states

    # baseline without refinement: hold the last fix, else the arena center
    center = np.asarray(world.params.recovery.broad_center, float)
    local_est = []
    for i in range(n):
        if locals_[i].position is not None:
            world.last_local[i] = np.array(locals_[i].position)
        local_est.append(world.last_local[i] if world.last_local[i] is not None else center)
    local_est = np.array(local_est)

    local_err = np.linalg.norm(local_est - truth, axis=1)
    refined_err = np.linalg.norm(refined - truth, axis=1)
    honest = ~world.malicious
    flagged = sum(len(world.pipeline_states[i].trust_ledger.flagged) for i in range(n) if honest[i])
    metrics = EpochMetrics(
        epoch=t,
        mean_local_error_honest=float(local_err[honest].mean()) if honest.any() else 0.0,
        mean_refined_error_honest=float(refined_err[honest].mean()) if honest.any() else 0.0,
        local_errors=[float(e) for e in local_err],
        refined_errors=[float(e) for e in refined_err],
        flagged_count=int(flagged),
        loss_flags=[locals_[i].position is None for i in range(n)],
        low_confidence=low_conf,
        malicious=[bool(m) for m in world.malicious],
        trust=(
            {i: {int(k): v for k, v in sorted(world.pipeline_states[i].trust_ledger.smoothed.items())}
             for i in range(n)}
            if record_trust else None
        ),
    )
    snap = EpochSnapshot(
        epoch=t,
        truth=truth.copy(),
        local=[None if s.position is None else np.array(s.position) for s in locals_],
        refined=refined,
        malicious=world.malicious.copy(),
    )
    world.epoch = t + 1
    return world, metrics, snap


@dataclass
class SimulationResult:
    metrics: list[EpochMetrics]
    snapshot: Optional[EpochSnapshot] = None


def simulate(config: SwarmConfig, snapshot_epoch: Optional[int] = None, record_trust: bool = False) -> SimulationResult:
    world = init_world(config)
    out = SimulationResult(metrics=[])
    for _ in range(config.n_epochs):
        world, m, snap = run_epoch(world, record_trust=record_trust)
        out.metrics.append(m)
        if snapshot_epoch is not None and snap.epoch == snapshot_epoch:
            out.snapshot = snap
    return out


def run_simulation(config: SwarmConfig) -> list[EpochMetrics]:
    return simulate(config).metrics
