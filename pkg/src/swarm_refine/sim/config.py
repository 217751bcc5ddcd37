"""Experiment configuration and its flat ``key = value`` file format.

Every tunable, including the embedded link/trust/recovery/solver parameters,
is a top-level key. Example::

    n_uavs = 10
    comm_radius = 35.0
    bounds_hi = 50, 50, 50
    lambda = 3.0
    gamma_loss = 4.0
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..link import LinkParams
from ..recovery import PipelineParams, RecoveryParams
from ..refine import SolverParams
from ..trust import TrustParams

MIN_SENSE_STD = 0.01


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` names every violated key."""

    def __init__(self, problems: dict[str, str]):
        self.fields = sorted(problems)
        msg = "; ".join(f"{k}: {v}" for k, v in sorted(problems.items()))
        super().__init__(f"invalid config: {msg}")


@dataclass(frozen=True)
class SwarmConfig:
    n_uavs: int = 10
    n_epochs: int = 30
    bounds_lo: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bounds_hi: tuple[float, float, float] = (50.0, 50.0, 50.0)
    step_scale: float = 1.0
    comm_radius: float = 35.0
    # explicit per-UAV horizontal noise std; drawn log-uniform in
    # [noise_min, noise_max] when empty
    noise_scales: tuple[float, ...] = ()
    noise_min: float = 0.5
    noise_max: float = 4.0
    vertical_factor: float = 2.0
    cold_start_epochs: int = 10
    cold_start_inflation: float = 3.0
    loss_prob: float = 0.05
    cohort_size: int = 4
    malicious_fraction: float = 0.0
    range_noise_base: float = 1.5
    range_noise_slope: float = 0.05
    spoof_min: float = 15.0
    spoof_max: float = 30.0
    # UAVs without a local fix broadcast their last refined state
    broadcast_refined: bool = True
    seed: int = 0
    link: LinkParams = field(default_factory=LinkParams)
    trust: TrustParams = field(default_factory=TrustParams)
    recovery: RecoveryParams = field(default_factory=RecoveryParams)
    solver: SolverParams = field(default_factory=SolverParams)

    def problems(self) -> dict[str, str]:
        p: dict[str, str] = {}
        if self.n_uavs < 1:
            p["n_uavs"] = "must be >= 1"
        if self.n_epochs < 0:
            p["n_epochs"] = "must be >= 0"
        if len(self.bounds_lo) != 3 or len(self.bounds_hi) != 3:
            p["bounds"] = "bounds_lo/bounds_hi need 3 components"
        elif any(not hi > lo for lo, hi in zip(self.bounds_lo, self.bounds_hi)):
            p["bounds"] = "bounds_hi must exceed bounds_lo on every axis"
        if not self.step_scale > 0:
            p["step_scale"] = "must be > 0"
        if not self.comm_radius > 0:
            p["comm_radius"] = "must be > 0"
        if self.noise_scales:
            if len(self.noise_scales) != self.n_uavs:
                p["noise_scales"] = f"needs {self.n_uavs} entries"
            elif any(not (s >= 0 and math.isfinite(s)) for s in self.noise_scales):
                p["noise_scales"] = "entries must be finite and >= 0"
        if not 0 < self.noise_min <= self.noise_max:
            p["noise_min"] = "need 0 < noise_min <= noise_max"
        if not self.vertical_factor >= 1:
            p["vertical_factor"] = "must be >= 1"
        if not self.cold_start_epochs >= 0:
            p["cold_start_epochs"] = "must be >= 0"
        if not self.cold_start_inflation >= 1:
            p["cold_start_inflation"] = "must be >= 1"
        if not 0 <= self.loss_prob <= 1:
            p["loss_prob"] = "must lie in [0, 1]"
        if not 0 <= self.cohort_size <= self.n_uavs:
            p["cohort_size"] = "must lie in [0, n_uavs]"
        if not 0 <= self.malicious_fraction <= 0.5:
            p["malicious_fraction"] = "must lie in [0, 0.5]"
        if not self.range_noise_base > 0:
            p["range_noise_base"] = "must be > 0"
        if not self.range_noise_slope >= 0:
            p["range_noise_slope"] = "must be >= 0"
        if not 0 <= self.spoof_min <= self.spoof_max:
            p["spoof_min"] = "need 0 <= spoof_min <= spoof_max"
        if not 0 <= self.seed < 2**64:
            p["seed"] = "must be an unsigned 64-bit integer"
        return p

    def validate(self) -> "SwarmConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        return self

    def pipeline_params(self) -> PipelineParams:
        """Pipeline parameters with the broad prior centered on the arena."""
        center = tuple((lo + hi) / 2 for lo, hi in zip(self.bounds_lo, self.bounds_hi))
        half = max((hi - lo) / 2 for lo, hi in zip(self.bounds_lo, self.bounds_hi))
        recovery = dataclasses.replace(self.recovery, broad_center=center, broad_var=half * half)
        return PipelineParams(link=self.link, trust=self.trust, recovery=recovery, solver=self.solver)


# flat key -> (section attribute or None, attribute name)
_NESTED = {
    "alpha": ("link", "alpha"),
    "budget": ("link", "budget"),
    "q_min": ("link", "q_min"),
    "max_age": ("link", "max_age"),
    "lambda": ("trust", "lam"),
    "eta": ("trust", "eta"),
    "s_min": ("trust", "s_min"),
    "s_init": ("trust", "s_init"),
    "trust": ("trust", "enabled"),
    "sigma_max": ("recovery", "sigma_max"),
    "gamma_boot": ("recovery", "gamma_boot"),
    "gamma_loss": ("recovery", "gamma_loss"),
    "max_iters": ("solver", "max_iters"),
    "damping": ("solver", "damping"),
    "step_tol": ("solver", "step_tol"),
    "min_dist": ("solver", "min_dist"),
}
_SECTIONS = ("link", "trust", "recovery", "solver")


def config_keys() -> list[str]:
    top = [f.name for f in dataclasses.fields(SwarmConfig) if f.name not in _SECTIONS]
    return top + list(_NESTED)


def _field_type(key: str) -> Any:
    if key in _NESTED:
        section, attr = _NESTED[key]
        default = getattr(getattr(SwarmConfig(), section), attr)
    else:
        default = getattr(SwarmConfig(), key)
    return type(default)


def flat_items(config: SwarmConfig) -> dict[str, Any]:
    """Every config key with its effective value, in declaration order."""
    out: dict[str, Any] = {}
    for key in config_keys():
        if key in _NESTED:
            section, attr = _NESTED[key]
            out[key] = getattr(getattr(config, section), attr)
        else:
            out[key] = getattr(config, key)
    return out


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_value(key: str, text: str) -> Any:
    kind = _field_type(key)
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is tuple:
        return tuple(float(t) for t in text.split(",") if t.strip())
    if kind is int:
        return int(text, 0)
    return kind(text)


def with_overrides(base: SwarmConfig, overrides: dict[str, Any]) -> SwarmConfig:
    """Apply flat-key overrides, collecting every problem into one ConfigError."""
    problems: dict[str, str] = {}
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {s: {} for s in _SECTIONS}
    for key, value in overrides.items():
        if key in _NESTED:
            section, attr = _NESTED[key]
            nested[section][attr] = value
        elif key in config_keys():
            top[key] = value
        else:
            problems[key] = "unknown config key"
    for section, changes in nested.items():
        if changes:
            try:
                top[section] = dataclasses.replace(getattr(base, section), **changes)
            except (TypeError, ValueError) as exc:
                for attr in changes:
                    flat = next(k for k, v in _NESTED.items() if v == (section, attr))
                    problems[flat] = str(exc)
    if problems:
        raise ConfigError(problems)
    cfg = dataclasses.replace(base, **top)
    p = cfg.problems()
    if p:
        raise ConfigError(p)
    return cfg


def parse_config_text(text: str) -> dict[str, Any]:
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str  # keep key case
    parser.read_string("[swarm]\n" + text)
    out: dict[str, Any] = {}
    problems: dict[str, str] = {}
    for key, raw in parser.items("swarm"):
        if key not in config_keys():
            problems[key] = "unknown config key"
            continue
        try:
            out[key] = parse_value(key, raw)
        except ValueError as exc:
            problems[key] = str(exc)
    if problems:
        raise ConfigError(problems)
    return out


def load_config(path: Optional[Path | str], overrides: Optional[dict[str, Any]] = None) -> SwarmConfig:
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    values.update(overrides or {})
    return with_overrides(SwarmConfig(), values)


def dump_config(config: SwarmConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in flat_items(config).items())
