"""
Experiment configuration: the validated ExperimentConfig schema, initial-condition specs,
and the resolution of presets, JSON config files and KEY=VALUE overrides.
"""
import copy
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from errors import ConfigError
from lattice import MU, NoiseDissipation, ProbeStatistic, TransferFamily, TransferSpec
from stochastic_rg import perturbation_profile, staircase

logger = logging.getLogger(__name__)


class InitialConditionSpec(BaseModel):
    """Initial state a: the staircase, an explicit vector, a power-law tail, or a perturbed staircase"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["staircase", "vector", "power_law", "perturbed"] = "staircase"
    values: Optional[List[float]] = None
    h: float = 1.0
    amplitude: float = 1.0
    n_max: int = Field(4, ge=0)
    epsilon: float = Field(0.1, ge=0.0)

    @model_validator(mode="after")
    def _check_kind(self) -> "InitialConditionSpec":
        if self.kind == "vector":
            if not self.values:
                raise ValueError("vector initial condition needs non-empty `values`")
            if any(not math.isfinite(v) or v < 0.0 for v in self.values):
                raise ValueError("initial energies must be finite and non-negative")
        if self.kind == "power_law" and (self.amplitude < 0.0 or not math.isfinite(self.h)):
            raise ValueError("power-law tail needs a non-negative amplitude and finite h")
        return self

    @property
    def label(self) -> str:
        if self.kind == "power_law":
            return f"power_law_h{self.h:g}"
        return self.kind

    def build(self, length: int = 0) -> np.ndarray:
        """The state vector, zero-padded to at least `length` components"""
        if self.kind == "vector":
            vector = np.array(self.values, dtype=np.float64)
        elif self.kind == "power_law":
            n = np.arange(self.n_max + 1, dtype=np.float64)
            vector = self.amplitude * 2.0 ** (-n * self.h)
        else:
            vector = staircase()
            if self.kind == "perturbed":
                vector = vector + self.epsilon * perturbation_profile(vector.size)
        if vector.size < length:
            vector = np.concatenate([vector, np.zeros(length - vector.size)])
        return vector


class ExperimentConfig(BaseModel):
    """Fully resolved configuration of one experiment run; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid")

    name: str
    family: TransferFamily = TransferFamily.FA
    p: float = 5.0
    p_grid: List[float] = Field(default_factory=list)
    family_p: Dict[TransferFamily, float] = Field(
        default_factory=lambda: {TransferFamily.FA: 5.0, TransferFamily.FB: 10.3}
    )

    # Regularization
    N: int = Field(12, ge=0)
    N_values: List[int] = Field(default_factory=list)
    rho_N_values: List[int] = Field(default_factory=list)
    alphas: List[float] = Field(default_factory=lambda: [0.25])
    noises: List[NoiseDissipation] = Field(default_factory=lambda: [MU])
    noise_regularized: bool = False
    delta_alpha: float = Field(1e-15, ge=0.0)
    forcing: bool = False

    # Initial condition
    initial: InitialConditionSpec = InitialConditionSpec()

    # Sampling and statistics
    samples: int = Field(0, ge=0)
    seed: int = Field(default_factory=lambda: settings.seed, ge=0)
    bins: int = Field(default_factory=lambda: settings.bins, ge=1)
    probe: int = Field(4, ge=0)
    components: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    spot_check_epsilon: Optional[float] = Field(None, gt=0.0)
    rho_range: Optional[Tuple[float, float]] = None

    # Forced runs
    transient: int = Field(100, ge=10)
    window: int = Field(5000, ge=100)
    p_max: int = Field(8, ge=1)
    inertial_range: Optional[Tuple[int, int]] = None
    stability_check: bool = False

    # simulate
    t_end: int = Field(1, ge=1)
    probes: List[Tuple[int, ProbeStatistic]] = Field(default_factory=list)

    # Verification
    trials: int = Field(100, ge=1)
    tolerance: float = Field(1e-12, gt=0.0)

    # Execution
    threads: int = Field(default_factory=lambda: settings.threads, ge=1)
    output_dir: str = Field(default_factory=lambda: settings.output_dir)

    @field_validator("p_grid")
    @classmethod
    def _increasing_grid(cls, value: List[float]) -> List[float]:
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("p_grid must be strictly increasing")
        return value

    @field_validator("N_values", "rho_N_values")
    @classmethod
    def _consecutive_scales(cls, value: List[int]) -> List[int]:
        if any(n < 0 for n in value):
            raise ValueError("viscous scales must be non-negative")
        if any(b - a != 1 for a, b in zip(value, value[1:])):
            raise ValueError("N ranges must be consecutive and increasing")
        return value

    @field_validator("alphas")
    @classmethod
    def _alpha_range(cls, value: List[float]) -> List[float]:
        if any(not 0.0 < a <= 1.0 for a in value):
            raise ValueError("alpha must lie in (0, 1]")
        return value

    @field_validator("components")
    @classmethod
    def _components(cls, value: List[int]) -> List[int]:
        if not value or any(n < 0 for n in value) or len(set(value)) != len(value):
            raise ValueError("components must be distinct non-negative indices")
        return value

    @model_validator(mode="after")
    def _ordered_ranges(self) -> "ExperimentConfig":
        if self.inertial_range is not None and self.inertial_range[0] > self.inertial_range[1]:
            raise ValueError("inertial_range must be (n_lo, n_hi) with n_lo <= n_hi")
        if self.rho_range is not None and self.rho_range[0] > self.rho_range[1]:
            raise ValueError("rho_range must be (lo, hi) with lo <= hi")
        return self

    @property
    def transfer(self) -> TransferSpec:
        return TransferSpec(family=self.family, p=self.p)

    def scales(self) -> List[int]:
        return list(self.N_values) if self.N_values else [self.N]

    def transfer_for(self, family: TransferFamily) -> TransferSpec:
        return TransferSpec(family=family, p=self.family_p.get(family, self.p))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """JSON object from config text; anything else is a ConfigError"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e.msg}", source=source, line=e.lineno) from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", source=source)
    return data


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e.strerror}", path=str(path)) from e
    return parse_config_text(text, source=str(path))


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_override(item: str) -> Tuple[List[str], Any]:
    """KEY=VALUE with dotted keys for nested fields; VALUE is JSON when it parses as JSON"""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError("override must look like KEY=VALUE", override=item)
    return key.strip().split("."), _parse_value(raw.strip())


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    merged = copy.deepcopy(data)
    for item in overrides:
        path, value = parse_override(item)
        target = merged
        for part in path[:-1]:
            node = target.get(part)
            if not isinstance(node, dict):
                node = {}
                target[part] = node
            target = node
        target[path[-1]] = value
    return merged


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config(
    name: str,
    preset: Optional[Dict[str, Any]] = None,
    file_data: Optional[Dict[str, Any]] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ExperimentConfig:
    """preset <- config file <- overrides <- dedicated flags, validated in one pass"""
    data = deep_merge(preset or {}, file_data or {})
    data = apply_overrides(data, overrides)
    flags = {"seed": seed, "threads": threads, "output_dir": output_dir}
    data.update({k: v for k, v in flags.items() if v is not None})
    data["name"] = name
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"invalid configuration for {name}", problems=problems) from e
    logger.info(f"Resolved config: {config_summary(config)}")
    return config


def dump_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(indent=2)


def config_summary(config: ExperimentConfig) -> str:
    """Human-readable one-liner for logs"""
    summary = f"{config.name}: {config.family.value} p={config.p:g}"
    scales = config.scales()
    summary += f", N={scales[0]}" if len(scales) == 1 else f", N={scales[0]}..{scales[-1]}"
    if config.samples:
        summary += f", M={config.samples}"
    summary += f", a={config.initial.label}, seed={config.seed}"
    return summary
