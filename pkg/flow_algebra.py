"""
Flow-map algebra: primitive lattice maps, the RG operator acting pointwise on
evaluable flow maps, and states at dyadic times composed from flow maps.

All maps act on fixed-length vectors: shift_minus drops the last component and
shift_plus appends a zero.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, NumericFault
from lattice import (
    DeterministicDissipation,
    LatticeState,
    NoiseDissipation,
    SimConfig,
    TransferSpec,
    advance,
    make_config,
    step_unit_interval,
    transfer_fraction,
)

logger = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1e-14

VectorLike = Union[np.ndarray, Sequence[float], LatticeState]


def as_vector(a: VectorLike) -> np.ndarray:
    if isinstance(a, LatticeState):
        return a.values.copy()
    vector = np.array(a, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise DomainError("expected a non-empty 1-D state vector")
    if not np.all(np.isfinite(vector)):
        raise DomainError("state vector has non-finite components")
    return vector


def clamp_nonnegative(vector: np.ndarray) -> np.ndarray:
    """Zero out round-off negatives; anything below -1e-14 is a fault"""
    worst = float(vector.min()) if vector.size else 0.0
    if worst < -NEGATIVE_TOLERANCE:
        raise NumericFault(f"flow map produced negative energy {worst:.3e}")
    if worst < 0.0:
        vector = np.where(vector < 0.0, 0.0, vector)
    return vector


# ---------------------------------------------------------------------------
# Primitive maps
# ---------------------------------------------------------------------------

def shift_plus(a: VectorLike) -> np.ndarray:
    """sigma_+: drop component 0 and shift left"""
    a = as_vector(a)
    out = np.zeros_like(a)
    out[:-1] = a[1:]
    return out


def shift_minus(a: VectorLike) -> np.ndarray:
    """sigma_-: prepend a zero"""
    a = as_vector(a)
    out = np.zeros_like(a)
    out[1:] = a[:-1]
    return out


def shift_plus_power(a: VectorLike, times: int) -> np.ndarray:
    a = as_vector(a)
    if times <= 0:
        return a
    out = np.zeros_like(a)
    if times < a.size:
        out[: a.size - times] = a[times:]
    return out


def project_zero(a: VectorLike) -> np.ndarray:
    """pi_0: keep only component 0"""
    a = as_vector(a)
    out = np.zeros_like(a)
    out[0] = a[0]
    return out


def xi_transfer(a: VectorLike, spec: TransferSpec) -> np.ndarray:
    """Energy handed from scale 0 to scale 1 over one turnover: (f(a0, a1) a0, 0, ...)"""
    a = as_vector(a)
    out = np.zeros_like(a)
    a1 = a[1] if a.size > 1 else 0.0
    out[0] = transfer_fraction(spec, a[0], a1) * a[0]
    return out


# ---------------------------------------------------------------------------
# Flow maps
# ---------------------------------------------------------------------------

class FlowMap(ABC):
    """Evaluable map a -> u(1); noise-regularized maps draw from the stream passed in"""

    def __init__(self, transfer: TransferSpec):
        self.transfer = transfer

    @property
    @abstractmethod
    def viscous_scale(self) -> int:
        ...

    @property
    def stochastic(self) -> bool:
        return False

    @abstractmethod
    def evaluate(self, a: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        ...

    def __call__(self, a: VectorLike, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        vector = as_vector(a)
        if vector.size < self.viscous_scale + 1:
            raise DomainError(
                "state vector shorter than the active scales of the flow map",
                length=int(vector.size),
                N=self.viscous_scale,
            )
        return clamp_nonnegative(self.evaluate(vector, rng))


class Simulator(FlowMap):
    """phi^(N, alpha), or one sample of Phi^(N) when the dissipation is noise"""

    def __init__(
        self,
        N: int,
        dissipation: Union[DeterministicDissipation, NoiseDissipation, float],
        transfer: TransferSpec,
    ):
        super().__init__(transfer)
        if not isinstance(dissipation, (DeterministicDissipation, NoiseDissipation)):
            dissipation = DeterministicDissipation(alpha=float(dissipation))
        self.N = int(N)
        self.dissipation = dissipation
        self._configs: Dict[int, SimConfig] = {}

    def __repr__(self) -> str:
        return f"Simulator(N={self.N}, dissipation={self.dissipation!r}, transfer={self.transfer!r})"

    @property
    def viscous_scale(self) -> int:
        return self.N

    @property
    def stochastic(self) -> bool:
        return isinstance(self.dissipation, NoiseDissipation)

    def config_for(self, length: int) -> SimConfig:
        config = self._configs.get(length)
        if config is None:
            config = make_config(self.N, self.dissipation, self.transfer, n_cap=length - 1)
            self._configs[length] = config
        return config

    def evaluate(self, a: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        state = step_unit_interval(LatticeState(a), self.config_for(a.size), rng)
        return state.values


class RgComposite(FlowMap):
    """R^depth[base]: the RG operator applied `depth` times to a base flow map"""

    def __init__(self, base: FlowMap, depth: int):
        if depth < 0:
            raise DomainError("RG depth must be non-negative", depth=depth)
        super().__init__(base.transfer)
        self.base = base
        self.depth = int(depth)
        self._inner = RgComposite(base, depth - 1) if depth > 1 else base

    def __repr__(self) -> str:
        return f"RgComposite({self.base!r}, depth={self.depth})"

    @property
    def viscous_scale(self) -> int:
        return self.base.viscous_scale + self.depth

    @property
    def stochastic(self) -> bool:
        return self.base.stochastic

    def evaluate(self, a: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if self.depth == 0:
            return self.base.evaluate(a, rng)
        return rg_apply(self._inner, a, self.transfer, rng)


def rg_apply(
    phi: FlowMap,
    a: VectorLike,
    spec: TransferSpec,
    rng: Optional[np.random.Generator] = None,
    rng_second: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """R[phi](a) = pi_0(a) - xi(a) + sigma_-(phi(xi(a) + phi(sigma_+(a))))

    The two inner evaluations draw from `rng` and `rng_second` (defaults to `rng`).
    """
    a = as_vector(a)
    xi = xi_transfer(a, spec)
    intermediate = xi + phi(shift_plus(a), rng)
    outer = phi(intermediate, rng if rng_second is None else rng_second)
    return clamp_nonnegative(project_zero(a) - xi + shift_minus(outer))


# ---------------------------------------------------------------------------
# Dyadic times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicTime:
    """t = m + tau_{i_1} + ... + tau_{i_k} with 0 < i_1 < ... < i_k"""

    m: int = 0
    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.m < 0:
            raise DomainError("dyadic time needs m >= 0", m=self.m)
        previous = 0
        for i in self.indices:
            if i <= previous:
                raise DomainError("dyadic indices must be strictly increasing and positive", indices=list(self.indices))
            previous = i

    @property
    def finest(self) -> int:
        return self.indices[-1] if self.indices else 0

    @property
    def value(self) -> float:
        return self.m + sum(2.0 ** (-i) for i in self.indices)

    def validate_for(self, N: int) -> None:
        if self.finest > N:
            raise DomainError("dyadic index beyond the viscous scale", finest=self.finest, N=N)

    def ticks(self, N: int) -> int:
        """Number of tau_N ticks from 0 to t"""
        self.validate_for(N)
        return (self.m << N) + sum(1 << (N - i) for i in self.indices)

    @classmethod
    def from_ticks(cls, k: int, N: int) -> "DyadicTime":
        if k < 0:
            raise DomainError("tick index must be non-negative", k=k)
        m, rest = divmod(k, 1 << N)
        indices = tuple(N - b for b in range(N - 1, -1, -1) if rest >> b & 1)
        return cls(m=m, indices=indices)

    def __str__(self) -> str:
        return f"{self.m}+" + "+".join(f"tau{i}" for i in self.indices) if self.indices else str(self.m)


def state_at_dyadic_time(
    a: VectorLike,
    N: int,
    dissipation: Union[DeterministicDissipation, NoiseDissipation, float],
    spec: TransferSpec,
    t: DyadicTime,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """(u_{i_k}(t), u_{i_k+1}(t), ...) composed from flow maps at viscous scales N - i_j"""
    t.validate_for(N)
    vector = as_vector(a)
    if vector.size < N + 1:
        vector = np.concatenate([vector, np.zeros(N + 1 - vector.size)])
    # scales beyond N carry no energy in the regularized lattice
    vector[N + 1:] = 0.0

    phi = Simulator(N, dissipation, spec)
    for _ in range(t.m):
        vector = phi(vector, rng)

    previous = 0
    for i in t.indices:
        step = i - previous
        head = xi_transfer(shift_plus_power(vector, step - 1), spec)
        vector = head + Simulator(N - i, dissipation, spec)(shift_plus_power(vector, step), rng)
        previous = i
    return clamp_nonnegative(vector)


def direct_state_at_dyadic_time(
    a: VectorLike,
    N: int,
    dissipation: Union[DeterministicDissipation, NoiseDissipation, float],
    spec: TransferSpec,
    t: DyadicTime,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Same tail as state_at_dyadic_time, by tick-level simulation"""
    vector = as_vector(a)
    length = max(vector.size, N + 1)
    config = make_config(N, dissipation, spec, n_cap=length - 1)
    state, _ = advance(LatticeState(vector), config, t.ticks(N), rng)
    tail = np.zeros(length)
    values = state.values[t.finest:]
    tail[: values.size] = values
    return tail
