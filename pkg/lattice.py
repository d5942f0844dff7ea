"""
Lattice module: exact tick-level integrator of the regularized fractal lattice.

Scale n holds an energy u_n that changes only at multiples of its turnover time
tau_n = 2**-n. A run regularized at viscous scale N advances on the grid of
tau_N; at tick k the scales n_min..N update together from the pre-tick values,
where n_min = max(0, N - v2(k)).
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import DomainError, NumericFault

logger = logging.getLogger(__name__)

CONSERVATION_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

class TransferFamily(str, Enum):
    """Transfer-fraction families"""

    FA = "FA"
    FB = "FB"

    @property
    def code(self) -> int:
        return 0 if self is TransferFamily.FA else 1


class TransferSpec(BaseModel):
    """Parametrized transfer fraction f(u, v)"""

    model_config = ConfigDict(frozen=True)

    family: TransferFamily = TransferFamily.FA
    p: float = 5.0

    @field_validator("p")
    @classmethod
    def _finite_p(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("p must be finite")
        return value

    def fraction_range(self) -> Tuple[float, float]:
        """Closed range of values f can take"""
        if self.family is TransferFamily.FA:
            return 0.2, 0.4
        return 0.1, 0.7


class DeterministicDissipation(BaseModel):
    """Constant dissipation fraction alpha at the viscous scale"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["deterministic"] = "deterministic"
    alpha: float = Field(0.25, gt=0.0, le=1.0)


class NoiseDissipation(BaseModel):
    """alpha_t i.i.d. uniform on [lo, hi], one draw per update of the viscous scale"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["noise"] = "noise"
    lo: float = Field(0.4, gt=0.0, le=1.0)
    hi: float = Field(0.5, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _ordered(self) -> "NoiseDissipation":
        if self.lo > self.hi:
            raise ValueError(f"noise interval reversed: lo={self.lo} > hi={self.hi}")
        return self

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi


Dissipation = Annotated[Union[DeterministicDissipation, NoiseDissipation], Field(discriminator="kind")]

# The two noises used throughout the experiments
MU = NoiseDissipation(lo=0.4, hi=0.5)
MU_TILDE = NoiseDissipation(lo=0.3, hi=0.301)


class RegularizationSpec(BaseModel):
    """Viscous scale N plus the dissipation rule applied there"""

    model_config = ConfigDict(frozen=True)

    N: int = Field(0, ge=0)
    dissipation: Dissipation = DeterministicDissipation()

    @property
    def stochastic(self) -> bool:
        return isinstance(self.dissipation, NoiseDissipation)


class SimConfig(BaseModel):
    """Everything a lattice run needs besides the initial state"""

    model_config = ConfigDict(frozen=True)

    transfer: TransferSpec = TransferSpec()
    regularization: RegularizationSpec = RegularizationSpec()
    forcing: bool = False
    n_cap: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _cap_covers_viscous_scale(self) -> "SimConfig":
        if self.n_cap is not None and self.n_cap < self.regularization.N:
            raise ValueError(f"n_cap={self.n_cap} below viscous scale N={self.regularization.N}")
        return self

    @property
    def N(self) -> int:
        return self.regularization.N

    @property
    def storage_cap(self) -> int:
        return self.n_cap if self.n_cap is not None else self.regularization.N


def make_config(
    N: int,
    dissipation: Union[DeterministicDissipation, NoiseDissipation, float],
    transfer: TransferSpec,
    forcing: bool = False,
    n_cap: Optional[int] = None,
) -> SimConfig:
    """Shorthand used by the algebra and statistics modules; a bare float means alpha"""
    if not isinstance(dissipation, (DeterministicDissipation, NoiseDissipation)):
        dissipation = DeterministicDissipation(alpha=float(dissipation))
    return SimConfig(
        transfer=transfer,
        regularization=RegularizationSpec(N=N, dissipation=dissipation),
        forcing=forcing,
        n_cap=n_cap,
    )


# ---------------------------------------------------------------------------
# State and ledger
# ---------------------------------------------------------------------------

@dataclass
class LatticeState:
    """Scale energies u_0..u_{n_cap} and the tick counter of the current run"""

    values: np.ndarray
    tick: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("state must be a non-empty 1-D vector", shape=list(values.shape))
        if not np.all(np.isfinite(values)):
            raise DomainError("state has non-finite components")
        if np.any(values < 0.0):
            raise DomainError("state has negative components", min=float(values.min()))
        if self.tick < 0:
            raise DomainError("tick must be non-negative", tick=self.tick)
        self.values = values

    @property
    def n_cap(self) -> int:
        return self.values.size - 1

    def total(self) -> float:
        return math.fsum(self.values)

    def time(self, N: int) -> float:
        return self.tick * 2.0 ** (-N)

    def padded(self, length: int) -> "LatticeState":
        """Copy zero-padded (never truncated) to at least `length` components"""
        if self.values.size >= length:
            return LatticeState(self.values.copy(), self.tick)
        out = np.zeros(length)
        out[: self.values.size] = self.values
        return LatticeState(out, self.tick)


@dataclass
class EnergyLedger:
    """Cumulative energy bookkeeping of a run"""

    dissipated: float = 0.0
    injected: float = 0.0
    truncated: float = 0.0

    def __add__(self, other: "EnergyLedger") -> "EnergyLedger":
        return EnergyLedger(
            self.dissipated + other.dissipated,
            self.injected + other.injected,
            self.truncated + other.truncated,
        )

    def residual(self, initial_total: float, current_total: float) -> float:
        """total + dissipated + truncated - injected - initial (zero when energy balances)"""
        return (current_total + self.dissipated + self.truncated - self.injected) - initial_total

    def as_dict(self, initial_total: Optional[float] = None) -> dict:
        data = {
            "dissipated": self.dissipated,
            "injected": self.injected,
            "truncated": self.truncated,
        }
        if initial_total is not None:
            data["initial_total"] = initial_total
        return data


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _transfer(code, p, u, v):
    if code == 0:
        if v > 0.0:
            return 0.3 - 0.1 * math.cos(p * math.exp(-u / v))
        return 0.2
    if v > 0.0:
        return 0.4 - 0.3 * math.cos(p * math.exp(-u / v) - 0.5 * p)
    return 0.4 - 0.3 * math.cos(0.5 * p)


@njit(cache=True, nogil=True)
def _first_due_scale(k, N):
    if k == 0:
        return 0
    v = 0
    while v < N and (k & 1) == 0:
        k >>= 1
        v += 1
    return N - v


@njit(cache=True, nogil=True)
def _advance(u, k0, n_ticks, N, code, p, alphas, forcing, ledger, f_buf,
             rec_scales, rec_out, rec_pos, acc, acc_comp, acc_counts):
    """Advance `u` in place by n_ticks; returns -1 or the tick of the first non-finite value.

    ledger = [dissipated, injected]. rec_* capture pre-tick values of probed scales
    at their native times; acc/acc_comp hold compensated sums of u_n**q, q = 1..acc.shape[1].
    """
    n_alpha = alphas.shape[0]
    n_rec = rec_scales.shape[0]
    n_acc = min(acc.shape[0], N + 1)
    q_max = acc.shape[1]
    for j in range(n_ticks):
        k = k0 + j
        n_min = _first_due_scale(k, N)

        for r in range(n_rec):
            s = rec_scales[r]
            if s >= n_min:
                rec_out[r, rec_pos[r]] = u[s]
                rec_pos[r] += 1

        for s in range(n_min, n_acc):
            x = u[s]
            xq = 1.0
            for q in range(q_max):
                xq *= x
                y = xq - acc_comp[s, q]
                t = acc[s, q] + y
                acc_comp[s, q] = (t - acc[s, q]) - y
                acc[s, q] = t
            acc_counts[s] += 1

        for n in range(n_min, N):
            f_buf[n] = _transfer(code, p, u[n], u[n + 1])
        if n_alpha > 1:
            f_buf[N] = alphas[j]
        else:
            f_buf[N] = alphas[0]
        ledger[0] += f_buf[N] * u[N]

        for n in range(N, n_min, -1):
            u[n] = (1.0 - f_buf[n]) * u[n] + f_buf[n - 1] * u[n - 1]
            if not math.isfinite(u[n]):
                return k
        u[n_min] = (1.0 - f_buf[n_min]) * u[n_min]
        if forcing and n_min == 0:
            u[0] += 1.0
            ledger[1] += 1.0
        if not math.isfinite(u[n_min]):
            return k
    return -1


_NO_REC_SCALES = np.zeros(0, dtype=np.int64)
_NO_REC_OUT = np.zeros((0, 0))
_NO_REC_POS = np.zeros(0, dtype=np.int64)
_NO_ACC = np.zeros((0, 0))
_NO_COUNTS = np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# Integrator
# ---------------------------------------------------------------------------

class LatticeIntegrator:
    """Runs the tick kernel for one SimConfig; holds only immutable scratch sizing"""

    def __init__(self, config: SimConfig):
        self.config = config
        self.N = config.N
        self.code = config.transfer.family.code
        self.p = float(config.transfer.p)
        self.forcing = bool(config.forcing)
        dissipation = config.regularization.dissipation
        self._constant_alpha = (
            np.array([dissipation.alpha]) if isinstance(dissipation, DeterministicDissipation) else None
        )

    @property
    def ticks_per_unit(self) -> int:
        return 1 << self.N

    def storage_length(self, state: LatticeState) -> int:
        return max(self.config.storage_cap, state.n_cap, self.N) + 1

    def prepare(self, state: LatticeState) -> Tuple[np.ndarray, float]:
        """Working copy of the state, with components beyond N zeroed and their energy returned"""
        u = state.padded(self.storage_length(state)).values
        tail = u[self.N + 1:]
        truncated = math.fsum(tail) if tail.size else 0.0
        if truncated > 0.0:
            logger.debug(f"Truncating {truncated:.3e} energy beyond viscous scale N={self.N}")
            tail[:] = 0.0
        return u, truncated

    def draw_alphas(self, n_ticks: int, rng: Optional[np.random.Generator]) -> np.ndarray:
        """Dissipation fractions for the next n_ticks updates of the viscous scale"""
        if self._constant_alpha is not None:
            return self._constant_alpha
        if rng is None:
            raise DomainError("noise dissipation requires a random stream")
        noise = self.config.regularization.dissipation
        return rng.uniform(noise.lo, noise.hi, size=n_ticks)

    def run(
        self,
        u: np.ndarray,
        k0: int,
        n_ticks: int,
        rng: Optional[np.random.Generator],
        ledger: np.ndarray,
        rec_scales: np.ndarray = _NO_REC_SCALES,
        rec_out: np.ndarray = _NO_REC_OUT,
        rec_pos: np.ndarray = _NO_REC_POS,
        acc: np.ndarray = _NO_ACC,
        acc_comp: np.ndarray = _NO_ACC,
        acc_counts: np.ndarray = _NO_COUNTS,
    ) -> None:
        """Advance the working vector in place; raises NumericFault with the tick index"""
        f_buf = np.zeros(self.N + 1)
        alphas = self.draw_alphas(n_ticks, rng)
        fault = _advance(
            u, np.int64(k0), np.int64(n_ticks), np.int64(self.N), np.int64(self.code), self.p,
            alphas, self.forcing, ledger, f_buf,
            rec_scales, rec_out, rec_pos, acc, acc_comp, acc_counts,
        )
        if fault >= 0:
            raise NumericFault(f"non-finite energy at tick {fault}", tick=int(fault))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def transfer_fraction(spec: TransferSpec, u: float, v: float) -> float:
    """Fraction of energy u handed to the next scale when the next scale holds v"""
    if not (math.isfinite(u) and math.isfinite(v)):
        raise DomainError("transfer fraction needs finite energies", u=u, v=v)
    if u < 0.0 or v < 0.0:
        raise DomainError("transfer fraction needs non-negative energies", u=u, v=v)
    return float(_transfer(spec.family.code, float(spec.p), float(u), float(v)))


def due_scales(k: int, N: int) -> int:
    """Smallest scale updating at tick k; scales n_min..N all update"""
    if k < 0:
        raise DomainError("tick index must be non-negative", k=k)
    return int(_first_due_scale(np.int64(k), np.int64(N)))


def advance(
    state: LatticeState,
    config: SimConfig,
    n_ticks: int,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[LatticeState, EnergyLedger]:
    """Apply n_ticks ticks; returns the new state and the ledger delta of those ticks"""
    integrator = LatticeIntegrator(config)
    u, truncated = integrator.prepare(state)
    ledger = np.zeros(2)
    integrator.run(u, state.tick, n_ticks, rng, ledger)
    return (
        LatticeState(u, state.tick + n_ticks),
        EnergyLedger(dissipated=float(ledger[0]), injected=float(ledger[1]), truncated=truncated),
    )


def tick(
    state: LatticeState,
    config: SimConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[LatticeState, EnergyLedger]:
    """One snapshot-synchronous tick of size tau_N"""
    return advance(state, config, 1, rng)


def step_unit_interval(
    a: LatticeState,
    config: SimConfig,
    rng: Optional[np.random.Generator] = None,
) -> LatticeState:
    """u(1) from u(0) = a: the flow map (deterministic) or one kernel sample (noise)"""
    ticks = 1 << config.N
    if a.tick % ticks:
        raise DomainError("state is not at an integer time", tick=a.tick, N=config.N)
    out, _ = advance(a, config, ticks, rng)
    return out


class ProbeStatistic(str, Enum):
    """What simulate keeps for a probed scale"""

    RAW = "raw"
    MEAN = "mean"


@dataclass
class ProbeRecord:
    scale: int
    statistic: ProbeStatistic
    times: np.ndarray
    values: np.ndarray


@dataclass
class SimulationResult:
    final: LatticeState
    ledger: EnergyLedger
    initial_total: float
    records: List[ProbeRecord] = field(default_factory=list)
    max_relative_residual: float = 0.0

    def record(self, scale: int, statistic: Union[str, ProbeStatistic] = ProbeStatistic.RAW) -> ProbeRecord:
        statistic = ProbeStatistic(statistic)
        for rec in self.records:
            if rec.scale == scale and rec.statistic is statistic:
                return rec
        raise KeyError((scale, statistic.value))


def simulate(
    a: LatticeState,
    config: SimConfig,
    t_end: int,
    probes: Sequence[Tuple[int, Union[str, ProbeStatistic]]] = (),
    rng: Optional[np.random.Generator] = None,
) -> SimulationResult:
    """Run t_end unit times, streaming probed scales at their native update times"""
    if t_end < 1:
        raise DomainError("t_end must be at least 1", t_end=t_end)
    N = config.N
    parsed = [(int(s), ProbeStatistic(stat)) for s, stat in probes]
    for s, _ in parsed:
        if not 0 <= s <= N:
            raise DomainError("probe scale outside 0..N", scale=s, N=N)

    integrator = LatticeIntegrator(config)
    u, truncated = integrator.prepare(a)
    initial_total = a.total()
    ledger = np.zeros(2)

    raw_scales = sorted({s for s, stat in parsed if stat is ProbeStatistic.RAW})
    rec_scales = np.array(raw_scales, dtype=np.int64)
    chunk = 1 << max(raw_scales) if raw_scales else 0
    rec_out = np.zeros((len(raw_scales), chunk))
    rec_pos = np.zeros(len(raw_scales), dtype=np.int64)
    raw_series = {s: [] for s in raw_scales}

    mean_scales = [s for s, stat in parsed if stat is ProbeStatistic.MEAN]
    n_acc = max(mean_scales) + 1 if mean_scales else 0
    acc = np.zeros((n_acc, 1))
    acc_comp = np.zeros((n_acc, 1))
    acc_counts = np.zeros(n_acc, dtype=np.int64)

    k = a.tick
    worst = 0.0
    scale_total = max(initial_total, 1.0)
    for t in range(t_end):
        rec_pos[:] = 0
        integrator.run(
            u, k, integrator.ticks_per_unit, rng, ledger,
            rec_scales, rec_out, rec_pos, acc, acc_comp, acc_counts,
        )
        k += integrator.ticks_per_unit
        for r, s in enumerate(raw_scales):
            raw_series[s].append(rec_out[r, : rec_pos[r]].copy())
        residual = (math.fsum(u) + ledger[0] + truncated - ledger[1]) - initial_total
        worst = max(worst, abs(residual) / scale_total / (t + 1))

    records: List[ProbeRecord] = []
    for s, stat in parsed:
        if stat is ProbeStatistic.RAW:
            values = np.concatenate(raw_series[s] + [u[s: s + 1]])
            times = np.arange(values.size) * 2.0 ** (-s) + a.tick * 2.0 ** (-N)
            records.append(ProbeRecord(s, stat, times, values))
        else:
            mean = acc[s, 0] / acc_counts[s] if acc_counts[s] else 0.0
            records.append(ProbeRecord(s, stat, np.array([float(t_end)]), np.array([mean])))

    result = SimulationResult(
        final=LatticeState(u, k),
        ledger=EnergyLedger(float(ledger[0]), float(ledger[1]), truncated),
        initial_total=initial_total,
        records=records,
        max_relative_residual=worst,
    )
    if worst > CONSERVATION_RTOL:
        logger.warning(f"Energy residual {worst:.2e} per unit time exceeds {CONSERVATION_RTOL:.0e}")
    logger.info(f"Simulated {t_end} unit time(s) at N={N}; ledger {result.ledger.as_dict(initial_total)}")
    return result


def decay_exponent(values: Sequence[float], n_lo: int = 1, n_hi: Optional[int] = None) -> Optional[float]:
    """Exponent h of a_n ~ tau_n**h fitted over the positive components n_lo..n_hi"""
    values = np.asarray(values, dtype=np.float64)
    n = np.arange(values.size)
    mask = (n >= n_lo) & (values > 0.0)
    if n_hi is not None:
        mask &= n <= n_hi
    if mask.sum() < 2:
        return None
    slope, _ = np.polyfit(n[mask], np.log2(values[mask]), 1)
    return float(-slope)
