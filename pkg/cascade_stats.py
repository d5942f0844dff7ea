"""
Forced steady-state statistics: structure functions S_p(l_n), scaling exponents zeta_p
and the energy-flux balance of the cascade.

Averages are accumulated inside the tick kernel at each scale's native update times,
so no trajectory is ever stored.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from errors import DomainError, InsufficientScalesError
from flow_algebra import VectorLike, as_vector
from lattice import CONSERVATION_RTOL, EnergyLedger, LatticeIntegrator, LatticeState, SimConfig

logger = logging.getLogger(__name__)

MIN_WINDOW = 100
MIN_TRANSIENT = 10
MIN_FIT_SCALES = 4
FLUX_TOLERANCE = 0.03
STABILITY_TOLERANCE = 0.02


@dataclass
class WindowLedger:
    """Energy bookkeeping restricted to the averaging window"""

    window: float
    injected: float
    dissipated: float
    truncated: float
    total_start: float
    total_end: float

    @property
    def injection_rate(self) -> float:
        return self.injected / self.window

    @property
    def dissipation_rate(self) -> float:
        return self.dissipated / self.window

    def identity_residual(self) -> float:
        """(injected - dissipated - truncated) - (total_end - total_start)"""
        return (self.injected - self.dissipated - self.truncated) - (self.total_end - self.total_start)

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "injected": self.injected,
            "dissipated": self.dissipated,
            "truncated": self.truncated,
            "total_start": self.total_start,
            "total_end": self.total_end,
            "identity_residual": self.identity_residual(),
        }


@dataclass
class StructureFunctionTable:
    """S_p(l_n) = time average of u_n**p, p = 1..p_max, with the two window halves kept apart"""

    values: np.ndarray
    counts: np.ndarray
    halves: Optional[np.ndarray] = None
    window_ledger: Optional[WindowLedger] = None
    run_ledger: Optional[EnergyLedger] = None
    initial_total: float = 0.0

    @classmethod
    def from_values(cls, values: np.ndarray) -> "StructureFunctionTable":
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, counts=np.ones(values.shape[0], dtype=np.int64))

    @property
    def scales(self) -> np.ndarray:
        return np.arange(self.values.shape[0])

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, self.values.shape[1] + 1)

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    def S(self, p: int) -> np.ndarray:
        return self.values[:, p - 1]

    def half_differences(self, n_range: Optional[Tuple[int, int]] = None) -> List[float]:
        """Largest relative gap between the window halves for each order p; the convergence diagnostic"""
        if self.halves is None:
            return [0.0] * self.values.shape[1]
        lo, hi = n_range or (0, self.N)
        first, second = self.halves[0, lo: hi + 1], self.halves[1, lo: hi + 1]
        scale = np.maximum(np.abs(self.values[lo: hi + 1]), 1e-300)
        return np.max(np.abs(first - second) / scale, axis=0).tolist()

    def half_difference(self, n_range: Optional[Tuple[int, int]] = None) -> float:
        return float(max(self.half_differences(n_range)))

    def to_frame(self) -> pd.DataFrame:
        n, p = np.meshgrid(self.scales, self.orders, indexing="ij")
        return pd.DataFrame({"n": n.ravel(), "p": p.ravel(), "S_p": self.values.ravel()})


def forced_steady_run(
    config: SimConfig,
    a: VectorLike,
    transient: int = 100,
    window: int = 40000,
    p_max: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> StructureFunctionTable:
    """Discard `transient` unit times, then average u_n**p over `window` unit times"""
    if window < MIN_WINDOW:
        raise DomainError(f"averaging window must be at least {MIN_WINDOW} unit times", window=window)
    if transient < MIN_TRANSIENT:
        raise DomainError(f"transient must be at least {MIN_TRANSIENT} unit times", transient=transient)
    if p_max < 1:
        raise DomainError("p_max must be positive", p_max=p_max)
    if not config.forcing:
        logger.warning("Steady-state statistics requested with forcing off; averages decay to zero")

    N = config.N
    integrator = LatticeIntegrator(config)
    state = LatticeState(as_vector(a))
    u, truncated = integrator.prepare(state)
    initial_total = state.total()
    ledger = np.zeros(2)
    ticks = integrator.ticks_per_unit

    k = 0
    for _ in range(transient):
        integrator.run(u, k, ticks, rng, ledger)
        k += ticks
    total_start = math.fsum(u)
    start_ledger = ledger.copy()
    logger.info(f"Transient of {transient} unit time(s) done at N={N}; total energy {total_start:.6g}")

    sums = np.zeros((2, N + 1, p_max))
    counts = np.zeros((2, N + 1), dtype=np.int64)
    first = window // 2
    for half, length in enumerate((first, window - first)):
        acc = np.zeros((N + 1, p_max))
        acc_comp = np.zeros((N + 1, p_max))
        for _ in range(length):
            integrator.run(
                u, k, ticks, rng, ledger,
                acc=acc, acc_comp=acc_comp, acc_counts=counts[half],
            )
            k += ticks
        sums[half] = acc

    halves = sums / np.maximum(counts, 1)[:, :, None]
    total_counts = counts.sum(axis=0)
    values = sums.sum(axis=0) / np.maximum(total_counts, 1)[:, None]

    window_ledger = WindowLedger(
        window=float(window),
        injected=float(ledger[1] - start_ledger[1]),
        dissipated=float(ledger[0] - start_ledger[0]),
        truncated=0.0,
        total_start=total_start,
        total_end=math.fsum(u),
    )
    run_ledger = EnergyLedger(dissipated=float(ledger[0]), injected=float(ledger[1]), truncated=truncated)
    residual = abs(run_ledger.residual(initial_total, math.fsum(u)))
    if residual > CONSERVATION_RTOL * max(initial_total, 1.0) * (transient + window):
        logger.warning(f"Energy residual {residual:.3e} over the forced run")
    logger.info(
        f"Forced run N={N} window={window}: dissipation rate {window_ledger.dissipation_rate:.6f}, "
        f"injection rate {window_ledger.injection_rate:.6f}"
    )
    return StructureFunctionTable(
        values=values,
        counts=total_counts,
        halves=halves,
        window_ledger=window_ledger,
        run_ledger=run_ledger,
        initial_total=initial_total,
    )


def default_inertial_range(N: int) -> Tuple[int, int]:
    return 3, N - 5


@dataclass
class ZetaFit:
    orders: List[int]
    zeta: List[float]
    stderr: List[float]
    r_squared: List[float]
    inertial_range: Tuple[int, int]

    def exponent(self, p: int) -> float:
        return self.zeta[self.orders.index(p)]

    def concave(self) -> bool:
        """zeta_{2p} < 2 zeta_p wherever both orders were fitted"""
        checks = [self.exponent(2 * p) < 2 * self.exponent(p) for p in self.orders if 2 * p in self.orders]
        return bool(checks) and all(checks)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"p": self.orders, "zeta": self.zeta, "stderr": self.stderr})


def fit_zeta(table: StructureFunctionTable, inertial_range: Optional[Tuple[int, int]] = None) -> ZetaFit:
    """Least-squares slope of log S_p against log l_n per order, over the inertial range"""
    lo, hi = inertial_range or default_inertial_range(table.N)
    if lo < 0 or hi > table.N or hi < lo:
        raise DomainError("inertial range outside the available scales", range=[lo, hi], N=table.N)
    n = np.arange(lo, hi + 1)
    if n.size < MIN_FIT_SCALES:
        raise InsufficientScalesError(
            f"power-law fit needs at least {MIN_FIT_SCALES} scales", range=[lo, hi]
        )
    log_l = -n * math.log(2.0)
    zeta, errors, r2 = [], [], []
    for p in table.orders:
        S = table.S(int(p))[lo: hi + 1]
        if np.any(S <= 0.0):
            raise InsufficientScalesError("structure function vanishes inside the inertial range", p=int(p))
        fit = stats.linregress(log_l, np.log(S))
        zeta.append(float(fit.slope))
        errors.append(float(fit.stderr))
        r2.append(float(fit.rvalue ** 2))
    logger.info(f"Scaling exponents over n={lo}..{hi}: {[round(z, 4) for z in zeta]}")
    return ZetaFit(
        orders=[int(p) for p in table.orders],
        zeta=zeta,
        stderr=errors,
        r_squared=r2,
        inertial_range=(int(lo), int(hi)),
    )


@dataclass
class StabilityReport:
    """Change of each zeta_p when the averaging window is lengthened"""

    window: int
    long_window: int
    orders: List[int]
    zeta: List[float]
    long_zeta: List[float]
    relative_change: List[float]
    tolerance: float = STABILITY_TOLERANCE

    @property
    def stable(self) -> bool:
        return all(c <= self.tolerance for c in self.relative_change)

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "long_window": self.long_window,
            "relative_change": dict(zip(self.orders, self.relative_change)),
            "tolerance": self.tolerance,
            "stable": self.stable,
        }


def window_stability(
    short: ZetaFit,
    long: ZetaFit,
    window: int,
    long_window: int,
    tolerance: float = STABILITY_TOLERANCE,
) -> StabilityReport:
    """Relative change |zeta_p(long) - zeta_p(short)| / |zeta_p(long)| per order"""
    if short.orders != long.orders or short.inertial_range != long.inertial_range:
        raise DomainError(
            "stability comparison needs fits over the same orders and inertial range",
            short=list(short.inertial_range),
            long=list(long.inertial_range),
        )
    changes = [abs(b - a) / max(abs(b), 1e-12) for a, b in zip(short.zeta, long.zeta)]
    report = StabilityReport(
        window=int(window),
        long_window=int(long_window),
        orders=list(short.orders),
        zeta=list(short.zeta),
        long_zeta=list(long.zeta),
        relative_change=changes,
        tolerance=tolerance,
    )
    if not report.stable:
        worst = max(range(len(changes)), key=changes.__getitem__)
        logger.warning(
            f"zeta_{report.orders[worst]} moves {changes[worst]:.2%} between windows {window} and {long_window}"
        )
    return report


@dataclass
class FluxReport:
    dissipation_rate: float
    injection_rate: float
    relative_imbalance: Optional[float]
    identity_residual: float
    flux_proxy: List[float] = field(default_factory=list)
    flux_slope: Optional[float] = None
    inertial_range: Optional[Tuple[int, int]] = None
    balanced: bool = False

    def as_dict(self) -> dict:
        return {
            "dissipation_rate": self.dissipation_rate,
            "injection_rate": self.injection_rate,
            "relative_imbalance": self.relative_imbalance,
            "identity_residual": self.identity_residual,
            "flux_proxy": self.flux_proxy,
            "flux_slope": self.flux_slope,
            "inertial_range": list(self.inertial_range) if self.inertial_range else None,
            "balanced": self.balanced,
        }


def flux_balance_check(
    ledger: WindowLedger,
    window: Optional[float] = None,
    mean_energy: Optional[Sequence[float]] = None,
    inertial_range: Optional[Tuple[int, int]] = None,
    tolerance: float = FLUX_TOLERANCE,
) -> FluxReport:
    """Mean dissipation vs injection over the window, plus <u_n>/tau_n across the inertial range"""
    window = float(window or ledger.window)
    if window <= 0.0:
        raise DomainError("window must be positive", window=window)
    dissipation = ledger.dissipated / window
    injection = ledger.injected / window
    imbalance = abs(dissipation - injection) / injection if injection > 0.0 else None

    report = FluxReport(
        dissipation_rate=dissipation,
        injection_rate=injection,
        relative_imbalance=imbalance,
        identity_residual=ledger.identity_residual(),
        balanced=imbalance is not None and imbalance <= tolerance,
    )
    if mean_energy is not None:
        energy = np.asarray(mean_energy, dtype=np.float64)
        report.flux_proxy = (energy * 2.0 ** np.arange(energy.size)).tolist()
        lo, hi = inertial_range or default_inertial_range(energy.size - 1)
        n = np.arange(lo, hi + 1)
        if n.size >= 2 and np.all(energy[lo: hi + 1] > 0.0):
            fit = stats.linregress(-n * math.log(2.0), np.log(energy[lo: hi + 1]))
            report.flux_slope = float(fit.slope)
            report.inertial_range = (int(lo), int(hi))
    if imbalance is not None and not report.balanced:
        logger.warning(f"Dissipation rate {dissipation:.4f} differs from injection rate {injection:.4f} by {imbalance:.2%}")
    return report
