"""
Convergence analysis of the deterministic RG dynamics.

Cauchy differences of flow maps over consecutive viscous scales, the leading
eigenvalue rho and eigenvector psi, the regularization coefficients c_alpha,
perturbation growth in the chaotic regime and period-doubling scans over p.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from errors import DegenerateProbeError, DomainError
from flow_algebra import Simulator, VectorLike, as_vector
from lattice import TransferFamily, TransferSpec
from worker_pool import map_items

logger = logging.getLogger(__name__)

PROBE_COMPONENT = 4
DEGENERATE_PROBE = 1e-30
COLLAPSE_TOLERANCE = 0.02
SATURATION_FRACTION = 1e-3
REFERENCE_ALPHA = 0.25
COMPONENT_WINDOW = 8
MIN_GROWTH_WINDOW = 3
MIN_GROWTH_FIT = 4


# ---------------------------------------------------------------------------
# Flow-map evaluations
# ---------------------------------------------------------------------------

def _padded(a: VectorLike, length: int) -> np.ndarray:
    vector = as_vector(a)
    if vector.size >= length:
        return vector
    return np.concatenate([vector, np.zeros(length - vector.size)])


def flow_map_value(N: int, alpha: float, spec: TransferSpec, a: VectorLike, length: Optional[int] = None) -> np.ndarray:
    """phi^(N, alpha)(a) on a vector of at least N + 1 components"""
    vector = as_vector(a)
    length = max(vector.size, N + 1, length or 0)
    return Simulator(N, alpha, spec)(_padded(vector, length))


def flow_sequence(
    N_values: Iterable[int],
    alpha: float,
    spec: TransferSpec,
    a: VectorLike,
    length: Optional[int] = None,
    threads: Optional[int] = None,
) -> Dict[int, np.ndarray]:
    """phi^(N, alpha)(a) for each N, all on one common vector length"""
    N_values = sorted(set(int(N) for N in N_values))
    if not N_values:
        return {}
    vector = as_vector(a)
    length = max(vector.size, N_values[-1] + 2, length or 0)
    values = map_items(lambda N: flow_map_value(N, alpha, spec, vector, length), N_values, threads)
    logger.info(f"Evaluated {len(N_values)} flow map(s) N={N_values[0]}..{N_values[-1]} alpha={alpha} {spec.family.value} p={spec.p}")
    return dict(zip(N_values, values))


def cauchy_difference(N: int, alpha: float, spec: TransferSpec, a: VectorLike, length: Optional[int] = None) -> np.ndarray:
    """Delta u = phi^(N+1, alpha)(a) - phi^(N, alpha)(a)"""
    vector = as_vector(a)
    length = max(vector.size, N + 2, length or 0)
    return flow_map_value(N + 1, alpha, spec, vector, length) - flow_map_value(N, alpha, spec, vector, length)


def differences_from_sequence(states: Mapping[int, np.ndarray]) -> Dict[int, np.ndarray]:
    """Cauchy differences keyed by the lower N of each consecutive pair"""
    Ns = sorted(states)
    return {N: states[N + 1] - states[N] for N in Ns if N + 1 in states}


def cauchy_differences(
    N_values: Iterable[int],
    alpha: float,
    spec: TransferSpec,
    a: VectorLike,
    threads: Optional[int] = None,
) -> Dict[int, np.ndarray]:
    N_values = sorted(set(int(N) for N in N_values))
    states = flow_sequence(N_values + [N_values[-1] + 1], alpha, spec, a, threads=threads)
    return {N: d for N, d in differences_from_sequence(states).items() if N in N_values}


def successive_gaps(states: Mapping[int, np.ndarray], n_max: Optional[int] = None) -> List[float]:
    """Max-norm distance between the states of consecutive N, over components n <= n_max when given.

    The newly resolved viscous scale shrinks like 2**-N and dominates the full-vector norm.
    """
    stop = None if n_max is None else n_max + 1
    return [float(np.max(np.abs(d[:stop]))) for _, d in sorted(differences_from_sequence(states).items())]


# ---------------------------------------------------------------------------
# Eigenvalue and eigenvector
# ---------------------------------------------------------------------------

@dataclass
class RhoEstimate:
    rho: float
    uncertainty: float
    ratios: List[float]
    probe: int
    N_range: Optional[Tuple[int, int]] = None
    non_real_suspected: bool = False

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "uncertainty": self.uncertainty,
            "ratios": self.ratios,
            "probe": self.probe,
            "N_range": list(self.N_range) if self.N_range else None,
            "non_real_suspected": self.non_real_suspected,
        }


def _ordered_differences(
    differences: Union[Sequence[np.ndarray], Mapping[int, np.ndarray]],
) -> Tuple[List[np.ndarray], Optional[Tuple[int, int]]]:
    if isinstance(differences, Mapping):
        Ns = sorted(differences)
        if any(b - a != 1 for a, b in zip(Ns, Ns[1:])):
            raise DomainError("differences must cover consecutive N", N=Ns)
        return [np.asarray(differences[N], dtype=np.float64) for N in Ns], (Ns[0], Ns[-1]) if Ns else None
    return [np.asarray(d, dtype=np.float64) for d in differences], None


def estimate_rho(
    differences: Union[Sequence[np.ndarray], Mapping[int, np.ndarray]],
    probe: int = PROBE_COMPONENT,
    average: int = 1,
) -> RhoEstimate:
    """Ratio [Delta u^(N+1)]_n / [Delta u^(N)]_n at the probe component, taken at the largest N pair.

    `average` > 1 averages the ratios of that many trailing pairs. The uncertainty is the
    half-range of the last three ratios.
    """
    series, N_range = _ordered_differences(differences)
    if len(series) < 2:
        raise DomainError("need at least two consecutive differences", count=len(series))
    if any(probe >= d.size for d in series):
        raise DomainError("probe component outside the difference vectors", probe=probe)

    ratios: List[float] = []
    for N_index, (lo, hi) in enumerate(zip(series, series[1:])):
        if abs(lo[probe]) < DEGENERATE_PROBE:
            raise DegenerateProbeError(
                "probe component vanishes",
                probe=probe,
                N=N_range[0] + N_index if N_range else None,
                value=float(lo[probe]),
            )
        ratios.append(float(hi[probe] / lo[probe]))

    average = max(1, min(int(average), len(ratios)))
    rho = float(np.mean(ratios[-average:]))
    tail = ratios[-3:]
    spread = max(tail) - min(tail)
    non_real = len(tail) >= 2 and spread > abs(rho) / 2
    if non_real:
        logger.warning(f"Probe ratios do not settle ({tail}); eigenvalue may not be real")
    return RhoEstimate(
        rho=rho,
        uncertainty=spread / 2,
        ratios=ratios,
        probe=probe,
        N_range=N_range,
        non_real_suspected=non_real,
    )


def vector_ratio(differences: Mapping[int, np.ndarray], n_max: int = COMPONENT_WINDOW) -> float:
    """Least-squares rho with Delta^(N+1) ~ rho Delta^(N) over components n <= n_max"""
    series, _ = _ordered_differences(differences)
    num = math.fsum(float(np.dot(lo[: n_max + 1], hi[: n_max + 1])) for lo, hi in zip(series, series[1:]))
    den = math.fsum(float(np.dot(lo[: n_max + 1], lo[: n_max + 1])) for lo in series[:-1])
    if den < DEGENERATE_PROBE:
        raise DegenerateProbeError("differences vanish on the fitted components", n_max=n_max)
    return num / den


def estimate_eigenvector(delta_u: np.ndarray, rho: float, c_alpha: float, N: int) -> np.ndarray:
    """psi(a) ~ Delta u / (c_alpha (rho - 1) rho**N)"""
    if rho == 0.0 or rho == 1.0:
        raise DomainError("eigenvector rescaling needs rho not in {0, 1}", rho=rho)
    if c_alpha == 0.0:
        raise DomainError("eigenvector rescaling needs a non-zero coefficient")
    return np.asarray(delta_u, dtype=np.float64) / (c_alpha * (rho - 1.0) * rho ** N)


def fit_c_alpha(differences: Mapping[int, np.ndarray], psi: np.ndarray, rho: float, n_max: int = COMPONENT_WINDOW) -> float:
    """Scalar c minimizing sum_N |Delta^(N) - c (rho - 1) rho**N psi|^2 over n <= n_max"""
    psi = np.asarray(psi, dtype=np.float64)[: n_max + 1]
    num, den = [], []
    for N, delta in differences.items():
        x = (rho - 1.0) * rho ** N * psi
        num.append(float(np.dot(delta[: n_max + 1], x)))
        den.append(float(np.dot(x, x)))
    denominator = math.fsum(den)
    if denominator == 0.0:
        raise DegenerateProbeError("eigenvector vanishes on the fitted components", n_max=n_max)
    return math.fsum(num) / denominator


@dataclass
class EigenmodeEstimate:
    rho: float
    psi: np.ndarray
    c_by_alpha: Dict[float, float]
    probe_component: int
    N_range: Tuple[int, int]
    rho_probe: Optional[RhoEstimate] = None
    collapse_spread: float = 0.0
    universality_broken: bool = False
    curves: Dict[Tuple[int, float], np.ndarray] = field(default_factory=dict)
    differences: Dict[float, Dict[int, np.ndarray]] = field(default_factory=dict)

    def c_ratio(self, alpha: float, reference: float = REFERENCE_ALPHA) -> float:
        return self.c_by_alpha[alpha] / self.c_by_alpha[reference]


def eigenmode_analysis(
    spec: TransferSpec,
    a: VectorLike,
    alphas: Sequence[float] = (0.25, 0.75),
    N_values: Iterable[int] = range(12, 16),
    probe: int = PROBE_COMPONENT,
    reference_alpha: float = REFERENCE_ALPHA,
    n_max: int = COMPONENT_WINDOW,
    tolerance: float = COLLAPSE_TOLERANCE,
    rho: Optional[float] = None,
    threads: Optional[int] = None,
) -> EigenmodeEstimate:
    """rho, psi and c_alpha from Cauchy differences over (N, alpha), with the collapse spread of the rescaled curves"""
    N_values = sorted(set(int(N) for N in N_values))
    if len(N_values) < 2:
        raise DomainError("eigenmode analysis needs at least two N values", N=N_values)
    alphas = list(alphas)
    if reference_alpha not in alphas:
        alphas.insert(0, reference_alpha)

    differences = {alpha: cauchy_differences(N_values, alpha, spec, a, threads) for alpha in alphas}
    reference = differences[reference_alpha]

    rho_probe: Optional[RhoEstimate] = None
    try:
        rho_probe = estimate_rho(reference, probe)
    except DegenerateProbeError as e:
        logger.warning(f"Probe ratio unavailable: {e}")
    if rho is None:
        rho = vector_ratio(reference, n_max)

    rescaled = [estimate_eigenvector(d, rho, 1.0, N) for N, d in reference.items()]
    psi = np.mean(rescaled, axis=0)
    c_by_alpha = {alpha: fit_c_alpha(differences[alpha], psi, rho, n_max) for alpha in alphas}
    c_ref = c_by_alpha[reference_alpha]
    psi = psi * c_ref
    c_by_alpha = {alpha: c / c_ref for alpha, c in c_by_alpha.items()}

    curves: Dict[Tuple[int, float], np.ndarray] = {}
    scale = float(np.max(np.abs(psi[: n_max + 1])))
    spread = 0.0
    for alpha in alphas:
        for N, delta in differences[alpha].items():
            curve = estimate_eigenvector(delta, rho, c_by_alpha[alpha], N)
            curves[(N, alpha)] = curve
            if scale > 0.0:
                spread = max(spread, float(np.max(np.abs(curve[: n_max + 1] - psi[: n_max + 1]))) / scale)

    broken = spread > tolerance
    if broken:
        logger.warning(f"Eigenvector collapse spread {spread:.3%} exceeds {tolerance:.0%}; universality of the limit is broken")
    logger.info(f"Eigenmode rho={rho:.4f} c={ {k: round(v, 4) for k, v in c_by_alpha.items()} } spread={spread:.3%}")
    return EigenmodeEstimate(
        rho=float(rho),
        psi=psi,
        c_by_alpha=c_by_alpha,
        probe_component=probe,
        N_range=(N_values[0], N_values[-1]),
        rho_probe=rho_probe,
        collapse_spread=spread,
        universality_broken=broken,
        curves=curves,
        differences=differences,
    )


# ---------------------------------------------------------------------------
# Perturbation growth
# ---------------------------------------------------------------------------

@dataclass
class GrowthCurve:
    N_values: List[int]
    norms: List[float]
    delta_alpha: float
    loglog: List[Optional[float]] = field(default_factory=list)
    saturation_N: Optional[int] = None
    slope: Optional[float] = None
    r_squared: Optional[float] = None
    strictly_increasing: bool = False
    growth_onset_N: Optional[int] = None
    window: List[int] = field(default_factory=list)
    pre_saturation_slope: Optional[float] = None
    pre_saturation_r_squared: Optional[float] = None

    @property
    def pre_saturation(self) -> List[int]:
        return [N for N in self.N_values if self.saturation_N is None or N < self.saturation_N]

    @property
    def established(self) -> bool:
        """Growth holds strictly over at least MIN_GROWTH_WINDOW consecutive N before saturation"""
        return len(self.window) >= MIN_GROWTH_WINDOW

    @property
    def fit_supported(self) -> bool:
        return sum(self.loglog[self.N_values.index(N)] is not None for N in self.window) >= MIN_GROWTH_FIT

    def as_dict(self) -> dict:
        return {
            "saturation_N": self.saturation_N,
            "growth_onset_N": self.growth_onset_N,
            "growth_window": self.window,
            "loglog_slope": self.slope,
            "loglog_r_squared": self.r_squared,
            "pre_saturation_increasing": self.strictly_increasing,
            "pre_saturation_slope": self.pre_saturation_slope,
            "pre_saturation_r_squared": self.pre_saturation_r_squared,
        }


def growth_window(N_values: Sequence[int], norms: Sequence[float], saturation_N: Optional[int] = None) -> List[int]:
    """Trailing run of N before saturation over which the separation grows strictly.

    Separations can dip at small N before growth sets in; the run ends at the last
    pre-saturation N and extends back while each step still increases.
    """
    pre = [i for i, N in enumerate(N_values) if saturation_N is None or N < saturation_N]
    pre = [i for i in pre if norms[i] > 0.0]
    if not pre:
        return []
    start = len(pre) - 1
    while start > 0 and pre[start - 1] == pre[start] - 1 and norms[pre[start - 1]] < norms[pre[start]]:
        start -= 1
    return [int(N_values[i]) for i in pre[start:]]


def _loglog_fit(points: Sequence[Tuple[int, float]]) -> Tuple[Optional[float], Optional[float]]:
    if len(points) < 3:
        return None, None
    fit = stats.linregress([p[0] for p in points], [p[1] for p in points])
    return float(fit.slope), float(fit.rvalue ** 2)


def perturbation_growth(
    alpha: float,
    delta_alpha: float,
    spec: TransferSpec,
    a: VectorLike,
    N_values: Iterable[int],
    threads: Optional[int] = None,
    saturation: float = SATURATION_FRACTION,
) -> GrowthCurve:
    """||phi^(N, alpha + delta_alpha)(a) - phi^(N, alpha)(a)|| per N, with the loglog fit before saturation"""
    if delta_alpha < 0.0:
        raise DomainError("delta_alpha must be non-negative", delta_alpha=delta_alpha)
    N_values = sorted(set(int(N) for N in N_values))
    if not N_values:
        raise DomainError("perturbation growth needs at least one N")
    vector = as_vector(a)
    length = max(vector.size, N_values[-1] + 1)

    def separation(N: int) -> Tuple[float, float]:
        base = flow_map_value(N, alpha, spec, vector, length)
        if delta_alpha == 0.0:
            return 0.0, float(np.linalg.norm(base))
        moved = flow_map_value(N, alpha + delta_alpha, spec, vector, length)
        return float(np.linalg.norm(moved - base)), float(np.linalg.norm(base))

    pairs = map_items(separation, N_values, threads)
    norms = [p[0] for p in pairs]

    saturation_N = None
    for N, (norm, size) in zip(N_values, pairs):
        if norm > saturation * size:
            saturation_N = N
            break

    loglog: List[Optional[float]] = []
    for norm in norms:
        ratio = norm / delta_alpha if delta_alpha > 0.0 else 0.0
        loglog.append(math.log(math.log(ratio)) if ratio > 1.0 else None)

    curve = GrowthCurve(N_values=N_values, norms=norms, delta_alpha=delta_alpha, loglog=loglog, saturation_N=saturation_N)
    pre = [i for i, N in enumerate(N_values) if saturation_N is None or N < saturation_N]
    pre_norms = [norms[i] for i in pre]
    curve.strictly_increasing = len(pre_norms) >= 2 and all(b > x for x, b in zip(pre_norms, pre_norms[1:]))
    curve.pre_saturation_slope, curve.pre_saturation_r_squared = _loglog_fit(
        [(N_values[i], loglog[i]) for i in pre if loglog[i] is not None]
    )

    curve.window = growth_window(N_values, norms, saturation_N) if delta_alpha > 0.0 else []
    curve.growth_onset_N = curve.window[0] if curve.window else None
    curve.slope, curve.r_squared = _loglog_fit(
        [(N, loglog[N_values.index(N)]) for N in curve.window if loglog[N_values.index(N)] is not None]
    )
    if not curve.strictly_increasing and curve.window:
        logger.warning(f"Separation dips before N={curve.growth_onset_N}; growth established over N={curve.window}")
    logger.info(f"Growth curve over N={N_values[0]}..{N_values[-1]}: saturation at {saturation_N}, loglog R^2={curve.r_squared}")
    return curve


# ---------------------------------------------------------------------------
# Period doubling
# ---------------------------------------------------------------------------

@dataclass
class BifurcationPoint:
    p: float
    u_N: np.ndarray
    u_N1: np.ndarray
    delta_sq: float
    rho: Optional[float]


@dataclass
class BifurcationScan:
    p_grid: List[float]
    N: int
    probe: int
    points: List[BifurcationPoint]
    p_pd_rho: Optional[float] = None
    p_pd_onset: Optional[float] = None
    branch_slope: Optional[float] = None
    branch_r_squared: Optional[float] = None
    onset_window: Tuple[float, float] = (math.nan, math.nan)

    @property
    def delta_sq(self) -> List[float]:
        return [pt.delta_sq for pt in self.points]

    @property
    def rho_of_p(self) -> List[Optional[float]]:
        return [pt.rho for pt in self.points]


def rho_crossing(p_grid: Sequence[float], rho_of_p: Sequence[Optional[float]], level: float = -1.0) -> Optional[float]:
    """First p where rho(p) crosses `level` downward, by linear interpolation between bracketing grid points"""
    for (p0, r0), (p1, r1) in zip(zip(p_grid, rho_of_p), zip(p_grid[1:], rho_of_p[1:])):
        if r0 is None or r1 is None or not (math.isfinite(r0) and math.isfinite(r1)):
            continue
        if r0 > level >= r1:
            if r1 == r0:
                return float(p1)
            return float(p0 + (level - r0) * (p1 - p0) / (r1 - r0))
    return None


def delta_sq_onset(
    p_grid: Sequence[float],
    delta_sq: Sequence[float],
    fraction: float = 0.05,
) -> Tuple[Optional[float], Optional[float], Optional[float], Tuple[float, float]]:
    """Zero of the linear fit of Delta^2 vs p over the trailing window where Delta^2 >= fraction * max"""
    values = np.asarray(delta_sq, dtype=np.float64)
    if values.size < 3 or not np.any(values > 0.0):
        return None, None, None, (math.nan, math.nan)
    threshold = fraction * float(values.max())
    start = values.size
    while start > 0 and values[start - 1] >= threshold:
        start -= 1
    window = slice(start, values.size)
    ps = np.asarray(p_grid, dtype=np.float64)[window]
    if ps.size < 3:
        return None, None, None, (float(ps[0]), float(ps[-1]))
    fit = stats.linregress(ps, values[window])
    onset = -fit.intercept / fit.slope if fit.slope > 0.0 else None
    return (
        float(onset) if onset is not None else None,
        float(fit.slope),
        float(fit.rvalue ** 2),
        (float(ps[0]), float(ps[-1])),
    )


def bifurcation_scan(
    p_grid: Sequence[float],
    family: Union[str, TransferFamily],
    alpha: float,
    a: VectorLike,
    N: int,
    probe: int = PROBE_COMPONENT,
    onset_fraction: float = 0.05,
    threads: Optional[int] = None,
) -> BifurcationScan:
    """u_probe(1) at N and N+1 across p, with p_pd from the rho = -1 crossing and from Delta^2 onset"""
    p_grid = [float(p) for p in p_grid]
    if any(b <= x for x, b in zip(p_grid, p_grid[1:])):
        raise DomainError("p grid must be strictly increasing")
    if N < 2:
        raise DomainError("bifurcation scan needs N >= 2", N=N)
    family = TransferFamily(family)
    vector = as_vector(a)

    def scan_point(p: float) -> BifurcationPoint:
        spec = TransferSpec(family=family, p=p)
        states = {n: flow_map_value(n, alpha, spec, vector, N + 2) for n in range(N - 2, N + 2)}
        rho: Optional[float]
        try:
            rho = estimate_rho(differences_from_sequence(states), probe).rho
        except DegenerateProbeError:
            rho = None
        gap = float(states[N + 1][probe] - states[N][probe])
        return BifurcationPoint(p=p, u_N=states[N], u_N1=states[N + 1], delta_sq=gap * gap, rho=rho)

    points = map_items(scan_point, p_grid, threads)
    scan = BifurcationScan(p_grid=p_grid, N=N, probe=probe, points=points)
    scan.p_pd_rho = rho_crossing(p_grid, scan.rho_of_p)
    scan.p_pd_onset, scan.branch_slope, scan.branch_r_squared, scan.onset_window = delta_sq_onset(
        p_grid, scan.delta_sq, onset_fraction
    )
    if scan.p_pd_rho is not None and scan.p_pd_onset is not None and abs(scan.p_pd_rho - scan.p_pd_onset) > 0.15:
        logger.warning(f"p_pd estimators disagree: rho crossing {scan.p_pd_rho:.3f}, Delta^2 onset {scan.p_pd_onset:.3f}")
    logger.info(f"Bifurcation scan N={N}: p_pd(rho)={scan.p_pd_rho} p_pd(onset)={scan.p_pd_onset} R^2={scan.branch_r_squared}")
    return scan


@dataclass
class ParitySplit:
    even_N: int
    odd_N: int
    gap: float
    within_parity: float
    separated: bool


def parity_split(states: Mapping[int, np.ndarray], probe: int = PROBE_COMPONENT, factor: float = 10.0) -> ParitySplit:
    """Compare the even-N and odd-N limits at the probe component against the within-parity Cauchy difference"""
    Ns = sorted(states)
    evens = [N for N in Ns if N % 2 == 0]
    odds = [N for N in Ns if N % 2 == 1]
    if len(evens) < 2 or len(odds) < 2:
        raise DomainError("parity split needs two even and two odd N values", N=Ns)
    even_N, odd_N = evens[-1], odds[-1]
    gap = abs(float(states[even_N][probe] - states[odd_N][probe]))
    within = max(
        abs(float(states[evens[-1]][probe] - states[evens[-2]][probe])),
        abs(float(states[odds[-1]][probe] - states[odds[-2]][probe])),
    )
    return ParitySplit(even_N=even_N, odd_N=odd_N, gap=gap, within_parity=within, separated=gap > factor * within)
