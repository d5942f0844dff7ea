"""
Stochastic RG: Monte Carlo flow kernels under viscous-scale noise.

Every sample draws from its own counter-based stream keyed by (seed, sample index, slot),
so sample sets do not depend on how the work is split across threads.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize, stats

from config import settings
from errors import DomainError, EmptySampleError, GridMismatchError, NumericFault
from flow_algebra import FlowMap, Simulator, VectorLike, as_vector, rg_apply
from lattice import MU_TILDE, NoiseDissipation, TransferFamily, TransferSpec
from worker_pool import run_indexed

logger = logging.getLogger(__name__)

DEFAULT_COMPONENTS = (0, 1, 2, 3, 4)
KS_TOLERANCE = 0.03
SEPARATION_FACTOR = 5.0
KS_LEVEL = 0.01
RHO_BOUNDS = (-1.0, -0.05)
RHO_XATOL = 1e-4
COLLAPSE_FAILURE = 0.5
SIGN_PREFERENCE = 0.5


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------

def sample_stream(seed: int, index: int, slot: int = 0) -> np.random.Generator:
    """Independent Philox stream for one sample index and draw slot"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index), int(slot)])))


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for a sub-experiment keyed by non-negative integers"""
    return int(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]).generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """Sampled components u_n(1) of one kernel, one row per sample index"""

    values: np.ndarray
    components: Tuple[int, ...]
    seed: int
    N: int
    noise: NoiseDissipation
    transfer: TransferSpec
    initial_id: str = "a"
    source: str = "kernel"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(self.components))
        self.components = tuple(int(n) for n in self.components)
        if self.values.shape[0] < 1:
            raise EmptySampleError("sample set has no samples")
        if np.any(self.values < 0.0):
            raise DomainError("sampled energies must be non-negative")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def column(self, n: int) -> np.ndarray:
        if n not in self.components:
            raise DomainError("component not sampled", component=n, components=list(self.components))
        return self.values[:, self.components.index(n)]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f"u{n}" for n in self.components])
        frame.insert(0, "sample_id", np.arange(self.M))
        return frame

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "N": self.N,
            "noise": {"lo": self.noise.lo, "hi": self.noise.hi},
            "family": self.transfer.family.value,
            "p": self.transfer.p,
            "M": self.M,
            "initial_id": self.initial_id,
            "source": self.source,
        }


class KernelSampler:
    """Draws u(1) ~ Phi^(N)(. | a); each call consumes the stream it is given"""

    def __init__(self, N: int, noise: NoiseDissipation, spec: TransferSpec):
        self.N = int(N)
        self.noise = noise
        self.spec = spec
        self.flow_map = Simulator(N, noise, spec)

    def __repr__(self) -> str:
        return f"KernelSampler(N={self.N}, noise=[{self.noise.lo}, {self.noise.hi}], {self.spec.family.value} p={self.spec.p})"

    def __call__(self, a: VectorLike, rng: np.random.Generator) -> np.ndarray:
        return self.flow_map(a, rng)


def _sample_length(a: np.ndarray, N: int, components: Sequence[int]) -> int:
    return max(a.size, N + 2, max(components) + 1)


def _pad(a: np.ndarray, length: int) -> np.ndarray:
    if a.size >= length:
        return a
    return np.concatenate([a, np.zeros(length - a.size)])


def sample_kernel(
    a: VectorLike,
    N: int,
    noise: NoiseDissipation,
    spec: TransferSpec,
    M: int,
    seed: int,
    components: Sequence[int] = DEFAULT_COMPONENTS,
    threads: Optional[int] = None,
    initial_id: str = "a",
) -> SampleSet:
    """M independent draws of u(1) from the noise-regularized flow at viscous scale N"""
    if M < 1:
        raise DomainError("sample count must be at least 1", M=M)
    components = tuple(int(n) for n in components)
    vector = as_vector(a)
    vector = _pad(vector, _sample_length(vector, N, components))
    sampler = KernelSampler(N, noise, spec)
    picks = list(components)

    def draw(i: int) -> np.ndarray:
        try:
            return sampler(vector, sample_stream(seed, i))[picks]
        except NumericFault as e:
            raise e.with_sample(i) from e

    rows = run_indexed(draw, M, threads)
    logger.info(f"Sampled {M} draw(s) of {sampler!r} seed={seed}")
    return SampleSet(np.vstack(rows), components, seed, N, noise, spec, initial_id)


def stochastic_rg_apply(
    sampler: Union[KernelSampler, FlowMap],
    a: VectorLike,
    spec: TransferSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """One sample of R[Phi](a); the two inner kernel draws use independent child streams"""
    phi = sampler.flow_map if isinstance(sampler, KernelSampler) else sampler
    first, second = rng.spawn(2)
    return rg_apply(phi, a, spec, first, second)


def sample_rg_apply(
    a: VectorLike,
    N: int,
    noise: NoiseDissipation,
    spec: TransferSpec,
    M: int,
    seed: int,
    components: Sequence[int] = DEFAULT_COMPONENTS,
    threads: Optional[int] = None,
    initial_id: str = "a",
) -> SampleSet:
    """M samples of R[Phi^(N)](a), comparable in law with sample_kernel at N + 1"""
    if M < 1:
        raise DomainError("sample count must be at least 1", M=M)
    components = tuple(int(n) for n in components)
    vector = as_vector(a)
    vector = _pad(vector, _sample_length(vector, N + 1, components))
    phi = Simulator(N, noise, spec)
    picks = list(components)

    def draw(i: int) -> np.ndarray:
        try:
            out = rg_apply(phi, vector, spec, sample_stream(seed, i, 1), sample_stream(seed, i, 2))
        except NumericFault as e:
            raise e.with_sample(i) from e
        return out[picks]

    rows = run_indexed(draw, M, threads)
    logger.info(f"Sampled {M} RG composition(s) of Phi^({N}) seed={seed}")
    return SampleSet(np.vstack(rows), components, seed, N + 1, noise, spec, initial_id, source="rg_apply")


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistogramPDF:
    edges: np.ndarray
    density: np.ndarray
    count: int
    component: int = -1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def integral(self) -> float:
        return math.fsum(self.density * self.widths)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_left": self.edges[:-1], "bin_right": self.edges[1:], "density": self.density})


@dataclass(frozen=True)
class SignedHistogram:
    edges: np.ndarray
    values: np.ndarray
    count: int
    component: int = -1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def integral(self) -> float:
        return math.fsum(self.values * self.widths)

    def statistical_tolerance(self) -> float:
        return 4.0 / math.sqrt(self.count)

    def scaled(self, factor: float) -> "SignedHistogram":
        return SignedHistogram(self.edges, self.values * factor, self.count, self.component)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_left": self.edges[:-1], "bin_right": self.edges[1:], "density": self.values})


def shared_edges(columns: Sequence[np.ndarray], bins: Optional[int] = None) -> np.ndarray:
    """Uniform grid spanning the pooled min/max of all columns"""
    bins = bins or settings.bins
    if bins < 1:
        raise DomainError("bin count must be positive", bins=bins)
    pooled = [np.asarray(c, dtype=np.float64) for c in columns if len(c)]
    if not pooled:
        raise EmptySampleError("no samples to bin")
    lo = min(float(c.min()) for c in pooled)
    hi = max(float(c.max()) for c in pooled)
    if hi == lo:
        pad = max(abs(lo) * 1e-6, 1e-12)
        lo, hi = lo - pad, hi + pad
    return np.linspace(lo, hi, bins + 1)


def marginal_pdf(
    samples: SampleSet,
    component: int,
    bins: Optional[int] = None,
    edges: Optional[np.ndarray] = None,
) -> HistogramPDF:
    """Normalized histogram density of one sampled component"""
    column = samples.column(component)
    if column.size == 0:
        raise EmptySampleError("sample set has no samples", component=component)
    if edges is None:
        edges = shared_edges([column], bins)
    else:
        edges = np.asarray(edges, dtype=np.float64)
        if column.min() < edges[0] or column.max() > edges[-1]:
            logger.warning(
                f"Samples of u{component} fall outside [{edges[0]:.6g}, {edges[-1]:.6g}]; extending the grid"
            )
            edges = shared_edges([column, edges[[0, -1]]], edges.size - 1)
    counts, _ = np.histogram(column, bins=edges)
    density = counts / (column.size * np.diff(edges))
    return HistogramPDF(edges=edges, density=density, count=int(column.size), component=component)


def delta_pdf(pdf_hi: HistogramPDF, pdf_lo: HistogramPDF) -> SignedHistogram:
    """p^(N+1) - p^(N) on their common grid"""
    if pdf_hi.edges.shape != pdf_lo.edges.shape or not np.array_equal(pdf_hi.edges, pdf_lo.edges):
        raise GridMismatchError("histograms are defined on different bin grids")
    return SignedHistogram(
        edges=pdf_hi.edges,
        values=pdf_hi.density - pdf_lo.density,
        count=min(pdf_hi.count, pdf_lo.count),
        component=pdf_hi.component,
    )


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def ks_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample KS statistic sup |F_x - F_y|"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise EmptySampleError("KS distance needs two non-empty samples", m=int(x.size), n=int(y.size))
    return float(stats.ks_2samp(x, y, method="asymp").statistic)


def ks_critical_value(m: int, n: int, level: float = KS_LEVEL) -> float:
    """Asymptotic two-sample critical value of the KS statistic"""
    return float(stats.kstwobign.isf(level) * math.sqrt((m + n) / (m * n)))


# ---------------------------------------------------------------------------
# Stochastic eigenmode
# ---------------------------------------------------------------------------

@dataclass
class StochasticEigenmode:
    rho: float
    objective: float
    N_range: Tuple[int, int]
    eigenmode: List[SignedHistogram]
    rescaled: Dict[int, List[SignedHistogram]]
    at_boundary: bool = False
    positive_rho: Optional[float] = None
    positive_objective: Optional[float] = None
    non_real_suspected: bool = False

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "objective": self.objective,
            "N_range": list(self.N_range),
            "at_boundary": self.at_boundary,
            "positive_rho": self.positive_rho,
            "positive_objective": self.positive_objective,
            "non_real_suspected": self.non_real_suspected,
        }


def _as_family(
    delta_pdfs: Union[Sequence[SignedHistogram], Mapping[int, Union[SignedHistogram, Sequence[SignedHistogram]]]],
) -> Tuple[List[int], List[List[SignedHistogram]]]:
    if isinstance(delta_pdfs, Mapping):
        Ns = sorted(delta_pdfs)
        if any(b - a != 1 for a, b in zip(Ns, Ns[1:])):
            raise DomainError("signed histograms must cover consecutive N", N=Ns)
        items = [delta_pdfs[N] for N in Ns]
    else:
        items = list(delta_pdfs)
        Ns = list(range(len(items)))
    family = [[h] if isinstance(h, SignedHistogram) else list(h) for h in items]
    return Ns, family


def collapse_ambiguous(negative: float, positive: float) -> bool:
    """True when the negative-rho objective is poor and does not beat the positive one by SIGN_PREFERENCE"""
    return negative > COLLAPSE_FAILURE and negative > SIGN_PREFERENCE * positive


def estimate_rho_stochastic(
    delta_pdfs: Union[Sequence[SignedHistogram], Mapping[int, Union[SignedHistogram, Sequence[SignedHistogram]]]],
    bounds: Tuple[float, float] = RHO_BOUNDS,
    xatol: float = RHO_XATOL,
) -> StochasticEigenmode:
    """rho minimizing the spread of Delta p^(N) / rho**N over consecutive N.

    Values may be single histograms or tuples of histograms (one per component), which
    are fitted jointly. Keys are N; a plain sequence is taken as N = 0, 1, ...
    """
    Ns, family = _as_family(delta_pdfs)
    if len(Ns) < 3:
        raise DomainError("stochastic eigenvalue needs at least three signed histograms", count=len(Ns))
    width = len(family[0])
    for row in family:
        if len(row) != width:
            raise GridMismatchError("each N must carry the same components")
        for h, ref in zip(row, family[0]):
            if not np.array_equal(h.edges, ref.edges):
                raise GridMismatchError("signed histograms are defined on different bin grids")

    weights = [np.sqrt(h.widths) for h in family[0]]
    curves = np.array([np.concatenate([h.values * w for h, w in zip(row, weights)]) for row in family])
    support = curves != 0.0
    for k in range(len(Ns) - 1):
        if not np.any(support[k] & support[k + 1]):
            raise DomainError("signed histograms have non-overlapping supports", N=[Ns[k], Ns[k + 1]])

    offsets = np.arange(len(Ns), dtype=np.float64)

    def objective(rho: float) -> float:
        g = curves / rho ** offsets[:, None]
        squares = np.einsum("ij,ij->i", g, g)
        scale = float(np.mean(squares))
        if scale == 0.0:
            return math.inf
        diffs = g[1:] - g[:-1]
        return float(np.einsum("ij,ij->", diffs, diffs)) / scale

    def minimize(lo: float, hi: float) -> Tuple[float, float]:
        result = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
        return float(result.x), float(result.fun)

    rho, value = minimize(*bounds)
    at_boundary = min(abs(rho - bounds[0]), abs(rho - bounds[1])) < 10 * xatol
    if at_boundary:
        logger.warning(f"Stochastic eigenvalue minimum {rho:.4f} sits on the search boundary {bounds}")

    positive_rho, positive_value = minimize(-bounds[1], -bounds[0])
    non_real = collapse_ambiguous(value, positive_value)
    if non_real:
        logger.warning(f"Neither sign of rho collapses the histograms clearly (objective {value:.3f} / {positive_value:.3f})")
    elif positive_value < value:
        logger.warning(f"Positive rho={positive_rho:.4f} collapses better than the negative search range")

    rescaled = {N: [h.scaled(1.0 / rho ** N) for h in row] for N, row in zip(Ns, family)}
    eigenmode = []
    for j, ref in enumerate(family[0]):
        stacked = np.mean([rescaled[N][j].values for N in Ns], axis=0)
        eigenmode.append(SignedHistogram(ref.edges, stacked, min(row[j].count for row in family), ref.component))

    logger.info(f"Stochastic eigenvalue rho={rho:.4f} over N={Ns[0]}..{Ns[-1]} (objective {value:.4g})")
    return StochasticEigenmode(
        rho=rho,
        objective=value,
        N_range=(Ns[0], Ns[-1]),
        eigenmode=eigenmode,
        rescaled=rescaled,
        at_boundary=at_boundary,
        positive_rho=positive_rho,
        positive_objective=positive_value,
        non_real_suspected=non_real,
    )


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

@dataclass
class KernelMoments:
    mean: float
    std: float
    mean_stderr: float
    std_stderr: float
    count: int


def kernel_moments(samples: Union[SampleSet, np.ndarray], component: Optional[int] = None) -> KernelMoments:
    """Sample mean and unbiased standard deviation, with their standard errors"""
    if isinstance(samples, SampleSet):
        if component is None:
            raise DomainError("component required for a SampleSet")
        column = samples.column(component)
    else:
        column = np.asarray(samples, dtype=np.float64).ravel()
    M = column.size
    if M == 0:
        raise EmptySampleError("moments of an empty sample")
    shift = float(column[0])
    d = column - shift
    s1 = math.fsum(d)
    mean = shift + s1 / M
    if M == 1:
        return KernelMoments(mean=mean, std=0.0, mean_stderr=math.inf, std_stderr=math.inf, count=1)
    var = max(0.0, (math.fsum(d * d) - s1 * s1 / M) / (M - 1))
    std = math.sqrt(var)
    return KernelMoments(
        mean=mean,
        std=std,
        mean_stderr=std / math.sqrt(M),
        std_stderr=std / math.sqrt(2.0 * (M - 1)),
        count=M,
    )


# ---------------------------------------------------------------------------
# Period doubling of kernels
# ---------------------------------------------------------------------------

@dataclass
class Period2Report:
    classification: str
    N_values: List[int]
    components: Tuple[int, ...]
    distances: np.ndarray
    critical_value: float
    within_parity_max: float
    cross_parity_min: float
    noise_swap: Optional[bool] = None
    swap_distances: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "classification": self.classification,
            "N_values": self.N_values,
            "components": list(self.components),
            "distances": self.distances.tolist(),
            "critical_value": self.critical_value,
            "within_parity_max": self.within_parity_max,
            "cross_parity_min": self.cross_parity_min,
            "noise_swap": self.noise_swap,
            "swap_distances": self.swap_distances,
        }


def _set_distance(x: Mapping[int, np.ndarray], y: Mapping[int, np.ndarray], components: Sequence[int]) -> float:
    return max(ks_distance(x[n], y[n]) for n in components)


def _columns(samples: SampleSet, components: Sequence[int]) -> Dict[int, np.ndarray]:
    return {n: samples.column(n) for n in components}


def classify_period2(
    columns_by_N: Mapping[int, Mapping[int, np.ndarray]],
    components: Sequence[int],
    tolerance: float = KS_TOLERANCE,
    factor: float = SEPARATION_FACTOR,
    level: float = KS_LEVEL,
) -> Period2Report:
    """fixed_point | period2 | undecided from pairwise KS distances of per-N marginals"""
    Ns = sorted(columns_by_N)
    if sum(N % 2 == 0 for N in Ns) < 2 or sum(N % 2 == 1 for N in Ns) < 2:
        raise DomainError("period-2 classification needs two even and two odd N values", N=Ns)
    components = tuple(components)
    size = len(Ns)
    distances = np.zeros((size, size))
    critical = 0.0
    for i in range(size):
        for j in range(i + 1, size):
            x, y = columns_by_N[Ns[i]], columns_by_N[Ns[j]]
            distances[i, j] = distances[j, i] = _set_distance(x, y, components)
            critical = max(critical, ks_critical_value(len(x[components[0]]), len(y[components[0]]), level))

    threshold = max(critical, tolerance)
    within = [distances[i, j] for i in range(size) for j in range(i + 1, size) if (Ns[i] - Ns[j]) % 2 == 0]
    cross = [distances[i, j] for i in range(size) for j in range(i + 1, size) if (Ns[i] - Ns[j]) % 2 == 1]
    within_max, cross_min = max(within), min(cross)

    if within_max <= threshold and max(cross) <= threshold:
        classification = "fixed_point"
    elif within_max <= threshold and cross_min > factor * critical:
        classification = "period2"
    else:
        classification = "undecided"
    logger.info(
        f"Kernel classification {classification}: within-parity max {within_max:.4f}, "
        f"cross-parity min {cross_min:.4f}, critical {critical:.4f}"
    )
    return Period2Report(
        classification=classification,
        N_values=Ns,
        components=components,
        distances=distances,
        critical_value=critical,
        within_parity_max=within_max,
        cross_parity_min=cross_min,
    )


def detect_kernel_period2(
    p: float,
    noise: NoiseDissipation,
    N_range: Sequence[int],
    M: int,
    components: Sequence[int] = (2, 3, 4),
    a: Optional[VectorLike] = None,
    family: Union[str, TransferFamily] = TransferFamily.FB,
    seed: int = 0,
    swap_noise: Optional[NoiseDissipation] = MU_TILDE,
    tolerance: float = KS_TOLERANCE,
    threads: Optional[int] = None,
) -> Period2Report:
    """Sample the kernels over N_range and classify; with swap_noise, also check that the parities trade places"""
    Ns = sorted(int(N) for N in N_range)
    if len(Ns) < 4 or any(b - x != 1 for x, b in zip(Ns, Ns[1:])):
        raise DomainError("period-2 detection needs at least four consecutive N", N=Ns)
    spec = TransferSpec(family=TransferFamily(family), p=p)
    a = staircase() if a is None else a

    def sample_all(dissipation: NoiseDissipation, slot: int) -> Dict[int, Dict[int, np.ndarray]]:
        return {
            N: _columns(sample_kernel(a, N, dissipation, spec, M, derive_seed(seed, N, slot), components, threads), components)
            for N in Ns
        }

    primary = sample_all(noise, 0)
    report = classify_period2(primary, components, tolerance)
    if swap_noise is not None and report.classification == "period2":
        swapped = sample_all(swap_noise, 1)
        even, odd = max(N for N in Ns if N % 2 == 0), max(N for N in Ns if N % 2 == 1)
        critical = ks_critical_value(M, M)
        threshold = max(critical, tolerance)
        report.swap_distances = {
            "even_vs_swapped_odd": _set_distance(primary[even], swapped[odd], components),
            "odd_vs_swapped_even": _set_distance(primary[odd], swapped[even], components),
            "even_vs_swapped_even": _set_distance(primary[even], swapped[even], components),
        }
        report.noise_swap = (
            report.swap_distances["even_vs_swapped_odd"] <= threshold
            and report.swap_distances["odd_vs_swapped_even"] <= threshold
            and report.swap_distances["even_vs_swapped_even"] > SEPARATION_FACTOR * critical
        )
        logger.info(f"Noise swap {'holds' if report.noise_swap else 'fails'}: {report.swap_distances}")
    return report


# ---------------------------------------------------------------------------
# Converging initial data
# ---------------------------------------------------------------------------

def staircase(length: int = 5) -> np.ndarray:
    """a_n = 1 - n/5 for n <= 4, zero beyond"""
    n = np.arange(max(length, 5), dtype=np.float64)
    return np.where(n <= 4, 1.0 - n / 5.0, 0.0)


def perturbation_profile(length: int) -> np.ndarray:
    """tau_n**2 (n + 1)"""
    n = np.arange(length, dtype=np.float64)
    return 4.0 ** (-n) * (n + 1.0)


@dataclass
class ConvergingCheck:
    N_values: List[int]
    distances: Dict[int, float]
    critical_value: float
    passed: bool


def converging_initial_check(
    a: VectorLike,
    N_values: Sequence[int],
    noise: NoiseDissipation,
    spec: TransferSpec,
    M: int,
    seed: int,
    epsilon: float = 0.1,
    components: Sequence[int] = (2, 3, 4),
    level: float = KS_LEVEL,
    threads: Optional[int] = None,
) -> ConvergingCheck:
    """Kernels started at a^(N) = a + epsilon 2**-N profile agree in law with kernels started at a"""
    vector = as_vector(a)
    components = tuple(components)
    critical = ks_critical_value(M, M, level)
    distances: Dict[int, float] = {}
    for N in sorted(int(N) for N in N_values):
        length = _sample_length(vector, N, components)
        base = _pad(vector, length)
        moved = base + epsilon * 2.0 ** (-N) * perturbation_profile(length)
        exact = sample_kernel(base, N, noise, spec, M, derive_seed(seed, N, 0), components, threads)
        nearby = sample_kernel(moved, N, noise, spec, M, derive_seed(seed, N, 1), components, threads, initial_id="a_N")
        distances[N] = _set_distance(_columns(exact, components), _columns(nearby, components), components)
    passed = all(d <= critical for d in distances.values())
    logger.info(f"Converging initial data check {'passed' if passed else 'failed'}: {distances} (critical {critical:.4f})")
    return ConvergingCheck(N_values=sorted(distances), distances=distances, critical_value=critical, passed=passed)
