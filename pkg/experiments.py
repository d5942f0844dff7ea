"""
Experiment orchestrator: registry of reproducible experiments with desk/paper presets,
the runner that resolves configs and emits outputs, and the simulate/verify commands
"""
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from cascade_stats import FLUX_TOLERANCE, STABILITY_TOLERANCE, fit_zeta, flux_balance_check, forced_steady_run, window_stability
from config import settings
from errors import ConfigError, RGLatticeError, UnknownExperimentError
from experiment_config import ExperimentConfig, config_summary, load_config_file, resolve_config
from flow_algebra import DyadicTime, Simulator, direct_state_at_dyadic_time, rg_apply, state_at_dyadic_time
from lattice import (
    CONSERVATION_RTOL,
    MU,
    MU_TILDE,
    LatticeState,
    TransferFamily,
    TransferSpec,
    decay_exponent,
    make_config,
    simulate,
)
from rg_spectral import (
    COLLAPSE_TOLERANCE,
    COMPONENT_WINDOW,
    MIN_GROWTH_FIT,
    bifurcation_scan,
    cauchy_differences,
    differences_from_sequence,
    eigenmode_analysis,
    estimate_rho,
    flow_sequence,
    parity_split,
    perturbation_growth,
    successive_gaps,
    vector_ratio,
)
from run_store import Output, emit, state_frame
from stochastic_rg import (
    KS_LEVEL,
    KS_TOLERANCE,
    converging_initial_check,
    delta_pdf,
    derive_seed,
    detect_kernel_period2,
    estimate_rho_stochastic,
    kernel_moments,
    ks_critical_value,
    ks_distance,
    marginal_pdf,
    sample_kernel,
    sample_rg_apply,
    sample_stream,
    shared_edges,
)
from worker_pool import map_items

logger = logging.getLogger(__name__)

PRESETS = ("desk", "paper")
VARIANCE_FLOOR = 1e-20
LEDGER_IDENTITY_ATOL = 1e-9
GROWTH_R2 = 0.95
BRANCH_R2 = 0.98
GAP_RATIO_TOLERANCE = 0.03


@dataclass
class ExperimentResult:
    outputs: Dict[str, Output] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    ledger: Optional[Dict[str, Any]] = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class RunReport:
    name: str
    success: bool
    directory: Optional[str] = None
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None
    exit_code: int = 0

    @property
    def passed(self) -> bool:
        return self.success and all(self.checks.values())

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "success": self.success,
            "passed": self.passed,
            "directory": self.directory,
            "files": self.files,
            "summary": self.summary,
            "checks": self.checks,
            "error": self.error,
            "exit_code": self.exit_code,
        }


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _grid(lo: float, hi: float, step: float) -> List[float]:
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 6) for i in range(count)]


def _scales(lo: int, hi: int) -> List[int]:
    return list(range(lo, hi + 1))


def _long_frame(states: Dict[Tuple, np.ndarray], keys: Sequence[str], value: str) -> pd.DataFrame:
    """Rows (key..., n, value) from vectors keyed by tuples"""
    rows = []
    for key, vector in states.items():
        for n, x in enumerate(np.asarray(vector)):
            rows.append((*key, n, float(x)))
    return pd.DataFrame(rows, columns=[*keys, "n", value])


def run_ledger(
    a: np.ndarray,
    N: int,
    dissipation,
    spec: TransferSpec,
    forcing: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, Any]:
    """Ledger of one unit-time reference run at viscous scale N"""
    config = make_config(N, dissipation, spec, forcing=forcing, n_cap=max(N, a.size - 1))
    result = simulate(LatticeState(a), config, 1, rng=rng)
    ledger = result.ledger.as_dict(result.initial_total)
    ledger["N"] = N
    ledger["max_relative_residual"] = result.max_relative_residual
    return ledger


def _noise_labels(config: ExperimentConfig) -> Dict[str, Dict[str, float]]:
    return {f"noise{i}": {"lo": noise.lo, "hi": noise.hi} for i, noise in enumerate(config.noises)}


# ---------------------------------------------------------------------------
# Deterministic RG experiments
# ---------------------------------------------------------------------------

def run_fig5_collapse(config: ExperimentConfig) -> ExperimentResult:
    """Flow maps phi^(N, alpha)(a) over N and alpha; successive gaps shrink geometrically"""
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    result = ExperimentResult()
    states: Dict[Tuple, np.ndarray] = {}
    differences: Dict[Tuple, np.ndarray] = {}
    gap_rows = []
    for alpha in config.alphas:
        sequence = flow_sequence(Ns, alpha, spec, a, threads=config.threads)
        by_N = differences_from_sequence(sequence)
        states.update({(N, alpha): u for N, u in sequence.items()})
        differences.update({(N, alpha): d for N, d in by_N.items()})
        gaps = successive_gaps(sequence, COMPONENT_WINDOW)
        gap_rows.extend((alpha, N, g) for N, g in zip(Ns, gaps))
        ratios = [g1 / g0 for g0, g1 in zip(gaps, gaps[1:]) if g0 > 0.0]
        top = sequence[Ns[-1]]
        entry = {
            "gaps": gaps,
            "gap_ratios": ratios,
            "limit_decay_exponent": decay_exponent(top, 2, max(2, Ns[-1] - 4)),
        }
        result.checks[f"gaps_shrink_alpha={alpha:g}"] = len(gaps) >= 2 and all(
            g1 < g0 for g0, g1 in zip(gaps, gaps[1:])
        )
        if ratios:
            rho = vector_ratio(by_N, COMPONENT_WINDOW)
            entry["rho"] = rho
            entry["ratio_minus_abs_rho"] = ratios[-1] - abs(rho)
            result.checks[f"gap_ratio_matches_rho_alpha={alpha:g}"] = abs(ratios[-1] - abs(rho)) <= GAP_RATIO_TOLERANCE
        result.summary[f"alpha={alpha:g}"] = entry
    result.summary["gap_components"] = [0, COMPONENT_WINDOW]
    result.summary["initial_decay_exponent"] = decay_exponent(a)
    result.outputs["states.csv"] = _long_frame(states, ["N", "alpha"], "u")
    result.outputs["differences.csv"] = _long_frame(differences, ["N", "alpha"], "delta_u")
    result.outputs["gaps.csv"] = pd.DataFrame(gap_rows, columns=["alpha", "N", "max_gap"])
    result.ledger = run_ledger(a, Ns[-1], config.alphas[0], spec)
    return result


def run_fig5_eigenvector(config: ExperimentConfig) -> ExperimentResult:
    """rho, psi and c_alpha from Cauchy differences, with the (N, alpha) collapse of the rescaled curves"""
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    mode = eigenmode_analysis(spec, a, config.alphas, Ns, probe=config.probe, threads=config.threads)
    result = ExperimentResult()
    result.summary.update({
        "rho": mode.rho,
        "rho_probe": mode.rho_probe.as_dict() if mode.rho_probe else None,
        "c_by_alpha": {f"{k:g}": v for k, v in mode.c_by_alpha.items()},
        "collapse_spread": mode.collapse_spread,
        "universality_broken": mode.universality_broken,
        "initial_decay_exponent": decay_exponent(a),
        "N_range": list(mode.N_range),
    })
    if 0.75 in mode.c_by_alpha and 0.25 in mode.c_by_alpha:
        result.summary["c_ratio_3/4"] = mode.c_ratio(0.75, 0.25)
    if config.rho_N_values:
        long_run = cauchy_differences(config.rho_N_values, config.alphas[0], spec, a, threads=config.threads)
        estimate = estimate_rho(long_run, config.probe)
        result.summary["rho_long_range"] = estimate.as_dict()
        result.outputs["rho_differences.csv"] = _long_frame(
            {(N,): d for N, d in long_run.items()}, ["N"], "delta_u"
        )
    if config.initial.kind == "power_law":
        result.summary["note"] = "rough initial data: collapse spread recorded without a tolerance"
    else:
        result.checks["eigenvector_collapse"] = not mode.universality_broken

    result.outputs["eigenvector.csv"] = _long_frame(
        {(N, alpha): curve for (N, alpha), curve in mode.curves.items()}, ["N", "alpha"], "psi"
    )
    result.outputs["psi.csv"] = pd.DataFrame({"n": np.arange(mode.psi.size), "psi": mode.psi})
    result.outputs["differences.csv"] = _long_frame(
        {(N, alpha): d for alpha, by_N in mode.differences.items() for N, d in by_N.items()}, ["N", "alpha"], "delta_u"
    )
    result.outputs["coefficients.csv"] = pd.DataFrame(
        {"alpha": list(mode.c_by_alpha), "c_alpha": list(mode.c_by_alpha.values())}
    )
    result.ledger = run_ledger(a, Ns[-1], config.alphas[0], spec)
    return result


def run_fig6_bifurcation(config: ExperimentConfig) -> ExperimentResult:
    """Period-doubling scan of u_probe(1) at N and N+1 over the p grid"""
    if len(config.p_grid) < 3:
        raise ConfigError("bifurcation scan needs a p_grid of at least three points")
    a = config.initial.build()
    scan = bifurcation_scan(
        config.p_grid, config.family, config.alphas[0], a, config.N, probe=config.probe, threads=config.threads
    )
    probe = config.probe
    result = ExperimentResult()
    result.outputs["bifurcation.csv"] = pd.DataFrame({
        "p": scan.p_grid,
        f"u{probe}_N": [float(pt.u_N[probe]) for pt in scan.points],
        f"u{probe}_N1": [float(pt.u_N1[probe]) for pt in scan.points],
        "delta_sq": scan.delta_sq,
    })
    result.outputs["rho.csv"] = pd.DataFrame({
        "p": scan.p_grid,
        "rho": [np.nan if r is None else r for r in scan.rho_of_p],
    })
    result.summary.update({
        "N": scan.N,
        "p_pd_rho_crossing": scan.p_pd_rho,
        "p_pd_delta_sq_onset": scan.p_pd_onset,
        "branch_slope": scan.branch_slope,
        "branch_r_squared": scan.branch_r_squared,
        "onset_window": list(scan.onset_window),
    })
    if scan.branch_r_squared is not None:
        result.checks["delta_sq_linear"] = scan.branch_r_squared >= BRANCH_R2
    result.ledger = run_ledger(a, config.N, config.alphas[0], TransferSpec(family=config.family, p=config.p_grid[0]))
    return result


def run_fig7_period2(config: ExperimentConfig) -> ExperimentResult:
    """Even-N and odd-N flow maps past the bifurcation converge to distinct limits"""
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    states = flow_sequence(Ns, config.alphas[0], spec, a, threads=config.threads)
    split = parity_split(states, config.probe)
    result = ExperimentResult()
    result.outputs["states.csv"] = _long_frame({(N,): u for N, u in states.items()}, ["N"], "u")
    result.summary.update({
        "even_N": split.even_N,
        "odd_N": split.odd_N,
        "parity_gap": split.gap,
        "within_parity_difference": split.within_parity,
    })
    result.checks["distinct_parity_limits"] = split.separated
    result.ledger = run_ledger(a, Ns[-1], config.alphas[0], spec)
    return result


def run_fig8_chaos(config: ExperimentConfig) -> ExperimentResult:
    """Superexponential growth of flow-map separations under a tiny change of alpha"""
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    alpha = config.alphas[0]
    growth = perturbation_growth(alpha, config.delta_alpha, spec, a, Ns, threads=config.threads)
    states = flow_sequence(Ns, alpha, spec, a, threads=config.threads)
    result = ExperimentResult()
    result.outputs["growth.csv"] = pd.DataFrame({"N": growth.N_values, "norm_delta_u": growth.norms})
    result.outputs["loglog.csv"] = pd.DataFrame(
        [(N, v) for N, v in zip(growth.N_values, growth.loglog) if v is not None], columns=["N", "loglog"]
    )
    result.outputs["states.csv"] = _long_frame({(N,): u for N, u in states.items()}, ["N"], "u")
    result.summary.update(growth.as_dict())
    result.summary["delta_alpha"] = config.delta_alpha
    result.summary["state_gaps"] = successive_gaps(states)
    if config.delta_alpha > 0.0:
        result.checks["separation_increasing"] = growth.established
        if growth.fit_supported:
            result.checks["loglog_linear"] = growth.r_squared is not None and growth.r_squared >= GROWTH_R2
        else:
            result.summary["loglog_note"] = (
                f"growth window {growth.window} holds fewer than {MIN_GROWTH_FIT} loglog points; R^2 recorded without a tolerance"
            )
    result.ledger = run_ledger(a, Ns[-1], alpha, spec)
    return result


# ---------------------------------------------------------------------------
# Stochastic experiments
# ---------------------------------------------------------------------------

def _require_samples(config: ExperimentConfig) -> int:
    if config.samples < 1:
        raise ConfigError("this experiment needs samples >= 1", samples=config.samples)
    return config.samples


def ks_maxima(ks_frame: pd.DataFrame) -> Dict[str, Any]:
    """Largest KS distance within each noise (across N) and across noises, with the pair attaining it"""
    if not len(ks_frame):
        return {"max_ks_by_noise": {}, "max_ks_across_noises": None, "max_ks_pairs": {}}
    noise_a = ks_frame["set_a"].str.rsplit("_", n=1).str[-1]
    noise_b = ks_frame["set_b"].str.rsplit("_", n=1).str[-1]
    groups = np.where(noise_a == noise_b, noise_a, "across_noises")
    by_noise: Dict[str, float] = {}
    pairs: Dict[str, List[Any]] = {}
    for group, rows in ks_frame.groupby(groups, sort=True):
        top = rows.loc[rows["ks"].idxmax()]
        by_noise[str(group)] = float(top["ks"])
        pairs[str(group)] = [int(top["component"]), str(top["set_a"]), str(top["set_b"])]
    across = by_noise.pop("across_noises", None)
    return {"max_ks_by_noise": by_noise, "max_ks_across_noises": across, "max_ks_pairs": pairs}


def run_fig9_pdfs(config: ExperimentConfig) -> ExperimentResult:
    """Marginal PDFs of u_n(1) across N and noises on shared grids, with pairwise KS distances"""
    M = _require_samples(config)
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    result = ExperimentResult()
    sets = {}
    for i, noise in enumerate(config.noises):
        for N in Ns:
            label = f"N{N}_noise{i}"
            sets[label] = sample_kernel(
                a, N, noise, spec, M, derive_seed(config.seed, N, i), config.components, config.threads
            )
            result.outputs[f"samples_{label}.csv"] = sets[label].to_frame()

    random_components = [n for n in config.components if n >= 2]
    for n in config.components:
        edges = shared_edges([s.column(n) for s in sets.values()], config.bins)
        for label, samples in sets.items():
            result.outputs[f"pdf_{label}_u{n}.csv"] = marginal_pdf(samples, n, edges=edges).to_frame()

    ks_rows = []
    for n in random_components:
        for (la, sa), (lb, sb) in itertools.combinations(sets.items(), 2):
            ks_rows.append((n, la, lb, ks_distance(sa.column(n), sb.column(n))))
    ks_frame = pd.DataFrame(ks_rows, columns=["component", "set_a", "set_b", "ks"])
    result.outputs["ks.csv"] = ks_frame
    max_ks = float(ks_frame["ks"].max()) if len(ks_frame) else 0.0
    result.summary.update({"max_ks": max_ks, "noises": _noise_labels(config), "M": M})
    result.summary.update(ks_maxima(ks_frame))
    result.checks["pdf_collapse"] = max_ks <= KS_TOLERANCE

    for n in (0, 1):
        if n in config.components:
            variance = max(kernel_moments(s, n).std ** 2 for s in sets.values())
            result.summary[f"max_variance_u{n}"] = variance
            result.checks[f"deterministic_u{n}"] = variance < VARIANCE_FLOOR

    if config.spot_check_epsilon is not None and random_components:
        check = converging_initial_check(
            a, [Ns[-1]], config.noises[0], spec, M, derive_seed(config.seed, 99),
            epsilon=config.spot_check_epsilon, components=random_components, threads=config.threads,
        )
        result.summary["converging_initial_check"] = {
            "distances": check.distances,
            "critical_value": check.critical_value,
            "passed": check.passed,
        }
        result.checks["converging_initial_data"] = check.passed
    result.ledger = run_ledger(a, Ns[-1], config.noises[0], spec, rng=sample_stream(config.seed, 0, 9))
    return result


def run_fig10_stochastic_eigenmode(config: ExperimentConfig) -> ExperimentResult:
    """Signed PDF differences over consecutive N and the eigenvalue that collapses them"""
    M = _require_samples(config)
    spec = config.transfer
    a = config.initial.build()
    Ns = config.scales()
    if len(Ns) < 4:
        raise ConfigError("stochastic eigenmode needs at least four consecutive N", N=Ns)
    noise = config.noises[0]
    components = [n for n in config.components if n >= 2] or [2]
    sets = {N: sample_kernel(a, N, noise, spec, M, derive_seed(config.seed, N, 0), components, config.threads) for N in Ns}

    result = ExperimentResult()
    deltas = {N: [] for N in Ns[:-1]}
    for n in components:
        edges = shared_edges([s.column(n) for s in sets.values()], config.bins)
        pdfs = {N: marginal_pdf(s, n, edges=edges) for N, s in sets.items()}
        for N in Ns[:-1]:
            signed = delta_pdf(pdfs[N + 1], pdfs[N])
            deltas[N].append(signed)
            result.outputs[f"delta_pdf_N{N}_u{n}.csv"] = signed.to_frame()
            result.checks[f"delta_integral_N{N}_u{n}"] = abs(signed.integral()) <= signed.statistical_tolerance()

    mode = estimate_rho_stochastic({N: tuple(h) for N, h in deltas.items()})
    for n, curve in zip(components, mode.eigenmode):
        result.outputs[f"eigenmode_u{n}.csv"] = curve.to_frame()
    result.summary.update(mode.as_dict())
    result.summary["components"] = components
    result.summary["M"] = M
    result.checks["rho_real_negative"] = not (mode.at_boundary or mode.non_real_suspected)
    if config.rho_range is not None:
        lo, hi = config.rho_range
        result.summary["rho_range"] = [lo, hi]
        result.checks["rho_in_range"] = lo <= mode.rho <= hi
    result.ledger = run_ledger(a, Ns[-1], noise, spec, rng=sample_stream(config.seed, 0, 9))
    return result


def split_onset(moments: pd.DataFrame, sigmas: float = 4.0) -> Dict[int, Optional[float]]:
    """First p where consecutive-N expectations differ by more than `sigmas` combined standard errors"""
    onset: Dict[int, Optional[float]] = {}
    for n, by_component in moments.groupby("component"):
        onset[int(n)] = None
        for p, rows in by_component.groupby("p", sort=True):
            rows = rows.sort_values("N")
            means, errors = rows["mean"].to_numpy(), rows["mean_stderr"].to_numpy()
            gaps = np.abs(np.diff(means))
            bounds = sigmas * np.hypot(errors[1:], errors[:-1])
            if np.any(gaps > bounds):
                onset[int(n)] = float(p)
                break
    return onset


def run_fig11_moments(config: ExperimentConfig) -> ExperimentResult:
    """Expectation and standard deviation of u_n(1) across the p sweep for consecutive N"""
    M = _require_samples(config)
    if not config.p_grid:
        raise ConfigError("moment sweep needs a p_grid")
    a = config.initial.build()
    Ns = config.scales()
    noise = config.noises[0]
    components = [n for n in config.components if n >= 2] or [2]
    rows = []
    for j, p in enumerate(config.p_grid):
        spec = TransferSpec(family=config.family, p=p)
        for N in Ns:
            samples = sample_kernel(a, N, noise, spec, M, derive_seed(config.seed, j, N), components, config.threads)
            for n in components:
                m = kernel_moments(samples, n)
                rows.append((p, N, n, m.mean, m.std, m.mean_stderr, m.std_stderr))
    frame = pd.DataFrame(rows, columns=["p", "N", "component", "mean", "std", "mean_stderr", "std_stderr"])
    result = ExperimentResult()
    result.outputs["moments.csv"] = frame
    result.summary["split_onset_p"] = split_onset(frame)
    result.summary["M"] = M
    result.ledger = run_ledger(a, Ns[-1], noise, TransferSpec(family=config.family, p=config.p_grid[0]), rng=sample_stream(config.seed, 0, 9))
    return result


def run_fig12_stochastic_period2(config: ExperimentConfig) -> ExperimentResult:
    """Kernel classification over N with the noise-swap check between two noises"""
    M = _require_samples(config)
    a = config.initial.build()
    components = [n for n in config.components if n >= 2] or [2, 3, 4]
    swap = config.noises[1] if len(config.noises) > 1 else None
    report = detect_kernel_period2(
        config.p, config.noises[0], config.scales(), M, components, a, config.family,
        seed=config.seed, swap_noise=swap, threads=config.threads,
    )
    result = ExperimentResult()
    result.outputs["classification.json"] = report.as_dict()
    Ns = report.N_values
    result.outputs["distances.csv"] = pd.DataFrame(
        [(Ns[i], Ns[j], float(report.distances[i, j])) for i, j in itertools.combinations(range(len(Ns)), 2)],
        columns=["N_a", "N_b", "ks"],
    )
    result.summary.update({
        "classification": report.classification,
        "within_parity_max": report.within_parity_max,
        "cross_parity_min": report.cross_parity_min,
        "critical_value": report.critical_value,
        "noise_swap": report.noise_swap,
        "M": M,
    })
    if report.classification == "period2" and report.noise_swap is not None:
        result.checks["noise_swap"] = report.noise_swap
    result.ledger = run_ledger(a, Ns[-1], config.noises[0], config.transfer, rng=sample_stream(config.seed, 0, 9))
    return result


# ---------------------------------------------------------------------------
# Cascade
# ---------------------------------------------------------------------------

def run_app_structure_functions(config: ExperimentConfig) -> ExperimentResult:
    """Forced steady state: structure functions, scaling exponents and flux balance"""
    spec = config.transfer
    a = config.initial.build(config.N + 1)
    sim = make_config(config.N, config.alphas[0], spec, forcing=True)
    table = forced_steady_run(sim, a, config.transient, config.window, config.p_max)
    zeta = fit_zeta(table, config.inertial_range)
    flux = flux_balance_check(table.window_ledger, mean_energy=table.S(1), inertial_range=zeta.inertial_range)

    result = ExperimentResult()
    result.outputs["structure_functions.csv"] = table.to_frame()
    result.outputs["zeta.csv"] = zeta.to_frame()
    result.outputs["flux.json"] = flux.as_dict()
    result.summary.update({
        "zeta": dict(zip(zeta.orders, zeta.zeta)),
        "r_squared": dict(zip(zeta.orders, zeta.r_squared)),
        "inertial_range": list(zeta.inertial_range),
        "half_window_difference_max": table.half_difference(zeta.inertial_range),
        "half_window_difference_by_order": dict(zip(zeta.orders, table.half_differences(zeta.inertial_range))),
        "window_ledger": table.window_ledger.as_dict(),
    })
    if config.stability_check:
        long_table = forced_steady_run(sim, a, config.transient, 2 * config.window, config.p_max)
        long_zeta = fit_zeta(long_table, zeta.inertial_range)
        stability = window_stability(zeta, long_zeta, config.window, 2 * config.window)
        result.outputs["zeta_long_window.csv"] = long_zeta.to_frame()
        result.summary["window_stability"] = stability.as_dict()
        result.checks["window_stable"] = stability.stable
    result.checks["ledger_identity"] = abs(table.window_ledger.identity_residual()) <= LEDGER_IDENTITY_ATOL * max(1.0, config.window / 1e4)
    result.checks["flux_balance"] = flux.balanced
    result.checks["zeta_concave"] = zeta.concave()
    result.ledger = table.run_ledger.as_dict(table.initial_total)
    return result


# ---------------------------------------------------------------------------
# Identities
# ---------------------------------------------------------------------------

def _random_state(seed: int, trial: int, length: int) -> np.ndarray:
    return sample_stream(seed, trial, 7).uniform(0.0, 1.0, size=length)


def run_thm1_verify(config: ExperimentConfig) -> ExperimentResult:
    """R[phi^(N, alpha)] = phi^(N+1, alpha) on random states, for both transfer families"""
    Ns = config.N_values or _scales(0, 10)
    cases = [(family, alpha, N) for family in TransferFamily for alpha in config.alphas for N in Ns]

    def deviation(case) -> float:
        family, alpha, N = case
        spec = config.transfer_for(family)
        phi, phi_next = Simulator(N, alpha, spec), Simulator(N + 1, alpha, spec)
        worst = 0.0
        for trial in range(config.trials):
            a = _random_state(config.seed, trial, N + 2)
            worst = max(worst, float(np.max(np.abs(rg_apply(phi, a, spec) - phi_next(a)))))
        return worst

    deviations = map_items(deviation, cases, config.threads)
    frame = pd.DataFrame(
        [(family.value, N, alpha, d) for (family, alpha, N), d in zip(cases, deviations)],
        columns=["family", "N", "alpha", "max_deviation"],
    )
    result = ExperimentResult()
    result.outputs["thm1.csv"] = frame
    result.summary["max_deviation"] = float(max(deviations))
    result.checks["rg_identity"] = result.summary["max_deviation"] <= config.tolerance

    if config.samples > 0:
        spec = config.transfer_for(TransferFamily.FB)
        a = config.initial.build()
        components = [n for n in config.components if n >= 2] or [2, 3, 4]
        composed = sample_rg_apply(a, config.N, config.noises[0], spec, config.samples, derive_seed(config.seed, 1), components, config.threads)
        direct = sample_kernel(a, config.N + 1, config.noises[0], spec, config.samples, derive_seed(config.seed, 2), components, config.threads)
        critical = ks_critical_value(config.samples, config.samples, KS_LEVEL)
        distances = {n: ks_distance(composed.column(n), direct.column(n)) for n in components}
        result.outputs["thm1_stochastic.csv"] = pd.DataFrame(
            {"component": list(distances), "ks": list(distances.values()), "critical": critical}
        )
        result.summary["stochastic_ks"] = distances
        result.checks["stochastic_rg_identity"] = all(d <= critical for d in distances.values())
    result.ledger = run_ledger(_random_state(config.seed, 0, Ns[-1] + 2), Ns[-1], config.alphas[0], config.transfer_for(TransferFamily.FA))
    return result


def dyadic_times(N: int, m_max: int = 2, k_max: int = 3) -> List[DyadicTime]:
    """All t = m + tau_{i_1} + ... + tau_{i_k} with m <= m_max, k <= k_max, i_k <= N"""
    times = []
    for m in range(m_max + 1):
        for k in range(min(k_max, N) + 1):
            for indices in itertools.combinations(range(1, N + 1), k):
                times.append(DyadicTime(m=m, indices=indices))
    return times


def run_thm2_verify(config: ExperimentConfig) -> ExperimentResult:
    """States at dyadic times composed from flow maps equal direct simulation"""
    Ns = config.N_values or _scales(0, 8)
    cases = [(family, alpha, N) for family in TransferFamily for alpha in config.alphas for N in Ns]

    def deviation(case) -> Tuple[float, int]:
        family, alpha, N = case
        spec = config.transfer_for(family)
        worst, count = 0.0, 0
        for trial in range(config.trials):
            a = _random_state(config.seed, trial, N + 2)
            for t in dyadic_times(N):
                composed = state_at_dyadic_time(a, N, alpha, spec, t)
                direct = direct_state_at_dyadic_time(a, N, alpha, spec, t)
                worst = max(worst, float(np.max(np.abs(composed - direct))))
                count += 1
        return worst, count

    outcomes = map_items(deviation, cases, config.threads)
    frame = pd.DataFrame(
        [(family.value, N, alpha, count, d) for (family, alpha, N), (d, count) in zip(cases, outcomes)],
        columns=["family", "N", "alpha", "times_checked", "max_deviation"],
    )
    result = ExperimentResult()
    result.outputs["thm2.csv"] = frame
    result.summary["max_deviation"] = float(max(d for d, _ in outcomes))
    result.summary["times_checked"] = int(sum(c for _, c in outcomes))
    result.checks["dyadic_composition"] = result.summary["max_deviation"] <= config.tolerance
    result.ledger = run_ledger(_random_state(config.seed, 0, Ns[-1] + 2), Ns[-1], config.alphas[0], config.transfer_for(TransferFamily.FA))
    return result


def run_simulation(config: ExperimentConfig) -> ExperimentResult:
    """Plain lattice run from the configured initial state"""
    spec = config.transfer
    a = config.initial.build(config.N + 1)
    if config.noise_regularized:
        dissipation, rng = config.noises[0], sample_stream(config.seed, 0)
    else:
        dissipation, rng = config.alphas[0], None
    sim = make_config(config.N, dissipation, spec, forcing=config.forcing, n_cap=max(config.N, a.size - 1))
    outcome = simulate(LatticeState(a), sim, config.t_end, config.probes, rng)
    rows = []
    for rec in outcome.records:
        rows.extend((rec.scale, rec.statistic.value, float(t), float(v)) for t, v in zip(rec.times, rec.values))
    result = ExperimentResult()
    result.outputs["state.csv"] = state_frame(outcome.final.values)
    result.outputs["probes.csv"] = pd.DataFrame(rows, columns=["scale", "statistic", "time", "value"])
    result.ledger = outcome.ledger.as_dict(outcome.initial_total)
    result.ledger["max_relative_residual"] = outcome.max_relative_residual
    result.summary["final_total"] = outcome.final.total()
    result.summary["final_time"] = outcome.final.time(config.N)
    result.checks["energy_conservation"] = outcome.max_relative_residual <= CONSERVATION_RTOL
    return result


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_NOISE = MU.model_dump(mode="json")
_NOISE_TILDE = MU_TILDE.model_dump(mode="json")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    module: str
    description: str
    fn: Callable[[ExperimentConfig], ExperimentResult]
    presets: Dict[str, Dict[str, Any]]
    runtime: Dict[str, str]


class ExperimentListing(BaseModel):
    """One registry entry as printed by `list --json`"""

    name: str
    module: str
    description: str
    runtime: Dict[str, str]
    presets: Dict[str, ExperimentConfig]


def _spec(name, module, fn, desk, paper, runtime_desk, runtime_paper) -> ExperimentSpec:
    return ExperimentSpec(
        name=name,
        module=module,
        description=(fn.__doc__ or "").strip().splitlines()[0],
        fn=fn,
        presets={"desk": desk, "paper": {**desk, **paper}},
        runtime={"desk": runtime_desk, "paper": runtime_paper},
    )


REGISTRY: Dict[str, ExperimentSpec] = {
    s.name: s
    for s in [
        _spec(
            "fig5_collapse", "rg_spectral", run_fig5_collapse,
            {"family": "FA", "p": 5.0, "N_values": _scales(12, 15), "alphas": [0.25, 0.75]},
            {"N_values": _scales(12, 20)},
            "seconds", "about a minute",
        ),
        _spec(
            "fig5_eigenvector", "rg_spectral", run_fig5_eigenvector,
            {"family": "FA", "p": 5.0, "N_values": _scales(12, 15), "alphas": [0.25, 0.75], "rho_N_values": _scales(14, 20)},
            {"rho_N_values": _scales(14, 24)},
            "under a minute", "several minutes",
        ),
        _spec(
            "fig6_bifurcation", "rg_spectral", run_fig6_bifurcation,
            {"family": "FA", "alphas": [0.25], "N": 20, "p_grid": _grid(6.5, 8.0, 0.05)},
            {"N": 25, "p_grid": _grid(6.5, 8.0, 0.02)},
            "minutes", "about an hour",
        ),
        _spec(
            "fig7_period2", "rg_spectral", run_fig7_period2,
            {"family": "FA", "p": 8.0, "alphas": [0.25], "N_values": _scales(14, 21)},
            {"N_values": _scales(18, 26)},
            "under a minute", "tens of minutes",
        ),
        _spec(
            "fig8_chaos", "rg_spectral", run_fig8_chaos,
            {"family": "FB", "p": 10.3, "alphas": [0.25], "delta_alpha": 1e-15, "N_values": _scales(4, 20)},
            {"N_values": _scales(4, 24)},
            "under a minute", "tens of minutes",
        ),
        _spec(
            "fig9_pdfs", "stochastic_rg", run_fig9_pdfs,
            {
                "family": "FB", "p": 10.3, "noises": [_NOISE, _NOISE_TILDE], "N_values": _scales(16, 18),
                "samples": 20000, "components": [0, 1, 2, 3, 4],
            },
            {"N_values": _scales(16, 20), "samples": 1000000},
            "about an hour", "hours",
        ),
        _spec(
            "fig10_stochastic_eigenmode", "stochastic_rg", run_fig10_stochastic_eigenmode,
            {
                "family": "FB", "p": 10.3, "noises": [_NOISE], "N_values": _scales(13, 16), "samples": 100000,
                "components": [2, 3], "rho_range": [-0.85, -0.55],
            },
            {"N_values": _scales(13, 19), "samples": 1000000},
            "tens of minutes", "hours",
        ),
        _spec(
            "fig11_moments", "stochastic_rg", run_fig11_moments,
            {
                "family": "FB", "p_grid": _grid(10.3, 10.8, 0.05), "noises": [_NOISE], "N_values": [14, 15],
                "samples": 20000, "components": [2],
            },
            {"N_values": [20, 21], "samples": 100000, "p_grid": _grid(10.3, 10.8, 0.025)},
            "tens of minutes", "hours",
        ),
        _spec(
            "fig12_stochastic_period2", "stochastic_rg", run_fig12_stochastic_period2,
            {
                "family": "FB", "p": 10.7, "noises": [_NOISE, _NOISE_TILDE], "N_values": _scales(15, 18),
                "samples": 20000, "components": [2, 3, 4],
            },
            {"N_values": _scales(21, 24), "samples": 1000000},
            "tens of minutes", "days",
        ),
        _spec(
            "app_structure_functions", "cascade_stats", run_app_structure_functions,
            {
                "family": "FB", "p": 10.3, "alphas": [0.25], "N": 12, "transient": 100, "window": 5000, "p_max": 8,
                "forcing": True, "stability_check": True,
            },
            {"N": 17, "window": 40000, "stability_check": False},
            "about a minute", "hours",
        ),
        _spec(
            "thm1_verify", "flow_algebra", run_thm1_verify,
            {"alphas": [0.25, 0.75], "N_values": _scales(0, 10), "trials": 100, "N": 10, "noises": [_NOISE], "components": [2, 3, 4]},
            {"samples": 10000},
            "seconds", "minutes",
        ),
        _spec(
            "thm2_verify", "flow_algebra", run_thm2_verify,
            {"alphas": [0.25], "N_values": _scales(0, 8), "trials": 3},
            {"alphas": [0.25, 0.75], "trials": 10},
            "seconds", "about a minute",
        ),
    ]
}

SIMULATE_PRESET: Dict[str, Any] = {"family": "FA", "p": 5.0, "N": 10, "alphas": [0.25], "t_end": 10, "probes": [[0, "raw"], [4, "mean"]]}


def get_experiment(name: str) -> ExperimentSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownExperimentError(f"unknown experiment '{name}'", known=sorted(REGISTRY)) from None


def list_experiments(module: Optional[str] = None, as_json: bool = False) -> Union[str, List[Dict[str, Any]]]:
    """Registry listing with preset configs and runtime estimates"""
    entries = [
        ExperimentListing(
            name=s.name,
            module=s.module,
            description=s.description,
            runtime=s.runtime,
            presets={k: ExperimentConfig.model_validate({**v, "name": s.name}) for k, v in s.presets.items()},
        )
        for s in REGISTRY.values()
        if module is None or s.module == module
    ]
    if as_json:
        return [entry.model_dump(mode="json") for entry in entries]
    lines = [f"{len(entries)} experiment(s)" + (f" in {module}" if module else "")]
    for entry in entries:
        lines.append(f"  {entry.name:<28} [{entry.module}] desk: {entry.runtime['desk']}, paper: {entry.runtime['paper']}")
        lines.append(f"      {entry.description}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def tolerances() -> Dict[str, float]:
    return {
        "conservation_rtol": CONSERVATION_RTOL,
        "eigenvector_collapse": COLLAPSE_TOLERANCE,
        "ks_tolerance": KS_TOLERANCE,
        "ks_level": KS_LEVEL,
        "flux_balance": FLUX_TOLERANCE,
        "window_stability": STABILITY_TOLERANCE,
        "gap_ratio": GAP_RATIO_TOLERANCE,
        "variance_floor": VARIANCE_FLOOR,
    }


class ExperimentRunner:
    """Resolves configs, runs registered experiments and writes their outputs"""

    def __init__(self, output_root: Optional[str] = None, overwrite: Optional[bool] = None):
        self.output_root = output_root
        self.overwrite = settings.overwrite if overwrite is None else overwrite

    def resolve(
        self,
        name: str,
        preset: str = "desk",
        config_file: Optional[str] = None,
        overrides: Sequence[str] = (),
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> ExperimentConfig:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}'", known=list(PRESETS))
        base = SIMULATE_PRESET if name == "simulate" else get_experiment(name).presets[preset]
        file_data = load_config_file(config_file) if config_file else None
        return resolve_config(name, base, file_data, overrides, seed, threads, self.output_root)

    def execute(self, name: str, config: ExperimentConfig, preset: Optional[str] = None) -> RunReport:
        """Run and emit; failures become a structured report instead of a traceback"""
        directory = Path(config.output_dir) / name
        try:
            logger.info(f"Running {config_summary(config)}")
            fn = run_simulation if name == "simulate" else get_experiment(name).fn
            result = fn(config)
            metadata = {
                "experiment": name,
                "preset": preset,
                "config": config.model_dump(mode="json"),
                "seed": config.seed,
                "tool_version": settings.tool_version,
                "tolerances": tolerances(),
                "ledger": result.ledger,
                "summary": result.summary,
                "checks": result.checks,
                "passed": result.passed,
            }
            paths = emit(result.outputs, directory, metadata, self.overwrite)
            report = RunReport(
                name=name,
                success=True,
                directory=str(directory),
                files=[p.name for p in paths],
                summary=result.summary,
                checks=result.checks,
            )
            if not report.passed:
                failed = [k for k, ok in result.checks.items() if not ok]
                logger.warning(f"{name} finished with failed checks: {failed}")
            else:
                logger.info(f"{name} finished; outputs in {directory}")
            return report

        except RGLatticeError as e:
            logger.error(f"Experiment {name} failed: {e}")
            return RunReport(name=name, success=False, directory=str(directory), error=e.to_dict(), exit_code=e.exit_code)
        except Exception as e:
            logger.error(f"Unexpected failure in {name}: {e}")
            error = {"error": type(e).__name__, "message": str(e), "details": {}}
            return RunReport(name=name, success=False, directory=str(directory), error=error, exit_code=1)

    def run(self, name: str, preset: str = "desk", **kwargs) -> RunReport:
        try:
            config = self.resolve(name, preset, **kwargs)
        except RGLatticeError as e:
            logger.error(f"Cannot configure {name}: {e}")
            return RunReport(name=name, success=False, error=e.to_dict(), exit_code=e.exit_code)
        return self.execute(name, config, preset)

    def verify(self, preset: str = "desk", **kwargs) -> List[RunReport]:
        return [self.run(name, preset, **kwargs) for name in ("thm1_verify", "thm2_verify")]


def run_experiment(name: str, config: Optional[ExperimentConfig] = None, overwrite: Optional[bool] = None) -> RunReport:
    """Run one registered experiment (desk preset when no config is given)"""
    runner = ExperimentRunner(overwrite=overwrite)
    if config is None:
        return runner.run(name)
    return runner.execute(name, config)


def listing_json(module: Optional[str] = None) -> str:
    return json.dumps(list_experiments(module, as_json=True), indent=2)
