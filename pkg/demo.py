"""
Demo script for rg-lattice: small desk-scale runs printed to the terminal
"""
import logging

import numpy as np

from config import settings
from experiments import ExperimentRunner
from flow_algebra import Simulator, rg_apply
from lattice import MU, LatticeState, TransferFamily, TransferSpec, make_config, simulate
from reports import ReportBuilder
from rg_spectral import cauchy_differences, estimate_rho
from stochastic_rg import kernel_moments, sample_kernel, staircase

logging.basicConfig(
    level=getattr(logging, settings.log_level),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def demo_lattice():
    """One unit time of the lattice with its energy ledger"""
    print("\n🧮 Lattice Demo")
    print("=" * 50)
    spec = TransferSpec(family=TransferFamily.FA, p=5.0)
    config = make_config(8, 0.25, spec)
    result = simulate(LatticeState(staircase(9)), config, 3, probes=[(0, "raw"), (4, "mean")])
    print(f"u(3) = {np.round(result.final.values, 6)}")
    print(f"Ledger: {result.ledger.as_dict(result.initial_total)}")
    print(f"Worst conservation residual per unit time: {result.max_relative_residual:.2e}")


def demo_rg_identity():
    """R[phi^(N)] against phi^(N+1) on the staircase"""
    print("\n🔁 RG Identity Demo")
    print("=" * 50)
    spec = TransferSpec(family=TransferFamily.FB, p=10.3)
    a = staircase(8)
    for N in range(0, 6):
        deviation = np.max(np.abs(rg_apply(Simulator(N, 0.25, spec), a, spec) - Simulator(N + 1, 0.25, spec)(a)))
        print(f"   N={N}: max deviation {deviation:.2e}")


def demo_eigenvalue():
    """Probe ratio of consecutive Cauchy differences at p = 5"""
    print("\n📉 Eigenvalue Demo")
    print("=" * 50)
    spec = TransferSpec(family=TransferFamily.FA, p=5.0)
    estimate = estimate_rho(cauchy_differences(range(8, 14), 0.25, spec, staircase()))
    print(f"rho ≈ {estimate.rho:.4f} ± {estimate.uncertainty:.4f} from ratios {np.round(estimate.ratios, 4)}")


def demo_kernel():
    """A small Monte Carlo sample of the noise-regularized flow kernel"""
    print("\n🎲 Flow Kernel Demo")
    print("=" * 50)
    spec = TransferSpec(family=TransferFamily.FB, p=10.3)
    samples = sample_kernel(staircase(), 10, MU, spec, 2000, settings.seed)
    for n in samples.components:
        moments = kernel_moments(samples, n)
        print(f"   u{n}(1): mean {moments.mean:.6f} ± {moments.mean_stderr:.1e}, std {moments.std:.3e}")


def demo_verify():
    """Both identity checks at the desk preset"""
    print("\n✅ Verification Demo")
    print("=" * 50)
    runner = ExperimentRunner(overwrite=True)
    reports = runner.verify("desk")
    for report in reports:
        print(ReportBuilder.build_run_response(report))
    print(ReportBuilder.build_verify_response(reports))


def main():
    """Main demo function"""
    print("🚀 rg-lattice Demo")
    print("=" * 60)
    print("Choose a demo mode:")
    print("1. Lattice run with energy ledger")
    print("2. RG identity")
    print("3. Deterministic eigenvalue")
    print("4. Stochastic flow kernel")
    print("5. Identity checks (writes to the output directory)")
    print("6. Run all demos")
    print()

    demos = {"1": [demo_lattice], "2": [demo_rg_identity], "3": [demo_eigenvalue], "4": [demo_kernel], "5": [demo_verify]}
    demos["6"] = [d for key in "12345" for d in demos[key]]
    try:
        choice = input("Enter your choice (1-6): ").strip()
        selected = demos.get(choice)
        if selected is None:
            print("Invalid choice. Running lattice demo...")
            selected = [demo_lattice]
        for demo in selected:
            demo()
    except KeyboardInterrupt:
        print("\n\n👋 Demo interrupted by user")
    except Exception as e:
        logger.error(f"Demo error: {e}")


if __name__ == "__main__":
    main()
