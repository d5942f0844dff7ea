#!/usr/bin/env python3
"""
Test script for the lattice integrator: transfer fractions, tick schedule,
energy ledger, probes and reproducibility
"""
import math
import sys

import numpy as np

from errors import DomainError
from lattice import (
    CONSERVATION_RTOL,
    LatticeState,
    NoiseDissipation,
    TransferFamily,
    TransferSpec,
    advance,
    decay_exponent,
    due_scales,
    make_config,
    simulate,
    step_unit_interval,
    tick,
    transfer_fraction,
)
from stochastic_rg import staircase
from test_runner import run_tests


FA5 = TransferSpec(family=TransferFamily.FA, p=5.0)
FB = TransferSpec(family=TransferFamily.FB, p=10.3)


def test_transfer_fraction_ranges():
    """f stays inside its family range and takes the v = 0 limit"""
    grid = [0.0, 1e-3, 0.2, 0.5, 1.0, 3.0]
    for spec in (FA5, FB, TransferSpec(family=TransferFamily.FA, p=8.0)):
        lo, hi = spec.fraction_range()
        for u in grid:
            for v in grid:
                f = transfer_fraction(spec, u, v)
                assert lo - 1e-15 <= f <= hi + 1e-15, (spec, u, v, f)
    assert transfer_fraction(FA5, 0.7, 0.0) == 0.2
    assert math.isclose(transfer_fraction(FB, 0.7, 0.0), 0.4 - 0.3 * math.cos(0.5 * 10.3), rel_tol=1e-15)


def test_transfer_fraction_rejects_bad_input():
    for u, v in [(-1.0, 0.5), (0.5, -1e-3), (math.nan, 0.5), (0.5, math.inf)]:
        try:
            transfer_fraction(FA5, u, v)
        except DomainError:
            continue
        raise AssertionError(f"accepted u={u}, v={v}")


def test_due_scales():
    """Scales n_min..N update at tick k, n_min = max(0, N - v2(k))"""
    expected = {0: 0, 1: 3, 2: 2, 3: 3, 4: 1, 6: 2, 8: 0, 12: 1, 16: 0}
    for k, n_min in expected.items():
        assert due_scales(k, 3) == n_min, (k, due_scales(k, 3))
    assert due_scales(5, 0) == 0
    try:
        due_scales(-1, 3)
    except DomainError:
        return
    raise AssertionError("negative tick accepted")


def test_single_tick_at_N0():
    config = make_config(0, 0.25, FA5)
    state, ledger = tick(LatticeState(np.array([1.0])), config)
    assert state.values[0] == 0.75
    assert ledger.dissipated == 0.25
    assert state.tick == 1


def test_unit_interval_at_N1():
    """Two ticks at N = 1 written out by hand"""
    alpha = 0.25
    a = np.array([0.8, 0.6, 0.0])
    f0 = transfer_fraction(FA5, a[0], a[1])
    out = step_unit_interval(LatticeState(a), make_config(1, alpha, FA5, n_cap=2))
    assert math.isclose(out.values[0], (1 - f0) * a[0], rel_tol=1e-15)
    assert math.isclose(out.values[1], (1 - alpha) * ((1 - alpha) * a[1] + f0 * a[0]), rel_tol=1e-15)
    assert out.values[2] == 0.0
    assert out.tick == 2


def brute_force_unit_interval_N2(a, alpha, p):
    """Four ticks at N = 2 written out scale by scale, independent of the kernel"""
    def f(u, v):
        return 0.3 - 0.1 * math.cos(p * math.exp(-u / v)) if v > 0.0 else 0.2

    u = list(a)
    dissipated = 0.0
    for n_min in (0, 2, 1, 2):
        fractions = {n: f(u[n], u[n + 1]) for n in range(n_min, 2)}
        fractions[2] = alpha
        dissipated += alpha * u[2]
        new = list(u)
        new[n_min] = (1.0 - fractions[n_min]) * u[n_min]
        for n in range(n_min + 1, 3):
            new[n] = (1.0 - fractions[n]) * u[n] + fractions[n - 1] * u[n - 1]
        u = new
    return np.array(u), dissipated


def test_unit_interval_at_N2():
    """Kernel matches a scale-by-scale recursion at N = 2"""
    a = np.array([1.0, 0.8, 0.6])
    expected, dissipated = brute_force_unit_interval_N2(a, 0.25, 5.0)
    config = make_config(2, 0.25, FA5)
    out = step_unit_interval(LatticeState(a), config)
    assert np.max(np.abs(out.values - expected)) <= 1e-15, (out.values, expected)
    assert out.tick == 4
    _, ledger = advance(LatticeState(a), config, 4)
    assert abs(ledger.dissipated - dissipated) <= 1e-15
    assert abs(ledger.residual(a.sum(), out.total())) <= 1e-15


def test_energy_conservation():
    config = make_config(8, 0.25, FA5)
    result = simulate(LatticeState(staircase(9)), config, 3)
    assert result.max_relative_residual <= CONSERVATION_RTOL
    residual = result.ledger.residual(result.initial_total, result.final.total())
    assert abs(residual) <= 1e-13
    assert result.final.total() < result.initial_total
    assert np.all(result.final.values >= 0.0)


def test_truncation_beyond_viscous_scale():
    a = np.array([1.0, 0.5, 0.25, 0.125])
    state, ledger = advance(LatticeState(a), make_config(1, 0.25, FA5), 2)
    assert ledger.truncated == 0.375
    assert np.all(state.values[2:] == 0.0)
    assert abs(ledger.residual(1.875, state.total())) <= 1e-14


def test_forcing_injects_once_per_unit_time():
    config = make_config(2, 0.25, FB, forcing=True)
    state, ledger = advance(LatticeState(np.zeros(3)), config, 8)
    assert ledger.injected == 2.0
    assert abs(ledger.residual(0.0, state.total())) <= 1e-14


def test_noise_needs_stream():
    config = make_config(3, NoiseDissipation(lo=0.4, hi=0.5), FB)
    try:
        step_unit_interval(LatticeState(staircase()), config)
    except DomainError:
        return
    raise AssertionError("noise run without a random stream accepted")


def test_degenerate_noise_matches_deterministic():
    a = LatticeState(staircase(8))
    deterministic = step_unit_interval(a, make_config(6, 0.3, FB))
    noisy = step_unit_interval(a, make_config(6, NoiseDissipation(lo=0.3, hi=0.3), FB), np.random.default_rng(7))
    assert np.array_equal(deterministic.values, noisy.values)


def test_same_stream_same_trajectory():
    config = make_config(6, NoiseDissipation(lo=0.4, hi=0.5), FB)
    first = step_unit_interval(LatticeState(staircase(8)), config, np.random.default_rng(11))
    second = step_unit_interval(LatticeState(staircase(8)), config, np.random.default_rng(11))
    assert np.array_equal(first.values, second.values)


def test_state_validation():
    for values in ([1.0, -0.1], [math.nan], [], [[1.0]]):
        try:
            LatticeState(np.array(values))
        except DomainError:
            continue
        raise AssertionError(f"accepted state {values}")


def test_probes_native_times():
    config = make_config(3, 0.25, FA5)
    result = simulate(LatticeState(staircase()), config, 2, probes=[(0, "raw"), (3, "raw"), (1, "mean")])
    coarse = result.record(0)
    assert coarse.values.size == 3
    assert np.allclose(coarse.times, [0.0, 1.0, 2.0])
    assert coarse.values[0] == 1.0
    fine = result.record(3)
    assert fine.values.size == 17
    assert np.allclose(np.diff(fine.times), 0.125)
    mean = result.record(1, "mean")
    assert mean.values.size == 1 and mean.values[0] > 0.0


def test_simulate_rejects_bad_requests():
    config = make_config(3, 0.25, FA5)
    for kwargs in ({"t_end": 0}, {"t_end": 1, "probes": [(4, "raw")]}):
        try:
            simulate(LatticeState(staircase()), config, **kwargs)
        except DomainError:
            continue
        raise AssertionError(f"accepted {kwargs}")


def test_decay_exponent():
    n = np.arange(10)
    assert math.isclose(decay_exponent(2.0 ** (-1.5 * n)), 1.5, rel_tol=1e-12)
    assert decay_exponent([1.0, 0.0, 0.0]) is None


TESTS = [
    ("Transfer Fraction Ranges", test_transfer_fraction_ranges),
    ("Transfer Fraction Input Checks", test_transfer_fraction_rejects_bad_input),
    ("Due Scales", test_due_scales),
    ("Single Tick", test_single_tick_at_N0),
    ("Unit Interval N=1", test_unit_interval_at_N1),
    ("Unit Interval N=2", test_unit_interval_at_N2),
    ("Energy Conservation", test_energy_conservation),
    ("Truncation", test_truncation_beyond_viscous_scale),
    ("Forcing", test_forcing_injects_once_per_unit_time),
    ("Noise Stream Required", test_noise_needs_stream),
    ("Degenerate Noise", test_degenerate_noise_matches_deterministic),
    ("Reproducibility", test_same_stream_same_trajectory),
    ("State Validation", test_state_validation),
    ("Probes", test_probes_native_times),
    ("Simulate Input Checks", test_simulate_rejects_bad_requests),
    ("Decay Exponent", test_decay_exponent),
]


if __name__ == "__main__":
    sys.exit(run_tests("Lattice Tests", TESTS))
