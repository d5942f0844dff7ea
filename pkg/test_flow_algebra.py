#!/usr/bin/env python3
"""
Test script for the flow-map algebra: primitive maps, the RG identity and
states at dyadic times
"""
import sys

import numpy as np

from errors import DomainError
from flow_algebra import (
    DyadicTime,
    RgComposite,
    Simulator,
    direct_state_at_dyadic_time,
    project_zero,
    rg_apply,
    shift_minus,
    shift_plus,
    shift_plus_power,
    state_at_dyadic_time,
    xi_transfer,
)
from lattice import NoiseDissipation, TransferFamily, TransferSpec, transfer_fraction
from test_runner import run_tests

SPECS = [TransferSpec(family=TransferFamily.FA, p=5.0), TransferSpec(family=TransferFamily.FB, p=10.3)]
IDENTITY_ATOL = 1e-12


def random_state(seed, length):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=length)


def test_primitive_maps():
    a = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(shift_plus(a), [2.0, 3.0, 0.0])
    assert np.array_equal(shift_minus(a), [0.0, 1.0, 2.0])
    assert np.array_equal(project_zero(a), [1.0, 0.0, 0.0])
    assert np.array_equal(shift_plus_power(a, 2), [3.0, 0.0, 0.0])
    assert np.array_equal(shift_plus_power(a, 5), [0.0, 0.0, 0.0])
    assert np.array_equal(shift_plus_power(a, 0), a)


def test_xi_transfer():
    spec = SPECS[0]
    a = np.array([0.9, 0.4, 0.1])
    xi = xi_transfer(a, spec)
    assert xi[0] == transfer_fraction(spec, 0.9, 0.4) * 0.9
    assert np.all(xi[1:] == 0.0)


def test_short_vector_rejected():
    try:
        Simulator(4, 0.25, SPECS[0])(np.ones(3))
    except DomainError:
        return
    raise AssertionError("flow map accepted a vector shorter than N + 1")


def test_rg_identity():
    """R[phi^(N, alpha)] = phi^(N+1, alpha) on random states"""
    worst = 0.0
    for spec in SPECS:
        for alpha in (0.25, 0.75):
            for N in range(0, 7):
                phi, phi_next = Simulator(N, alpha, spec), Simulator(N + 1, alpha, spec)
                for trial in range(5):
                    a = random_state(100 * N + trial, N + 2)
                    worst = max(worst, float(np.max(np.abs(rg_apply(phi, a, spec) - phi_next(a)))))
    assert worst <= IDENTITY_ATOL, worst


def test_rg_composite():
    """R^2[phi^(N)] = phi^(N+2)"""
    for spec in SPECS:
        composite = RgComposite(Simulator(3, 0.25, spec), 2)
        assert composite.viscous_scale == 5
        a = random_state(5, 7)
        assert np.max(np.abs(composite(a) - Simulator(5, 0.25, spec)(a))) <= IDENTITY_ATOL


def test_stochastic_rg_reproducible():
    spec = SPECS[1]
    phi = Simulator(4, NoiseDissipation(lo=0.4, hi=0.5), spec)
    a = random_state(9, 7)
    first = rg_apply(phi, a, spec, np.random.default_rng(3), np.random.default_rng(4))
    second = rg_apply(phi, a, spec, np.random.default_rng(3), np.random.default_rng(4))
    assert np.array_equal(first, second)
    assert np.all(first >= 0.0)


def test_dyadic_time_ticks():
    t = DyadicTime.from_ticks(5, 3)
    assert t.m == 0 and t.indices == (1, 3)
    assert t.value == 0.625
    assert t.ticks(3) == 5
    assert DyadicTime(m=2, indices=(2,)).ticks(4) == 36
    for k in range(40):
        assert DyadicTime.from_ticks(k, 4).ticks(4) == k


def test_dyadic_time_validation():
    for kwargs in ({"indices": (2, 1)}, {"indices": (0,)}, {"m": -1}):
        try:
            DyadicTime(**kwargs)
        except DomainError:
            continue
        raise AssertionError(f"accepted {kwargs}")
    try:
        DyadicTime(indices=(4,)).ticks(3)
    except DomainError:
        return
    raise AssertionError("index beyond the viscous scale accepted")


def test_dyadic_composition():
    """Composed flow maps reproduce direct simulation at every dyadic time"""
    N = 4
    for spec in SPECS:
        a = random_state(21, N + 2)
        for k in range(0, 3 * (1 << N) + 1):
            t = DyadicTime.from_ticks(k, N)
            composed = state_at_dyadic_time(a, N, 0.25, spec, t)
            direct = direct_state_at_dyadic_time(a, N, 0.25, spec, t)
            assert np.max(np.abs(composed - direct)) <= IDENTITY_ATOL, (str(t), composed, direct)


TESTS = [
    ("Primitive Maps", test_primitive_maps),
    ("Xi Transfer", test_xi_transfer),
    ("Short Vector", test_short_vector_rejected),
    ("RG Identity", test_rg_identity),
    ("RG Composite", test_rg_composite),
    ("Stochastic RG Reproducible", test_stochastic_rg_reproducible),
    ("Dyadic Time Ticks", test_dyadic_time_ticks),
    ("Dyadic Time Validation", test_dyadic_time_validation),
    ("Dyadic Composition", test_dyadic_composition),
]


if __name__ == "__main__":
    sys.exit(run_tests("Flow Algebra Tests", TESTS))
