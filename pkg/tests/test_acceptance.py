"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` (or plain ``pytest -v``; the
summary lines are printed with output capture disabled).
"""

import time

import numpy as np
import pytest

from hyperdelay import (FullCancellation, PartialCancellation, PlantConfig, design, simulate,
                        solve_kernels)
from hyperdelay.kernels import check_boundary_data
from hyperdelay.neutral import History, reduce_closed_loop, simulate_neutral
from hyperdelay.pde_sim import consistent_initial_state, transform_state
from hyperdelay.spectral import (CharacteristicFunction, count_rhp_roots,
                                 positivity_certificate)

REF = PlantConfig(1.0, 1.0, 1.0, 0.85, 1.0, 1.0)
TRANSPORT = PlantConfig(1.0, 1.0, 1.0, 0.85)
N = 200


def _l2_at(trace, t):
    return float(trace.l2[trace.at(t)])


@pytest.fixture
def report(capsys):
    def emit(number, ok, message):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {message}")
        assert ok, message
    return emit


def test_criterion_1_finite_time_convergence(report):
    t0 = time.perf_counter()
    K, _, _ = design(REF, N)
    tr = simulate(REF, FullCancellation(), K, 0.0, horizon=10.0, n=N)
    elapsed = time.perf_counter() - t0
    late = tr.t >= REF.tau + 5 * tr.dt - 1e-12
    ratio = float(tr.l2[late].max() / tr.l2[0])
    ok = ratio <= 1e-6 and elapsed <= 10.0
    report(1, ok, f"max L2(t)/L2(0) for t >= tau+5dt = {ratio:.3e} (limit 1e-6), "
                  f"runtime {elapsed:.2f} s (limit 10 s)")


def test_criterion_2_delay_destabilizes_full_cancellation(report):
    t0 = time.perf_counter()
    K, _, _ = design(REF, N)
    tr = simulate(REF, FullCancellation(), K, 0.01, horizon=40.0, n=N)
    elapsed = time.perf_counter() - t0
    ratio = float(tr.l2[tr.at(40.0)] / tr.l2[tr.at(5.0)])
    ok = ratio >= 10.0 and elapsed <= 60.0
    report(2, ok, f"L2(40)/L2(5) = {ratio:.4g} (need >= 10), runtime {elapsed:.2f} s")


def test_criterion_3_partial_cancellation_robust(report):
    t0 = time.perf_counter()
    K, _, _ = design(REF, N)
    tr = simulate(REF, PartialCancellation(0.1), K, 0.1, horizon=40.0, n=N)
    elapsed = time.perf_counter() - t0
    final = float(tr.l2[tr.at(40.0)] / tr.l2[0])
    peak = float(tr.l2.max() / tr.l2[0])
    ok = final <= 0.1 and peak <= 10.0 and elapsed <= 60.0
    report(3, ok, f"L2(40)/L2(0) = {final:.4g} (need <= 0.1), peak ratio {peak:.4g} "
                  f"(need <= 10), runtime {elapsed:.2f} s")


def test_criterion_4_rate_tradeoff(report):
    K, _, _ = design(REF, N)
    full = _l2_at(simulate(REF, FullCancellation(), K, 0.0, horizon=6.0, n=N), 6.0)
    part = _l2_at(simulate(REF, PartialCancellation(0.1), K, 0.0, horizon=6.0, n=N), 6.0)
    report(4, part > full, f"L2(6) partial K=0.1 = {part:.4g}, full cancellation = {full:.4g}")


def test_criterion_5_closed_form_poles(report):
    t0 = time.perf_counter()
    F = CharacteristicFunction.from_delays([(-1.2, 2.0)])
    res = count_rhp_roots(F, (0.01, 1.0, -10.0, 10.0))
    elapsed = time.perf_counter() - t0
    expected = np.log(1.2) / 2 + 1j * np.pi * np.arange(-3, 4)
    roots = np.asarray(res.roots)[np.argsort(np.imag(res.roots))]
    err = float(np.abs(roots - expected).max()) if roots.size == 7 else np.inf
    ok = res.count == 7 and err <= 1e-6 and elapsed <= 5.0
    report(5, ok, f"count {res.count} (need 7), max root error {err:.2e} (limit 1e-6), "
                  f"runtime {elapsed:.3f} s")


def test_criterion_6_spectral_witness(report):
    cap = 2000.0
    unstable = CharacteristicFunction.from_delays([(-0.85, 2.0), (0.85, 2.01)])
    res_u = count_rhp_roots(unstable, (0.01, 1.0, -cap, cap), refine=False)
    robust = CharacteristicFunction.from_delays([(-0.85, 2.0), (0.1, 2.1)])
    res_r = count_rhp_roots(robust, (0.01, 1.0, -cap, cap), refine=False)
    cert = positivity_certificate(robust, cap)
    ok = (res_u.count >= 1 and res_r.count == 0 and cert.certified
          and abs(cert.margin - 0.05) < 1e-12)
    report(6, ok, f"full cancellation delta=0.01: {res_u.count} RHP roots (need >= 1); "
                  f"transport K=0.1 delta=0.1: {res_r.count} (need 0), "
                  f"certificate margin {cert.margin:.4g}")


def _beta_discrepancy(plant, law, delta, n, horizon=10.0):
    K, _, gains = design(plant, n)
    tr = simulate(plant, law, K, delta, horizon=horizon, n=n)
    state, *_ = consistent_initial_state(plant, law, None, None, n, K, delta)
    alpha, beta = transform_state(state, K)
    spec = reduce_closed_loop(plant, gains, law, delta)
    hist = History.from_transformed(alpha, beta, plant, tr.dt, spec.max_delay)
    return float(np.max(np.abs(simulate_neutral(spec, hist, horizon).beta - tr.beta1)))


def test_criterion_7_oracle_equivalence(report):
    ns = np.array([100, 200, 400])
    errs = np.array([_beta_discrepancy(REF, PartialCancellation(0.1), 0.1, n) for n in ns])
    C = float(np.sum(errs / ns) / np.sum(1.0 / ns ** 2))
    ratios = errs[:-1] / errs[1:]
    exact = _beta_discrepancy(TRANSPORT, PartialCancellation(0.1), 0.1, N)
    ok = bool(np.all((ratios >= 1.7) & (ratios <= 2.3))) and exact <= 1e-12
    report(7, ok, f"errors {np.array2string(errs, precision=4)} at n={ns.tolist()}, "
                  f"C = {C:.3f}, ratios {np.array2string(ratios, precision=3)} (need 1.7..2.3); "
                  f"uncoupled discrepancy {exact:.1e} (limit 1e-12)")


def test_criterion_8_kernel_convergence(report):
    sols = {n: solve_kernels(REF, n) for n in (64, 128, 256)}

    def coarse_diff(a, b):
        s = b.n // a.n
        return max(float(np.abs(fa - fb[::s, ::s]).max())
                   for fa, fb in zip(a.fields().values(), b.fields().values()))

    d1 = coarse_diff(sols[64], sols[128])
    d2 = coarse_diff(sols[128], sols[256])
    order = float(np.log2(d1 / d2))
    boundary = max(check_boundary_data(sols[256], REF).values())
    zero = solve_kernels(TRANSPORT, 64)
    all_zero = all(np.all(f == 0.0) for f in zero.fields().values())
    ok = order >= 1.0 and boundary <= 1e-8 and all_zero
    report(8, ok, f"self-convergence order {order:.3f} (need >= 1), boundary defect "
                  f"{boundary:.2e} (limit 1e-8), uncoupled kernels exactly zero: {all_zero}")
