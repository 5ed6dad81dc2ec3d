import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdelay import (CommensurabilityError, Filtered, FullCancellation, OpenLoop,
                        PartialCancellation, PlantConfig, StaticBoundary, UnsupportedLawError,
                        design, simulate, transform_state)
from hyperdelay.neutral import (DistributedTerm, History, NeutralSpec, PointTerm, point_spec,
                                reduce_closed_loop, simulate_neutral, spec_from_text)
from hyperdelay.pde_sim import consistent_initial_state


def coefficient_list(spec):
    return [(p.coefficient, p.delay) for p in spec.point_terms]


def test_reduction_full_cancellation_transport(transport_plant):
    spec = reduce_closed_loop(transport_plant, None, FullCancellation(), 0.01)
    assert coefficient_list(spec) == [(0.85, 2.0), (-0.85, 2.01)]
    assert spec.distributed == () and spec.kernel is None


def test_reduction_partial_cancellation_transport(transport_plant):
    spec = reduce_closed_loop(transport_plant, None, PartialCancellation(0.1), 0.1)
    assert coefficient_list(spec) == [(0.85, 2.0), (-0.1, 2.1)]


def test_reduction_static_law_transport():
    p = PlantConfig(1, 1, 2.0, 0.3)
    spec = reduce_closed_loop(p, None, StaticBoundary(0.25), 0.2)
    assert coefficient_list(spec) == [(0.6, 2.0), (-0.5, 2.2)]


def test_reduction_open_loop_reference(ref_design_200, ref_plant):
    _, _, g = ref_design_200
    spec = reduce_closed_loop(ref_plant, g, OpenLoop(), 0.0)
    assert coefficient_list(spec) == [(0.85, 2.0)]
    assert spec.distributed == (DistributedTerm(-1.0, 0.0),)
    assert spec.kernel.size == g.nu.size and spec.tau == 2.0


def test_reduction_unsupported(ref_plant, ref_design_200):
    with pytest.raises(UnsupportedLawError):
        reduce_closed_loop(ref_plant, ref_design_200[2], Filtered(0.1, 1.0), 0.1)
    with pytest.raises(UnsupportedLawError):
        reduce_closed_loop(ref_plant, ref_design_200[2], StaticBoundary(0.1), 0.1)


def test_single_term_recursion():
    spec = point_spec([(0.85, 2.0)])
    tr = simulate_neutral(spec, History.constant(1.0, 2.0, 0.01), 4.0)
    first = (tr.t > 0) & (tr.t <= 2 + 1e-9)
    second = (tr.t > 2 + 1e-9) & (tr.t <= 4 + 1e-9)
    assert np.all(tr.beta[first] == 0.85)
    assert np.allclose(tr.beta[second], 0.7225, rtol=0, atol=1e-15)


def test_zero_spec_gives_zero():
    spec = NeutralSpec((PointTerm(0.0, 1.0),), 1.0, 0.0, (DistributedTerm(-1.0, 0.0),),
                       np.zeros(11))
    tr = simulate_neutral(spec, History.constant(1.0, 1.0, 0.1), 3.0)
    assert np.all(tr.beta[1:] == 0.0)


def test_distributed_term_against_hand_recursion():
    # beta_k = c * h * sum_j w_j N_j beta_{k-j-s} with an implicit nu = 0 node
    dt = 0.25
    ker = np.array([1.0, 2.0, 0.5])
    spec = NeutralSpec((PointTerm(0.3, 0.5),), 0.5, 0.0,
                       (DistributedTerm(-0.4, 0.0), DistributedTerm(0.2, 0.25)), ker)
    hist = History(np.array([0.5, -1.0, 2.0, 1.0]), dt)
    tr = simulate_neutral(spec, hist, 1.0)
    b = {-3: 0.5, -2: -1.0, -1: 2.0, 0: 1.0}
    w = dt * np.array([0.5, 1.0, 0.5]) * ker
    for k in range(1, 5):
        rest = 0.3 * b[k - 2]
        rest += -0.4 * (w[1] * b[k - 1] + w[2] * b[k - 2])
        rest += 0.2 * (w[0] * b[k - 1] + w[1] * b[k - 2] + w[2] * b[k - 3])
        b[k] = rest / (1 + 0.4 * w[0])
        assert tr.beta[k] == pytest.approx(b[k], rel=1e-14)


def test_feedback_terms_gated_until_delay():
    spec = NeutralSpec((PointTerm(0.5, 0.2), PointTerm(-0.4, 0.5, True)), 0.2, 0.3)
    tr = simulate_neutral(spec, History.constant(1.0, 0.5, 0.1), 0.5)
    # before t = 0.3 only the first term acts
    assert tr.beta[1] == 0.5 and tr.beta[2] == 0.5
    assert tr.beta[3] == pytest.approx(0.5 * tr.beta[1] - 0.4 * 1.0)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 2 ** 16))
def test_linearity_in_history(scale, seed):
    rng = np.random.default_rng(seed)
    ker = rng.normal(size=9)
    spec = NeutralSpec((PointTerm(0.7, 0.8), PointTerm(-0.2, 1.0, True)), 0.8, 0.2,
                       (DistributedTerm(-1.0, 0.0), DistributedTerm(1.0, 0.2, True)), ker)
    h = rng.normal(size=11)
    a = simulate_neutral(spec, History(h, 0.1), 5.0).beta
    b = simulate_neutral(spec, History(scale * h, 0.1), 5.0).beta
    assert np.allclose(b, scale * a, rtol=1e-9, atol=1e-9 * max(1.0, abs(scale)))


@pytest.mark.parametrize("delta", [0.01, 0.1, 0.5])
def test_two_term_bounded_below_half(delta):
    g = 0.4
    spec = NeutralSpec((PointTerm(g, 2.0), PointTerm(-g, 2.0 + delta, True)), 2.0, delta)
    tr = simulate_neutral(spec, History.constant(1.0, 2.0 + delta, 0.01), 100.0)
    assert np.max(np.abs(tr.beta)) <= 2.0


def test_two_term_grows_above_half():
    g, delta = 0.85, 0.01
    spec = NeutralSpec((PointTerm(g, 2.0), PointTerm(-g, 2.0 + delta, True)), 2.0, delta)
    tr = simulate_neutral(spec, History.constant(1.0, 2.0 + delta, 0.005), 50.0)
    run_max = np.maximum.accumulate(np.abs(tr.beta))
    assert run_max[tr.t.searchsorted(50.0 - 1e-9)] >= 10 * run_max[tr.t.searchsorted(10.0 - 1e-9)]


def test_noncommensurate_rejected():
    spec = point_spec([(0.5, 0.33)])
    with pytest.raises(CommensurabilityError):
        simulate_neutral(spec, History.constant(1.0, 0.5, 0.1), 1.0)


def test_text_round_trip(ref_design_200, ref_plant):
    spec = reduce_closed_loop(ref_plant, ref_design_200[2], PartialCancellation(0.1), 0.1)
    back = spec_from_text(spec.to_text())
    assert back == spec
    assert np.array_equal(back.kernel, spec.kernel)


def test_history_from_transformed_branches():
    p = PlantConfig(2.0, 1.0, 0.5, 0.3)
    x = np.linspace(0, 1, 11)
    alpha0, beta0 = x.copy(), 10 + x
    h = History.from_transformed(alpha0, beta0, p, 0.1)
    s = -0.1 * np.arange(h.values.size - 1, -1, -1)
    # beta branch on (-1, 0], alpha branch on [-1.5, -1] divided by q
    assert h.values[-1] == pytest.approx(11.0)
    assert h.values[s.searchsorted(-0.5 - 1e-9)] == pytest.approx(10.5)
    assert h.values[s.searchsorted(-1.0 - 1e-9)] == pytest.approx(0.0)
    assert h.values[0] == pytest.approx(2.0 * (1.5 - 1.0) / 0.5)


def _pde_vs_neutral(plant, law, delta, n, horizon):
    K, _, g = design(plant, n)
    tr = simulate(plant, law, K, delta, horizon=horizon, n=n)
    st, *_ = consistent_initial_state(plant, law, None, None, n, K, delta)
    a, b = transform_state(st, K)
    spec = reduce_closed_loop(plant, g, law, delta)
    hist = History.from_transformed(a, b, plant, tr.dt, spec.max_delay)
    return np.max(np.abs(simulate_neutral(spec, hist, horizon).beta - tr.beta1))


def test_oracle_equivalence_with_distal_reflection():
    # q != 1 exercises the q factor on the alpha branch of the delay kernel
    p = PlantConfig(1, 1, 0.6, 0.5, 0.8, -0.5)
    e = [_pde_vs_neutral(p, PartialCancellation(0.2), 0.1, n, 8.0) for n in (50, 100, 200)]
    assert e[2] < 1e-3
    assert 1.7 <= e[0] / e[1] <= 2.3 and 1.7 <= e[1] / e[2] <= 2.3


def test_oracle_equivalence_full_cancellation_no_delay(ref_plant):
    # both sides cancel beta(t,1) identically for t > 0
    assert _pde_vs_neutral(ref_plant, FullCancellation(), 0.0, 50, 6.0) <= 1e-12


def test_oracle_equivalence_uncoupled_exact(transport_plant):
    for law in (FullCancellation(), PartialCancellation(0.1), StaticBoundary(0.3), OpenLoop()):
        assert _pde_vs_neutral(transport_plant, law, 0.1, 40, 10.0) <= 1e-12
