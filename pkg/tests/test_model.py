import numpy as np
import pytest

from hyperdelay import (ConstantProfile, PlantConfig, PreconditionError, StabilizabilityClass,
                        TabulatedProfile, characteristic_time, check_filter_conditions,
                        check_gain_bound, classify_open_loop_gain, gain_bound)


def test_characteristic_time():
    assert characteristic_time(PlantConfig(1, 1, 1, 0.85)) == 2.0
    assert PlantConfig(2.0, 0.5, 1, 0.1).tau == pytest.approx(2.5)


@pytest.mark.parametrize("kw", [dict(lam=0), dict(mu=-1), dict(q=0), dict(rho=np.nan)])
def test_plant_rejects_invalid(kw):
    args = dict(lam=1.0, mu=1.0, q=1.0, rho=0.5)
    args.update(kw)
    with pytest.raises(ValueError):
        PlantConfig(**args)


def test_profiles():
    c = ConstantProfile(2.0)
    assert np.all(c(np.linspace(0, 1, 5)) == 2.0)
    t = TabulatedProfile((0.0, 1.0, 0.0))
    assert t(0.25) == pytest.approx(0.5)
    assert not t.is_zero and TabulatedProfile((0, 0)).is_zero
    p = PlantConfig(1, 1, 1, 0.5, [0, 1], 0.0)
    assert isinstance(p.sigma_pm, TabulatedProfile)
    assert not p.uncoupled
    assert PlantConfig(1, 1, 1, 0.5).uncoupled


@pytest.mark.parametrize("rho,q,expected", [
    (1.2, 1.0, StabilizabilityClass.NOT_DELAY_ROBUSTLY_STABILIZABLE),
    (-0.6, 2.0, StabilizabilityClass.NOT_DELAY_ROBUSTLY_STABILIZABLE),
    (0.85, 1.0, StabilizabilityClass.NO_FINITE_TIME_DELAY_ROBUST),
    (0.3, 1.0, StabilizabilityClass.FINITE_TIME_DELAY_ROBUST),
    (0.0, 1.0, StabilizabilityClass.FINITE_TIME_DELAY_ROBUST),
    (0.5, 1.0, StabilizabilityClass.CRITICAL_BOUNDARY),
    (1.0, 1.0, StabilizabilityClass.CRITICAL_BOUNDARY),
    (-0.25, 2.0, StabilizabilityClass.CRITICAL_BOUNDARY),
])
def test_classification(rho, q, expected):
    assert classify_open_loop_gain(rho, q) is expected


def test_classification_requires_nonzero_q():
    with pytest.raises(PreconditionError):
        classify_open_loop_gain(0.5, 0.0)


def test_gain_bound():
    # (1 - |rho q|) / |q|
    assert gain_bound(0.85, 1.0) == pytest.approx(0.15)
    assert gain_bound(0.2, 2.0) == pytest.approx(0.3)
    assert check_gain_bound(0.14, 0.85, 1.0)
    assert not check_gain_bound(0.15, 0.85, 1.0)
    assert not check_gain_bound(-0.2, 0.85, 1.0)
    with pytest.raises(PreconditionError):
        gain_bound(1.2, 1.0)


def test_filter_conditions():
    # (1 - 0.85) / 0.85 = 0.1765
    assert check_filter_conditions(0.0, 1.0, 0.85, 1.0)
    assert check_filter_conditions(0.1, 1.0, 0.85, 1.0)
    assert not check_filter_conditions(0.2, 1.0, 0.85, 1.0)
    assert not check_filter_conditions(0.1, 0.5, 0.85, 1.0)
    with pytest.raises(PreconditionError):
        check_filter_conditions(0.1, 0.0, 0.85, 1.0)
    with pytest.raises(PreconditionError):
        check_filter_conditions(0.1, 1.0, 1.2, 1.0)
