import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uafd.errors import DegenerateRealization, UndefinedSNR
from uafd.noise import (CorruptionPlan, NoiseKind, NoiseSpec, corrupt_split, corruption_count,
                        generate_noise, inject_noise, noise_scale, signal_power, snr_db)
from uafd.rng import derive_rng
from uafd.signal import Burst, generate_synthetic

KINDS = list(NoiseKind)


def test_signal_power_examples():
    assert signal_power([1, 1, 1, 1]) == 1.0
    assert signal_power(np.zeros(8)) == 0.0
    assert signal_power([3, 4]) == 12.5


def test_snr_examples():
    assert snr_db(1, 1) == 0.0
    assert snr_db(10, 1) == pytest.approx(10.0)
    with pytest.raises(UndefinedSNR):
        snr_db(1, 0)
    with pytest.raises(UndefinedSNR):
        snr_db(0, 1)


@pytest.mark.parametrize("kind", KINDS)
def test_unit_power(kind):
    x = generate_noise(NoiseSpec(kind, 0.0), 10_000, derive_rng(0, "n"))
    assert abs(signal_power(x) - 1.0) < 1e-9


def test_impulse_sparsity():
    x = generate_noise(NoiseSpec("impulse", 0.0, impulse_p=0.05), 10_000, derive_rng(1))
    frac = np.mean(x != 0)
    assert 0.03 <= frac <= 0.07
    # bipolar with a single amplitude
    assert len(np.unique(np.abs(x[x != 0]))) == 1
    assert (x > 0).any() and (x < 0).any()


@pytest.mark.parametrize("kind", ["impulse", "rayleigh", "weibull"])
def test_symmetric_noise_mean(kind):
    x = generate_noise(NoiseSpec(kind, 0.0), 100_000, derive_rng(2, kind))
    assert abs(x.mean()) < 0.02


@pytest.mark.parametrize("kind", KINDS)
def test_noise_determinism(kind):
    spec = NoiseSpec(kind, 0.0)
    a = generate_noise(spec, 300, derive_rng(5, "x"))
    b = generate_noise(spec, 300, derive_rng(5, "x"))
    assert np.array_equal(a, b)


def test_degenerate_realization():
    # one sample at p=1e-12: every draw is an all-zero vector
    with pytest.raises(DegenerateRealization):
        generate_noise(NoiseSpec("impulse", 0.0, impulse_p=1e-12), 1, derive_rng(0))


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", math.inf)
    with pytest.raises(ValueError):
        NoiseSpec("impulse", 0.0, impulse_p=0.0)
    with pytest.raises(ValueError):
        NoiseSpec("weibull", 0.0, weibull_k=0.0)
    with pytest.raises(ValueError):
        NoiseKind.parse("pink")
    assert NoiseSpec("Gaussian", -5).key == "gaussian@-5dB"
    assert NoiseSpec("weibull", 5).key == "weibull@+5dB"


def test_inject_unit_burst_examples():
    b = Burst(np.ones(512), 0)
    out = inject_noise(b, NoiseSpec("gaussian", 0.0), derive_rng(0))
    assert out.ood
    assert signal_power(out.values - b.values) == pytest.approx(1.0, abs=1e-9)
    out = inject_noise(b, NoiseSpec("gaussian", -5.0), derive_rng(0))
    assert signal_power(out.values - b.values) == pytest.approx(10 ** 0.5, rel=1e-9)


def test_inject_zero_burst():
    with pytest.raises(UndefinedSNR):
        inject_noise(Burst(np.zeros(16), 0), NoiseSpec("gaussian", 0.0), derive_rng(0))


@settings(max_examples=120, deadline=None)
@given(kind=st.sampled_from(KINDS), snr=st.sampled_from([-5.0, 0.0, 5.0]),
       seed=st.integers(0, 2**32), amp=st.floats(1e-3, 1e3))
def test_calibration_property(kind, snr, seed, amp):
    rng = derive_rng(seed, "burst")
    b = Burst(amp * rng.standard_normal(512), 0)
    out = inject_noise(b, NoiseSpec(kind, snr), derive_rng(seed, "noise"))
    achieved = snr_db(signal_power(b.values), signal_power(out.values - b.values))
    assert abs(achieved - snr) <= 0.1
    # additivity: the added noise has power scale**2
    scale = noise_scale(signal_power(b.values), snr)
    assert signal_power(out.values - b.values) == pytest.approx(scale ** 2, rel=1e-9)


def test_corruption_count_rounding():
    assert corruption_count(100, 0.2) == 20
    assert corruption_count(500, 0.2) == 100
    assert corruption_count(7, 0.5) == 4


def test_corrupt_split_twenty_percent():
    ds = generate_synthetic(2, 50, 64, seed=0)
    out, mask = corrupt_split(ds, CorruptionPlan(NoiseSpec("rayleigh", 0.0), 0.2, seed=3))
    assert mask.sum() == 20
    assert np.array_equal(out.ood, mask)
    assert np.array_equal(out.values[~mask], ds.values[~mask])
    assert not np.any(np.all(out.values[mask] == ds.values[mask], axis=1))
    assert np.array_equal(out.labels, ds.labels)


def test_corrupt_split_zero_fraction():
    ds = generate_synthetic(2, 5, 32, seed=0)
    out, mask = corrupt_split(ds, CorruptionPlan(NoiseSpec("gaussian", 0.0), 0.0, seed=1))
    assert not mask.any()
    assert np.array_equal(out.values, ds.values)


def test_corrupt_split_determinism_and_shared_selection():
    ds = generate_synthetic(3, 20, 64, seed=2)
    plan = CorruptionPlan(NoiseSpec("weibull", -5.0), 0.2, seed=9)
    a, ma = corrupt_split(ds, plan)
    b, mb = corrupt_split(ds, plan)
    assert np.array_equal(ma, mb) and np.array_equal(a.values, b.values)
    # the selection does not depend on noise kind or level
    _, mc = corrupt_split(ds, CorruptionPlan(NoiseSpec("impulse", 5.0), 0.2, seed=9))
    assert np.array_equal(ma, mc)


def test_snr_calibration_grid():
    # every kind x level x 200 bursts within 0.1 dB
    worst = 0.0
    for kind in KINDS:
        for snr in (-5.0, 0.0, 5.0):
            for i in range(200):
                b = Burst(derive_rng(1, "b", i).standard_normal(512), 0)
                out = inject_noise(b, NoiseSpec(kind, snr), derive_rng(1, kind.value, snr, i))
                got = snr_db(signal_power(b.values), signal_power(out.values - b.values))
                worst = max(worst, abs(got - snr))
    assert worst <= 0.1
