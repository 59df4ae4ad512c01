import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from decoherence_sim.errors import ValidationError
from decoherence_sim.noise_gen import (
    ComplexWhite,
    OUProcess,
    SumOfExponentials,
    estimate_autocorrelation,
    estimate_power_spectrum,
    make_complex_white_stream,
    make_ou_stream,
    make_stream,
    make_sum_of_exponentials_stream,
)
from decoherence_sim.spectral_bath import (
    BathParameters,
    LorentzDrude,
    high_temperature_power_spectrum,
)

UNIT_OU = OUProcess(1.0, 1.0)


def first_samples(spec, n, seed=11, dt=0.01):
    return np.array([make_stream(spec, seed, j, dt).sample(1)[0] for j in range(n)])


def test_first_sample_is_stationary_normal():
    x = first_samples(UNIT_OU, 4000)
    assert stats.kstest(x, "norm").pvalue > 1e-3


def test_tiny_step_is_continuous():
    x = make_ou_stream(UNIT_OU, 3, 0, 1e-12).sample(2)
    assert abs(x[1] - x[0]) < 1e-5


def test_lag_products_over_independent_pairs():
    # 10^6 independent (eta_0, eta_k) pairs, one per trajectory
    n, dt, lags = 10**6, 0.01, (1, 10, 100)
    acc = np.zeros(len(lags))
    for j in range(n):
        x = make_ou_stream(UNIT_OU, 2024, j, dt).sample(lags[-1] + 1)
        acc += x[0] * x[list(lags)]
    est = acc / n
    assert np.all(np.abs(est - np.exp(-np.array(lags) * dt)) < 5e-3)


def test_long_series_autocorrelation_within_three_stderr():
    dt = 0.05
    x = make_ou_stream(UNIT_OU, 5, 0, dt).sample(200_000)
    est = estimate_autocorrelation(x, 60, dt=dt)
    assert np.all(np.abs(est.values - np.exp(-est.times)) < 3 * est.stderr)


def test_single_term_sum_matches_ou_exactly():
    soe = SumOfExponentials(((2.0, 0.7),))
    ou = OUProcess(2.0, 0.7)
    a = make_sum_of_exponentials_stream(soe, 9, 4, 0.01).sample(1000)
    b = make_ou_stream(ou, 9, 4, 0.01).sample(1000)
    assert np.array_equal(a, b)


def test_two_term_variance_and_independence():
    soe = SumOfExponentials(((1.0, 1.0), (1.0, 5.0)))
    n = 20_000
    comps = np.array([make_sum_of_exponentials_stream(soe, 21, j, 0.01)
                      .sample_components(1)[0] for j in range(n)])
    eta = comps.sum(axis=1)
    sq = eta**2
    assert abs(sq.mean() - 2.0) < 3 * sq.std(ddof=1) / math.sqrt(n)
    cross = comps[:, 0] * comps[:, 1]
    assert abs(cross.mean()) < 4 * cross.std(ddof=1) / math.sqrt(n)


def test_component_cross_correlation_at_lag():
    soe = SumOfExponentials(((1.0, 1.0), (1.0, 5.0)))
    comps = make_sum_of_exponentials_stream(soe, 2, 0, 0.05).sample_components(200_000)
    lag = 20
    prod = comps[lag:, 0] * comps[:-lag, 1]
    # blocks of 100 correlation times are effectively independent
    blocks = prod[: prod.size // 10_000 * 10_000].reshape(-1, 10_000).mean(axis=1)
    assert abs(blocks.mean()) < 4 * blocks.std(ddof=1) / math.sqrt(blocks.size)


def test_complex_white_moments():
    n, dt = 10**6, 0.01
    eta = make_complex_white_stream(ComplexWhite(1.0), 8, 0, dt).sample(n)
    power = np.abs(eta) ** 2
    assert abs(power.mean() / 100.0 - 1) < 0.01
    se = math.sqrt(2) * 100 / math.sqrt(n)
    assert abs(np.mean(eta**2)) < 4 * se
    assert abs(np.mean(eta[:-1] * np.conj(eta[1:]))) < 4 * 100 / math.sqrt(n - 1)


def test_autocorrelation_constant_and_alternating():
    const = estimate_autocorrelation(np.full(1000, 1.7), 10)
    assert np.allclose(const.values, 1.7**2, rtol=1e-13)
    alt = estimate_autocorrelation(np.tile([1.0, -1.0], 500), 10)
    assert np.allclose(alt.values, (-1.0) ** np.arange(11), rtol=1e-13)


def test_autocorrelation_rejects_bad_lag():
    with pytest.raises(ValidationError):
        estimate_autocorrelation(np.zeros(10), 10)


def test_streams_are_reproducible_and_resumable():
    spec = SumOfExponentials(((0.5, 1.0), (1.5, 0.2)))
    a = make_stream(spec, 77, 3, 0.02).sample(500)
    b = make_stream(spec, 77, 3, 0.02).sample(500)
    assert np.array_equal(a, b)
    s = make_stream(spec, 77, 3, 0.02)
    c = np.concatenate([s.sample(123), s.sample(0), s.sample(377)])
    assert np.array_equal(a, c)
    other = make_stream(spec, 77, 4, 0.02).sample(500)
    assert not np.array_equal(a, other)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), idx=st.integers(0, 10**6),
       split=st.integers(0, 50))
def test_white_stream_resumable(seed, idx, split):
    spec = ComplexWhite(0.3)
    whole = make_stream(spec, seed, idx, 0.1).sample(50)
    s = make_stream(spec, seed, idx, 0.1)
    assert np.array_equal(whole, np.concatenate([s.sample(split), s.sample(50 - split)]))


def test_ou_stationarity_over_halves():
    x = make_ou_stream(UNIT_OU, 13, 0, 0.1).sample(200_000)
    halves = [estimate_autocorrelation(h, 0, dt=0.1) for h in np.split(x, 2)]
    diff = halves[0].values[0] - halves[1].values[0]
    se = math.hypot(halves[0].stderr[0], halves[1].stderr[0])
    assert abs(diff) < 4 * se


def test_power_spectrum_matches_bath():
    bp = BathParameters(1.0, LorentzDrude(0.5, 1.0))
    spec = OUProcess.from_bath(bp)
    dt = 0.01
    x = make_ou_stream(spec, 31, 0, dt).sample(2_000_000)
    omega, psd, n_seg = estimate_power_spectrum(x, dt, nperseg=16384)
    band = (omega > 0.05) & (omega < 3.0)
    ratio = psd[band] / high_temperature_power_spectrum(bp, omega[band])
    # Welch bins carry relative error ~ 1/sqrt(segments)
    assert np.all(np.abs(ratio - 1) < 4 / math.sqrt(n_seg / 2))
    assert abs(ratio.mean() - 1) < 4 / math.sqrt(n_seg / 2 * band.sum() / 4)


@pytest.mark.parametrize("spec,c", [(UNIT_OU, 1.0),
                                    (SumOfExponentials(((1.0, 1.0), (3.0, 0.5))), 2.0)])
def test_zero_mean(spec, c):
    x = first_samples(spec, 20_000, seed=5)
    assert abs(x.mean()) < 4 * c / math.sqrt(x.size)


def test_zero_variance_ou_is_silent():
    assert np.all(make_ou_stream(OUProcess(0.0, 1.0), 1, 0, 0.1).sample(100) == 0)


@pytest.mark.parametrize("bad", [lambda: OUProcess(-1, 1), lambda: OUProcess(1, 0),
                                 lambda: SumOfExponentials(()),
                                 lambda: ComplexWhite(-0.1),
                                 lambda: make_ou_stream(UNIT_OU, 0, 0, 0.0)])
def test_validation(bad):
    with pytest.raises(ValidationError):
        bad()
