import math

import numpy as np
import pytest

from decoherence_sim.dephasing_dynamics import EnsembleConfig, TwoLevelInitialState
from decoherence_sim.dissipation import (
    DissipationRates,
    QubitDensityMatrix,
    extract_rates,
    propagate_lindblad,
    propagate_noise_master_equation,
    run_dissipative_noise_ensemble,
)
from decoherence_sim.errors import ValidationError
from decoherence_sim.noise_gen import ComplexWhite, OUProcess

INIT = TwoLevelInitialState(math.sqrt(0.2), math.sqrt(0.8))


def precession(init, omega0, t):
    return init.c1 * np.conj(init.c0) * np.exp(-1j * omega0 * t)


def test_closed_system_precesses():
    s = propagate_lindblad(INIT, DissipationRates(0.0, 0.0, 1.0), 0.01, 10.0)
    assert np.max(np.abs(s.rho_eg - precession(INIT, 1.0, s.times))) < 1e-9
    assert np.max(np.abs(s.purity - 1)) < 1e-9


def test_lindblad_stationary_and_coherence_decay():
    rates = DissipationRates(0.2, 0.1, 1.0)
    s = propagate_lindblad(INIT, rates, 0.01, 60.0)
    assert abs(s.rho_ee[-1] - rates.stationary_excited) < 1e-7
    assert rates.stationary_excited == pytest.approx(0.4)
    expected = abs(s.rho_eg[0]) * np.exp(-rates.gamma_d * s.times)
    assert np.max(np.abs(np.abs(s.rho_eg) - expected)) < 1e-9
    assert np.max(s.trace_error) < 1e-10
    assert s.min_eigenvalue.min() >= -1e-8


def test_noise_master_equation_limits():
    s = propagate_noise_master_equation(INIT, 0.2, 1.0, 0.01, 60.0)
    assert np.max(np.abs(s.rho[-1] - 0.5 * np.eye(2))) < 1e-5
    fit = extract_rates(s.times, s.rho_eg, s.rho_ee)
    assert fit.decay_rate == pytest.approx(0.2, abs=1e-6)
    free = propagate_noise_master_equation(INIT, 0.0, 1.0, 0.01, 10.0)
    assert np.max(np.abs(free.rho_eg - precession(INIT, 1.0, free.times))) < 1e-9


def test_lindblad_equals_noise_equation_without_spontaneous_emission():
    a = propagate_lindblad(INIT, DissipationRates(0.3, 0.0, 1.3), 0.01, 20.0)
    b = propagate_noise_master_equation(INIT, 0.3, 1.3, 0.01, 20.0)
    assert np.max(np.abs(a.rho - b.rho)) < 1e-12


def test_stationary_gap():
    rates = DissipationRates(0.2, 0.1, 1.0)
    s = propagate_lindblad(INIT, rates, 0.01, 80.0)
    gap = abs(s.rho_ee[-1] - 0.5)
    assert gap == pytest.approx(rates.gamma_0 / (2 * (rates.gamma_e + rates.gamma_a)), abs=1e-7)


def test_rk4_trace_and_positivity_from_mixed_state():
    rho0 = QubitDensityMatrix([[0.5, 0.3 - 0.2j], [0.3 + 0.2j, 0.5]])
    s = propagate_lindblad(rho0, DissipationRates(0.5, 1.0, 2.0), 0.01, 20.0)
    assert np.max(s.trace_error) < 1e-10
    assert s.min_eigenvalue.min() >= -1e-8


def test_noiseless_ensemble_is_pure_precession():
    cfg = EnsembleConfig(10, 0.01, 5.0, 1, ComplexWhite(0.0))
    s = run_dissipative_noise_ensemble(INIT, 0.0, 1.0, cfg)
    assert np.max(np.abs(s.rho_eg - precession(INIT, 1.0, s.times))) < 1e-12
    assert np.max(s.stderr) < 1e-12


def test_ensemble_matches_master_equation():
    gamma, dt = 0.2, 0.01
    cfg = EnsembleConfig(2000, dt, 15.0, 5, ComplexWhite(gamma))
    ens = run_dissipative_noise_ensemble(INIT, gamma, 1.0, cfg)
    me = propagate_noise_master_equation(INIT, gamma, 1.0, dt, 15.0)
    tol = np.maximum(4 * ens.stderr, 10 * dt)
    assert np.all(np.abs(ens.rho - me.rho) <= tol)
    assert ens.max_norm_error < 1e-12


def test_ensemble_independent_of_threads():
    cfg = EnsembleConfig(1200, 0.02, 3.0, 8, ComplexWhite(0.3))
    a = run_dissipative_noise_ensemble(INIT, 0.3, 1.0, cfg, n_jobs=1)
    b = run_dissipative_noise_ensemble(INIT, 0.3, 1.0, cfg, n_jobs=3)
    assert a.rho.tobytes() == b.rho.tobytes()


def test_extract_rates_synthetic():
    t = np.linspace(0, 20, 2001)
    fit = extract_rates(t, 0.4 * np.exp(-0.3 * t) * np.exp(-1j * t), 0.25 + 0 * t)
    assert fit.decay_rate == pytest.approx(0.3, abs=1e-6)
    assert fit.stationary_excited == pytest.approx(0.25)


def test_extract_rates_requires_decay():
    t = np.linspace(0, 1, 101)
    with pytest.raises(ValidationError):
        extract_rates(t, np.exp(-0.3 * t), 0 * t)


@pytest.mark.parametrize("call", [
    lambda: propagate_lindblad(INIT, DissipationRates(0.2, 0.1, 1.0), 0.2, 1.0),
    lambda: DissipationRates(-0.1, 0.0, 1.0),
    lambda: propagate_noise_master_equation(INIT, -1.0, 1.0, 0.01, 1.0),
    lambda: run_dissipative_noise_ensemble(
        INIT, 0.2, 1.0, EnsembleConfig(2, 0.01, 1.0, 0, ComplexWhite(0.3))),
    lambda: run_dissipative_noise_ensemble(
        INIT, 0.2, 1.0, EnsembleConfig(2, 0.01, 1.0, 0, OUProcess(1.0, 1.0))),
    lambda: QubitDensityMatrix([[1.0, 0.0], [0.0, 0.5]]),
])
def test_validation(call):
    with pytest.raises(ValidationError):
        call()


def test_step_halving_at_acceptance_step():
    rates = DissipationRates(0.2, 0.1, 1.0)
    a = propagate_lindblad(INIT, rates, 0.01, 60.0)
    b = propagate_lindblad(INIT, rates, 0.005, 60.0)
    assert np.max(np.abs(a.rho - b.rho[::2])) < 1e-8
    a = propagate_noise_master_equation(INIT, 0.5, 1.0, 0.01, 6.0)
    b = propagate_noise_master_equation(INIT, 0.5, 1.0, 0.005, 6.0)
    assert np.max(np.abs(a.rho - b.rho[::2])) < 1e-8
