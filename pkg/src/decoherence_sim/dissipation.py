"""Dissipative two-level dynamics: Lindblad versus classical complex noise.

Basis ordering is ``[g, e]`` with ``H_S = diag(-w0/2, +w0/2)``,
``sigma_- = |g><e|`` and ``sigma_+ = |e><g|``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .dephasing_dynamics import (
    EnsembleConfig,
    TwoLevelInitialState,
    map_chunks,
    merge_moments,
)
from .errors import IntegrationError, ValidationError
from .noise_gen import ComplexWhite, make_complex_white_stream

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
TRACE_DRIFT_TOL = 1e-8
STEP_STABILITY = 0.1
#: Trajectories per chunk in the noise ensemble; each chunk doubles as one
#: batch for batch-means error estimates.
NOISE_CHUNK_SIZE = 500


def system_hamiltonian(omega0):
    return np.diag([-0.5 * omega0, 0.5 * omega0]).astype(complex)


@dataclass(frozen=True)
class QubitDensityMatrix:
    """Validated 2x2 density matrix in the ``[g, e]`` basis."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (2, 2):
            raise ValidationError("density matrix must be 2x2")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValidationError("density matrix must be Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-12:
            raise ValidationError("density matrix must have unit trace")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValidationError("density matrix must be positive semidefinite")
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_state(cls, state):
        return cls(state.density_matrix())

    @property
    def rho_gg(self):
        return self.matrix[0, 0].real

    @property
    def rho_ee(self):
        return self.matrix[1, 1].real

    @property
    def rho_eg(self):
        return self.matrix[1, 0]


@dataclass(frozen=True)
class DissipationRates:
    """Absorption ``gamma_a`` and spontaneous emission ``gamma_0`` rates."""

    gamma_a: float
    gamma_0: float
    omega0: float

    def __post_init__(self):
        if self.gamma_a < 0 or self.gamma_0 < 0:
            raise ValidationError("rates must be non-negative")

    @property
    def gamma_e(self):
        """Total emission rate: stimulated (= absorption) plus spontaneous."""
        return self.gamma_a + self.gamma_0

    @property
    def gamma_d(self):
        return 0.5 * (self.gamma_e + self.gamma_a)

    @property
    def stationary_excited(self):
        return self.gamma_a / (self.gamma_e + self.gamma_a)


@dataclass(frozen=True)
class DensityMatrixSeries:
    """Density matrices ``rho[i]`` at ``times[i]``.

    Ensemble runs also carry elementwise standard errors, per-batch means
    (``batch_rho``, shape ``(n_batches, n_t, 2, 2)``, with trajectory counts
    ``batch_counts``) and the largest per-trajectory norm deviation.
    """

    times: np.ndarray
    rho: np.ndarray
    stderr: Optional[np.ndarray] = None
    batch_rho: Optional[np.ndarray] = field(default=None, repr=False)
    batch_counts: Optional[tuple] = None
    max_norm_error: Optional[float] = None

    @property
    def rho_gg(self):
        return self.rho[:, 0, 0].real

    @property
    def rho_ee(self):
        return self.rho[:, 1, 1].real

    @property
    def rho_eg(self):
        return self.rho[:, 1, 0]

    @property
    def purity(self):
        return np.einsum("tij,tji->t", self.rho, self.rho).real

    @property
    def trace_error(self):
        return np.abs(np.trace(self.rho, axis1=1, axis2=2) - 1.0)

    @property
    def min_eigenvalue(self):
        herm = 0.5 * (self.rho + np.conj(np.swapaxes(self.rho, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]

    def __getitem__(self, i):
        return QubitDensityMatrix(self.rho[i])


def _liouvillian(hamiltonian, jumps):
    """Row-major vectorised generator ``vec(d rho/dt) = L vec(rho)``."""
    eye = np.eye(2)
    gen = -1j * (np.kron(hamiltonian, eye) - np.kron(eye, hamiltonian.T))
    for rate, op in jumps:
        ldag_l = op.conj().T @ op
        gen += rate * (np.kron(op, op.conj())
                       - 0.5 * np.kron(ldag_l, eye) - 0.5 * np.kron(eye, ldag_l.T))
    return gen


def _rk4_propagate(rho0, generator, dt, t_final):
    n = int(round(t_final / dt))
    h = dt * generator
    # one classical RK4 step of a linear ODE is this degree-4 Taylor polynomial
    step = np.eye(4) + h @ (np.eye(4) + h @ (np.eye(4) / 2 + h @ (np.eye(4) / 6 + h / 24)))
    out = np.empty((n + 1, 4), dtype=complex)
    out[0] = rho0.reshape(4)
    for i in range(n):
        out[i + 1] = step @ out[i]
        drift = abs(out[i + 1, 0] + out[i + 1, 3] - 1.0)
        if drift > TRACE_DRIFT_TOL:
            raise IntegrationError(
                f"trace drifted by {drift:.3g} at step {i + 1} (t={(i + 1) * dt:.6g})")
    return DensityMatrixSeries(dt * np.arange(n + 1), out.reshape(n + 1, 2, 2))


def _as_rho(rho0):
    if isinstance(rho0, QubitDensityMatrix):
        return rho0.matrix
    if isinstance(rho0, TwoLevelInitialState):
        return rho0.density_matrix()
    return QubitDensityMatrix(rho0).matrix


def _check_step(dt, t_final, *scales):
    if not dt > 0 or not t_final >= dt:
        raise ValidationError("need dt > 0 and t_final >= dt")
    if dt * max(scales) >= STEP_STABILITY:
        raise ValidationError(
            f"dt={dt} too large: dt * max(rates, w0) must stay below {STEP_STABILITY}")


def propagate_lindblad(rho0, rates, dt, t_final):
    """RK4 integration of the thermal two-level Lindblad equation."""
    _check_step(dt, t_final, rates.gamma_e, rates.gamma_a, rates.omega0)
    jumps = [(rates.gamma_e, SIGMA_MINUS), (rates.gamma_a, SIGMA_PLUS)]
    gen = _liouvillian(system_hamiltonian(rates.omega0), jumps)
    return _rk4_propagate(_as_rho(rho0), gen, dt, t_final)


def propagate_noise_master_equation(rho0, gamma, omega0, dt, t_final):
    """RK4 integration of the noise-averaged master equation: equal rates
    ``gamma`` on the lowering and raising channels."""
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    _check_step(dt, t_final, gamma, omega0)
    jumps = [(gamma, SIGMA_MINUS), (gamma, SIGMA_PLUS)]
    gen = _liouvillian(system_hamiltonian(omega0), jumps)
    return _rk4_propagate(_as_rho(rho0), gen, dt, t_final)


def _unitary_step(psi, eta, omega0, dt):
    """Apply ``exp(-i H dt)`` with ``H = H_S + eta s_- + eta* s_+`` row-wise.

    ``H = n . sigma`` is traceless, so ``exp(-i H dt) = cos(|n| dt) - i
    sin(|n| dt) H/|n|``.
    """
    g, e = psi[:, 0], psi[:, 1]
    norm_n = np.sqrt(0.25 * omega0 * omega0 + np.abs(eta) ** 2)
    c = np.cos(norm_n * dt)
    s_over_n = dt * np.sinc(norm_n * dt / np.pi)
    hg = -0.5 * omega0 * g + eta * e
    he = np.conj(eta) * g + 0.5 * omega0 * e
    out = np.empty_like(psi)
    out[:, 0] = c * g - 1j * s_over_n * hg
    out[:, 1] = c * e - 1j * s_over_n * he
    return out


def run_dissipative_noise_ensemble(init, gamma, omega0, cfg, n_jobs=1,
                                   chunk_size=NOISE_CHUNK_SIZE):
    """Average of unitary trajectories driven by circular complex white noise.

    Each step applies the exact 2x2 propagator of ``H_S + eta_i s_- +
    eta_i^* s_+`` with ``eta_i`` held constant over the step.
    """
    if not isinstance(cfg.noise, ComplexWhite):
        raise ValidationError("the dissipative ensemble needs ComplexWhite noise")
    if not math.isclose(cfg.noise.rate, gamma, rel_tol=1e-12, abs_tol=0.0):
        raise ValidationError(f"noise rate {cfg.noise.rate} does not match gamma={gamma}")
    times = cfg.times
    n_steps = times.size - 1
    psi0 = init.vector

    def chunk(lo, hi):
        m = hi - lo
        eta = np.stack([
            make_complex_white_stream(cfg.noise, cfg.master_seed, j, cfg.dt).sample(n_steps)
            for j in range(lo, hi)])
        psi = np.tile(psi0, (m, 1))
        # columns: populations (g, e) and coherence rho_eg
        mean = np.empty((times.size, 3), dtype=complex)
        m2 = np.empty((times.size, 3))
        row = np.empty((m, 3), dtype=complex)
        worst = 0.0
        for i in range(times.size):
            if i:
                psi = _unitary_step(psi, eta[:, i - 1], omega0, cfg.dt)
            p = np.abs(psi) ** 2
            worst = max(worst, float(np.max(np.abs(p.sum(axis=1) - 1.0))))
            row[:, :2] = p
            row[:, 2] = psi[:, 1] * np.conj(psi[:, 0])
            mean[i] = row.mean(axis=0)
            m2[i] = (np.abs(row - mean[i]) ** 2).sum(axis=0)
        return (m, mean, m2), worst

    results = map_chunks(chunk, cfg.n_traj, n_jobs, chunk_size)
    n, mean, m2 = merge_moments([r[0] for r in results])
    worst = max(r[1] for r in results)
    batches = [_assemble(part[1][:, :2].real, part[1][:, 2]) for part, _ in results]
    counts = [part[0] for part, _ in results]
    rho = _assemble(mean[:, :2].real, mean[:, 2])
    stderr = np.zeros(rho.shape)
    if n > 1:
        se = np.sqrt(m2 / (n - 1) / n)
        stderr[:, 0, 0], stderr[:, 1, 1] = se[:, 0], se[:, 1]
        stderr[:, 1, 0] = stderr[:, 0, 1] = se[:, 2]
    return DensityMatrixSeries(times, rho, stderr=stderr, batch_rho=np.stack(batches),
                               batch_counts=tuple(counts), max_norm_error=worst)


def _assemble(pops, coh):
    rho = np.empty((pops.shape[0], 2, 2), dtype=complex)
    rho[:, 0, 0] = pops[:, 0]
    rho[:, 1, 1] = pops[:, 1]
    rho[:, 1, 0] = coh
    rho[:, 0, 1] = np.conj(coh)
    return rho


class RateEstimate(NamedTuple):
    decay_rate: float
    stationary_excited: float


#: Largest RMS residual of the log-linear coherence fit accepted as "decaying".
FIT_RESIDUAL_TOL = 0.1


def extract_rates(times, coherence, excited_population, tail_fraction=0.2,
                  decay_depth=2.0):
    """Fit ``|coherence| ~ exp(-rate t)`` and average the excited population tail.

    The fit uses the leading stretch where ``|coherence|`` stays above
    ``exp(-decay_depth)`` of its initial value; the series must fall below
    that level somewhere.
    """
    times = np.asarray(times, dtype=float)
    amp = np.abs(np.asarray(coherence))
    pop = np.asarray(excited_population, dtype=float)
    if amp[0] <= 0:
        raise ValidationError("coherence must be non-zero initially")
    floor = amp[0] * math.exp(-decay_depth)
    below = np.flatnonzero(amp < floor)
    if below.size == 0:
        raise ValidationError(
            f"coherence does not decay by a factor e^{decay_depth:g} within the series")
    stop = int(below[0])
    if stop < 3:
        raise ValidationError("too few points before the coherence decays")
    slope, intercept = np.polyfit(times[:stop], np.log(amp[:stop]), 1)
    resid = np.log(amp[:stop]) - (slope * times[:stop] + intercept)
    if np.sqrt(np.mean(resid**2)) > FIT_RESIDUAL_TOL:
        raise ValidationError("coherence decay is not exponential (fit residual too large)")
    tail = max(1, int(round(tail_fraction * pop.size)))
    return RateEstimate(float(-slope), float(np.mean(pop[-tail:])))


def batch_rate_errors(series, **kwargs):
    """Jackknife standard errors of the fitted rate and stationary population.

    Each batch of trajectories is deleted in turn and the fit repeated on the
    remaining ensemble average.
    """
    if series.batch_rho is None or series.batch_rho.shape[0] < 2:
        raise ValidationError("jackknife errors need an ensemble series with >= 2 batches")
    counts = np.asarray(series.batch_counts, dtype=float)
    sums = series.batch_rho * counts[:, None, None, None]
    total = sums.sum(axis=0)
    fits = []
    for b in range(counts.size):
        rho = (total - sums[b]) / (counts.sum() - counts[b])
        fits.append(extract_rates(series.times, rho[:, 1, 0], rho[:, 1, 1].real, **kwargs))
    fits = np.array(fits)
    k = counts.size
    spread = np.sum((fits - fits.mean(axis=0)) ** 2, axis=0)
    return RateEstimate(*np.sqrt((k - 1) / k * spread))
