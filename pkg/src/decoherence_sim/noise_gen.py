"""Stationary noise processes with reproducible per-trajectory random streams.

Every stream draws from its own :class:`numpy.random.Generator` seeded by
``SeedSequence(master_seed, spawn_key=(trajectory_index,))``, so trajectory
``j`` of a run is the same sequence no matter how many trajectories are
generated, in which order, or on how many threads.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import signal

from .errors import ValidationError
from .spectral_bath import CorrelationFunction, LorentzDrude


@dataclass(frozen=True)
class OUProcess:
    """Ornstein-Uhlenbeck noise with ``C(t) = variance * exp(-|t|/corr_time)``."""

    variance: float
    corr_time: float

    def __post_init__(self):
        if not (self.variance >= 0 and self.corr_time > 0):
            raise ValidationError("OU needs variance >= 0 and corr_time > 0")

    @classmethod
    def from_bath(cls, bp):
        """OU noise matching a high-temperature Lorentz-Drude bath:
        ``variance = 2 lam T`` and ``corr_time = 1/w_c``."""
        sd = bp.spectral
        if not isinstance(sd, LorentzDrude):
            raise ValidationError("from_bath needs a Lorentz-Drude bath")
        return cls(2.0 * sd.coupling * bp.temperature, 1.0 / sd.cutoff)

    def correlation(self, t):
        return self.variance * np.exp(-np.abs(np.asarray(t, dtype=float)) / self.corr_time)


@dataclass(frozen=True)
class SumOfExponentials:
    """``eta = sum_n c_n eta_n`` with independent unit OU components.

    ``terms`` is a sequence of ``(weight, corr_time)`` with ``weight = |c_n|^2``.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(w), float(tau)) for w, tau in self.terms)
        if not terms:
            raise ValidationError("SumOfExponentials needs at least one term")
        if any(w <= 0 or tau <= 0 for w, tau in terms):
            raise ValidationError("weights and correlation times must be positive")
        object.__setattr__(self, "terms", terms)

    def correlation(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return sum(w * np.exp(-t / tau) for w, tau in self.terms)


@dataclass(frozen=True)
class ComplexWhite:
    """Circular complex white noise with ``<eta(t) eta*(t')> = rate delta(t-t')``."""

    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValidationError("ComplexWhite rate must be non-negative")


NoiseProcessSpec = Union[OUProcess, SumOfExponentials, ComplexWhite]


def trajectory_generator(master_seed, trajectory_index):
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(trajectory_index),))
    return np.random.Generator(np.random.PCG64(seq))


class NoiseStream:
    """Sequential sampler for one noise realisation.

    ``sample(n)`` returns the next ``n`` values; successive calls continue the
    same realisation, so ``sample(a)`` followed by ``sample(b)`` equals
    ``sample(a + b)`` on a fresh stream.
    """

    def __init__(self, spec, master_seed, trajectory_index, dt):
        if not dt > 0:
            raise ValidationError(f"dt must be positive, got {dt}")
        self.spec = spec
        self.master_seed = int(master_seed)
        self.trajectory_index = int(trajectory_index)
        self.dt = float(dt)
        self._rng = trajectory_generator(master_seed, trajectory_index)
        if isinstance(spec, ComplexWhite):
            self._state = None
            return
        taus = np.array([tau for _, tau in self._unit_terms()])
        self._decay = np.exp(-self.dt / taus)
        self._kick = np.sqrt(-np.expm1(-2.0 * self.dt / taus))
        self._amplitude = np.sqrt([w for w, _ in self._unit_terms()])
        self._state = None

    def _unit_terms(self):
        if isinstance(self.spec, OUProcess):
            return ((self.spec.variance, self.spec.corr_time),)
        return self.spec.terms

    @property
    def components(self):
        """Current values of the unit-variance OU components (or ``None``)."""
        return None if self._state is None else self._state.copy()

    def _advance_components(self, n):
        """Next ``n`` rows of unit OU components, shape ``(n, n_terms)``."""
        m = self._decay.size
        out = np.empty((n, m))
        if n == 0:
            return out
        start = 0
        if self._state is None:
            self._state = self._rng.standard_normal(m)
            out[0] = self._state
            start = 1
        if n > start:
            xi = self._rng.standard_normal((n - start, m))
            for k in range(m):
                a, b = self._decay[k], self._kick[k]
                out[start:, k], _ = signal.lfilter(
                    [b], [1.0, -a], xi[:, k], zi=[a * self._state[k]])
            self._state = out[-1].copy()
        return out

    def sample_components(self, n):
        if isinstance(self.spec, ComplexWhite):
            raise ValidationError("white noise has no OU components")
        return self._advance_components(n)

    def sample(self, n):
        if isinstance(self.spec, ComplexWhite):
            xy = self._rng.standard_normal((n, 2))
            scale = math.sqrt(self.spec.rate / (2.0 * self.dt))
            return scale * (xy[:, 0] + 1j * xy[:, 1])
        comps = self._advance_components(n)
        return comps @ self._amplitude


def make_ou_stream(spec, master_seed, trajectory_index, dt):
    """Exact-update Ornstein-Uhlenbeck stream started in its stationary law."""
    if not isinstance(spec, OUProcess):
        raise ValidationError("make_ou_stream needs an OUProcess spec")
    return NoiseStream(spec, master_seed, trajectory_index, dt)


def make_sum_of_exponentials_stream(spec, master_seed, trajectory_index, dt):
    if not isinstance(spec, SumOfExponentials):
        raise ValidationError("needs a SumOfExponentials spec")
    return NoiseStream(spec, master_seed, trajectory_index, dt)


def make_complex_white_stream(spec, master_seed, trajectory_index, dt):
    """Per-step samples ``sqrt(rate/(2 dt)) (x + i y)``, x, y standard normal."""
    if not isinstance(spec, ComplexWhite):
        raise ValidationError("needs a ComplexWhite spec")
    return NoiseStream(spec, master_seed, trajectory_index, dt)


def make_stream(spec, master_seed, trajectory_index, dt):
    return NoiseStream(spec, master_seed, trajectory_index, dt)


def _block_lag_sums(x, max_lag, n_blocks):
    """Per-block sums of ``x[(i+k) mod N] * conj(x[i])`` for lags 0..max_lag."""
    n = x.size
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    wrapped = np.concatenate((x, x[:max_lag]))
    sums = np.empty((n_blocks, max_lag + 1), dtype=x.dtype)
    for g in range(n_blocks):
        lo, hi = edges[g], edges[g + 1]
        head = x[lo:hi]
        tail = wrapped[lo:hi + max_lag]
        size = 1 << int(np.ceil(np.log2(tail.size + head.size)))
        corr = np.fft.ifft(np.fft.fft(tail, size) * np.conj(np.fft.fft(head, size)))
        sums[g] = corr[:max_lag + 1] if np.iscomplexobj(x) else corr[:max_lag + 1].real
    return sums, np.diff(edges)


def estimate_autocorrelation(samples, max_lag, dt=1.0, n_blocks=20):
    """Empirical stationary autocorrelation ``C(k) = <x[i+k] x*[i]>``.

    Uses the 1/N-normalised circular estimator, which is positive
    semidefinite and exact for constant and periodic sequences.  Standard
    errors come from a delete-one-block jackknife over ``n_blocks``
    contiguous blocks.
    """
    x = np.asarray(samples)
    if x.ndim != 1:
        raise ValidationError("samples must be one-dimensional")
    x = x.astype(complex if np.iscomplexobj(x) else float)
    n = x.size
    if max_lag < 0 or max_lag >= n:
        raise ValidationError(f"max_lag must be in [0, {n - 1}], got {max_lag}")
    n_blocks = max(2, min(n_blocks, n))
    sums, counts = _block_lag_sums(x, max_lag, n_blocks)
    total = sums.sum(axis=0)
    estimate = total / n
    loo = (total[None, :] - sums) / (n - counts)[:, None]
    spread = loo - loo.mean(axis=0)
    stderr = np.sqrt((n_blocks - 1) / n_blocks * np.sum(np.abs(spread) ** 2, axis=0))
    return CorrelationFunction(dt * np.arange(max_lag + 1), estimate, stderr=stderr)


def estimate_power_spectrum(samples, dt, nperseg=4096):
    """Two-sided power spectrum ``C(w) = int C(t) exp(i w t) dt`` by Welch averaging.

    Returns ``(omega, spectrum, n_segments)`` for ``omega >= 0``.
    """
    x = np.asarray(samples, dtype=float)
    freq, psd = signal.welch(x, fs=1.0 / dt, nperseg=nperseg, detrend=False)
    n_segments = 2 * (x.size // nperseg) - 1
    return 2.0 * np.pi * freq, 0.5 * psd, n_segments
