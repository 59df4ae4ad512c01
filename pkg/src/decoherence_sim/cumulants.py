"""Moment/cumulant conversion and second-order decoherence functions.

The decoherence function is written as ``Phi(t) = exp(K(t))`` with
``K = sum_n (-i)^n / n! kappa^(n)``.  For Gaussian baths and Gaussian noise
with zero mean only ``kappa^(2)`` survives and ``Phi = exp(-kappa^(2)/2)``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import comb

from ._grid import check_uniform_grid
from .errors import LogSingularityError, ValidationError
from .spectral_bath import (
    DiscreteModes,
    TabulatedSpectralDensity,
    _coth_discrete,
    _panel_points,
    _quad,
    scalar_thermal_weight,
    tabulated_nodes,
    thermal_weight,
)

EXACT_CUMULANT = "exact_cumulant"
ENSEMBLE = "ensemble"
FOCK_ORACLE = "fock_oracle"
PROVENANCES = (EXACT_CUMULANT, ENSEMBLE, FOCK_ORACLE)

#: Relative size of Im(kappa) tolerated before a cumulant counts as complex.
IMAG_RTOL = 1e-8
#: Infinite-support densities are integrated directly up to this multiple of
#: max(w_c, 1/beta); beyond it the tail is handled by Fourier quadrature.
_SPLIT_FACTOR = 20.0


@dataclass(frozen=True)
class CumulantSeries:
    """Cumulants ``kappa^(1..n)`` or a time-resolved ``kappa^(2)(t_i)``."""

    values: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        if self.times is not None:
            times, _ = check_uniform_grid(self.times)
            if times.shape != self.values.shape:
                raise ValidationError("cumulant values must match the time grid")
            object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class DecoherenceTrace:
    """Complex decoherence function on a uniform grid with provenance."""

    times: np.ndarray
    values: np.ndarray
    provenance: str
    stderr: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        times, _ = check_uniform_grid(self.times)
        values = np.asarray(self.values, dtype=complex)
        if values.shape != times.shape:
            raise ValidationError("trace values must match the time grid")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if values[0] != 1.0:
            raise ValidationError("a decoherence function must equal 1 at t = 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    @property
    def loschmidt(self):
        """``L(t) = |Phi(t)|^2``."""
        return np.abs(self.values) ** 2


def moments_to_cumulants(moments):
    """Raw moments ``mu^(1..n)`` to cumulants by the standard recursion.

    ``kappa_n = mu_n - sum_{m=1}^{n-1} C(n-1, m-1) kappa_m mu_{n-m}``
    """
    mu = list(moments)
    if not mu:
        raise ValidationError("at least one moment is required")
    kappa = []
    for n in range(1, len(mu) + 1):
        acc = mu[n - 1]
        for m in range(1, n):
            acc = acc - comb(n - 1, m - 1, exact=True) * kappa[m - 1] * mu[n - m - 1]
        kappa.append(acc)
    return CumulantSeries(np.asarray(kappa))


def _one_minus_cos_over_w2(w, t):
    if w == 0.0:
        return 0.5 * t * t
    half = math.sin(0.5 * w * t) / (0.5 * w)
    return 0.5 * half * half


def _kappa_half_line(weight, t, wtop, points=None, tail_flat=None):
    """``int_0^wtop h(w) (1 - cos wt)/w^2 dw`` (``wtop`` may be infinite).

    The finite part is integrated directly on panels one oscillation period
    wide.  For an infinite upper limit the range beyond ``wsplit`` is split
    into its constant part (``tail_flat``, independent of ``t``) and a
    Fourier integral.
    """
    wsplit, flat = tail_flat if tail_flat is not None else (wtop, 0.0)
    pts = sorted(set((_panel_points(0.0, wsplit, 2 * np.pi / t) or []) + (points or [])))
    low = _quad(lambda w: weight(w) * _one_minus_cos_over_w2(w, t), 0.0, wsplit,
                points=pts or None)
    if tail_flat is None:
        return low
    osc = _quad(lambda w: weight(w) / (w * w), wsplit, math.inf,
                weight="cos", wvar=t, scale=low)
    return low + flat - osc


def quantum_second_cumulant_spin_boson(bp, time_grid):
    """Second cumulant of the spin-boson decoherence function.

    ``kappa(t) = 8 int dw/2pi J(w) coth(beta w/2) (1 - cos wt)/w^2``
    (full line), evaluated as an exact mode sum for discrete baths, by
    panel Gauss-Legendre quadrature for tabulated densities and by adaptive
    quadrature otherwise.
    """
    times, _ = check_uniform_grid(time_grid)
    sd = bp.spectral
    if isinstance(sd, DiscreteModes):
        w = np.asarray(sd.frequencies)
        coth = _coth_discrete(bp, w)
        one_minus_cos = 1.0 - np.cos(np.outer(times, w))
        kappa = 8.0 * (one_minus_cos * (sd.weights * coth / w**2)).sum(axis=1)
        return CumulantSeries(kappa, times)

    if isinstance(sd, TabulatedSpectralDensity):
        kappa = np.zeros(times.shape)
        for i, t in enumerate(times):
            if t > 0:
                w, q = tabulated_nodes(sd, sd.omega_support, t)
                half = np.sin(0.5 * w * t) / (0.5 * w)
                kappa[i] = 8.0 / math.pi * (q @ (thermal_weight(bp, w) * 0.5 * half * half))
        return CumulantSeries(kappa, times)

    weight = scalar_thermal_weight(bp)
    wtop = sd.omega_support
    points = None
    tail = None
    if not math.isfinite(wtop):
        wsplit = _SPLIT_FACTOR * max(sd.cutoff, 1.0 / bp.beta)
        tail = (wsplit, _quad(lambda w: weight(w) / (w * w), wsplit, math.inf))

    def half_line(t):
        return _kappa_half_line(weight, t, wtop, points, tail)

    kappa = np.zeros(times.shape)
    for i, t in enumerate(times):
        if t > 0:
            kappa[i] = 8.0 / math.pi * half_line(t)
    return CumulantSeries(kappa, times)


def classical_second_cumulant_from_spectrum(power_spectrum, time_grid, scale=2.0):
    """Second cumulant of ``int_0^t scale*eta`` from the noise power spectrum.

    ``kappa(t) = 2 scale^2 int_{-inf}^{inf} dw/2pi (1 - cos wt)/w^2 C(w)``
    for an even spectrum ``C(w)``.  The integral runs over the dimensionless
    variable ``x = w t`` on the full line, independent of the half-line
    frequency quadrature used for the quantum cumulant.
    """
    times, _ = check_uniform_grid(time_grid)
    kappa = np.zeros(times.shape)
    xsplit = 40.0 * np.pi
    for i, t in enumerate(times):
        if t == 0:
            continue

        def core(x, t=t):
            return 0.5 * np.sinc(x / (2 * np.pi)) ** 2 * power_spectrum(x / t)

        def tail(x, t=t):
            return power_spectrum(x / t) / (x * x)

        pts = list(np.arange(-xsplit, xsplit + 1, 2 * np.pi)[1:-1])
        body = _quad(core, -xsplit, xsplit, points=pts)
        flat = 2.0 * _quad(tail, xsplit, math.inf)
        osc = 2.0 * _quad(tail, xsplit, math.inf, weight="cos", wvar=1.0)
        kappa[i] = 2.0 * scale**2 * t / (2 * math.pi) * (body + flat - osc)
    return CumulantSeries(kappa, times)


def classical_second_cumulant(corr, scale=2.0):
    """Second cumulant ``scale^2 * 2 int_0^t ds int_0^s ds' C(s - s')``.

    The double integral of the piecewise-linear interpolant of ``C`` is
    accumulated exactly, step by step, so the relative error is O(dt^2)
    uniformly down to the first grid point.
    """
    times, dt = check_uniform_grid(corr.times)
    c = corr.symmetrized
    if times.size == 1:
        return CumulantSeries(np.zeros(1), times)
    # inner(s) = int_0^s C(u) du, exact for the linear interpolant
    inner = np.concatenate(([0.0], np.cumsum(0.5 * dt * (c[1:] + c[:-1]))))
    step = dt * inner[:-1] + dt * dt * (c[:-1] / 3.0 + c[1:] / 6.0)
    outer = np.concatenate(([0.0], np.cumsum(step)))
    return CumulantSeries(2.0 * scale**2 * outer, times)


def classical_second_cumulant_2d(corr, scale=2.0, at=None):
    """Reference ``scale^2 iint_0^t C(s - s') ds ds'`` by the 2-D trapezoid
    rule on the full square.

    Each requested value costs O(N^2); ``at`` selects grid indices (the
    result is then a plain array), otherwise the whole grid is evaluated.
    """
    times, dt = check_uniform_grid(corr.times)
    c = corr.symmetrized
    indices = range(times.size) if at is None else at
    out = np.zeros(len(indices))
    for k, n in enumerate(indices):
        if n == 0:
            continue
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        lags = np.concatenate((c[n:0:-1], c[: n + 1]))   # C at lags -n..n
        rows = np.convolve(lags, w, mode="valid")         # sum_j w_j C(i - j)
        out[k] = scale**2 * dt * dt * (w @ rows)
    return CumulantSeries(out, times) if at is None else out


def decoherence_from_second_cumulant(kappa):
    """``Phi(t) = exp(-kappa(t)/2)`` for a real second cumulant."""
    if kappa.times is None:
        raise ValidationError("a time-resolved cumulant series is required")
    values = np.asarray(kappa.values)
    if np.iscomplexobj(values):
        scale = max(np.max(np.abs(values.real)), 1e-300)
        if np.max(np.abs(values.imag)) > IMAG_RTOL * scale:
            raise ValidationError(
                "second cumulant has a non-negligible imaginary part; "
                "energy-shift handling is not supported")
        values = values.real
    phi = np.exp(-0.5 * values)
    phi[0] = 1.0
    return DecoherenceTrace(kappa.times, phi, EXACT_CUMULANT)


def decoherence_generator(trace):
    """Rates ``d/dt ln Phi``: real part drives decay, imaginary part the phase.

    Returns ``(decay_rate, phase_rate)`` arrays on the trace grid
    (second-order central differences, one-sided at the ends).
    """
    phi = trace.values
    zero = np.flatnonzero(np.abs(phi) == 0.0)
    if zero.size:
        raise LogSingularityError(int(zero[0]))
    amplitude = np.log(np.abs(phi))
    phase = np.unwrap(np.angle(phi))
    dt = trace.times[1] - trace.times[0]
    edge = 2 if phi.size > 2 else 1
    decay = np.gradient(amplitude, dt, edge_order=edge)
    phase_rate = np.gradient(phase, dt, edge_order=edge)
    return decay, phase_rate
