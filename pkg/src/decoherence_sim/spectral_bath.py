"""Bath spectral densities and bosonic bath time-correlation functions.

Conventions (hbar = k_B = 1)::

    J(w)   = pi * sum_k |g_k|^2 delta(w - w_k),  w > 0,   J(-w) = -J(w)
    D(t)   = (1/pi) int_0^inf J(w) [coth(beta w / 2) cos(w t) - i sin(w t)] dw
    S(t)   = Re D(t)

The Lorentz-Drude (Ohmic, algebraic cutoff) density is
``J(w) = 2 lam w_c w / (w^2 + w_c^2)``.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate

from ._grid import check_uniform_grid
from .errors import OutOfRangeError, QuadratureError, ValidationError

#: Above this value of beta*w/2 the hyperbolic cotangent is replaced by 1.
COTH_CUTOFF = 20.0
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-11
QUAD_LIMIT = 2000
#: Quadrature error estimates above this relative level are reported as failures.
QUAD_FAIL_RTOL = 1e-7
#: Gauss-Legendre order per panel for tabulated densities.
GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


# --- spectral densities ------------------------------------------------------

@dataclass(frozen=True)
class LorentzDrude:
    """Ohmic spectral density with a Lorentz-Drude cutoff.

    Parameters
    ----------
    coupling : float
        Reorganisation-type coupling strength ``lam`` (energy units).
    cutoff : float
        Cutoff frequency ``w_c``.
    """

    coupling: float
    cutoff: float

    def __post_init__(self):
        if not (self.coupling > 0 and self.cutoff > 0):
            raise ValidationError(
                f"LorentzDrude needs coupling > 0 and cutoff > 0, got "
                f"{self.coupling}, {self.cutoff}")

    def j_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 2.0 * self.coupling * self.cutoff / (omega**2 + self.cutoff**2)

    def _positive(self, omega):
        return omega * self.j_over_omega(omega)

    @property
    def omega_support(self):
        return math.inf

    def default_omega_max(self, beta):
        return max(50.0 * self.cutoff, 50.0 / beta)


@dataclass(frozen=True)
class DiscreteModes:
    """Finite set of harmonic modes ``(w_k, g_k)``.

    The spectral density is a sum of delta peaks, so it cannot be evaluated
    pointwise; every bath quantity is computed as an exact mode sum instead.
    """

    frequencies: tuple
    couplings: tuple

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        gs = tuple(complex(g) if np.iscomplexobj(g) else float(g)
                   for g in self.couplings)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "couplings", gs)
        if len(freqs) == 0 or len(freqs) != len(gs):
            raise ValidationError("DiscreteModes needs equally many frequencies "
                                  "and couplings (at least one)")
        if min(freqs) <= 0:
            raise ValidationError("all mode frequencies must be positive")
        if len(set(freqs)) != len(freqs):
            raise ValidationError("mode frequencies must be distinct")

    @property
    def weights(self):
        """``|g_k|^2`` as an array."""
        return np.abs(np.asarray(self.couplings)) ** 2


@dataclass(frozen=True)
class TabulatedSpectralDensity:
    """Spectral density sampled on a grid ``0 < w_0 < ... < w_n``.

    Values are interpolated linearly; between 0 and the first sample the
    interpolation runs to ``J(0) = 0``.  Evaluation beyond ``w_n`` raises
    :class:`OutOfRangeError`.
    """

    omega: tuple
    values: tuple

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if om.ndim != 1 or om.shape != vals.shape or om.size < 2:
            raise ValidationError("tabulated J needs two matching 1-D columns "
                                  "with at least two rows")
        if om[0] <= 0 or np.any(np.diff(om) <= 0):
            raise ValidationError("tabulated frequencies must be positive and "
                                  "strictly increasing")
        if np.any(vals < 0):
            raise ValidationError("tabulated J must be non-negative")
        object.__setattr__(self, "omega", tuple(om))
        object.__setattr__(self, "values", tuple(vals))

    @classmethod
    def from_csv(cls, path):
        """Read a two-column CSV with header ``omega,J``."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header != ["omega", "J"]:
                raise ValidationError(
                    f"{path}: expected header 'omega,J', got {','.join(header)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    a, b = row
                    rows.append((float(a), float(b)))
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: expected two numbers, "
                                          f"got {','.join(row)!r}") from None
        if not rows:
            raise ValidationError(f"{path}: no data rows")
        om, vals = zip(*rows)
        return cls(om, vals)

    def _nodes(self):
        return (np.concatenate(([0.0], self.omega)),
                np.concatenate(([0.0], self.values)))

    def _positive(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega > self.omega[-1]):
            raise OutOfRangeError(
                f"frequency beyond tabulated range (max {self.omega[-1]})")
        xs, ys = self._nodes()
        return np.interp(omega, xs, ys)

    def j_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        slope0 = self.values[0] / self.omega[0]
        safe = np.where(omega > 0, omega, 1.0)
        return np.where(omega > 0, self._positive(omega) / safe, slope0)

    @property
    def omega_support(self):
        return self.omega[-1]

    def default_omega_max(self, beta):
        return self.omega[-1]


SpectralDensity = Union[LorentzDrude, DiscreteModes, TabulatedSpectralDensity]


@dataclass(frozen=True)
class BathParameters:
    """Thermal bosonic bath: inverse temperature plus spectral density.

    ``high_temperature=True`` replaces ``coth(beta w/2)`` by its classical
    limit ``2/(beta w)`` everywhere (the regime in which an exponentially
    correlated classical noise reproduces the Lorentz-Drude bath exactly).
    """

    beta: float
    spectral: SpectralDensity
    high_temperature: bool = False

    def __post_init__(self):
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise ValidationError(f"beta must be positive and finite, got {self.beta}")

    @property
    def temperature(self):
        return 1.0 / self.beta

    def occupation(self, omega):
        """Bose-Einstein occupation ``1/(exp(beta w) - 1)``."""
        x = self.beta * np.asarray(omega, dtype=float)
        return np.exp(-x) / -np.expm1(-x)


@dataclass(frozen=True)
class CorrelationFunction:
    """Two-time correlation ``D(t)`` sampled on a uniform grid from ``t=0``.

    ``stderr`` is only populated for empirical estimates.
    """

    times: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        times, _ = check_uniform_grid(self.times)
        values = np.asarray(self.values)
        if values.shape != times.shape:
            raise ValidationError("values must match the time grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def symmetrized(self):
        """``S(t) = Re D(t)``."""
        return np.real(self.values).astype(float)


# --- helpers -----------------------------------------------------------------

def _xcothx(x):
    """``x coth x`` with the exact limit 1 at ``x = 0`` and no overflow."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    big = np.abs(x) > COTH_CUTOFF
    safe = np.where(small | big, 1.0, x)
    out = safe / np.tanh(safe)
    out = np.where(big, np.abs(x), out)
    return np.where(small, 1.0 + x * x / 3.0, out)


def thermal_weight(bp, omega):
    """``J(w) coth(beta w / 2)`` for ``w >= 0``, finite at ``w = 0``."""
    sd = bp.spectral
    if isinstance(sd, DiscreteModes):
        raise ValidationError("discrete spectral densities have no pointwise weight")
    omega = np.asarray(omega, dtype=float)
    x = 0.5 * bp.beta * omega
    factor = 1.0 if bp.high_temperature else _xcothx(x)
    return sd.j_over_omega(omega) * (2.0 / bp.beta) * factor


def scalar_thermal_weight(bp):
    """Pure-float version of :func:`thermal_weight` for quadrature callbacks."""
    sd = bp.spectral
    beta = bp.beta
    if isinstance(sd, LorentzDrude):
        amp = 2.0 * sd.coupling * sd.cutoff * 2.0 / beta
        wc2 = sd.cutoff * sd.cutoff
        if bp.high_temperature:
            return lambda w: amp / (w * w + wc2)

        def weight(w):
            x = 0.5 * beta * w
            if x > COTH_CUTOFF:
                xc = x
            elif x < 1e-8:
                xc = 1.0 + x * x / 3.0
            else:
                xc = x / math.tanh(x)
            return amp * xc / (w * w + wc2)
        return weight
    return lambda w: float(thermal_weight(bp, w))


def _coth_discrete(bp, omega):
    omega = np.asarray(omega, dtype=float)
    if bp.high_temperature:
        return 2.0 / (bp.beta * omega)
    return _xcothx(0.5 * bp.beta * omega) / (0.5 * bp.beta * omega)


def _quad(func, a, b, scale=0.0, **kwargs):
    """``scipy.integrate.quad`` that raises when the error estimate exceeds
    ``QUAD_FAIL_RTOL`` relative to ``max(|value|, scale)``."""
    kwargs.setdefault("epsabs", QUAD_EPSABS)
    kwargs.setdefault("epsrel", QUAD_EPSREL)
    if "weight" not in kwargs or b != math.inf:
        kwargs.setdefault("limit", QUAD_LIMIT)
    else:
        kwargs.setdefault("limlst", 200)
    value, abserr, info = integrate.quad(func, a, b, full_output=1, **kwargs)[:3]
    if not math.isfinite(value) or abserr > max(QUAD_FAIL_RTOL * max(abs(value), scale), 1e-12):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not converge: value={value!r}, "
            f"error estimate={abserr!r}")
    return value


def _panel_points(a, b, period, max_points=400):
    """Breakpoints one oscillation period apart inside ``(a, b)``."""
    if not math.isfinite(period) or period <= 0:
        return None
    n = int((b - a) / period)
    if n < 1:
        return None
    step = (b - a) / min(n + 1, max_points)
    return list(a + step * np.arange(1, min(n + 1, max_points)))


def tabulated_nodes(sd, wmax, t):
    """Gauss-Legendre nodes and weights on ``[0, wmax]`` for a tabulated density.

    Panels break at every table node (the interpolant is linear in between)
    and every half period of ``cos(w t)``, so each panel integrand is smooth
    and slowly varying.
    """
    nodes = np.asarray(sd.omega)
    edges = [np.array([0.0, wmax]), nodes[nodes < wmax]]
    if t > 0:
        edges.append(np.arange(math.pi / t, wmax, math.pi / t))
    edges = np.unique(np.concatenate(edges))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * _GL_X).ravel(), (half[:, None] * _GL_W).ravel()


# --- operations --------------------------------------------------------------

def evaluate_spectral_density(sd, omega):
    """Evaluate ``J`` at signed frequency ``omega`` (antisymmetric extension)."""
    if isinstance(sd, DiscreteModes):
        raise ValidationError("a discrete spectral density is a sum of delta "
                              "peaks and cannot be evaluated pointwise")
    omega = np.asarray(omega, dtype=float)
    out = np.sign(omega) * sd._positive(np.abs(omega))
    return float(out) if out.ndim == 0 else out


def high_temperature_power_spectrum(bp, omega):
    """Classical-limit noise spectrum ``4 lam T w_c / (w^2 + w_c^2)``."""
    sd = bp.spectral
    if not isinstance(sd, LorentzDrude):
        raise ValidationError("high-temperature power spectrum is only defined "
                              "for the Lorentz-Drude density")
    omega = np.asarray(omega, dtype=float)
    out = 4.0 * sd.coupling * bp.temperature * sd.cutoff / (omega**2 + sd.cutoff**2)
    return float(out) if out.ndim == 0 else out


def high_temperature_correlation(bp, times):
    """Inverse Fourier transform of :func:`high_temperature_power_spectrum`.

    Computed by Fourier quadrature; analytically ``2 lam T exp(-w_c |t|)``.
    """
    high_temperature_power_spectrum(bp, 0.0)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    spectrum = lambda w: high_temperature_power_spectrum(bp, w)  # noqa: E731
    out = np.empty(times.shape)
    for i, t in enumerate(np.abs(times)):
        if t == 0.0:
            out[i] = _quad(spectrum, 0.0, math.inf) / math.pi
        else:
            out[i] = _quad(spectrum, 0.0, math.inf, weight="cos", wvar=t) / math.pi
    return out


def correlation_at(bp, times, omega_max=None):
    """Bath correlation ``D(t)`` at arbitrary (also negative) times.

    Continuous densities are integrated over ``(0, omega_max]``; by default
    ``omega_max = max(50 w_c, 50/beta)`` for Lorentz-Drude (its ``D(0)``
    diverges logarithmically without a cutoff) and the table top for a
    tabulated density.  ``omega_max=np.inf`` is accepted where the integrals
    converge.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sd = bp.spectral
    if isinstance(sd, DiscreteModes):
        w = np.asarray(sd.frequencies)
        weights = sd.weights
        n = bp.occupation(w) if not bp.high_temperature else None
        phase = np.exp(-1j * np.outer(times, w))
        if bp.high_temperature:
            coth = _coth_discrete(bp, w)
            terms = weights * (coth * phase.real + 1j * phase.imag)
        else:
            terms = weights * ((1.0 + n) * phase + n * np.conj(phase))
        return terms.sum(axis=1)

    wmax = sd.default_omega_max(bp.beta) if omega_max is None else float(omega_max)
    if wmax > sd.omega_support:
        raise OutOfRangeError(f"omega_max={wmax} exceeds the spectral support")
    if isinstance(sd, TabulatedSpectralDensity):
        out = np.empty(times.shape, dtype=complex)
        for i, t in enumerate(times):
            w, q = tabulated_nodes(sd, wmax, abs(t))
            re = q @ (thermal_weight(bp, w) * np.cos(w * t))
            im = q @ (sd._positive(w) * np.sin(w * t))
            out[i] = (re - 1j * im) / math.pi
        return out
    weight = lambda w: thermal_weight(bp, w)  # noqa: E731
    jfun = lambda w: sd._positive(w)  # noqa: E731
    out = np.empty(times.shape, dtype=complex)
    for i, t in enumerate(times):
        tau = abs(t)
        if tau == 0.0:
            re = _quad(weight, 0.0, wmax)
            im = 0.0
        elif wmax == math.inf:
            re = _quad(weight, 0.0, math.inf, weight="cos", wvar=tau)
            im = _quad(jfun, 0.0, math.inf, weight="sin", wvar=tau)
        else:
            re = _quad(weight, 0.0, wmax, weight="cos", wvar=tau)
            im = _quad(jfun, 0.0, wmax, weight="sin", wvar=tau)
        out[i] = (re - 1j * math.copysign(1.0, t) * im) / math.pi
    return out


def bath_correlation(bp, time_grid, omega_max=None):
    """Sample ``D(t)`` on a uniform grid starting at 0."""
    times, _ = check_uniform_grid(time_grid)
    return CorrelationFunction(times, correlation_at(bp, times, omega_max=omega_max))


def trapezoid_correlation_at_zero(bp, omega_max=None, n_points=400_001):
    """Dense-trapezoid estimate of ``D(0)``; independent cross-check of the
    adaptive quadrature used by :func:`correlation_at`."""
    sd = bp.spectral
    wmax = sd.default_omega_max(bp.beta) if omega_max is None else float(omega_max)
    w = np.linspace(0.0, wmax, n_points)
    return float(integrate.trapezoid(thermal_weight(bp, w), w) / math.pi)
