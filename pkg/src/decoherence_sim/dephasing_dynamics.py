"""Pure-dephasing dynamics of a two-level system.

Two routes to the coherence decay of ``H = -w0/2 sz + sz * (bath or noise)``:

* an ensemble of unitary trajectories driven by real classical noise
  ``eta(t)``, each contributing the phase factor
  ``exp(-i int_0^t 2 eta(s) ds)``;
* an exact evaluation of the quantum decoherence function for a small set of
  harmonic modes in truncated Fock spaces (the "Fock oracle").
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._grid import check_uniform_grid, uniform_grid
from .cumulants import ENSEMBLE, FOCK_ORACLE, DecoherenceTrace
from .errors import ValidationError
from .noise_gen import ComplexWhite, NoiseProcessSpec, make_stream

#: Default number of trajectories evaluated together; part of the
#: reproducibility contract, since partial sums are reduced per chunk.
CHUNK_SIZE = 100
#: Thermal population allowed above the Fock cutoff, and the change in Phi
#: tolerated when the cutoff grows by CUTOFF_STEP.
FOCK_TAIL_TOL = 1e-8
CUTOFF_STEP = 4
MAX_CUTOFF = 600


@dataclass(frozen=True)
class TwoLevelInitialState:
    """Pure state ``c0 |0> + c1 |1>`` (``|0>`` is the lower level)."""

    c0: complex
    c1: complex

    def __post_init__(self):
        norm = abs(self.c0) ** 2 + abs(self.c1) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"|c0|^2 + |c1|^2 must be 1, got {norm!r}")

    @classmethod
    def equal_superposition(cls):
        return cls(1 / math.sqrt(2), 1 / math.sqrt(2))

    @property
    def vector(self):
        return np.array([self.c0, self.c1], dtype=complex)

    def density_matrix(self):
        v = self.vector
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    dt: float
    t_final: float
    master_seed: int
    noise: NoiseProcessSpec

    def __post_init__(self):
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValidationError("n_traj must be a positive integer")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.t_final >= self.dt:
            raise ValidationError("t_final must be at least dt")

    @property
    def times(self):
        return uniform_grid(self.t_final, self.dt)


def _chunks(n_traj, chunk_size):
    return [(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]


def map_chunks(func, n_traj, n_jobs=1, chunk_size=CHUNK_SIZE):
    """Apply ``func(lo, hi)`` to fixed trajectory chunks, results in chunk order.

    The chunk layout depends only on ``n_traj`` and ``chunk_size``, so any
    order-sensitive reduction over the returned list is independent of
    ``n_jobs``.
    """
    chunks = _chunks(n_traj, chunk_size)
    if n_jobs is None or n_jobs <= 1 or len(chunks) == 1:
        return [func(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda c: func(*c), chunks))


def merge_moments(parts):
    """Combine per-chunk ``(count, mean, sum |x - mean|^2)`` in list order.

    Pairwise update of Chan et al.; avoids the cancellation of one-pass
    sum-of-squares variances and keeps the result independent of threading.
    """
    n, mean, m2 = parts[0]
    mean, m2 = np.array(mean), np.array(m2)
    for m, mean_b, m2_b in parts[1:]:
        total = n + m
        delta = mean_b - mean
        mean = mean + delta * (m / total)
        m2 = m2 + m2_b + np.abs(delta) ** 2 * (n * m / total)
        n = total
    return n, mean, m2


def dephasing_phase(cfg, trajectory_index):
    """Accumulated phase ``int_0^t 2 eta(s) ds`` (trapezoid) for one trajectory."""
    if isinstance(cfg.noise, ComplexWhite):
        raise ValidationError("pure dephasing needs a real-valued noise process")
    n = cfg.times.size
    eta = make_stream(cfg.noise, cfg.master_seed, trajectory_index, cfg.dt).sample(n)
    delta = 2.0 * eta
    return np.concatenate(([0.0], np.cumsum(0.5 * cfg.dt * (delta[1:] + delta[:-1]))))


def dephasing_trajectory(cfg, trajectory_index):
    """Coherence factor ``exp(-i phase)`` of a single noise realisation."""
    return np.exp(-1j * dephasing_phase(cfg, trajectory_index))


def run_dephasing_ensemble(init, cfg, n_jobs=1, chunk_size=CHUNK_SIZE):
    """Noise-averaged decoherence function with per-point standard errors.

    ``init`` only fixes the coherence scale ``c0 c1*``; the returned trace is
    the normalised factor ``Phi_noise(t)`` multiplying it.
    """
    if not isinstance(init, TwoLevelInitialState):
        raise ValidationError("init must be a TwoLevelInitialState")
    times = cfg.times

    def chunk(lo, hi):
        z = np.stack([dephasing_trajectory(cfg, j) for j in range(lo, hi)])
        mean = z.mean(axis=0)
        return hi - lo, mean, (np.abs(z - mean) ** 2).sum(axis=0)

    n, mean, m2 = merge_moments(map_chunks(chunk, cfg.n_traj, n_jobs, chunk_size))
    mean[0] = 1.0
    stderr = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.zeros(times.size)
    return DecoherenceTrace(times, mean, ENSEMBLE, stderr=stderr)


def purity_from_loschmidt(init, loschmidt):
    """Two-level purity ``1 + 2 |c0|^2 |c1|^2 (L - 1)``."""
    L = np.asarray(loschmidt, dtype=float)
    if np.any(L < -1e-12) or np.any(L > 1 + 1e-12):
        raise ValidationError("Loschmidt echo must lie in [0, 1]")
    p = 1.0 + 2.0 * abs(init.c0) ** 2 * abs(init.c1) ** 2 * (L - 1.0)
    return float(p) if p.ndim == 0 else p


# --- Fock oracle -------------------------------------------------------------

@dataclass(frozen=True)
class FockBathSpec:
    """Harmonic modes ``(w_k, g_k)`` at inverse temperature ``beta``.

    ``fock_cutoff`` is the number of Fock states kept per mode; ``None``
    selects it automatically per mode.
    """

    modes: tuple
    beta: float
    fock_cutoff: object = None

    def __post_init__(self):
        modes = tuple((float(w), float(g)) for w, g in self.modes)
        if not modes:
            raise ValidationError("at least one mode is required")
        if any(w <= 0 for w, _ in modes):
            raise ValidationError("mode frequencies must be positive")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        object.__setattr__(self, "modes", modes)
        cut = self.fock_cutoff
        if cut is not None:
            cuts = (cut,) * len(modes) if np.isscalar(cut) else tuple(cut)
            if len(cuts) != len(modes):
                raise ValidationError("one cutoff per mode is required")
            for (w, _), n in zip(modes, cuts):
                if int(n) < 2:
                    raise ValidationError("Fock cutoff must be at least 2")
                if thermal_tail(self.beta, w, int(n)) >= FOCK_TAIL_TOL:
                    raise ValidationError(
                        f"Fock cutoff {n} leaves thermal weight "
                        f"{thermal_tail(self.beta, w, int(n)):.3g} above it for w={w}")
            object.__setattr__(self, "fock_cutoff", tuple(int(n) for n in cuts))


def thermal_tail(beta, omega, n):
    """Thermal probability of occupying Fock states ``>= n``."""
    return math.exp(-beta * omega * n)


def _mode_hamiltonian(omega, g, n):
    a = np.diag(np.sqrt(np.arange(1, n)), k=1)
    x = a + a.T
    return omega * np.diag(np.arange(n, dtype=float)), g * x


def _mode_factor(omega, g, beta, n, times, signs):
    """``Tr[rho_th exp(i H_b t) exp(-i H_a t)]`` with ``H = w n + s g x``."""
    h0, coupling = _mode_hamiltonian(omega, g, n)
    sa, sb = signs
    ea, ua = np.linalg.eigh(h0 + sa * coupling)
    eb, ub = np.linalg.eigh(h0 + sb * coupling)
    pops = np.exp(-beta * omega * np.arange(n))
    pops /= pops.sum()
    overlap = ub.conj().T @ ua                        # <b_j|a_k>
    weighted = (ua.conj().T * pops) @ ub              # <a_k|rho|b_j>
    w = overlap * weighted.T                          # W_jk
    # Phi(t) = sum_jk W_jk exp(i (eb_j - ea_k) t), evaluated on the grid
    freqs = (eb[:, None] - ea[None, :]).ravel()
    weights = w.ravel()
    keep = np.abs(weights) > 1e-18 * np.abs(weights).max()
    return np.exp(1j * np.outer(times, freqs[keep])) @ weights[keep]


def _auto_cutoff(omega, g, beta, times, signs):
    n = max(2, int(math.ceil(-math.log(FOCK_TAIL_TOL) / (beta * omega))) + 1)
    n = max(n, int(math.ceil(4 * (2 * abs(g) / omega) ** 2)) + 8)
    prev = _mode_factor(omega, g, beta, n, times, signs)
    while n < MAX_CUTOFF:
        nxt = _mode_factor(omega, g, beta, n + CUTOFF_STEP, times, signs)
        if np.max(np.abs(nxt - prev)) < FOCK_TAIL_TOL:
            return n, prev
        n += CUTOFF_STEP
        prev = nxt
    raise ValidationError(f"Fock cutoff did not converge below {MAX_CUTOFF} "
                          f"for mode w={omega}, g={g}")


def fock_oracle_qdf(bath, time_grid, pair=(0, 1)):
    """Exact decoherence function ``Tr_B[rho_B V_b^dag(t) V_a(t)]``.

    Level ``a`` couples to the bath through ``+g(a + a^dag)`` for ``a = 0``
    and ``-g(a + a^dag)`` for ``a = 1``.  Each mode is diagonalised in its own
    truncated Fock space and the trace factorises over modes.  The free bath
    evolution cancels in the product because the thermal state commutes with
    ``H_B``, so the result is directly the interaction-picture function.
    """
    times, _ = check_uniform_grid(time_grid)
    a, b = pair
    if a not in (0, 1) or b not in (0, 1):
        raise ValidationError("pair entries must be 0 or 1")
    signs = (1.0 if a == 0 else -1.0, 1.0 if b == 0 else -1.0)
    phi = np.ones(times.size, dtype=complex)
    for k, (w, g) in enumerate(bath.modes):
        if bath.fock_cutoff is None:
            _, factor = _auto_cutoff(w, g, bath.beta, times, signs)
        else:
            factor = _mode_factor(w, g, bath.beta, bath.fock_cutoff[k], times, signs)
        phi = phi * factor
    phi[0] = 1.0
    return DecoherenceTrace(times, phi, FOCK_ORACLE)
