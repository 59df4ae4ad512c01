import numpy as np

from .errors import ValidationError

_GRID_RTOL = 1e-8


def uniform_grid(t_final, dt):
    """Uniform grid 0, dt, ..., n*dt with n = round(t_final/dt)."""
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValidationError(f"t_final must be non-negative, got {t_final}")
    n = int(round(t_final / dt))
    return dt * np.arange(n + 1, dtype=float)


def check_uniform_grid(times, name="time_grid"):
    """Validate a uniform grid starting at zero; return (times, dt)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D array")
    if times[0] != 0.0:
        raise ValidationError(f"{name} must start at 0, got {times[0]}")
    if times.size == 1:
        return times, 0.0
    steps = np.diff(times)
    dt = steps[0]
    if dt <= 0 or np.max(np.abs(steps - dt)) > _GRID_RTOL * dt:
        raise ValidationError(f"{name} is not uniform")
    return times, float(dt)
