"""Fixed-step RK4 integration with grid-aligned rhs switching and settling metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState


@dataclass
class Trajectory:
    """Recorded states of one simulation run.

    ``times`` holds the recorded instants (strictly increasing), ``states``
    one row per instant. ``meta`` carries run provenance: step size, model id,
    event log, and any model-specific derived arrays.
    """

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.shape[:1] != self.times.shape:
            raise ValueError("times and states must have matching leading length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("recorded times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise NonFiniteState("trajectory contains non-finite states")


def rk4_step(rhs, t, x, dt):
    """One classical fourth-order Runge-Kutta step.

    Raises NonFiniteState as soon as the update produces NaN or Inf, so a
    blow-up is reported at the step where it happens instead of propagating.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    half = 0.5 * dt
    k1 = np.asarray(rhs(t, x))
    k2 = np.asarray(rhs(t + half, x + half * k1))
    k3 = np.asarray(rhs(t + half, x + half * k2))
    k4 = np.asarray(rhs(t + dt, x + dt * k3))
    out = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state produced by the step starting at t={t}")
    return out


def snap_to_grid(time, dt, t0=0.0, what="event"):
    """Nearest step index for a switching time; warns when off the step grid."""
    step = int(round((time - t0) / dt))
    if abs(t0 + step * dt - time) > 1e-9 * max(1.0, abs(time)):
        warnings.warn(
            f"{what} time {time} is not a multiple of dt={dt}; snapped to {t0 + step * dt}",
            stacklevel=3,
        )
    return step


def simulate(rhs, x0, dt, horizon, events=(), record_stride=1, t0=0.0, model_id=""):
    """Integrate ``rhs(t, x)`` over ``[t0, t0 + horizon]`` with a fixed step.

    ``events`` is a sequence of ``(time, rhs)`` pairs: from each switching
    time onward the new rhs is used, so a parameter change is already visible
    in the first derivative evaluated at the event instant. Switching times
    must sit on the step grid and are snapped (with a warning) otherwise.

    States are recorded at t0 and every ``record_stride``-th step thereafter;
    the final state is always included. A zero horizon yields the single
    initial state.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if horizon < 0.0:
        raise ValueError("horizon must be nonnegative")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    n_steps = int(round(horizon / dt))

    switches = sorted(
        (snap_to_grid(ev_time, dt, t0), ev_rhs) for ev_time, ev_rhs in events
    )
    x = np.array(x0, dtype=float)
    rec_t = [t0]
    rec_x = [x.copy()]
    event_log = []
    current = rhs
    pending = 0
    for step in range(n_steps):
        while pending < len(switches) and step >= switches[pending][0]:
            current = switches[pending][1]
            event_log.append(t0 + switches[pending][0] * dt)
            pending += 1
        x = rk4_step(current, t0 + step * dt, x, dt)
        if (step + 1) % record_stride == 0 or step + 1 == n_steps:
            rec_t.append(t0 + (step + 1) * dt)
            rec_x.append(x.copy())
    meta = {
        "dt": dt,
        "model": model_id,
        "record_stride": record_stride,
        "events": event_log,
    }
    return Trajectory(np.array(rec_t), np.array(rec_x), meta)


@dataclass
class SettleMetrics:
    """Settling diagnostics; ``settle_time`` is NaN when ``settled`` is False."""

    settled: bool
    settle_time: float
    final_error: float
    peak_error: float


def settle_metrics(times, signal, reference, tol):
    """Settling diagnostics of a recorded signal against a reference.

    ``signal`` is ``(T,)`` or ``(T, k)``; the error at each instant is the max
    abs deviation from the reference over components. The settle time is
    measured from the start of the record to the first instant after which the
    error never exceeds ``tol`` again. A record that ends outside the band is
    flagged as not settled.
    """
    times = np.asarray(times, dtype=float)
    sig = np.asarray(signal, dtype=float)
    if sig.ndim == 1:
        sig = sig[:, None]
    if times.size == 0 or sig.shape[0] != times.size:
        raise ValueError("signal and times must be nonempty and aligned")
    ref = np.broadcast_to(np.asarray(reference, dtype=float), sig.shape[1:])
    err = np.abs(sig - ref).max(axis=1)
    final = float(err[-1])
    peak = float(err.max())
    outside = np.nonzero(err > tol)[0]
    if outside.size == 0:
        idx = 0
    elif outside[-1] == err.size - 1:
        return SettleMetrics(False, float("nan"), final, peak)
    else:
        idx = outside[-1] + 1
    return SettleMetrics(True, float(times[idx] - times[0]), final, peak)


def write_csv(path, header, columns):
    """Write named columns as CSV with 17-significant-digit decimal floats."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if data.shape[1] != len(header):
        raise ValueError("one header entry per column required")
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
