"""Averaged three-phase DC/AC converter network in stationary alpha/beta frame.

Every converter carries a DC-link capacitor fed by a droop-controlled current
source, a lossless modulation bridge, an RL output filter and a shunt CG
filter; converters are coupled through RL lines on the incidence structure of
a NetworkGraph. The practical angular droop controller steers each modulation
angle from locally measured line power.

State stacking convention (flat vector of length 6n + 2m):

    [ v_dc (n) | i_ac (2n) | v_ac (2n) | i_line (2m) | theta (n) ]

where the alpha/beta pairs of converter k occupy slots (2k, 2k+1) of their
block and line e likewise. With this per-unit stacking each axis sees the
plain node-edge incidence matrix, so no Kronecker products are materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NoConvergence, NonFiniteState
from .netgraph import incidence_matrix
from .sim_engine import Trajectory, snap_to_grid

_TWO_PI = 2.0 * math.pi

# indices into the packed physical-constants vector handed to the kernels
_C_DC, _K_P, _V_DC_NOM, _R_AC, _L_AC, _C_AC, _R_LINE, _L_LINE, _MOD_AMP, _OMEGA = range(10)


def _per_node(value, n, name, positive=False):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).astype(float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if positive and np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


@dataclass(frozen=True)
class ConverterNetworkParams:
    """Electrical and control parameters of the converter network.

    Scalar entries apply to every converter or line. The defaults are the
    benchmark values used by the built-in scenarios: 1 kV DC link behind a
    0.5 S DC droop, 500 A DC supply, an R = 0.2 ohm / L = 0.5 mH output
    filter into C = 10 uF with a 0.1 S local load, 30 mohm / 50 uH lines, a
    fixed modulation amplitude of 0.33 and an angular droop tuned to
    alpha = 0.5, gamma = 1e6 around the 50 Hz synchronous frequency.
    """

    graph: object
    theta_nom: np.ndarray
    c_dc: float = 1e-3
    k_p: float = 0.5
    v_dc_nom: float = 1000.0
    i_dc_nom: object = 500.0
    r_ac: float = 0.2
    l_ac: float = 5e-4
    c_ac: float = 1e-5
    g_ac: float = 0.1
    r_line: float = 0.03
    l_line: float = 5e-5
    mod_amp: float = 0.33
    alpha: object = 0.5
    gamma: object = 1e6
    omega_nom: float = _TWO_PI * 50.0

    def __post_init__(self):
        n = self.graph.n
        object.__setattr__(self, "theta_nom", _per_node(self.theta_nom, n, "theta_nom"))
        object.__setattr__(self, "i_dc_nom", _per_node(self.i_dc_nom, n, "i_dc_nom"))
        object.__setattr__(self, "alpha", _per_node(self.alpha, n, "alpha", positive=True))
        object.__setattr__(self, "gamma", _per_node(self.gamma, n, "gamma", positive=True))
        for name in ("c_dc", "k_p", "v_dc_nom", "r_ac", "l_ac", "c_ac", "g_ac", "r_line", "l_line"):
            val = float(getattr(self, name))
            if not math.isfinite(val) or val <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
            object.__setattr__(self, name, val)
        amp = float(self.mod_amp)
        if not 0.0 < amp < 1.0:
            raise ValueError("mod_amp must lie in (0, 1)")
        object.__setattr__(self, "mod_amp", amp)
        omega = float(self.omega_nom)
        if not math.isfinite(omega):
            raise ValueError("omega_nom must be finite")
        object.__setattr__(self, "omega_nom", omega)

    @property
    def state_dim(self) -> int:
        return 6 * self.graph.n + 2 * self.graph.m


def state_slices(n, m):
    """Slices of the flat state vector: v_dc, i_ac, v_ac, i_line, theta."""
    return (
        slice(0, n),
        slice(n, 3 * n),
        slice(3 * n, 5 * n),
        slice(5 * n, 5 * n + 2 * m),
        slice(5 * n + 2 * m, 6 * n + 2 * m),
    )


@dataclass
class ConverterNetworkState:
    """Structured view of one converter-network state.

    i_ac, v_ac are (n, 2) and i_line (m, 2), columns holding the alpha and
    beta components.
    """

    v_dc: np.ndarray
    i_ac: np.ndarray
    v_ac: np.ndarray
    i_line: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.v_dc = np.asarray(self.v_dc, dtype=float)
        self.i_ac = np.asarray(self.i_ac, dtype=float).reshape(-1, 2)
        self.v_ac = np.asarray(self.v_ac, dtype=float).reshape(-1, 2)
        self.i_line = np.asarray(self.i_line, dtype=float).reshape(-1, 2)
        self.theta = np.asarray(self.theta, dtype=float)
        n = self.v_dc.shape[0]
        if self.i_ac.shape[0] != n or self.v_ac.shape[0] != n or self.theta.shape[0] != n:
            raise ValueError("per-converter blocks must share the node count")
        for block in (self.v_dc, self.i_ac, self.v_ac, self.i_line, self.theta):
            if not np.all(np.isfinite(block)):
                raise NonFiniteState("converter state contains non-finite entries")

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.v_dc, self.i_ac.ravel(), self.v_ac.ravel(), self.i_line.ravel(), self.theta]
        )

    @classmethod
    def from_vector(cls, y, n, m):
        y = np.asarray(y, dtype=float)
        if y.shape != (6 * n + 2 * m,):
            raise ValueError(f"state vector must have length {6 * n + 2 * m}")
        s_vdc, s_iac, s_vac, s_il, s_th = state_slices(n, m)
        return cls(y[s_vdc], y[s_iac], y[s_vac], y[s_il], y[s_th])


@dataclass(frozen=True)
class LoadEvent:
    """Extra shunt conductance at one node over a time window [t_on, t_off)."""

    node: int
    delta_g: float
    t_on: float
    t_off: float

    def __post_init__(self):
        if self.delta_g < 0.0 or not math.isfinite(self.delta_g):
            raise ValueError("delta_g must be finite and nonnegative")
        if not self.t_on < self.t_off:
            raise ValueError("event window requires t_on < t_off")
        if self.node < 0:
            raise ValueError("node index must be nonnegative")


def modulation_matrix(theta, amplitude) -> np.ndarray:
    """Block-diagonal modulation map, one fixed-amplitude rotating 2-vector per converter."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    u = np.zeros((2 * n, n))
    u[0::2, :][np.diag_indices(n)] = amplitude * np.cos(theta)
    u[1::2, :][np.diag_indices(n)] = amplitude * np.sin(theta)
    return u


def measured_power(state, graph) -> np.ndarray:
    """Per-converter active power fed into the network, v_k . i_net_k.

    i_net = B i_line is the net line current leaving each node; the sum over
    all converters therefore equals the power dissipated by the line voltage
    drops, sum_e (B^T v)_e . i_line_e.
    """
    binc = incidence_matrix(graph)
    i_net = binc @ state.i_line
    return (state.v_ac * i_net).sum(axis=1)


def practical_droop_rhs(t, theta, p_hat, p_ref, params) -> np.ndarray:
    """Angle derivative of the practical droop law at measured power p_hat.

    Tracks the rotating nominal angle omega_nom * t + theta_nom and trades
    angle error against power error with stiffness gamma, scaled by the
    inverse control-effort weight.
    """
    theta = np.asarray(theta, dtype=float)
    ref_angle = params.omega_nom * t + params.theta_nom
    bracket = params.gamma * (theta - ref_angle) + np.asarray(p_hat, float) - np.asarray(p_ref, float)
    return -bracket / (2.0 * params.alpha) + params.omega_nom


@numba.njit(cache=True)
def _eval_rhs(t, y, dy, inet, n, m, efrom, eto, phys, i_dc_nom, alpha, gamma,
              theta_nom, p_ref, g_node, clamp):
    c_dc = phys[0]
    k_p = phys[1]
    v_dc_nom = phys[2]
    r_ac = phys[3]
    l_ac = phys[4]
    c_ac = phys[5]
    r_line = phys[6]
    l_line = phys[7]
    amp = phys[8]
    omega = phys[9]
    iv = n
    vv = 3 * n
    lv = 5 * n
    tv = 5 * n + 2 * m

    for k in range(n):
        inet[k, 0] = 0.0
        inet[k, 1] = 0.0
    for e in range(m):
        ia = y[lv + 2 * e]
        ib = y[lv + 2 * e + 1]
        inet[efrom[e], 0] += ia
        inet[efrom[e], 1] += ib
        inet[eto[e], 0] -= ia
        inet[eto[e], 1] -= ib

    for k in range(n):
        th = y[tv + k]
        ua = amp * np.cos(th)
        ub = amp * np.sin(th)
        vdc = y[k]
        ia = y[iv + 2 * k]
        ib = y[iv + 2 * k + 1]
        va = y[vv + 2 * k]
        vb = y[vv + 2 * k + 1]
        dy[k] = (-k_p * (vdc - v_dc_nom) - 0.5 * (ua * ia + ub * ib) + i_dc_nom[k]) / c_dc
        dy[iv + 2 * k] = (-r_ac * ia + 0.5 * ua * vdc - va) / l_ac
        dy[iv + 2 * k + 1] = (-r_ac * ib + 0.5 * ub * vdc - vb) / l_ac
        dy[vv + 2 * k] = (-g_node[k] * va + ia - inet[k, 0]) / c_ac
        dy[vv + 2 * k + 1] = (-g_node[k] * vb + ib - inet[k, 1]) / c_ac
        if clamp:
            dy[tv + k] = omega
        else:
            p_hat = va * inet[k, 0] + vb * inet[k, 1]
            bracket = gamma[k] * (th - (omega * t + theta_nom[k])) + p_hat - p_ref[k]
            dy[tv + k] = -bracket / (2.0 * alpha[k]) + omega

    for e in range(m):
        ia = y[lv + 2 * e]
        ib = y[lv + 2 * e + 1]
        dva = y[vv + 2 * efrom[e]] - y[vv + 2 * eto[e]]
        dvb = y[vv + 2 * efrom[e] + 1] - y[vv + 2 * eto[e] + 1]
        dy[lv + 2 * e] = (-r_line * ia + dva) / l_line
        dy[lv + 2 * e + 1] = (-r_line * ib + dvb) / l_line


@numba.njit(cache=True)
def _run_rk4(y0, t0, dt, n_steps, stride, seg_start, seg_g, n, m, efrom, eto,
             phys, i_dc_nom, alpha, gamma, theta_nom, p_ref, clamp):
    dim = y0.shape[0]
    tv = 5 * n + 2 * m
    n_rec = n_steps // stride + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, dim))
    freqs = np.empty((n_rec, n))
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    yt = np.empty(dim)
    inet = np.empty((n, 2))
    y = y0.copy()
    seg = 0
    rec = 0
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(n_steps + 1):
        t = t0 + step * dt
        while seg + 1 < seg_start.shape[0] and step >= seg_start[seg + 1]:
            seg += 1
        g = seg_g[seg]
        _eval_rhs(t, y, k1, inet, n, m, efrom, eto, phys, i_dc_nom, alpha, gamma,
                  theta_nom, p_ref, g, clamp)
        if step % stride == 0:
            times[rec] = t
            states[rec, :] = y
            freqs[rec, :] = k1[tv:tv + n]
            rec += 1
        if step == n_steps:
            break
        for i in range(dim):
            yt[i] = y[i] + half * k1[i]
        _eval_rhs(t + half, yt, k2, inet, n, m, efrom, eto, phys, i_dc_nom, alpha,
                  gamma, theta_nom, p_ref, g, clamp)
        for i in range(dim):
            yt[i] = y[i] + half * k2[i]
        _eval_rhs(t + half, yt, k3, inet, n, m, efrom, eto, phys, i_dc_nom, alpha,
                  gamma, theta_nom, p_ref, g, clamp)
        for i in range(dim):
            yt[i] = y[i] + dt * k3[i]
        _eval_rhs(t + dt, yt, k4, inet, n, m, efrom, eto, phys, i_dc_nom, alpha,
                  gamma, theta_nom, p_ref, g, clamp)
        finite = True
        for i in range(dim):
            y[i] = y[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
            if not np.isfinite(y[i]):
                finite = False
        if not finite:
            return times[:rec], states[:rec], freqs[:rec], False, step + 1
    return times[:rec], states[:rec], freqs[:rec], True, n_steps


def _pack(params):
    graph = params.graph
    efrom = np.array([k for k, _ in graph.edges], dtype=np.int64)
    eto = np.array([j for _, j in graph.edges], dtype=np.int64)
    phys = np.array(
        [
            params.c_dc,
            params.k_p,
            params.v_dc_nom,
            params.r_ac,
            params.l_ac,
            params.c_ac,
            params.r_line,
            params.l_line,
            params.mod_amp,
            params.omega_nom,
        ]
    )
    return graph.n, graph.m, efrom, eto, phys


def _conductance_at(params, events, t):
    g = np.full(params.graph.n, params.g_ac)
    for ev in events:
        if ev.t_on <= t < ev.t_off:
            g[ev.node] += ev.delta_g
    return g


def network_rhs(t, state, params, events=(), p_ref=None) -> np.ndarray:
    """Full converter-network derivative at time t (flat vector layout).

    ``state`` may be a flat vector or a ConverterNetworkState. Load events
    contribute their extra conductance whenever t_on <= t < t_off. With
    ``p_ref`` omitted the controller reference is zero power.
    """
    if isinstance(state, ConverterNetworkState):
        y = state.to_vector()
    else:
        y = np.asarray(state, dtype=float)
    n, m, efrom, eto, phys = _pack(params)
    if y.shape != (6 * n + 2 * m,):
        raise ValueError(f"state vector must have length {6 * n + 2 * m}")
    for ev in events:
        if ev.node >= n:
            raise ValueError(f"event node {ev.node} outside 0..{n - 1}")
    ref = np.zeros(n) if p_ref is None else _per_node(p_ref, n, "p_ref")
    dy = np.empty_like(y)
    inet = np.empty((n, 2))
    _eval_rhs(
        float(t), y, dy, inet, n, m, efrom, eto, phys, params.i_dc_nom, params.alpha,
        params.gamma, params.theta_nom, ref, _conductance_at(params, events, t), False,
    )
    return dy


def nominal_power_reference(params, ss_state) -> np.ndarray:
    """Controller power reference: measured power at a settled nominal state."""
    if not isinstance(ss_state, ConverterNetworkState):
        ss_state = ConverterNetworkState.from_vector(ss_state, params.graph.n, params.graph.m)
    return measured_power(ss_state, params.graph)


def settle_nominal_state(params, dt=1e-7, cycles=3, rel_tol=1e-6):
    """Settle the electrical states with the angles clamped to their nominal ramp.

    Runs full synchronous periods so the endpoint is phase aligned with t = 0,
    then one extra period to confirm stationarity of the measured powers.
    Returns the settled flat state (angles reset exactly to theta_nom) and the
    matching nominal power reference. Raises NoConvergence when the extra
    period still changes the measured powers beyond ``rel_tol``.
    """
    if params.omega_nom <= 0.0:
        raise ValueError("settling needs a positive synchronous frequency")
    n, m, efrom, eto, phys = _pack(params)
    period = _TWO_PI / params.omega_nom
    steps_pc = int(round(period / dt))
    if steps_pc < 100:
        raise ValueError("dt too coarse to resolve the synchronous period")
    dim = 6 * n + 2 * m
    s_vdc, _, _, _, s_th = state_slices(n, m)
    y = np.zeros(dim)
    y[s_vdc] = params.v_dc_nom
    y[s_th] = params.theta_nom
    seg_start = np.zeros(1, dtype=np.int64)
    seg_g = np.full((1, n), params.g_ac)
    zeros_ref = np.zeros(n)

    def one_run(y_in, t_in, n_steps):
        times, states, _, ok, fail_step = _run_rk4(
            y_in, t_in, dt, n_steps, max(n_steps, 1), seg_start, seg_g, n, m, efrom,
            eto, phys, params.i_dc_nom, params.alpha, params.gamma, params.theta_nom,
            zeros_ref, True,
        )
        if not ok:
            raise NonFiniteState(f"settling pre-run diverged at step {fail_step}")
        return states[-1]

    y1 = one_run(y, 0.0, cycles * steps_pc)
    p1 = measured_power(ConverterNetworkState.from_vector(y1, n, m), params.graph)
    y2 = one_run(y1, cycles * period, steps_pc)
    p2 = measured_power(ConverterNetworkState.from_vector(y2, n, m), params.graph)
    drift = float(np.abs(p2 - p1).max())
    if drift > rel_tol * (1.0 + float(np.abs(p1).max())):
        raise NoConvergence(
            f"measured power still drifting after {cycles + 1} periods (drift {drift:.3e})"
        )
    # the clamped angles advanced by whole turns; reset them to the nominal
    # values so a run starting at t = 0 sees a zero tracking error
    y2 = y2.copy()
    y2[s_th] = params.theta_nom
    return y2, p2


def _event_segments(events, params, dt, n_steps, t0=0.0):
    n = params.graph.n
    windows = []
    cuts = {0}
    for ev in events:
        if ev.node >= n:
            raise ValueError(f"event node {ev.node} outside 0..{n - 1}")
        on = snap_to_grid(ev.t_on, dt, t0=t0, what="event start")
        off = snap_to_grid(ev.t_off, dt, t0=t0, what="event end")
        windows.append((ev.node, ev.delta_g, on, off))
        cuts.add(min(max(on, 0), n_steps))
        cuts.add(min(max(off, 0), n_steps))
    starts = np.array(sorted(cuts), dtype=np.int64)
    seg_g = np.full((starts.size, n), params.g_ac)
    for node, delta_g, on, off in windows:
        for i, s in enumerate(starts):
            if on <= s < off:
                seg_g[i, node] += delta_g
    return starts, seg_g


def run_converter(params, x0, p_ref, dt, horizon, events=(), record_stride=100, t0=0.0):
    """Simulate the closed-loop converter network with fixed-step RK4.

    Events switch the nodal conductances exactly at step boundaries. Returns a
    Trajectory whose meta carries the per-record controller frequencies
    (exact angle derivatives, no finite differencing) and measured powers.
    Raises NonFiniteState if the integration blows up, reporting the last
    finite time.
    """
    if dt <= 0.0 or horizon < 0.0:
        raise ValueError("dt must be positive and horizon nonnegative")
    n, m, efrom, eto, phys = _pack(params)
    y0 = np.asarray(x0, dtype=float)
    if y0.shape != (6 * n + 2 * m,):
        raise ValueError(f"state vector must have length {6 * n + 2 * m}")
    ref = _per_node(p_ref, n, "p_ref")
    n_steps = int(round(horizon / dt))
    seg_start, seg_g = _event_segments(events, params, dt, n_steps, t0=t0)
    times, states, freqs, ok, fail_step = _run_rk4(
        y0, t0, dt, n_steps, int(record_stride), seg_start, seg_g, n, m, efrom, eto,
        phys, params.i_dc_nom, params.alpha, params.gamma, params.theta_nom, ref, False,
    )
    if not ok:
        last = times[-1] if times.size else t0
        raise NonFiniteState(
            f"converter simulation produced non-finite state at step {fail_step} "
            f"(last finite record t={last})"
        )
    binc = incidence_matrix(params.graph)
    _, _, s_vac, s_il, _ = state_slices(n, m)
    v_rec = states[:, s_vac].reshape(-1, n, 2)
    il_rec = states[:, s_il].reshape(-1, m, 2)
    inet_rec = np.einsum("ke,rec->rkc", binc, il_rec)
    p_rec = (v_rec * inet_rec).sum(axis=2)
    meta = {
        "dt": dt,
        "model": "converter",
        "record_stride": int(record_stride),
        "events": [
            {"node": ev.node, "delta_g": ev.delta_g, "t_on": ev.t_on, "t_off": ev.t_off}
            for ev in events
        ],
        "freq": freqs,
        "p_hat": p_rec,
        "p_ref": ref,
    }
    return Trajectory(times, states, meta)
