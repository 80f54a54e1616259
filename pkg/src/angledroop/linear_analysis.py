"""Linearized droop dynamics: LQR correspondence and H2 coherence metrics.

The closed-form coherence expressions assume uniform gains; the H2 oracle and
the stochastic estimator work from the full state-space matrices and provide
independent cross-checks of those formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InstabilityDetected, ZeroEigenvalueBeyondFirst
from .netgraph import incidence_matrix, weighted_laplacian


def _gains(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).astype(float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive and finite")
    return arr


class LinearizedSystem:
    """Linear closed-loop model of either droop scheme, in deviation coordinates.

    kind "angular": state theta (n entries), dynamics
    -1/2 R^{-1} (Gamma + L) theta with white noise entering every angle.
    kind "frequency": state (theta, omega) (2n entries), swing dynamics with
    per-node inertia and damping, noise entering the frequency channel scaled
    by the inverse inertia.
    """

    def __init__(self, kind, graph, alpha=None, gamma=None, inertia=None, damping=None):
        if kind not in ("angular", "frequency"):
            raise ValueError(f"unknown kind {kind!r}")
        self.kind = kind
        self.graph = graph
        n = graph.n
        if kind == "angular":
            if alpha is None or gamma is None:
                raise ValueError("angular system needs alpha and gamma")
            self.alpha = _gains(alpha, n, "alpha")
            self.gamma = _gains(gamma, n, "gamma")
            self.inertia = None
            self.damping = None
        else:
            if inertia is None or damping is None:
                raise ValueError("frequency system needs inertia and damping")
            self.inertia = _gains(inertia, n, "inertia")
            self.damping = _gains(damping, n, "damping")
            self.alpha = None
            self.gamma = None
        self._a = None

    @classmethod
    def angular(cls, graph, alpha, gamma):
        return cls("angular", graph, alpha=alpha, gamma=gamma)

    @classmethod
    def frequency(cls, graph, inertia, damping):
        return cls("frequency", graph, inertia=inertia, damping=damping)

    @property
    def state_dim(self) -> int:
        return self.graph.n if self.kind == "angular" else 2 * self.graph.n

    @property
    def is_uniform(self) -> bool:
        pair = (self.alpha, self.gamma) if self.kind == "angular" else (self.inertia, self.damping)
        return all(float(np.ptp(v)) == 0.0 for v in pair)

    def a_matrix(self) -> np.ndarray:
        if self._a is None:
            lap = weighted_laplacian(self.graph)
            n = self.graph.n
            if self.kind == "angular":
                self._a = -0.5 * (np.diag(self.gamma) + lap) / self.alpha[:, None]
            else:
                top = np.hstack([np.zeros((n, n)), np.eye(n)])
                bot = np.hstack([-lap / self.inertia[:, None], -np.diag(self.damping / self.inertia)])
                self._a = np.vstack([top, bot])
        return self._a

    def noise_matrix(self) -> np.ndarray:
        n = self.graph.n
        if self.kind == "angular":
            return np.eye(n)
        return np.vstack([np.zeros((n, n)), np.diag(1.0 / self.inertia)])

    def coherence_output(self) -> np.ndarray:
        """Averaged angle-deviation output (1/sqrt(n)) (I - 11^T/n) on the angle block."""
        n = self.graph.n
        proj = (np.eye(n) - np.full((n, n), 1.0 / n)) / np.sqrt(n)
        if self.kind == "angular":
            return proj
        return np.hstack([proj, np.zeros((n, n))])


def linear_rhs(sys, state) -> np.ndarray:
    """Deterministic part of the linear closed loop (noise is supplied separately)."""
    state = np.asarray(state, dtype=float)
    if state.shape != (sys.state_dim,):
        raise ValueError(f"state must have length {sys.state_dim}")
    return sys.a_matrix() @ state


def lqr_weight_matrix(alpha, gamma, graph) -> np.ndarray:
    """State penalty 1/4 (Gamma + L)^T R^{-1} (Gamma + L).

    This is the quadratic cost for which the linear droop feedback is the
    H2-optimal state feedback of the integrator plant; symmetric and positive
    definite whenever the droop gains are positive.
    """
    a = _gains(alpha, graph.n, "alpha")
    g = _gains(gamma, graph.n, "gamma")
    gl = np.diag(g) + weighted_laplacian(graph)
    return 0.25 * gl.T @ (gl / a[:, None])


def lqr_gain_control(alpha, gamma, graph, delta, theta_nom=None) -> np.ndarray:
    """Linear droop feedback -1/2 R^{-1} (Gamma + L) applied to an angle error.

    When ``theta_nom`` is supplied, the line coupling uses the Laplacian
    reweighted by the cosines of the nominal line angle differences, which is
    the exact Jacobian linearization of the nonlinear droop control at
    ``theta_nom``; both variants coincide when the nominal differences vanish.
    """
    a = _gains(alpha, graph.n, "alpha")
    g = _gains(gamma, graph.n, "gamma")
    delta = np.asarray(delta, dtype=float)
    binc = incidence_matrix(graph)
    if theta_nom is None:
        w = graph.susceptances
    else:
        w = graph.susceptances * np.cos(binc.T @ np.asarray(theta_nom, dtype=float))
    lap = (binc * w) @ binc.T
    return -0.5 * (g * delta + lap @ delta) / a


def riccati_residual(alpha, gamma, graph) -> float:
    """Max-abs residual of Q - P R^{-1} P with P = 1/2 (Gamma + L).

    For the integrator plant (A = 0, B = I) this is the algebraic Riccati
    stationarity condition certifying the linear droop gain as optimal for the
    lqr_weight_matrix cost; the result is rounding-level when the
    correspondence holds.
    """
    a = _gains(alpha, graph.n, "alpha")
    g = _gains(gamma, graph.n, "gamma")
    q = lqr_weight_matrix(alpha, gamma, graph)
    p = 0.5 * (np.diag(g) + weighted_laplacian(graph))
    return float(np.abs(q - p @ (p / a[:, None])).max())


@dataclass(frozen=True)
class CoherenceResult:
    """Squared H2 coherence and the contribution of each nonzero Laplacian mode."""

    value: float
    per_mode: np.ndarray


def _validated_spectrum(eigenvalues, n):
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.shape != (n,):
        raise ValueError(f"need exactly n={n} eigenvalues")
    if np.any(np.diff(lam) < -1e-12):
        raise ValueError("eigenvalues must be ascending")
    if abs(lam[0]) > 1e-8:
        raise ValueError("first Laplacian eigenvalue must be zero")
    return lam


def coherence_angular(alpha, gamma, eigenvalues, n) -> CoherenceResult:
    """Closed-form angle coherence of uniform angular droop.

    (alpha/n) sum_{i>=2} 1/(gamma + lambda_i); every mode contribution is
    bounded by alpha/(n gamma), so the total stays below alpha/gamma for any
    connected graph of any size.
    """
    alpha = float(alpha)
    gamma = float(gamma)
    if alpha <= 0.0 or gamma <= 0.0:
        raise ValueError("alpha and gamma must be positive")
    lam = _validated_spectrum(eigenvalues, n)
    per_mode = alpha / (n * (gamma + lam[1:]))
    return CoherenceResult(float(per_mode.sum()), per_mode)


def coherence_frequency(damping, eigenvalues, n, zero_tol=1e-12) -> CoherenceResult:
    """Closed-form angle coherence of uniform frequency droop.

    1/(2 d n) sum_{i>=2} 1/lambda_i; independent of the inertia and divergent
    as the graph disconnects, hence the ZeroEigenvalueBeyondFirst error when
    lambda_2 is numerically zero.
    """
    damping = float(damping)
    if damping <= 0.0:
        raise ValueError("damping must be positive")
    lam = _validated_spectrum(eigenvalues, n)
    if n > 1 and lam[1] <= zero_tol:
        raise ZeroEigenvalueBeyondFirst(f"lambda_2 = {lam[1]:.3e} is numerically zero")
    per_mode = 1.0 / (2.0 * damping * n * lam[1:])
    return CoherenceResult(float(per_mode.sum()), per_mode)


def h2_norm_oracle(a_mat, b_mat, c_mat, marginal_tol=1e-9, obs_tol=1e-8) -> float:
    """Squared H2 norm trace(C X C^T) via eigen-decomposition of A.

    X solves A X + X A^T + B B^T = 0 restricted to the stable invariant
    subspace. Modes with nonnegative real part are admitted only when they are
    unobservable through C (the marginal average-angle mode of the droop
    models); an observable one raises InstabilityDetected. This path is
    independent of the closed-form coherence expressions and serves as their
    oracle.
    """
    a = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b = np.atleast_2d(np.asarray(b_mat, dtype=float))
    c = np.atleast_2d(np.asarray(c_mat, dtype=float))
    dim = a.shape[0]
    if a.shape != (dim, dim) or b.shape[0] != dim or c.shape[1] != dim:
        raise ValueError("inconsistent state-space dimensions")
    w, s = np.linalg.eig(a)
    cs = c.astype(complex) @ s
    bt = np.linalg.solve(s, b.astype(complex))
    scale = max(1.0, float(np.abs(w).max()))
    c_scale = max(1.0, float(np.abs(c).max()))
    excluded = np.zeros(dim, dtype=bool)
    for i in range(dim):
        if w[i].real >= -marginal_tol * scale:
            if np.linalg.norm(cs[:, i]) > obs_tol * c_scale:
                raise InstabilityDetected(
                    f"observable mode with eigenvalue {w[i]:.3e} has nonnegative real part"
                )
            excluded[i] = True
    gram = bt @ bt.T
    gram[excluded, :] = 0.0
    gram[:, excluded] = 0.0
    den = w[:, None] + w[None, :]
    den[excluded, :] = 1.0
    den[:, excluded] = 1.0
    y = -gram / den
    value = np.trace(cs @ y @ cs.T)
    return float(value.real)


@numba.njit(cache=True)
def _em_average_variance(a, bn, noise, dt, n_out):
    # Euler-Maruyama recursion with the dispersion of the averaged-angle
    # output accumulated over the second half of the run
    x = np.zeros(a.shape[0])
    sq = np.sqrt(dt)
    half = noise.shape[0] // 2
    acc = 0.0
    count = 0
    for k in range(noise.shape[0]):
        x = x + dt * (a @ x) + sq * (bn @ noise[k])
        if k >= half:
            mean = 0.0
            for i in range(n_out):
                mean += x[i]
            mean /= n_out
            s = 0.0
            for i in range(n_out):
                s += (x[i] - mean) ** 2
            acc += s / n_out
            count += 1
    return acc / count


def empirical_coherence(sys, seed, horizon, dt) -> float:
    """Monte Carlo estimate of the squared coherence by stochastic simulation.

    Euler-Maruyama with unit-intensity white noise and a seeded generator;
    returns the time average of (1/n) sum_i (theta_i - mean theta)^2 over the
    second half of [0, horizon]. Identical seeds reproduce identical
    estimates bit for bit.
    """
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError("horizon and dt must be positive")
    a = sys.a_matrix()
    bn = sys.noise_matrix()
    steps = int(round(horizon / dt))
    if steps < 2:
        raise ValueError("horizon too short for the averaging window")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((steps, bn.shape[1]))
    return float(_em_average_variance(a, bn, noise, dt, sys.graph.n))
