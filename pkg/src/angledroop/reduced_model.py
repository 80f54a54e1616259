"""Reduced integrator angle model with inverse-optimal angular droop control.

All angles live in the rotating frame: they are deviations from the
synchronous ramp omega_nom * t, so the synchronous feedforward cancels out of
every closed-loop expression here. Callers reconstruct absolute frequencies by
adding omega_nom back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, SecurityViolation
from .netgraph import incidence_matrix, security_check


def _per_node(value, n, name, positive=False):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).astype(float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if positive and np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


@dataclass(frozen=True)
class SteadyState:
    """Induced steady-state angles (rotating frame) and the final solver residual."""

    theta_s: np.ndarray
    residual: float


class ReducedSystem:
    """Integrator angle model of a converter network under droop control.

    ``alpha`` weighs the control effort per node, ``gamma`` is the droop
    stiffness tying angle deviations to power deviations, ``theta_nom`` holds
    the nominal rotating-frame angles and ``p_disturbance`` a constant
    per-node power injection (zero reproduces the undisturbed network).
    Scalars broadcast to all nodes. Instances are immutable; the operations
    are pure functions of their arguments.
    """

    def __init__(self, graph, alpha, gamma, theta_nom, omega_nom=0.0, p_disturbance=0.0):
        n = graph.n
        self.graph = graph
        self.alpha = _per_node(alpha, n, "alpha", positive=True)
        self.gamma = _per_node(gamma, n, "gamma", positive=True)
        self.theta_nom = _per_node(theta_nom, n, "theta_nom")
        self.omega_nom = float(omega_nom)
        self.p_disturbance = _per_node(p_disturbance, n, "p_disturbance")
        self._binc = incidence_matrix(graph)
        self._bw = self._binc * graph.susceptances
        self._flow_nom = self._bw @ np.sin(self._binc.T @ self.theta_nom)

    def power_deviation(self, theta) -> np.ndarray:
        """Nodal active-power deviation from nominal plus the constant disturbance.

        Entry k sums b_kj (sin(theta_k - theta_j) - sin of the nominal
        difference) over the neighbors j of node k.
        """
        theta = np.asarray(theta, dtype=float)
        return self._bw @ np.sin(self._binc.T @ theta) - self._flow_nom + self.p_disturbance

    def _imbalance(self, theta):
        # droop bracket gamma (theta - theta_nom) + power deviation; this is
        # simultaneously the gradient of the storage function (via the power
        # balance at theta_s) and -2 alpha times the droop control
        return self.gamma * (theta - self.theta_nom) + self.power_deviation(theta)

    def induced_steady_state(self, tol=1e-10, max_iter=100) -> SteadyState:
        """Solve the droop power balance for the induced steady state.

        Damped Newton iteration (step halving on the residual norm) started at
        the nominal angles. The Jacobian diag(gamma) + B diag(b cos) B^T is
        positive definite inside the security region. After the tolerance is
        met the iteration polishes for two more steps so downstream identities
        see a near-machine-precision balance. Raises NoConvergence when the
        max-norm residual cannot be brought below ``tol`` within ``max_iter``
        iterations, SecurityViolation when the solution leaves the security
        region.
        """
        theta = self.theta_nom.copy()
        res = self._imbalance(theta)
        res_norm = float(np.abs(res).max())
        polish = 0
        for _ in range(int(max_iter)):
            if res_norm <= tol:
                polish += 1
                if polish > 2 or res_norm == 0.0:
                    break
            jac = np.diag(self.gamma) + (self._bw * np.cos(self._binc.T @ theta)) @ self._binc.T
            step = np.linalg.solve(jac, -res)
            scale = 1.0
            improved = False
            for _ in range(40):
                cand = theta + scale * step
                cand_res = self._imbalance(cand)
                cand_norm = float(np.abs(cand_res).max())
                if cand_norm < res_norm:
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
            theta, res, res_norm = cand, cand_res, cand_norm
        if res_norm > tol:
            raise NoConvergence(f"power balance residual {res_norm:.3e} exceeds {tol:.1e}")
        if not security_check(self.graph, theta):
            raise SecurityViolation("induced steady state violates the line security constraint")
        return SteadyState(theta_s=theta, residual=res_norm)

    def lyapunov_value(self, ss, theta) -> float:
        """Storage function (optimal cost-to-go) around the induced steady state.

        Quadratic droop term plus, for each line, the Bregman divergence of
        the line energy -b cos on the angle difference. Zero exactly at
        theta_s and strictly positive elsewhere while the line differences
        stay inside the security region.
        """
        theta = np.asarray(theta, dtype=float)
        d = theta - ss.theta_s
        eta = self._binc.T @ theta
        eta_s = self._binc.T @ ss.theta_s
        edge = self.graph.susceptances * (
            np.cos(eta_s) - np.cos(eta) - (eta - eta_s) * np.sin(eta_s)
        )
        return float(0.5 * d @ (self.gamma * d) + edge.sum())

    def lyapunov_gradient(self, ss, theta) -> np.ndarray:
        """Gradient of lyapunov_value.

        Equals gamma (theta - theta_s) plus the power-deviation difference to
        the steady state; the constant disturbance cancels between the two
        power evaluations. Through the steady-state power balance this is the
        same vector as the droop bracket gamma (theta - theta_nom) +
        power_deviation(theta).
        """
        theta = np.asarray(theta, dtype=float)
        return (
            self.gamma * (theta - ss.theta_s)
            + self.power_deviation(theta)
            - self.power_deviation(ss.theta_s)
        )

    def angular_droop_control(self, theta) -> np.ndarray:
        """Inverse-optimal angular droop feedback.

        Entry k is -(1/(2 alpha_k)) (gamma_k (theta_k - theta_nom_k) +
        power_deviation_k). Pointwise this equals -1/2 R^{-1} grad V, so the
        closed loop is a gradient flow of the storage function.
        """
        theta = np.asarray(theta, dtype=float)
        return -self._imbalance(theta) / (2.0 * self.alpha)

    def frequency_droop_control(self, theta, damping) -> np.ndarray:
        """First-order frequency droop -(1/d_k) power_deviation_k.

        Leaves a stationary frequency error whenever the disturbances do not
        sum to zero, unlike the angular law.
        """
        damping = _per_node(damping, self.graph.n, "damping", positive=True)
        return -self.power_deviation(theta) / damping

    def running_cost(self, theta, u) -> float:
        """Pointwise cost alpha u^2 plus the droop imbalance penalty.

        The state penalty is (gamma (theta - theta_nom) + power deviation)^2
        scaled by 1/(4 alpha), summed over nodes.
        """
        theta = np.asarray(theta, dtype=float)
        u = np.asarray(u, dtype=float)
        bracket = self._imbalance(theta)
        return float((self.alpha * u * u).sum() + (bracket * bracket / (4.0 * self.alpha)).sum())

    def hjb_residual(self, ss, theta) -> float:
        """Pointwise optimality residual q(theta) + ||u*||_R^2 + grad V . u*.

        Assembled from the separate operations (state cost via running_cost at
        zero input, control via angular_droop_control, gradient via
        lyapunov_gradient); analytically zero, so the returned number reflects
        rounding and steady-state solver error only.
        """
        theta = np.asarray(theta, dtype=float)
        u = self.angular_droop_control(theta)
        grad = self.lyapunov_gradient(ss, theta)
        q = self.running_cost(theta, np.zeros(self.graph.n))
        return float(q + (self.alpha * u * u).sum() + grad @ u)

    def closed_loop_rhs(self, theta, controller="angular", damping=None) -> np.ndarray:
        """Rotating-frame closed-loop derivative for the selected controller.

        The synchronous feedforward cancels in this frame. The angular branch
        is the gradient flow -1/2 R^{-1} grad V; the frequency branch uses the
        droop stiffness as damping unless one is supplied.
        """
        if controller == "angular":
            return self.angular_droop_control(theta)
        if controller == "frequency":
            return self.frequency_droop_control(theta, self.gamma if damping is None else damping)
        raise ValueError(f"unknown controller {controller!r}")

    def cost_to_go_numeric(self, ss, theta0, dt, tol, max_horizon=200.0) -> float:
        """Accumulated running cost along the angular-droop closed loop.

        Fixed-step RK4 with trapezoidal cost accumulation, integrating from
        ``theta0`` until the state is within ``tol`` (max norm) of the steady
        state. By inverse optimality the result reproduces
        ``lyapunov_value(ss, theta0)``. Raises NoConvergence when
        ``max_horizon`` is exhausted before settling.
        """
        theta = np.asarray(theta0, dtype=float).copy()
        inv2a = 0.5 / self.alpha
        half = 0.5 * dt
        sixth = dt / 6.0
        total = 0.0
        bracket = self._imbalance(theta)
        # along the optimal flow the integrand collapses to bracket^2/(2 alpha):
        # the effort term alpha u^2 equals the state penalty there
        cost_now = float((bracket * bracket * inv2a).sum())
        for _ in range(int(round(max_horizon / dt))):
            if np.abs(theta - ss.theta_s).max() < tol:
                return total
            k1 = -inv2a * bracket
            k2 = -inv2a * self._imbalance(theta + half * k1)
            k3 = -inv2a * self._imbalance(theta + half * k2)
            k4 = -inv2a * self._imbalance(theta + dt * k3)
            theta = theta + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            if not np.all(np.isfinite(theta)):
                raise NoConvergence("cost integration diverged to non-finite angles")
            bracket = self._imbalance(theta)
            cost_new = float((bracket * bracket * inv2a).sum())
            total += half * (cost_now + cost_new)
            cost_now = cost_new
        if np.abs(theta - ss.theta_s).max() < tol:
            return total
        raise NoConvergence(f"trajectory did not settle within {max_horizon} s")
