"""Seeded property-check suites behind the ``verify`` subcommand.

Each check returns a CheckResult with the measured worst-case quantity and
the tolerance it was held against. Seeds are fixed so repeated runs print
identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear_analysis import (
    LinearizedSystem,
    coherence_angular,
    coherence_frequency,
    empirical_coherence,
    h2_norm_oracle,
    lqr_gain_control,
    riccati_residual,
)
from .netgraph import (
    NetworkGraph,
    complete_graph,
    incidence_matrix,
    laplacian_eigenvalues,
    path_graph,
    ring_graph,
)
from .reduced_model import ReducedSystem
from .sim_engine import simulate


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        extra = f" [{self.detail}]" if self.detail else ""
        return f"{word} {self.name}: measured={self.measured:.6e} tolerance={self.tolerance:.6e}{extra}"


def _benchmark_reduced():
    graph = ring_graph(3, 1.0)
    return ReducedSystem(
        graph,
        alpha=0.5,
        gamma=1.0,
        theta_nom=[0.951, 0.92, 0.967],
        p_disturbance=[0.05, -0.02, -0.03],
    )


def check_hjb_residual(seed=20240):
    """Pointwise optimality residual on 50 random secure points of a 3-ring."""
    rng = np.random.default_rng(seed)
    sys = _benchmark_reduced()
    ss = sys.induced_steady_state()
    binc = incidence_matrix(sys.graph)
    worst = 0.0
    accepted = 0
    while accepted < 50:
        theta = ss.theta_s + rng.uniform(-0.4, 0.4, size=3)
        if np.abs(binc.T @ theta).max() >= np.pi / 2:
            continue
        accepted += 1
        grad = sys.lyapunov_gradient(ss, theta)
        ratio = abs(sys.hjb_residual(ss, theta)) / (1e-12 * (1.0 + grad @ grad))
        worst = max(worst, ratio)
    return CheckResult(
        "hjb_residual", worst < 1.0, worst, 1.0,
        "max |q + u'Ru + grad V . u| over 1e-12 (1 + |grad V|^2), 50 points",
    )


def check_gradient_fd(seed=20241, step=1e-5):
    """Analytic storage-function gradient against central finite differences."""
    rng = np.random.default_rng(seed)
    sys = _benchmark_reduced()
    ss = sys.induced_steady_state()
    worst = 0.0
    for _ in range(20):
        theta = ss.theta_s + rng.uniform(-0.2, 0.2, size=3)
        grad = sys.lyapunov_gradient(ss, theta)
        fd = np.empty_like(grad)
        for i in range(theta.size):
            up = theta.copy()
            dn = theta.copy()
            up[i] += step
            dn[i] -= step
            fd[i] = (sys.lyapunov_value(ss, up) - sys.lyapunov_value(ss, dn)) / (2 * step)
        rel = np.linalg.norm(fd - grad) / max(1.0, np.linalg.norm(grad))
        worst = max(worst, rel)
    return CheckResult(
        "gradient_finite_difference", worst < 1e-6, worst, 1e-6,
        "max relative error over 20 points, step 1e-5",
    )


def _random_connected_graph(rng, n):
    edges = set()
    for node in range(1, n):
        edges.add((int(rng.integers(0, node)), node))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        k, j = rng.choice(n, size=2, replace=False)
        edges.add((min(int(k), int(j)), max(int(k), int(j))))
    edges = sorted(edges)
    weights = rng.uniform(0.5, 2.0, size=len(edges))
    return NetworkGraph(n, edges, weights)


def check_riccati_residual(seed=20242):
    """Riccati stationarity of the linear droop gain on random graphs and gains."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(3, 9))
        graph = _random_connected_graph(rng, n)
        alpha = rng.uniform(0.1, 10.0, size=n)
        gamma = rng.uniform(0.1, 10.0, size=n)
        worst = max(worst, riccati_residual(alpha, gamma, graph))
    return CheckResult(
        "riccati_residual", worst < 1e-12, worst, 1e-12,
        "max |Q - P R^-1 P| over 5 random graphs/gain sets",
    )


def check_lqr_taylor_slope(seed=20243):
    """Quadratic Taylor remainder of the nonlinear vs linearized droop control."""
    rng = np.random.default_rng(seed)
    graph = ring_graph(3, 1.0)
    theta_nom = np.array([0.4, 0.0, -0.3])
    sys = ReducedSystem(graph, alpha=0.5, gamma=1.0, theta_nom=theta_nom)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    scales = np.array([1e-2, 1e-3, 1e-4])
    gaps = []
    for s in scales:
        delta = s * direction
        u_nl = sys.angular_droop_control(theta_nom + delta)
        u_lin = lqr_gain_control(0.5, 1.0, graph, delta, theta_nom=theta_nom)
        gaps.append(np.linalg.norm(u_nl - u_lin))
    slope = float(np.polyfit(np.log10(scales), np.log10(gaps), 1)[0])
    return CheckResult(
        "lqr_taylor_slope", abs(slope - 2.0) <= 0.1, slope, 0.1,
        "log-log slope of |u_nonlinear - u_linear| vs perturbation scale, target 2",
    )


_FAMILIES = {"path": path_graph, "ring": ring_graph, "complete": complete_graph}


def check_coherence_formulas():
    """Closed-form coherences against the state-space H2 oracle.

    Runs path/ring/complete families (ring needs at least 3 nodes) with
    non-unit gains and susceptance; the frequency-droop value is also checked
    for inertia independence across two decades.
    """
    alpha, gamma, damping = 0.7, 1.3, 0.9
    worst = 0.0
    for kind, make in sorted(_FAMILIES.items()):
        for n in (2, 3, 5, 10):
            if kind == "ring" and n < 3:
                continue
            graph = make(n, 1.2)
            lam = laplacian_eigenvalues(graph)
            ang = coherence_angular(alpha, gamma, lam, n)
            sys_a = LinearizedSystem.angular(graph, alpha, gamma)
            oracle_a = h2_norm_oracle(
                sys_a.a_matrix(), sys_a.noise_matrix(), sys_a.coherence_output(),
            )
            worst = max(worst, abs(ang.value - oracle_a))
            freq = coherence_frequency(damping, lam, n)
            for m in (0.1, 1.0, 10.0):
                sys_f = LinearizedSystem.frequency(graph, m, damping)
                oracle_f = h2_norm_oracle(
                    sys_f.a_matrix(), sys_f.noise_matrix(), sys_f.coherence_output(),
                )
                worst = max(worst, abs(freq.value - oracle_f))
    return CheckResult(
        "coherence_formula_vs_oracle", worst < 1e-10, worst, 1e-10,
        "max |closed form - oracle| over families, sizes, inertias",
    )


def check_coherence_scaling():
    """Bounded angular coherence vs growing frequency-droop coherence on paths."""
    alpha = gamma = damping = 1.0
    angular_vals = {}
    freq_vals = {}
    for n in (10, 100, 200):
        lam = laplacian_eigenvalues(path_graph(n, 1.0))
        angular_vals[n] = coherence_angular(alpha, gamma, lam, n).value
        freq_vals[n] = coherence_frequency(damping, lam, n).value
    bound = alpha / gamma
    ratio = freq_vals[100] / freq_vals[10]
    worst_angular = max(angular_vals.values())
    passed = worst_angular < bound and ratio > 5.0
    return CheckResult(
        "coherence_scaling", passed, worst_angular, bound,
        f"angular stays under alpha/gamma on n=10,100,200; "
        f"frequency-droop growth factor n=10 to n=100 is {ratio:.2f} (needs > 5)",
    )


def check_empirical_coherence(seed=123456789):
    """Stochastic estimate of the 2-node angular coherence vs the closed form."""
    graph = path_graph(2, 1.0)
    alpha, gamma = 1.0, 2.0
    lam = laplacian_eigenvalues(graph)
    exact = coherence_angular(alpha, gamma, lam, 2).value
    sys = LinearizedSystem.angular(graph, alpha, gamma)
    est = empirical_coherence(sys, seed=seed, horizon=2000.0, dt=1e-3)
    rel = abs(est - exact) / exact
    return CheckResult(
        "empirical_coherence", rel <= 0.2, rel, 0.2,
        f"relative error of Euler-Maruyama estimate {est:.6f} vs exact {exact:.6f}",
    )


def check_reduced_stability(seed=20244):
    """Closed-loop convergence to the induced steady state from random starts.

    Ten perturbed initial conditions; requires monotone storage function along
    the recorded trajectory, convergence to theta_s, and a vanishing
    stationary frequency error despite the nonzero constant disturbance.
    """
    rng = np.random.default_rng(seed)
    sys = _benchmark_reduced()
    ss = sys.induced_steady_state()
    worst_final = 0.0
    worst_freq = 0.0
    monotone = True
    for _ in range(10):
        theta0 = ss.theta_s + rng.uniform(-0.1, 0.1, size=3)
        traj = sim_closed_loop(sys, theta0, dt=1e-3, horizon=20.0)
        values = np.array([sys.lyapunov_value(ss, th) for th in traj.states])
        if np.any(np.diff(values) > 1e-9):
            monotone = False
        final_err = float(np.abs(traj.states[-1] - ss.theta_s).max())
        freq_err = float(np.abs(sys.angular_droop_control(traj.states[-1])).max())
        worst_final = max(worst_final, final_err)
        worst_freq = max(worst_freq, freq_err)
    passed = monotone and worst_final < 1e-6 and worst_freq < 1e-6
    return CheckResult(
        "reduced_stability", passed, worst_final, 1e-6,
        f"V monotone: {monotone}; worst stationary frequency error {worst_freq:.3e} rad/s",
    )


def sim_closed_loop(sys, theta0, dt, horizon, controller="angular", record_stride=1):
    """Integrate the reduced closed loop in the rotating frame."""
    return simulate(
        lambda t, x: sys.closed_loop_rhs(x, controller=controller),
        theta0, dt, horizon, record_stride=record_stride, model_id="reduced",
    )


SUITES = {
    "hjb": (check_hjb_residual,),
    "gradient": (check_gradient_fd,),
    "riccati": (check_riccati_residual, check_lqr_taylor_slope),
    "coherence": (check_coherence_formulas, check_coherence_scaling, check_empirical_coherence),
    "stability": (check_reduced_stability,),
}
SUITES["all"] = sum(
    (SUITES[k] for k in ("hjb", "gradient", "riccati", "coherence", "stability")), ()
)


def run_suite(name):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r} (expected one of {sorted(SUITES)})")
    return [check() for check in SUITES[name]]
