import numpy as np
import pytest

from angledroop.errors import NonFiniteState
from angledroop.sim_engine import (
    Trajectory,
    rk4_step,
    settle_metrics,
    simulate,
    snap_to_grid,
    write_csv,
)


def test_rk4_single_step_against_exponential():
    """One RK4 step on x' = -x reproduces exp(-dt) to fifth order."""
    out = rk4_step(lambda t, x: -x, 0.0, np.array([1.0]), 0.1)
    # truncated Taylor series of exp(-0.1) through the dt^4 term
    assert out[0] == pytest.approx(1 - 0.1 + 0.005 - 0.1 ** 3 / 6 + 0.1 ** 4 / 24, abs=1e-15)
    err = abs(out[0] - np.exp(-0.1))
    assert 1e-9 < err < 1e-7


def _expm(a, t):
    # dense matrix exponential through the eigendecomposition; fine as an
    # oracle for the small diagonalizable systems used here
    w, s = np.linalg.eig(a * t)
    return (s @ np.diag(np.exp(w)) @ np.linalg.inv(s)).real


def test_rk4_fourth_order_on_linear_system():
    a = np.array([[0.0, 1.0], [-2.0, -0.3]])
    x0 = np.array([1.0, 0.0])
    exact = _expm(a, 1.0) @ x0

    def run(dt):
        traj = simulate(lambda t, x: a @ x, x0, dt, 1.0, record_stride=10 ** 9)
        return np.linalg.norm(traj.states[-1] - exact)

    ratio = run(0.02) / run(0.01)
    assert 14.0 < ratio < 18.0


def test_simulate_recording_grid():
    traj = simulate(lambda t, x: np.zeros(1), np.zeros(1), 0.1, 1.0, record_stride=3)
    # t0, every third step, and the final step
    assert traj.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert traj.meta["dt"] == 0.1
    assert traj.meta["record_stride"] == 3


def test_simulate_zero_horizon():
    traj = simulate(lambda t, x: x, np.array([2.0]), 0.1, 0.0)
    assert traj.times.shape == (1,)
    assert traj.states[0, 0] == 2.0


def test_simulate_event_switches_rhs_on_grid():
    up = lambda t, x: np.array([1.0])
    down = lambda t, x: np.array([-1.0])
    traj = simulate(up, np.zeros(1), 0.1, 1.0, events=[(0.5, down)], record_stride=1)
    # constant slopes integrate exactly: ramp to 0.5 then back to zero
    assert traj.states[5, 0] == pytest.approx(0.5, abs=1e-12)
    assert traj.states[-1, 0] == pytest.approx(0.0, abs=1e-12)
    assert traj.meta["events"] == [0.5]


def test_off_grid_event_warns():
    with pytest.warns(UserWarning, match="snapped"):
        simulate(lambda t, x: x, np.ones(1), 0.1, 0.5, events=[(0.123, lambda t, x: -x)])


def test_snap_to_grid_exact():
    assert snap_to_grid(0.3, 1e-7) == 3000000


def test_non_finite_state_raises():
    def explode(t, x):
        with np.errstate(over="ignore"):
            return x * 1e300

    with pytest.raises(NonFiniteState):
        simulate(explode, np.array([1.0]), 0.5, 2.0)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)))
    with pytest.raises(NonFiniteState):
        Trajectory(np.array([0.0, 1.0]), np.array([[0.0], [np.nan]]))


def test_settle_metrics_last_excursion():
    t = np.linspace(0.0, 10.0, 101)
    sig = np.exp(-t)
    m = settle_metrics(t, sig, 0.0, tol=0.05)
    # exp(-t) <= 0.05 from t = 3 onward; the first recorded instant past the
    # last excursion is t = 3.0
    assert m.settled
    assert m.settle_time == pytest.approx(3.0)
    assert m.final_error == pytest.approx(np.exp(-10.0))
    assert m.peak_error == pytest.approx(1.0)


def test_settle_metrics_never_settles():
    t = np.array([0.0, 1.0, 2.0])
    m = settle_metrics(t, np.array([1.0, 1.0, 1.0]), 0.0, tol=0.5)
    assert not m.settled
    assert np.isnan(m.settle_time)


def test_settle_metrics_multichannel():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    sig = np.stack([np.array([1.0, 0.2, 0.0, 0.0]), np.array([0.0, 0.0, 0.3, 0.0])], axis=1)
    m = settle_metrics(t, sig, 0.0, tol=0.25)
    # the second channel excursion at t=2 dominates
    assert m.settle_time == pytest.approx(3.0)


def test_write_csv_roundtrip(tmp_path):
    path = tmp_path / "out.csv"
    t = np.array([0.0, 0.1, 0.2])
    x = np.array([1.0, 1.0 / 3.0, 1e-17])
    write_csv(path, ["t", "x"], [t, x])
    text = path.read_text().splitlines()
    assert text[0] == "t,x"
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    # 17 significant digits round-trip doubles exactly
    assert np.array_equal(back[:, 1], x)
    with pytest.raises(ValueError):
        write_csv(path, ["only_one"], [t, x])
