import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares

from atdipole.lm import ConvergenceError, levenberg_marquardt, numeric_jacobian


def test_linear_least_squares_matches_normal_equations(rng):
    A = rng.normal(size=(40, 3))
    b = rng.normal(size=40)
    res = levenberg_marquardt(lambda x: A @ x - b, np.zeros(3))
    exact = np.linalg.lstsq(A, b, rcond=None)[0]
    assert res.converged
    assert np.allclose(res.x, exact, atol=1e-7)
    assert np.allclose(res.covariance(), np.linalg.inv(A.T @ A), rtol=1e-5)


def test_rosenbrock():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])  # noqa: E731
    res = levenberg_marquardt(fun, [-1.2, 1.0], max_iter=500)
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)


@given(st.floats(0.5, 5.0), st.floats(0.2, 3.0), st.floats(-1.0, 1.0))
def test_exponential_decay_agrees_with_scipy(amp, rate, offset):
    t = np.linspace(0, 4, 60)
    y = amp * np.exp(-rate * t) + offset + 0.01 * np.sin(7 * t)

    def fun(p):
        return p[0] * np.exp(-p[1] * t) + p[2] - y

    ours = levenberg_marquardt(fun, [1.0, 1.0, 0.0])
    ref = least_squares(fun, [1.0, 1.0, 0.0], method="lm", xtol=1e-14, ftol=1e-14)
    assert ours.cost <= ref.cost * (1 + 1e-6) + 1e-14


def test_cost_trace_is_monotone(rng):
    t = np.linspace(-3, 3, 50)
    y = 2.0 / (1 + (t - 0.4) ** 2) + rng.normal(0, 0.01, t.size)
    res = levenberg_marquardt(lambda p: p[0] / (1 + (t - p[1]) ** 2) - y, [1.0, 0.0])
    assert np.all(np.diff(res.trace) <= 0)
    assert res.x[1] == pytest.approx(0.4, abs=0.02)


def test_step_cap_is_respected():
    fun = lambda x: np.array([x[0] - 100.0])  # noqa: E731
    seen = []

    def recording(x):
        seen.append(float(x[0]))
        return fun(x)

    res = levenberg_marquardt(recording, [0.0], max_step=1.0, max_iter=500)
    assert res.converged and res.x[0] == pytest.approx(100.0)
    jumps = np.diff(seen)
    assert res.n_iter >= 100
    assert np.max(np.abs(jumps)) <= 1.0 + 1e-4


def test_non_finite_start_raises():
    with pytest.raises(ConvergenceError):
        levenberg_marquardt(lambda x: np.array([np.nan]), [0.0])


def test_iteration_cap_reports_not_converged():
    fun = lambda x: np.array([x[0] - 1e6])  # noqa: E731
    res = levenberg_marquardt(fun, [0.0], max_step=1.0, max_iter=5)
    assert not res.converged
    assert res.message == "iteration cap reached"


def test_numeric_jacobian():
    fun = lambda x: np.array([x[0] ** 2, x[0] * x[1], np.sin(x[1])])  # noqa: E731
    x = np.array([1.5, 0.3])
    J = numeric_jacobian(fun, x, fun(x))
    exact = np.array([[3.0, 0.0], [0.3, 1.5], [0.0, np.cos(0.3)]])
    assert np.allclose(J, exact, atol=1e-5)
