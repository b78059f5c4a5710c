import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from wavefield.errors import BadKernel, NonPositiveParameter, ShapeMismatch, UnstableStep
from wavefield.ssm import (CirculantSpec, StateSpaceModel, circulant_apply, eigenmodes,
                           eigenvalues, is_toeplitz, make_mexican_hat_circulant, mode_trajectory,
                           simulate_ssm, spatial_variance, to_modes)
from wavefield.wavesim import KernelProfile


def loop_circulant(c):
    n = len(c)
    return np.array([[c[(j - i) % n] for j in range(n)] for i in range(n)])


def test_mexican_hat_row_shape():
    c = make_mexican_hat_circulant(8, KernelProfile(1.0, 1.0, 0.5, 3.0, 0.0)).c
    assert c[0] > 0 and c[4] < 0
    for k in range(1, 8):
        assert c[k] == c[8 - k]


def test_no_surround_is_nonnegative():
    c = make_mexican_hat_circulant(16, KernelProfile(1.0, 1.0, 0.0, 3.0, 0.0)).c
    assert np.all(c >= 0)


def test_generated_matrix_is_toeplitz_and_circulant():
    spec = make_mexican_hat_circulant(12, KernelProfile(1.0, 2.0, 0.3, 5.0, 0.0))
    A = spec.dense()
    assert is_toeplitz(A)
    np.testing.assert_array_equal(A, loop_circulant(spec.c))
    assert not is_toeplitz(np.arange(9.0).reshape(3, 3) ** 2)


def test_bad_kernels():
    with pytest.raises(BadKernel):
        make_mexican_hat_circulant(8, KernelProfile(1.0, 3.0, 0.5, 3.0, 0.0))
    with pytest.raises(NonPositiveParameter):
        make_mexican_hat_circulant(2, KernelProfile())


def test_identity_spectrum():
    lam, _ = eigenmodes(CirculantSpec(np.eye(7)[0]))
    np.testing.assert_allclose(lam, 1.0)


def test_small_known_spectrum():
    c = np.array([2.0, -1.0, 0.0, -1.0])
    lam = eigenvalues(CirculantSpec(c))
    dense = np.sort(np.linalg.eigvalsh(loop_circulant(c)))
    np.testing.assert_allclose(np.sort(lam.real), dense, atol=1e-12)
    np.testing.assert_allclose(np.sort(lam.real), [0, 2, 2, 4], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 256), seed=st.integers(0, 10**6))
def test_eigenmode_residuals(n, seed):
    c = np.random.default_rng(seed).standard_normal(n)
    lam, F = eigenmodes(CirculantSpec(c))
    A = loop_circulant(c) if n <= 32 else CirculantSpec(c).dense()
    resid = np.linalg.norm(A @ F - F * lam[None, :], axis=0)
    assert resid.max() < 1e-9
    np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1.0)


def test_apply_identity_and_shift():
    x = np.arange(6.0)
    assert np.allclose(circulant_apply(CirculantSpec(np.eye(6)[0]), x), x)
    shifted = circulant_apply(CirculantSpec(np.eye(6)[5]), x)
    np.testing.assert_allclose(shifted, np.roll(x, 1), atol=1e-12)
    np.testing.assert_allclose(shifted, loop_circulant(np.eye(6)[5]) @ x, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 96))
def test_apply_matches_dense(seed, n):
    rng = np.random.default_rng(seed)
    c, x = rng.standard_normal(n), rng.standard_normal(n)
    y = circulant_apply(CirculantSpec(c), x)
    ref = loop_circulant(c) @ x
    assert np.linalg.norm(y - ref) <= 1e-9 * max(np.linalg.norm(ref), 1e-300) + 1e-15


def test_apply_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        circulant_apply(CirculantSpec(np.ones(4)), np.ones(5))


def test_euler_integrator_is_cumulative_sum():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((12, 3))
    I = np.eye(3)
    model = StateSpaceModel(np.zeros((3, 3)), I, I, np.zeros((3, 3)), dt=1.0)
    y = simulate_ssm(model, u)
    expected = np.vstack([np.zeros(3), np.cumsum(u, axis=0)[:-1]])
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_passthrough():
    u = np.random.default_rng(3).standard_normal((9, 4))
    model = StateSpaceModel(CirculantSpec(np.array([-1.0, 0.2, 0.0, 0.2])), np.zeros((4, 4)),
                            np.eye(4), np.eye(4), 0.1)
    for method in ("euler", "exact"):
        np.testing.assert_allclose(simulate_ssm(model, u, method), u, atol=1e-12)


def test_exact_circulant_matches_matrix_exponential():
    spec = make_mexican_hat_circulant(16, KernelProfile(1.0, 2.0, 0.1, 4.0, 0.0)).with_zero_row_sum()
    rng = np.random.default_rng(4)
    u = rng.standard_normal((30, 16))
    dt = 0.05
    fast = StateSpaceModel(spec, np.eye(16), np.eye(16), np.zeros((16, 16)), dt)
    dense = StateSpaceModel(spec.dense(), np.eye(16), np.eye(16), np.zeros((16, 16)), dt)
    np.testing.assert_allclose(simulate_ssm(fast, u, "exact"), simulate_ssm(dense, u, "exact"),
                               atol=1e-10)
    # independent oracle: input integral by midpoint quadrature of exp(A s)
    Ad = scipy.linalg.expm(spec.dense() * dt)
    x = np.zeros(16)
    n_steps = 3
    G = _zoh(spec.dense(), dt)
    for t in range(n_steps):
        x = Ad @ x + G @ u[t]
    _, xs = simulate_ssm(fast, u[:n_steps], "exact", return_state=True)
    np.testing.assert_allclose(xs, x, atol=1e-10)


def _zoh(A, dt, n=4000):
    """Midpoint-rule integral of exp(A s) over [0, dt]."""
    h = dt / n
    step = scipy.linalg.expm(A * h)
    acc = np.zeros_like(A)
    cur = scipy.linalg.expm(A * h / 2)
    for _ in range(n):
        acc += cur * h
        cur = step @ cur
    return acc


def test_zero_row_sum_spreads_symmetrically():
    spec = make_mexican_hat_circulant(64, KernelProfile(1.0, 2.0, 0.1, 4.0, 0.0)).with_zero_row_sum()
    np.testing.assert_allclose(spec.dense().sum(axis=1), 0.0, atol=1e-12)
    model = StateSpaceModel(spec, np.eye(64), np.eye(64), np.zeros((64, 64)), 0.05)
    x0 = np.zeros(64)
    x0[0] = 1.0
    y = simulate_ssm(model, np.zeros((50, 64)), "exact", x0=x0)
    for row in y:
        np.testing.assert_allclose(row[1:], row[1:][::-1], atol=1e-12)
    var = np.array([spatial_variance(row) for row in y])
    assert np.all(np.diff(var) >= -1e-12) and var[-1] > var[0]


def test_modes_evolve_independently():
    spec = make_mexican_hat_circulant(24, KernelProfile(1.0, 2.0, 0.2, 5.0, 0.0))
    rng = np.random.default_rng(5)
    u = rng.standard_normal((40, 24))
    x0 = rng.standard_normal(24)
    dt = 0.05
    dense = StateSpaceModel(spec.dense(), np.eye(24), np.eye(24), np.zeros((24, 24)), dt)
    y, xT = simulate_ssm(dense, u, "exact", x0=x0, return_state=True)
    states = np.vstack([y, xT])
    z = to_modes(states.T)  # (N, T+1)
    lam = eigenvalues(spec)
    zf = to_modes(u.T)
    for k in range(24):
        closed = mode_trajectory(lam[k], z[k, 0], zf[k], dt)
        np.testing.assert_allclose(z[k], closed, atol=1e-6)


def test_euler_guard_raises():
    model = StateSpaceModel(np.eye(2) * 50.0, np.eye(2), np.eye(2), np.zeros((2, 2)), 1.0)
    with pytest.raises(UnstableStep):
        simulate_ssm(model, np.zeros((20, 2)), x0=np.ones(2))


def test_unstable_spectrum_warns():
    model = StateSpaceModel(CirculantSpec(np.array([1.0, 0.0, 0.0])), np.eye(3), np.eye(3),
                            np.zeros((3, 3)), 0.1)
    with pytest.warns(RuntimeWarning):
        report = model.stability_report()
    assert report["stable"] is False


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        StateSpaceModel(np.eye(3), np.ones((2, 1)), np.eye(3), np.zeros((3, 1)))
    model = StateSpaceModel(np.eye(3), np.ones((3, 1)), np.eye(3), np.zeros((3, 1)))
    with pytest.raises(ShapeMismatch):
        simulate_ssm(model, np.zeros((4, 2)))
