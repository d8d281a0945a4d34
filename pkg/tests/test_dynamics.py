"""Steppers and simulators: exact-moment oracles, contraction, determinism."""

import numpy as np
import pytest

from ekbf.dynamics import (
    NOISE_BLOCK,
    FilterState,
    Stepper,
    check_step_size,
    deterministic_flow,
    fixed_point,
    make_path_bundle,
    simulate_coupled,
    simulate_signal,
    step_ekf,
    trial_rng,
)
from ekbf.errors import DivergedFilter, UnstableStep
from ekbf.models import LinearModel, QuadraticCubicModel, observation_params

OU = LinearModel(np.array([[-1.0]]), np.array([[1.0]]))
OBS1 = observation_params(np.array([[1.0]]), np.array([[1.0]]))


def _qc2():
    return QuadraticCubicModel(np.eye(2), np.zeros(2), np.eye(2), 1.0, 0.5 * np.eye(2))


def test_path_bundle_reproducible_and_blocked():
    b1 = make_path_bundle(seed=9, trial=4, steps=5000, dt=0.01, signal_dim=2, obs_dim=1)
    b2 = make_path_bundle(seed=9, trial=4, steps=5000, dt=0.01, signal_dim=2, obs_dim=1)
    assert np.array_equal(b1.dW, b2.dW) and np.array_equal(b1.dV, b2.dV)
    other = make_path_bundle(seed=9, trial=5, steps=5000, dt=0.01, signal_dim=2, obs_dim=1)
    assert not np.array_equal(b1.dW, other.dW)

    # replicate the block protocol by hand: per block, the signal draw comes
    # first, then the observation draw, from the same per-trial stream
    rng = trial_rng(9, 4)
    root = np.sqrt(0.01)
    for start in (0, NOISE_BLOCK):
        n = min(NOISE_BLOCK, 5000 - start)
        assert np.array_equal(b1.dW[start : start + n], rng.standard_normal((n, 2)) * root)
        assert np.array_equal(b1.dV[start : start + n], rng.standard_normal((n, 1)) * root)


def test_ou_variance_matches_closed_form():
    # batched Euler paths of dX = -X dt + dW from 0; Var X_T = (1 - e^{-2T})/2
    n, steps, dt = 2000, 500, 0.01
    stepper = Stepper(OU, dt)
    rng = np.random.default_rng(77)
    x = np.zeros((n, 1))
    for _ in range(steps):
        x = stepper.signal_step(x, rng.standard_normal((n, 1)) * np.sqrt(dt))
    var = float(np.mean(x**2))
    want = 0.5 * (1.0 - np.exp(-2.0 * steps * dt))
    assert var == pytest.approx(want, rel=0.12)


def test_riccati_converges_to_algebraic_root():
    # scalar filter covariance: dP/dt = -2P + 1 - P^2, fixed point sqrt(2) - 1
    stepper = Stepper(OU, 1e-3, OBS1)
    P = np.array([[[1.0]]])
    x = np.array([[0.0]])
    for _ in range(10000):
        x, P, ok = stepper.filter_step(x, P, np.zeros((1, 1)))
        assert ok.all()
    assert P[0, 0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, abs=1e-3)


def test_coupled_trajectories_contract_pathwise():
    """Two copies of the signal driven by the same noise shrink together at
    least at the certified one-sided rate (Euler leaves an O(dt) fudge)."""
    model = _qc2()
    dt, steps = 0.005, 1000
    lam = model.regularity_constants().drift_decay
    stepper = Stepper(model, dt)
    rng = np.random.default_rng(88)
    x = np.tile(np.array([1.5, -0.5]), (20, 1))
    y = np.tile(np.array([-1.0, 2.0]), (20, 1))
    gap0 = np.linalg.norm(x[0] - y[0])
    for k in range(steps):
        dw = rng.standard_normal((20, 2)) * np.sqrt(dt)
        x = stepper.signal_step(x, dw)
        y = stepper.signal_step(y, dw)
        t = (k + 1) * dt
        gaps = np.linalg.norm(x - y, axis=1)
        assert np.all(gaps <= gap0 * np.exp(-lam * t) * (1.0 + 10.0 * dt))


def test_deterministic_flow_contracts():
    model = _qc2()
    dt, steps = 0.01, 800
    lam = model.regularity_constants().drift_decay
    rng = np.random.default_rng(89)
    starts = rng.standard_normal((16, 2)) * 2.0
    path = deterministic_flow(model, starts, dt, steps)
    ref = deterministic_flow(model, starts + np.array([0.5, -0.3]), dt, steps)
    gap0 = np.linalg.norm(np.array([0.5, -0.3]))
    for k in (100, 400, 800):
        t = k * dt
        gaps = np.linalg.norm(path[k] - ref[k], axis=1)
        assert np.all(gaps <= gap0 * np.exp(-lam * t) * (1.0 + 10.0 * dt))


def test_signal_step_first_order_in_dt():
    # noise-free Euler against the exact exponential: halving dt halves the error
    def endpoint(dt):
        stepper = Stepper(OU, dt)
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = stepper.signal_step(x, np.zeros(1))
        return float(x[0])

    err1 = abs(endpoint(0.01) - np.exp(-1.0))
    err2 = abs(endpoint(0.005) - np.exp(-1.0))
    assert err1 / err2 == pytest.approx(2.0, abs=0.3)


def test_trace_stays_under_envelope_single_trial():
    model = _qc2()
    obs = observation_params(np.eye(2), np.eye(2))
    bundle = make_path_bundle(seed=3, trial=0, steps=1000, dt=0.005, signal_dim=2, obs_dim=2)
    state = FilterState(mean=np.zeros(2), cov=0.5 * np.eye(2))
    rec = simulate_coupled(model, obs, np.zeros(2), [state], bundle)
    lam = model.regularity_constants().jac_decay
    tr_R1 = float(np.trace(model.R1))
    tau = np.exp(-lam * rec.full_times) * 1.0 + tr_R1 / lam
    assert np.all(rec.traces[0] <= tau + 5 * bundle.dt * tr_R1)


def test_simulate_signal_shapes_and_reproducibility():
    bundle = make_path_bundle(seed=10, trial=2, steps=300, dt=0.01, signal_dim=1, obs_dim=1)
    p1 = simulate_signal(OU, np.array([0.7]), bundle)
    p2 = simulate_signal(OU, np.array([0.7]), bundle)
    assert p1.shape == (301, 1)
    assert np.array_equal(p1, p2)


def test_divergence_guard_freezes_and_flags():
    bundle = make_path_bundle(seed=11, trial=0, steps=50, dt=0.01, signal_dim=1, obs_dim=1)
    bad = FilterState(mean=np.array([5e8]), cov=np.array([[1.0]]))
    good = FilterState(mean=np.array([0.0]), cov=np.array([[1.0]]))
    rec = simulate_coupled(OU, OBS1, np.zeros(1), [good, bad], bundle)
    assert list(rec.diverged) == [False, True]
    # the diverged filter froze at its initial state
    assert np.all(rec.means[1] == 5e8)

    with pytest.raises(DivergedFilter):
        step_ekf(OU, OBS1, bad, np.zeros(1), 0.01)


def test_step_size_guard():
    with pytest.raises(UnstableStep):
        check_step_size(OU, 0.3)  # 0.3 * 2.0 >= 0.5
    check_step_size(OU, 0.01)


def test_fixed_point_scalar_oracle():
    # d = 1: gradient equation x + x|x| = -q has root (1 - sqrt(3))/2 at q = 0.5
    model = QuadraticCubicModel(
        np.array([[1.0]]), np.array([0.5]), np.array([[1.0]]), 1.0, np.array([[1.0]])
    )
    x_star = fixed_point(model)
    assert x_star[0] == pytest.approx((1.0 - np.sqrt(3.0)) / 2.0, abs=1e-9)
    assert np.linalg.norm(model.drift(x_star)) <= 1e-10


def test_fixed_point_linear_is_origin():
    x_star = fixed_point(LinearModel(np.array([[-2.0, 0.3], [-0.3, -1.0]]), np.eye(2)))
    assert np.allclose(x_star, 0.0, atol=1e-10)
