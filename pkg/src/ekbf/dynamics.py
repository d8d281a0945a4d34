"""Time stepping: signal paths, deterministic flow, and the filter recursion.

All steppers accept leading batch dimensions so that a Monte Carlo engine can
advance thousands of trials (or a bank of filters) with the same code that
advances one.  Noise is drawn per trial from an independent counter-derived
stream, in fixed-size blocks, so a single-trial PathBundle and a batched run
produce bit-identical increments for the same (seed, trial) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    DivergedFilter,
    InvalidArgument,
    NoFixedPoint,
    NotReducible,
    UnstableStep,
)
from .models import ObservationModel

# Canonical noise protocol: standard normals are drawn in blocks of this many
# steps, signal block first then observation block.  Changing it would change
# every seeded result, so treat it as part of the on-disk format.
NOISE_BLOCK = 4096

# A filter whose mean norm or covariance trace passes this guard is recorded
# as diverged and frozen rather than allowed to overflow.
DIVERGENCE_GUARD = 1e8


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, invariant to scheduling and batching."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _noise_blocks(steps: int):
    for start in range(0, steps, NOISE_BLOCK):
        yield start, min(NOISE_BLOCK, steps - start)


@dataclass(frozen=True)
class PathBundle:
    """Pre-drawn Brownian increments for one trial.

    dW and dV have shape (steps, dim) and variance dt per coordinate.
    """

    dt: float
    steps: int
    dW: np.ndarray
    dV: np.ndarray
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidArgument("dt must be positive")
        if self.dW.shape[0] != self.steps or self.dV.shape[0] != self.steps:
            raise DimensionMismatch("increment arrays must have one row per step")


def make_path_bundle(
    seed: int, trial: int, steps: int, dt: float, signal_dim: int, obs_dim: int
) -> PathBundle:
    """Draw the canonical increment arrays for one trial."""
    if steps < 1:
        raise InvalidArgument("steps must be positive")
    if dt <= 0.0:
        raise InvalidArgument("dt must be positive")
    rng = trial_rng(seed, trial)
    root = np.sqrt(dt)
    dW = np.empty((steps, signal_dim))
    dV = np.empty((steps, obs_dim))
    for start, n in _noise_blocks(steps):
        dW[start : start + n] = rng.standard_normal((n, signal_dim)) * root
        dV[start : start + n] = rng.standard_normal((n, obs_dim)) * root
    return PathBundle(dt=dt, steps=steps, dW=dW, dV=dV, seed=seed, trial=trial)


@dataclass
class FilterState:
    """Mean, covariance, and clock of one filter."""

    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0


def check_step_size(model, dt: float) -> None:
    """Reject step sizes that make the explicit covariance update stiff."""
    if dt <= 0.0:
        raise InvalidArgument("dt must be positive")
    try:
        consts = model.regularity_constants()
    except NotReducible:
        # transported models may not expose rates; the caller takes the risk
        return
    if dt * consts.jac_decay >= 0.5:
        raise UnstableStep(
            f"dt * jac_decay = {dt * consts.jac_decay:.3f} >= 0.5; reduce the step"
        )


class Stepper:
    """Precomputed matrices for advancing signal, flow, and filter states."""

    def __init__(self, model, dt: float, obs: ObservationModel | None = None):
        check_step_size(model, dt)
        self.model = model
        self.dt = float(dt)
        self.R1_sqrt = linalg.sym_sqrt(model.R1)
        self.obs = obs
        if obs is not None:
            if obs.state_dim != model.dim:
                raise DimensionMismatch("sensor matrix and model dimension disagree")
            self.S = obs.S
            self.gain_map = obs.gain_map
            self.B = obs.B
            self.R2_sqrt = obs.R2_sqrt
            self.R1 = model.R1

    def signal_step(self, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """Euler-Maruyama update of the state equation."""
        return x + self.model.drift(x) * self.dt + dw @ self.R1_sqrt.T

    def flow_step(self, x: np.ndarray) -> np.ndarray:
        """Classical fourth-order Runge-Kutta step of the noise-free flow."""
        dt = self.dt
        f = self.model.drift
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def obs_increment(self, x: np.ndarray, dv: np.ndarray) -> np.ndarray:
        """Sensor increment dY generated by the state x over one step."""
        return (x @ self.B.T) * self.dt + dv @ self.R2_sqrt.T

    def filter_step(self, xhat, P, dy, active=None):
        """One explicit Euler step of the mean and covariance recursions.

        Batched over leading dimensions.  Rows where the update leaves the
        admissible region keep their previous value and are reported in the
        returned boolean mask (True = still healthy).  The covariance is
        symmetrized and eigenvalue-clipped after every step.
        """
        dt = self.dt
        innovation = dy - (xhat @ self.B.T) * dt
        gain = np.matmul(P, self.gain_map)
        J = self.model.drift_jacobian(xhat)
        new_x = (
            xhat
            + self.model.drift(xhat) * dt
            + np.einsum("...ij,...j->...i", gain, innovation)
        )
        JP = np.matmul(J, P)
        PSP = np.matmul(np.matmul(P, self.S), P)
        new_P = P + dt * (JP + np.swapaxes(JP, -1, -2) + self.R1 - PSP)
        new_P = linalg.psd_project_stack(linalg.symmetrize_stack(new_P))

        finite = np.isfinite(new_x).all(axis=-1) & np.isfinite(new_P).all(axis=(-2, -1))
        trace = np.einsum("...ii->...", new_P)
        healthy = finite & (np.linalg.norm(new_x, axis=-1) <= DIVERGENCE_GUARD)
        healthy &= np.abs(trace) <= DIVERGENCE_GUARD
        if active is not None:
            healthy &= active
        if not np.all(healthy):
            keep = healthy[..., None]
            new_x = np.where(keep, new_x, xhat)
            new_P = np.where(keep[..., None], new_P, P)
        return new_x, new_P, healthy


def simulate_signal(model, x0, bundle: PathBundle) -> np.ndarray:
    """Integrate the state equation along one increment bundle.

    Returns the path including the initial point, shape (steps + 1, dim).
    """
    x0 = linalg.as_vector(x0, model.dim)
    stepper = Stepper(model, bundle.dt)
    path = np.empty((bundle.steps + 1, model.dim))
    path[0] = x0
    x = x0
    for k in range(bundle.steps):
        x = stepper.signal_step(x, bundle.dW[k])
        path[k + 1] = x
    return path


def deterministic_flow(model, x0, dt: float, steps: int) -> np.ndarray:
    """Integrate the noise-free flow with RK4; batched over leading dims of x0.

    Returns shape (steps + 1,) + x0.shape.
    """
    if steps < 0:
        raise InvalidArgument("steps must be non-negative")
    x = np.asarray(x0, dtype=float)
    stepper = Stepper(model, dt)
    path = np.empty((steps + 1,) + x.shape)
    path[0] = x
    for k in range(steps):
        x = stepper.flow_step(x)
        path[k + 1] = x
    return path


def step_ekf(model, obs: ObservationModel, state: FilterState, dy, dt: float) -> FilterState:
    """Advance one filter by one step; raises DivergedFilter on blow-up."""
    stepper = Stepper(model, dt, obs)
    dy = np.asarray(dy, dtype=float)
    new_x, new_P, ok = stepper.filter_step(
        state.mean[np.newaxis], state.cov[np.newaxis], dy[np.newaxis]
    )
    if not bool(ok[0]):
        raise DivergedFilter("filter state left the admissible region")
    return FilterState(mean=new_x[0], cov=new_P[0], t=state.t + dt)


@dataclass
class TrialRecord:
    """One coupled run: the signal plus a bank of filters fed the same data.

    Recorded on a decimated grid (every record_every steps, endpoints always
    included).  traces holds tr(P) per filter on the full step grid so that
    envelope checks see every step; delta is the squared joint distance
    (mean and covariance) between the first two filters, when present.
    """

    times: np.ndarray
    signal: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    full_times: np.ndarray
    traces: np.ndarray
    delta: np.ndarray | None
    diverged: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def simulate_coupled(
    model,
    obs: ObservationModel,
    x0,
    filters: Sequence[FilterState],
    bundle: PathBundle,
    record_every: int = 1,
) -> TrialRecord:
    """Run one signal/observation path and a bank of filters on it.

    Every filter sees the identical observation increments.  Filters that
    trip the divergence guard freeze and are flagged rather than aborting
    the trial.
    """
    if len(filters) == 0:
        raise InvalidArgument("need at least one filter")
    if record_every < 1:
        raise InvalidArgument("record_every must be >= 1")
    d = model.dim
    x0 = linalg.as_vector(x0, d)
    stepper = Stepper(model, bundle.dt, obs)

    xh = np.stack([linalg.as_vector(f.mean, d) for f in filters])
    P = np.stack([linalg.as_symmetric(f.cov, d) for f in filters])
    n_f = len(filters)

    steps = bundle.steps
    rec_idx = list(range(0, steps + 1, record_every))
    if rec_idx[-1] != steps:
        rec_idx.append(steps)
    rec_pos = {k: i for i, k in enumerate(rec_idx)}
    n_rec = len(rec_idx)

    times = np.asarray(rec_idx, dtype=float) * bundle.dt
    signal = np.empty((n_rec, d))
    means = np.empty((n_f, n_rec, d))
    covs = np.empty((n_f, n_rec, d, d))
    traces = np.empty((n_f, steps + 1))
    delta = np.empty(n_rec) if n_f >= 2 else None

    def record(step, x):
        i = rec_pos.get(step)
        if i is None:
            return
        signal[i] = x
        means[:, i] = xh
        covs[:, i] = P
        if delta is not None:
            dm = xh[0] - xh[1]
            dP = P[0] - P[1]
            delta[i] = float(dm @ dm + np.sum(dP * dP))

    x = x0
    active = np.ones(n_f, dtype=bool)
    traces[:, 0] = np.einsum("fii->f", P)
    record(0, x)
    for k in range(steps):
        dy = stepper.obs_increment(x, bundle.dV[k])
        xh, P, active = stepper.filter_step(xh, P, np.broadcast_to(dy, (n_f,) + dy.shape), active)
        x = stepper.signal_step(x, bundle.dW[k])
        traces[:, k + 1] = np.einsum("fii->f", P)
        record(k + 1, x)

    return TrialRecord(
        times=times,
        signal=signal,
        means=means,
        covs=covs,
        full_times=np.arange(steps + 1) * bundle.dt,
        traces=traces,
        delta=delta,
        diverged=~active,
        diagnostics={"seed": bundle.seed, "trial": bundle.trial},
    )


def fixed_point(model, x0=None, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Zero of the drift field via damped Newton iteration.

    The drift families here are strongly monotone, so the zero is unique and
    Newton with backtracking is reliable; failure to converge within max_iter
    raises NoFixedPoint.
    """
    consts = model.regularity_constants()  # raises if the model is not contractive
    assert consts.drift_decay > 0.0
    d = model.dim
    x = np.zeros(d) if x0 is None else linalg.as_vector(x0, d).copy()
    for _ in range(max_iter):
        f = model.drift(x)
        n0 = float(np.linalg.norm(f))
        if n0 <= tol:
            return x
        J = model.drift_jacobian(x)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise NoFixedPoint(f"singular Jacobian at iterate {x}") from exc
        lam = 1.0
        while lam >= 2.0**-20:
            trial = x + lam * step
            if np.linalg.norm(model.drift(trial)) <= (1.0 - 0.25 * lam) * n0:
                break
            lam *= 0.5
        else:
            raise NoFixedPoint("backtracking stalled without residual decrease")
        x = trial
    raise NoFixedPoint(f"no convergence after {max_iter} iterations")
