"""Signal and observation models.

Three drift families are supported, all strongly stable:

  * LinearModel          dX = A X dt + sqrt(R1) dW, with A + A^T negative definite
  * QuadraticCubicModel  gradient flow of V(x) = <Q1 x, x>/2 + <q, x>
                         + <Q2 x, x>^{3/2}/3, scaled by an inverse temperature
  * InteractingModel     N exchangeable scalar particles with a confining
                         potential and a smooth pair interaction

Every model exposes a vectorized drift(x) and drift_jacobian(x) accepting
leading batch dimensions, plus regularity_constants() packaging the decay and
Lipschitz rates the stability envelopes are built from.

Convention note: for the gradient-flow families the constants are the
deliberately conservative pair

    jac_decay = beta * (curvature lower bound) / 2
    jac_lip   = beta * (Hessian Lipschitz constant)

i.e. jac_decay is a factor 4 below what the symmetrized-Jacobian definition
would give for these convex potentials.  All envelopes consuming the constants
remain valid (they only get looser), and the same convention keeps the linear
and nonlinear families comparable.  The linear family uses the exact value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InvalidArgument,
    InvalidMatrix,
    ModelNotContractive,
    NotPD,
    NotPSD,
    NotReducible,
)

# Below this value of <Q2 x, x> the cubic part of the potential is dropped and
# the Hessian falls back to the quadratic part, avoiding 0/0 at the origin.
CUBIC_CUTOFF = 1e-14


@dataclass(frozen=True)
class RegularityConstants:
    """Decay and smoothness rates of a drift field.

    jac_decay   : rate lambda such that the symmetrized Jacobian stays below
                  -lambda (in the conservative convention described above)
    jac_lip     : Lipschitz constant of the Jacobian map
    drift_decay : one-sided monotonicity rate of the drift itself;
                  always at least jac_decay / 2
    """

    jac_decay: float
    jac_lip: float
    drift_decay: float

    def __post_init__(self):
        if not (self.jac_decay > 0.0):
            raise ModelNotContractive(f"jac_decay must be positive, got {self.jac_decay}")
        if self.jac_lip < 0.0:
            raise InvalidArgument("jac_lip must be non-negative")
        if self.drift_decay < 0.5 * self.jac_decay - 1e-12:
            raise InvalidArgument(
                f"drift_decay {self.drift_decay} below jac_decay/2 = {0.5 * self.jac_decay}"
            )


def _check_noise(R1, dim: int) -> np.ndarray:
    R1 = linalg.as_symmetric(R1, dim)
    if linalg.min_eigenvalue(R1) <= 0.0:
        raise NotPD("signal noise covariance must be positive definite")
    return R1


@dataclass(frozen=True)
class LinearModel:
    """dX = A X dt + sqrt(R1) dW with a strictly stable symmetric part."""

    A: np.ndarray
    R1: np.ndarray

    def __post_init__(self):
        A = linalg.as_square(self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R1", _check_noise(self.R1, A.shape[0]))
        if linalg.sym_spectral_abscissa(A) >= 0.0:
            raise ModelNotContractive("A + A^T must be negative definite")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def drift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.A.T

    def drift_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.A, x.shape[:-1] + self.A.shape).copy()

    def regularity_constants(self) -> RegularityConstants:
        decay = -linalg.sym_spectral_abscissa(self.A)
        return RegularityConstants(jac_decay=decay, jac_lip=0.0, drift_decay=0.5 * decay)


@dataclass(frozen=True)
class QuadraticCubicModel:
    """Gradient flow of a quadratic potential plus a cubic confinement term.

    V(x) = <Q1 x, x>/2 + <q, x> + <Q2 x, x>^{3/2}/3 with Q1 positive definite
    and Q2 positive semi-definite; the drift is -beta * grad V.
    """

    Q1: np.ndarray
    q: np.ndarray
    Q2: np.ndarray
    beta: float
    R1: np.ndarray

    def __post_init__(self):
        Q1 = linalg.as_symmetric(self.Q1)
        d = Q1.shape[0]
        q = linalg.as_vector(self.q, d)
        Q2 = linalg.as_symmetric(self.Q2, d)
        if not (self.beta > 0.0):
            raise InvalidArgument("beta must be positive")
        if linalg.min_eigenvalue(Q1) <= 0.0:
            raise NotPD("Q1 must be positive definite")
        if linalg.min_eigenvalue(Q2) < -linalg.EIG_ZERO_BAND:
            raise NotPSD("Q2 must be positive semi-definite")
        object.__setattr__(self, "Q1", Q1)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Q2", Q2)
        object.__setattr__(self, "R1", _check_noise(self.R1, d))

    @property
    def dim(self) -> int:
        return self.Q1.shape[0]

    def _cubic_form(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", x, self.Q2, x)

    def potential_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self._cubic_form(x)
        root = np.sqrt(np.maximum(s, 0.0))
        cubic = np.where(s[..., None] > CUBIC_CUTOFF, root[..., None] * (x @ self.Q2), 0.0)
        return self.q + x @ self.Q1 + cubic

    def potential_hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self._cubic_form(x)
        root = np.sqrt(np.maximum(s, 0.0))
        g = x @ self.Q2
        # rank-one term (Q2 x)(Q2 x)^T / sqrt(<Q2 x, x>), zero at the cutoff
        safe = np.where(s > CUBIC_CUTOFF, root, 1.0)
        outer = np.einsum("...i,...j->...ij", g, g) / safe[..., None, None]
        mask = (s > CUBIC_CUTOFF)[..., None, None]
        H = self.Q1 + np.where(mask, root[..., None, None] * self.Q2 + outer, 0.0)
        return linalg.symmetrize_stack(H)

    def drift(self, x) -> np.ndarray:
        return -self.beta * self.potential_gradient(x)

    def drift_jacobian(self, x) -> np.ndarray:
        return -self.beta * self.potential_hessian(x)

    def regularity_constants(self) -> RegularityConstants:
        curv = linalg.min_eigenvalue(self.Q1)
        lip = 2.0 * linalg.max_eigenvalue(self.Q2) ** 1.5
        decay = 0.5 * self.beta * curv
        return RegularityConstants(
            jac_decay=decay, jac_lip=self.beta * lip, drift_decay=0.5 * decay
        )


@dataclass(frozen=True)
class InteractingModel:
    """Gradient flow of N scalar particles with confinement and pair coupling.

    Potential:  sum_i U1(x_i) + sum_{i != j} U2(x_i, x_j)  (ordered pairs).

    The callbacks must be vectorized over leading batch dimensions:
      du1(z) -> dU1/dz with z of shape (...,),
      d2u1(z) -> second derivative, same shape,
      du2(p) -> gradient of U2 with p of shape (..., 2),
      d2u2(p) -> symmetric 2x2 Hessian of U2, shape (..., 2, 2).

    u1, u2 are curvature lower bounds (d2U1 >= u1, d2U2 >= u2 * I), kappa1 and
    kappa2 the Lipschitz constants of the respective Hessians; these are
    supplied by the caller because they depend on the analytic form of the
    potentials, not just on point evaluations.
    """

    du1: Callable[[np.ndarray], np.ndarray]
    d2u1: Callable[[np.ndarray], np.ndarray]
    du2: Callable[[np.ndarray], np.ndarray]
    d2u2: Callable[[np.ndarray], np.ndarray]
    u1: float
    u2: float
    kappa1: float
    kappa2: float
    n_particles: int
    beta: float
    R1: np.ndarray

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidArgument("need at least two particles")
        if not (self.beta > 0.0):
            raise InvalidArgument("beta must be positive")
        if self.kappa1 < 0.0 or self.kappa2 < 0.0:
            raise InvalidArgument("Hessian Lipschitz constants must be non-negative")
        object.__setattr__(self, "R1", _check_noise(self.R1, self.n_particles))

    @property
    def dim(self) -> int:
        return self.n_particles

    def _pair_indices(self):
        n = self.n_particles
        return [(i, j) for i in range(n) for j in range(n) if i != j]

    def potential_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.du1(x), dtype=float).copy()
        for i, j in self._pair_indices():
            pair = np.stack([x[..., i], x[..., j]], axis=-1)
            gp = np.asarray(self.du2(pair), dtype=float)
            g[..., i] += gp[..., 0]
            g[..., j] += gp[..., 1]
        return g

    def potential_hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.n_particles
        H = np.zeros(x.shape[:-1] + (n, n))
        diag = np.asarray(self.d2u1(x), dtype=float)
        for k in range(n):
            H[..., k, k] += diag[..., k]
        for i, j in self._pair_indices():
            pair = np.stack([x[..., i], x[..., j]], axis=-1)
            Hp = np.asarray(self.d2u2(pair), dtype=float)
            H[..., i, i] += Hp[..., 0, 0]
            H[..., j, j] += Hp[..., 1, 1]
            H[..., i, j] += Hp[..., 0, 1]
            H[..., j, i] += Hp[..., 1, 0]
        return linalg.symmetrize_stack(H)

    def drift(self, x) -> np.ndarray:
        return -self.beta * self.potential_gradient(x)

    def drift_jacobian(self, x) -> np.ndarray:
        return -self.beta * self.potential_hessian(x)

    def regularity_constants(self) -> RegularityConstants:
        n = self.n_particles
        curv = self.u1 + (n - 1) * self.u2
        if curv <= 0.0:
            raise ModelNotContractive("u1 + (n-1) * u2 must be positive")
        lip = self.kappa1 + self.kappa2 * (n - 1) * np.sqrt(2.0 * (n - 1))
        decay = 0.5 * self.beta * curv
        return RegularityConstants(
            jac_decay=decay, jac_lip=self.beta * lip, drift_decay=0.5 * decay
        )


@dataclass(frozen=True)
class TransformedModel:
    """A base model conjugated by an invertible linear map y = T x.

    drift'(y) = T drift(T^{-1} y); used by the canonical change of basis that
    normalizes the sensor.  Regularity constants transport only when T is a
    positive multiple of an orthogonal matrix.
    """

    base: object
    T: np.ndarray
    T_inv: np.ndarray
    R1: np.ndarray

    @property
    def dim(self) -> int:
        return self.T.shape[0]

    def drift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.drift(x @ self.T_inv.T) @ self.T.T

    def drift_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.base.drift_jacobian(x @ self.T_inv.T)
        return np.einsum("ij,...jk,kl->...il", self.T, J, self.T_inv)

    def regularity_constants(self) -> RegularityConstants:
        TTt = self.T @ self.T.T
        d = self.dim
        scale2 = np.trace(TTt) / d
        if scale2 <= 0.0 or np.abs(TTt - scale2 * np.eye(d)).max() > 1e-10 * max(1.0, scale2):
            raise NotReducible(
                "regularity constants transport only for conformal basis changes"
            )
        base_c = self.base.regularity_constants()
        c = float(np.sqrt(scale2))
        return RegularityConstants(
            jac_decay=base_c.jac_decay,
            jac_lip=base_c.jac_lip / c,
            drift_decay=base_c.drift_decay,
        )


SignalModel = (LinearModel, QuadraticCubicModel, InteractingModel, TransformedModel)


# Module-level op surface; thin delegates so call sites can stay functional.


def drift(model, x) -> np.ndarray:
    return model.drift(x)


def drift_jacobian(model, x) -> np.ndarray:
    return model.drift_jacobian(x)


def regularity_constants(model) -> RegularityConstants:
    return model.regularity_constants()


@dataclass(frozen=True)
class ObservationModel:
    """Linear sensor dY = B X dt + sqrt(R2) dV with derived filter matrices."""

    B: np.ndarray
    R2: np.ndarray
    S: np.ndarray = field(init=False)
    sensor_gain: float = field(init=False)
    isotropic: bool = field(init=False)
    R2_sqrt: np.ndarray = field(init=False)
    R2_inv: np.ndarray = field(init=False)
    gain_map: np.ndarray = field(init=False)

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2:
            raise InvalidMatrix("B must be a matrix")
        if not np.all(np.isfinite(B)):
            raise InvalidMatrix("B has non-finite entries")
        R2 = linalg.as_symmetric(self.R2, B.shape[0])
        if linalg.min_eigenvalue(R2) <= 0.0:
            raise NotPD("observation noise covariance must be positive definite")
        w, V = np.linalg.eigh(R2)
        R2_inv = (V / w) @ V.T
        R2_sqrt = (V * np.sqrt(w)) @ V.T
        S = B.T @ R2_inv @ B
        S = 0.5 * (S + S.T)
        gain = float(np.linalg.eigvalsh(S)[-1])
        iso = bool(
            np.linalg.norm(S - gain * np.eye(S.shape[0])) <= 1e-10 * max(1.0, gain)
        )
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "R2", R2)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "sensor_gain", gain)
        object.__setattr__(self, "isotropic", iso)
        object.__setattr__(self, "R2_sqrt", 0.5 * (R2_sqrt + R2_sqrt.T))
        object.__setattr__(self, "R2_inv", 0.5 * (R2_inv + R2_inv.T))
        object.__setattr__(self, "gain_map", B.T @ R2_inv)

    @property
    def obs_dim(self) -> int:
        return self.B.shape[0]

    @property
    def state_dim(self) -> int:
        return self.B.shape[1]


def observation_params(B, R2) -> ObservationModel:
    """Build an ObservationModel, deriving S = B^T R2^{-1} B and its gain."""
    return ObservationModel(B=B, R2=R2)


def canonical_change_of_basis(model, obs: ObservationModel):
    """Rescale coordinates so the sensor becomes dY = X dt + dV.

    Requires B square and invertible.  Returns (model', obs') where obs' has
    B = R2 = I (so its gain matrix is the identity and sensor_gain == 1) and
    model' is the drift conjugated by T = R2^{-1/2} B with noise T R1 T^T.
    """
    B = obs.B
    if B.shape[0] != B.shape[1]:
        raise NotReducible("change of basis needs a square sensor matrix")
    d = B.shape[0]
    if np.linalg.matrix_rank(B) < d:
        raise NotReducible("sensor matrix is singular")
    T = linalg.sym_sqrt_inv(obs.R2) @ B
    T_inv = np.linalg.inv(T)
    R1_new = T @ model.R1 @ T.T
    R1_new = 0.5 * (R1_new + R1_new.T)
    if isinstance(model, LinearModel):
        new_model = LinearModel(A=T @ model.A @ T_inv, R1=R1_new)
    else:
        new_model = TransformedModel(base=model, T=T, T_inv=T_inv, R1=R1_new)
    new_obs = observation_params(np.eye(d), np.eye(d))
    return new_model, new_obs


def lipschitz_empirical_check(
    model, n_pairs: int = 10_000, radius: float = 10.0, seed: int = 0, rtol: float = 1e-6
) -> dict:
    """Sample Jacobian difference quotients and compare with the analytic rate.

    Draws pairs uniformly in the centered ball of the given radius, computes
    |J(x) - J(y)|_2 / |x - y| for each, and checks the max against
    jac_lip * (1 + rtol).  Returns a small report dict.
    """
    if n_pairs < 1:
        raise InvalidArgument("n_pairs must be positive")
    consts = model.regularity_constants()
    d = model.dim
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(77,)))

    def ball(n):
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.random(n) ** (1.0 / d)
        return g * r[:, None]

    x = ball(n_pairs)
    y = ball(n_pairs)
    gap = np.linalg.norm(x - y, axis=1)
    keep = gap > 1e-9
    diff = model.drift_jacobian(x[keep]) - model.drift_jacobian(y[keep])
    # gradient-flow Jacobians are symmetric; for the general case fall back to
    # the exact 2-norm via singular values
    skew = np.abs(diff - np.swapaxes(diff, -1, -2)).max(initial=0.0)
    if skew < 1e-12:
        ratios = linalg.opnorm_sym_stack(diff) / gap[keep]
    else:
        ratios = np.linalg.norm(diff, ord=2, axis=(-2, -1)) / gap[keep]
    max_ratio = float(ratios.max(initial=0.0))
    return {
        "max_ratio": max_ratio,
        "bound": consts.jac_lip,
        "n_pairs": int(keep.sum()),
        "passed": bool(max_ratio <= consts.jac_lip * (1.0 + rtol) + 1e-15),
    }
