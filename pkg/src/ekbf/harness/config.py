"""JSON experiment configuration: parsing, validation, model construction.

A config file has four required sections (model, obs, sim, init), an
optional test section with estimator knobs, and an optional gronwall
section for the synthetic test process.  Anything malformed raises
ConfigError with the dotted path of the offending key; the CLI maps that
to exit code 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import check_step_size
from ..errors import ConfigError, EkbfError
from ..models import LinearModel, ObservationModel, QuadraticCubicModel

SCENARIOS = (
    "signal-vs-flow",
    "ekf-vs-signal",
    "coupled-forgetting",
    "trace-bound",
    "gronwall-test",
    "chi2-laplace",
)

_DEFAULT_DELTAS = (0.5, 1.0, 2.0, 4.0)
_DEFAULT_ORDERS = (1, 2)
_DEFAULT_CHECKPOINTS = (1.0, 5.0, 10.0)


def _get(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"missing key {path}.{key}")
    return section[key]


def _section(raw: dict, name: str) -> dict:
    value = _get(raw, name, "config")
    if not isinstance(value, dict):
        raise ConfigError(f"config.{name} must be an object")
    return value


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer")
    return value


def _vec(value, path: str) -> np.ndarray:
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} must be a numeric vector") from exc
    if arr.ndim != 1:
        raise ConfigError(f"{path} must be a flat vector")
    return arr


def _mat(value, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} must be a numeric matrix") from exc
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{path} must be a matrix")
    return arr


@dataclass
class ExperimentConfig:
    """Validated experiment: built model objects plus run and test settings."""

    model: object
    obs: ObservationModel
    x0: np.ndarray
    filters: list
    dt: float
    T: float
    n_trials: int
    seed: int
    record_every: int
    delta_grid: list
    n_orders: list
    alpha: float
    scenario: str
    checkpoints: list
    eps: float
    gronwall: dict | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def checkpoint_steps(self) -> list:
        steps = self.steps
        out = []
        for t in self.checkpoints:
            k = int(round(t / self.dt))
            if not (0 <= k <= steps):
                raise ConfigError(f"checkpoint {t} outside the horizon [0, {self.T}]")
            out.append(k)
        return out

    def record_steps(self) -> list:
        steps = self.steps
        out = list(range(0, steps + 1, self.record_every))
        if out[-1] != steps:
            out.append(steps)
        return out


def _build_model(section: dict):
    variant = _get(section, "variant", "model")
    R1 = _mat(_get(section, "R1", "model"), "model.R1")
    try:
        if variant == "linear":
            return LinearModel(_mat(_get(section, "A", "model"), "model.A"), R1)
        if variant == "quadratic_cubic":
            Q1 = _mat(_get(section, "Q1", "model"), "model.Q1")
            q = _vec(section.get("q", np.zeros(Q1.shape[0])), "model.q")
            Q2 = _mat(_get(section, "Q2", "model"), "model.Q2")
            beta = _num(section.get("beta", 1.0), "model.beta")
            return QuadraticCubicModel(Q1, q, Q2, beta, R1)
    except EkbfError as exc:
        raise ConfigError(f"model section rejected: {exc}") from exc
    raise ConfigError(f"model.variant must be 'linear' or 'quadratic_cubic', got {variant!r}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    model = _build_model(_section(raw, "model"))

    obs_sec = _section(raw, "obs")
    try:
        obs = ObservationModel(
            _mat(_get(obs_sec, "B", "obs"), "obs.B"),
            _mat(_get(obs_sec, "R2", "obs"), "obs.R2"),
        )
    except EkbfError as exc:
        raise ConfigError(f"obs section rejected: {exc}") from exc
    if obs.state_dim != model.dim:
        raise ConfigError("obs.B column count must match the model dimension")

    sim = _section(raw, "sim")
    dt = _num(_get(sim, "dt", "sim"), "sim.dt")
    T = _num(_get(sim, "T", "sim"), "sim.T")
    n_trials = _int(_get(sim, "n_trials", "sim"), "sim.n_trials")
    seed = _int(_get(sim, "seed", "sim"), "sim.seed")
    record_every = _int(sim.get("record_every", 1), "sim.record_every")
    if dt <= 0 or T <= 0 or T < dt:
        raise ConfigError("sim.dt and sim.T must be positive with T >= dt")
    if n_trials < 1:
        raise ConfigError("sim.n_trials must be >= 1")
    if record_every < 1:
        raise ConfigError("sim.record_every must be >= 1")
    try:
        check_step_size(model, dt)
    except EkbfError as exc:
        raise ConfigError(f"sim.dt rejected: {exc}") from exc

    init = _section(raw, "init")
    x0 = _vec(_get(init, "x0", "init"), "init.x0")
    if x0.size != model.dim:
        raise ConfigError("init.x0 length must match the model dimension")
    if "filters" in init:
        entries = init["filters"]
        if not isinstance(entries, list) or len(entries) == 0:
            raise ConfigError("init.filters must be a non-empty list of [mean, cov] pairs")
        filters = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise ConfigError(f"init.filters[{i}] must be a [mean, cov] pair")
            filters.append(
                (_vec(entry[0], f"init.filters[{i}].mean"), _mat(entry[1], f"init.filters[{i}].cov"))
            )
    else:
        filters = [
            (_vec(_get(init, "xhat0", "init"), "init.xhat0"), _mat(_get(init, "P0", "init"), "init.P0"))
        ]
    for mean, cov in filters:
        if mean.size != model.dim or cov.shape != (model.dim, model.dim):
            raise ConfigError("filter initializations must match the model dimension")

    test = raw.get("test", {})
    if not isinstance(test, dict):
        raise ConfigError("config.test must be an object")
    delta_grid = [_num(x, "test.delta_grid") for x in test.get("delta_grid", _DEFAULT_DELTAS)]
    if any(d < 0 for d in delta_grid):
        raise ConfigError("test.delta_grid entries must be non-negative")
    n_orders = [_int(x, "test.n_orders") for x in test.get("n_orders", _DEFAULT_ORDERS)]
    if any(n < 1 for n in n_orders):
        raise ConfigError("test.n_orders entries must be >= 1")
    alpha = _num(test.get("alpha", 1.1), "test.alpha")
    if alpha <= 1.0:
        raise ConfigError("test.alpha must exceed 1")
    scenario = test.get("scenario", "ekf-vs-signal")
    if scenario not in SCENARIOS:
        raise ConfigError(f"test.scenario must be one of {', '.join(SCENARIOS)}")
    checkpoints = [_num(x, "test.checkpoints") for x in test.get("checkpoints", _DEFAULT_CHECKPOINTS)]
    checkpoints = [t for t in checkpoints if t <= T] or [T]
    eps = _num(test.get("eps", 0.5), "test.eps")
    if not (0.0 < eps < 1.0):
        raise ConfigError("test.eps must lie in (0, 1)")

    gronwall = raw.get("gronwall")
    if gronwall is not None:
        if not isinstance(gronwall, dict):
            raise ConfigError("config.gronwall must be an object")
        gronwall = {
            "a": _num(gronwall.get("a", 1.0), "gronwall.a"),
            "w": _num(gronwall.get("w", 0.5), "gronwall.w"),
            "u": _num(gronwall.get("u", 0.0), "gronwall.u"),
            "v": _num(gronwall.get("v", 0.0), "gronwall.v"),
            "y0": _num(gronwall.get("y0", 1.0), "gronwall.y0"),
            "n_paths": _int(gronwall.get("n_paths", 10000), "gronwall.n_paths"),
        }
        if gronwall["a"] <= 0:
            raise ConfigError("gronwall.a must be positive")

    cfg = ExperimentConfig(
        model=model,
        obs=obs,
        x0=x0,
        filters=filters,
        dt=dt,
        T=T,
        n_trials=n_trials,
        seed=seed,
        record_every=record_every,
        delta_grid=delta_grid,
        n_orders=n_orders,
        alpha=alpha,
        scenario=scenario,
        checkpoints=checkpoints,
        eps=eps,
        gronwall=gronwall,
        raw=raw,
    )
    cfg.checkpoint_steps()  # validate against the grid now, not at run time
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
