"""Optimization-based sampling on a learned gradient field.

Sampling is plain descent on the field: fixed-budget gradient descent, the
Nesterov look-ahead variant, an explicit-Euler integrator (identical to
descent when the step sizes match), and an adaptive mode that stops each
sample independently once its gradient norm falls under a threshold.

Samplers act on a *field*: any callable (x [n,d], progress in [0,1]) -> grad
[n,d]. Models wrap into fields via :class:`ModelField`; summed fields via
:func:`compose`. Time-invariant fields ignore `progress`; it exists so the
noise-conditioned baseline can be driven along a fixed integration grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import GradientFieldModel, energy_gradient
from .ndtensor import NonFiniteError

METHODS = ("gd", "nag", "euler-ode", "adaptive")


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "gd"
    eta: float = 0.01
    mu: float = 0.0
    steps: int = 250
    g_min: float | None = None
    max_steps: int = 1000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown sampler method '{self.method}'")
        if self.eta < 0.0:
            raise ValueError(f"step size eta={self.eta} must be >= 0")
        if self.mu < 0.0:
            raise ValueError(f"look-ahead factor mu={self.mu} must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.method == "adaptive" and not (self.g_min and self.g_min > 0.0):
            raise ValueError("adaptive sampling needs g_min > 0")
        if self.method != "adaptive" and self.g_min is not None:
            raise ValueError("g_min only applies to the adaptive method")

    def to_dict(self) -> dict:
        return {"method": self.method, "eta": self.eta, "mu": self.mu,
                "steps": self.steps, "g_min": self.g_min, "max_steps": self.max_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(method=d.get("method", "gd"), eta=float(d.get("eta", 0.01)),
                   mu=float(d.get("mu", 0.0)), steps=int(d.get("steps", 250)),
                   g_min=(None if d.get("g_min") is None else float(d["g_min"])),
                   max_steps=int(d.get("max_steps", 1000)))


@dataclass
class Trajectory:
    final: np.ndarray
    steps_used: np.ndarray
    cap_reached: np.ndarray
    states: list[np.ndarray] | None = None
    grad_norms: list[np.ndarray] | None = None

    @property
    def path_lengths(self) -> np.ndarray:
        if self.states is None:
            raise ValueError("trajectory was not recorded (pass record=True)")
        hops = [np.linalg.norm(b - a, axis=1)
                for a, b in zip(self.states, self.states[1:])]
        return np.sum(hops, axis=0) if hops else np.zeros(len(self.final))


# ---------------------------------------------------------------------------
# fields


def grad_of(model: GradientFieldModel, x, label=None) -> np.ndarray:
    """The model's descent direction at x: the raw field for implicit-energy
    models, the energy's input-gradient for explicit ones."""
    if model.config.energy_kind == "none":
        return model.forward_values(np.asarray(x, dtype=np.float64), label=label)
    return energy_gradient(model, x, label=label)


class ModelField:
    """Adapts a model (optionally with a fixed label) to the field protocol.

    `negate` flips the output so velocity-matching baselines, which predict
    the data-ward velocity rather than an ascent gradient, can be driven by
    the same descent loop.
    """

    def __init__(self, model: GradientFieldModel, label=None, negate: bool = False):
        self.model = model
        self.label = label
        self.negate = negate
        self.dim = model.config.input_dim
        self.time_dependent = model.config.noise_conditioned

    def __call__(self, x: np.ndarray, progress: float = 0.0) -> np.ndarray:
        if self.time_dependent:
            g = self.model.forward_values(x, label=self.label, noise_level=progress)
        else:
            g = grad_of(self.model, x, label=self.label)
        return -g if self.negate else g


class ComposedField:
    """Weighted sum of member fields; adding gradients adds the underlying
    energy landscapes."""

    def __init__(self, fields: Sequence, weights: Sequence[float] | None = None):
        if not fields:
            raise ValueError("compose needs at least one field")
        self.fields = [as_field(f) for f in fields]
        self.weights = [1.0] * len(self.fields) if weights is None else [float(w) for w in weights]
        if len(self.weights) != len(self.fields):
            raise ValueError("one weight per field required")
        dims = {f.dim for f in self.fields if getattr(f, "dim", None) is not None}
        if len(dims) > 1:
            raise ValueError(f"composed fields disagree on input dim: {sorted(dims)}")
        self.dim = dims.pop() if dims else None
        self.time_dependent = any(getattr(f, "time_dependent", False) for f in self.fields)

    def __call__(self, x: np.ndarray, progress: float = 0.0) -> np.ndarray:
        total = None
        for w, f in zip(self.weights, self.fields):
            if w == 0.0:
                continue
            g = f(x, progress)
            g = g if w == 1.0 else w * g
            total = g if total is None else total + g
        return np.zeros_like(x) if total is None else total


class FunctionField:
    """Wraps a plain (x) -> grad function, e.g. analytic test energies."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int | None = None):
        self.fn = fn
        self.dim = dim
        self.time_dependent = False

    def __call__(self, x: np.ndarray, progress: float = 0.0) -> np.ndarray:
        return self.fn(x)


def as_field(obj, label=None, negate: bool = False):
    if isinstance(obj, (ModelField, ComposedField, FunctionField)):
        return obj
    if isinstance(obj, GradientFieldModel):
        return ModelField(obj, label=label, negate=negate)
    if callable(obj):
        return FunctionField(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a gradient field")


def compose(models: Sequence, weights: Sequence[float] | None = None,
            labels: Sequence | None = None) -> ComposedField:
    """Virtual field whose gradient is the weighted sum of member gradients."""
    if labels is not None:
        fields = [as_field(m, label=l) for m, l in zip(models, labels)]
    else:
        fields = [as_field(m) for m in models]
    return ComposedField(fields, weights)


# ---------------------------------------------------------------------------
# samplers


def _prepare(field, x0) -> tuple:
    field = as_field(field)
    x = np.array(x0, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"x0 must be a batch [n, d], got shape {x.shape}")
    if getattr(field, "dim", None) is not None and x.shape[1] != field.dim:
        raise ValueError(f"x0 dimension {x.shape[1]} does not match field dim {field.dim}")
    return field, x


def _eval_field(field, x, progress, step):
    try:
        g = field(x, progress)
    except NonFiniteError as e:
        raise NonFiniteError(f"gradient evaluation failed at step {step}: {e}") from e
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite gradient at step {step}")
    return g


def _check_state(x, step):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite sampler state at step {step}")


def sample_gd(field, x0, config: SamplerConfig, record: bool = False) -> Trajectory:
    """x <- x - eta * grad(x), a fixed budget of steps."""
    field, x = _prepare(field, x0)
    n = len(x)
    states = [x.copy()] if record else None
    norms = [] if record else None
    for k in range(config.steps):
        g = _eval_field(field, x, k / config.steps, k)
        x = x - config.eta * g
        _check_state(x, k)
        if record:
            states.append(x.copy())
            norms.append(np.linalg.norm(g, axis=1))
    return Trajectory(final=x, steps_used=np.full(n, config.steps),
                      cap_reached=np.zeros(n, dtype=bool), states=states,
                      grad_norms=norms)


def sample_nag(field, x0, config: SamplerConfig, record: bool = False) -> Trajectory:
    """Look-ahead descent: the gradient is taken at x + mu * (x - x_prev),
    with x_prev initialized to x0 so the first step is a plain descent step.
    mu=0 reproduces `sample_gd` bit for bit."""
    field, x = _prepare(field, x0)
    n = len(x)
    x_prev = x.copy()
    states = [x.copy()] if record else None
    norms = [] if record else None
    for k in range(config.steps):
        look = x if config.mu == 0.0 else x + config.mu * (x - x_prev)
        g = _eval_field(field, look, k / config.steps, k)
        x_prev = x
        x = x - config.eta * g
        _check_state(x, k)
        if record:
            states.append(x.copy())
            norms.append(np.linalg.norm(g, axis=1))
    return Trajectory(final=x, steps_used=np.full(n, config.steps),
                      cap_reached=np.zeros(n, dtype=bool), states=states,
                      grad_norms=norms)


def sample_euler_ode(field, x0, config: SamplerConfig, record: bool = False) -> Trajectory:
    """Forward-Euler integration of the descent velocity v = -grad with step
    h = eta; identical trajectories to `sample_gd` at the same step size."""
    field, x = _prepare(field, x0)
    n = len(x)
    states = [x.copy()] if record else None
    norms = [] if record else None
    for k in range(config.steps):
        v = -_eval_field(field, x, k / config.steps, k)
        x = x + config.eta * v
        _check_state(x, k)
        if record:
            states.append(x.copy())
            norms.append(np.linalg.norm(v, axis=1))
    return Trajectory(final=x, steps_used=np.full(n, config.steps),
                      cap_reached=np.zeros(n, dtype=bool), states=states,
                      grad_norms=norms)


def sample_adaptive(field, x0, config: SamplerConfig, record: bool = False) -> Trajectory:
    """Descend each sample until its gradient norm is no longer above g_min
    or the hard cap hits. Stopped samples are frozen by masking, so a batch
    stays deterministic while samples stop independently."""
    field, x = _prepare(field, x0)
    if getattr(field, "time_dependent", False):
        raise ValueError("adaptive sampling needs a time-invariant field; "
                         "noise-conditioned baselines have no stopping rule")
    n = len(x)
    x_prev = x.copy()
    steps_used = np.zeros(n, dtype=np.int64)
    g = _eval_field(field, x, 0.0, 0)
    active = np.linalg.norm(g, axis=1) > config.g_min
    states = [x.copy()] if record else None
    norms = [np.linalg.norm(g, axis=1)] if record else None
    k = 0
    while active.any() and k < config.max_steps:
        x_prev[active] = x[active]
        x = x.copy()
        x[active] -= config.eta * g[active]
        _check_state(x, k)
        steps_used[active] += 1
        look = x if config.mu == 0.0 else x + config.mu * (x - x_prev)
        g = _eval_field(field, look, 0.0, k + 1)
        active &= np.linalg.norm(g, axis=1) > config.g_min
        k += 1
        if record:
            states.append(x.copy())
            norms.append(np.linalg.norm(g, axis=1))
    return Trajectory(final=x, steps_used=steps_used, cap_reached=active.copy(),
                      states=states, grad_norms=norms)


def sample(field, x0, config: SamplerConfig, record: bool = False) -> Trajectory:
    """Dispatch on config.method."""
    fn = {"gd": sample_gd, "nag": sample_nag, "euler-ode": sample_euler_ode,
          "adaptive": sample_adaptive}[config.method]
    return fn(field, x0, config, record=record)


def denoise_from(field, x_partial, config: SamplerConfig, record: bool = False) -> Trajectory:
    """Standard sampling initialized at a partially corrupted batch instead of
    pure noise; the field never learns how noisy its input is, so nothing
    else changes."""
    return sample(field, x_partial, config, record=record)


def calibrate_g_min(model_or_field, data: np.ndarray, percentile: float = 5.0,
                    label=None) -> float:
    """Adaptive-stop threshold: a low percentile of the gradient norm over
    training data on the trained model (image-scale thresholds do not carry
    over to 2D units)."""
    field = as_field(model_or_field, label=label)
    norms = np.linalg.norm(field(np.asarray(data, dtype=np.float64), 0.0), axis=1)
    return float(np.percentile(norms, percentile))


def save_trajectory_csv(path, traj: Trajectory) -> None:
    """CSV rows (step, sample-id, coordinates..., grad-norm); needs a recorded
    trajectory."""
    if traj.states is None:
        raise ValueError("trajectory was not recorded (pass record=True)")
    from .data import FLOAT_FMT
    import csv
    d = traj.final.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "sample_id", *[f"x{i}" for i in range(d)], "grad_norm"])
        for step, state in enumerate(traj.states):
            for sid in range(len(state)):
                norm = (FLOAT_FMT % traj.grad_norms[step][sid]
                        if traj.grad_norms and step < len(traj.grad_norms) else "")
                w.writerow([step, sid, *[FLOAT_FMT % v for v in state[sid]], norm])
