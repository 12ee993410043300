"""Gradient-field network and explicit-energy constructions.

The network is a plain MLP mapping points in R^d to predicted gradients in
R^d. Conditioning options:

  - class label: learned per-class embedding row added to the first hidden
    pre-activation (one-hot times an embedding table, so the lookup stays
    differentiable on the tape);
  - noise level (baseline models only): a fixed 16-dim sinusoidal feature of
    the level concatenated to the input.

An explicit-energy model reuses the same network and derives a scalar per
point, either `dot` g(x) = x . f(x) or `l2norm` g(x) = -0.5 ||f(x)||^2; its
gradient field is the input-gradient of that scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndtensor as nd

ACTIVATIONS = ("silu", "relu", "tanh")
ENERGY_KINDS = ("none", "dot", "l2norm")

NOISE_FEATURES = 16


class ConditioningError(ValueError):
    """Label / noise-level arguments inconsistent with the model config."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 2
    hidden: tuple[int, ...] = (256, 256, 256)
    activation: str = "silu"
    num_classes: int = 0
    noise_conditioned: bool = False
    energy_kind: str = "none"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError(f"input_dim={self.input_dim} must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths {self.hidden} must be non-empty positives")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")
        if self.energy_kind not in ENERGY_KINDS:
            raise ValueError(f"unknown energy kind '{self.energy_kind}'")
        if self.num_classes < 0:
            raise ValueError("num_classes must be >= 0")
        if self.noise_conditioned and self.energy_kind != "none":
            raise ValueError("noise conditioning and an explicit energy head "
                             "are mutually exclusive")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "num_classes": self.num_classes,
            "noise_conditioned": self.noise_conditioned,
            "energy_kind": self.energy_kind,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(input_dim=int(d.get("input_dim", 2)),
                   hidden=tuple(d.get("hidden", (256, 256, 256))),
                   activation=d.get("activation", "silu"),
                   num_classes=int(d.get("num_classes", 0)),
                   noise_conditioned=bool(d.get("noise_conditioned", False)),
                   energy_kind=d.get("energy_kind", "none"),
                   init_seed=int(d.get("init_seed", 0)))


def _layer_dims(config: ModelConfig) -> list[tuple[int, int]]:
    d_in = config.input_dim + (NOISE_FEATURES if config.noise_conditioned else 0)
    dims = [d_in, *config.hidden, config.input_dim]
    return list(zip(dims[:-1], dims[1:]))


def noise_features(level, n: int) -> np.ndarray:
    """Fixed sinusoidal embedding of a noise level in [0, 1], shape [n, 16]."""
    level = np.asarray(level, dtype=np.float64)
    if level.ndim == 0:
        level = np.full(n, float(level))
    if level.shape != (n,):
        raise ConditioningError(f"noise level shape {level.shape} does not match batch {n}")
    freqs = np.pi * (2.0 ** np.arange(NOISE_FEATURES // 2))
    angles = level[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class GradientFieldModel:
    """Named float64 parameter buffers plus the config that shaped them."""

    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward ------------------------------------------------------------

    def _bind(self, graph: nd.Graph) -> dict[str, nd.Tensor]:
        """Lease parameter leaves on a tape, memoized per graph."""
        key = ("model", id(self))
        if key not in graph.bindings:
            graph.bindings[key] = {name: graph.leaf(buf)
                                   for name, buf in self.params.items()}
        return graph.bindings[key]

    def _check_conditioning(self, label, noise_level) -> None:
        if self.config.num_classes == 0 and label is not None:
            raise ConditioningError("model is unconditional; no label accepted")
        if self.config.num_classes > 0 and label is None:
            raise ConditioningError("conditional model requires a label")
        if not self.config.noise_conditioned and noise_level is not None:
            raise ConditioningError("model is not noise-conditioned")
        if self.config.noise_conditioned and noise_level is None:
            raise ConditioningError("noise-conditioned model requires a noise level")

    def _one_hot(self, label, n: int) -> np.ndarray:
        ids = np.asarray(label)
        if ids.ndim == 0:
            ids = np.full(n, int(ids))
        ids = ids.astype(np.int64)
        if ids.shape != (n,):
            raise ConditioningError(f"label shape {ids.shape} does not match batch {n}")
        if np.any(ids < 0) or np.any(ids >= self.config.num_classes):
            raise ConditioningError(f"label out of range [0, {self.config.num_classes})")
        hot = np.zeros((n, self.config.num_classes))
        hot[np.arange(n), ids] = 1.0
        return hot

    def forward(self, graph: nd.Graph, x, label=None, noise_level=None) -> nd.Tensor:
        """Predicted gradient batch [n, d]; differentiable in x and params."""
        self._check_conditioning(label, noise_level)
        xt = x if isinstance(x, nd.Tensor) else nd.constant(x)
        if xt.ndim != 2 or xt.shape[1] != self.config.input_dim:
            raise nd.ShapeMismatchError(
                f"forward: expected [n, {self.config.input_dim}] input, got {xt.shape}")
        n = xt.shape[0]
        h = xt
        if self.config.noise_conditioned:
            h = nd.concat([h, nd.constant(noise_features(noise_level, n))], axis=1)
        p = self._bind(graph)
        act = {"silu": nd.silu, "relu": nd.relu, "tanh": nd.tanh}[self.config.activation]
        n_layers = len(self.config.hidden) + 1
        for i in range(n_layers):
            pre = nd.matmul(h, p[f"layers.{i}.w"])
            pre = nd.add(pre, nd.broadcast_to(p[f"layers.{i}.b"], pre.shape))
            if i == 0 and self.config.num_classes > 0:
                hot = nd.constant(self._one_hot(label, n))
                pre = nd.add(pre, nd.matmul(hot, p["label_embed"]))
            h = act(pre) if i < n_layers - 1 else pre
        return h

    def forward_values(self, x, label=None, noise_level=None) -> np.ndarray:
        """Forward pass returning plain values (throwaway tape)."""
        return self.forward(nd.Graph(), x, label=label, noise_level=noise_level).values


def init_model(config: ModelConfig) -> GradientFieldModel:
    """Deterministic init: Glorot-uniform hidden layers, zero final layer and
    biases, small-normal label embedding. Equal seeds give equal bits."""
    rng = np.random.default_rng(config.init_seed)
    params: dict[str, np.ndarray] = {}
    dims = _layer_dims(config)
    last = len(dims) - 1
    for i, (fan_in, fan_out) in enumerate(dims):
        if i == last:
            w = np.zeros((fan_in, fan_out))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, (fan_in, fan_out))
        params[f"layers.{i}.w"] = w
        params[f"layers.{i}.b"] = np.zeros(fan_out)
    if config.num_classes > 0:
        params["label_embed"] = 0.02 * rng.standard_normal(
            (config.num_classes, config.hidden[0]))
    return GradientFieldModel(config=config, params=params)


# ---------------------------------------------------------------------------
# explicit energy


def _total_energy(model: GradientFieldModel, graph: nd.Graph, xt: nd.Tensor,
                  label=None) -> nd.Tensor:
    """Batch-summed explicit energy as a live scalar node."""
    f = model.forward(graph, xt, label=label)
    if model.config.energy_kind == "dot":
        return nd.tsum(nd.mul(xt, f))
    if model.config.energy_kind == "l2norm":
        return nd.scalar_mul(nd.tsum(nd.square(f)), -0.5)
    raise ValueError("model has no explicit energy head (energy_kind='none')")


def energy(model: GradientFieldModel, x, label=None) -> np.ndarray:
    """Per-point scalar energy [n] under the configured construction."""
    if model.config.energy_kind == "none":
        raise ValueError("model has no explicit energy head (energy_kind='none')")
    x = np.asarray(x, dtype=np.float64)
    f = model.forward_values(x, label=label)
    if model.config.energy_kind == "dot":
        return np.sum(x * f, axis=1)
    return -0.5 * np.sum(f * f, axis=1)


def energy_gradient(model: GradientFieldModel, x, label=None) -> np.ndarray:
    """Input-gradient of the energy, [n, d] (rows are independent points)."""
    graph = nd.Graph()
    xt = graph.leaf(np.asarray(x, dtype=np.float64))
    total = _total_energy(model, graph, xt, label=label)
    return nd.input_gradient(total, xt).values
