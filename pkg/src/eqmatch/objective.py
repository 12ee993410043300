"""Corruption process, matching targets, and the training losses.

All four objectives are mean-squared errors between a model output and a
target built from the same (x, eps, gamma) triple:

  eqm        f(x_gamma)        vs (eps - x) * c(gamma)
  eqm-e      grad g(x_gamma)   vs (eps - x) * c(gamma)   (input-gradient)
  fm         f(x_gamma, gamma) vs (x - eps)
  uncond-fm  f(x_gamma)        vs (x - eps)

The interpolation factor gamma is drawn per sample and never shown to the
model (except for the noise-conditioned fm baseline, where it doubles as the
noise level input). Reduction is the mean over batch and coordinates so step
sizes stay comparable across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndtensor as nd
from .model import GradientFieldModel, _total_energy
from .schedule import Schedule, eval_schedule, is_equilibrium

OBJECTIVES = ("eqm", "eqm-e", "fm", "uncond-fm")


class ObjectiveError(ValueError):
    """Objective / model / schedule combination violates a precondition."""


@dataclass
class TrainBatch:
    """One training step's raw material. eps is standard normal, gamma is
    uniform on [0, 1], both drawn per sample from the run generator."""

    x: np.ndarray
    eps: np.ndarray
    gamma: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.eps = np.asarray(self.eps, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.x.shape != self.eps.shape:
            raise ObjectiveError(f"x {self.x.shape} and eps {self.eps.shape} disagree")
        if self.gamma.shape != (self.x.shape[0],):
            raise ObjectiveError(f"gamma shape {self.gamma.shape} is not per-sample")
        if np.any(self.gamma < 0.0) or np.any(self.gamma > 1.0):
            raise ObjectiveError("gamma outside [0, 1]")


def draw_batch(rng: np.random.Generator, x: np.ndarray,
               labels: np.ndarray | None = None) -> TrainBatch:
    """Attach fresh noise and per-sample interpolation factors to data."""
    x = np.asarray(x, dtype=np.float64)
    eps = rng.standard_normal(x.shape)
    gamma = rng.uniform(0.0, 1.0, x.shape[0])
    return TrainBatch(x=x, eps=eps, gamma=gamma, labels=labels)


def corrupt(x, eps, gamma) -> np.ndarray:
    """Interpolate gamma*x + (1-gamma)*eps, per sample."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if x.shape != eps.shape:
        raise ObjectiveError(f"corrupt: x {x.shape} and eps {eps.shape} disagree")
    g = gamma if gamma.ndim == 0 else gamma[:, None]
    return g * x + (1.0 - g) * eps


def gradient_target(x, eps, gamma, sched: Schedule) -> np.ndarray:
    """(eps - x) scaled by the schedule: the direction that descends from
    noise toward data, vanishing at gamma=1 for equilibrium schedules."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ObjectiveError(f"target: x {x.shape} and eps {eps.shape} disagree")
    c = np.asarray(eval_schedule(sched, gamma), dtype=np.float64)
    c = c if c.ndim == 0 else c[:, None]
    return (eps - x) * c


def _require_equilibrium(sched: Schedule, allow_non_equilibrium: bool) -> None:
    if not is_equilibrium(sched) and not allow_non_equilibrium:
        raise ObjectiveError(
            "schedule does not vanish at gamma=1; pass allow_non_equilibrium=True "
            "to train a non-equilibrium control")


def _labels_for(model: GradientFieldModel, batch: TrainBatch):
    if model.config.num_classes > 0:
        if batch.labels is None:
            raise ObjectiveError("conditional model needs batch labels")
        return batch.labels
    return None


def eqm_loss(model: GradientFieldModel, batch: TrainBatch, sched: Schedule,
             allow_non_equilibrium: bool = False) -> nd.Tensor:
    """Mean squared error between the predicted field and the scaled
    noise-to-data direction."""
    if model.config.energy_kind != "none":
        raise ObjectiveError("eqm_loss trains implicit-energy models only")
    _require_equilibrium(sched, allow_non_equilibrium)
    xg = corrupt(batch.x, batch.eps, batch.gamma)
    target = gradient_target(batch.x, batch.eps, batch.gamma, sched)
    graph = nd.Graph()
    level = batch.gamma if model.config.noise_conditioned else None
    out = model.forward(graph, xg, label=_labels_for(model, batch), noise_level=level)
    return nd.tmean(nd.square(nd.sub(out, nd.constant(target))))


def eqme_loss(model: GradientFieldModel, batch: TrainBatch, sched: Schedule,
              allow_non_equilibrium: bool = False) -> nd.Tensor:
    """Explicit-energy variant: the energy's input-gradient is matched to the
    target, and the loss stays differentiable through the second-order tape."""
    if model.config.energy_kind == "none":
        raise ObjectiveError("eqme_loss needs an explicit energy head")
    _require_equilibrium(sched, allow_non_equilibrium)
    xg = corrupt(batch.x, batch.eps, batch.gamma)
    target = gradient_target(batch.x, batch.eps, batch.gamma, sched)
    graph = nd.Graph()
    xt = graph.leaf(xg)
    total = _total_energy(model, graph, xt, label=_labels_for(model, batch))
    grad = nd.input_gradient(total, xt)
    return nd.tmean(nd.square(nd.sub(grad, nd.constant(target))))


def fm_loss(model: GradientFieldModel, batch: TrainBatch) -> nd.Tensor:
    """Velocity-matching baseline with the interpolation factor as the noise
    level input; the target is the data-ward velocity x - eps."""
    if not model.config.noise_conditioned:
        raise ObjectiveError("fm_loss requires a noise-conditioned model")
    xg = corrupt(batch.x, batch.eps, batch.gamma)
    graph = nd.Graph()
    out = model.forward(graph, xg, label=_labels_for(model, batch),
                        noise_level=batch.gamma)
    return nd.tmean(nd.square(nd.sub(out, nd.constant(batch.x - batch.eps))))


def uncond_fm_loss(model: GradientFieldModel, batch: TrainBatch) -> nd.Tensor:
    """Velocity matching with no noise-level input at all."""
    if model.config.noise_conditioned:
        raise ObjectiveError("uncond_fm_loss requires an unconditioned model")
    if model.config.energy_kind != "none":
        raise ObjectiveError("uncond_fm_loss trains plain field models only")
    xg = corrupt(batch.x, batch.eps, batch.gamma)
    graph = nd.Graph()
    out = model.forward(graph, xg, label=_labels_for(model, batch))
    return nd.tmean(nd.square(nd.sub(out, nd.constant(batch.x - batch.eps))))


def loss_for(objective: str, model: GradientFieldModel, batch: TrainBatch,
             sched: Schedule, allow_non_equilibrium: bool = False) -> nd.Tensor:
    """Dispatch by objective kind (the RunConfig surface)."""
    if objective == "eqm":
        return eqm_loss(model, batch, sched, allow_non_equilibrium)
    if objective == "eqm-e":
        return eqme_loss(model, batch, sched, allow_non_equilibrium)
    if objective == "fm":
        return fm_loss(model, batch)
    if objective == "uncond-fm":
        return uncond_fm_loss(model, batch)
    raise ObjectiveError(f"unknown objective '{objective}'")
