"""The training loop: stream batches, minimize the configured objective,
checkpoint deterministically.

One generator seeded by the run seed drives everything (data draws, noise,
interpolation factors), and its state is stored in checkpoints, so resuming
reproduces the uninterrupted run bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ndtensor as nd
from .checkpoint import load_checkpoint, load_params_into, save_checkpoint
from .config import RunConfig, ValidationError
from .data import FLOAT_FMT, draw_from
from .model import GradientFieldModel, init_model
from .objective import TrainBatch, draw_batch, loss_for
from .optimizer import AdamW

CHECKPOINT_NAME = "checkpoint.eqmckpt"
LOSSES_NAME = "losses.csv"


@dataclass
class TrainResult:
    config: RunConfig
    model: GradientFieldModel
    optimizer: AdamW
    losses: np.ndarray
    checkpoint_path: Path | None


def _next_batch(config: RunConfig, rng: np.random.Generator,
                fixed_points: np.ndarray | None) -> TrainBatch:
    if fixed_points is not None:
        # memorization regime: the whole fixed set every step, tiled up to
        # batch_size so each point sees several corruption draws per step
        repeats = max(1, config.train.batch_size // len(fixed_points))
        x, labels = np.tile(fixed_points, (repeats, 1)), None
    else:
        x, labels = draw_from(config.dataset.distribution(),
                              config.train.batch_size, rng)
        if config.model.num_classes == 0:
            labels = None
    return draw_batch(rng, x, labels=labels)


def _parameter_gradients(model: GradientFieldModel, loss: nd.Tensor) -> dict[str, np.ndarray]:
    grads = nd.backward(loss)
    bound = model._bind(loss.graph)
    return {name: nd.grad_values(grads, leaf) for name, leaf in bound.items()}


def train(config: RunConfig | None = None, out_dir=None, init_from=None,
          resume_from=None, quiet: bool = True) -> TrainResult:
    """Run (or resume) a training run.

    init_from warm-starts parameters from another checkpoint (architectures
    must agree); resume_from continues an interrupted run exactly, including
    the data stream.
    """
    start_step = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        config = ck.config if config is None else config
        model = GradientFieldModel(config=config.model, params=ck.params)
        optimizer = ck.optimizer
        rng = np.random.default_rng()
        rng.bit_generator.state = ck.rng_state
        start_step = ck.step
    else:
        if config is None:
            raise ValidationError("train needs a config or a checkpoint to resume")
        config.validate()
        model = init_model(config.model)
        if init_from is not None:
            load_params_into(init_from, model)
        opt_cfg = config.optimizer
        optimizer = AdamW(lr=opt_cfg.lr, beta1=opt_cfg.beta1, beta2=opt_cfg.beta2,
                          weight_decay=opt_cfg.weight_decay, epsilon=opt_cfg.epsilon)
        rng = np.random.default_rng(config.seed)

    fixed_points = (config.dataset.memorization_points()
                    if config.dataset.kind == "memorization" else None)
    if config.dataset.kind != "memorization":
        config.dataset.distribution()  # fail fast on bad parameters

    out_path = Path(out_dir) if out_dir is not None else (
        Path(config.out_dir) if config.out_dir else None)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    losses = np.empty(config.train.steps - start_step)
    ckpt_path = None
    for i, step in enumerate(range(start_step, config.train.steps)):
        batch = _next_batch(config, rng, fixed_points)
        try:
            loss = loss_for(config.objective, model, batch, config.schedule,
                            config.allow_non_equilibrium)
            grads = _parameter_gradients(model, loss)
            optimizer.step(model.params, grads)
        except nd.NonFiniteError as e:
            raise nd.NonFiniteError(f"training aborted at step {step}: {e}") from e
        losses[i] = loss.item()
        if not quiet and config.train.log_every and step % config.train.log_every == 0:
            print(f"step {step:6d}  loss {losses[i]:.6f}")
        every = config.train.checkpoint_every
        if out_path is not None and every and (step + 1) % every == 0 \
                and step + 1 < config.train.steps:
            save_checkpoint(out_path / f"ckpt-{step + 1:06d}.eqmckpt", config, model,
                            optimizer, step + 1, rng.bit_generator.state)
    if out_path is not None:
        ckpt_path = out_path / CHECKPOINT_NAME
        save_checkpoint(ckpt_path, config, model, optimizer, config.train.steps,
                        rng.bit_generator.state)
        _write_losses(out_path / LOSSES_NAME, start_step, losses)
    return TrainResult(config=config, model=model, optimizer=optimizer,
                       losses=losses, checkpoint_path=ckpt_path)


def _write_losses(path, start_step: int, losses: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, value in enumerate(losses):
            w.writerow([start_step + i, FLOAT_FMT % value])
