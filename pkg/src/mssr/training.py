"""Training: multi-scale residual loss minimized with Adam.

A training sample pairs a bicubic-interpolated low-resolution luminance patch
``x`` with the residual ``r = hr - x`` it should learn to predict, tagged with
the up-scale factor it came from.  Scales are mixed freely inside a batch;
multi-scale is a property of the data, not a code path.

The batch loss is

    L = 1/(2B) * sum_i ||r_i - F(x_i)||^2

i.e. the dataset-level 1/(2*N*S) normalization realized per batch of size B
(an incomplete final batch uses its actual size).  Weight decay is classic L2:
``weight_decay * theta`` is added to the raw gradient before the Adam moment
updates.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import MssrModel, parameter_count, save_model
from .tensor_ops import ContractViolation, ShapeError


@dataclass
class TrainSample:
    """One (interpolated LR patch, residual patch, scale) training triple."""

    x: np.ndarray
    r: np.ndarray
    scale: int

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.r = np.asarray(self.r)
        if self.x.shape != self.r.shape or self.x.ndim != 2:
            raise ShapeError(f"sample planes must be matching 2-D arrays, got x {self.x.shape} r {self.r.shape}")


@dataclass
class TrainConfig:
    batch_size: int = 64
    initial_lr: float = 1e-4
    lr_drop_epoch: int = 80
    total_epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0
    # wall-time column in the log; False writes 0.0 so logs are byte-reproducible
    timing: bool = True

    def __post_init__(self):
        if min(self.batch_size, self.total_epochs, self.lr_drop_epoch) <= 0:
            raise ValueError("batch_size, total_epochs and lr_drop_epoch must be positive")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.lr_drop_epoch > self.total_epochs:
            raise ValueError(
                f"lr_drop_epoch ({self.lr_drop_epoch}) must not exceed total_epochs ({self.total_epochs})"
            )


class AdamState:
    """First/second moment estimates over the flat parameter vector."""

    def __init__(self, n_params: int, lr: float, beta1=0.9, beta2=0.999, epsilon=1e-8,
                 weight_decay=0.0, dtype=np.float32):
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay

    @classmethod
    def for_model(cls, model: MssrModel, config: TrainConfig) -> "AdamState":
        return cls(
            parameter_count(model),
            lr=config.initial_lr,
            beta1=config.beta1,
            beta2=config.beta2,
            epsilon=config.epsilon,
            weight_decay=config.weight_decay,
            dtype=model.dtype,
        )


def adam_update(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    if params.shape != state.m.shape or grads.shape != state.m.shape:
        raise ShapeError(f"parameter/gradient length {params.shape}/{grads.shape} does not match "
                         f"optimizer state length {state.m.shape}")
    g = grads + state.weight_decay * params if state.weight_decay else grads
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def adam_step(model: MssrModel, state: AdamState) -> None:
    """Apply one Adam update to the model from its accumulated gradients.

    Requires gradients populated by :func:`loss_and_grad` (or a manual
    backward pass); gradients are zeroed afterwards.
    """
    if not model.grads_ready:
        raise ContractViolation("adam_step called before gradients were populated")
    model.set_flat_params(adam_update(model.flat_params(), model.flat_grads(), state))
    model.zero_gradients()


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Constant learning rate, divided by 10 from lr_drop_epoch onwards."""
    if not 0 <= epoch < config.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.total_epochs})")
    return config.initial_lr if epoch < config.lr_drop_epoch else config.initial_lr / 10.0


def _stack_batch(batch: list[TrainSample], dtype):
    shape = batch[0].x.shape
    for s in batch:
        if s.x.shape != shape:
            raise ShapeError(f"batch mixes patch shapes {shape} and {s.x.shape}")
    x = np.stack([s.x for s in batch]).astype(dtype)[:, None, :, :]
    r = np.stack([s.r for s in batch]).astype(dtype)[:, None, :, :]
    return np.ascontiguousarray(x), np.ascontiguousarray(r)


def loss_and_grad(model: MssrModel, batch: list[TrainSample]) -> float:
    """Batch loss 1/(2B) sum ||r - F(x)||^2; accumulates dL/dtheta into the model."""
    if not batch:
        raise ValueError("batch must be non-empty")
    x, r = _stack_batch(batch, model.dtype)
    model.zero_gradients()
    predicted, trace = model.forward_with_trace(x)
    diff = predicted - r
    loss = float(np.sum(diff.astype(np.float64) ** 2)) / (2.0 * len(batch))
    model.backward(trace, diff / len(batch))
    return loss


def evaluate_loss(model: MssrModel, samples: list[TrainSample], batch_size: int = 64) -> float:
    """Loss 1/(2N) sum ||r - F(x)||^2 over a sample list, no gradients."""
    if not samples:
        raise ValueError("samples must be non-empty")
    total = 0.0
    for start in range(0, len(samples), batch_size):
        x, r = _stack_batch(samples[start : start + batch_size], model.dtype)
        diff = model.forward(x) - r
        total += float(np.sum(diff.astype(np.float64) ** 2))
    return total / (2.0 * len(samples))


@dataclass
class TrainReport:
    epochs: int
    epoch_losses: list[float]
    final_scale_losses: dict[int, float]
    log_path: Path
    checkpoint_paths: list[Path] = field(default_factory=list)


def train(model: MssrModel, samples: list[TrainSample], config: TrainConfig, checkpoint_dir) -> TrainReport:
    """Run the full training loop.

    Every epoch reshuffles all scales together (seeded), sweeps the dataset in
    batches, writes one checkpoint and one log row
    (``epoch,mean_loss,lr,seconds``).  Returns final per-scale losses.
    """
    if not samples:
        raise ValueError("dataset is empty")
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    log_path = checkpoint_dir / "training_log.csv"
    log_file = open(log_path, "w", newline="")  # fails before training if unwritable

    rng = np.random.default_rng(config.seed)
    state = AdamState.for_model(model, config)
    report = TrainReport(config.total_epochs, [], {}, log_path)

    with log_file:
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "mean_loss", "lr", "seconds"])
        n = len(samples)
        for epoch in range(config.total_epochs):
            state.lr = lr_schedule(epoch, config)
            started = time.perf_counter()
            order = rng.permutation(n)
            sample_loss_sum = 0.0
            for start in range(0, n, config.batch_size):
                batch = [samples[i] for i in order[start : start + config.batch_size]]
                loss = loss_and_grad(model, batch)
                adam_step(model, state)
                sample_loss_sum += loss * len(batch)
            mean_loss = sample_loss_sum / n
            seconds = time.perf_counter() - started if config.timing else 0.0
            writer.writerow([epoch, f"{mean_loss:.17g}", f"{state.lr:.17g}", f"{seconds:.3f}"])
            report.epoch_losses.append(mean_loss)
            ckpt = checkpoint_dir / f"epoch_{epoch + 1:03d}.mssr"
            save_model(model, ckpt)
            report.checkpoint_paths.append(ckpt)

    for scale in sorted({s.scale for s in samples}):
        group = [s for s in samples if s.scale == scale]
        report.final_scale_losses[scale] = evaluate_loss(model, group, config.batch_size)
    return report
