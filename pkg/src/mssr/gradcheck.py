"""Finite-difference verification of analytic gradients.

The numeric side only ever calls forward passes, so it stays independent of
the backward code it certifies.  All checks run in float64: central
differences with step 1e-4 leave roughly 1e-8 of headroom there, comfortably
inside the 1e-4 relative-error budget.

ReLU kinks break differentiability, so a parameter coordinate is excluded
when nudging it by +-step flips any ReLU activation sign (the finite
difference would straddle a kink).  Relative error uses a guarded
denominator: coordinates where both gradients are below ``floor`` are
effectively compared at absolute tolerance floor * threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import MssrModel

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4
REL_ERROR_FLOOR = 1e-3


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERROR_FLOOR) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(f, theta: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    work = theta.copy()
    for i in range(theta.size):
        work[i] = theta[i] + step
        hi = f(work)
        work[i] = theta[i] - step
        lo = f(work)
        work[i] = theta[i]
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_layer: dict[str, float] = field(default_factory=dict)
    n_checked: int = 0
    n_excluded: int = 0

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_error < tolerance


def _layer_names(model: MssrModel) -> list[str]:
    names = [f"block1/layer{i + 1}" for i in range(model.long_depth)]
    names += [f"block2/layer{i + 1}" for i in range(model.long_depth)]
    names += [f"recon/layer{i + 1}" for i in range(model.recon_depth)]
    return names


def _layer_slices(model: MssrModel) -> list[slice]:
    slices = []
    pos = 0
    for layer in model.layers():
        n = layer.weights.size + layer.bias.size
        slices.append(slice(pos, pos + n))
        pos += n
    return slices


def relu_activation_mask(trace) -> np.ndarray:
    """Sign pattern of every ReLU pre-activation in a forward trace."""
    records = trace.block1_records + trace.block2_records + trace.recon_records[:-1]
    if not records:
        return np.zeros(0, dtype=bool)
    return np.concatenate([(pre > 0).ravel() for _, pre in records])


def masked_numerical_gradient(f, theta: np.ndarray, step: float = DEFAULT_STEP):
    """Central differences of f(theta) -> (value, relu mask).

    Returns (gradient, excluded) where a coordinate is excluded when its two
    evaluations disagree on the activation mask, i.e. the difference quotient
    straddles a ReLU kink and is not a valid derivative estimate.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    excluded = np.zeros(theta.size, dtype=bool)
    work = theta.copy()
    for i in range(theta.size):
        work[i] = theta[i] + step
        hi, mask_hi = f(work)
        work[i] = theta[i] - step
        lo, mask_lo = f(work)
        work[i] = theta[i]
        grad[i] = (hi - lo) / (2.0 * step)
        if not np.array_equal(mask_hi, mask_lo):
            excluded[i] = True
    return grad, excluded


def check_model_gradients(
    model: MssrModel,
    x: np.ndarray,
    step: float = DEFAULT_STEP,
    grad_perturbation=None,
) -> GradCheckResult:
    """Compare analytic parameter gradients of L = 0.5*sum(F(x)^2) to finite differences.

    Works on a float64 copy of the model; the argument is left untouched.
    ``grad_perturbation``, if given, is applied to the analytic flat gradient
    before comparison (a test hook for proving the harness catches bugs).
    """
    m = model.astype(np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)

    residual, trace = m.forward_with_trace(x)
    m.zero_gradients()
    m.backward(trace, residual)
    analytic = m.flat_grads()
    if grad_perturbation is not None:
        analytic = grad_perturbation(analytic)

    theta = m.flat_params()

    def eval_at(vec):
        m.set_flat_params(vec)
        res, tr = m.forward_with_trace(x)
        return 0.5 * float(np.sum(res * res)), relu_activation_mask(tr)

    numeric, excluded = masked_numerical_gradient(eval_at, theta, step)
    m.set_flat_params(theta)

    errors = relative_errors(analytic, numeric)
    errors[excluded] = 0.0
    result = GradCheckResult(
        max_rel_error=float(errors.max()) if errors.size else 0.0,
        n_checked=int((~excluded).sum()),
        n_excluded=int(excluded.sum()),
    )
    for name, sl in zip(_layer_names(model), _layer_slices(model)):
        result.per_layer[name] = float(errors[sl].max())
    return result


def check_function_gradients(f, theta: np.ndarray, analytic: np.ndarray, step: float = DEFAULT_STEP) -> float:
    """Max guarded relative error between an analytic gradient and central differences of f."""
    numeric = numerical_gradient(f, theta, step)
    return float(relative_errors(analytic, numeric).max())


def check_loss_gradients(model: MssrModel, batch, step: float = DEFAULT_STEP) -> GradCheckResult:
    """FD check of the batch training loss over all parameters (float64 copy)."""
    from .training import _stack_batch, loss_and_grad

    m = model.astype(np.float64)
    loss_and_grad(m, batch)
    analytic = m.flat_grads()
    theta = m.flat_params()
    x, r = _stack_batch(batch, np.float64)
    scale = 2.0 * len(batch)

    def eval_at(vec):
        m.set_flat_params(vec)
        residual, tr = m.forward_with_trace(x)
        diff = residual - r
        return float(np.sum(diff * diff)) / scale, relu_activation_mask(tr)

    numeric, excluded = masked_numerical_gradient(eval_at, theta, step)
    m.set_flat_params(theta)

    errors = relative_errors(analytic, numeric)
    errors[excluded] = 0.0
    result = GradCheckResult(
        max_rel_error=float(errors.max()) if errors.size else 0.0,
        n_checked=int((~excluded).sum()),
        n_excluded=int(excluded.sum()),
    )
    for name, sl in zip(_layer_names(model), _layer_slices(model)):
        result.per_layer[name] = float(errors[sl].max())
    return result


def empirical_receptive_field(model: MssrModel, seed: int = 0, bump: float = 0.5) -> tuple[int, int]:
    """Measure the receptive field by perturbing one input pixel.

    Runs a float64 copy on an input large enough to contain the theoretical
    footprint, bumps the center pixel, and returns the (height, width) of the
    bounding box of output pixels that changed.  The bump is kept large so
    the faint corner contributions survive float64 rounding against O(1)
    activations.
    """
    m = model.astype(np.float64)
    depth = 2 * model.long_depth + model.recon_depth  # longest path
    size = 2 * depth + 1 + 8  # theoretical footprint plus margin
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (1, 1, size, size))
    base = m.forward(x)
    bumped = x.copy()
    bumped[0, 0, size // 2, size // 2] += bump
    diff = m.forward(bumped) - base
    rows = np.nonzero(np.any(diff[0, 0] != 0.0, axis=1))[0]
    cols = np.nonzero(np.any(diff[0, 0] != 0.0, axis=0))[0]
    if rows.size == 0:
        return 0, 0
    return int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)
