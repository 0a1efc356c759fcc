from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from common.errors import NumericalDivergenceError, ValidationError


@dataclass
class Parameter:
    """
    A float64 tensor with its accumulated gradient.

    name: str
        unique name inside a parameter set (eg. enc.0.W)
    value: np.ndarray
        parameter values
    grad: np.ndarray
        same shape as value, accumulated by the backward functions
    """

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ValidationError(f"{self.name}: gradient shape {self.grad.shape} != {self.value.shape}")

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def ensure_finite(what: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalDivergenceError(f"{what} is not finite")


def embedding_forward(table: Parameter, indices: np.ndarray) -> np.ndarray:
    """Gathers table rows; output row i is table.value[indices[i]]."""
    indices = np.asarray(indices, dtype=np.int64)
    vocab = table.value.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        raise ValidationError(f"{table.name}: index out of range [0, {vocab})")
    return table.value[indices]


def embedding_backward(table: Parameter, indices: np.ndarray, grad_out: np.ndarray) -> None:
    # np.add.at so repeated indices accumulate
    np.add.at(table.grad, np.asarray(indices, dtype=np.int64), grad_out)


def affine(x: np.ndarray, W: Parameter, b: Parameter) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != W.value.shape[0] or b.value.shape != (W.value.shape[1],):
        raise ValidationError(f"affine shape mismatch: x {x.shape}, {W.name} {W.value.shape}, {b.name} {b.value.shape}")
    return x @ W.value + b.value


def affine_backward(x: np.ndarray, W: Parameter, b: Parameter, grad_out: np.ndarray) -> np.ndarray:
    """Accumulates dW and db; returns the gradient w.r.t. x."""
    W.grad += x.T @ grad_out
    b.grad += grad_out.sum(axis=0)
    return grad_out @ W.value.T


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0
    return grad_out * (x > 0.0)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_targets(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    k = logits.shape[1]
    if targets.shape != (logits.shape[0],):
        raise ValidationError(f"targets shape {targets.shape} does not match {logits.shape[0]} logit rows")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ValidationError(f"target out of range [0, {k})")
    return targets


def per_row_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """-log softmax(logits)[target] for every row."""
    targets = _check_targets(logits, targets)
    log_probs = _log_softmax(logits)
    return -log_probs[np.arange(targets.size), targets]


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    logits: np.ndarray
        (B, K) unnormalised scores
    targets: np.ndarray
        (B,) class indices in [0, K)
    """
    targets = _check_targets(logits, targets)
    batch = targets.size
    if batch == 0:
        raise ValidationError("cross-entropy needs at least one row")
    log_probs = _log_softmax(logits)
    rows = np.arange(batch)
    loss = float(-log_probs[rows, targets].mean())
    grad = np.exp(log_probs)
    grad[rows, targets] -= 1.0
    return loss, grad / batch


def rbf_mmd(
    z: np.ndarray,
    prior_samples: np.ndarray,
    sigma: float,
    groups: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """
    Biased (V-statistic) squared MMD between `z` and `prior_samples` under the
    kernel k(a, b) = exp(-|a - b|^2 / (2 sigma^2)), with its gradient w.r.t. z.

    z: np.ndarray
        (B, L) latent codes
    prior_samples: np.ndarray
        (B', L) draws from the prior
    sigma: float
        kernel bandwidth
    groups: np.ndarray | None
        (B,) integer label per row, shared by z[i] and prior_samples[i]. The
        kernel is then multiplied by [g_a == g_b], which compares the joint
        distribution of (code, label) against prior x labels. Its population
        value is zero only when the codes follow the prior within every label.
    """
    if sigma <= 0:
        raise ValidationError(f"mmd sigma must be positive, got {sigma}")
    if z.shape[0] == 0 or prior_samples.shape[0] == 0:
        raise ValidationError("mmd needs at least one sample on each side")
    if z.shape[1] != prior_samples.shape[1]:
        raise ValidationError(f"mmd dimension mismatch: {z.shape} vs {prior_samples.shape}")

    n, m = z.shape[0], prior_samples.shape[0]
    scale = 2.0 * sigma**2
    k_zz = np.exp(-cdist(z, z, "sqeuclidean") / scale)
    k_pp = np.exp(-cdist(prior_samples, prior_samples, "sqeuclidean") / scale)
    k_zp = np.exp(-cdist(z, prior_samples, "sqeuclidean") / scale)
    if groups is not None:
        groups = np.asarray(groups)
        if n != m or groups.shape != (n,):
            raise ValidationError("grouped mmd needs one label per row and as many prior draws as codes")
        same = groups[:, None] == groups[None, :]
        k_zz, k_pp, k_zp = k_zz * same, k_pp * same, k_zp * same
    value = k_zz.mean() + k_pp.mean() - 2.0 * k_zp.mean()

    # d k(a, b) / da = -k(a, b) (a - b) / sigma^2; k_zz contributes twice by symmetry
    grad_zz = -(2.0 / (n * n * sigma**2)) * (z * k_zz.sum(axis=1, keepdims=True) - k_zz @ z)
    grad_zp = (2.0 / (n * m * sigma**2)) * (z * k_zp.sum(axis=1, keepdims=True) - k_zp @ prior_samples)
    # V-statistic is non-negative; clip rounding noise below zero
    return max(float(value), 0.0), grad_zz + grad_zp
