"""
Numeric Core
Dense 64-bit layer primitives with hand-derived backward passes, the Adam
optimizer and a central finite-difference gradient checker.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from utils.errors import DimensionError, NumericAbortError

logger = logging.getLogger(__name__)

# Row-major 2-D float64 array (batch × features)
Matrix = np.ndarray

DTYPE = np.float64
LOG_CLAMP = 1e-12


# ============================================================================
# PARAMETERS AND LAYERS
# ============================================================================

class Parameter:
    """A named parameter block with its gradient buffer"""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


class AffineLayer:
    """y = x · Wᵀ + b with W of shape (out × in)"""

    def __init__(
            self,
            in_dim: int,
            out_dim: int,
            name: str,
            rng: Optional[np.random.Generator] = None,
            zero_init: bool = False
    ):
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"Layer {name} needs positive dimensions, got {in_dim}→{out_dim}")

        if zero_init or rng is None:
            weight = np.zeros((out_dim, in_dim), dtype=DTYPE)
        else:
            # He-style scaling by fan-in
            weight = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim))

        self.name = name
        self.weight = Parameter(f"{name}.weight", weight)
        self.bias = Parameter(f"{name}.bias", np.zeros(out_dim, dtype=DTYPE))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def grad_weight(self) -> np.ndarray:
        return self.weight.grad

    @property
    def grad_bias(self) -> np.ndarray:
        return self.bias.grad

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: Matrix) -> Tuple[Matrix, Matrix]:
        return affine_forward(self, x)

    def backward(self, d_out: Matrix, cache: Matrix) -> Matrix:
        return affine_backward(self, d_out, cache)


def affine_forward(layer: AffineLayer, x: Matrix) -> Tuple[Matrix, Matrix]:
    """Forward pass; returns the output and the cached input"""
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(
            f"{layer.name}: expected input of width {layer.in_dim}, got shape {x.shape}"
        )
    out = x @ layer.weight.value.T + layer.bias.value
    return out, x


def affine_backward(layer: AffineLayer, d_out: Matrix, cache: Matrix) -> Matrix:
    """Accumulate dW, db into the layer and return dL/dx"""
    x = cache
    if d_out.shape != (x.shape[0], layer.out_dim):
        raise DimensionError(f"{layer.name}: upstream gradient shape {d_out.shape} does not match output")
    layer.weight.grad += d_out.T @ x
    layer.bias.grad += d_out.sum(axis=0)
    return d_out @ layer.weight.value


# ============================================================================
# ACTIVATIONS AND LOSSES
# ============================================================================

def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


def relu_backward(d_out: Matrix, x: Matrix) -> Matrix:
    """Gradient passes only where the forward input was strictly positive"""
    return d_out * (x > 0)


def softmax(logits: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction"""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"softmax needs at least 2 columns, got shape {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def one_hot(labels: np.ndarray, num_classes: int) -> Matrix:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DimensionError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    encoded = np.zeros((labels.shape[0], num_classes), dtype=DTYPE)
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


def cross_entropy(probs: Matrix, onehot: Matrix) -> float:
    """Mean negative log-likelihood of the true class, probabilities clamped at 1e-12"""
    if probs.shape != onehot.shape:
        raise DimensionError(f"cross_entropy shapes differ: {probs.shape} vs {onehot.shape}")
    if probs.shape[0] == 0:
        return 0.0
    true_prob = np.sum(probs * onehot, axis=1)
    return float(-np.mean(np.log(np.maximum(true_prob, LOG_CLAMP))))


def cross_entropy_grad(probs: Matrix, onehot: Matrix) -> Matrix:
    """Gradient of cross_entropy(softmax(z), y) with respect to the logits z"""
    if probs.shape != onehot.shape:
        raise DimensionError(f"cross_entropy shapes differ: {probs.shape} vs {onehot.shape}")
    if probs.shape[0] == 0:
        return np.zeros_like(probs)
    return (probs - onehot) / probs.shape[0]


# ============================================================================
# ADAM
# ============================================================================

@dataclass
class AdamState:
    """Moment accumulators keyed by parameter name"""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: List[Parameter]):
    """One bias-corrected Adam update; gradients are zeroed afterwards"""
    for param in params:
        if not np.all(np.isfinite(param.grad)):
            bad = int(np.size(param.grad) - np.count_nonzero(np.isfinite(param.grad)))
            raise NumericAbortError(
                f"Non-finite gradient in parameter block '{param.name}' "
                f"({bad} of {param.grad.size} entries) at Adam step {state.t + 1}"
            )

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t

    for param in params:
        m = state.m.setdefault(param.name, np.zeros_like(param.value))
        v = state.v.setdefault(param.name, np.zeros_like(param.value))
        m *= state.beta1
        m += (1.0 - state.beta1) * param.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(param.grad)
        param.value -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.zero_grad()


class AdamOptimizer:
    """Adam over a fixed list of parameter blocks"""

    def __init__(self, params: List[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate parameter names handed to Adam: {names}")
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        adam_step(self.state, self.params)

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()


# ============================================================================
# GRADIENT CHECK
# ============================================================================

def gradient_check(
        loss_and_grad: Callable[[], float],
        params: List[Parameter],
        num_coords: int = 20,
        h: float = 1e-5,
        rng: Optional[np.random.Generator] = None
) -> float:
    """
    Compare analytic gradients against central finite differences.

    `loss_and_grad` must zero the gradients of `params`, run forward and
    backward, and return the scalar loss. Up to `num_coords` coordinates are
    sampled per parameter block. Returns the max relative error.
    """
    rng = rng or np.random.default_rng(0)

    loss_and_grad()
    analytic = {p.name: p.grad.copy() for p in params}

    max_error = 0.0
    for param in params:
        flat = param.value.reshape(-1)
        count = min(num_coords, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)

        for idx in coords:
            original = flat[idx]
            flat[idx] = original + h
            plus = loss_and_grad()
            flat[idx] = original - h
            minus = loss_and_grad()
            flat[idx] = original

            numeric = (plus - minus) / (2.0 * h)
            exact = analytic[param.name].reshape(-1)[idx]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-6)
            if error > max_error:
                logger.debug(f"{param.name}[{idx}]: analytic={exact:.6e} numeric={numeric:.6e} rel={error:.3e}")
            max_error = max(max_error, error)

    # leave analytic gradients in place for callers that inspect them
    for param in params:
        param.grad[...] = analytic[param.name]
    return max_error
