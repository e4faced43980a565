"""Neural network primitives with explicit forward/backward passes.

Everything runs in double precision on plain numpy arrays. Backward
functions accumulate into Parameter.grad (+=) so label and domain losses
can share one gradient buffer per parameter.
"""

from __future__ import annotations

import numpy as np

from stance_dann import kernels


class Parameter:
    """A named weight tensor paired with a same-shape gradient buffer."""

    def __init__(self, value: np.ndarray, name: str):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.value.shape})"


def dense_forward(x: np.ndarray, w: Parameter, b: Parameter) -> np.ndarray:
    """y = x @ W + b for x of shape [batch, in]."""
    if x.ndim != 2 or x.shape[1] != w.value.shape[0]:
        raise ValueError(
            f"dense {w.name}: input shape {x.shape} incompatible with W {w.value.shape}"
        )
    if b.value.shape != (w.value.shape[1],):
        raise ValueError(f"dense {w.name}: bias shape {b.value.shape} mismatch")
    return x @ w.value + b.value


def dense_backward(dy: np.ndarray, x: np.ndarray, w: Parameter, b: Parameter) -> np.ndarray:
    w.grad += x.T @ dy
    b.grad += dy.sum(axis=0)
    return dy @ w.value.T


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    # gradient is zero at x == 0 (the kink)
    return dy * (x > 0.0)


def embed_lookup(ids: np.ndarray, emb: Parameter) -> np.ndarray:
    """Gather embedding rows; id 0 is the padding row."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= emb.value.shape[0]):
        raise ValueError(
            f"embedding id out of range [0, {emb.value.shape[0]}) in {emb.name}"
        )
    return emb.value[ids]


def embed_backward(dy: np.ndarray, ids: np.ndarray, emb: Parameter) -> None:
    np.add.at(emb.grad, np.asarray(ids), dy)


def conv1d_maxpool_forward(x: np.ndarray, filt: Parameter, bias: Parameter):
    """Valid conv over [len, depth] input, ReLU, max over positions.

    Returns (pooled [maps], cache) where the cache carries what backward
    needs: the input, argmax positions and the ReLU mask at the max.
    """
    pooled, argmax = kernels.conv1d_maxpool_forward(x, filt.value, bias.value)
    cache = (x, filt, bias, argmax, pooled > 0.0)
    return pooled, cache


def conv1d_maxpool_backward(dpooled: np.ndarray, cache) -> np.ndarray:
    x, filt, bias, argmax, active = cache
    dx, dfilt, dbias = kernels.conv1d_maxpool_backward(
        dpooled, x, filt.value, argmax, active
    )
    filt.grad += dfilt
    bias.grad += dbias
    return dx


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean NLL under a row-stabilized softmax; also returns the probabilities."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"label out of range [0, {logits.shape[1]})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    if labels.size == 0:
        return 0.0, probs
    rows = np.arange(len(labels))
    log_probs = shifted - np.log(expz.sum(axis=1, keepdims=True))
    loss = -float(log_probs[rows, labels].mean())
    return loss, probs


def softmax_cross_entropy_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d loss / d logits = (p - onehot) / batch."""
    labels = np.asarray(labels)
    dlogits = probs.copy()
    rows = np.arange(len(labels))
    dlogits[rows, labels] -= 1.0
    return dlogits / len(labels)


def grad_reverse_forward(x: np.ndarray, lam: float) -> np.ndarray:
    """Identity in the forward pass; `lam` only matters on the way back."""
    if lam < 0:
        raise ValueError(f"reversal constant must be non-negative, got {lam}")
    return x


def grad_reverse_backward(dy: np.ndarray, lam: float) -> np.ndarray:
    """Scale the upstream gradient by exactly -lam."""
    if lam < 0:
        raise ValueError(f"reversal constant must be non-negative, got {lam}")
    return -lam * dy
