"""Dense float64 primitives shared by the loss, MMD and network modules.

Matrices are plain 2-D ``numpy`` arrays; these helpers add the shape checks
and the numerically stable softmax / clamped cross-entropy everything else
builds on.
"""

import numpy as np

DEFAULT_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


def as_matrix(x, name="matrix"):
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def row_softmax(m):
    """Softmax over each row, max-shifted so large entries cannot overflow."""
    m = as_matrix(m)
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax_backward(p, grad_p):
    """Pull a gradient w.r.t. ``row_softmax`` output back to its input."""
    return p * (grad_p - np.sum(grad_p * p, axis=1, keepdims=True))


def cross_entropy_rows(target, probs, clamp=DEFAULT_CLAMP):
    """Mean over rows of ``-sum_j target_ij * ln(max(probs_ij, clamp))``."""
    target = as_matrix(target, "target")
    probs = as_matrix(probs, "probs")
    if target.shape != probs.shape:
        raise ShapeError(f"target {target.shape} and probs {probs.shape} differ")
    logp = np.log(np.maximum(probs, clamp))
    return float(-np.sum(target * logp) / target.shape[0])


def cross_entropy_rows_grad(target, probs, clamp=DEFAULT_CLAMP):
    """Gradient of :func:`cross_entropy_rows` w.r.t. ``probs``.

    Entries at or below the clamp sit in a dead zone and get zero gradient.
    """
    live = probs > clamp
    safe = np.where(live, probs, 1.0)
    return np.where(live, -target / safe, 0.0) / target.shape[0]
