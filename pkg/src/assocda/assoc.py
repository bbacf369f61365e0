"""Walker + visit association loss between source and target embeddings.

A random walker steps from each source embedding to a target embedding and
back, with transition probabilities given by a softmax over dot-product
similarities. The walker term pulls round trips towards "same class, uniform",
the visit term asks every target sample to be reached equally often.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_CLAMP,
    ShapeError,
    as_matrix,
    cross_entropy_rows,
    cross_entropy_rows_grad,
    matmul,
    row_softmax,
    row_softmax_backward,
)


@dataclass(frozen=True)
class AssocConfig:
    walker_weight: float = 1.0
    visit_weight: float = 0.5
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        if self.walker_weight < 0 or self.visit_weight < 0:
            raise ValueError("association loss weights must be non-negative")
        if not 0 < self.clamp <= 1e-6:
            raise ValueError(f"clamp must lie in (0, 1e-6], got {self.clamp}")


@dataclass
class AssocResult:
    total: float
    walker: float
    visit: float
    grad_source: np.ndarray
    grad_target: np.ndarray


def similarity_matrix(a, b):
    a = as_matrix(a, "source embeddings")
    b = as_matrix(b, "target embeddings")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"embedding dims differ: {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def transitions(m):
    """Return (source->target, target->source) transition matrices."""
    m = as_matrix(m)
    return row_softmax(m), row_softmax(m.T)


def roundtrip(p_ab, p_ba):
    return matmul(p_ab, p_ba)


def walker_target(labels):
    """Uniform distribution over same-class source samples for each row."""
    labels = np.asarray(labels)
    same = (labels[:, None] == labels[None, :]).astype(np.float64)
    return same / same.sum(axis=1, keepdims=True)


def visit_distribution(p_ab):
    # Mean rather than the plain column sum so the result is a distribution.
    return np.asarray(p_ab, dtype=np.float64).mean(axis=0)


def assoc_forward_backward(a, b, labels, cfg=AssocConfig()):
    """Association loss and its exact gradients w.r.t. both embedding batches."""
    a = as_matrix(a, "source embeddings")
    b = as_matrix(b, "target embeddings")
    labels = np.asarray(labels)
    n_s, n_t = a.shape[0], b.shape[0]
    if n_t == 0:
        raise ValueError("target batch is empty")
    if labels.shape != (n_s,):
        raise ShapeError(f"expected {n_s} labels, got shape {labels.shape}")

    m = similarity_matrix(a, b)
    p_ab, p_ba = transitions(m)
    p_aba = p_ab @ p_ba
    t = walker_target(labels)
    walker = cross_entropy_rows(t, p_aba, cfg.clamp)

    p_visit = visit_distribution(p_ab)
    visit_live = p_visit > cfg.clamp
    visit = float(-np.sum(np.log(np.maximum(p_visit, cfg.clamp))) / n_t)

    g_aba = cfg.walker_weight * cross_entropy_rows_grad(t, p_aba, cfg.clamp)
    g_ab = g_aba @ p_ba.T
    g_ba = p_ab.T @ g_aba
    g_visit = np.where(visit_live, -1.0 / (n_t * np.where(visit_live, p_visit, 1.0)), 0.0)
    g_ab = g_ab + cfg.visit_weight * g_visit[None, :] / n_s

    g_m = row_softmax_backward(p_ab, g_ab) + row_softmax_backward(p_ba, g_ba).T
    total = cfg.walker_weight * walker + cfg.visit_weight * visit
    return AssocResult(
        total=total,
        walker=walker,
        visit=visit,
        grad_source=g_m @ b,
        grad_target=g_m.T @ a,
    )
