"""Quadratic-time MMD^2 with a mixture of Gaussian RBF kernels."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .linalg import ShapeError, as_matrix

DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class MmdConfig:
    bandwidth_multipliers: tuple = DEFAULT_MULTIPLIERS
    use_median_heuristic: bool = True
    fixed_bandwidth: float | None = None
    estimator: str = "biased"

    def __post_init__(self):
        mults = tuple(float(v) for v in self.bandwidth_multipliers)
        object.__setattr__(self, "bandwidth_multipliers", mults)
        if not mults or any(v <= 0 for v in mults):
            raise ValueError("need at least one positive bandwidth multiplier")
        if self.fixed_bandwidth is not None and self.fixed_bandwidth <= 0:
            raise ValueError("fixed_bandwidth must be positive")
        if not self.use_median_heuristic and self.fixed_bandwidth is None:
            raise ValueError("set fixed_bandwidth when the median heuristic is off")
        if self.estimator not in ("biased", "unbiased"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass
class MmdResult:
    mmd_squared: float
    bandwidths_used: list = field(default_factory=list)
    grad_source: np.ndarray | None = None
    grad_target: np.ndarray | None = None


def rbf_kernel_matrix(x, y, sigma):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"column counts differ: {x.shape[1]} vs {y.shape[1]}")
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * sigma**2))


def median_heuristic(x, y):
    """Median pairwise Euclidean distance over the pooled sample (1.0 if all coincide)."""
    pooled = np.vstack([as_matrix(x, "x"), as_matrix(y, "y")])
    if pooled.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def bandwidths(x, y, cfg):
    if cfg.fixed_bandwidth is not None:
        base = cfg.fixed_bandwidth
    else:
        base = median_heuristic(x, y)
    return [base * m for m in cfg.bandwidth_multipliers]


def _kernel_grad(w, k, x, y, sigma):
    # d/dx_i sum_j w_ij k(x_i, y_j) for an RBF kernel.
    wk = w * k
    return -(wk.sum(axis=1, keepdims=True) * x - wk @ y) / sigma**2


def mmd2(x, y, cfg=MmdConfig(), with_grad=False):
    """MMD^2 between samples ``x`` and ``y`` averaged over the kernel mixture.

    The bandwidths are treated as constants when differentiating, even when
    they come from the median heuristic.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"dims differ: {x.shape[1]} vs {y.shape[1]}")
    m, n = x.shape[0], y.shape[0]
    unbiased = cfg.estimator == "unbiased"
    if unbiased and (m < 2 or n < 2):
        raise ValueError("unbiased estimator needs at least two samples per side")
    if m == 0 or n == 0:
        raise ValueError("empty sample")

    if unbiased:
        w_xx = (1.0 - np.eye(m)) / (m * (m - 1))
        w_yy = (1.0 - np.eye(n)) / (n * (n - 1))
    else:
        w_xx = np.full((m, m), 1.0 / m**2)
        w_yy = np.full((n, n), 1.0 / n**2)
    w_xy = np.full((m, n), -2.0 / (m * n))

    sigmas = bandwidths(x, y, cfg)
    total = 0.0
    gx = np.zeros_like(x)
    gy = np.zeros_like(y)
    for sigma in sigmas:
        k_xx = rbf_kernel_matrix(x, x, sigma)
        k_yy = rbf_kernel_matrix(y, y, sigma)
        k_xy = rbf_kernel_matrix(x, y, sigma)
        total += np.sum(w_xx * k_xx) + np.sum(w_yy * k_yy) + np.sum(w_xy * k_xy)
        if with_grad:
            # symmetric weights: each within-sample pair counts twice
            gx += 2.0 * _kernel_grad(w_xx, k_xx, x, x, sigma) + _kernel_grad(w_xy, k_xy, x, y, sigma)
            gy += 2.0 * _kernel_grad(w_yy, k_yy, y, y, sigma) + _kernel_grad(w_xy.T, k_xy.T, y, x, sigma)

    k = len(sigmas)
    res = MmdResult(mmd_squared=float(total / k), bandwidths_used=sigmas)
    if with_grad:
        res.grad_source = gx / k
        res.grad_target = gy / k
    return res
