"""Central finite-difference checks for every analytic gradient in the package."""

from dataclasses import dataclass

import numpy as np

from .assoc import AssocConfig, assoc_forward_backward
from .harness import composite_loss_and_grads
from .mmd import MmdConfig, mmd2
from .network import MlpSpec, classification_loss_and_grads, forward, init_params

FD_STEP = 1e-5
TOLERANCE = 1e-4
# relative errors are taken against max(|analytic|, |numeric|, REL_FLOOR)
REL_FLOOR = 1e-6

COMPONENTS = ("walker", "visit", "mmd", "classification", "composite")
MUTATIONS = ("walker-sign",)


def numerical_grad(f, x, h=FD_STEP):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def relative_errors(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / scale


@dataclass
class CheckResult:
    component: str
    max_rel_error: float
    instance: int
    coordinate: tuple

    @property
    def ok(self):
        return self.max_rel_error < TOLERANCE


def _random_embeddings(rng):
    n_s = int(rng.integers(2, 9))
    n_t = int(rng.integers(1, 9))
    d = int(rng.integers(1, 6))
    a = rng.normal(size=(n_s, d))
    b = rng.normal(size=(n_t, d))
    labels = rng.integers(0, 3, size=n_s)
    return a, b, labels


def _assoc_pair(component, a, b, labels, sign):
    cfg = AssocConfig(walker_weight=1.0, visit_weight=0.0) if component == "walker" else AssocConfig(walker_weight=0.0, visit_weight=1.0)
    res = assoc_forward_backward(a, b, labels, cfg)
    analytic = np.concatenate([sign * res.grad_source.ravel(), sign * res.grad_target.ravel()])

    def f(z):
        za, zb = z[: a.size].reshape(a.shape), z[a.size :].reshape(b.shape)
        return assoc_forward_backward(za, zb, labels, cfg).total

    return analytic, numerical_grad(f, np.concatenate([a.ravel(), b.ravel()]))


def _mmd_pair(rng):
    n_s, n_t, d = int(rng.integers(2, 9)), int(rng.integers(2, 9)), int(rng.integers(1, 6))
    x = rng.normal(size=(n_s, d))
    y = rng.normal(size=(n_t, d)) + 0.5
    # bandwidth frozen so the finite differences see the same kernel
    estimator = "unbiased" if rng.random() < 0.5 else "biased"
    cfg = MmdConfig(use_median_heuristic=False, fixed_bandwidth=float(rng.uniform(0.5, 2.0)), estimator=estimator)
    res = mmd2(x, y, cfg, with_grad=True)
    analytic = np.concatenate([res.grad_source.ravel(), res.grad_target.ravel()])

    def f(z):
        return mmd2(z[: x.size].reshape(x.shape), z[x.size :].reshape(y.shape), cfg).mmd_squared

    return analytic, numerical_grad(f, np.concatenate([x.ravel(), y.ravel()]))


def _network_instance(rng):
    d_in = int(rng.integers(1, 6))
    spec = MlpSpec(
        input_dim=d_in,
        hidden_dims=(int(rng.integers(2, 6)),),
        embedding_dim=int(rng.integers(1, 6)),
        num_classes=3,
        activation="tanh",
        seed=int(rng.integers(0, 2**31)),
    )
    params = init_params(spec)
    n_s = 3 * int(rng.integers(1, 3))
    xb = rng.normal(size=(n_s, d_in))
    yb = np.arange(n_s) % 3
    xu = rng.normal(size=(int(rng.integers(1, 9)), d_in))
    return params, xb, yb, xu


def _classification_pair(rng):
    params, xb, yb, _ = _network_instance(rng)
    _, grads = classification_loss_and_grads(forward(params, xb), params, yb)

    def f(v):
        p = params.with_flat(v)
        return classification_loss_and_grads(forward(p, xb), p, yb)[0]

    return grads.flat(), numerical_grad(f, params.flat())


def _composite_pair(rng):
    params, xb, yb, xu = _network_instance(rng)
    regime = "da_assoc" if rng.random() < 0.7 else "da_mmd"
    weight = float(rng.uniform(0.5, 2.0))
    acfg = AssocConfig(walker_weight=1.0, visit_weight=0.5)
    mcfg = MmdConfig(use_median_heuristic=False, fixed_bandwidth=1.0)
    if regime == "da_mmd" and xu.shape[0] < 2:
        xu = np.vstack([xu, xu + 0.1])
    _, _, grads = composite_loss_and_grads(params, xb, yb, xu, weight, regime, acfg, mcfg)

    def f(v):
        return composite_loss_and_grads(params.with_flat(v), xb, yb, xu, weight, regime, acfg, mcfg)[0]

    return grads.flat(), numerical_grad(f, params.flat())


def check_component(component, seed=0, instances=20, mutation=None):
    """Worst relative error of ``component`` over ``instances`` seeded problems."""
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    if instances < 1:
        raise ValueError("need at least one instance")
    rng = np.random.default_rng([seed, COMPONENTS.index(component)])
    worst = CheckResult(component, 0.0, -1, ())
    for k in range(instances):
        if component in ("walker", "visit"):
            sign = -1.0 if (mutation == "walker-sign" and component == "walker") else 1.0
            analytic, numeric = _assoc_pair(component, *_random_embeddings(rng), sign)
        elif component == "mmd":
            analytic, numeric = _mmd_pair(rng)
        elif component == "classification":
            analytic, numeric = _classification_pair(rng)
        else:
            analytic, numeric = _composite_pair(rng)
        err = relative_errors(analytic, numeric)
        i = int(np.argmax(err))
        if err[i] > worst.max_rel_error or worst.instance < 0:
            worst = CheckResult(component, float(err[i]), k, (i,))
    return worst


def check_all(seed=0, instances=20, mutation=None):
    return [check_component(c, seed, instances, mutation) for c in COMPONENTS]
