"""Small feed-forward classifier with explicit backprop and an Adam optimizer.

Layer layout: ``hidden_dims`` activated layers, then an activated embedding
layer (the map whose output the association loss sees), then a linear logits
layer.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import ShapeError, as_matrix, row_softmax

CHECKPOINT_MAGIC = "assocda-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int = 2
    hidden_dims: tuple = (64,)
    embedding_dim: int = 64
    num_classes: int = 2
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.embedding_dim, self.num_classes)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.embedding_dim, self.num_classes)


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list
    biases: list

    def zeros_like(self):
        return MlpParams(
            self.spec,
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
        )

    def arrays(self):
        return [*self.weights, *self.biases]

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for a in self.arrays():
            out.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, expected {pos}")
        k = len(self.weights)
        return MlpParams(self.spec, out[:k], out[k:])

    def __add__(self, other):
        return MlpParams(
            self.spec,
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scale(self, c):
        return MlpParams(self.spec, [c * w for w in self.weights], [c * b for b in self.biases])


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list
    activations: list
    embeddings: np.ndarray
    logits: np.ndarray


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0).astype(np.float64)


def _tanh_grad(z, a):
    return 1.0 - a * a


_ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


def init_params(spec):
    rng = np.random.default_rng(spec.seed)
    dims = spec.layer_dims
    weights = [
        rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(dims[:-1], dims[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in dims[1:]]
    return MlpParams(spec, weights, biases)


def forward(params, inputs):
    x = as_matrix(inputs, "inputs")
    if x.shape[1] != params.spec.input_dim:
        raise ShapeError(f"inputs have {x.shape[1]} columns, network expects {params.spec.input_dim}")
    act, _ = _ACTIVATIONS[params.spec.activation]
    pre, acts = [], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w + b
        h = act(z)
        pre.append(z)
        acts.append(h)
    logits = h @ params.weights[-1] + params.biases[-1]
    return ForwardTrace(x, pre, acts, h, logits)


def _backward(trace, params, grad_logits, grad_embeddings):
    _, act_grad = _ACTIVATIONS[params.spec.activation]
    grads = params.zeros_like()
    n_hidden = len(trace.activations)
    if grad_logits is not None:
        grads.weights[-1] = trace.embeddings.T @ grad_logits
        grads.biases[-1] = grad_logits.sum(axis=0)
        g = grad_logits @ params.weights[-1].T
    else:
        g = np.zeros_like(trace.embeddings)
    if grad_embeddings is not None:
        g = g + grad_embeddings
    for i in reversed(range(n_hidden)):
        gz = g * act_grad(trace.pre_activations[i], trace.activations[i])
        below = trace.activations[i - 1] if i > 0 else trace.inputs
        grads.weights[i] = below.T @ gz
        grads.biases[i] = gz.sum(axis=0)
        if i > 0:
            g = gz @ params.weights[i].T
    return grads


def classification_loss_and_grads(trace, params, labels):
    """Mean softmax cross-entropy over the batch and its parameter gradients."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = trace.logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    z = trace.logits - trace.logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad_logits = row_softmax(trace.logits)
    grad_logits[np.arange(n), labels] -= 1.0
    grad_logits /= n
    return loss, _backward(trace, params, grad_logits, None)


def backprop_external(trace, params, grad_embeddings):
    """Parameter gradient induced by an upstream gradient on the embeddings."""
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != trace.embeddings.shape:
        raise ShapeError(f"embedding grad {g.shape} does not match embeddings {trace.embeddings.shape}")
    return _backward(trace, params, None, g)


def predict(params, inputs):
    return forward(params, inputs).logits.argmax(axis=1)


def error_pct(params, inputs, labels):
    return float(100.0 * np.mean(predict(params, inputs) != np.asarray(labels)))


@dataclass
class OptimizerState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(params):
    return OptimizerState(
        m=[np.zeros_like(a) for a in params.arrays()],
        v=[np.zeros_like(a) for a in params.arrays()],
        t=0,
    )


def optimizer_step(params, grads, state, lr, cfg=AdamConfig()):
    """One bias-corrected Adam update; returns new params and state."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_arrays, ms, vs = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        new_arrays.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps))
        ms.append(m)
        vs.append(v)
    k = len(params.weights)
    return MlpParams(params.spec, new_arrays[:k], new_arrays[k:]), OptimizerState(ms, vs, t)


def save_checkpoint(params, path):
    """Text checkpoint: magic/version line, spec JSON line, one float per line.

    Floats are written with ``repr`` so loading reproduces them exactly.
    """
    spec = asdict(params.spec)
    spec["hidden_dims"] = list(spec["hidden_dims"])
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", json.dumps(spec, sort_keys=True)]
    lines.extend(repr(float(v)) for v in params.flat())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or lines[0] != f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}":
        raise ValueError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    spec = MlpSpec(**json.loads(lines[1]))
    template = init_params(spec)
    return template.with_flat(np.array([float(s) for s in lines[2:]]))
