import numpy as np
import pytest

from assocda.assoc import AssocConfig
from assocda.harness import composite_loss_and_grads
from assocda.linalg import ShapeError
from assocda.network import (
    MlpParams,
    MlpSpec,
    backprop_external,
    classification_loss_and_grads,
    error_pct,
    forward,
    init_optimizer,
    init_params,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from oracles import central_diff, max_rel_err


def small_spec(seed=0, activation="tanh"):
    return MlpSpec(input_dim=3, hidden_dims=(4,), embedding_dim=5, num_classes=3, activation=activation, seed=seed)


def test_init_deterministic():
    a, b = init_params(small_spec(7)), init_params(small_spec(7))
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    c = init_params(small_spec(8))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_no_hidden_layers_means_embedding_is_sole_hidden_layer():
    p = init_params(MlpSpec(input_dim=6, hidden_dims=(), embedding_dim=4, num_classes=2))
    assert [w.shape for w in p.weights] == [(6, 4), (4, 2)]
    assert all(np.all(b == 0) for b in p.biases)


def test_init_scale():
    fan_in = 50
    p = init_params(MlpSpec(input_dim=fan_in, hidden_dims=(), embedding_dim=20, num_classes=2, seed=3))
    w = p.weights[0]
    assert w.size == 1000
    assert abs(w.std() * np.sqrt(fan_in) - 1.0) < 0.2
    assert abs(w.mean()) < 5 / np.sqrt(fan_in) / np.sqrt(w.size)


def test_zero_params_give_zero_logits():
    p = init_params(small_spec()).scale(0.0)
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert np.array_equal(forward(p, x).logits, np.zeros((4, 3)))


def test_identity_network():
    spec = MlpSpec(input_dim=3, hidden_dims=(), embedding_dim=3, num_classes=3, activation="relu")
    p = MlpParams(spec, [np.eye(3), np.eye(3)], [np.zeros(3), np.zeros(3)])
    x = np.abs(np.random.default_rng(1).normal(size=(5, 3)))
    tr = forward(p, x)
    assert np.array_equal(tr.logits, x)
    assert np.array_equal(tr.embeddings, tr.activations[-1])


def test_forward_matches_straight_line_oracle():
    spec = MlpSpec(input_dim=3, hidden_dims=(4, 2), embedding_dim=5, num_classes=2, activation="relu", seed=4)
    p = init_params(spec)
    p.biases = [np.random.default_rng(9).normal(size=b.shape) for b in p.biases]
    x = np.random.default_rng(2).normal(size=(6, 3))
    (w1, w2, w3, w4), (b1, b2, b3, b4) = p.weights, p.biases
    h1 = np.maximum(x @ w1 + b1, 0)
    h2 = np.maximum(h1 @ w2 + b2, 0)
    emb = np.maximum(h2 @ w3 + b3, 0)
    tr = forward(p, x)
    assert np.allclose(tr.embeddings, emb, atol=1e-14)
    assert np.allclose(tr.logits, emb @ w4 + b4, atol=1e-14)


def test_forward_shape_error_and_determinism():
    p = init_params(small_spec())
    with pytest.raises(ShapeError):
        forward(p, np.ones((2, 4)))
    x = np.random.default_rng(0).normal(size=(3, 3))
    assert np.array_equal(forward(p, x).logits, forward(p, x).logits)


def test_uniform_logits_loss_is_log_c():
    p = init_params(small_spec()).scale(0.0)
    tr = forward(p, np.ones((4, 3)))
    loss, _ = classification_loss_and_grads(tr, p, [0, 1, 2, 0])
    assert loss == pytest.approx(np.log(3), abs=1e-12)


def test_saturated_correct_logits():
    spec = MlpSpec(input_dim=2, hidden_dims=(), embedding_dim=2, num_classes=2, activation="relu")
    p = MlpParams(spec, [np.eye(2), 50 * np.eye(2)], [np.zeros(2), np.zeros(2)])
    tr = forward(p, np.eye(2))
    loss, _ = classification_loss_and_grads(tr, p, [0, 1])
    assert loss < 1e-6


def test_label_out_of_range():
    p = init_params(small_spec())
    tr = forward(p, np.ones((2, 3)))
    with pytest.raises(ValueError):
        classification_loss_and_grads(tr, p, [0, 3])


@pytest.mark.parametrize("seed", range(5))
def test_classification_gradients(seed):
    p = init_params(small_spec(seed))
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(6, 3)), r.integers(0, 3, size=6)
    _, grads = classification_loss_and_grads(forward(p, x), p, y)

    def f(v):
        q = p.with_flat(v)
        return classification_loss_and_grads(forward(q, x), q, y)[0]

    assert max_rel_err(grads.flat(), central_diff(f, p.flat())) < 1e-4


def test_backprop_external_zero_and_linear():
    p = init_params(small_spec())
    r = np.random.default_rng(0)
    tr = forward(p, r.normal(size=(4, 3)))
    zero = backprop_external(tr, p, np.zeros((4, 5)))
    assert np.all(zero.flat() == 0)
    g1, g2 = r.normal(size=(4, 5)), r.normal(size=(4, 5))
    lhs = backprop_external(tr, p, g1 + g2).flat()
    rhs = (backprop_external(tr, p, g1) + backprop_external(tr, p, g2)).flat()
    assert np.max(np.abs(lhs - rhs)) < 1e-10
    with pytest.raises(ShapeError):
        backprop_external(tr, p, np.zeros((4, 4)))


@pytest.mark.parametrize("seed", range(10))
def test_composite_gradient(seed):
    p = init_params(small_spec(seed))
    r = np.random.default_rng(100 + seed)
    xb, yb = r.normal(size=(6, 3)), np.arange(6) % 3
    xu = r.normal(size=(5, 3))
    cfg = AssocConfig(1.0, 0.5)
    _, _, grads = composite_loss_and_grads(p, xb, yb, xu, 1.3, "da_assoc", cfg)

    def f(v):
        return composite_loss_and_grads(p.with_flat(v), xb, yb, xu, 1.3, "da_assoc", cfg)[0]

    assert max_rel_err(grads.flat(), central_diff(f, p.flat())) < 1e-4


def _quadratic_problem():
    spec = MlpSpec(input_dim=1, hidden_dims=(), embedding_dim=1, num_classes=1)
    return spec, np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([1.0, -2.0])


def _as_params(spec, w):
    return MlpParams(spec, [np.asarray(w, dtype=float)[None, :]], [np.zeros(1)])


def test_adam_zero_gradient_keeps_params():
    p = init_params(small_spec())
    new, state = optimizer_step(p, p.zeros_like(), init_optimizer(p), 1e-3)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), new.arrays()))
    assert state.t == 1


def test_adam_descends_on_square():
    spec = MlpSpec(input_dim=1, hidden_dims=(), embedding_dim=1, num_classes=1)
    p = MlpParams(spec, [np.array([[1.0]])], [np.zeros(1)])
    grad = MlpParams(spec, [np.array([[2.0]])], [np.zeros(1)])
    new, _ = optimizer_step(p, grad, init_optimizer(p), 0.1)
    assert abs(new.weights[0][0, 0]) < 1.0


def test_adam_converges_on_convex_quadratic():
    spec, q, c = _quadratic_problem()
    p = _as_params(spec, [3.0, -1.0])
    state = init_optimizer(p)
    for _ in range(200):
        w = p.weights[0][0]
        p, state = optimizer_step(p, _as_params(spec, q @ w - c), state, 0.05)
    w = p.weights[0][0]
    assert np.linalg.norm(q @ w - c) < 1e-3


def test_training_separable_gaussians_reaches_zero_error():
    r = np.random.default_rng(0)
    x = np.vstack([r.normal(-2, 0.5, size=(50, 2)), r.normal(2, 0.5, size=(50, 2))])
    y = np.repeat([0, 1], 50)
    p = init_params(MlpSpec(input_dim=2, hidden_dims=(8,), embedding_dim=8, num_classes=2, seed=1))
    state = init_optimizer(p)
    for step in range(2000):
        _, grads = classification_loss_and_grads(forward(p, x), p, y)
        p, state = optimizer_step(p, grads, state, 1e-2)
        if error_pct(p, x, y) == 0.0:
            break
    assert error_pct(p, x, y) == 0.0


def test_checkpoint_round_trip_is_exact(tmp_path):
    p = init_params(small_spec(3, "relu"))
    p.biases = [b + 1 / 3 for b in p.biases]
    path = tmp_path / "ckpt"
    save_checkpoint(p, path)
    q = load_checkpoint(path)
    assert q.spec == p.spec
    assert np.array_equal(p.flat(), q.flat())
    first = path.read_bytes()
    save_checkpoint(q, path)
    assert path.read_bytes() == first


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad"
    path.write_text("hello\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)
