import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference, max_relative_error
from inrquant import net
from inrquant.errors import ConfigurationError, TrainingFault
from inrquant.net import AdamState, NetworkArch, WeightSet


def loop_forward(arch, ws, coords):
    """Scalar-loop reference forward pass."""
    out = []
    for x in coords:
        h = [float(v) for v in x]
        if arch.num_frequencies:
            enc = []
            for v in h:
                for j in range(arch.num_frequencies):
                    enc += [math.sin(2**j * math.pi * v), math.cos(2**j * math.pi * v)]
            h = enc
        for li, (W, b) in enumerate(zip(ws.weights, ws.biases)):
            z = [sum(h[i] * W[i][o] for i in range(len(h))) + b[o] for o in range(W.shape[1])]
            if li == len(ws.weights) - 1:
                h = z
            elif arch.activation == "sine":
                h = [math.sin(arch.omega * v) for v in z]
            elif arch.activation == "relu":
                h = [max(v, 0.0) for v in z]
            else:
                h = [math.exp(-v * v / (2 * arch.sigma**2)) for v in z]
        out.append(h)
    return np.array(out)


def test_zero_weights_give_zero_output(rng):
    arch = NetworkArch(2, 8)
    ws = net.init_weights(arch, rng).zeros_like()
    assert np.all(net.forward(arch, ws, rng.uniform(-1, 1, (10, 2))) == 0)


def test_sine_of_zero_propagates():
    arch = NetworkArch(hidden_layers=1, hidden_width=1, input_dim=1, output_dim=1)
    ws = WeightSet([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    assert net.forward(arch, ws, np.zeros((1, 1)))[0, 0] == 0.0


@pytest.mark.parametrize("activation", ["sine", "relu", "gaussian"])
@pytest.mark.parametrize("shape", [(0, 3), (1, 3), (2, 5)])
def test_forward_matches_loop_oracle(rng, activation, shape):
    arch = NetworkArch(shape[0], shape[1], activation=activation, output_dim=1 if shape == (1, 3) else 2)
    ws = net.init_weights(arch, rng)
    coords = rng.uniform(-1, 1, (7, 2))
    got = net.forward(arch, ws, coords)
    ref = loop_forward(arch, ws, coords)
    assert got.shape == (7, arch.output_dim)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-14)


def test_forward_with_positional_encoding_matches_oracle(rng):
    arch = NetworkArch(1, 6, activation="relu", num_frequencies=3)
    ws = net.init_weights(arch, rng)
    coords = rng.uniform(-1, 1, (5, 2))
    np.testing.assert_allclose(net.forward(arch, ws, coords), loop_forward(arch, ws, coords), rtol=1e-12, atol=1e-14)


def test_forward_shape_mismatch(rng):
    arch = NetworkArch(1, 4)
    ws = net.init_weights(arch, rng)
    with pytest.raises(ConfigurationError):
        net.forward(arch, ws, np.zeros((3, 3)))
    bad = WeightSet(ws.weights[:1], ws.biases[:1])
    with pytest.raises(ConfigurationError):
        net.forward(arch, bad, np.zeros((3, 2)))


def test_forward_is_deterministic(rng):
    arch = NetworkArch(2, 16)
    ws = net.init_weights(arch, rng)
    c = rng.uniform(-1, 1, (50, 2))
    assert np.array_equal(net.forward(arch, ws, c), net.forward(arch, ws, c))


def test_float32_weights_evaluate_in_float32(rng):
    arch = NetworkArch(1, 4)
    ws = net.init_weights(arch, rng).astype(np.float32)
    assert net.forward(arch, ws, np.zeros((2, 2))).dtype == np.float32


class TestPositionalEncoding:
    def test_zero_input_alternates(self):
        out = net.positional_encode(np.zeros(2), 3)
        np.testing.assert_array_equal(out, [0, 1] * 6)

    def test_dimension(self):
        assert net.positional_encode(np.zeros((5, 2)), 4).shape == (5, 16)

    def test_half(self):
        out = net.positional_encode(np.array([0.5]), 1)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-15)

    def test_rejects_zero_frequencies(self):
        with pytest.raises(ConfigurationError):
            net.positional_encode(np.zeros(2), 0)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=4), st.integers(1, 6))
    def test_pairs_have_unit_norm(self, xs, nf):
        out = net.positional_encode(np.array(xs), nf).reshape(-1, 2)
        np.testing.assert_allclose((out**2).sum(axis=1), 1.0, rtol=1e-12)


def _small_problem(rng, activation, hidden=2, width=4, n=12, out=2):
    arch = NetworkArch(hidden, width, activation=activation, output_dim=out)
    ws = net.init_weights(arch, rng)
    coords = rng.uniform(-1, 1, (n, 2))
    targets = rng.uniform(-1, 1, (n, out))
    return arch, ws, coords, targets


@pytest.mark.parametrize("activation", ["sine", "relu", "gaussian"])
@pytest.mark.parametrize("loss", ["mse", "log10_mse"])
def test_backward_matches_finite_differences(rng, activation, loss):
    arch, ws, coords, targets = _small_problem(rng, activation)
    value, grads = net.backward(arch, ws, coords, targets, loss)
    assert value == pytest.approx(net.loss_value(net.forward(arch, ws, coords), targets, loss), rel=1e-14)
    numeric = finite_difference(
        lambda: net.loss_value(net.forward(arch, ws, coords), targets, loss), ws.arrays()
    )
    assert max_relative_error(grads.arrays(), numeric, floor=1e-6) < 1e-4


def test_gradient_shapes_match_weights(rng):
    arch, ws, coords, targets = _small_problem(rng, "sine")
    _, grads = net.backward(arch, ws, coords, targets)
    assert [g.shape for g in grads.arrays()] == [a.shape for a in ws.arrays()]


def test_log10_gradient_is_scaled_mse_gradient(rng):
    arch, ws, coords, targets = _small_problem(rng, "relu")
    mse, g1 = net.backward(arch, ws, coords, targets, "mse")
    _, g2 = net.backward(arch, ws, coords, targets, "log10_mse")
    scale = 1.0 / (mse * math.log(10))
    for a, b in zip(g1.arrays(), g2.arrays()):
        np.testing.assert_allclose(b, a * scale, rtol=1e-12, atol=1e-300)


def test_perfect_fit_has_zero_gradient(rng):
    arch, ws, coords, _ = _small_problem(rng, "sine")
    targets = net.forward(arch, ws, coords)
    value, grads = net.backward(arch, ws, coords, targets)
    assert value == 0.0
    assert all(np.all(g == 0) for g in grads.arrays())


def test_single_linear_neuron_gradient():
    arch = NetworkArch(hidden_layers=0, input_dim=2, output_dim=1)
    w = np.array([[0.3], [-0.2]])
    ws = WeightSet([w], [np.array([0.1])])
    x = np.array([[0.5, -1.0]])
    t = np.array([[0.7]])
    _, grads = net.backward(arch, ws, x, t)
    pred = 0.5 * 0.3 + 0.2 + 0.1
    np.testing.assert_allclose(grads.weights[0][:, 0], 2 * (pred - t[0, 0]) * x[0], rtol=1e-14)
    np.testing.assert_allclose(grads.biases[0], [2 * (pred - t[0, 0])], rtol=1e-14)


def test_non_finite_loss_is_a_training_fault(rng):
    arch, ws, coords, targets = _small_problem(rng, "relu")
    ws.weights[0][0, 0] = np.inf
    with pytest.raises(TrainingFault):
        net.backward(arch, ws, coords, targets)


@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=10))
def test_log10_loss_orders_like_mse(mses):
    # the log loss is log10(mse): same ordering, same minimiser
    by_mse = sorted(range(len(mses)), key=lambda i: (mses[i], i))
    by_log = sorted(range(len(mses)), key=lambda i: (math.log10(mses[i]), i))
    assert by_mse == by_log


def test_log10_loss_and_mse_rank_weight_sets_identically(rng):
    arch, ws, coords, targets = _small_problem(rng, "sine")
    sets = [net.init_weights(arch, np.random.default_rng(s)) for s in range(8)]
    mse = [net.loss_value(net.forward(arch, w, coords), targets, "mse") for w in sets]
    lg = [net.loss_value(net.forward(arch, w, coords), targets, "log10_mse") for w in sets]
    assert np.argsort(mse).tolist() == np.argsort(lg).tolist()


def test_init_bounds(rng):
    arch = NetworkArch(2, 64)
    ws = net.init_weights(arch, rng)
    assert np.abs(ws.weights[0]).max() <= 1 / 2
    assert np.abs(ws.weights[1]).max() <= math.sqrt(6 / 64) / 30
    relu = net.init_weights(NetworkArch(2, 64, activation="relu"), rng)
    assert np.abs(relu.weights[1]).max() <= math.sqrt(6 / 64)


class TestAdam:
    def test_zero_gradient_no_decay_is_noop(self, rng):
        arch = NetworkArch(1, 4)
        ws = net.init_weights(arch, rng)
        state = AdamState.zeros(ws)
        new = net.adam_step(ws, ws.zeros_like(), state, weight_decay=0.0)
        assert new.equals(ws)

    def test_first_step_moves_by_lr_against_gradient(self, rng):
        arch = NetworkArch(1, 4)
        ws = net.init_weights(arch, rng)
        grads = WeightSet([rng.normal(size=w.shape) for w in ws.weights], [rng.normal(size=b.shape) for b in ws.biases])
        new = net.adam_step(ws, grads, AdamState.zeros(ws), lr=1e-3, weight_decay=0.0)
        for p, q, g in zip(ws.arrays(), new.arrays(), grads.arrays()):
            np.testing.assert_allclose(q - p, -1e-3 * np.sign(g), rtol=1e-6)

    def test_defaults(self):
        cfg = net.AdamConfig()
        assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay) == (1e-4, 0.99, 0.999, 1e-8)

    def test_matches_scalar_oracle_on_quadratic(self):
        lr, b1, b2, wd, eps = 0.05, 0.99, 0.999, 1e-3, 1e-8

        # independent scalar Adam on f(x) = (x - 3)^2
        x, m, v = 0.5, 0.0, 0.0
        ref = []
        for t in range(1, 11):
            g = 2 * (x - 3) + wd * x
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1**t)
            vh = v / (1 - b2**t)
            x = x - lr * mh / (math.sqrt(vh) + eps)
            ref.append(x)

        ws = WeightSet([np.array([[0.5]])], [np.array([0.0])])
        state = AdamState.zeros(ws)
        got = []
        for _ in range(10):
            g = WeightSet([2 * (ws.weights[0] - 3)], [np.zeros(1)])
            ws = net.adam_step(ws, g, state, lr, b1, b2, wd, eps)
            got.append(float(ws.weights[0][0, 0]))
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)
