import math

import numpy as np
import pytest

from risjam.nn import (AdamState, DenseNet, GradientSet, NonFiniteGradientError,
                       backward, forward, init_dense_net, load_net,
                       optimizer_step, polyak_blend, save_net)


def random_net(rng, sizes=(3, 4, 2), acts=("relu", "identity"), scale=1.0):
    return init_dense_net(sizes, acts, rng, sigmoid_scale=scale)


def flatten_params(net):
    return np.concatenate([w.ravel() for w in net.weights]
                          + [b.ravel() for b in net.biases])


class TestForward:
    def test_zero_net_outputs_zero(self):
        net = DenseNet(sizes=(2, 3), weights=[np.zeros((3, 2))],
                       biases=[np.zeros(3)], activations=("identity",))
        assert np.all(forward(net, np.ones(2)) == 0.0)

    def test_identity_single_layer(self):
        net = DenseNet(sizes=(3, 3), weights=[np.eye(3)], biases=[np.zeros(3)],
                       activations=("identity",))
        x = np.array([0.3, -1.0, 2.0])
        assert np.allclose(forward(net, x), x)

    def test_matches_per_neuron_loops(self):
        rng = np.random.default_rng(0)
        net = random_net(rng)
        x = rng.standard_normal(3)
        # naive scalar evaluation
        h = np.empty(4)
        for i in range(4):
            z = sum(net.weights[0][i, j] * x[j] for j in range(3)) + net.biases[0][i]
            h[i] = max(z, 0.0)
        out = np.empty(2)
        for i in range(2):
            out[i] = sum(net.weights[1][i, j] * h[j] for j in range(4)) + net.biases[1][i]
        assert np.allclose(forward(net, x), out, rtol=1e-14)

    def test_sigmoid_head_bounds(self):
        rng = np.random.default_rng(1)
        net = random_net(rng, sizes=(3, 8, 5), acts=("relu", "sigmoid_scaled"),
                         scale=2 * math.pi)
        for _ in range(20):
            out = forward(net, rng.standard_normal(3) * 10)
            assert np.all(out > 0.0) and np.all(out < 2 * math.pi)

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(2)
        net = random_net(rng)
        xs = rng.standard_normal((5, 3))
        batched = forward(net, xs)
        for i in range(5):
            assert np.allclose(batched[i], forward(net, xs[i]))

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            forward(random_net(rng), np.ones(5))


def fd_gradients(net, x, upstream, h=1e-5):
    """Central finite differences of sum(forward(net, x) * upstream)."""
    def value():
        return float(np.sum(forward(net, x) * upstream))

    grads_w, grads_b = [], []
    for w in net.weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = value()
            w[idx] = orig - h
            down = value()
            w[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads_w.append(g)
    for b in net.biases:
        g = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + h
            up = value()
            b[idx] = orig - h
            down = value()
            b[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads_b.append(g)
    return grads_w, grads_b


def assert_close_to_fd(analytic, numeric, rel=1e-4):
    for a, n in zip(analytic, numeric):
        assert np.all(np.abs(a - n) <= rel * np.maximum(1.0, np.abs(n)))


def relu_safe_input(net, rng, margin=1e-3):
    # keep pre-activations away from the kink so differences stay smooth
    from risjam.nn import _forward_cached
    for _ in range(200):
        x = rng.standard_normal(net.in_dim)
        _, caches, _ = _forward_cached(net, x)
        if all(np.min(np.abs(z)) > margin for _, z, _ in caches[:-1]):
            return x
    raise AssertionError("could not find a kink-free input")


class TestBackward:
    def test_linear_row_gradient(self):
        net = DenseNet(sizes=(3, 2), weights=[np.zeros((2, 3))],
                       biases=[np.zeros(2)], activations=("identity",))
        x = np.array([1.0, 2.0, 3.0])
        g = backward(net, x, np.array([1.0, 0.0]))
        assert np.allclose(g.d_weights[0][0], x)
        assert np.allclose(g.d_weights[0][1], 0.0)
        assert np.allclose(g.d_biases[0], [1.0, 0.0])

    def test_dead_relu_blocks_gradient(self):
        net = DenseNet(sizes=(1, 1, 1), weights=[np.array([[1.0]]), np.array([[1.0]])],
                       biases=[np.array([-5.0]), np.array([0.0])],
                       activations=("relu", "identity"))
        g = backward(net, np.array([1.0]), np.array([1.0]))
        assert g.d_weights[0][0, 0] == 0.0           # unit is dead at x = 1
        assert g.d_input[0] == 0.0

    @pytest.mark.parametrize("acts,scale", [
        (("relu", "identity"), 1.0),
        (("relu", "sigmoid_scaled"), 2 * math.pi),
        (("sigmoid_scaled", "identity"), 1.0),
    ])
    def test_matches_finite_differences(self, acts, scale):
        rng = np.random.default_rng(4)
        for _ in range(12):
            net = random_net(rng, sizes=(3, 5, 2), acts=acts, scale=scale)
            x = relu_safe_input(net, rng) if "relu" in acts else rng.standard_normal(3)
            upstream = rng.standard_normal(2)
            g = backward(net, x, upstream)
            fw, fb = fd_gradients(net, x, upstream)
            assert_close_to_fd(g.d_weights, fw)
            assert_close_to_fd(g.d_biases, fb)

    def test_input_gradient_matches_fd(self):
        rng = np.random.default_rng(5)
        net = random_net(rng, acts=("sigmoid_scaled", "identity"))
        x = rng.standard_normal(3)
        upstream = rng.standard_normal(2)
        g = backward(net, x, upstream)
        h = 1e-6
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            num = (np.sum(forward(net, xp) * upstream)
                   - np.sum(forward(net, xm) * upstream)) / (2 * h)
            assert g.d_input[j] == pytest.approx(num, rel=1e-5, abs=1e-8)

    def test_batch_sums_over_rows(self):
        rng = np.random.default_rng(6)
        net = random_net(rng, acts=("sigmoid_scaled", "identity"))
        xs = rng.standard_normal((4, 3))
        up = rng.standard_normal((4, 2))
        g_batch = backward(net, xs, up)
        acc_w = [np.zeros_like(w) for w in net.weights]
        for i in range(4):
            gi = backward(net, xs[i], up[i])
            for a, b in zip(acc_w, gi.d_weights):
                a += b
        for a, b in zip(acc_w, g_batch.d_weights):
            assert np.allclose(a, b, rtol=1e-12)


def reference_adam(params, grads, lr, b1=0.9, b2=0.999, eps=1e-8, steps=None):
    """Scalar reference trace of the update recurrence."""
    m = [0.0] * len(params)
    v = [0.0] * len(params)
    p = list(params)
    for t, g_t in enumerate(grads, start=1):
        for i, g in enumerate(g_t):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            p[i] -= lr * mhat / (math.sqrt(vhat) + eps)
    return p


class TestOptimizer:
    def scalar_net(self, w0):
        return DenseNet(sizes=(1, 1), weights=[np.array([[w0]])],
                        biases=[np.array([0.0])], activations=("identity",))

    def test_zero_gradient_keeps_params(self):
        net = self.scalar_net(0.7)
        opt = AdamState.for_net(net, learning_rate=0.1)
        g = GradientSet(d_weights=[np.zeros((1, 1))], d_biases=[np.zeros(1)],
                        d_input=np.zeros(1))
        optimizer_step(net, g, opt)
        assert net.weights[0][0, 0] == 0.7
        assert opt.step_count == 1

    def test_determinism(self):
        rng = np.random.default_rng(7)
        nets = [random_net(np.random.default_rng(9)) for _ in range(2)]
        opts = [AdamState.for_net(n, 1e-3) for n in nets]
        g = backward(nets[0], rng.standard_normal(3), rng.standard_normal(2))
        for net, opt in zip(nets, opts):
            optimizer_step(net, g, opt)
        assert np.array_equal(flatten_params(nets[0]), flatten_params(nets[1]))

    def test_matches_scalar_recurrence(self):
        # hand-rolled reference of the adaptive-moment recurrence
        net = self.scalar_net(1.0)
        opt = AdamState.for_net(net, learning_rate=0.05)
        grad_seq = [0.3, -0.8, 0.1, 0.9, -0.2]
        for g in grad_seq:
            gs = GradientSet(d_weights=[np.array([[g]])], d_biases=[np.zeros(1)],
                             d_input=np.zeros(1))
            optimizer_step(net, gs, opt)
        ref = reference_adam([1.0], [[g] for g in grad_seq], lr=0.05)
        assert net.weights[0][0, 0] == pytest.approx(ref[0], abs=1e-15)

    def test_rejects_non_finite(self):
        net = self.scalar_net(1.0)
        opt = AdamState.for_net(net, 0.1)
        g = GradientSet(d_weights=[np.array([[np.inf]])], d_biases=[np.zeros(1)],
                        d_input=np.zeros(1))
        with pytest.raises(NonFiniteGradientError):
            optimizer_step(net, g, opt)
        assert opt.step_count == 0


class TestPolyak:
    def test_rho_one_copies(self):
        rng = np.random.default_rng(8)
        online, target = random_net(rng), random_net(rng)
        polyak_blend(target, online, 1.0)
        assert np.array_equal(flatten_params(target), flatten_params(online))

    def test_rho_zero_freezes(self):
        rng = np.random.default_rng(9)
        online, target = random_net(rng), random_net(rng)
        before = flatten_params(target).copy()
        polyak_blend(target, online, 0.0)
        assert np.array_equal(flatten_params(target), before)

    def test_small_rho_value(self):
        online = DenseNet(sizes=(1, 1), weights=[np.array([[1.0]])],
                          biases=[np.array([1.0])], activations=("identity",))
        target = DenseNet(sizes=(1, 1), weights=[np.array([[0.0]])],
                          biases=[np.array([0.0])], activations=("identity",))
        polyak_blend(target, online, 5e-3)
        assert target.weights[0][0, 0] == pytest.approx(0.005, rel=1e-12)

    def test_architecture_mismatch(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ValueError):
            polyak_blend(random_net(rng), random_net(rng, sizes=(3, 5, 2)), 0.5)


class TestSaveLoad:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        net = random_net(rng, sizes=(4, 7, 3), acts=("relu", "sigmoid_scaled"),
                         scale=2 * math.pi)
        path = tmp_path / "net.bin"
        save_net(net, path)
        loaded = load_net(path)
        assert loaded.sizes == net.sizes
        assert loaded.activations == net.activations
        assert loaded.sigmoid_scale == net.sigmoid_scale
        assert np.array_equal(flatten_params(loaded), flatten_params(net))

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a net")
        with pytest.raises(ValueError):
            load_net(path)
