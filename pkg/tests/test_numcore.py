import numpy as np
import pytest

from l3dg import numcore as nc
from l3dg.numcore import nn

from helpers import check_gradients


def test_backward_polynomial():
    x = nc.Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_backward_constant_has_zero_grads():
    x = nc.Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    loss = (x * 0.0).sum() + 3.0
    loss.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0])


def test_backward_rejects_nonscalar():
    x = nc.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (x * x).backward()


def test_backward_accumulates_without_reset():
    x = nc.Tensor([3.0], requires_grad=True, dtype=np.float64)
    loss = (x * x).sum()
    loss.backward()
    loss.backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_shared_subexpression_grad():
    x = nc.Tensor([2.0], requires_grad=True, dtype=np.float64)
    y = x * x
    (y + y).sum().backward()
    np.testing.assert_allclose(x.grad, [8.0])


@pytest.mark.parametrize("seed", range(5))
def test_composite_graph_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    c = rng.standard_normal((3, 2))

    def build(ts):
        a, b, c = ts
        h = nc.tanh(a @ b + c)
        h = nc.sigmoid(h) * nc.texp(0.1 * h)
        return (h * h).mean() + nc.tabs(h).sum() * 0.01

    check_gradients(build, [a, b, c])


def test_reduction_and_shape_op_grads():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 4))

    def build(ts):
        (t,) = ts
        u = t.mean(axis=1).reshape(8)
        v = nc.concat([u, u * 2.0]).sum()
        w = t.transpose((2, 0, 1))[1:, :, :2].sum()
        return v + w

    check_gradients(build, [x])


def test_gather_scatter_grads():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 3))
    idx = np.array([0, 2, 2, 4])

    def build(ts):
        (t,) = ts
        g = nc.gather_rows(t, idx)
        s = nc.scatter_rows_add(g * 1.5, np.array([1, 0, 3, 2]), 6)
        return (s * s).sum()

    check_gradients(build, [x])


def test_softmax_rows_sum_to_one_and_grad():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 7))
    s = nc.softmax(nc.Tensor(x, dtype=np.float64), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(4), atol=1e-12)

    def build(ts):
        return (nc.softmax(ts[0], axis=-1) * nc.Tensor(np.arange(7.0))).sum()

    check_gradients(build, [x])


def test_determinism_same_seed_bitwise():
    def run():
        rng = np.random.default_rng(42)
        x = nc.randn(rng, (16, 16), dtype=np.float64, requires_grad=True)
        y = nc.tanh(x @ x) * nc.sigmoid(x)
        loss = (y * y).mean()
        loss.backward()
        return y.data.copy(), x.grad.copy()

    y1, g1 = run()
    y2, g2 = run()
    assert np.array_equal(y1, y2)
    assert np.array_equal(g1, g2)


def test_mixed_dtype_rejected():
    a = nc.Tensor([1.0], dtype=np.float32)
    b = nc.Tensor([1.0], dtype=np.float64)
    with pytest.raises(TypeError):
        a + b


def test_no_grad_blocks_taping():
    x = nc.Tensor([1.0], requires_grad=True)
    with nc.no_grad():
        y = x * x
    assert not y.requires_grad


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = nc.Tensor([1.0, -2.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_constant_gradient_moves_against_sign(self):
        p = nc.Tensor([0.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p], lr=0.01)
        for _ in range(50):
            p.grad = np.array([3.0])
            opt.step()
        assert p.data[0] < 0

    def test_two_steps_match_hand_recurrence(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = nc.Tensor([1.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p], lr=lr, betas=(b1, b2), eps=eps)
        grads = [0.5, -0.25]

        # hand-rolled recurrence
        theta, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1**t)
            vh = v / (1 - b2**t)
            theta -= lr * mh / (np.sqrt(vh) + eps)

        for g in grads:
            p.grad = np.array([g])
            opt.step()
            p.zero_grad()
        np.testing.assert_allclose(p.data, [theta], rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        p = nc.Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p])
        p.grad = np.zeros(3)
        with pytest.raises(ValueError):
            opt.step()

    def test_replace_param_carries_moments(self):
        p = nc.Tensor([1.0, 2.0, 3.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p], lr=0.1)
        p.grad = np.array([1.0, 2.0, 3.0])
        opt.step()
        m_before = opt.state[id(p)].m.copy()
        q = nc.Tensor([2.0, 3.0, 0.0], requires_grad=True, dtype=np.float64)
        opt.replace_param(p, q, keep_rows=np.array([1, 2, -1]))
        st = opt.state[id(q)]
        np.testing.assert_allclose(st.m[:2], m_before[1:])
        assert st.m[2] == 0.0

    def test_lr_decay(self):
        p = nc.Tensor([1.0], requires_grad=True, dtype=np.float64)
        opt = nc.Adam([p], lr=1.0, lr_decay=0.5)
        opt.decay_epoch()
        assert opt.lr == 0.5


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        tensors = {
            "enc.w": rng.standard_normal((3, 4, 5)).astype(np.float32),
            "enc.b": rng.standard_normal(7).astype(np.float64),
            "scalar": np.array(2.5, dtype=np.float32),
        }
        path = tmp_path / "model.l3dgtnsr"
        nc.save_tensors(path, tensors)
        loaded = nc.load_tensors(path)
        assert set(loaded) == set(tensors)
        for k in tensors:
            assert loaded[k].dtype == tensors[k].dtype
            np.testing.assert_array_equal(loaded[k], tensors[k])

    def test_magic_enforced(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError):
            nc.load_tensors(path)


class TestNN:
    def test_conv3d_matches_direct_loop(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 2, 4, 4, 4))
        w = rng.standard_normal((3, 2, 3, 3, 3))
        b = rng.standard_normal(3)
        out = nn.conv3d(
            nc.Tensor(x, dtype=np.float64),
            nc.Tensor(w, dtype=np.float64),
            nc.Tensor(b, dtype=np.float64),
        ).data

        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
        ref = np.zeros_like(out)
        for o in range(3):
            for d in range(4):
                for h in range(4):
                    for ww in range(4):
                        acc = b[o]
                        for c in range(2):
                            for kd in range(3):
                                for kh in range(3):
                                    for kw in range(3):
                                        acc += w[o, c, kd, kh, kw] * xp[0, c, d + kd, h + kh, ww + kw]
                        ref[0, o, d, h, ww] = acc
        np.testing.assert_allclose(out, ref, atol=1e-10)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_conv3d_grad(self, stride):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 4, 4, 4))
        w = rng.standard_normal((2, 3, 3, 3, 3))
        b = rng.standard_normal(2)

        def build(ts):
            return (nn.conv3d(ts[0], ts[1], ts[2], stride=stride) ** 2).mean()

        check_gradients(build, [x, w, b])

    def test_conv2d_grad(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))

        def build(ts):
            return nn.conv2d(ts[0], ts[1], stride=1).sum()

        check_gradients(build, [x, w])

    def test_conv2d_window_valid_shape_and_grad(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((8, 9, 3))
        win = rng.standard_normal((3, 3))
        y = nn.conv2d_window(nc.Tensor(x, dtype=np.float64), win)
        assert y.shape == (6, 7, 3)

        def build(ts):
            return (nn.conv2d_window(ts[0], win) ** 2).sum()

        check_gradients(build, [x])

    def test_upsample_then_pool_identity(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((1, 2, 3, 3, 3))
        up = nn.upsample_nearest3d(nc.Tensor(x, dtype=np.float64))
        assert up.shape == (1, 2, 6, 6, 6)

        def build(ts):
            return (nn.upsample_nearest3d(ts[0]) ** 2).sum()

        check_gradients(build, [x])

    def test_group_norm_stats_and_grad(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 8, 3, 3, 3))
        gamma = np.ones(8)
        beta = np.zeros(8)
        out = nn.group_norm(
            nc.Tensor(x, dtype=np.float64),
            4,
            nc.Tensor(gamma, dtype=np.float64),
            nc.Tensor(beta, dtype=np.float64),
        )
        grouped = out.data.reshape(2, 4, -1)
        np.testing.assert_allclose(grouped.mean(axis=2), 0.0, atol=1e-10)
        np.testing.assert_allclose(grouped.std(axis=2), 1.0, atol=1e-4)

        def build(ts):
            return (nn.group_norm(ts[0], 4, ts[1], ts[2]) ** 3).mean()

        check_gradients(build, [x, gamma, beta])

    def test_module_state_dict_roundtrip(self):
        rng = np.random.default_rng(10)

        class Net(nn.Module):
            def __init__(self):
                super().__init__()
                self.fc1 = nn.Linear(4, 8, rng)
                self.fc2 = nn.Linear(8, 2, rng)
                self.register_buffer("running", np.arange(3.0))

        net = Net()
        state = net.state_dict()
        assert "fc1.weight" in state and "running!buf" in state

        net2 = Net()
        net2.load_state_dict(state)
        np.testing.assert_array_equal(net2.fc1.weight.data, net.fc1.weight.data)
        np.testing.assert_array_equal(net2._buffers["running"], np.arange(3.0))

    def test_timestep_embedding_shape(self):
        emb = nn.timestep_embedding(np.array([0, 1, 5]), 16)
        assert emb.shape == (3, 16)
        assert not np.array_equal(emb[0], emb[1])
