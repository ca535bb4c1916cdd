import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blescope.core import Location, RssiWindow
from blescope.model import (
    RSSI_SCALE,
    Localizer,
    LocNet,
    LocNetConfig,
    LossWeights,
    TransNet,
    TransNetConfig,
    locnet_forward,
    loss_loc,
    loss_ps,
    loss_ssl,
    loss_ts,
    transnet_forward,
)
from blescope.nn import Tensor, check_gradients
from blescope.stats import StatMatrix
from conftest import APPLE
from oracles import ssl_bruteforce, ssl_instance


def _window(rng, b=4, h=5):
    return RssiWindow(rng.uniform(0, 40, size=(b, h)) * (rng.random((b, h)) < 0.7), APPLE, 7)


class TestLocalizationLosses:
    def test_loc_examples(self):
        assert loss_loc(Tensor([1.0, 2.0]), [1.0, 2.0]).data == 0.0
        assert loss_loc(Tensor([3.0, 4.0]), [0.0, 0.0]).data == 25.0

    def test_loc_gradient(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        loss_loc(p, [0.5, 0.5]).backward()
        assert_allclose(p.grad, 2 * (p.data - 0.5))

    def test_ps_examples(self):
        assert loss_ps(Tensor([1.0, 1.0]), Tensor([1.0, 1.0])).data == 0.0
        assert loss_ps(Tensor([1.0, 0.0]), Tensor([0.0, 0.0])).data == 1.0


class TestSsl:
    def test_zero_at_expected_statistics(self):
        cols = np.array([3.0, 7.0, 1.0])
        m = np.tile(cols, (3, 1))
        g = np.tile(cols[:, None], (1, 4))
        s = np.full((3, 4), 5.0)
        assert loss_ssl(Tensor(g), s, m, 0.1, mask=None).data == 0.0

    def test_worked_example(self):
        m = np.array([[10.0, 4.0], [6.0, 8.0]])
        s = np.array([[10.0], [0.0]])
        g = np.array([[10.0], [5.0]])
        value = float(loss_ssl(Tensor(g), s, m, 0.1, mask=None).data)
        # i=1: d = 0 + |4-5|; i=2 weight e^-80 times (|6-10| + (8-5)^2)
        assert value == pytest.approx(1.0 + np.exp(-80) * 13.0, rel=1e-15)
        assert value == ssl_bruteforce(g, s, m, 0.1)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_triple_loop(self, seed):
        rng = np.random.default_rng(seed)
        g, s, m, tau, mask = ssl_instance(rng)
        value = float(loss_ssl(Tensor(g), s, m, tau, mask).data)
        assert value == pytest.approx(ssl_bruteforce(g, s, m, tau, mask), rel=1e-9, abs=0)

    def test_batched_equals_per_window(self):
        rng = np.random.default_rng(1)
        items = [ssl_instance(rng, 3, 2) for _ in range(4)]
        m, tau, mask = items[0][2], items[0][3], items[0][4]
        g = np.stack([it[0] for it in items])
        s = np.stack([it[1] for it in items])
        batched = loss_ssl(Tensor(g), s, m, tau, mask).data
        single = [float(loss_ssl(Tensor(g[k]), s[k], m, tau, mask).data) for k in range(4)]
        assert_allclose(batched, single, rtol=1e-14)

    def test_stat_matrix_mask_applied(self):
        m = np.array([[5.0, 5.0], [0.0, 0.0]])
        sm = StatMatrix(m, np.array([[3, 3], [0, 0]]))
        s = np.array([[5.0], [9.0]])
        g = np.array([[1.0], [1.0]])
        masked = float(loss_ssl(Tensor(g), s, sm, 0.1).data)
        assert masked == pytest.approx(ssl_bruteforce(g, s, m, 0.1, sm.mask))
        assert float(loss_ssl(Tensor(g), s, sm, 0.1, mask=None).data) > masked

    def test_weight_cap_prevents_overflow(self):
        m = np.eye(2)
        s = np.full((2, 3), 500.0)
        g = Tensor(np.zeros((2, 3)), requires_grad=True)
        out = loss_ssl(g, s, m, 0.01, mask=None)
        assert np.isfinite(out.data)
        out.backward()
        assert np.all(np.isfinite(g.grad))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_ssl(Tensor(np.zeros((2, 3))), np.zeros((2, 2)), np.eye(2))

    def test_gradient_with_stat_matrix_input(self):
        rng = np.random.default_rng(2)
        g0, s, m, tau, mask = ssl_instance(rng, 4, 3, margin=1e-2)
        sm = StatMatrix(m, np.where(mask, 5, 0))
        g = Tensor(g0, requires_grad=True)
        loss_ssl(g, s, sm, tau).backward()
        err = check_gradients(lambda: float(loss_ssl(Tensor(g.data), s, sm, tau).data), [g.data], [g.grad])
        assert err < 1e-3


class TestTs:
    def test_examples(self):
        assert loss_ts(Tensor(np.full((3, 4), 2.0))).data == 0.0
        assert loss_ts(Tensor(np.array([[3.0, 5.0]]))).data == 2.0

    def test_homogeneous(self):
        g = np.random.default_rng(0).normal(size=(3, 5))
        assert loss_ts(Tensor(2 * g)).data == pytest.approx(2 * loss_ts(Tensor(g)).data)

    def test_single_step_history(self):
        assert loss_ts(Tensor(np.ones((3, 1)))).data == 0.0


class TestNetworks:
    def test_locnet_zero_parameters_returns_final_bias(self):
        net = LocNet(LocNetConfig(4, hidden=8, dense_hidden=6), np.random.default_rng(0))
        for p in net.parameters().values():
            p.data = np.zeros_like(p.data)
        net.fc2.bias.data = np.array([1.5, -2.0])
        loc = locnet_forward(net, _window(np.random.default_rng(1)))
        assert loc == Location(1.5, -2.0)

    def test_locnet_sensitive_to_time_order(self):
        rng = np.random.default_rng(4)
        net = LocNet(LocNetConfig(4, hidden=8, dense_hidden=6), rng)
        w = _window(rng)
        flipped = w.with_values(w.values[:, ::-1].copy())
        assert locnet_forward(net, w) != locnet_forward(net, flipped)

    def test_locnet_input_gradient(self):
        rng = np.random.default_rng(5)
        net = LocNet(LocNetConfig(3, hidden=5, dense_hidden=4), rng)
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        r = rng.normal(size=(2, 2))
        (net(x) * r).sum().backward()
        err = check_gradients(lambda: float((net(Tensor(x.data)) * r).sum().data), [x.data], [x.grad])
        assert err < 1e-3

    def test_transnet_starts_as_identity(self):
        net = TransNet(TransNetConfig(4), np.random.default_rng(0))
        w = _window(np.random.default_rng(2))
        assert_allclose(transnet_forward(net, w).values, w.values, rtol=1e-14)

    @pytest.mark.parametrize("h", [5, 8])
    def test_transnet_shape_and_non_negative(self, h):
        rng = np.random.default_rng(h)
        net = TransNet(TransNetConfig(4, zero_init_residual=False), rng)
        out = transnet_forward(net, _window(rng, 4, h))
        assert out.values.shape == (4, h)
        assert out.values.min() >= 0

    def test_transnet_parameter_count(self):
        net = TransNet(TransNetConfig(12), np.random.default_rng(0))
        sizes = [12, 64, 32, 16, 32, 64, 12]
        expected = sum(sizes[k] * sizes[k + 1] * 3 + sizes[k + 1] for k in range(6))
        assert sum(p.size for p in net.parameters().values()) == expected


class TestLocalizer:
    def test_forward_scales_inputs(self):
        loc = Localizer.build(3, seed=0, with_transnet=True, hidden=4, dense_hidden=3, channels=(4, 3, 2))
        x, g, pred = loc.forward(np.full((2, 3, 5), 50.0))
        assert_allclose(x.data, 50.0 * RSSI_SCALE)
        assert_allclose(g.data, x.data)
        assert pred.shape == (2, 2)

    def test_output_affine(self):
        a = Localizer.build(3, seed=0, with_transnet=False, hidden=4, dense_hidden=3)
        b = Localizer.build(3, seed=0, with_transnet=False, hidden=4, dense_hidden=3, out_offset=(10, 5),
                            out_scale=2.0)
        x = np.random.default_rng(0).uniform(0, 30, (4, 3, 5))
        assert_allclose(b.predict(x), a.predict(x) * 2 + [10, 5], rtol=1e-12)

    def test_same_seed_same_locnet_with_or_without_transnet(self):
        a = Localizer.build(3, seed=7, with_transnet=False, hidden=4, dense_hidden=3)
        b = Localizer.build(3, seed=7, with_transnet=True, hidden=4, dense_hidden=3, channels=(4, 3, 2))
        x = np.random.default_rng(0).uniform(0, 30, (4, 3, 5))
        assert_array_equal(a.predict(x), b.predict(x))

    def test_save_load(self, tmp_path):
        loc = Localizer.build(3, seed=1, with_transnet=True, hidden=4, dense_hidden=3, channels=(4, 3, 2),
                              out_offset=(1.0, 2.0), out_scale=3.0)
        loc.save(tmp_path / "m.npz")
        back = Localizer.load(tmp_path / "m.npz")
        x = np.random.default_rng(0).uniform(0, 30, (4, 3, 5))
        assert_array_equal(back.predict(x), loc.predict(x))

    def test_predict_batches_match(self):
        loc = Localizer.build(3, seed=1, with_transnet=True, hidden=4, dense_hidden=3, channels=(4, 3, 2))
        x = np.random.default_rng(0).uniform(0, 30, (9, 3, 5))
        assert_allclose(loc.predict(x, batch_size=2), loc.predict(x), rtol=1e-13)


class TestLossWeights:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossWeights(tau=0)
        with pytest.raises(ValueError):
            LossWeights(w_ps=-1)
