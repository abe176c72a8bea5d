"""Network blocks: forward oracles, autodiff, Adam."""

import numpy as np
import pytest

from palmspin.errors import ContractError, DimensionError, NonFiniteError
from palmspin.nn import (
    ConvDepthSpec,
    MLPSpec,
    ParameterSet,
    PointSetSpec,
    Tensor,
    TransformerSpec,
    adam_step,
    conv_encode_depth,
    init_conv_depth,
    init_mlp,
    init_pointset,
    init_transformer,
    mlp_forward,
    pointset_encode,
    tensor as T,
    transformer_encode,
)


def _np_elu(x):
    return np.where(x > 0, x, np.expm1(x))


class TestMLP:
    def test_zero_weights_give_bias(self):
        spec = MLPSpec(in_dim=3, widths=[4], activation="none")
        ps = ParameterSet(dtype=np.float64)
        init_mlp(ps, "m", spec, np.random.default_rng(0))
        ps["m.0.w"].data[:] = 0.0
        ps["m.0.b"].data[:] = [1.0, -2.0, 3.0, 0.5]
        out = mlp_forward(ps, np.random.default_rng(1).standard_normal((5, 3)), spec, "m")
        assert np.array_equal(out.data, np.tile([1.0, -2.0, 3.0, 0.5], (5, 1)))

    def test_identity_layer(self):
        spec = MLPSpec(in_dim=3, widths=[3], activation="none")
        ps = ParameterSet(dtype=np.float64)
        init_mlp(ps, "m", spec, np.random.default_rng(0))
        ps["m.0.w"].data[:] = np.eye(3)
        ps["m.0.b"].data[:] = 0.0
        x = np.random.default_rng(2).standard_normal((4, 3))
        assert np.array_equal(mlp_forward(ps, x, spec, "m").data, x)

    def test_two_layer_matches_numpy_reference(self):
        spec = MLPSpec(in_dim=3, widths=[5, 2], activation="elu")
        ps = ParameterSet(dtype=np.float64)
        init_mlp(ps, "m", spec, np.random.default_rng(3))
        x = np.random.default_rng(4).standard_normal(3)
        w0, b0 = ps["m.0.w"].data, ps["m.0.b"].data
        w1, b1 = ps["m.1.w"].data, ps["m.1.b"].data
        ref = _np_elu(x @ w0 + b0) @ w1 + b1
        np.testing.assert_allclose(mlp_forward(ps, x, spec, "m").data, ref, rtol=1e-12)

    def test_shape_mismatch_names_layer(self):
        spec = MLPSpec(in_dim=3, widths=[4])
        ps = ParameterSet()
        init_mlp(ps, "m", spec, np.random.default_rng(0))
        with pytest.raises(DimensionError, match="layer 0"):
            mlp_forward(ps, np.zeros((2, 7)), spec, "m")


class TestPointSet:
    def _net(self, seed=0):
        spec = PointSetSpec()
        ps = ParameterSet(dtype=np.float64)
        init_pointset(ps, "p", spec, np.random.default_rng(seed))
        return ps, spec

    def test_permutation_invariant_bitwise(self):
        ps, spec = self._net()
        pts = np.random.default_rng(1).standard_normal((20, 3))
        a = pointset_encode(ps, pts, spec, "p").data
        b = pointset_encode(ps, pts[::-1].copy(), spec, "p").data
        assert np.array_equal(a, b)

    def test_repeated_point_equals_single(self):
        # equality is exact in real arithmetic; the two calls hit different
        # BLAS kernels (1-row vs 17-row gemm), so compare at 1 ulp scale
        ps, spec = self._net()
        pt = np.array([0.3, -0.1, 0.7])
        one = pointset_encode(ps, pt[None, :], spec, "p").data
        many = pointset_encode(ps, np.tile(pt, (17, 1)), spec, "p").data
        np.testing.assert_allclose(one, many, rtol=1e-14, atol=1e-15)

    def test_dominating_point_wins(self):
        # run the per-point MLP separately; if A dominates B featurewise the
        # pooled code must equal A's feature row
        ps, spec = self._net()
        rng = np.random.default_rng(5)
        for _ in range(200):
            pts = rng.standard_normal((2, 3))
            feats = mlp_forward(ps, pts, spec.mlp, "p").data
            if np.all(feats[0] >= feats[1]):
                pooled = pointset_encode(ps, pts, spec, "p").data
                assert np.array_equal(pooled, feats[0])
                break
        else:
            pytest.skip("no dominating pair sampled")

    def test_empty_rejected(self):
        ps, spec = self._net()
        with pytest.raises(ContractError):
            pointset_encode(ps, np.zeros((0, 3)), spec, "p")


class TestConvDepth:
    def test_zero_image_zero_bias_gives_zero(self):
        spec = ConvDepthSpec()
        ps = ParameterSet(dtype=np.float64)
        init_conv_depth(ps, "c", spec, np.random.default_rng(0))
        out = conv_encode_depth(ps, np.zeros((60, 60)), spec, "c")
        assert out.shape == (32,)
        assert np.array_equal(out.data, np.zeros(32))

    def test_constant_image_matches_single_pixel_response(self):
        # pad 0 / stride 1 keeps every output position interior, so GAP of a
        # constant image equals the one-pixel closed form
        spec = ConvDepthSpec(resolution=6, channels=[4, 3], stride=1, pad=0)
        ps = ParameterSet(dtype=np.float64)
        init_conv_depth(ps, "c", spec, np.random.default_rng(1))
        c = 0.37
        out = conv_encode_depth(ps, np.full((6, 6), c), spec, "c").data
        h = np.full(4, 0.0)
        w0, b0 = ps["c.0.w"].data, ps["c.0.b"].data
        h = _np_elu(c * w0.sum(axis=(1, 2, 3)) + b0)
        w1, b1 = ps["c.1.w"].data, ps["c.1.b"].data
        ref = _np_elu((w1 * h[None, :, None, None]).sum(axis=(1, 2, 3)) + b1)
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_wrong_resolution_rejected(self):
        spec = ConvDepthSpec()
        ps = ParameterSet()
        init_conv_depth(ps, "c", spec, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            conv_encode_depth(ps, np.zeros((59, 60)), spec, "c")


class TestTransformer:
    def _net(self, seed=0, **kw):
        spec = TransformerSpec(**kw)
        ps = ParameterSet(dtype=np.float64)
        init_transformer(ps, "t", spec, np.random.default_rng(seed))
        return ps, spec

    def test_single_token_closed_form(self):
        # with k=1 softmax over one element is 1, so attention reduces to the
        # v/o projections; replicate both blocks in plain numpy
        ps, spec = self._net(seed=3)
        x = np.random.default_rng(4).standard_normal((1, 32))

        def ln(v, g, b, eps=1e-5):
            mu = v.mean(-1, keepdims=True)
            var = v.var(-1, keepdims=True)
            return (v - mu) / np.sqrt(var + eps) * g + b

        h = x + ps["t.pos"].data[:1]
        for blk in range(2):
            p = f"t.{blk}"
            hn = ln(h, ps[f"{p}.ln1.g"].data, ps[f"{p}.ln1.b"].data)
            v = hn @ ps[f"{p}.attn.v.w"].data + ps[f"{p}.attn.v.b"].data
            h = h + v @ ps[f"{p}.attn.o.w"].data + ps[f"{p}.attn.o.b"].data
            hn = ln(h, ps[f"{p}.ln2.g"].data, ps[f"{p}.ln2.b"].data)
            ff = np.maximum(hn @ ps[f"{p}.ff.0.w"].data + ps[f"{p}.ff.0.b"].data, 0.0)
            h = h + ff @ ps[f"{p}.ff.1.w"].data + ps[f"{p}.ff.1.b"].data
        ref = ln(h, ps["t.lnf.g"].data, ps["t.lnf.b"].data)[0]
        out = transformer_encode(ps, x, spec, "t").data
        np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-12)

    def test_zero_tokens_deterministic(self):
        ps, spec = self._net()
        a = transformer_encode(ps, np.zeros((5, 32)), spec, "t").data
        b = transformer_encode(ps, np.zeros((5, 32)), spec, "t").data
        assert np.array_equal(a, b)

    def test_batch_composition_invariance(self):
        ps, spec = self._net(seed=9)
        rng = np.random.default_rng(10)
        batch = rng.standard_normal((4, 7, 32))
        together = transformer_encode(ps, batch, spec, "t").data
        alone = transformer_encode(ps, batch[2], spec, "t").data
        assert np.array_equal(together[2], alone)

    def test_window_overflow_rejected(self):
        ps, spec = self._net(max_len=8)
        with pytest.raises(ContractError):
            transformer_encode(ps, np.zeros((9, 32)), spec, "t")


class TestBackward:
    def test_linear_gradient_exact(self):
        w = Tensor(np.array([2.0, -1.0, 0.5]), requires_grad=True)
        x = np.array([3.0, 4.0, 5.0])
        loss = T.tsum(T.mul(w, x))
        loss.backward()
        assert np.array_equal(w.grad, x)

    def test_unused_parameter_gets_no_gradient(self):
        w = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        T.tsum(T.square(w)).backward()
        assert unused.grad is None

    def test_nonscalar_root_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            T.square(w).backward()


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        ps = ParameterSet(dtype=np.float64)
        ps.add("w", np.array([1.0, 2.0]))
        ps["w"].grad = np.zeros(2)
        before = ps["w"].data.copy()
        adam_step(ps, lr=0.1)
        assert np.array_equal(ps["w"].data, before)

    def test_first_step_magnitude(self):
        # bias correction makes mhat/sqrt(vhat) = sign(g) on step one
        ps = ParameterSet(dtype=np.float64)
        ps.add("w", np.zeros(4))
        ps["w"].grad = np.array([3.0, -0.2, 1e3, -1e-2])
        adam_step(ps, lr=1e-3)
        np.testing.assert_allclose(
            ps["w"].data, -1e-3 * np.array([1.0, -1.0, 1.0, -1.0]), rtol=1e-5
        )

    def test_determinism(self):
        def run():
            ps = ParameterSet(dtype=np.float64)
            ps.add("w", np.arange(6.0))
            for i in range(25):
                ps["w"].grad = np.sin(np.arange(6.0) + i)
                adam_step(ps, lr=0.01)
            return ps["w"].data

        assert np.array_equal(run(), run())

    def test_nonfinite_gradient_rejected_by_name(self):
        ps = ParameterSet(dtype=np.float64)
        ps.add("trunk.w", np.zeros(2))
        ps["trunk.w"].grad = np.array([1.0, np.nan])
        before = ps["trunk.w"].data.copy()
        with pytest.raises(NonFiniteError, match="trunk.w"):
            adam_step(ps, lr=0.1)
        assert np.array_equal(ps["trunk.w"].data, before)
