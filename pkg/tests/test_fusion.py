from types import SimpleNamespace

import numpy as np
import pytest

from voxqual import fusion
from voxqual import representations as reps
from voxqual.autodiff import Graph, Tensor, backward, grad_check, mean


def stack_of(l, t=5, d=8, seed=0):
    rng = np.random.default_rng(seed)
    layers = [Tensor(rng.normal(size=(t, d)).astype(np.float32)) for _ in range(l)]
    return reps.RepresentationStack(layers, source_tag="imported", frame_rate=50.0)


class TestSelectDeepLayers:
    def test_deeper_six_of_twelve(self):
        stack = stack_of(12)
        out = fusion.select_deep_layers(stack)
        assert len(out) == 6
        assert all(out[i] is stack.layers[6 + i] for i in range(6))

    def test_deeper_half_of_toy_four(self):
        stack = stack_of(4)
        out = fusion.select_deep_layers(stack)
        assert [id(x) for x in out] == [id(stack.layers[2]), id(stack.layers[3])]

    def test_two_layers_yields_last(self):
        stack = stack_of(2)
        out = fusion.select_deep_layers(stack)
        assert len(out) == 1 and out[0] is stack.layers[1]

    def test_odd_layer_count_rejected(self):
        fake = SimpleNamespace(num_layers=5, layers=[None] * 5)
        with pytest.raises(ValueError, match="even"):
            fusion.select_deep_layers(fake)


class TestAdapterForward:
    def test_zero_input_zero_bias_unit_gain_gives_zeros(self):
        rng = np.random.default_rng(0)
        params = fusion.init_adapter(8, rng)
        out = fusion.adapter_forward(Tensor(np.zeros((4, 8), dtype=np.float32)), params)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_row_moments_follow_affine(self):
        rng = np.random.default_rng(1)
        params = fusion.init_adapter(16, rng)
        params.ln_gain.data[:] = 1.7
        params.ln_bias.data[:] = -0.3
        x = Tensor(rng.normal(size=(6, 16)).astype(np.float32))
        out = fusion.adapter_forward(x, params).data
        np.testing.assert_allclose(out.mean(axis=1), -0.3, atol=1e-4)
        np.testing.assert_allclose(out.var(axis=1), 1.7**2, rtol=1e-3)

    def test_full_scale_dims_768_to_120(self):
        rng = np.random.default_rng(2)
        params = fusion.init_adapter(768, rng)
        out = fusion.adapter_forward(Tensor(rng.normal(size=(3, 768)).astype(np.float32)), params)
        assert out.shape == (3, 120)

    def test_dim_mismatch_rejected(self):
        params = fusion.init_adapter(8, np.random.default_rng(0))
        with pytest.raises(ValueError, match="input dim"):
            fusion.adapter_forward(Tensor(np.zeros((4, 9), dtype=np.float32)), params)


class TestWeightedLayerSum:
    def test_zero_logits_is_plain_average(self):
        rng = np.random.default_rng(3)
        slabs = [Tensor(rng.normal(size=(4, 6)).astype(np.float32)) for _ in range(6)]
        weighting = fusion.init_layer_weighting(6)
        out = fusion.weighted_layer_sum(slabs, weighting)
        expected = np.mean([s.data for s in slabs], axis=0)
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_saturated_logit_selects_one_layer(self):
        rng = np.random.default_rng(4)
        slabs = [Tensor(rng.normal(size=(4, 6)).astype(np.float32)) for _ in range(6)]
        weighting = fusion.init_layer_weighting(6)
        weighting.logits.data[2] = 1000.0
        out = fusion.weighted_layer_sum(slabs, weighting)
        np.testing.assert_allclose(out.data, slabs[2].data, atol=1e-5)

    def test_weights_sum_to_one_after_gradient_step(self):
        rng = np.random.default_rng(5)
        slabs = [Tensor(rng.normal(size=(3, 4)).astype(np.float32)) for _ in range(6)]
        weighting = fusion.init_layer_weighting(6)
        g = Graph()
        with g:
            loss = mean(fusion.weighted_layer_sum(slabs, weighting))
        backward(g, loss)
        weighting.logits.data -= 0.1 * weighting.logits.grad
        w = weighting.weights().data
        assert abs(float(w.sum()) - 1.0) < 1e-6

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        slabs = [Tensor(rng.normal(size=(3, 4)).astype(np.float32)) for _ in range(4)]
        logits = rng.normal(size=4).astype(np.float32)
        perm = [2, 0, 3, 1]
        a = fusion.weighted_layer_sum(slabs, fusion.LayerWeighting(Tensor(logits)))
        b = fusion.weighted_layer_sum(
            [slabs[i] for i in perm], fusion.LayerWeighting(Tensor(logits[perm]))
        )
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)

    def test_count_mismatch_rejected(self):
        slabs = [Tensor(np.zeros((2, 2), dtype=np.float32))] * 3
        with pytest.raises(ValueError, match="3 adapter outputs for 6"):
            fusion.weighted_layer_sum(slabs, fusion.init_layer_weighting(6))


class TestFuseFeatures:
    def test_dims_sum_to_480(self):
        rng = np.random.default_rng(7)
        out = fusion.fuse_features(
            Tensor(rng.normal(size=(5, 120)).astype(np.float32)),
            Tensor(rng.normal(size=(5, 120)).astype(np.float32)),
            Tensor(rng.normal(size=(5, 240)).astype(np.float32)),
        )
        assert out.shape == (5, 480)

    def test_zero_blocks_land_in_their_columns(self):
        rng = np.random.default_rng(8)
        asr = Tensor(rng.normal(size=(4, 120)).astype(np.float32))
        out = fusion.fuse_features(
            asr,
            Tensor(np.zeros((4, 120), dtype=np.float32)),
            Tensor(np.zeros((4, 240), dtype=np.float32)),
        )
        np.testing.assert_allclose(out.data[:, 120:], 0.0)
        np.testing.assert_array_equal(out.data[:, :120], asr.data)

    def test_unequal_frames_rejected(self):
        with pytest.raises(ValueError, match="frame counts differ"):
            fusion.fuse_features(
                Tensor(np.zeros((4, 120), dtype=np.float32)),
                Tensor(np.zeros((5, 120), dtype=np.float32)),
                Tensor(np.zeros((4, 240), dtype=np.float32)),
            )


def test_fusion_chain_gradient_check():
    """Adapters -> weighted sum -> concat, differentiated end to end."""
    rng = np.random.default_rng(9)
    slabs = [Tensor(rng.normal(size=(3, 8)).astype(np.float32)) for _ in range(2)]
    mel = Tensor(rng.normal(size=(3, 6)).astype(np.float32))
    adapters = [fusion.init_adapter(8, rng, out_dim=10) for _ in range(2)]
    probe = rng.normal(size=(3, 8)).astype(np.float32)

    def run(t):
        adapted = [fusion.adapter_forward(t, adapters[0]), fusion.adapter_forward(slabs[1], adapters[1])]
        weighting = fusion.LayerWeighting(Tensor(np.array([0.2, -0.4], dtype=np.float32)))
        summed = fusion.weighted_layer_sum(adapted, weighting)
        return mean(fusion.fuse_features(summed, summed, mel))

    report = grad_check(run, Tensor(probe), rtol=1e-3, step=1e-4)
    assert report.passed, str(report)


def test_adapter_parameter_gradients_check():
    rng = np.random.default_rng(10)
    adapter = fusion.init_adapter(8, rng, out_dim=10)
    x = Tensor(rng.normal(size=(3, 8)).astype(np.float32))

    def wrt_weight(t):
        swapped = fusion.AdapterParams(t, adapter.bias, adapter.ln_gain, adapter.ln_bias)
        return mean(fusion.adapter_forward(x, swapped))

    report = grad_check(wrt_weight, adapter.weight, rtol=1e-3, step=1e-4)
    assert report.passed, str(report)
