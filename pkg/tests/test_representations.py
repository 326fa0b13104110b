import numpy as np
import pytest

from voxqual import representations as reps
from voxqual.autodiff import Tensor
from voxqual.dsp import FeatureMatrix


def toy_features(t=10, dim=24, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureMatrix(rng.normal(size=(t, dim)).astype(np.float32), 100.0)


def toy_stack(l=4, t=6, d=8, seed=0, tag="imported"):
    rng = np.random.default_rng(seed)
    layers = [Tensor(rng.normal(size=(t, d)).astype(np.float32)) for _ in range(l)]
    return reps.RepresentationStack(layers, source_tag=tag, frame_rate=50.0)


class TestToyEncoder:
    def test_output_shape_contract(self):
        cfg = reps.EncoderConfig.toy(seed=3)
        feats = toy_features(t=10)
        params = reps.init_toy_encoder(feats.dim, cfg)
        stack = reps.toy_encode(feats, params, cfg)
        assert stack.num_layers == 4
        assert all(layer.shape == (10, 32) for layer in stack.layers)
        assert stack.source_tag == "toy"

    def test_deterministic_given_seed(self):
        cfg = reps.EncoderConfig.toy(seed=9)
        feats = toy_features(t=7)
        a = reps.toy_encode(feats, reps.init_toy_encoder(feats.dim, cfg), cfg)
        b = reps.toy_encode(feats, reps.init_toy_encoder(feats.dim, cfg), cfg)
        for la, lb in zip(a.layers, b.layers):
            assert la.data.tobytes() == lb.data.tobytes()

    def test_attention_mixes_time(self):
        cfg = reps.EncoderConfig.toy(seed=1)
        feats = toy_features(t=8, seed=2)
        params = reps.init_toy_encoder(feats.dim, cfg)
        base = reps.toy_encode(feats, params, cfg)
        bumped = FeatureMatrix(feats.frames.copy(), feats.frame_rate)
        bumped.frames[3] += 0.5
        other = reps.toy_encode(bumped, params, cfg)
        for la, lb in zip(base.layers, other.layers):
            assert not np.allclose(la.data, lb.data)

    def test_no_nan_over_seed_sweep(self):
        feats = toy_features(t=5)
        for seed in range(100):
            cfg = reps.EncoderConfig.toy(seed=seed)
            stack = reps.toy_encode(feats, reps.init_toy_encoder(feats.dim, cfg), cfg)
            for layer in stack.layers:
                assert np.all(np.isfinite(layer.data))

    def test_input_dim_mismatch_rejected(self):
        cfg = reps.EncoderConfig.toy()
        params = reps.init_toy_encoder(24, cfg)
        with pytest.raises(ValueError, match="input dim"):
            reps.toy_encode(toy_features(dim=30), params, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="even"):
            reps.EncoderConfig(n_layers=5, model_dim=32, n_heads=2, ff_dim=64)
        with pytest.raises(ValueError, match="divisible"):
            reps.EncoderConfig(n_layers=4, model_dim=30, n_heads=4, ff_dim=64)


class TestRstkFormat:
    def test_roundtrip_full_size_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        layers = [Tensor(rng.normal(size=(100, 768)).astype(np.float32)) for _ in range(12)]
        stack = reps.RepresentationStack(layers, source_tag="imported", frame_rate=50.0)
        path = tmp_path / "s.rstk"
        reps.export_stack(path, stack)
        back = reps.import_stack(path)
        assert back.num_layers == 12 and back.dim == 768
        for la, lb in zip(stack.layers, back.layers):
            assert la.data.tobytes() == lb.data.tobytes()
        assert not back.layers[0].requires_grad

    def test_truncated_file_reports_byte_counts(self, tmp_path):
        path = tmp_path / "t.rstk"
        reps.export_stack(path, toy_stack(l=2, t=3, d=4))
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(ValueError, match=rf"expected {len(blob)} bytes.*got {len(blob) - 7}"):
            reps.import_stack(path)

    def test_bad_magic_offset(self, tmp_path):
        path = tmp_path / "m.rstk"
        reps.export_stack(path, toy_stack(l=2, t=3, d=4))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"JUNK"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="byte offset 0"):
            reps.import_stack(path)

    def test_bad_version_offset(self, tmp_path):
        path = tmp_path / "v.rstk"
        reps.export_stack(path, toy_stack(l=2, t=3, d=4))
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version 99 at byte offset 4"):
            reps.import_stack(path)

    def test_header_too_short(self, tmp_path):
        path = tmp_path / "h.rstk"
        path.write_bytes(b"RST")
        with pytest.raises(ValueError, match="truncated header"):
            reps.import_stack(path)


class TestTrimPadding:
    def test_trims_to_valid_frames(self):
        stack = toy_stack(l=2, t=1500, d=4)
        out = reps.trim_padding(stack, 230)
        assert out.num_frames == 230
        np.testing.assert_array_equal(out.layers[0].data, stack.layers[0].data[:230])

    def test_identity_when_equal(self):
        stack = toy_stack(l=2, t=10, d=4)
        assert reps.trim_padding(stack, 10) is stack

    @pytest.mark.parametrize("bad", [0, -1, 11])
    def test_out_of_range_rejected(self, bad):
        with pytest.raises(ValueError, match="valid_frames"):
            reps.trim_padding(toy_stack(l=2, t=10, d=4), bad)


class TestAlignFrames:
    def test_min_rule(self):
        rng = np.random.default_rng(1)
        streams = [rng.normal(size=(t, 3)) for t in (98, 49, 49)]
        out = reps.align_frames(streams)
        assert [s.shape[0] for s in out] == [49, 49, 49]

    def test_equal_lengths_identity(self):
        rng = np.random.default_rng(2)
        streams = [rng.normal(size=(10, 3)) for _ in range(3)]
        out = reps.align_frames(streams)
        for a, b in zip(streams, out):
            np.testing.assert_array_equal(a, b)

    def test_single_stream_unchanged(self):
        s = np.random.default_rng(3).normal(size=(7, 2))
        np.testing.assert_array_equal(reps.align_frames([s])[0], s)

    def test_endpoints_preserved(self):
        s = np.random.default_rng(4).normal(size=(20, 3))
        out = reps.resample_frames(s, 7)
        np.testing.assert_allclose(out[0], s[0], rtol=1e-6)
        np.testing.assert_allclose(out[-1], s[-1], rtol=1e-6)

    def test_trim_then_align_commutes(self):
        rng = np.random.default_rng(5)
        stack = toy_stack(l=2, t=60, d=4, seed=5)
        other = rng.normal(size=(31, 4)).astype(np.float32)

        trimmed = reps.trim_padding(stack, 40)
        a = reps.align_frames([trimmed.layers[0].data, other])
        pre = stack.layers[0].data[:40]
        b = reps.align_frames([pre, other])
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, atol=1e-6)


def test_stack_invariants():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="even"):
        reps.RepresentationStack(
            [Tensor(rng.normal(size=(3, 2)).astype(np.float32)) for _ in range(3)],
            source_tag="imported",
            frame_rate=50.0,
        )
    bad = [Tensor(np.array([[np.inf, 0.0]], dtype=np.float32)) for _ in range(2)]
    with pytest.raises(ValueError, match="non-finite"):
        reps.RepresentationStack(bad, source_tag="imported", frame_rate=50.0)
