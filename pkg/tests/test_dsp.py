import math

import numpy as np
import pytest

from voxqual import dsp


def tone(freq, dur=1.0, sr=16000, amp=0.5):
    t = np.arange(int(dur * sr)) / sr
    return dsp.Waveform((amp * np.sin(2 * np.pi * freq * t)).astype(np.float32), sr)


class TestLogMel:
    def test_silence_hits_log_floor(self):
        wave = dsp.Waveform(np.zeros(16000, dtype=np.float32), 16000)
        feats = dsp.log_mel(wave)
        np.testing.assert_allclose(feats.frames, math.log(1e-10), rtol=1e-6)

    def test_frame_count_formula(self):
        wave = dsp.Waveform(np.zeros(16000, dtype=np.float32), 16000)
        feats = dsp.log_mel(wave)
        # 1 + floor((16000 - 400) / 160)
        assert feats.num_frames == 98
        assert feats.dim == 80
        assert feats.frame_rate == pytest.approx(100.0)

    def test_pure_tone_peaks_at_nearest_filter_center(self):
        wave = tone(440.0)
        feats = dsp.log_mel(wave)
        centers = dsp.mel_filter_centers(dsp.MelConfig(), 16000)
        expected_bin = int(np.argmin(np.abs(centers - 440.0)))
        mid = feats.frames[feats.num_frames // 2]
        assert int(np.argmax(mid)) == expected_bin

    def test_too_short_rejected(self):
        wave = dsp.Waveform(np.zeros(100, dtype=np.float32), 16000)
        with pytest.raises(ValueError, match="shorter than"):
            dsp.log_mel(wave)

    def test_wrong_rate_rejected(self):
        wave = dsp.Waveform(np.zeros(8000, dtype=np.float32), 8000)
        with pytest.raises(ValueError, match="8000"):
            dsp.log_mel(wave)


class TestDelta:
    def test_constant_input_gives_zeros(self):
        feats = dsp.FeatureMatrix(np.full((10, 4), 3.5, dtype=np.float32), 100.0)
        np.testing.assert_allclose(dsp.delta(feats).frames, 0.0)

    def test_linear_ramp_interior_slope(self):
        # c_t = t: interior frames satisfy (1*2 + 2*4) / 10 = 1
        ramp = np.arange(12, dtype=np.float32)[:, None].repeat(3, axis=1)
        d = dsp.delta(dsp.FeatureMatrix(ramp, 100.0)).frames
        np.testing.assert_allclose(d[2:-2], 1.0, atol=1e-6)

    def test_single_frame_is_zero(self):
        feats = dsp.FeatureMatrix(np.array([[1.0, -2.0, 0.5]], dtype=np.float32), 100.0)
        np.testing.assert_allclose(dsp.delta(feats).frames, 0.0)
        np.testing.assert_allclose(dsp.delta(feats, order=2).frames, 0.0)

    def test_oracle_regression_formula(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=(9, 5)).astype(np.float32)
        d = dsp.delta(dsp.FeatureMatrix(c, 100.0)).frames

        def oracle(c, t):
            def at(i):
                return c[min(max(i, 0), c.shape[0] - 1)]

            return (1 * (at(t + 1) - at(t - 1)) + 2 * (at(t + 2) - at(t - 2))) / 10.0

        for t in range(c.shape[0]):
            np.testing.assert_allclose(d[t], oracle(c, t), rtol=1e-5, atol=1e-6)


class TestBuildMelFeatures:
    def test_dimensions(self):
        feats = dsp.build_mel_features(tone(200.0, dur=0.5))
        assert feats.dim == 240

    def test_silence_blocks(self):
        wave = dsp.Waveform(np.zeros(16000, dtype=np.float32), 16000)
        feats = dsp.build_mel_features(wave)
        np.testing.assert_allclose(feats.frames[:, :80], math.log(1e-10), rtol=1e-6)
        np.testing.assert_allclose(feats.frames[:, 80:], 0.0, atol=1e-7)

    def test_composition_matches_staged_deltas(self):
        rng = np.random.default_rng(1)
        wave = dsp.Waveform(rng.uniform(-0.8, 0.8, 8000).astype(np.float32), 16000)
        combined = dsp.build_mel_features(wave)
        base = dsp.log_mel(wave)
        d1 = dsp.delta(base)
        d2 = dsp.delta(d1)
        np.testing.assert_array_equal(combined.frames[:, :80], base.frames)
        np.testing.assert_array_equal(combined.frames[:, 80:160], d1.frames)
        np.testing.assert_array_equal(combined.frames[:, 160:], d2.frames)

    def test_amplitude_scaling_shifts_log_block_only(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-0.4, 0.4, 8000).astype(np.float32)
        a = dsp.build_mel_features(dsp.Waveform(x, 16000))
        b = dsp.build_mel_features(dsp.Waveform(2.0 * x, 16000))
        # broadband noise keeps every band above the floor, so the whole
        # mel block shifts by log(k^2) and the delta blocks cancel it out
        np.testing.assert_allclose(
            b.frames[:, :80] - a.frames[:, :80], math.log(4.0), atol=1e-4
        )
        np.testing.assert_allclose(b.frames[:, 80:], a.frames[:, 80:], atol=1e-4)

    def test_no_nan_inf_on_varied_inputs(self):
        rng = np.random.default_rng(3)
        cases = [
            np.zeros(6000, dtype=np.float32),
            rng.uniform(-1, 1, 6000).astype(np.float32),
            np.ones(6000, dtype=np.float32),
        ]
        impulse = np.zeros(6000, dtype=np.float32)
        impulse[100] = 1.0
        cases.append(impulse)
        for x in cases:
            feats = dsp.build_mel_features(dsp.Waveform(x, 16000))
            assert np.all(np.isfinite(feats.frames))


class TestWavIO:
    def test_roundtrip_16bit(self, tmp_path):
        wave = tone(330.0, dur=0.3)
        path = tmp_path / "t.wav"
        dsp.write_wav(path, wave)
        back = dsp.read_wav(path)
        assert back.sample_rate == 16000
        np.testing.assert_allclose(back.samples, wave.samples, atol=1.0 / 32000)

    def test_multichannel_rejected(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "stereo.wav"
        wavfile.write(path, 16000, np.zeros((100, 2), dtype=np.int16))
        with pytest.raises(ValueError, match="mono"):
            dsp.read_wav(path)

    def test_float32_supported(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "f32.wav"
        data = np.linspace(-0.5, 0.5, 400).astype(np.float32)
        wavfile.write(path, 16000, data)
        back = dsp.read_wav(path)
        np.testing.assert_array_equal(back.samples, data)

    def test_wrong_rate_rejected(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "r8.wav"
        wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
        with pytest.raises(ValueError, match="8000"):
            dsp.read_wav(path)


def test_waveform_validation():
    with pytest.raises(ValueError, match="non-empty"):
        dsp.Waveform(np.zeros(0), 16000)
    with pytest.raises(ValueError, match="finite"):
        dsp.Waveform(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError, match=r"\[-1, 1\]"):
        dsp.Waveform(np.array([0.0, 1.5]), 16000)
