#!/usr/bin/env python3
# From a waveform to the model's third input stream: an 80-band log-mel
# spectrogram stacked with its first- and second-order deltas (240 columns).

import numpy as np

from voxqual import dsp

sr = 16000
t = np.arange(sr) / sr  # one second

# A crude vowel-ish tone: a few harmonics over a 150 Hz fundamental.
tone = sum(np.sin(2 * np.pi * 150 * h * t) / h for h in range(1, 6))
wave = dsp.Waveform((0.4 * tone / np.abs(tone).max()).astype(np.float32), sr)

feats = dsp.build_mel_features(wave)
print(f"{feats.num_frames} frames x {feats.dim} features at {feats.frame_rate:.0f} Hz")
print("(25 ms windows, 10 ms hop: 1 s -> 1 + (16000-400)//160 = 98 frames)")

mel = feats.frames[:, :80]
d1 = feats.frames[:, 80:160]
d2 = feats.frames[:, 160:]

centers = dsp.mel_filter_centers(dsp.MelConfig(), sr)
peak = int(np.argmax(mel[feats.num_frames // 2]))
print(f"mid-frame peak at mel band {peak} (center {centers[peak]:.0f} Hz)")

# The tone is stationary, so the delta blocks hover near zero.
print(f"mean |delta|  = {np.abs(d1).mean():.4f}")
print(f"mean |ddelta| = {np.abs(d2).mean():.4f}")

# Scaling a waveform shifts every unfloored log-mel value by log(k^2) and
# leaves the deltas alone; broadband noise keeps all bands off the floor.
rng = np.random.default_rng(1)
noise = dsp.Waveform(rng.uniform(-0.4, 0.4, sr).astype(np.float32), sr)
a = dsp.build_mel_features(noise)
b = dsp.build_mel_features(dsp.Waveform(noise.samples * 2.0, sr))
shift = b.frames[:, :80] - a.frames[:, :80]
print(f"log shift for 2x amplitude: {shift.mean():.4f} (log 4 = {np.log(4):.4f})")
print(f"max delta-block change: {np.abs(b.frames[:, 80:] - a.frames[:, 80:]).max():.2e}")
