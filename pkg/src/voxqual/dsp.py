"""Waveform front end: log-mel spectrograms with first and second deltas.

Fixed conventions: Hann window, magnitude-squared spectrum, FFT size equal
to the next power of two at or above the window length, HTK mel scale
(2595 * log10(1 + f/700)) with triangular filters, and delta regression
with half-window 2 and edge replication. The canonical sample rate is
16 kHz; resampling is out of scope, so other rates are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

CANONICAL_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D signal")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if float(np.abs(self.samples).max()) > 1.0 + 1e-6:
            raise ValueError("waveform samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class MelConfig:
    n_mels: int = 80
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.window_ms < self.hop_ms:
            raise ValueError("window must be at least one hop long")

    def window_length(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.window_ms / 1000.0))

    def hop_length(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.hop_ms / 1000.0))

    def resolved_fmax(self, sample_rate: int) -> float:
        fmax = sample_rate / 2.0 if self.fmax is None else self.fmax
        if not (self.fmin < fmax <= sample_rate / 2.0):
            raise ValueError(f"need fmin < fmax <= Nyquist, got ({self.fmin}, {fmax})")
        return fmax


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # T x D, float32
    frame_rate: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise ValueError("feature matrix must be T x D")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def mel_filter_centers(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    """Centre frequencies (Hz) of the triangular filters."""
    fmax = cfg.resolved_fmax(sample_rate)
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(fmax), cfg.n_mels + 2))
    return pts[1:-1]


def mel_filterbank(cfg: MelConfig, sample_rate: int, n_fft: int) -> np.ndarray:
    """n_mels x (n_fft//2 + 1) triangle weights at the FFT bin frequencies."""
    fmax = cfg.resolved_fmax(sample_rate)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(fmax), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, bin_freqs.size))
    for m in range(cfg.n_mels):
        lo, center, hi = pts[m], pts[m + 1], pts[m + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb.astype(np.float32)


def log_mel(wave: Waveform, cfg: MelConfig | None = None) -> FeatureMatrix:
    """Log mel-energy spectrogram, T = 1 + floor((len - window) / hop).

    Energies are floored at cfg.log_floor before the log, so digital
    silence maps to log(log_floor) rather than -inf.
    """
    cfg = cfg or MelConfig()
    if wave.sample_rate != CANONICAL_SAMPLE_RATE:
        raise ValueError(
            f"expected {CANONICAL_SAMPLE_RATE} Hz input, got {wave.sample_rate} Hz"
        )
    win = cfg.window_length(wave.sample_rate)
    hop = cfg.hop_length(wave.sample_rate)
    x = wave.samples
    if x.size < win:
        raise ValueError(f"waveform of {x.size} samples is shorter than one {win}-sample window")
    n_fft = next_pow2(win)
    n_frames = 1 + (x.size - win) // hop

    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx].astype(np.float64)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = spec.real**2 + spec.imag**2

    fb = mel_filterbank(cfg, wave.sample_rate, n_fft).astype(np.float64)
    energy = power @ fb.T
    out = np.log(np.maximum(energy, cfg.log_floor)).astype(np.float32)
    return FeatureMatrix(out, frame_rate=wave.sample_rate / hop)


def delta(features: FeatureMatrix, order: int = 1) -> FeatureMatrix:
    """Regression deltas with half-window 2; order 2 re-applies the formula.

    d_t = sum_{n=1..2} n * (c_{t+n} - c_{t-n}) / (2 * (1 + 4)), with edge
    frames replicated, so a constant input (and any single frame) maps to
    zeros.
    """
    if order not in (1, 2):
        raise ValueError("delta order must be 1 or 2")
    out = features.frames
    for _ in range(order):
        out = _delta_once(out)
    return FeatureMatrix(out, frame_rate=features.frame_rate)


def _delta_once(c: np.ndarray) -> np.ndarray:
    n_half = 2
    padded = np.concatenate([c[:1].repeat(n_half, axis=0), c, c[-1:].repeat(n_half, axis=0)])
    denom = 2.0 * sum(n * n for n in range(1, n_half + 1))
    t = np.arange(c.shape[0]) + n_half
    acc = np.zeros_like(c, dtype=np.float64)
    for n in range(1, n_half + 1):
        acc += n * (padded[t + n].astype(np.float64) - padded[t - n].astype(np.float64))
    return (acc / denom).astype(np.float32)


def build_mel_features(wave: Waveform, cfg: MelConfig | None = None) -> FeatureMatrix:
    """Column blocks [mel | delta | delta-delta], D = 3 * n_mels."""
    base = log_mel(wave, cfg)
    d1 = delta(base, order=1)
    d2 = delta(d1, order=1)
    stacked = np.concatenate([base.frames, d1.frames, d2.frames], axis=1)
    return FeatureMatrix(stacked, frame_rate=base.frame_rate)


def read_wav(path, expect_rate: int | None = CANONICAL_SAMPLE_RATE) -> Waveform:
    """Load a mono PCM WAV (16-bit int or 32-bit float)."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    if expect_rate is not None and rate != expect_rate:
        raise ValueError(f"{path}: expected {expect_rate} Hz, got {rate} Hz")
    return Waveform(samples, rate)


def write_wav(path, wave: Waveform) -> None:
    """Write 16-bit PCM; quantization is deterministic."""
    pcm = np.clip(np.round(wave.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, wave.sample_rate, pcm)
