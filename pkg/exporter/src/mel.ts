// 80-band log-mel front end for the ASR-style model: centered 25 ms Hann
// windows at a 10 ms hop, so a t-sample input yields floor(t / 160) frames
// and the fixed 30 s window maps to exactly 3000.

import { Mat, mat } from "./tensor.js";

export const N_MELS = 80;
export const WINDOW = 400;
export const HOP = 160;
export const N_FFT = 512;
const LOG_FLOOR = 1e-10;

function hzToMel(f: number): number {
  return 2595 * Math.log10(1 + f / 700);
}

function melToHz(m: number): number {
  return 700 * (Math.pow(10, m / 2595) - 1);
}

export function melFilterbank(sampleRate: number): Mat {
  const bins = N_FFT / 2 + 1;
  const fb = mat(N_MELS, bins);
  const maxMel = hzToMel(sampleRate / 2);
  const pts: number[] = [];
  for (let i = 0; i < N_MELS + 2; i++) pts.push(melToHz((maxMel * i) / (N_MELS + 1)));
  for (let m = 0; m < N_MELS; m++) {
    const [lo, center, hi] = [pts[m], pts[m + 1], pts[m + 2]];
    for (let k = 0; k < bins; k++) {
      const f = (k * sampleRate) / N_FFT;
      const rising = (f - lo) / Math.max(center - lo, 1e-12);
      const falling = (hi - f) / Math.max(hi - center, 1e-12);
      fb.data[m * bins + k] = Math.max(0, Math.min(rising, falling));
    }
  }
  return fb;
}

// in-place radix-2 FFT over interleaved complex values
function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const angle = (-2 * Math.PI) / len;
    const wr = Math.cos(angle);
    const wi = Math.sin(angle);
    for (let i = 0; i < n; i += len) {
      let cr = 1;
      let ci = 0;
      for (let j = 0; j < len / 2; j++) {
        const ur = re[i + j];
        const ui = im[i + j];
        const vr = re[i + j + len / 2] * cr - im[i + j + len / 2] * ci;
        const vi = re[i + j + len / 2] * ci + im[i + j + len / 2] * cr;
        re[i + j] = ur + vr;
        im[i + j] = ui + vi;
        re[i + j + len / 2] = ur - vr;
        im[i + j + len / 2] = ui - vi;
        const nr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = nr;
      }
    }
  }
}

export function logMel(samples: Float32Array, sampleRate: number): Mat {
  const frames = Math.floor(samples.length / HOP);
  const half = WINDOW / 2;
  const fb = melFilterbank(sampleRate);
  const bins = N_FFT / 2 + 1;
  const out = mat(frames, N_MELS);
  const window = new Float64Array(WINDOW);
  for (let i = 0; i < WINDOW; i++) window[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / WINDOW);

  const re = new Float64Array(N_FFT);
  const im = new Float64Array(N_FFT);
  const power = new Float64Array(bins);
  for (let t = 0; t < frames; t++) {
    re.fill(0);
    im.fill(0);
    const center = t * HOP;
    for (let i = 0; i < WINDOW; i++) {
      let idx = center - half + i;
      if (idx < 0) idx = -idx; // reflect at the edges
      if (idx >= samples.length) idx = 2 * (samples.length - 1) - idx;
      re[i] = samples[idx] * window[i];
    }
    fft(re, im);
    for (let k = 0; k < bins; k++) power[k] = re[k] * re[k] + im[k] * im[k];
    for (let m = 0; m < N_MELS; m++) {
      let energy = 0;
      for (let k = 0; k < bins; k++) energy += fb.data[m * bins + k] * power[k];
      out.data[t * N_MELS + m] = Math.log(Math.max(energy, LOG_FLOOR));
    }
  }
  return out;
}
