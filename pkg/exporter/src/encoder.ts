// 12-layer, 768-wide transformer encoder with two front ends.
//
// The ASR-style path pads audio to a fixed 30 s window, runs the mel and
// conv stem over the whole window (output 1500 frames), and removes the
// padded frames before the transformer so the written stack covers only
// real audio. The SSL-style path runs a strided conv stack directly on the
// waveform (about 50 frames per second) with no padding. Internal widths
// (stem channels, attention and feed-forward dims) come from the weight
// file; the residual stream and the exported stacks are always 768 wide.

import {
  Mat,
  addBiasInPlace,
  addInPlace,
  conv1d,
  geluInPlace,
  layerNorm,
  mat,
  matmul,
  setCols,
  sinusoidalPositions,
  slice,
  sliceCols,
  softmaxRowsInPlace,
  transpose,
} from "./tensor.js";
import { HOP, logMel, N_MELS } from "./mel.js";
import { TensorFile } from "./safetensors.js";
import { Wave } from "./wav.js";

export const N_LAYERS = 12;
export const MODEL_DIM = 768;
export const ASR_WINDOW_S = 30;
export const ASR_PADDED_FRAMES = (ASR_WINDOW_S * 16000) / HOP / 2; // 1500 after the stride-2 stem

export const SSL_KERNELS = [10, 3, 3, 3, 3, 2, 2];
export const SSL_STRIDES = [5, 2, 2, 2, 2, 2, 2];

export type ModelKind = "asr" | "ssl";

interface LayerWeights {
  ln1g: Float32Array;
  ln1b: Float32Array;
  q: Mat;
  qb: Float32Array;
  k: Mat;
  kb: Float32Array;
  v: Mat;
  vb: Float32Array;
  o: Mat;
  ob: Float32Array;
  ln2g: Float32Array;
  ln2b: Float32Array;
  ff1: Mat;
  ff1b: Float32Array;
  ff2: Mat;
  ff2b: Float32Array;
}

export class Encoder {
  readonly kind: ModelKind;
  readonly heads: number;
  private layers: LayerWeights[] = [];
  private file: TensorFile;

  constructor(file: TensorFile, kind: ModelKind) {
    const tagged = file.metadata["model"];
    if (tagged !== kind) {
      throw new Error(`weights are for model '${tagged}', requested '${kind}'`);
    }
    this.file = file;
    this.kind = kind;
    this.heads = Number(file.metadata["n_heads"] ?? "1");
    for (let i = 0; i < N_LAYERS; i++) {
      this.layers.push({
        ln1g: this.vec(`layers.${i}.ln1.gain`, MODEL_DIM),
        ln1b: this.vec(`layers.${i}.ln1.bias`, MODEL_DIM),
        q: this.matrix(`layers.${i}.attn.q.weight`),
        qb: this.vecAny(`layers.${i}.attn.q.bias`),
        k: this.matrix(`layers.${i}.attn.k.weight`),
        kb: this.vecAny(`layers.${i}.attn.k.bias`),
        v: this.matrix(`layers.${i}.attn.v.weight`),
        vb: this.vecAny(`layers.${i}.attn.v.bias`),
        o: this.matrix(`layers.${i}.attn.o.weight`),
        ob: this.vec(`layers.${i}.attn.o.bias`, MODEL_DIM),
        ln2g: this.vec(`layers.${i}.ln2.gain`, MODEL_DIM),
        ln2b: this.vec(`layers.${i}.ln2.bias`, MODEL_DIM),
        ff1: this.matrix(`layers.${i}.ff1.weight`),
        ff1b: this.vecAny(`layers.${i}.ff1.bias`),
        ff2: this.matrix(`layers.${i}.ff2.weight`),
        ff2b: this.vec(`layers.${i}.ff2.bias`, MODEL_DIM),
      });
    }
    const attnDim = this.layers[0].q.cols;
    if (attnDim % this.heads) {
      throw new Error(`attention dim ${attnDim} not divisible by ${this.heads} heads`);
    }
  }

  private entry(name: string) {
    const entry = this.file.tensors.get(name);
    if (!entry) throw new Error(`weights file is missing tensor '${name}'`);
    return entry;
  }

  private matrix(name: string): Mat {
    const e = this.entry(name);
    if (e.shape.length !== 2) throw new Error(`tensor '${name}' must be 2-D`);
    return mat(e.shape[0], e.shape[1], e.data);
  }

  private vec(name: string, length: number): Float32Array {
    const e = this.entry(name);
    if (e.shape.length !== 1 || e.shape[0] !== length) {
      throw new Error(`tensor '${name}' must have shape [${length}]`);
    }
    return e.data;
  }

  private vecAny(name: string): Float32Array {
    const e = this.entry(name);
    if (e.shape.length !== 1) throw new Error(`tensor '${name}' must be 1-D`);
    return e.data;
  }

  /** Per-layer outputs for one utterance: N_LAYERS matrices of T x 768. */
  encode(wave: Wave): Mat[] {
    const frames = this.kind === "asr" ? this.asrFrontend(wave) : this.sslFrontend(wave);
    let x = addInPlace(frames, sinusoidalPositions(frames.rows, MODEL_DIM));
    const outputs: Mat[] = [];
    for (const layer of this.layers) {
      x = addInPlace(this.attention(layerNorm(x, layer.ln1g, layer.ln1b), layer), x);
      const ff = matmul(
        geluInPlace(addBiasInPlace(matmul(layerNorm(x, layer.ln2g, layer.ln2b), layer.ff1), layer.ff1b)),
        layer.ff2
      );
      x = addInPlace(addBiasInPlace(ff, layer.ff2b), x);
      outputs.push(mat(x.rows, x.cols, x.data.slice()));
    }
    return outputs;
  }

  private attention(x: Mat, layer: LayerWeights): Mat {
    const q = addBiasInPlace(matmul(x, layer.q), layer.qb);
    const k = addBiasInPlace(matmul(x, layer.k), layer.kb);
    const v = addBiasInPlace(matmul(x, layer.v), layer.vb);
    const headDim = q.cols / this.heads;
    const scale = 1 / Math.sqrt(headDim);
    const mixed = mat(x.rows, q.cols);
    for (let h = 0; h < this.heads; h++) {
      const qh = sliceCols(q, h * headDim, (h + 1) * headDim);
      const kh = sliceCols(k, h * headDim, (h + 1) * headDim);
      const vh = sliceCols(v, h * headDim, (h + 1) * headDim);
      const scores = matmul(qh, transpose(kh));
      for (let i = 0; i < scores.data.length; i++) scores.data[i] *= scale;
      setCols(mixed, matmul(softmaxRowsInPlace(scores), vh), h * headDim);
    }
    return addBiasInPlace(matmul(mixed, layer.o), layer.ob);
  }

  /** Pad to the 30 s window, mel + two convs (stride 2), drop padded frames. */
  private asrFrontend(wave: Wave): Mat {
    const windowSamples = ASR_WINDOW_S * wave.sampleRate;
    if (wave.samples.length > windowSamples) {
      throw new Error(
        `audio of ${wave.samples.length / wave.sampleRate}s exceeds the ${ASR_WINDOW_S}s window`
      );
    }
    const trueFrames = Math.floor(wave.samples.length / HOP);
    const validFrames = Math.ceil(trueFrames / 2);
    if (validFrames < 1) throw new Error("audio too short for one encoder frame");

    const padded = new Float32Array(windowSamples);
    padded.set(wave.samples);
    const melFrames = logMel(padded, wave.sampleRate);

    const conv1w = this.matrix("stem.conv1.weight");
    const conv2w = this.matrix("stem.conv2.weight");
    if (conv1w.rows !== 3 * N_MELS) throw new Error("stem.conv1.weight must cover kernel 3 over 80 mel bands");
    const h1 = geluInPlace(
      conv1d(melFrames, conv1w, this.vecAny("stem.conv1.bias"), { kernel: 3, stride: 1, padSame: true })
    );
    const h2 = geluInPlace(
      conv1d(h1, conv2w, this.vec("stem.conv2.bias", MODEL_DIM), { kernel: 3, stride: 2, padSame: true })
    );
    if (h2.rows !== ASR_PADDED_FRAMES) {
      throw new Error(`stem produced ${h2.rows} frames, expected ${ASR_PADDED_FRAMES}`);
    }
    return slice(h2, 0, validFrames);
  }

  /** Strided conv stack straight off the waveform, then project to 768. */
  private sslFrontend(wave: Wave): Mat {
    let x = mat(wave.samples.length, 1, Float32Array.from(wave.samples));
    for (let i = 0; i < SSL_KERNELS.length; i++) {
      const w = this.matrix(`stem.conv${i + 1}.weight`);
      const b = this.vecAny(`stem.conv${i + 1}.bias`);
      x = geluInPlace(conv1d(x, w, b, { kernel: SSL_KERNELS[i], stride: SSL_STRIDES[i], padSame: false }));
      if (x.rows < 1) throw new Error("audio too short for one encoder frame");
    }
    const proj = addBiasInPlace(
      matmul(x, this.matrix("stem.proj.weight")),
      this.vec("stem.proj.bias", MODEL_DIM)
    );
    return layerNorm(proj, this.vec("stem.norm.gain", MODEL_DIM), this.vec("stem.norm.bias", MODEL_DIM));
  }
}
