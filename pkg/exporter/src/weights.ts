// Seeded weight generation with the exporter's tensor schema. The residual
// width is pinned at 768 and the layer count at 12; stem channels and the
// attention/feed-forward widths are free, so test weights stay small.

import { MODEL_DIM, ModelKind, N_LAYERS, SSL_KERNELS } from "./encoder.js";
import { N_MELS } from "./mel.js";
import { TensorEntry, TensorFile } from "./safetensors.js";

export interface GenOptions {
  seed: number;
  attnDim: number;
  ffDim: number;
  stemDim: number; // asr conv1 channels / ssl conv channels
  heads: number;
}

export const DEFAULT_GEN: Omit<GenOptions, "seed"> = {
  attnDim: 192,
  ffDim: 512,
  stemDim: 128,
  heads: 6,
};

// sfc32: small, fast, deterministic across platforms
function seededRng(seed: number): () => number {
  let a = 0x9e3779b9 ^ seed;
  let b = 0x243f6a88 ^ (seed << 13);
  let c = 0xb7e15162 ^ (seed >> 7);
  let d = seed | 1;
  return () => {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0;
    let t = (a + b) | 0;
    a = b ^ (b >>> 9);
    b = (c + (c << 3)) | 0;
    c = (c << 21) | (c >>> 11);
    d = (d + 1) | 0;
    t = (t + d) | 0;
    c = (c + t) | 0;
    return (t >>> 0) / 4294967296;
  };
}

export function generateWeights(kind: ModelKind, options: GenOptions): TensorFile {
  const rng = seededRng(options.seed);
  const tensors = new Map<string, TensorEntry>();

  const uniform = (shape: number[], fanIn: number, fanOut: number): TensorEntry => {
    const size = shape.reduce((x, y) => x * y, 1);
    const bound = Math.sqrt(6 / (fanIn + fanOut));
    const data = new Float32Array(size);
    for (let i = 0; i < size; i++) data[i] = (rng() * 2 - 1) * bound;
    return { shape, data };
  };
  const zeros = (shape: number[]): TensorEntry => ({
    shape,
    data: new Float32Array(shape.reduce((x, y) => x * y, 1)),
  });
  const ones = (shape: number[]): TensorEntry => ({
    shape,
    data: new Float32Array(shape.reduce((x, y) => x * y, 1)).fill(1),
  });

  if (kind === "asr") {
    tensors.set("stem.conv1.weight", uniform([3 * N_MELS, options.stemDim], 3 * N_MELS, options.stemDim));
    tensors.set("stem.conv1.bias", zeros([options.stemDim]));
    tensors.set("stem.conv2.weight", uniform([3 * options.stemDim, MODEL_DIM], 3 * options.stemDim, MODEL_DIM));
    tensors.set("stem.conv2.bias", zeros([MODEL_DIM]));
  } else {
    let channels = 1;
    for (let i = 0; i < SSL_KERNELS.length; i++) {
      const out = options.stemDim;
      tensors.set(
        `stem.conv${i + 1}.weight`,
        uniform([SSL_KERNELS[i] * channels, out], SSL_KERNELS[i] * channels, out)
      );
      tensors.set(`stem.conv${i + 1}.bias`, zeros([out]));
      channels = out;
    }
    tensors.set("stem.proj.weight", uniform([options.stemDim, MODEL_DIM], options.stemDim, MODEL_DIM));
    tensors.set("stem.proj.bias", zeros([MODEL_DIM]));
    tensors.set("stem.norm.gain", ones([MODEL_DIM]));
    tensors.set("stem.norm.bias", zeros([MODEL_DIM]));
  }

  for (let i = 0; i < N_LAYERS; i++) {
    const p = `layers.${i}`;
    tensors.set(`${p}.ln1.gain`, ones([MODEL_DIM]));
    tensors.set(`${p}.ln1.bias`, zeros([MODEL_DIM]));
    for (const gate of ["q", "k", "v"]) {
      tensors.set(`${p}.attn.${gate}.weight`, uniform([MODEL_DIM, options.attnDim], MODEL_DIM, options.attnDim));
      tensors.set(`${p}.attn.${gate}.bias`, zeros([options.attnDim]));
    }
    tensors.set(`${p}.attn.o.weight`, uniform([options.attnDim, MODEL_DIM], options.attnDim, MODEL_DIM));
    tensors.set(`${p}.attn.o.bias`, zeros([MODEL_DIM]));
    tensors.set(`${p}.ln2.gain`, ones([MODEL_DIM]));
    tensors.set(`${p}.ln2.bias`, zeros([MODEL_DIM]));
    tensors.set(`${p}.ff1.weight`, uniform([MODEL_DIM, options.ffDim], MODEL_DIM, options.ffDim));
    tensors.set(`${p}.ff1.bias`, zeros([options.ffDim]));
    tensors.set(`${p}.ff2.weight`, uniform([options.ffDim, MODEL_DIM], options.ffDim, MODEL_DIM));
    tensors.set(`${p}.ff2.bias`, zeros([MODEL_DIM]));
  }

  return {
    tensors,
    metadata: { model: kind, n_heads: String(options.heads), seed: String(options.seed) },
  };
}
