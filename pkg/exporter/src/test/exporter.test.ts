import assert from "node:assert/strict";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { ASR_PADDED_FRAMES, Encoder, MODEL_DIM, N_LAYERS } from "../encoder.js";
import { logMel } from "../mel.js";
import { readRstk, writeRstk } from "../rstk.js";
import { readSafetensors, writeSafetensors } from "../safetensors.js";
import { Mat, mat, matmul } from "../tensor.js";
import { generateWeights } from "../weights.js";
import { readWav } from "../wav.js";

const SR = 16000;

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "rep-exporter-"));
}

function writeTestWav(path: string, seconds: number, freq = 220): void {
  const n = Math.round(seconds * SR);
  const data = Buffer.alloc(44 + n * 2);
  data.write("RIFF", 0, "ascii");
  data.writeUInt32LE(36 + n * 2, 4);
  data.write("WAVE", 8, "ascii");
  data.write("fmt ", 12, "ascii");
  data.writeUInt32LE(16, 16);
  data.writeUInt16LE(1, 20); // PCM
  data.writeUInt16LE(1, 22); // mono
  data.writeUInt32LE(SR, 24);
  data.writeUInt32LE(SR * 2, 28);
  data.writeUInt16LE(2, 32);
  data.writeUInt16LE(16, 34);
  data.write("data", 36, "ascii");
  data.writeUInt32LE(n * 2, 40);
  for (let i = 0; i < n; i++) {
    const v = 0.4 * Math.sin((2 * Math.PI * freq * i) / SR);
    data.writeInt16LE(Math.round(v * 32767), 44 + i * 2);
  }
  writeFileSync(path, data);
}

// small generation preset so the test weights stay light
const GEN = { seed: 7, attnDim: 24, ffDim: 32, stemDim: 16, heads: 2 };

test("matmul agrees with a naive triple loop", () => {
  const a = mat(3, 4);
  const b = mat(4, 2);
  for (let i = 0; i < a.data.length; i++) a.data[i] = Math.sin(i);
  for (let i = 0; i < b.data.length; i++) b.data[i] = Math.cos(i);
  const got = matmul(a, b);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 2; j++) {
      let want = 0;
      for (let k = 0; k < 4; k++) want = Math.fround(want + Math.fround(a.data[i * 4 + k] * b.data[k * 2 + j]));
      assert.ok(Math.abs(got.data[i * 2 + j] - want) < 1e-5);
    }
  }
});

test("log-mel frame count is floor(samples / hop)", () => {
  const samples = new Float32Array(SR); // 1 s
  for (let i = 0; i < SR; i++) samples[i] = 0.3 * Math.sin((2 * Math.PI * 300 * i) / SR);
  const mel = logMel(samples, SR);
  assert.equal(mel.rows, 100);
  assert.equal(mel.cols, 80);
  for (const v of mel.data) assert.ok(Number.isFinite(v));
});

test("safetensors round trip is bit exact", () => {
  const dir = tmp();
  const path = join(dir, "w.stw");
  const file = generateWeights("asr", GEN);
  writeSafetensors(path, file);
  const back = readSafetensors(path);
  assert.equal(back.metadata["model"], "asr");
  assert.equal(back.tensors.size, file.tensors.size);
  for (const [name, entry] of file.tensors) {
    const loaded = back.tensors.get(name)!;
    assert.deepEqual(loaded.shape, entry.shape);
    assert.deepEqual(Buffer.from(loaded.data.buffer), Buffer.from(entry.data.buffer));
  }
});

test("rstk round trip is bit exact", () => {
  const dir = tmp();
  const path = join(dir, "s.rstk");
  const layers: Mat[] = [];
  for (let l = 0; l < 2; l++) {
    const m = mat(5, 3);
    for (let i = 0; i < m.data.length; i++) m.data[i] = Math.sin(l * 100 + i);
    layers.push(m);
  }
  writeRstk(path, layers);
  const back = readRstk(path);
  assert.equal(back.layers, 2);
  assert.equal(back.frames, 5);
  assert.equal(back.dim, 3);
  for (let l = 0; l < 2; l++) {
    for (let i = 0; i < 15; i++) {
      assert.equal(back.data[l * 15 + i], layers[l].data[i]);
    }
  }
});

test("rstk reader reports truncation with byte counts", () => {
  const dir = tmp();
  const path = join(dir, "t.rstk");
  const m = mat(4, 3);
  writeRstk(path, [m, m]);
  const blob = readFileSync(path);
  writeFileSync(path, blob.subarray(0, blob.length - 5));
  assert.throws(() => readRstk(path), new RegExp(`expected ${blob.length} bytes total, got ${blob.length - 5}`));
});

test("asr export pads then trims: 2 s in, about 100 frames out", () => {
  const dir = tmp();
  const wavPath = join(dir, "a.wav");
  writeTestWav(wavPath, 2.0);
  const encoder = new Encoder(generateWeights("asr", GEN), "asr");
  const layers = encoder.encode(readWav(wavPath));
  assert.equal(layers.length, N_LAYERS);
  assert.equal(layers[0].cols, MODEL_DIM);
  assert.equal(layers[0].rows, 100); // ceil(floor(32000/160) / 2)
  assert.ok(layers[0].rows < ASR_PADDED_FRAMES);
  for (const layer of layers) for (const v of layer.data) assert.ok(Number.isFinite(v));
});

test("ssl export runs at about 50 frames per second", () => {
  const dir = tmp();
  const wavPath = join(dir, "s.wav");
  writeTestWav(wavPath, 1.0);
  const encoder = new Encoder(generateWeights("ssl", GEN), "ssl");
  const layers = encoder.encode(readWav(wavPath));
  assert.equal(layers.length, N_LAYERS);
  assert.equal(layers[0].cols, MODEL_DIM);
  assert.equal(layers[0].rows, 49);
});

test("export is deterministic for fixed input and weights", () => {
  const dir = tmp();
  const wavPath = join(dir, "d.wav");
  writeTestWav(wavPath, 0.5);
  const wave = readWav(wavPath);
  const encoder = new Encoder(generateWeights("ssl", GEN), "ssl");
  const a = encoder.encode(wave);
  const b = encoder.encode(wave);
  for (let l = 0; l < a.length; l++) {
    assert.deepEqual(Buffer.from(a[l].data.buffer), Buffer.from(b[l].data.buffer));
  }
});

test("model kind mismatch is rejected", () => {
  assert.throws(() => new Encoder(generateWeights("ssl", GEN), "asr"), /for model 'ssl'/);
});

test("missing tensors are named in the error", () => {
  const file = generateWeights("asr", GEN);
  file.tensors.delete("layers.3.ff1.weight");
  assert.throws(() => new Encoder(file, "asr"), /layers\.3\.ff1\.weight/);
});
