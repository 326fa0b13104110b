// RSTK interchange: magic "RSTK", u32 version 1, u32 L, T, D, then
// little-endian float32 values in [layer][frame][dim] order.

import { readFileSync, writeFileSync } from "node:fs";
import { Mat } from "./tensor.js";

const MAGIC = "RSTK";
const VERSION = 1;

export function writeRstk(path: string, layers: Mat[]): void {
  const l = layers.length;
  const t = layers[0].rows;
  const d = layers[0].cols;
  for (const layer of layers) {
    if (layer.rows !== t || layer.cols !== d) {
      throw new Error(`rstk: layer shape ${layer.rows}x${layer.cols} differs from ${t}x${d}`);
    }
  }
  const header = Buffer.alloc(20);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(l, 8);
  header.writeUInt32LE(t, 12);
  header.writeUInt32LE(d, 16);
  const payload = Buffer.alloc(4 * l * t * d);
  for (let i = 0; i < l; i++) {
    for (let j = 0; j < t * d; j++) {
      payload.writeFloatLE(layers[i].data[j], (i * t * d + j) * 4);
    }
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}

export interface RstkStack {
  layers: number;
  frames: number;
  dim: number;
  data: Float32Array; // [layer][frame][dim]
}

export function readRstk(path: string): RstkStack {
  const buf = readFileSync(path);
  if (buf.length < 20) throw new Error(`${path}: truncated header, got ${buf.length} bytes`);
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic at byte offset 0`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version} at byte offset 4`);
  const l = buf.readUInt32LE(8);
  const t = buf.readUInt32LE(12);
  const d = buf.readUInt32LE(16);
  const expected = 20 + 4 * l * t * d;
  if (buf.length !== expected) {
    throw new Error(`${path}: expected ${expected} bytes total, got ${buf.length}`);
  }
  const data = new Float32Array(l * t * d);
  for (let i = 0; i < data.length; i++) data[i] = buf.readFloatLE(20 + i * 4);
  return { layers: l, frames: t, dim: d, data };
}
