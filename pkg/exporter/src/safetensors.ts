// safetensors container, float32 only: u64 LE header length, JSON header
// mapping names to {dtype, shape, data_offsets}, then the raw tensor bytes.

import { readFileSync, writeFileSync } from "node:fs";

export interface TensorEntry {
  shape: number[];
  data: Float32Array;
}

export interface TensorFile {
  tensors: Map<string, TensorEntry>;
  metadata: Record<string, string>;
}

export function writeSafetensors(path: string, file: TensorFile): void {
  const header: Record<string, unknown> = {};
  if (Object.keys(file.metadata).length) header["__metadata__"] = file.metadata;
  let offset = 0;
  const chunks: Buffer[] = [];
  const names = [...file.tensors.keys()].sort();
  for (const name of names) {
    const entry = file.tensors.get(name)!;
    const bytes = Buffer.from(entry.data.buffer, entry.data.byteOffset, entry.data.byteLength);
    header[name] = { dtype: "F32", shape: entry.shape, data_offsets: [offset, offset + bytes.length] };
    chunks.push(bytes);
    offset += bytes.length;
  }
  const headerJson = Buffer.from(JSON.stringify(header), "utf-8");
  const lenBuf = Buffer.alloc(8);
  lenBuf.writeBigUInt64LE(BigInt(headerJson.length));
  writeFileSync(path, Buffer.concat([lenBuf, headerJson, ...chunks]));
}

export function readSafetensors(path: string): TensorFile {
  const buf = readFileSync(path);
  if (buf.length < 8) throw new Error(`${path}: truncated safetensors header`);
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (8 + headerLen > buf.length) throw new Error(`${path}: header length ${headerLen} exceeds file`);
  const header = JSON.parse(buf.toString("utf-8", 8, 8 + headerLen));
  const base = 8 + headerLen;
  const tensors = new Map<string, TensorEntry>();
  let metadata: Record<string, string> = {};
  for (const [name, value] of Object.entries(header)) {
    if (name === "__metadata__") {
      metadata = value as Record<string, string>;
      continue;
    }
    const entry = value as { dtype: string; shape: number[]; data_offsets: [number, number] };
    if (entry.dtype !== "F32") throw new Error(`${path}: tensor '${name}' has dtype ${entry.dtype}, only F32 is supported`);
    const [start, end] = entry.data_offsets;
    const count = (end - start) / 4;
    const expected = entry.shape.reduce((a, b) => a * b, 1);
    if (count !== expected) throw new Error(`${path}: tensor '${name}' byte span does not match shape`);
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) data[i] = buf.readFloatLE(base + start + i * 4);
    tensors.set(name, { shape: entry.shape, data });
  }
  return { tensors, metadata };
}
