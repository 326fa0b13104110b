// Minimal RIFF/WAVE reader: mono 16 kHz, 16-bit PCM or 32-bit float.

import { readFileSync } from "node:fs";

export interface Wave {
  samples: Float32Array;
  sampleRate: number;
}

export function readWav(path: string, expectRate = 16000): Wave {
  const buf = readFileSync(path);
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }
  let offset = 12;
  let format = 0;
  let channels = 0;
  let rate = 0;
  let bits = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buf.length) {
    const id = buf.toString("ascii", offset, offset + 4);
    const size = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (id === "fmt ") {
      format = buf.readUInt16LE(body);
      channels = buf.readUInt16LE(body + 2);
      rate = buf.readUInt32LE(body + 4);
      bits = buf.readUInt16LE(body + 14);
    } else if (id === "data") {
      data = buf.subarray(body, body + size);
    }
    offset = body + size + (size % 2);
  }
  if (data === null) throw new Error(`${path}: no data chunk`);
  if (channels !== 1) throw new Error(`${path}: expected mono audio, got ${channels} channels`);
  if (rate !== expectRate) throw new Error(`${path}: expected ${expectRate} Hz, got ${rate} Hz`);

  let samples: Float32Array;
  if (format === 1 && bits === 16) {
    samples = new Float32Array(data.length >> 1);
    for (let i = 0; i < samples.length; i++) samples[i] = data.readInt16LE(i * 2) / 32768;
  } else if (format === 3 && bits === 32) {
    samples = new Float32Array(data.length >> 2);
    for (let i = 0; i < samples.length; i++) samples[i] = data.readFloatLE(i * 4);
  } else {
    throw new Error(`${path}: unsupported format ${format} with ${bits} bits`);
  }
  if (samples.length === 0) throw new Error(`${path}: empty audio`);
  return { samples, sampleRate: rate };
}
