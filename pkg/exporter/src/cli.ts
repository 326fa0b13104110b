#!/usr/bin/env node
// export:      run a WAV through an encoder, write per-layer stacks as RSTK
// gen-weights:  write a seeded weights file with the exporter's schema

import { Encoder, ModelKind } from "./encoder.js";
import { readSafetensors, writeSafetensors } from "./safetensors.js";
import { readWav } from "./wav.js";
import { writeRstk } from "./rstk.js";
import { DEFAULT_GEN, generateWeights } from "./weights.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got '${argv.slice(i).join(" ")}'`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

function required(args: Map<string, string>, name: string): string {
  const value = args.get(name);
  if (value === undefined) throw new Error(`missing required flag --${name}`);
  return value;
}

function modelKind(value: string): ModelKind {
  if (value !== "asr" && value !== "ssl") throw new Error(`--model must be asr or ssl, got '${value}'`);
  return value;
}

function cmdExport(args: Map<string, string>): void {
  const kind = modelKind(required(args, "model"));
  const wav = required(args, "wav");
  const out = required(args, "out");
  const weightsPath = required(args, "weights");

  const encoder = new Encoder(readSafetensors(weightsPath), kind);
  const wave = readWav(wav);
  const layers = encoder.encode(wave);
  writeRstk(out, layers);
  console.log(`wrote ${layers.length} x ${layers[0].rows} x ${layers[0].cols} stack to ${out}`);
}

function cmdGenWeights(args: Map<string, string>): void {
  const kind = modelKind(required(args, "model"));
  const out = required(args, "out");
  const file = generateWeights(kind, {
    seed: Number(args.get("seed") ?? "0"),
    attnDim: Number(args.get("attn-dim") ?? DEFAULT_GEN.attnDim),
    ffDim: Number(args.get("ff-dim") ?? DEFAULT_GEN.ffDim),
    stemDim: Number(args.get("stem-dim") ?? DEFAULT_GEN.stemDim),
    heads: Number(args.get("heads") ?? DEFAULT_GEN.heads),
  });
  writeSafetensors(out, file);
  console.log(`wrote ${file.tensors.size} tensors (${kind}) to ${out}`);
}

function main(): number {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "export") cmdExport(parseArgs(rest));
    else if (command === "gen-weights") cmdGenWeights(parseArgs(rest));
    else {
      console.error(
        "usage: cli.js export --model {asr|ssl} --wav IN --out OUT --weights FILE\n" +
          "       cli.js gen-weights --model {asr|ssl} --out FILE [--seed N] [--attn-dim N] [--ff-dim N] [--stem-dim N] [--heads N]"
      );
      return 2;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

process.exit(main());
