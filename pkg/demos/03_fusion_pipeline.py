#!/usr/bin/env python3
# The prediction path end to end: two toy encoders produce layer stacks,
# the deeper half of each goes through per-layer adapters, softmax layer
# weights blend them, and the LSTM head pools a rating out of the fusion.

import numpy as np

from voxqual import dsp, fusion, model
from voxqual.fusion import select_deep_layers
from voxqual.representations import toy_encode

cfg = model.PipelineConfig(task="grbas-multi", encoder="toy", hidden=16, seed=0)
params = model.init_model(cfg)

sr = 16000
t = np.arange(int(0.5 * sr)) / sr
wave = dsp.Waveform((0.4 * np.sin(2 * np.pi * 180 * t)).astype(np.float32), sr)
feats = dsp.build_mel_features(wave)
print(f"input: {feats.num_frames} frames x {feats.dim} mel features")

stack = toy_encode(feats, params.asr_encoder, cfg.toy_encoder_config("asr"))
print(f"toy encoder stack: {stack.num_layers} layers of {stack.layers[0].shape}")

deep = select_deep_layers(stack)
print(f"deeper half: {len(deep)} layers feed {len(params.asr_adapters)} adapters")

adapted = [fusion.adapter_forward(s, a) for s, a in zip(deep, params.asr_adapters)]
print(f"adapter output: {adapted[0].shape} (FC -> LeakyReLU 0.05 -> LayerNorm)")

weights = params.asr_weighting.weights().data
print(f"layer weights at init: {np.round(weights, 4)} (sum {weights.sum():.6f})")

summed = fusion.weighted_layer_sum(adapted, params.asr_weighting)
inputs = model.UtteranceInputs(features=feats)
prediction = model.forward_utterance(params, cfg, inputs)
print(f"weighted sum: {summed.shape}; fused width: {2 * 120 + 240}")
print(f"untrained 5-indicator prediction: {np.round(prediction.data, 4)}")

# grade3 swaps the head's output for class probabilities.
cfg3 = model.PipelineConfig(task="grade3", encoder="toy", hidden=16, seed=0)
probs = model.forward_utterance(model.init_model(cfg3), cfg3, inputs)
print(f"grade3 probabilities: {np.round(probs.data, 4)} (sum {probs.data.sum():.6f})")
