#!/usr/bin/env python3
# Train on a synthetic corpus: SGD with batch size 1, learning rate halved
# after four stagnant validation epochs, checkpoint at the best val loss.

import tempfile
from pathlib import Path

import numpy as np

from voxqual import data, model, training

with tempfile.TemporaryDirectory() as td:
    corpus = data.synth_dataset(n_patients=4, utt_per_patient=4, seed=5, out_dir=td)
    by_split = {s: len(corpus.split(s)) for s in ("train", "val", "test")}
    print(f"synthetic corpus: {by_split} utterances per split")

    cfg = model.PipelineConfig(task="grbas-single", encoder="toy", hidden=32, seed=5)
    tcfg = training.TrainConfig(max_epochs=40, lr0=0.01, seed=5)
    result = training.train(corpus, cfg, tcfg)

    for rec in result.records[::8] + result.records[-1:]:
        print(f"  epoch {rec.epoch:3d}: train {rec.train_loss:.4f}  "
              f"val {rec.val_loss:.4f}  lr {rec.lr:.2e}")
    print(f"best validation loss {result.best_val_loss:.4f} at epoch {result.best_epoch}")

    ckpt = Path(td) / "best.ckpt"
    training.save_checkpoint(
        ckpt, result.best_state,
        training.checkpoint_meta(cfg, tcfg, result.best_epoch, result.best_val_loss),
    )
    params, cfg_back, meta = training.load_model_from_checkpoint(ckpt)
    print(f"checkpoint round trip: epoch {meta['epoch']}, task {cfg_back.task}")

    # the schedule in isolation: four stagnant epochs trigger a halving
    events, lr = training.plateau_schedule([1.0, 1.0, 1.0, 1.0, 1.0])
    print(f"flat validation history halves after epoch {events[0]}; lr now {lr:.1e}")

    errs = []
    for record in corpus.split("train"):
        inputs = model.prepare_inputs(record, corpus, cfg)
        pred = model.forward_utterance(result.params, cfg, inputs)
        errs.append((float(pred.data[0]) - float(record.grbas[0])) ** 2)
    print(f"train MSE after {len(result.records)} epochs: {np.mean(errs):.4f}")
