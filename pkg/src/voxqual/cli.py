"""Command-line entry point for batch use.

All paths are resolved against --workdir; no environment variables or
global state, so an invocation is fully described by its argv. Every
subcommand that takes --seed is bit-deterministic for fixed inputs.
Exit codes: 0 success, 2 usage error, 1 any other failure (with one
machine-parsable `error: ...` line on stderr).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import gradsuite, metrics, training
from .data import (
    SegmentSpec,
    combine_vowels,
    load_manifest,
    save_manifest,
    segment_running_speech,
    split_by_patient,
    synth_dataset,
)
from .dsp import read_wav, write_wav
from .model import PipelineConfig, indicator_names, predict_outcome, prepare_inputs
from .training import TrainConfig, load_model_from_checkpoint, train


def _workdir_path(args, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else Path(args.workdir) / p


def cmd_synth(args) -> int:
    out_dir = _workdir_path(args, args.out)
    manifest = synth_dataset(args.patients, args.utt, seed=args.seed, out_dir=out_dir)
    save_manifest(out_dir / "manifest.tsv", manifest)
    counts = {s: len({r.patient_id for r in manifest.split(s)}) for s in ("train", "val", "test")}
    print(f"wrote {len(manifest.records)} utterances to {out_dir} (patients per split: {counts})")
    return 0


def cmd_segment(args) -> int:
    wave = read_wav(_workdir_path(args, args.wav))
    spec = SegmentSpec(min_s=args.min_s, max_s=args.max_s, seed=args.seed)
    segments = segment_running_speech(wave, spec)
    out_dir = _workdir_path(args, args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, seg in enumerate(segments):
        write_wav(out_dir / f"segment_{i:03d}.wav", seg)
    print(f"wrote {len(segments)} segments to {out_dir}")
    return 0


def cmd_combine_vowels(args) -> int:
    takes = [read_wav(_workdir_path(args, p)) for p in args.a]
    vowels = {name: read_wav(_workdir_path(args, getattr(args, name))) for name in "iueo"}
    combined = combine_vowels(takes, vowels)
    out_dir = _workdir_path(args, args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, utt in enumerate(combined):
        write_wav(out_dir / f"combined_{i:03d}.wav", utt)
    print(f"wrote {len(combined)} combined utterances to {out_dir}")
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(_workdir_path(args, args.manifest))
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3:
        raise ValueError(f"--ratios needs three comma-separated values, got '{args.ratios}'")
    counts = None
    if args.counts:
        counts = tuple(int(x) for x in args.counts.split(","))
    out = split_by_patient(manifest.records, ratios=ratios, counts=counts, seed=args.seed)
    out.root = manifest.root
    save_manifest(_workdir_path(args, args.out), out)
    print(f"wrote split manifest to {args.out}")
    return 0


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        task=args.task,
        encoder=args.encoder,
        hidden=args.hidden,
        seed=args.seed,
        distance_floor=args.distance_floor,
    )


def cmd_train(args) -> int:
    manifest = load_manifest(_workdir_path(args, args.manifest))
    model_cfg = _pipeline_config(args)
    train_cfg = TrainConfig(
        max_epochs=args.max_epochs,
        lr0=args.lr,
        seed=args.seed,
        target_train_loss=args.target_train_loss,
    )
    result = train(manifest, model_cfg, train_cfg)
    ckpt = _workdir_path(args, args.checkpoint)
    training.save_checkpoint(
        ckpt,
        result.best_state,
        training.checkpoint_meta(model_cfg, train_cfg, result.best_epoch, result.best_val_loss),
    )
    if args.final_checkpoint:
        training.save_checkpoint(
            _workdir_path(args, args.final_checkpoint),
            training.snapshot_params(result.params),
            training.checkpoint_meta(
                model_cfg, train_cfg, result.records[-1].epoch, result.records[-1].val_loss
            ),
        )
    if args.records:
        training.save_epoch_records(_workdir_path(args, args.records), result.records)
    last = result.records[-1]
    print(
        f"trained {last.epoch} epochs: train_loss={last.train_loss:.6f} "
        f"val_loss={last.val_loss:.6f} best_epoch={result.best_epoch}"
    )
    return 0


def _outcomes_for_split(args):
    manifest = load_manifest(_workdir_path(args, args.manifest))
    params, model_cfg, _ = load_model_from_checkpoint(_workdir_path(args, args.checkpoint))
    records = manifest.split(args.split)
    if not records:
        raise ValueError(f"split '{args.split}' is empty")
    outcomes = [
        predict_outcome(params, model_cfg, r, prepare_inputs(r, manifest, model_cfg))
        for r in records
    ]
    return outcomes, model_cfg


def cmd_evaluate(args) -> int:
    outcomes, model_cfg = _outcomes_for_split(args)
    if model_cfg.task == "grade3":
        report = metrics.evaluate_classification(outcomes)
        lines = metrics.classification_report_lines(report)
    else:
        report = metrics.evaluate_regression(outcomes, indicator_names(model_cfg.task))
        lines = metrics.regression_report_lines(report)
    for line in lines:
        print(line)
    return 0


def cmd_predict(args) -> int:
    outcomes, model_cfg = _outcomes_for_split(args)
    csv_text = metrics.scatter_csv(outcomes, indicator_names(model_cfg.task))
    out = _workdir_path(args, args.out)
    out.write_text(csv_text, encoding="utf-8")
    print(f"wrote {len(outcomes)} utterance predictions to {out}")
    return 0


def cmd_export_scatter(args) -> int:
    outcomes, model_cfg = _outcomes_for_split(args)
    names = indicator_names(model_cfg.task)
    if args.level == "patient":
        groups = metrics.group_by_patient(outcomes)
        rows = [
            metrics.PredictionOutcome(
                f"patient:{g.patient_id}", g.patient_id, metrics.aggregate_regression(g), g.label
            )
            for g in groups
        ]
    else:
        rows = outcomes
    out = _workdir_path(args, args.out)
    out.write_text(metrics.scatter_csv(rows, names), encoding="utf-8")
    print(f"wrote {args.level}-level scatter for {len(rows)} rows to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.monotonic()
    results = gradsuite.run_full_suite(seed=args.seed, pipeline_cases=args.pipeline_cases)
    elapsed = time.monotonic() - t0
    failures = 0
    for r in results:
        print(r.line())
        failures += 0 if r.passed else 1
    print(f"gradcheck: {len(results)} checks, {failures} failures, {elapsed:.1f}s")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxqual",
        description="Voice-quality estimation pipeline: synthesize, preprocess, train, evaluate.",
    )
    parser.add_argument("--workdir", default=".", help="root that relative paths resolve against")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labelled corpus")
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--utt", type=int, required=True, help="utterances per patient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth", help="output directory")

    p = add("segment", cmd_segment, "cut running speech into 2-4 s segments")
    p.add_argument("--wav", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-s", type=float, default=2.0)
    p.add_argument("--max-s", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)

    p = add("combine-vowels", cmd_combine_vowels, "join /a/ takes with /i/,/u/,/e/,/o/")
    p.add_argument("--a", action="append", required=True, help="an /a/ take (repeatable)")
    for vowel in "iueo":
        p.add_argument(f"--{vowel}", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("split", cmd_split, "assign whole patients to train/val/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--counts", default=None, help="explicit patient counts, e.g. 6,2,2")
    p.add_argument("--seed", type=int, default=0)

    p = add("train", cmd_train, "train on a manifest and write checkpoints")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True, help="best-validation checkpoint path")
    p.add_argument("--final-checkpoint", default=None, help="also save the final epoch state")
    p.add_argument("--records", default=None, help="epoch record stream (csv lines)")
    p.add_argument("--task", choices=("grbas-single", "grbas-multi", "grade3"), default="grbas-single")
    p.add_argument("--encoder", choices=("toy", "import"), default="toy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, required=True)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--distance-floor", type=int, default=0)
    p.add_argument("--target-train-loss", type=float, default=None, help="optional early-exit threshold")

    for name, fn, help_text in (
        ("evaluate", cmd_evaluate, "print utterance- and patient-level reports"),
        ("predict", cmd_predict, "write utterance predictions as scatter CSV"),
    ):
        p = add(name, fn, help_text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", choices=("train", "val", "test"), default="test")
        if name == "predict":
            p.add_argument("--out", required=True)

    p = add("export-scatter", cmd_export_scatter, "scatter CSV at utterance or patient level")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--level", choices=("utterance", "patient"), default="utterance")
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "run the full gradient-check suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pipeline-cases", type=int, default=102)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
