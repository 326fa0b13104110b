"""Manifest handling, corpus preprocessing, and a synthetic test corpus.

Preprocessing mirrors the clinical setups at desk scale: running speech is
cut into 2-4 s segments, vocalizations are built by concatenating one /a/
take with the /i/, /u/, /e/, /o/ vowels, labels are rater averages, and
splits are patient-disjoint. The synthetic corpus generates harmonic
vowel-like tones whose degradation level drives both the audio quality and
the labels, so training has real signal to find without clinical data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import Waveform, write_wav
from .metrics import bin_grade_index

SPLITS = ("train", "val", "test")
TASKS = ("grbas", "grade3")
_LABEL_DECIMALS = 6


@dataclass
class UtteranceRecord:
    utterance_id: str
    patient_id: str
    split: str
    task: str
    source: dict  # keys among {"wav", "asr", "ssl"}, values are relative paths
    grbas: np.ndarray | None = None  # 5 floats in [0, 3]
    grade_class: int | None = None  # 0 | 1 | 2

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"{self.utterance_id}: unknown split '{self.split}'")
        if self.task not in TASKS:
            raise ValueError(f"{self.utterance_id}: unknown task '{self.task}'")
        if self.grbas is not None:
            self.grbas = np.asarray(self.grbas, dtype=np.float64)
            if self.grbas.shape != (5,):
                raise ValueError(f"{self.utterance_id}: grbas labels must be 5 values")
            if self.grbas.min() < 0.0 or self.grbas.max() > 3.0:
                raise ValueError(f"{self.utterance_id}: grbas labels outside [0, 3]")
        if self.grade_class is not None and self.grade_class not in (0, 1, 2):
            raise ValueError(f"{self.utterance_id}: grade class must be 0, 1, or 2")
        if self.grbas is not None and self.grade_class is not None:
            if bin_grade_index(float(self.grbas[0])) != self.grade_class:
                raise ValueError(
                    f"{self.utterance_id}: grade class {self.grade_class} does not match "
                    f"the binned mean Grade {self.grbas[0]}"
                )


@dataclass
class Manifest:
    records: list
    tag: str = "synthetic"
    root: Path | None = None  # directory that relative source paths resolve against

    def validate(self) -> "Manifest":
        seen = set()
        owner: dict[str, str] = {}
        for r in self.records:
            if r.utterance_id in seen:
                raise ValueError(f"duplicate utterance id '{r.utterance_id}'")
            seen.add(r.utterance_id)
            prev = owner.setdefault(r.patient_id, r.split)
            if prev != r.split:
                raise ValueError(
                    f"patient '{r.patient_id}' spans splits '{prev}' and '{r.split}'"
                )
        return self

    def split(self, name: str) -> list:
        if name not in SPLITS:
            raise ValueError(f"unknown split '{name}'")
        return [r for r in self.records if r.split == name]

    def resolve(self, rel_path: str) -> Path:
        return (self.root / rel_path) if self.root is not None else Path(rel_path)


@dataclass
class SegmentSpec:
    min_s: float = 2.0
    max_s: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.min_s <= self.max_s):
            raise ValueError("need 0 < min_s <= max_s")


def segment_running_speech(wave: Waveform, spec: SegmentSpec) -> list:
    """Cut consecutive non-overlapping segments with seeded uniform lengths.

    Each cut draws a target length from [min_s, max_s]; the final segment is
    the remainder when that is shorter than the draw, and a trailing
    remainder below min_s is dropped.
    """
    sr = wave.sample_rate
    min_n = int(round(spec.min_s * sr))
    n = wave.samples.size
    if n < min_n:
        raise ValueError(
            f"waveform of {n / sr:.2f} s is shorter than the minimum segment {spec.min_s} s"
        )
    rng = np.random.default_rng(spec.seed)
    segments = []
    pos = 0
    while n - pos >= min_n:
        target = int(round(rng.uniform(spec.min_s, spec.max_s) * sr))
        length = min(target, n - pos)
        segments.append(Waveform(wave.samples[pos : pos + length], sr))
        pos += length
    return segments


def combine_vowels(a_takes: list, vowels: dict) -> list:
    """One utterance per /a/ take: the take followed by /i/, /u/, /e/, /o/."""
    if not a_takes:
        raise ValueError("need at least one /a/ take")
    order = ("i", "u", "e", "o")
    for name in order:
        if name not in vowels:
            raise ValueError(f"missing vowel /{name}/")
    out = []
    for a in a_takes:
        parts = [a] + [vowels[name] for name in order]
        rates = {p.sample_rate for p in parts}
        if len(rates) != 1:
            raise ValueError(f"sample rates differ across vowels: {sorted(rates)}")
        out.append(Waveform(np.concatenate([p.samples for p in parts]), a.sample_rate))
    return out


def average_rater_labels(ratings) -> np.ndarray:
    """Columnwise mean over raters; each rating row is the 5 GRBAS values."""
    arr = np.asarray(ratings, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != 5:
        raise ValueError(f"expected R x 5 ratings, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 3.0:
        raise ValueError("ratings must lie in [0, 3]")
    return arr.mean(axis=0)


def split_by_patient(records: list, ratios=(0.6, 0.2, 0.2), counts=None, seed: int = 0) -> Manifest:
    """Assign whole patients to train/val/test, deterministically per seed.

    With ratios, counts are floored and the remainder goes to train, except
    that val and test are first topped up to one patient each when their
    ratio is positive and enough patients remain. A single-patient corpus
    lands entirely in train with a warning.
    """
    patients = sorted({r.patient_id for r in records})
    rng = np.random.default_rng(seed)
    shuffled = [patients[i] for i in rng.permutation(len(patients))]
    p = len(patients)

    if counts is None:
        n_train, n_val, n_test = (int(ratio * p) for ratio in ratios)
        rest = p - (n_train + n_val + n_test)
        if n_train == 0 and rest:
            n_train += 1
            rest -= 1
        if n_val == 0 and ratios[1] > 0 and rest:
            n_val += 1
            rest -= 1
        if n_test == 0 and ratios[2] > 0 and rest:
            n_test += 1
            rest -= 1
        n_train += rest
    else:
        n_train, n_val, n_test = counts
        if n_train + n_val + n_test != p:
            raise ValueError(f"counts {counts} do not sum to {p} patients")

    if n_val == 0 or n_test == 0:
        warnings.warn(f"split of {p} patients leaves val/test empty: {(n_train, n_val, n_test)}")

    assignment = {}
    for pid in shuffled[:n_train]:
        assignment[pid] = "train"
    for pid in shuffled[n_train : n_train + n_val]:
        assignment[pid] = "val"
    for pid in shuffled[n_train + n_val :]:
        assignment[pid] = "test"

    out = [
        UtteranceRecord(
            r.utterance_id, r.patient_id, assignment[r.patient_id], r.task,
            dict(r.source), r.grbas, r.grade_class,
        )
        for r in records
    ]
    return Manifest(out, tag="split").validate()


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def _synth_wave(utt_rng, f0: float, degradation: float, sr: int = 16000) -> Waveform:
    dur = float(utt_rng.uniform(0.45, 0.65))
    t = np.arange(int(dur * sr)) / sr
    tone = np.zeros_like(t)
    for h in range(1, 7):
        tone += np.sin(2 * np.pi * f0 * h * t + utt_rng.uniform(0, 2 * np.pi)) / h
    tone *= 0.35 / np.max(np.abs(tone))
    # degradation drives additive noise and slow amplitude jitter
    level = degradation / 3.0
    noise = utt_rng.normal(0.0, 0.005 + 0.12 * level, size=t.size)
    wobble = 1.0 + 0.3 * level * np.sin(2 * np.pi * utt_rng.uniform(3.0, 8.0) * t)
    samples = np.clip(tone * wobble + noise, -1.0, 1.0).astype(np.float32)
    return Waveform(samples, sr)


def synth_dataset(n_patients: int, utt_per_patient: int, seed: int, out_dir) -> Manifest:
    """Generate audio plus labels tied to a per-patient degradation level.

    Degradation levels are evenly spaced over (0, 3) and permuted by seed,
    so the Grade label is strictly monotone in the underlying level. The
    mean Grade equals the level exactly; the other four indicators get
    small seeded offsets. Fixed seeds reproduce the corpus bit for bit.
    """
    if n_patients < 1 or utt_per_patient < 1:
        raise ValueError("need positive patient and utterance counts")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    levels = np.linspace(0.05, 2.95, n_patients)
    levels = levels[rng.permutation(n_patients)]
    gap = 2.9 / max(n_patients - 1, 1)
    offset_scale = min(0.04, gap / 3.0)
    f0s = rng.uniform(100.0, 250.0, size=n_patients)

    records = []
    for p in range(n_patients):
        d = float(levels[p])
        offsets = rng.uniform(-offset_scale, offset_scale, size=4)
        grbas = np.round(
            np.clip(np.concatenate([[d], d + offsets]), 0.0, 3.0), _LABEL_DECIMALS
        )
        grade = bin_grade_index(float(grbas[0]))
        pid = f"p{p:03d}"
        for u in range(utt_per_patient):
            utt_rng = np.random.default_rng([seed, p, u])
            wave = _synth_wave(utt_rng, float(f0s[p]), d)
            rel = f"audio/{pid}_u{u:02d}.wav"
            write_wav(out_dir / rel, wave)
            records.append(
                UtteranceRecord(
                    utterance_id=f"{pid}_u{u:02d}",
                    patient_id=pid,
                    split="train",  # reassigned below
                    task="grbas",
                    source={"wav": rel},
                    grbas=grbas,
                    grade_class=grade,
                )
            )

    manifest = split_by_patient(records, seed=seed)
    manifest.tag = "synthetic"
    manifest.root = out_dir
    return manifest


# ---------------------------------------------------------------------------
# manifest TSV serialization
# ---------------------------------------------------------------------------


def _source_str(source: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(source.items()))


def _parse_source(text: str) -> dict:
    out = {}
    for part in text.split(";"):
        if part:
            k, _, v = part.partition("=")
            out[k] = v
    return out


def save_manifest(path, manifest: Manifest) -> None:
    """One record per line: id, patient, split, task, source, g r b a s, grade."""
    lines = []
    for r in manifest.records:
        grbas = (
            ["" for _ in range(5)]
            if r.grbas is None
            else [f"{v:.{_LABEL_DECIMALS}f}" for v in r.grbas]
        )
        grade = "" if r.grade_class is None else str(r.grade_class)
        lines.append(
            "\t".join(
                [r.utterance_id, r.patient_id, r.split, r.task, _source_str(r.source)]
                + grbas
                + [grade]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, tag: str = "loaded") -> Manifest:
    path = Path(path)
    records = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 11:
            raise ValueError(f"{path}:{ln}: expected 11 tab-separated fields, got {len(fields)}")
        uid, pid, split, task, source = fields[:5]
        grbas_fields = fields[5:10]
        grade_field = fields[10]
        grbas = None
        if any(grbas_fields):
            if not all(grbas_fields):
                raise ValueError(f"{path}:{ln}: partial grbas labels")
            grbas = np.array([float(v) for v in grbas_fields])
        grade = int(grade_field) if grade_field else None
        records.append(
            UtteranceRecord(uid, pid, split, task, _parse_source(source), grbas, grade)
        )
    manifest = Manifest(records, tag=tag, root=path.parent)
    return manifest.validate()
