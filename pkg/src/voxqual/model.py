"""Full pipeline assembly: features -> encoders -> fusion -> head.

In toy mode two small trainable transformer encoders (one per stream)
consume the mel features, so gradient flow reaches every parameter
including the encoders. In import mode the encoder activations come from
RSTK files and act as constants; only adapters, layer weights, and the
head train. The mel stream is always fused in alongside the two encoder
streams.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor
from .data import Manifest, UtteranceRecord
from .dsp import FeatureMatrix, MelConfig, build_mel_features, read_wav
from .fusion import (
    ADAPTER_DIM,
    LayerWeighting,
    adapter_forward,
    fuse_features,
    init_adapter,
    init_layer_weighting,
    select_deep_layers,
    weighted_layer_sum,
)
from .head import HeadConfig, HeadParams, head_forward, init_head
from .losses import ClassPrediction, mae_loss, scdw_ce_loss
from .metrics import GRBAS_INDICATORS, PredictionOutcome
from .representations import (
    EncoderConfig,
    RepresentationStack,
    align_frames,
    import_stack,
    init_toy_encoder,
    toy_encode,
    trim_padding,
)

MEL_STREAM_DIM = 240  # 3 * 80 mel features
FUSED_DIM = 2 * ADAPTER_DIM + MEL_STREAM_DIM


@dataclass
class PipelineConfig:
    task: str = "grbas-single"
    encoder: str = "toy"  # "toy" | "import"
    hidden: int = 128
    seed: int = 0
    toy_layers: int = 4
    toy_dim: int = 32
    toy_heads: int = 2
    toy_ff: int = 64
    import_layers: int = 12
    import_dim: int = 768
    asr_frame_rate: float = 50.0  # used to derive valid frames for padding removal
    ssl_frame_rate: float = 50.0
    distance_floor: int = 0

    def __post_init__(self):
        if self.encoder not in ("toy", "import"):
            raise ValueError(f"unknown encoder mode '{self.encoder}'")

    def head_config(self) -> HeadConfig:
        return HeadConfig(self.task, hidden=self.hidden)

    def toy_encoder_config(self, stream: str) -> EncoderConfig:
        # distinct seeds per stream so the two toy encoders differ
        offset = {"asr": 1, "ssl": 2}[stream]
        return EncoderConfig(
            n_layers=self.toy_layers,
            model_dim=self.toy_dim,
            n_heads=self.toy_heads,
            ff_dim=self.toy_ff,
            seed=self.seed * 7919 + offset,
        )

    @property
    def adapter_input_dim(self) -> int:
        return self.toy_dim if self.encoder == "toy" else self.import_dim

    @property
    def adapters_per_stream(self) -> int:
        layers = self.toy_layers if self.encoder == "toy" else self.import_layers
        return layers // 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**d)


@dataclass
class ModelParams:
    asr_encoder: object  # ToyEncoderParams | None
    ssl_encoder: object
    asr_adapters: list
    ssl_adapters: list
    asr_weighting: LayerWeighting
    ssl_weighting: LayerWeighting
    head: HeadParams

    def named(self):
        if self.asr_encoder is not None:
            yield from self.asr_encoder.named("asr_enc")
        if self.ssl_encoder is not None:
            yield from self.ssl_encoder.named("ssl_enc")
        for i, a in enumerate(self.asr_adapters):
            yield from a.named(f"asr_adapter{i}")
        for i, a in enumerate(self.ssl_adapters):
            yield from a.named(f"ssl_adapter{i}")
        yield from self.asr_weighting.named("asr_weighting")
        yield from self.ssl_weighting.named("ssl_weighting")
        yield from self.head.named("head")

    def tensors(self):
        return [t for _, t in self.named()]

    def zero_grads(self):
        for t in self.tensors():
            t.zero_grad()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors())


def init_model(cfg: PipelineConfig, feature_dim: int = MEL_STREAM_DIM, dtype=np.float32) -> ModelParams:
    rng = np.random.default_rng(cfg.seed)
    if cfg.encoder == "toy":
        asr_enc = init_toy_encoder(feature_dim, cfg.toy_encoder_config("asr"), dtype)
        ssl_enc = init_toy_encoder(feature_dim, cfg.toy_encoder_config("ssl"), dtype)
    else:
        asr_enc = ssl_enc = None
    n = cfg.adapters_per_stream
    d_in = cfg.adapter_input_dim
    return ModelParams(
        asr_encoder=asr_enc,
        ssl_encoder=ssl_enc,
        asr_adapters=[init_adapter(d_in, rng, dtype) for _ in range(n)],
        ssl_adapters=[init_adapter(d_in, rng, dtype) for _ in range(n)],
        asr_weighting=init_layer_weighting(n, dtype),
        ssl_weighting=init_layer_weighting(n, dtype),
        head=init_head(feature_dim + 2 * ADAPTER_DIM, cfg.head_config(), rng, dtype),
    )


@dataclass
class UtteranceInputs:
    features: FeatureMatrix
    asr_stack: RepresentationStack | None = None
    ssl_stack: RepresentationStack | None = None


def prepare_inputs(record: UtteranceRecord, manifest: Manifest, cfg: PipelineConfig) -> UtteranceInputs:
    """Load audio (and stacks in import mode) and derive the model inputs.

    In import mode the ASR stack is trimmed to ceil(duration * frame_rate)
    frames when it arrives longer, which removes fixed-window padding.
    """
    wave = read_wav(manifest.resolve(record.source["wav"]))
    features = build_mel_features(wave, MelConfig())
    if cfg.encoder == "toy":
        return UtteranceInputs(features=features)
    stacks = {}
    for stream, rate in (("asr", cfg.asr_frame_rate), ("ssl", cfg.ssl_frame_rate)):
        if stream not in record.source:
            raise ValueError(f"{record.utterance_id}: import mode needs an '{stream}' stack path")
        stack = import_stack(manifest.resolve(record.source[stream]), frame_rate=rate)
        valid = min(stack.num_frames, math.ceil(wave.duration * rate))
        stacks[stream] = trim_padding(stack, valid)
    return UtteranceInputs(features=features, asr_stack=stacks["asr"], ssl_stack=stacks["ssl"])


def _streams_for_fusion(params: ModelParams, cfg: PipelineConfig, inputs: UtteranceInputs):
    """The deep-layer slices per stream plus the mel tensor, at a common T."""
    if cfg.encoder == "toy":
        asr_stack = toy_encode(inputs.features, params.asr_encoder, cfg.toy_encoder_config("asr"))
        ssl_stack = toy_encode(inputs.features, params.ssl_encoder, cfg.toy_encoder_config("ssl"))
        # the toy encoders are frame-synchronous with the mel features, so
        # no alignment is needed and gradient flow stays intact
        return (
            select_deep_layers(asr_stack),
            select_deep_layers(ssl_stack),
            Tensor(inputs.features.frames),
        )
    asr_sel = select_deep_layers(inputs.asr_stack)
    ssl_sel = select_deep_layers(inputs.ssl_stack)
    arrays = [s.data for s in asr_sel] + [s.data for s in ssl_sel] + [inputs.features.frames]
    aligned = align_frames(arrays)
    k = len(asr_sel)
    asr_aligned = [Tensor(a) for a in aligned[:k]]
    ssl_aligned = [Tensor(a) for a in aligned[k : 2 * k]]
    mel = Tensor(aligned[-1])
    return asr_aligned, ssl_aligned, mel


def forward_utterance(params: ModelParams, cfg: PipelineConfig, inputs: UtteranceInputs) -> Tensor:
    """Predict one utterance: rating vector, or class probabilities for grade3."""
    asr_sel, ssl_sel, mel = _streams_for_fusion(params, cfg, inputs)
    asr = weighted_layer_sum(
        [adapter_forward(s, a) for s, a in zip(asr_sel, params.asr_adapters)],
        params.asr_weighting,
    )
    ssl = weighted_layer_sum(
        [adapter_forward(s, a) for s, a in zip(ssl_sel, params.ssl_adapters)],
        params.ssl_weighting,
    )
    fused = fuse_features(asr, ssl, mel)
    return head_forward(fused, params.head, cfg.head_config())


def target_for(record: UtteranceRecord, task: str):
    if task == "grade3":
        if record.grade_class is None:
            raise ValueError(f"{record.utterance_id}: no grade class label")
        return int(record.grade_class)
    if record.grbas is None:
        raise ValueError(f"{record.utterance_id}: no rating labels")
    if task == "grbas-single":
        return record.grbas[:1].astype(np.float32)
    return record.grbas.astype(np.float32)


def utterance_loss(params: ModelParams, cfg: PipelineConfig, record: UtteranceRecord, inputs: UtteranceInputs) -> Tensor:
    pred = forward_utterance(params, cfg, inputs)
    if cfg.task == "grade3":
        cls = ClassPrediction(pred, true_index=target_for(record, cfg.task))
        return scdw_ce_loss(cls, distance_floor=cfg.distance_floor)
    return mae_loss(pred, Tensor(target_for(record, cfg.task)))


def predict_outcome(params: ModelParams, cfg: PipelineConfig, record: UtteranceRecord, inputs: UtteranceInputs) -> PredictionOutcome:
    pred = forward_utterance(params, cfg, inputs)
    if cfg.task == "grade3":
        label = [target_for(record, cfg.task)]
    else:
        label = target_for(record, cfg.task)
    return PredictionOutcome(record.utterance_id, record.patient_id, pred.data.copy(), label)


def indicator_names(task: str):
    if task == "grbas-single":
        return (GRBAS_INDICATORS[0],)
    if task == "grbas-multi":
        return GRBAS_INDICATORS
    return ("mild", "moderate", "severe")
