"""Per-layer encoder activations: a trainable toy encoder or imported stacks.

Imported stacks arrive as RSTK files (see `import_stack`) and are constant
inputs: gradient flow stops at them, since the weights that produced them
are not available. The toy encoder is a small pre-norm transformer that
stands in for the real ones so the whole pipeline, encoder included, can
train end to end at desk scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    layer_norm,
    matmul,
    mul,
    slice_axis,
    softmax,
    tanh,
    transpose,
)
from .dsp import FeatureMatrix

RSTK_MAGIC = b"RSTK"
RSTK_VERSION = 1
_HEADER = struct.Struct("<4sIIII")  # magic, version, L, T, D


@dataclass
class EncoderConfig:
    n_layers: int = 12
    model_dim: int = 768
    n_heads: int = 12
    ff_dim: int = 3072
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 2 or self.n_layers % 2:
            raise ValueError("n_layers must be even and >= 2")
        if self.model_dim % self.n_heads:
            raise ValueError("model_dim must be divisible by n_heads")

    @classmethod
    def toy(cls, seed: int = 0) -> "EncoderConfig":
        return cls(n_layers=4, model_dim=32, n_heads=2, ff_dim=64, seed=seed)


@dataclass
class RepresentationStack:
    layers: list  # L tensors, each T x D
    source_tag: str  # "toy" | "imported"
    frame_rate: float

    def __post_init__(self):
        n = len(self.layers)
        if n < 2 or n % 2:
            raise ValueError("stack needs an even layer count >= 2")
        shape = self.layers[0].shape
        for layer in self.layers:
            if layer.shape != shape or len(shape) != 2 or shape[0] < 1:
                raise ValueError("stack layers must share one T x D shape, T >= 1")
            if not np.all(np.isfinite(layer.data)):
                raise ValueError("stack contains non-finite values")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_frames(self) -> int:
        return self.layers[0].shape[0]

    @property
    def dim(self) -> int:
        return self.layers[0].shape[1]


# ---------------------------------------------------------------------------
# toy transformer encoder
# ---------------------------------------------------------------------------


@dataclass
class ToyEncoderLayer:
    q_w: Tensor
    q_b: Tensor
    k_w: Tensor
    k_b: Tensor
    v_w: Tensor
    v_b: Tensor
    o_w: Tensor
    o_b: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    ff1_w: Tensor
    ff1_b: Tensor
    ff2_w: Tensor
    ff2_b: Tensor

    def named(self, prefix: str):
        for name in (
            "q_w", "q_b", "k_w", "k_b", "v_w", "v_b", "o_w", "o_b",
            "ln1_g", "ln1_b", "ln2_g", "ln2_b", "ff1_w", "ff1_b", "ff2_w", "ff2_b",
        ):
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class ToyEncoderParams:
    in_w: Tensor
    in_b: Tensor
    layers: list
    n_heads: int

    def named(self, prefix: str):
        yield f"{prefix}.in_w", self.in_w
        yield f"{prefix}.in_b", self.in_b
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"{prefix}.layer{i}")


def _uniform_init(rng, fan_in, fan_out, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _ones(shape, dtype):
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


def init_toy_encoder(input_dim: int, cfg: EncoderConfig, dtype=np.float32) -> ToyEncoderParams:
    """Seeded parameter initialization; identical seeds give identical params."""
    rng = np.random.default_rng(cfg.seed)
    dm, ff = cfg.model_dim, cfg.ff_dim
    layers = []
    for _ in range(cfg.n_layers):
        layers.append(
            ToyEncoderLayer(
                q_w=_uniform_init(rng, dm, dm, (dm, dm), dtype),
                q_b=_zeros(dm, dtype),
                k_w=_uniform_init(rng, dm, dm, (dm, dm), dtype),
                k_b=_zeros(dm, dtype),
                v_w=_uniform_init(rng, dm, dm, (dm, dm), dtype),
                v_b=_zeros(dm, dtype),
                o_w=_uniform_init(rng, dm, dm, (dm, dm), dtype),
                o_b=_zeros(dm, dtype),
                ln1_g=_ones(dm, dtype),
                ln1_b=_zeros(dm, dtype),
                ln2_g=_ones(dm, dtype),
                ln2_b=_zeros(dm, dtype),
                ff1_w=_uniform_init(rng, dm, ff, (dm, ff), dtype),
                ff1_b=_zeros(ff, dtype),
                ff2_w=_uniform_init(rng, ff, dm, (ff, dm), dtype),
                ff2_b=_zeros(dm, dtype),
            )
        )
    return ToyEncoderParams(
        in_w=_uniform_init(rng, input_dim, dm, (input_dim, dm), dtype),
        in_b=_zeros(dm, dtype),
        layers=layers,
        n_heads=cfg.n_heads,
    )


def sinusoidal_positions(t: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(t, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * (i // 2) / dim)
    enc = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return enc.astype(dtype)


def _affine_norm(x, gain, bias):
    return add(mul(layer_norm(x, axis=-1), gain), bias)


def _attention(x, layer: ToyEncoderLayer, n_heads: int):
    t, dm = x.shape
    dh = dm // n_heads
    q = add(matmul(x, layer.q_w), layer.q_b)
    k = add(matmul(x, layer.k_w), layer.k_b)
    v = add(matmul(x, layer.v_w), layer.v_b)
    scale = Tensor(np.asarray(1.0 / np.sqrt(dh), dtype=x.dtype))
    heads = []
    for h in range(n_heads):
        qs = slice_axis(q, 1, h * dh, (h + 1) * dh)
        ks = slice_axis(k, 1, h * dh, (h + 1) * dh)
        vs = slice_axis(v, 1, h * dh, (h + 1) * dh)
        scores = mul(matmul(qs, transpose(ks)), scale)
        heads.append(matmul(softmax(scores, axis=-1), vs))
    mixed = concat(heads, axis=-1) if n_heads > 1 else heads[0]
    return add(matmul(mixed, layer.o_w), layer.o_b)


def toy_encode(features: FeatureMatrix, params: ToyEncoderParams, cfg: EncoderConfig) -> RepresentationStack:
    """Run the toy encoder; returns one output per transformer layer."""
    if features.dim != params.in_w.shape[0]:
        raise ValueError(
            f"feature dim {features.dim} does not match encoder input dim {params.in_w.shape[0]}"
        )
    dtype = params.in_w.dtype
    x = add(matmul(Tensor(features.frames, dtype=dtype), params.in_w), params.in_b)
    x = add(x, Tensor(sinusoidal_positions(features.num_frames, cfg.model_dim, dtype)))
    outputs = []
    for layer in params.layers:
        attn_in = _affine_norm(x, layer.ln1_g, layer.ln1_b)
        x = add(x, _attention(attn_in, layer, params.n_heads))
        ff_in = _affine_norm(x, layer.ln2_g, layer.ln2_b)
        ff = matmul(tanh(add(matmul(ff_in, layer.ff1_w), layer.ff1_b)), layer.ff2_w)
        x = add(x, add(ff, layer.ff2_b))
        outputs.append(x)
    return RepresentationStack(outputs, source_tag="toy", frame_rate=features.frame_rate)


# ---------------------------------------------------------------------------
# RSTK binary interchange
# ---------------------------------------------------------------------------


def export_stack(path, stack: RepresentationStack) -> None:
    """Write the stack as RSTK: header then float32 [layer][frame][dim]."""
    cube = np.stack([np.asarray(l.data, dtype=np.float32) for l in stack.layers])
    l, t, d = cube.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RSTK_MAGIC, RSTK_VERSION, l, t, d))
        fh.write(cube.astype("<f4").tobytes())


def import_stack(path, frame_rate: float = 50.0) -> RepresentationStack:
    """Read an RSTK file back as a constant (non-trainable) stack.

    Values are bit-exact with respect to what `export_stack` wrote. Errors
    report the byte offset of the violation and expected vs actual sizes.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(
            f"{path}: truncated header, expected {_HEADER.size} bytes, got {len(blob)}"
        )
    magic, version, l, t, d = _HEADER.unpack_from(blob, 0)
    if magic != RSTK_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != RSTK_VERSION:
        raise ValueError(f"{path}: unsupported version {version} at byte offset 4")
    expected = _HEADER.size + 4 * l * t * d
    if len(blob) != expected:
        raise ValueError(
            f"{path}: payload mismatch at byte offset {min(len(blob), expected)}: "
            f"expected {expected} bytes total, got {len(blob)}"
        )
    cube = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(l, t, d)
    layers = [Tensor(cube[i].copy()) for i in range(l)]
    return RepresentationStack(layers, source_tag="imported", frame_rate=frame_rate)


# ---------------------------------------------------------------------------
# padding removal and frame alignment
# ---------------------------------------------------------------------------


def trim_padding(stack: RepresentationStack, valid_frames: int) -> RepresentationStack:
    """Keep the leading `valid_frames` frames of every layer, values unchanged."""
    t = stack.num_frames
    if not (1 <= valid_frames <= t):
        raise ValueError(f"valid_frames must be in [1, {t}], got {valid_frames}")
    if valid_frames == t:
        return stack
    layers = [slice_axis(layer, 0, 0, valid_frames) for layer in stack.layers]
    return RepresentationStack(layers, source_tag=stack.source_tag, frame_rate=stack.frame_rate)


def resample_frames(frames: np.ndarray, t_new: int) -> np.ndarray:
    """Linear interpolation along time; both endpoints are preserved."""
    t_old = frames.shape[0]
    if t_old == t_new:
        return frames
    if t_new == 1:
        return frames[:1].copy()
    pos = np.linspace(0.0, t_old - 1, t_new)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, t_old - 1)
    w = (pos - lo)[:, None].astype(frames.dtype)
    return frames[lo] * (1 - w) + frames[hi] * w


def align_frames(streams: list) -> list:
    """Resample every T x D stream to the shortest stream's frame count."""
    if not streams:
        return []
    target = min(s.shape[0] for s in streams)
    return [resample_frames(s, target) for s in streams]
