"""Adapter fusion over the deeper half of encoder layers.

Each selected layer gets its own adapter (FC -> LeakyReLU -> LayerNorm,
with a learnable per-feature affine after the normalization). Adapter
outputs are combined with softmax-normalized learnable scalars, and the
two encoder streams plus the mel features are concatenated feature-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, concat, layer_norm, leaky_relu, matmul, mul, slice_axis, softmax
from .representations import RepresentationStack

ADAPTER_DIM = 120
LEAKY_SLOPE = 0.05


@dataclass
class AdapterParams:
    weight: Tensor  # D_in x 120
    bias: Tensor  # 120
    ln_gain: Tensor  # 120
    ln_bias: Tensor  # 120
    slope: float = LEAKY_SLOPE

    def named(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias
        yield f"{prefix}.ln_gain", self.ln_gain
        yield f"{prefix}.ln_bias", self.ln_bias


@dataclass
class LayerWeighting:
    logits: Tensor  # one scalar per adapter

    def named(self, prefix: str):
        yield f"{prefix}.logits", self.logits

    def weights(self) -> Tensor:
        return softmax(self.logits, axis=-1)


def init_adapter(d_in: int, rng, dtype=np.float32, out_dim: int = ADAPTER_DIM) -> AdapterParams:
    bound = np.sqrt(6.0 / (d_in + out_dim))
    return AdapterParams(
        weight=Tensor(rng.uniform(-bound, bound, size=(d_in, out_dim)).astype(dtype), requires_grad=True),
        bias=Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True),
        ln_gain=Tensor(np.ones(out_dim, dtype=dtype), requires_grad=True),
        ln_bias=Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True),
    )


def init_layer_weighting(n_adapters: int, dtype=np.float32) -> LayerWeighting:
    # zero logits start every layer at weight 1/n
    return LayerWeighting(Tensor(np.zeros(n_adapters, dtype=dtype), requires_grad=True))


def select_deep_layers(stack: RepresentationStack) -> list:
    """The deeper half of the stack, in order (layers L/2+1 .. L, 1-based)."""
    n = stack.num_layers
    if n % 2:
        raise ValueError(f"layer count must be even, got {n}")
    return list(stack.layers[n // 2 :])


def adapter_forward(frames: Tensor, params: AdapterParams) -> Tensor:
    """layer_norm(leaky_relu(x W + b)) with a learnable affine, per frame."""
    if frames.shape[1] != params.weight.shape[0]:
        raise ValueError(
            f"adapter input dim {frames.shape[1]} does not match weight {params.weight.shape}"
        )
    pre = add(matmul(frames, params.weight), params.bias)
    normed = layer_norm(leaky_relu(pre, params.slope), axis=-1)
    return add(mul(normed, params.ln_gain), params.ln_bias)


def weighted_layer_sum(adapted: list, weighting: LayerWeighting) -> Tensor:
    """Softmax-weighted sum of adapter outputs; weights sum to 1 by construction."""
    k = weighting.logits.size
    if len(adapted) != k:
        raise ValueError(f"{len(adapted)} adapter outputs for {k} layer weights")
    w = weighting.weights()
    total = None
    for i, slab in enumerate(adapted):
        term = mul(slab, slice_axis(w, 0, i, i + 1))
        total = term if total is None else add(total, term)
    return total


def fuse_features(asr: Tensor, ssl: Tensor, mel: Tensor) -> Tensor:
    """Concatenate the three streams as [asr | ssl | mel] along features."""
    t = asr.shape[0]
    if ssl.shape[0] != t or mel.shape[0] != t:
        raise ValueError(
            f"fuse_features: frame counts differ: {asr.shape[0]}, {ssl.shape[0]}, {mel.shape[0]}"
        )
    return concat([asr, ssl, mel], axis=-1)
