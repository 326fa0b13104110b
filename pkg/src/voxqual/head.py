"""Downstream head: two LSTM layers, a per-frame FC, and time pooling.

Regression outputs are left unbounded; evaluation may clip to the rating
range in reports but never in the loss path. For 3-class Grade the class
probabilities come from a softmax applied after pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, concat, matmul, mean, mul, sigmoid, slice_axis, softmax, tanh

DEFAULT_HIDDEN = 128
TASK_OUTPUT_DIMS = {"grbas-single": 1, "grbas-multi": 5, "grade3": 3}


@dataclass
class HeadConfig:
    task: str
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.task not in TASK_OUTPUT_DIMS:
            raise ValueError(f"unknown task '{self.task}'")
        if self.hidden < 1:
            raise ValueError("hidden size must be positive")

    @property
    def output_dim(self) -> int:
        return TASK_OUTPUT_DIMS[self.task]


@dataclass
class LstmGate:
    wx: Tensor  # D_in x H
    wh: Tensor  # H x H
    b: Tensor  # H

    def named(self, prefix: str):
        yield f"{prefix}.wx", self.wx
        yield f"{prefix}.wh", self.wh
        yield f"{prefix}.b", self.b


@dataclass
class LstmLayerParams:
    gi: LstmGate
    gf: LstmGate
    go: LstmGate
    gg: LstmGate

    def named(self, prefix: str):
        for tag, gate in (("i", self.gi), ("f", self.gf), ("o", self.go), ("g", self.gg)):
            yield from gate.named(f"{prefix}.{tag}")

    @property
    def hidden(self) -> int:
        return self.gi.wh.shape[0]


@dataclass
class HeadParams:
    lstm1: LstmLayerParams
    lstm2: LstmLayerParams
    fc_w: Tensor  # H x output_dim
    fc_b: Tensor  # output_dim

    def named(self, prefix: str = "head"):
        yield from self.lstm1.named(f"{prefix}.lstm1")
        yield from self.lstm2.named(f"{prefix}.lstm2")
        yield f"{prefix}.fc_w", self.fc_w
        yield f"{prefix}.fc_b", self.fc_b


def _init_gate(rng, d_in, hidden, dtype) -> LstmGate:
    bound = np.sqrt(6.0 / (d_in + hidden))
    hbound = np.sqrt(6.0 / (2 * hidden))
    return LstmGate(
        wx=Tensor(rng.uniform(-bound, bound, size=(d_in, hidden)).astype(dtype), requires_grad=True),
        wh=Tensor(rng.uniform(-hbound, hbound, size=(hidden, hidden)).astype(dtype), requires_grad=True),
        b=Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
    )


def init_lstm_layer(d_in: int, hidden: int, rng, dtype=np.float32) -> LstmLayerParams:
    return LstmLayerParams(
        gi=_init_gate(rng, d_in, hidden, dtype),
        gf=_init_gate(rng, d_in, hidden, dtype),
        go=_init_gate(rng, d_in, hidden, dtype),
        gg=_init_gate(rng, d_in, hidden, dtype),
    )


def init_head(d_in: int, cfg: HeadConfig, rng, dtype=np.float32) -> HeadParams:
    out = cfg.output_dim
    bound = np.sqrt(6.0 / (cfg.hidden + out))
    return HeadParams(
        lstm1=init_lstm_layer(d_in, cfg.hidden, rng, dtype),
        lstm2=init_lstm_layer(cfg.hidden, cfg.hidden, rng, dtype),
        fc_w=Tensor(rng.uniform(-bound, bound, size=(cfg.hidden, out)).astype(dtype), requires_grad=True),
        fc_b=Tensor(np.zeros(out, dtype=dtype), requires_grad=True),
    )


def lstm_forward(x: Tensor, params: LstmLayerParams) -> Tensor:
    """Standard LSTM recurrence from zero initial states; returns T x H.

    Gates use sigmoid, the cell candidate and output use tanh, so every
    hidden value is o * tanh(c) and stays strictly inside (-1, 1).
    """
    t, d_in = x.shape
    if d_in != params.gi.wx.shape[0]:
        raise ValueError(f"lstm input dim {d_in} does not match weights {params.gi.wx.shape}")
    hidden = params.hidden
    h = Tensor(np.zeros((1, hidden), dtype=x.dtype))
    c = Tensor(np.zeros((1, hidden), dtype=x.dtype))

    def gate(xt, g, act):
        return act(add(add(matmul(xt, g.wx), matmul(h, g.wh)), g.b))

    rows = []
    for step in range(t):
        xt = slice_axis(x, 0, step, step + 1)
        gi = gate(xt, params.gi, sigmoid)
        gf = gate(xt, params.gf, sigmoid)
        go = gate(xt, params.go, sigmoid)
        gg = gate(xt, params.gg, tanh)
        c = add(mul(gf, c), mul(gi, gg))
        h = mul(go, tanh(c))
        rows.append(h)
    return rows[0] if t == 1 else concat(rows, axis=0)


def head_forward(fused: Tensor, params: HeadParams, cfg: HeadConfig) -> Tensor:
    """FC applied per frame after the second LSTM, then mean over time.

    grade3 adds a softmax after pooling so the output is a probability
    vector over the three classes.
    """
    if fused.shape[0] < 1:
        raise ValueError("head_forward needs at least one frame")
    h1 = lstm_forward(fused, params.lstm1)
    h2 = lstm_forward(h1, params.lstm2)
    per_frame = add(matmul(h2, params.fc_w), params.fc_b)
    pooled = mean(per_frame, axis=0)
    if cfg.task == "grade3":
        return softmax(pooled, axis=-1)
    return pooled
