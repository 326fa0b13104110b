#!/usr/bin/env python3
# Walkthrough of the autodiff core: build a small expression, run backward,
# and confirm the gradients against central finite differences.

import numpy as np

from voxqual import autodiff as ad

rng = np.random.default_rng(0)

# Every model computation is one of a handful of primitives. A graph records
# them only while it is active, so inference costs no tape bookkeeping.
x = ad.Tensor(rng.normal(size=(2, 3)), requires_grad=True)
w = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)

graph = ad.Graph()
with graph:
    hidden = ad.tanh(ad.matmul(x, w))
    loss = ad.mean(ad.mul(hidden, hidden))

print(f"recorded {len(graph)} primitives, loss = {float(loss.data):.6f}")

ad.backward(graph, loss)
print("dL/dx row 0:", np.round(x.grad[0], 5))
print("dL/dw row 0:", np.round(w.grad[0], 5))

# grad_check re-evaluates the function in float64 and compares the analytic
# gradient against central differences, element by element.
report = ad.grad_check(
    lambda t: ad.mean(ad.mul(ad.tanh(ad.matmul(t, w)), ad.tanh(ad.matmul(t, w)))),
    x,
)
print(report)

# The same machinery covers the unfriendlier primitives too; leaky_relu has
# a kink at zero, so the check keeps its points away from it.
point = ad.Tensor(rng.uniform(0.2, 1.5, size=8) * rng.choice([-1.0, 1.0], size=8))
report = ad.grad_check(lambda t: ad.mean(ad.leaky_relu(t, slope=0.05)), point)
print(report)

# softmax rows always sum to one, no matter how wild the logits are.
wild = ad.softmax(ad.Tensor(rng.normal(size=(3, 6)) * 100.0))
print("softmax row sums:", wild.data.sum(axis=-1))
