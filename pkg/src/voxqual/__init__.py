"""Voice-quality estimation from fused speech representations.

A small numpy library: a reverse-mode autodiff core, a mel/delta DSP front
end, toy transformer encoders (or imported activation stacks), adapter
fusion with learnable layer weights, an LSTM regression/classification
head, training with plateau-halving SGD, and utterance/patient evaluation.
"""

__version__ = "0.1.0"
