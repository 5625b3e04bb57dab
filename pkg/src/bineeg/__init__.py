"""bineeg: binarized single-dimensional convolutional networks for EEG.

Dense tensors, bit-packed XNOR-popcount kernels, surrogate-gradient training,
seizure-prediction data tooling, and evaluation metrics.
"""

__version__ = "0.1.0"
