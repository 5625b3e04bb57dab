"""Dense (electrodes, time, maps) tensors used throughout the data path.

Values are float32 in row-major order with the time axis innermost-contiguous
per map group, so time-dimension convolutions stream through memory.
Reductions accumulate in float64.
"""

import numpy as np

from .errors import InvalidShape, InvalidValue

AXES = ("electrode", "time")


class DenseTensor:
    """A full-precision 3-axis grid: electrodes x time x feature maps.

    Instances are treated as immutable once handed out; share freely across
    threads, build new ones instead of mutating.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise InvalidShape(f"expected 3 axes (E, T, M), got {arr.ndim}")
        if min(arr.shape) < 1:
            raise InvalidShape(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidValue("tensor contains non-finite values")
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self):
        return self.data.shape

    @property
    def electrodes(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]

    @property
    def maps(self):
        return self.data.shape[2]

    def flat_index(self, e, t, m):
        """Row-major offset of element (e, t, m)."""
        _, T, M = self.data.shape
        return (e * T + t) * M + m

    def __eq__(self, other):
        return isinstance(other, DenseTensor) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"DenseTensor(shape={self.data.shape})"


def create(shape, fill=0.0):
    """Build a tensor of the given (E, T, M) shape with every element == fill."""
    if len(shape) != 3:
        raise InvalidShape(f"expected (E, T, M), got {shape!r}")
    e, t, m = (int(v) for v in shape)
    if e < 1 or t < 1 or m < 1:
        raise InvalidShape(f"all dimensions must be >= 1, got {shape!r}")
    if not np.isfinite(fill):
        raise InvalidValue(f"fill value must be finite, got {fill!r}")
    return DenseTensor(np.full((e, t, m), fill, dtype=np.float32))


def mean_over(t, axes):
    """Arithmetic mean over the named axes ('electrode' and/or 'time').

    Reduced axes keep extent 1; maps are always averaged independently.
    Accumulation runs in float64 and the result is rounded back to float32.
    """
    if isinstance(axes, str):
        axes = (axes,)
    axes = frozenset(axes)
    if not axes:
        raise InvalidValue("axes must be a non-empty subset of {'electrode', 'time'}")
    unknown = axes - set(AXES)
    if unknown:
        raise InvalidValue(f"unknown axes {sorted(unknown)}")
    idx = tuple(i for i, name in enumerate(AXES) if name in axes)
    reduced = t.data.mean(axis=idx, keepdims=True, dtype=np.float64)
    return DenseTensor(reduced.astype(np.float32))
