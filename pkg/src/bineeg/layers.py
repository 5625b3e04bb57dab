"""Network layers: convolutions, batch normalization, dense heads, activations.

Layers operate internally on batched arrays shaped (B, E, T, M) and keep the
dtype of their input, so float64 gradient checks run through the same code as
the float32 production path. The module-level functions mirror the public
single-window contracts on DenseTensor values.

Binary convolutions accumulate +-1 products. During training they run as
ordinary GEMMs on sign-valued floats; at inference the same sums can be
computed via packed XNOR popcounts. Both routes produce identical integers
(all partial sums stay far below 2**24, so float32 addition is exact).
"""

import numpy as np

from . import bits
from .errors import InvalidValue, ShapeMismatch
from .tensor import DenseTensor


def out_extent(extent, k, stride):
    """Valid-convolution output extent: floor((extent - k)/stride) + 1."""
    return (extent - k) // stride + 1


def im2col(x, k_e, k_t, s_e, s_t):
    """Gather conv windows of a (B, E, T, M) array into rows.

    Returns (cols, (oe, ot)) where cols has shape (B*oe*ot, k_e*k_t*M) and a
    row flattens its window in (kernel-electrode, kernel-time, map) order.
    """
    b, e, t, m = x.shape
    oe = out_extent(e, k_e, s_e)
    ot = out_extent(t, k_t, s_t)
    sb, se, st, sm = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, oe, ot, k_e, k_t, m),
        strides=(sb, se * s_e, st * s_t, se, st, sm),
        writeable=False,
    )
    return win.reshape(b * oe * ot, k_e * k_t * m), (oe, ot)


def col2im(dcols, x_shape, k_e, k_t, s_e, s_t, oe, ot):
    """Scatter-add window-row gradients back onto the input grid."""
    b, _, _, m = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    dwin = dcols.reshape(b, oe, ot, k_e, k_t, m)
    for a in range(k_e):
        for c in range(k_t):
            dx[:, a : a + s_e * oe : s_e, c : c + s_t * ot : s_t, :] += dwin[:, :, :, a, c, :]
    return dx


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

class ConvLayer:
    """A valid (unpadded) convolution along one or both spatial axes.

    kernel/stride are (electrode, time) pairs; a time-axis 1D layer uses
    kernel (1, k). precision "binary" layers keep full-precision latent
    weights, binarize them in the forward pass, and carry no bias.
    """

    def __init__(self, name, in_maps, out_maps, kernel, stride, precision,
                 weights, bias=None):
        if precision not in ("full", "binary"):
            raise InvalidValue(f"unknown precision {precision!r}")
        if precision == "binary" and bias is not None:
            raise InvalidValue("binary conv layers carry no bias")
        self.name = name
        self.in_maps = int(in_maps)
        self.out_maps = int(out_maps)
        self.kernel = (int(kernel[0]), int(kernel[1]))
        self.stride = (int(stride[0]), int(stride[1]))
        self.precision = precision
        self.weights = weights  # (out, in, k_e, k_t), latent full precision
        self.bias = bias
        self._packed = None

    @property
    def window_size(self):
        return self.in_maps * self.kernel[0] * self.kernel[1]

    def weight_rows(self, weights=None):
        """Weights flattened to (out_maps, window) matching im2col row order."""
        w = self.weights if weights is None else weights
        return np.ascontiguousarray(w.transpose(0, 2, 3, 1).reshape(self.out_maps, -1))

    def invalidate_cache(self):
        self._packed = None

    def packed_weights(self):
        """Packed sign(weights) rows; recomputed after any weight update."""
        if self._packed is None:
            signs = bits.binarize_array(self.weights.astype(np.float32))
            words, n = bits.pack_rows(self.weight_rows(signs))
            self._packed = (words, n)
        return self._packed

    def _check_input(self, x):
        b, e, t, m = x.shape
        k_e, k_t = self.kernel
        if m != self.in_maps:
            raise ShapeMismatch(f"{self.name}: expected {self.in_maps} input maps, got {m}")
        if e < k_e or t < k_t:
            raise ShapeMismatch(
                f"{self.name}: input extent ({e}, {t}) smaller than kernel ({k_e}, {k_t})"
            )

    def forward(self, x, mode="infer", engine="dense"):
        """Forward pass on (B, E, T, M); engine "packed" uses XNOR popcounts."""
        self._check_input(x)
        k_e, k_t = self.kernel
        s_e, s_t = self.stride
        cols, (oe, ot) = im2col(x, k_e, k_t, s_e, s_t)
        b = x.shape[0]
        if self.precision == "binary":
            if engine == "packed":
                rows, n = bits.pack_rows(cols)
                wwords, wn = self.packed_weights()
                y = bits.bit_gemm(rows, wwords, n).astype(x.dtype)
            else:
                wb = bits.binarize_array(self.weights.astype(x.dtype, copy=False))
                y = cols @ self.weight_rows(wb).T
        else:
            y = cols @ self.weight_rows().T
            if self.bias is not None:
                y = y + self.bias
        y = y.reshape(b, oe, ot, self.out_maps)
        cache = (x.shape, cols, (oe, ot))
        return y, cache

    def backward(self, cache, gy):
        """Gradients for (input, weights[, bias]) given upstream (B, oe, ot, out)."""
        x_shape, cols, (oe, ot) = cache
        k_e, k_t = self.kernel
        s_e, s_t = self.stride
        g = gy.reshape(-1, self.out_maps)
        if self.precision == "binary":
            wb = bits.binarize_array(self.weights.astype(g.dtype, copy=False))
            w_rows = self.weight_rows(wb)
        else:
            w_rows = self.weight_rows()
        dcols = g @ w_rows
        dx = col2im(dcols, x_shape, k_e, k_t, s_e, s_t, oe, ot)
        dw_rows = g.T @ cols
        dw = dw_rows.reshape(self.out_maps, k_e, k_t, self.in_maps).transpose(0, 3, 1, 2)
        grads = {}
        if self.precision == "binary":
            # straight-through at the weight-sign site
            grads["weights"] = bits.ste_backward_array(dw, self.weights)
        else:
            grads["weights"] = dw
            if self.bias is not None:
                grads["bias"] = g.sum(axis=0)
        return dx, grads

    def params(self):
        p = {"weights": self.weights}
        if self.bias is not None:
            p["bias"] = self.bias
        return p


# ---------------------------------------------------------------------------
# Batch normalization and sign-threshold folding
# ---------------------------------------------------------------------------

def _bn_affine(x, mean, inv_std, gamma, beta):
    # single shared arithmetic sequence so folding can mirror it exactly
    return gamma * ((x - mean) * inv_std) + beta


class BatchNorm:
    """Per-map batch normalization over every axis except the map axis."""

    def __init__(self, maps, eps=1e-5, momentum=0.9):
        self.gamma = np.ones(maps, dtype=np.float32)
        self.beta = np.zeros(maps, dtype=np.float32)
        self.running_mean = np.zeros(maps, dtype=np.float32)
        self.running_var = np.ones(maps, dtype=np.float32)
        self.eps = float(eps)
        self.momentum = float(momentum)

    @property
    def maps(self):
        return self.gamma.shape[0]

    def forward(self, x, mode="infer"):
        if x.shape[-1] != self.maps:
            raise ShapeMismatch(f"expected {self.maps} maps, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if mode == "train":
            # stats in the input dtype: float32 on the training path, float64
            # wherever gradient checks drive the layer
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean[:] = m * self.running_mean + (1 - m) * mean
            self.running_var[:] = m * self.running_var + (1 - m) * var
        else:
            mean = self.running_mean.astype(x.dtype)
            var = self.running_var.astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        gamma = self.gamma.astype(x.dtype)
        beta = self.beta.astype(x.dtype)
        # same operation sequence as _bn_affine, so fold_bn_sign mirrors it
        xhat = (x - mean) * inv_std
        y = gamma * xhat + beta
        n = int(np.prod([x.shape[a] for a in axes]))
        cache = (xhat, inv_std, gamma, n)
        return y, cache

    def backward(self, cache, gy):
        """Gradients through train-mode normalization (batch statistics)."""
        xhat, inv_std, gamma, n = cache
        axes = tuple(range(gy.ndim - 1))
        sum_gy = gy.sum(axis=axes)
        sum_gy_xhat = (gy * xhat).sum(axis=axes)
        dx = (gamma * inv_std) * (gy - (sum_gy + xhat * sum_gy_xhat) / n)
        return dx, {"gamma": sum_gy_xhat, "beta": sum_gy}

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}


class ThresholdRule:
    """Per-map replacement for sign(batchnorm(x)) at inference.

    Map m fires +1 when (x >= tau[m]) differs from flip[m]; thresholds are
    searched on the float32 lattice so the rule is bit-exact against the
    arithmetic path for every finite float32 input.
    """

    __slots__ = ("tau", "flip")

    def __init__(self, tau, flip):
        self.tau = np.asarray(tau, dtype=np.float32)
        self.flip = np.asarray(flip, dtype=bool)

    def apply(self, x):
        pred = x >= self.tau
        one = np.asarray(1, dtype=x.dtype)
        return np.where(pred ^ self.flip, one, -one)


def _f32_to_key(v):
    # order-preserving map from float32 to int (IEEE-754 total order trick)
    u = int(np.float32(v).view(np.uint32))
    return u ^ 0x80000000 if u < 0x80000000 else 0xFFFFFFFF - u


def _key_to_f32(k):
    u = k ^ 0x80000000 if k >= 0x80000000 else 0xFFFFFFFF - k
    return np.uint32(u).view(np.float32)


_F32_MAX = np.float32(np.finfo(np.float32).max)


def fold_bn_sign(bn):
    """Fold infer-mode batchnorm followed by sign into per-map thresholds."""
    taus = np.empty(bn.maps, dtype=np.float32)
    flips = np.zeros(bn.maps, dtype=bool)
    inv_std_all = 1.0 / np.sqrt(bn.running_var.astype(np.float32) + np.float32(bn.eps))
    for m in range(bn.maps):
        mean = np.float32(bn.running_mean[m])
        inv_std = np.float32(inv_std_all[m])
        gamma = np.float32(bn.gamma[m])
        beta = np.float32(bn.beta[m])

        if gamma == 0.0:
            # constant map: output is always beta
            taus[m] = np.float32(-np.inf) if beta >= 0 else np.float32(np.inf)
            flips[m] = False
            continue

        def fires(x):
            with np.errstate(over="ignore"):
                return bool(_bn_affine(np.float32(x), mean, inv_std, gamma, beta) >= 0)

        lo_fires = fires(-_F32_MAX)
        hi_fires = fires(_F32_MAX)
        if lo_fires == hi_fires:
            # saturated map: fires identically across the whole finite range
            taus[m] = np.float32(-np.inf) if lo_fires else np.float32(np.inf)
            flips[m] = False
            continue
        # predicate is monotone in x; bisect the float32 lattice for its edge
        lo, hi = _f32_to_key(-_F32_MAX), _f32_to_key(_F32_MAX)
        increasing = hi_fires
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if fires(_key_to_f32(mid)) == increasing:
                hi = mid
            else:
                lo = mid
        if increasing:
            taus[m] = _key_to_f32(hi)  # smallest x that fires
            flips[m] = False
        else:
            taus[m] = _key_to_f32(hi)  # smallest x that no longer fires
            flips[m] = True
    return ThresholdRule(taus, flips)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

class Relu:
    name = "relu"

    def forward(self, x, mode="infer"):
        return np.maximum(x, 0), (x > 0)

    def backward(self, cache, gy):
        return gy * cache, {}

    def params(self):
        return {}


class Sign:
    """Sign activation with the straight-through surrogate gradient."""

    name = "sign"

    def forward(self, x, mode="infer"):
        return bits.binarize_array(x), x

    def backward(self, cache, gy):
        return bits.ste_backward_array(gy, cache), {}

    def params(self):
        return {}


def sigmoid(x):
    # tanh form is overflow-free on both tails
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def softmax(x):
    """Row-wise softmax; rows sum to 1 within float tolerance."""
    x = np.asarray(x)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def relu(x):
    return np.maximum(x, 0)


def cross_entropy(probs, class_index):
    """Categorical cross-entropy of one probability row: -log p[class]."""
    p = np.asarray(probs, dtype=np.float64)
    return float(-np.log(max(float(p[int(class_index)]), 1e-12)))


def cross_entropy_batch(probs, labels):
    """Mean -log p[label] over a batch; probs (B, C), labels (B,) ints."""
    p = np.clip(probs[np.arange(len(labels)), labels], 1e-12, None)
    return float(-np.log(p).mean(dtype=np.float64))


# ---------------------------------------------------------------------------
# Dense head
# ---------------------------------------------------------------------------

class DenseLayer:
    """Fully connected layer with an optional fused activation."""

    def __init__(self, name, in_dim, out_dim, weights, bias, activation="none"):
        if activation not in ("none", "sigmoid", "softmax"):
            raise InvalidValue(f"unknown activation {activation!r}")
        self.name = name
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.weights = weights  # (out, in)
        self.bias = bias
        self.activation = activation

    def forward(self, x, mode="infer"):
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch(f"{self.name}: expected dim {self.in_dim}, got {x.shape[-1]}")
        z = x @ self.weights.T + self.bias
        if self.activation == "sigmoid":
            y = sigmoid(z)
        elif self.activation == "softmax":
            y = softmax(z)
        else:
            y = z
        return y, (x, y)

    def backward(self, cache, gy):
        x, y = cache
        if self.activation == "sigmoid":
            gz = gy * y * (1.0 - y)
        elif self.activation == "softmax":
            gz = y * (gy - (gy * y).sum(axis=-1, keepdims=True))
        else:
            gz = gy
        grads = {"weights": gz.T @ x, "bias": gz.sum(axis=0)}
        return gz @ self.weights, grads

    def params(self):
        return {"weights": self.weights, "bias": self.bias}


# ---------------------------------------------------------------------------
# Head plumbing
# ---------------------------------------------------------------------------

class MeanPool:
    """Global mean over electrode and time axes: (B, E, T, M) -> (B, M)."""

    name = "pool"

    def forward(self, x, mode="infer"):
        y = x.mean(axis=(1, 2), dtype=np.float64).astype(x.dtype)
        return y, x.shape

    def backward(self, cache, gy):
        b, e, t, m = cache
        scale = np.asarray(1.0 / (e * t), dtype=gy.dtype)
        return np.broadcast_to((gy * scale)[:, None, None, :], cache).copy(), {}

    def params(self):
        return {}


class Flatten:
    name = "flatten"

    def forward(self, x, mode="infer"):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, gy):
        return gy.reshape(cache), {}

    def params(self):
        return {}


# ---------------------------------------------------------------------------
# Public single-window contracts on DenseTensor
# ---------------------------------------------------------------------------

def conv_forward(layer, t):
    """Valid convolution of one window; binary layers demand +-1 input."""
    x = t.data[None]
    if layer.precision == "binary":
        if not np.all(np.abs(x) == 1):
            raise InvalidValue(f"{layer.name}: binary conv requires +-1 input")
        y, _ = layer.forward(x, engine="packed")
    else:
        y, _ = layer.forward(x)
    return DenseTensor(y[0])


def conv_backward(layer, t, upstream):
    """Gradients of the single-window convolution w.r.t. input and weights."""
    x = t.data[None].astype(np.float64)
    y, cache = layer.forward(x)
    if y.shape[1:] != upstream.shape:
        raise ShapeMismatch(f"upstream shape {upstream.shape} != output {y.shape[1:]}")
    dx, grads = layer.backward(cache, upstream.data[None].astype(np.float64))
    return DenseTensor(dx[0]), grads


def bn_forward(bn, t, mode="infer"):
    y, _ = bn.forward(t.data[None], mode=mode)
    return DenseTensor(y[0])


def dense_forward(layer, vec):
    y, _ = layer.forward(np.asarray(vec)[None])
    return y[0]


def dense_backward(layer, vec, upstream):
    x = np.asarray(vec, dtype=np.float64)[None]
    _, cache = layer.forward(x)
    dx, grads = layer.backward(cache, np.asarray(upstream, dtype=np.float64)[None])
    return dx[0], grads
