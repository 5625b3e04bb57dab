"""Model assembly, whole-network passes, resource accounting, serialization.

The network is five conv blocks, each a plain convolution followed by a
strided convolution (stride replaces pooling). Block 1 is full precision with
one ReLU; every later conv consumes the sign of the previous batchnorm output
and keeps latent full-precision weights that are binarized on the forward
pass. Batch normalization follows every convolution. A global mean pool (or
flatten) feeds three dense layers ending in a 2-way softmax.

Two inference engines produce bit-identical probabilities: "arithmetic" runs
batchnorm then sign, "folded" replaces each batchnorm+sign pair with per-map
thresholds and drives the binary convs through packed XNOR popcounts.
"""

import binascii
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import bits
from ._binio import ByteReader, ByteWriter
from .errors import CorruptModel, InvalidConfig, ShapeMismatch
from .layers import (BatchNorm, ConvLayer, DenseLayer, Flatten, MeanPool,
                     Relu, Sign, fold_bn_sign)
from .tensor import DenseTensor

CONV_MODES = ("1d-1d", "1d-2d", "2d-1d", "2d-2d")

MAGIC = b"BSDC"
FORMAT_VERSION = 1

_KIND_CODES = {"conv": 0, "bn": 1, "dense": 2, "relu": 3, "sign": 4, "pool": 5, "flatten": 6}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; block values follow the five-block design."""

    input_shape: tuple
    conv_mode: str = "1d-1d"
    block_maps: tuple = (16, 32, 64, 128, 256)
    block_kernels: tuple = (5, 5, 10, 2, 2)
    block_axes: tuple = ("time", "time", "time", "electrode", "electrode")
    block_strides: tuple = (4, 4, 4, 2, 2)
    head: str = "global_mean_pool"
    fc_dims: tuple = (256, 64, 2)
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    # resolved per-conv-layer kernels (10 pairs); None derives from block values
    layer_kernels: tuple = None

    def validate(self):
        if len(self.input_shape) != 3 or self.input_shape[2] != 1:
            raise InvalidConfig(f"input shape must be (E, T, 1), got {self.input_shape}")
        if min(self.input_shape[:2]) < 1:
            raise InvalidConfig(f"input extents must be >= 1, got {self.input_shape}")
        if self.conv_mode not in CONV_MODES:
            raise InvalidConfig(f"conv_mode must be one of {CONV_MODES}, got {self.conv_mode!r}")
        lens = {len(self.block_maps), len(self.block_kernels), len(self.block_axes),
                len(self.block_strides)}
        if lens != {5}:
            raise InvalidConfig(f"exactly 5 conv blocks required, got lengths {sorted(lens)}")
        for ax in self.block_axes:
            if ax not in ("time", "electrode"):
                raise InvalidConfig(f"unknown block axis {ax!r}")
        if self.head not in ("global_mean_pool", "flatten"):
            raise InvalidConfig(f"unknown head {self.head!r}")
        if len(self.fc_dims) != 3 or self.fc_dims[-1] != 2:
            raise InvalidConfig(f"fc dims must end in 2 classes, got {self.fc_dims}")
        if self.layer_kernels is not None and len(self.layer_kernels) != 10:
            raise InvalidConfig("layer_kernels must resolve all 10 conv layers")

    def nominal_kernel(self, block):
        """(k_e, k_t) implied by conv_mode for one block, before any clamping."""
        k = self.block_kernels[block]
        axis = self.block_axes[block]
        time_mode, chan_mode = self.conv_mode.split("-")
        mode = time_mode if axis == "time" else chan_mode
        if mode == "2d":
            return (k, k)
        return (1, k) if axis == "time" else (k, 1)

    def conv_plan(self):
        """The ten conv layers as (name, in_maps, out_maps, kernel, stride, precision)."""
        plan = []
        prev = 1
        for b in range(5):
            maps = self.block_maps[b]
            axis = self.block_axes[b]
            stride = self.block_strides[b]
            kernel = self.nominal_kernel(b)
            ck, sk = kernel, kernel
            if self.layer_kernels is not None:
                ck = tuple(self.layer_kernels[2 * b])
                sk = tuple(self.layer_kernels[2 * b + 1])
            s = (stride, 1) if axis == "electrode" else (1, stride)
            precision = "full" if b == 0 else "binary"
            cname = "conv1" if b == 0 else f"bconv{b}"
            sname = "sconv1" if b == 0 else f"bsconv{b}"
            plan.append((cname, prev, maps, ck, (1, 1), precision))
            plan.append((sname, maps, maps, sk, s, precision))
            prev = maps
        return plan

    @classmethod
    def for_input(cls, electrodes, samples, **kwargs):
        """Default config scaled to an input: kernels clamp to available extents."""
        cfg = cls(input_shape=(int(electrodes), int(samples), 1), **kwargs)
        cfg.validate()
        e, t = cfg.input_shape[:2]
        resolved = []
        for _, _, _, kernel, stride, _ in cfg.conv_plan():
            k_e, k_t = min(kernel[0], e), min(kernel[1], t)
            resolved.append((k_e, k_t))
            e = (e - k_e) // stride[0] + 1
            t = (t - k_t) // stride[1] + 1
        return replace(cfg, layer_kernels=tuple(resolved))

    def to_json(self):
        return json.dumps(asdict_config(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        raw["input_shape"] = tuple(raw["input_shape"])
        for key in ("block_maps", "block_kernels", "block_axes", "block_strides", "fc_dims"):
            raw[key] = tuple(raw[key])
        if raw.get("layer_kernels") is not None:
            raw["layer_kernels"] = tuple(tuple(k) for k in raw["layer_kernels"])
        return cls(**raw)


def asdict_config(cfg):
    d = asdict(cfg)
    if d.get("layer_kernels") is not None:
        d["layer_kernels"] = [list(k) for k in d["layer_kernels"]]
    for key in ("input_shape", "block_maps", "block_kernels", "block_axes",
                "block_strides", "fc_dims"):
        d[key] = list(d[key])
    return d


class Model:
    """An assembled network: ordered named layers plus the config and init seed."""

    def __init__(self, config, seed, layer_list):
        self.config = config
        self.seed = int(seed)
        self.layers = layer_list
        self._rules = None

    # -- caches ------------------------------------------------------------

    def invalidate_caches(self):
        """Drop packed-weight and folded-threshold caches after updates."""
        self._rules = None
        for _, layer in self.layers:
            if isinstance(layer, ConvLayer):
                layer.invalidate_cache()

    def folded_rules(self):
        if self._rules is None:
            rules = {}
            for i, (name, layer) in enumerate(self.layers[:-1]):
                if isinstance(layer, BatchNorm) and isinstance(self.layers[i + 1][1], Sign):
                    rules[name] = fold_bn_sign(layer)
            self._rules = rules
        return self._rules

    # -- passes ------------------------------------------------------------

    def forward_batch(self, xb, mode="infer", engine="arithmetic", collect=False):
        """Run (B, E, T, 1) inputs to (B, 2) probabilities.

        engine "folded" (infer only) uses threshold rules + packed binary convs.
        collect=True additionally returns per-layer caches for backward.
        """
        if engine == "folded":
            if mode != "infer":
                raise InvalidConfig("folded engine is inference-only")
            rules = self.folded_rules()
        caches = [] if collect else None
        x = xb
        i = 0
        while i < len(self.layers):
            name, layer = self.layers[i]
            if engine == "folded" and name in rules:
                x = rules[name].apply(x)
                i += 2  # the rule covers this batchnorm and the following sign
                continue
            if isinstance(layer, ConvLayer) and layer.precision == "binary":
                eng = "packed" if engine == "folded" else "dense"
                x, cache = layer.forward(x, mode=mode, engine=eng)
            else:
                x, cache = layer.forward(x, mode=mode)
            if collect:
                caches.append((name, layer, cache))
            i += 1
        return (x, caches) if collect else x

    def backward_batch(self, caches, gy):
        """Backpropagate through collected caches; returns parameter grads."""
        grads = {}
        for name, layer, cache in reversed(caches):
            gy, layer_grads = layer.backward(cache, gy)
            for pname, g in layer_grads.items():
                grads[f"{name}.{pname}"] = g
        return grads

    def named_params(self):
        """(name, array, is_binary_latent) for every trainable parameter."""
        out = []
        for name, layer in self.layers:
            latent = isinstance(layer, ConvLayer) and layer.precision == "binary"
            for pname, arr in layer.params().items():
                out.append((f"{name}.{pname}", arr, latent and pname == "weights"))
        return out

    def layer(self, name):
        for n, obj in self.layers:
            if n == name:
                return obj
        raise KeyError(name)


def build(config, seed=0):
    """Assemble a Model with deterministic initialization for the seed."""
    config.validate()
    e, t, _ = config.input_shape
    rng = np.random.default_rng(seed)
    layer_list = []
    bn_idx = 0

    def add_bn(maps):
        nonlocal bn_idx
        bn_idx += 1
        layer_list.append((f"bn{bn_idx}", BatchNorm(maps, eps=config.bn_eps,
                                                    momentum=config.bn_momentum)))

    for li, (name, in_maps, out_maps, kernel, stride, precision) in enumerate(config.conv_plan()):
        k_e, k_t = kernel
        if e < k_e or t < k_t:
            raise InvalidConfig(
                f"shape chain underflow at {name}: extent ({e}, {t}) < kernel ({k_e}, {k_t})"
            )
        if precision == "binary":
            w = rng.uniform(-1.0, 1.0, size=(out_maps, in_maps, k_e, k_t)).astype(np.float32)
            bias = None
        else:
            fan_in = in_maps * k_e * k_t
            fan_out = out_maps * k_e * k_t
            r = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-r, r, size=(out_maps, in_maps, k_e, k_t)).astype(np.float32)
            bias = np.zeros(out_maps, dtype=np.float32)
        if precision == "binary":
            layer_list.append((f"sign{li - 1}", Sign()))
        layer_list.append((name, ConvLayer(name, in_maps, out_maps, kernel, stride,
                                           precision, w, bias)))
        add_bn(out_maps)
        if name == "conv1":
            layer_list.append(("relu1", Relu()))
        e = (e - k_e) // stride[0] + 1
        t = (t - k_t) // stride[1] + 1

    feat_maps = config.block_maps[-1]
    if config.head == "global_mean_pool":
        layer_list.append(("pool", MeanPool()))
        fc_in = feat_maps
    else:
        layer_list.append(("flatten", Flatten()))
        fc_in = e * t * feat_maps
    acts = ("sigmoid", "sigmoid", "softmax")
    for i, (dim, act) in enumerate(zip(config.fc_dims, acts), start=1):
        r = np.sqrt(6.0 / (fc_in + dim))
        w = rng.uniform(-r, r, size=(dim, fc_in)).astype(np.float32)
        b = np.zeros(dim, dtype=np.float32)
        layer_list.append((f"fc{i}", DenseLayer(f"fc{i}", fc_in, dim, w, b, act)))
        fc_in = dim
    return Model(config, seed, layer_list)


def forward(model, window, mode="infer"):
    """Class probabilities [p_interictal, p_preictal] for one window."""
    if isinstance(window, DenseTensor):
        data = window.data
    else:
        data = np.asarray(window, dtype=np.float32)
    if tuple(data.shape) != tuple(model.config.input_shape):
        raise ShapeMismatch(
            f"window shape {data.shape} != configured {model.config.input_shape}"
        )
    probs = model.forward_batch(data[None], mode=mode)
    return probs[0]


# ---------------------------------------------------------------------------
# Resource accounting
# ---------------------------------------------------------------------------

@dataclass
class LayerResources:
    name: str
    kind: str
    precision: str
    parameter_count: int
    parameter_bits: int
    twin_parameter_bits: int
    mac_count: int
    binary_op_count: int


@dataclass
class ResourceReport:
    """Per-layer parameter and operation accounting plus reduction factors.

    Reduction factors compare against the same-architecture twin whose conv
    weights are all 32-bit. memory_reduction_factor covers the convolutional
    stack (conv weights + batchnorm, per the conv-block accounting; the dense
    classifier head is identical in both networks and reported separately).
    compute_reduction_factor covers the multiply-accumulate work transformed
    by binarization: those MACs cost 32 bit-ops each in the twin and 1-bit
    XNOR ops here. Full per-layer rows allow any other ratio to be derived.
    """

    rows: list
    total_parameter_count: int
    total_parameter_bits: int
    total_twin_parameter_bits: int
    total_mac_count: int
    total_binary_op_count: int
    conv_stack_parameter_bits: int
    conv_stack_twin_parameter_bits: int
    memory_reduction_factor: float
    compute_reduction_factor: float

    def as_text(self):
        lines = [f"{'layer':<10} {'kind':<8} {'prec':<7} {'params':>9} {'bits':>10} "
                 f"{'macs':>12} {'binary_ops':>12}"]
        for r in self.rows:
            lines.append(f"{r.name:<10} {r.kind:<8} {r.precision:<7} {r.parameter_count:>9} "
                         f"{r.parameter_bits:>10} {r.mac_count:>12} {r.binary_op_count:>12}")
        lines.append(f"{'total':<10} {'':<8} {'':<7} {self.total_parameter_count:>9} "
                     f"{self.total_parameter_bits:>10} {self.total_mac_count:>12} "
                     f"{self.total_binary_op_count:>12}")
        lines.append(f"conv-stack parameter bits: {self.conv_stack_parameter_bits} "
                     f"(twin {self.conv_stack_twin_parameter_bits})")
        lines.append(f"memory reduction vs full-precision twin: "
                     f"{self.memory_reduction_factor:.2f}x")
        lines.append(f"compute reduction on binarized MACs:     "
                     f"{self.compute_reduction_factor:.2f}x")
        return "\n".join(lines)

    CSV_COLUMNS = ("layer", "kind", "precision", "parameter_count", "parameter_bits",
                   "twin_parameter_bits", "mac_count", "binary_op_count")

    def as_csv(self):
        lines = [",".join(self.CSV_COLUMNS)]
        for r in self.rows:
            lines.append(f"{r.name},{r.kind},{r.precision},{r.parameter_count},"
                         f"{r.parameter_bits},{r.twin_parameter_bits},{r.mac_count},"
                         f"{r.binary_op_count}")
        lines.append(f"total,,,{self.total_parameter_count},{self.total_parameter_bits},"
                     f"{self.total_twin_parameter_bits},{self.total_mac_count},"
                     f"{self.total_binary_op_count}")
        return "\n".join(lines)


def resource_report(model):
    """Count parameters, bits, and operations per layer; derive twin ratios."""
    e, t, _ = model.config.input_shape
    rows = []
    for name, layer in model.layers:
        if isinstance(layer, ConvLayer):
            k_e, k_t = layer.kernel
            s_e, s_t = layer.stride
            oe = (e - k_e) // s_e + 1
            ot = (t - k_t) // s_t + 1
            window = layer.in_maps * k_e * k_t
            out_elems = oe * ot * layer.out_maps
            wcount = layer.out_maps * window
            bcount = 0 if layer.bias is None else layer.out_maps
            if layer.precision == "binary":
                rows.append(LayerResources(name, "conv", "binary", wcount,
                                           wcount, wcount * 32, 0, out_elems * window))
            else:
                params = wcount + bcount
                rows.append(LayerResources(name, "conv", "full", params,
                                           params * 32, params * 32, out_elems * window, 0))
            e, t = oe, ot
        elif isinstance(layer, BatchNorm):
            # gamma, beta, running mean, running var per map; one fused MAC/element
            params = 4 * layer.maps
            rows.append(LayerResources(name, "bn", "full", params, params * 32,
                                       params * 32, e * t * layer.maps, 0))
        elif isinstance(layer, DenseLayer):
            params = layer.out_dim * (layer.in_dim + 1)
            rows.append(LayerResources(name, "dense", "full", params, params * 32,
                                       params * 32, layer.out_dim * layer.in_dim, 0))
        else:
            kind = getattr(layer, "name", type(layer).__name__.lower())
            rows.append(LayerResources(name, kind, "-", 0, 0, 0, 0, 0))

    total_params = sum(r.parameter_count for r in rows)
    total_bits = sum(r.parameter_bits for r in rows)
    total_twin_bits = sum(r.twin_parameter_bits for r in rows)
    total_macs = sum(r.mac_count for r in rows)
    total_binops = sum(r.binary_op_count for r in rows)
    stack = [r for r in rows if r.kind in ("conv", "bn")]
    stack_bits = sum(r.parameter_bits for r in stack)
    stack_twin_bits = sum(r.twin_parameter_bits for r in stack)
    mem_factor = stack_twin_bits / stack_bits if stack_bits else 1.0
    compute_factor = (total_binops * 32) / total_binops if total_binops else 1.0
    return ResourceReport(
        rows=rows,
        total_parameter_count=total_params,
        total_parameter_bits=total_bits,
        total_twin_parameter_bits=total_twin_bits,
        total_mac_count=total_macs,
        total_binary_op_count=total_binops,
        conv_stack_parameter_bits=stack_bits,
        conv_stack_twin_parameter_bits=stack_twin_bits,
        memory_reduction_factor=mem_factor,
        compute_reduction_factor=compute_factor,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save(model, path):
    """Write the model file: magic, version, config, layer blobs, crc32."""
    w = ByteWriter()
    w.raw(MAGIC)
    w.u16(FORMAT_VERSION)
    w.u64(model.seed)
    w.blob(model.config.to_json().encode("utf-8"))
    w.u16(len(model.layers))
    for name, layer in model.layers:
        w.blob(name.encode("utf-8"))
        if isinstance(layer, ConvLayer):
            w.u8(_KIND_CODES["conv"])
            w.u8(1 if layer.precision == "binary" else 0)
            for v in (layer.in_maps, layer.out_maps, *layer.kernel, *layer.stride):
                w.u16(v)
            w.array(layer.weights, np.float32)
            if layer.precision == "binary":
                words, n = layer.packed_weights()
                w.u32(n)
                w.array(words, np.uint64)
            else:
                w.array(layer.bias, np.float32)
        elif isinstance(layer, BatchNorm):
            w.u8(_KIND_CODES["bn"])
            w.u32(layer.maps)
            w.f64(layer.eps)
            w.f64(layer.momentum)
            for arr in (layer.gamma, layer.beta, layer.running_mean, layer.running_var):
                w.array(arr, np.float32)
        elif isinstance(layer, DenseLayer):
            w.u8(_KIND_CODES["dense"])
            w.u32(layer.in_dim)
            w.u32(layer.out_dim)
            w.blob(layer.activation.encode("utf-8"))
            w.array(layer.weights, np.float32)
            w.array(layer.bias, np.float32)
        elif isinstance(layer, Relu):
            w.u8(_KIND_CODES["relu"])
        elif isinstance(layer, Sign):
            w.u8(_KIND_CODES["sign"])
        elif isinstance(layer, MeanPool):
            w.u8(_KIND_CODES["pool"])
        elif isinstance(layer, Flatten):
            w.u8(_KIND_CODES["flatten"])
        else:
            raise InvalidConfig(f"cannot serialize layer {name!r}")
    payload = w.getvalue()
    crc = binascii.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(crc.to_bytes(4, "little"))


def load(path):
    """Read a model file back; every mismatch raises CorruptModel."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise CorruptModel("bad magic: not a model file")
    if len(raw) < 10:
        raise CorruptModel("truncated header")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if binascii.crc32(payload) & 0xFFFFFFFF != int.from_bytes(crc_bytes, "little"):
        raise CorruptModel("checksum mismatch (truncated or corrupted file)")
    r = ByteReader(payload, CorruptModel)
    r.take(4)  # magic
    version = r.u16()
    if version != FORMAT_VERSION:
        raise CorruptModel(f"unsupported format version {version} (expected {FORMAT_VERSION})")
    seed = r.u64()
    try:
        config = ModelConfig.from_json(r.blob().decode("utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptModel(f"bad config block: {exc}") from exc
    n_layers = r.u16()
    layer_list = []
    for _ in range(n_layers):
        name = r.blob().decode("utf-8")
        kind = _KIND_NAMES.get(r.u8())
        if kind == "conv":
            binary = bool(r.u8())
            in_maps, out_maps, k_e, k_t, s_e, s_t = (r.u16() for _ in range(6))
            weights = r.array(np.float32)
            if weights.shape != (out_maps, in_maps, k_e, k_t):
                raise CorruptModel(f"{name}: weight shape {weights.shape} inconsistent")
            if binary:
                n = r.u32()
                words = r.array(np.uint64)
                layer = ConvLayer(name, in_maps, out_maps, (k_e, k_t), (s_e, s_t),
                                  "binary", weights)
                expect_words, expect_n = layer.packed_weights()
                if n != expect_n or not np.array_equal(words, expect_words):
                    raise CorruptModel(f"{name}: packed weights disagree with latent signs")
            else:
                bias = r.array(np.float32)
                layer = ConvLayer(name, in_maps, out_maps, (k_e, k_t), (s_e, s_t),
                                  "full", weights, bias)
        elif kind == "bn":
            maps = r.u32()
            eps = r.f64()
            momentum = r.f64()
            layer = BatchNorm(maps, eps=eps, momentum=momentum)
            layer.gamma = r.array(np.float32)
            layer.beta = r.array(np.float32)
            layer.running_mean = r.array(np.float32)
            layer.running_var = r.array(np.float32)
        elif kind == "dense":
            in_dim = r.u32()
            out_dim = r.u32()
            act = r.blob().decode("utf-8")
            weights = r.array(np.float32)
            bias = r.array(np.float32)
            layer = DenseLayer(name, in_dim, out_dim, weights, bias, act)
        elif kind == "relu":
            layer = Relu()
        elif kind == "sign":
            layer = Sign()
        elif kind == "pool":
            layer = MeanPool()
        elif kind == "flatten":
            layer = Flatten()
        else:
            raise CorruptModel(f"unknown layer kind for {name!r}")
        layer_list.append((name, layer))
    r.expect_end()
    return Model(config, seed, layer_list)


def models_equal(a, b):
    """Bit-exact comparison of two models (config, seed, all parameters)."""
    if a.config != b.config or a.seed != b.seed or len(a.layers) != len(b.layers):
        return False
    for (na, la), (nb, lb) in zip(a.layers, b.layers):
        if na != nb or type(la) is not type(lb):
            return False
        for pname, arr in la.params().items():
            if not np.array_equal(arr, lb.params()[pname]):
                return False
        if isinstance(la, BatchNorm):
            if not (np.array_equal(la.running_mean, lb.running_mean)
                    and np.array_equal(la.running_var, lb.running_var)):
                return False
    return True
