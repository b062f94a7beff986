"""From-scratch temporal convolutional network with exact backpropagation.

Architecture: a stack of residual blocks of weight-normalized dilated causal
convolutions, followed by three fully connected layers reading the features
at the final time index. Each block's inner path is conv -> activation ->
dropout -> conv -> activation -> dropout; the skip path is the identity (or a
1x1 convolution when channel counts differ) and the block output applies the
activation to the sum of the two paths.

Everything is plain numpy. Convolutions are evaluated as a single GEMM over
a tap-gathered copy of the (left zero-padded) input, which is also what makes
the backward pass two GEMMs plus a scatter-add. Internally activations are
kept in (channels, batch, time) layout; the public API uses (batch, channels,
time) windows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ShapeMismatch, ZeroDirection

_CKPT_MAGIC = b"SMGTCN01"
_CKPT_HEADER = struct.Struct("<8sI")


@dataclass(frozen=True)
class TcnConfig:
    """Architecture description; every field is overridable from run configs."""

    input_channels: int = 8
    output_dim: int = 7
    kernel_size: int = 7
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128, 256)
    channels: int = 32
    activation: str = "relu"
    dropout: float = 0.1
    fc_hidden: tuple[int, int] = (64, 64)
    dtype: str = "float64"

    def __post_init__(self):
        if self.input_channels < 1 or self.output_dim < 1 or self.channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.kernel_size < 1:
            raise ConfigError("kernel size must be >= 1")
        if not self.dilations:
            raise ConfigError("at least one residual block is required")
        prev = 0
        for d in self.dilations:
            if d <= prev or (d & (d - 1)) != 0:
                raise ConfigError(
                    "dilations must be strictly increasing powers of two, "
                    f"got {self.dilations}"
                )
            prev = d
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout rate must lie in [0, 1)")
        if len(self.fc_hidden) != 2 or any(h < 1 for h in self.fc_hidden):
            raise ConfigError("fc_hidden must be two positive sizes")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def receptive_field(self) -> int:
        """Number of trailing input samples that can reach the prediction."""
        return 1 + 2 * (self.kernel_size - 1) * sum(self.dilations)

    @classmethod
    def for_history(cls, history_length: int, **overrides) -> "TcnConfig":
        """Default architecture sized for a history length: the shortest
        power-of-two dilation ladder whose receptive field covers it."""
        kernel_size = overrides.pop("kernel_size", 7)
        dilations = [1]
        while 1 + 2 * (kernel_size - 1) * sum(dilations) < history_length:
            dilations.append(dilations[-1] * 2)
        return cls(kernel_size=kernel_size, dilations=tuple(dilations), **overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        d["fc_hidden"] = list(self.fc_hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TcnConfig":
        data = dict(data)
        if "dilations" in data:
            data["dilations"] = tuple(data["dilations"])
        if "fc_hidden" in data:
            data["fc_hidden"] = tuple(data["fc_hidden"])
        return cls(**data)


def effective_weight(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Weight-normalized kernel: each output row of v rescaled to magnitude g."""
    flat = v.reshape(v.shape[0], -1)
    norms = np.sqrt((flat * flat).sum(axis=1))
    if np.any(norms == 0):
        raise ZeroDirection("weight-normalization direction has zero norm")
    scale = (g / norms).reshape((-1,) + (1,) * (v.ndim - 1))
    return scale * v


def _effective_weight_backward(dw: np.ndarray, v: np.ndarray, g: np.ndarray):
    """Chain-rule dw through the reparameterization into (dv, dg)."""
    flat_v = v.reshape(v.shape[0], -1)
    flat_dw = dw.reshape(dw.shape[0], -1)
    norms = np.sqrt((flat_v * flat_v).sum(axis=1))
    unit = flat_v / norms[:, None]
    dot = (flat_dw * unit).sum(axis=1)
    dg = dot
    dv = (g / norms)[:, None] * (flat_dw - dot[:, None] * unit)
    return dv.reshape(v.shape), dg


class ConvLayer:
    """Dilated causal 1-D convolution parameterized as direction x scale."""

    def __init__(self, v: np.ndarray, g: np.ndarray, b: np.ndarray, dilation: int):
        self.v = v  # (out_ch, in_ch, k)
        self.g = g  # (out_ch,)
        self.b = b  # (out_ch,)
        self.dilation = int(dilation)

    @property
    def kernel_size(self) -> int:
        return self.v.shape[2]

    def effective_weight(self) -> np.ndarray:
        return effective_weight(self.v, self.g)

    @classmethod
    def initialize(cls, rng: np.random.Generator, out_ch: int, in_ch: int,
                   k: int, dilation: int, dtype) -> "ConvLayer":
        bound = 1.0 / np.sqrt(in_ch * k)
        v = rng.uniform(-bound, bound, size=(out_ch, in_ch, k)).astype(dtype)
        g = np.sqrt((v.reshape(out_ch, -1) ** 2).sum(axis=1)).astype(dtype)
        b = np.zeros(out_ch, dtype=dtype)
        return cls(v, g, b, dilation)


class Linear:
    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w  # (out, in)
        self.b = b  # (out,)

    @classmethod
    def initialize(cls, rng: np.random.Generator, out_dim: int, in_dim: int,
                   dtype) -> "Linear":
        bound = 1.0 / np.sqrt(in_dim)
        w = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)
        b = np.zeros(out_dim, dtype=dtype)
        return cls(w, b)


def _pad_and_tap(x: np.ndarray, k: int, d: int) -> np.ndarray:
    """Gather the k dilated taps of a left-padded (C, B, L) input into a
    contiguous (k, C, B, L) tensor ready for a single GEMM."""
    c, b, length = x.shape
    p = (k - 1) * d
    xp = np.zeros((c, b, length + p), dtype=x.dtype)
    xp[:, :, p:] = x
    taps = np.empty((k, c, b, length), dtype=x.dtype)
    for i in range(k):
        taps[i] = xp[:, :, p - d * i: p - d * i + length]
    return taps


def _conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray,
                  d: int) -> np.ndarray:
    """x: (C_in, B, L) -> (C_out, B, L); causal, zero left-padding."""
    c_out, c_in, k = w.shape
    if x.shape[0] != c_in:
        raise ShapeMismatch(f"conv expects {c_in} input channels, got {x.shape[0]}")
    _, b, length = x.shape
    if k == 1:
        y = (w[:, :, 0] @ x.reshape(c_in, b * length)).reshape(c_out, b, length)
    else:
        taps = _pad_and_tap(x, k, d)
        w2 = w.transpose(0, 2, 1).reshape(c_out, k * c_in)
        y = (w2 @ taps.reshape(k * c_in, b * length)).reshape(c_out, b, length)
    y += bias[:, None, None]
    return y


def _conv_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, d: int):
    """Gradients of a causal conv: input, effective-kernel, and bias grads."""
    c_out, c_in, k = w.shape
    _, b, length = x.shape
    dy2 = dy.reshape(c_out, b * length)
    if k == 1:
        dw = (dy2 @ x.reshape(c_in, b * length).T)[:, :, None]
        dx = (w[:, :, 0].T @ dy2).reshape(c_in, b, length)
    else:
        taps = _pad_and_tap(x, k, d).reshape(k * c_in, b * length)
        dw = (dy2 @ taps.T).reshape(c_out, k, c_in).transpose(0, 2, 1)
        w2 = w.transpose(0, 2, 1).reshape(c_out, k * c_in)
        dtaps = (w2.T @ dy2).reshape(k, c_in, b, length)
        p = (k - 1) * d
        dxp = np.zeros((c_in, b, length + p), dtype=x.dtype)
        for i in range(k):
            dxp[:, :, p - d * i: p - d * i + length] += dtaps[i]
        dx = dxp[:, :, p:]
    db = dy.sum(axis=(1, 2))
    return dx, np.ascontiguousarray(dw), db


def _act_forward(x: np.ndarray, name: str):
    if name == "relu":
        mask = x > 0
        return x * mask, mask
    y = np.tanh(x)
    return y, y


def _act_backward(dy: np.ndarray, cache: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return dy * cache
    return dy * (1.0 - cache * cache)


def _dropout_forward(x: np.ndarray, rate: float, training: bool,
                     rng: np.random.Generator | None):
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("training-mode dropout needs a random generator")
    mask = rng.random(x.shape) >= rate
    return x * mask * (1.0 / (1.0 - rate)), mask


def _dropout_backward(dy: np.ndarray, mask, rate: float) -> np.ndarray:
    if mask is None:
        return dy
    return dy * mask * (1.0 / (1.0 - rate))


class ResidualBlock:
    """Two weight-normalized dilated convolutions with an additive skip path."""

    def __init__(self, conv1: ConvLayer, conv2: ConvLayer,
                 down: ConvLayer | None):
        self.conv1 = conv1
        self.conv2 = conv2
        self.down = down  # 1x1 channel-matching conv, or None for identity

    @classmethod
    def initialize(cls, rng, in_ch, out_ch, k, dilation, dtype):
        conv1 = ConvLayer.initialize(rng, out_ch, in_ch, k, dilation, dtype)
        conv2 = ConvLayer.initialize(rng, out_ch, out_ch, k, dilation, dtype)
        down = None
        if in_ch != out_ch:
            down = ConvLayer.initialize(rng, out_ch, in_ch, 1, 1, dtype)
        return cls(conv1, conv2, down)

    def forward(self, x, activation, dropout, training=False, rng=None):
        d = self.conv1.dilation
        w1 = self.conv1.effective_weight()
        a1 = _conv_forward(x, w1, self.conv1.b, d)
        r1, m1 = _act_forward(a1, activation)
        h1, dm1 = _dropout_forward(r1, dropout, training, rng)
        w2 = self.conv2.effective_weight()
        a2 = _conv_forward(h1, w2, self.conv2.b, d)
        r2, m2 = _act_forward(a2, activation)
        h2, dm2 = _dropout_forward(r2, dropout, training, rng)
        if self.down is not None:
            wd = self.down.effective_weight()
            skip = _conv_forward(x, wd, self.down.b, 1)
        else:
            wd = None
            skip = x
        out, m3 = _act_forward(skip + h2, activation)
        cache = (x, w1, m1, dm1, h1, w2, m2, dm2, wd, m3)
        return out, cache

    def backward(self, dout, cache, activation, dropout):
        x, w1, m1, dm1, h1, w2, m2, dm2, wd, m3 = cache
        grads = {}
        ds = _act_backward(dout, m3, activation)
        dh2 = _dropout_backward(ds, dm2, dropout)
        da2 = _act_backward(dh2, m2, activation)
        dh1, dw2, db2 = _conv_backward(da2, h1, w2, self.conv2.dilation)
        grads["conv2.v"], grads["conv2.g"] = _effective_weight_backward(
            dw2, self.conv2.v, self.conv2.g)
        grads["conv2.b"] = db2
        dr1 = _dropout_backward(dh1, dm1, dropout)
        da1 = _act_backward(dr1, m1, activation)
        dx, dw1, db1 = _conv_backward(da1, x, w1, self.conv1.dilation)
        grads["conv1.v"], grads["conv1.g"] = _effective_weight_backward(
            dw1, self.conv1.v, self.conv1.g)
        grads["conv1.b"] = db1
        if self.down is not None:
            dxs, dwd, dbd = _conv_backward(ds, x, wd, 1)
            grads["down.v"], grads["down.g"] = _effective_weight_backward(
                dwd, self.down.v, self.down.g)
            grads["down.b"] = dbd
            dx = dx + dxs
        else:
            dx = dx + ds
        return dx, grads


class TcnModel:
    """Full parameter set plus forward/backward for the fixed architecture."""

    def __init__(self, config: TcnConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)
        self.blocks: list[ResidualBlock] = []
        in_ch = config.input_channels
        for d in config.dilations:
            self.blocks.append(ResidualBlock.initialize(
                rng, in_ch, config.channels, config.kernel_size, d, self.dtype))
            in_ch = config.channels
        h1, h2 = config.fc_hidden
        self.fc1 = Linear.initialize(rng, h1, config.channels, self.dtype)
        self.fc2 = Linear.initialize(rng, h2, h1, self.dtype)
        self.fc3 = Linear.initialize(rng, config.output_dim, h2, self.dtype)

    # -- parameter plumbing ------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in fixed declaration order."""
        out = []
        for i, blk in enumerate(self.blocks):
            for lname, layer in (("conv1", blk.conv1), ("conv2", blk.conv2),
                                 ("down", blk.down)):
                if layer is None:
                    continue
                out.append((f"block{i}.{lname}.v", layer.v))
                out.append((f"block{i}.{lname}.g", layer.g))
                out.append((f"block{i}.{lname}.b", layer.b))
        for name, fc in (("fc1", self.fc1), ("fc2", self.fc2), ("fc3", self.fc3)):
            out.append((f"{name}.W", fc.w))
            out.append((f"{name}.b", fc.b))
        return out

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        holder, attr = self._locate(name)
        current = getattr(holder, attr)
        if current.shape != value.shape:
            raise ShapeMismatch(f"{name}: expected {current.shape}, got {value.shape}")
        setattr(holder, attr, value.astype(self.dtype))

    def _locate(self, name: str):
        parts = name.split(".")
        if parts[0].startswith("block"):
            blk = self.blocks[int(parts[0][5:])]
            layer = getattr(blk, parts[1])
            return layer, {"v": "v", "g": "g", "b": "b"}[parts[2]]
        fc = getattr(self, parts[0])
        return fc, {"W": "w", "b": "b"}[parts[1]]

    # -- forward / backward --------------------------------------------------

    def _to_internal(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.config.input_channels:
            raise ShapeMismatch(
                f"expected windows shaped (batch, {self.config.input_channels}, L), "
                f"got {x.shape}"
            )
        if x.shape[2] < 1:
            raise ShapeMismatch("window must contain at least one sample")
        return np.ascontiguousarray(x.transpose(1, 0, 2)), single

    def forward(self, window, *, training: bool = False,
                rng: np.random.Generator | None = None,
                return_features: bool = False):
        """Predict the normalized next-step targets for one window (8, L) or a
        batch (B, 8, L). With return_features, also returns the per-block
        activations as (B, channels, L) arrays."""
        h, single = self._to_internal(window)
        cfg = self.config
        features = []
        for blk in self.blocks:
            h, _ = blk.forward(h, cfg.activation, cfg.dropout, training, rng)
            if return_features:
                features.append(np.ascontiguousarray(h.transpose(1, 0, 2)))
        f = np.ascontiguousarray(h[:, :, -1].T)  # (B, channels)
        z1, _ = _act_forward(f @ self.fc1.w.T + self.fc1.b, cfg.activation)
        z2, _ = _act_forward(z1 @ self.fc2.w.T + self.fc2.b, cfg.activation)
        out = z2 @ self.fc3.w.T + self.fc3.b
        if single:
            out = out[0]
        if return_features:
            return out, features
        return out

    def loss_and_grads(self, window, target,
                       rng: np.random.Generator | None = None,
                       *, training: bool = True):
        """Mean-squared-error loss and its exact gradient for every parameter."""
        cfg = self.config
        h, single = self._to_internal(window)
        y = np.asarray(target, dtype=self.dtype)
        if single:
            y = y[None] if y.ndim == 1 else y
        if y.shape != (h.shape[1], cfg.output_dim):
            raise ShapeMismatch(
                f"targets must be ({h.shape[1]}, {cfg.output_dim}), got {y.shape}")

        caches = []
        for blk in self.blocks:
            h, cache = blk.forward(h, cfg.activation, cfg.dropout, training, rng)
            caches.append(cache)
        f = np.ascontiguousarray(h[:, :, -1].T)
        a1 = f @ self.fc1.w.T + self.fc1.b
        z1, m1 = _act_forward(a1, cfg.activation)
        a2 = z1 @ self.fc2.w.T + self.fc2.b
        z2, m2 = _act_forward(a2, cfg.activation)
        pred = z2 @ self.fc3.w.T + self.fc3.b

        diff = pred - y
        loss = float(np.mean(diff * diff))
        grads: dict[str, np.ndarray] = {}

        dpred = (2.0 / diff.size) * diff
        grads["fc3.W"] = dpred.T @ z2
        grads["fc3.b"] = dpred.sum(axis=0)
        dz2 = dpred @ self.fc3.w
        da2 = _act_backward(dz2, m2, cfg.activation)
        grads["fc2.W"] = da2.T @ z1
        grads["fc2.b"] = da2.sum(axis=0)
        dz1 = da2 @ self.fc2.w
        da1 = _act_backward(dz1, m1, cfg.activation)
        grads["fc1.W"] = da1.T @ f
        grads["fc1.b"] = da1.sum(axis=0)
        df = da1 @ self.fc1.w  # (B, channels)

        dh = np.zeros_like(h)
        dh[:, :, -1] = df.T
        for i in range(len(self.blocks) - 1, -1, -1):
            dh, blk_grads = self.blocks[i].backward(
                dh, caches[i], cfg.activation, cfg.dropout)
            for key, val in blk_grads.items():
                grads[f"block{i}.{key}"] = val
        return loss, grads


# -- spec-level functional wrappers ---------------------------------------


def dilated_causal_conv(window: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Apply one dilated causal convolution to a (channels, time) input."""
    x = np.asarray(window, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected (channels, time), got shape {x.shape}")
    y = _conv_forward(x[:, None, :], layer.effective_weight(), layer.b,
                      layer.dilation)
    return y[:, 0, :]


def residual_block(window: np.ndarray, block: ResidualBlock,
                   activation: str = "relu") -> np.ndarray:
    """Apply one residual block, inference mode, to a (channels, time) input."""
    x = np.asarray(window, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected (channels, time), got shape {x.shape}")
    out, _ = block.forward(x[:, None, :], activation, 0.0, False, None)
    return out[:, 0, :]


def mse_loss(pred, truth) -> float:
    """Mean over all entries of the squared prediction error."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ShapeMismatch(f"prediction shape {p.shape} != truth shape {t.shape}")
    d = p - t
    return float(np.mean(d * d))


def backward(model: TcnModel, window, target) -> dict[str, np.ndarray]:
    """Exact MSE-loss gradients for every parameter (inference-mode paths)."""
    _, grads = model.loss_and_grads(window, target, training=False)
    return grads


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(model: TcnModel, path) -> None:
    """Byte-stable container: magic, JSON header, float64 parameter blocks in
    declaration order."""
    header = {
        "format": "smgid-tcn",
        "version": 1,
        "config": model.config.to_dict(),
        "seed": model.seed,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(_CKPT_MAGIC, len(blob)))
        fh.write(blob)
        for _, arr in model.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> TcnModel:
    with open(path, "rb") as fh:
        magic, hlen = _CKPT_HEADER.unpack(fh.read(_CKPT_HEADER.size))
        if magic != _CKPT_MAGIC:
            raise ConfigError(f"not a smgid checkpoint: {path}")
        header = json.loads(fh.read(hlen).decode())
        model = TcnModel(TcnConfig.from_dict(header["config"]),
                         seed=header.get("seed", 0))
        for name, arr in model.parameters():
            block = fh.read(arr.size * 8)
            if len(block) != arr.size * 8:
                raise ConfigError(f"checkpoint truncated at parameter {name}")
            value = np.frombuffer(block, dtype="<f8").reshape(arr.shape)
            model.set_parameter(name, value)
    return model
