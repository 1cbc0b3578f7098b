"""Minimal deterministic tensor engine for the compact spectral classifier.

Implements exactly the layers the detector needs, with hand-derived
backward passes: 1-D same-padded convolution, batch normalization, ReLU,
inverted dropout, max pooling, fully connected layers, and softmax
cross-entropy.  Parameters live in a flat name -> ndarray dict so
optimizers, anchored penalties, and serialization stay trivial.

Parameter names: ``conv{i}.w`` (out_ch, in_ch, k), ``conv{i}.b``,
``bn{i}.gamma``, ``bn{i}.beta``, ``bn{i}.mean``, ``bn{i}.var`` (running
stats, not trainable), ``fc0.w`` (in, hidden), ``fc0.b``, ``fc1.w``,
``fc1.b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ShapeMismatch(ValueError):
    """Parameter shapes do not match the architecture description."""


@dataclass(frozen=True)
class ArchSpec:
    """Architecture of the spectral classifier.

    conv_blocks is an ordered tuple of (kernel_size, out_channels,
    pool_size); kernel sizes must be odd (symmetric padding) and
    non-increasing from block to block.
    """

    conv_blocks: tuple[tuple[int, int, int], ...] = ((7, 8, 2), (5, 16, 2), (3, 32, 2))
    dropout_p: float = 0.2
    fc_hidden: int = 64
    num_classes: int = 2
    input_dim: int = 256

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.fc_hidden < 1 or self.num_classes < 2 or self.input_dim < 1:
            raise ValueError("fc_hidden, num_classes, input_dim must be positive")
        prev_k = None
        length = self.input_dim
        for kernel, channels, pool in self.conv_blocks:
            if kernel < 1 or kernel % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and >= 1, got {kernel}")
            if prev_k is not None and kernel > prev_k:
                raise ValueError(
                    f"kernel sizes must be non-increasing, got {kernel} after {prev_k}"
                )
            prev_k = kernel
            if channels < 1:
                raise ValueError(f"out_channels must be >= 1, got {channels}")
            if pool < 1 or length % pool != 0:
                raise ValueError(
                    f"pool size {pool} must divide the running length {length}"
                )
            length //= pool

    @property
    def flat_dim(self) -> int:
        length = self.input_dim
        channels = 1
        for _, ch, pool in self.conv_blocks:
            channels = ch
            length //= pool
        return channels * length

    def layer_dims(self) -> list[tuple[int, int]]:
        """(in_channels, length) entering each conv block."""
        dims = []
        length = self.input_dim
        channels = 1
        for _, ch, pool in self.conv_blocks:
            dims.append((channels, length))
            channels = ch
            length //= pool
        return dims


Params = dict[str, np.ndarray]


def is_running_stat(name: str) -> bool:
    return name.endswith(".mean") or name.endswith(".var")


def trainable_names(params: Params) -> list[str]:
    return [n for n in params if not is_running_stat(n)]


def head_names(params: Params) -> list[str]:
    """The fully connected classifier ('head'); conv blocks are the backbone."""
    return [n for n in params if n.startswith("fc")]


def init_params(arch: ArchSpec, seed: int, dtype=np.float32) -> Params:
    """Kaiming-uniform fan-in initialization, seeded and reproducible."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    params: Params = {}
    in_ch = 1
    for i, (kernel, out_ch, _) in enumerate(arch.conv_blocks):
        fan_in = in_ch * kernel
        bound = np.sqrt(6.0 / fan_in)
        params[f"conv{i}.w"] = rng.uniform(-bound, bound, (out_ch, in_ch, kernel)).astype(dtype)
        params[f"conv{i}.b"] = np.zeros(out_ch, dtype=dtype)
        params[f"bn{i}.gamma"] = np.ones(out_ch, dtype=dtype)
        params[f"bn{i}.beta"] = np.zeros(out_ch, dtype=dtype)
        params[f"bn{i}.mean"] = np.zeros(out_ch, dtype=dtype)
        params[f"bn{i}.var"] = np.ones(out_ch, dtype=dtype)
        in_ch = out_ch
    dims = [(arch.flat_dim, arch.fc_hidden), (arch.fc_hidden, arch.num_classes)]
    for j, (d_in, d_out) in enumerate(dims):
        bound = np.sqrt(6.0 / d_in)
        params[f"fc{j}.w"] = rng.uniform(-bound, bound, (d_in, d_out)).astype(dtype)
        params[f"fc{j}.b"] = np.zeros(d_out, dtype=dtype)
    return params


def check_shapes(arch: ArchSpec, params: Params) -> None:
    expected = init_params(arch, seed=0)
    for name, ref in expected.items():
        if name not in params:
            raise ShapeMismatch(f"missing parameter {name}")
        if params[name].shape != ref.shape:
            raise ShapeMismatch(
                f"{name}: expected shape {ref.shape}, got {params[name].shape}"
            )


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


@dataclass
class Model:
    """Architecture plus parameter store plus a version tag."""

    arch: ArchSpec
    params: Params
    version: str = "v0"

    def clone(self) -> "Model":
        return Model(self.arch, copy_params(self.params), self.version)


# ---------------------------------------------------------------------------
# Layer primitives
#
# Activations flow channels-last as (batch, length, channels): reductions
# over (batch, length) collapse to fast 2-D axis-0 reductions and the conv
# im2col matmul needs no transposes.  Parameter tensors keep their
# (out_ch, in_ch, kernel) layout regardless.


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, L, C) -> (B, L, kernel*C) same-padded sliding windows."""
    b, length, c = x.shape
    pad = kernel // 2
    xp = np.zeros((b, length + 2 * pad, c), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, length, kernel, c),
        strides=(s0, s1, s1, s2),
        writeable=False,
    )
    return windows.reshape(b, length, kernel * c)


def _conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray):
    out_ch, in_ch, kernel = w.shape
    cols = _im2col(x, kernel)  # (B, L, k*C)
    w2 = w.transpose(2, 1, 0).reshape(kernel * in_ch, out_ch)
    out = cols @ w2 + bias
    return out, cols  # (B, L, out_ch)


def _conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, in_len: int):
    out_ch, in_ch, kernel = w.shape
    b = dout.shape[0]
    d_flat = dout.reshape(-1, out_ch)  # (B*L, out_ch)
    cols_flat = cols.reshape(-1, kernel * in_ch)
    dw2 = cols_flat.T @ d_flat  # (k*C, out_ch)
    dw = dw2.reshape(kernel, in_ch, out_ch).transpose(2, 1, 0)
    db = d_flat.sum(axis=0)
    w2 = w.transpose(2, 1, 0).reshape(kernel * in_ch, out_ch)
    dcols = (d_flat @ w2.T).reshape(b, in_len, kernel, in_ch)
    pad = kernel // 2
    dxp = np.zeros((b, in_len + 2 * pad, in_ch), dtype=dout.dtype)
    for k in range(kernel):
        dxp[:, k : k + in_len, :] += dcols[:, :, k, :]
    return dxp[:, pad : pad + in_len, :], dw, db


def _bn_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray,
                var: np.ndarray, train: bool):
    c = x.shape[-1]
    if train:
        flat = x.reshape(-1, c)
        mu = flat.mean(axis=0)
        sigma2 = np.square(flat).mean(axis=0) - mu * mu
    else:
        mu, sigma2 = mean, var
    inv_std = 1.0 / np.sqrt(sigma2 + BN_EPS)
    xhat = (x - mu) * inv_std
    out = gamma * xhat + beta
    cache = (xhat, inv_std, gamma)
    return out, cache, mu, sigma2


def _bn_backward(dout: np.ndarray, cache):
    xhat, inv_std, gamma = cache
    c = dout.shape[-1]
    m = dout.size // c
    dg_flat = (dout * xhat).reshape(-1, c)
    dgamma = dg_flat.sum(axis=0)
    dbeta = dout.reshape(-1, c).sum(axis=0)
    dxhat = dout * gamma
    sum_dxhat = dxhat.reshape(-1, c).sum(axis=0)
    sum_dxhat_x = (dxhat * xhat).reshape(-1, c).sum(axis=0)
    dx = (inv_std / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_x)
    return dx, dgamma, dbeta


def _maxpool_forward(x: np.ndarray, pool: int):
    b, length, c = x.shape
    grouped = x.reshape(b, length // pool, pool, c)
    if pool == 2:
        left = grouped[:, :, 0, :]
        right = grouped[:, :, 1, :]
        left_wins = left >= right
        out = np.where(left_wins, left, right)
        return out, left_wins
    out = grouped.max(axis=2)
    is_max = grouped == out[:, :, None, :]
    mask = is_max & (np.cumsum(is_max, axis=2) == 1)  # first winner on ties
    return out, mask


def _maxpool_backward(dout: np.ndarray, mask: np.ndarray, pool: int):
    b, out_len, c = dout.shape
    if pool == 2:
        dgrouped = np.empty((b, out_len, 2, c), dtype=dout.dtype)
        dgrouped[:, :, 0, :] = np.where(mask, dout, 0)
        dgrouped[:, :, 1, :] = np.where(mask, 0, dout)
        return dgrouped.reshape(b, out_len * 2, c)
    dgrouped = mask * dout[:, :, None, :]
    return dgrouped.reshape(b, out_len * pool, c)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Network forward / backward


def forward(arch: ArchSpec, params: Params, x: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None):
    """Run the network; returns (logits, cache).

    mode="train" uses batch statistics (updating the running stats in
    ``params``) and applies dropout, which requires ``rng``; mode="infer"
    uses running stats and is deterministic.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected non-empty (batch, {arch.input_dim}) input")
    if x.shape[1] != arch.input_dim:
        raise ShapeMismatch(f"input dim {x.shape[1]} != arch input_dim {arch.input_dim}")
    train = mode == "train"
    if train and arch.dropout_p > 0 and rng is None:
        raise ValueError("train mode with dropout requires an rng")

    h = x[:, :, None]  # (B, L, 1)
    cache: dict = {"x": x, "blocks": [], "mode": mode}
    for i, (kernel, out_ch, pool) in enumerate(arch.conv_blocks):
        w, bias = params[f"conv{i}.w"], params[f"conv{i}.b"]
        if w.shape != (out_ch, h.shape[2], kernel):
            raise ShapeMismatch(
                f"conv{i}.w has shape {w.shape}, expected {(out_ch, h.shape[2], kernel)}"
            )
        conv_out, cols = _conv_forward(h, w, bias)
        bn_out, bn_cache, mu, sigma2 = _bn_forward(
            conv_out, params[f"bn{i}.gamma"], params[f"bn{i}.beta"],
            params[f"bn{i}.mean"], params[f"bn{i}.var"], train,
        )
        if train:
            params[f"bn{i}.mean"] = (
                (1 - BN_MOMENTUM) * params[f"bn{i}.mean"] + BN_MOMENTUM * mu
            ).astype(params[f"bn{i}.mean"].dtype)
            params[f"bn{i}.var"] = (
                (1 - BN_MOMENTUM) * params[f"bn{i}.var"] + BN_MOMENTUM * sigma2
            ).astype(params[f"bn{i}.var"].dtype)
        relu_mask = bn_out > 0
        act = bn_out * relu_mask
        if train and arch.dropout_p > 0:
            keep = (rng.random(act.shape) >= arch.dropout_p).astype(act.dtype)
            act = act * keep / (1.0 - arch.dropout_p)
        else:
            keep = None
        pooled, pool_mask = _maxpool_forward(act, pool)
        cache["blocks"].append(
            {
                "cols": cols,
                "in_len": h.shape[1],
                "bn": bn_cache,
                "relu": relu_mask,
                "drop": keep,
                "pool_mask": pool_mask,
                "pool": pool,
                "kernel_idx": i,
            }
        )
        h = pooled
    flat = h.reshape(h.shape[0], -1)
    cache["flat_shape"] = h.shape
    z0 = flat @ params["fc0.w"] + params["fc0.b"]
    relu0 = z0 > 0
    a0 = z0 * relu0
    logits = a0 @ params["fc1.w"] + params["fc1.b"]
    cache["fc"] = {"flat": flat, "relu0": relu0, "a0": a0}
    return logits, cache


def backward(arch: ArchSpec, params: Params, cache: dict, logits: np.ndarray,
             labels: np.ndarray, sample_weights: np.ndarray | None = None):
    """Softmax cross-entropy loss and gradients for all trainable tensors.

    With sample_weights=None the loss is the batch mean; otherwise it is
    sum(w_i * ce_i) with the caller's weights taken as-is.
    """
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= arch.num_classes:
        raise ValueError(f"labels must be in [0, {arch.num_classes}), got {labels}")
    b = logits.shape[0]
    if sample_weights is None:
        weights = np.full(b, 1.0 / b, dtype=logits.dtype)
    else:
        weights = np.asarray(sample_weights, dtype=logits.dtype)
    probs = softmax(logits)
    ce = -np.log(np.maximum(probs[np.arange(b), labels], 1e-30))
    loss = float(np.sum(weights * ce))

    grads: Params = {}
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits *= weights[:, None]

    fc = cache["fc"]
    grads["fc1.w"] = fc["a0"].T @ dlogits
    grads["fc1.b"] = dlogits.sum(axis=0)
    da0 = dlogits @ params["fc1.w"].T
    dz0 = da0 * fc["relu0"]
    grads["fc0.w"] = fc["flat"].T @ dz0
    grads["fc0.b"] = dz0.sum(axis=0)
    dflat = dz0 @ params["fc0.w"].T
    dh = dflat.reshape(cache["flat_shape"])

    for blk in reversed(cache["blocks"]):
        i = blk["kernel_idx"]
        dact = _maxpool_backward(dh, blk["pool_mask"], blk["pool"])
        if blk["drop"] is not None:
            dact = dact * blk["drop"] / (1.0 - arch.dropout_p)
        dbn_out = dact * blk["relu"]
        dconv, dgamma, dbeta = _bn_backward(dbn_out, blk["bn"])
        grads[f"bn{i}.gamma"] = dgamma
        grads[f"bn{i}.beta"] = dbeta
        dh, dw, db = _conv_backward(dconv, blk["cols"], params[f"conv{i}.w"], blk["in_len"])
        grads[f"conv{i}.w"] = dw
        grads[f"conv{i}.b"] = db
    return loss, grads


def predict_proba(model: Model, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Arc probability P(class 1) per row, in infer mode."""
    x = np.asarray(x, dtype=np.float32)
    out = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], batch_size):
        chunk = x[start : start + batch_size]
        logits, _ = forward(model.arch, model.params, chunk, mode="infer")
        out[start : start + chunk.shape[0]] = softmax(logits)[:, 1]
    return out


# ---------------------------------------------------------------------------
# Optimizer and penalties


class Momentum:
    """SGD with classical momentum and per-tensor learning rates."""

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.velocity: Params = {}

    def step(self, params: Params, grads: Params, lr_map: dict[str, float],
             weight_decay: float = 0.0) -> Params:
        """Return updated params; running BN stats pass through untouched."""
        new_params = dict(params)
        for name, grad in grads.items():
            if name not in lr_map:
                raise KeyError(f"lr_map missing entry for trainable tensor {name}")
            g = grad
            if weight_decay:
                g = g + weight_decay * params[name]
            v = self.momentum * self.velocity.get(name, 0.0) + g
            self.velocity[name] = v
            new_params[name] = (params[name] - lr_map[name] * v).astype(params[name].dtype)
        return new_params


def apply_update(params: Params, grads: Params, lr_map: dict[str, float],
                 weight_decay: float = 0.0, optimizer: Momentum | None = None) -> Params:
    """One update step; a fresh zero-momentum step when no optimizer given."""
    opt = optimizer if optimizer is not None else Momentum(momentum=0.0)
    return opt.step(params, grads, lr_map, weight_decay)


def make_lr_map(params: Params, head_lr: float, backbone_lr_ratio: float = 1.0) -> dict[str, float]:
    """Head tensors get head_lr; everything else head_lr * backbone_lr_ratio."""
    head = set(head_names(params))
    return {
        name: head_lr if name in head else head_lr * backbone_lr_ratio
        for name in trainable_names(params)
    }


def l2_sp(params: Params, anchor: Params, names: list[str] | None = None):
    """Anchored L2 penalty sum ||w - w0||^2 and its gradient 2(w - w0)."""
    if names is None:
        names = trainable_names(params)
    penalty = 0.0
    grads: Params = {}
    for name in names:
        if params[name].shape != anchor[name].shape:
            raise ShapeMismatch(f"anchor shape mismatch for {name}")
        diff = params[name].astype(np.float64) - anchor[name].astype(np.float64)
        penalty += float(np.sum(diff * diff))
        grads[name] = 2.0 * diff
    return penalty, grads


# ---------------------------------------------------------------------------
# FLOPs accounting


@dataclass
class FlopsCount:
    """Multiply-accumulate counts per layer plus element ops for the rest.

    Convolution: out_len * out_ch * in_ch * kernel MACs.  Fully connected:
    in * out MACs.  Batch norm, ReLU and pooling: one op per output
    element.  Dropout is identity at inference and not counted.
    """

    per_layer: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())


def flops(arch: ArchSpec) -> FlopsCount:
    counts: dict[str, int] = {}
    length = arch.input_dim
    in_ch = 1
    for i, (kernel, out_ch, pool) in enumerate(arch.conv_blocks):
        counts[f"conv{i}"] = length * out_ch * in_ch * kernel
        counts[f"bn{i}"] = out_ch * length
        counts[f"relu{i}"] = out_ch * length
        length //= pool
        counts[f"pool{i}"] = out_ch * length
        in_ch = out_ch
    flat = in_ch * length
    counts["fc0"] = flat * arch.fc_hidden
    counts["relu_fc0"] = arch.fc_hidden
    counts["fc1"] = arch.fc_hidden * arch.num_classes
    return FlopsCount(per_layer=counts)
