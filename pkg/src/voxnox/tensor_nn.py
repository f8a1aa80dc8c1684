"""Minimal differentiable kernel for the 3D convolutional autoencoder.

Dense numpy arrays are the tensor type; the public ops take the
(batch, channels, x, y, z) layout. Convolutions are same-padded 3x3x3 (or
pointwise 1x1x1), pooling is 2x2x2 max with ceil mode, upsampling is
nearest-neighbor x2. Every backward pass is hand-derived and checked
against central finite differences.

Internally the layer classes run channels-last: in a flat view of a padded
channels-last tensor every kernel offset is one constant row shift, so each
offset contributes a single contiguous-slice GEMM with no gather copies.
Layers run in the dtype of their parameters: float32 for training, float64
when a gradient check needs the headroom.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import OneHotTargetError, ShapeMismatchError

DTYPE = np.float32
_TILE_ROWS = 16384


# ---------------------------------------------------------------------------
# channels-last cores
# ---------------------------------------------------------------------------

def _conv_offsets(k, padded_shape):
    """Flat row shift for every kernel offset of a (B, P, Q, R, C) tensor."""
    _, _, q, r, _ = padded_shape
    pad = k // 2
    out = []
    for p in range(k):
        for qq in range(k):
            for rr in range(k):
                out.append((p, qq, rr, ((p - pad) * q + (qq - pad)) * r + (rr - pad)))
    return out


def _pad_last(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad), (0, 0)))


def conv3d_last_forward(x, wl, bias, prepadded=False):
    """x: (B, X, Y, Z, Cin) contiguous; wl: (k, k, k, Cin, Cout); returns
    (B, X, Y, Z, Cout). Offsets become contiguous row-range GEMMs on the
    padded flat view; pad rows accumulate junk that the final crop drops."""
    k = wl.shape[0]
    cin, cout = wl.shape[3], wl.shape[4]
    if x.shape[-1] != cin:
        raise ShapeMismatchError(f"input channels {cin}", x.shape[-1], "conv3d")
    if k == 1:
        out = x.reshape(-1, cin) @ wl[0, 0, 0] + bias
        return out.reshape(x.shape[:4] + (cout,))
    xp = x if prepadded else _pad_last(x, k // 2)
    b, p_, q_, r_, _ = xp.shape
    n = b * p_ * q_ * r_
    xf = xp.reshape(n, cin)
    out = np.zeros((n, cout), dtype=x.dtype)
    tmp = np.empty((_TILE_ROWS, cout), dtype=x.dtype)
    offsets = _conv_offsets(k, xp.shape)
    for t0 in range(0, n, _TILE_ROWS):
        t1 = min(t0 + _TILE_ROWS, n)
        acc = out[t0:t1]
        for p, q, r, d in offsets:
            a = max(t0, -d)
            bnd = min(t1, n - d)
            if a >= bnd:
                continue
            np.matmul(xf[a + d : bnd + d], wl[p, q, r], out=tmp[: bnd - a])
            acc[a - t0 : bnd - t0] += tmp[: bnd - a]
    out += bias
    pad = k // 2
    out = out.reshape(b, p_, q_, r_, cout)[:, pad:-pad, pad:-pad, pad:-pad, :]
    return np.ascontiguousarray(out)


def conv3d_last_backward(xp_or_x, wl, grad_out, prepadded=False):
    """Gradients of conv3d_last_forward; returns (grad_x, grad_wl, grad_b).
    `xp_or_x` may be the already-padded input (prepadded=True) to reuse a
    forward cache."""
    k = wl.shape[0]
    cin, cout = wl.shape[3], wl.shape[4]
    if k == 1:
        xf = xp_or_x.reshape(-1, cin)
        gy = grad_out.reshape(-1, cout)
        grad_wl = (xf.T @ gy)[None, None, None]
        grad_b = gy.sum(axis=0)
        gx = (gy @ wl[0, 0, 0].T).reshape(xp_or_x.shape)
        return gx, grad_wl, grad_b
    pad = k // 2
    xp = xp_or_x if prepadded else _pad_last(xp_or_x, pad)
    b, p_, q_, r_, _ = xp.shape
    n = b * p_ * q_ * r_
    xf = xp.reshape(n, cin)
    gy_pad = np.zeros((b, p_, q_, r_, cout), dtype=grad_out.dtype)
    gy_pad[:, pad:-pad, pad:-pad, pad:-pad, :] = grad_out
    gyf = gy_pad.reshape(n, cout)
    grad_b = grad_out.sum(axis=(0, 1, 2, 3))
    grad_wl = np.zeros_like(wl)
    gxf = np.zeros((n, cin), dtype=grad_out.dtype)
    tmp = np.empty((_TILE_ROWS, cin), dtype=grad_out.dtype)
    offsets = _conv_offsets(k, xp.shape)
    for t0 in range(0, n, _TILE_ROWS):
        t1 = min(t0 + _TILE_ROWS, n)
        for p, q, r, d in offsets:
            a = max(t0, -d)
            bnd = min(t1, n - d)
            if a >= bnd:
                continue
            seg = xf[a + d : bnd + d]
            gseg = gyf[a:bnd]
            grad_wl[p, q, r] += seg.T @ gseg
            np.matmul(gseg, wl[p, q, r].T, out=tmp[: bnd - a])
            gxf[a + d : bnd + d] += tmp[: bnd - a]
    gx = gxf.reshape(b, p_, q_, r_, cin)[:, pad:-pad, pad:-pad, pad:-pad, :]
    return np.ascontiguousarray(gx), grad_wl, grad_b


def _pool_windows_last(x):
    b, xd, yd, zd, c = x.shape
    xo, yo, zo = -(-xd // 2), -(-yd // 2), -(-zd // 2)
    xp = np.full((b, 2 * xo, 2 * yo, 2 * zo, c), -np.inf, dtype=x.dtype)
    xp[:, :xd, :yd, :zd, :] = x
    win = xp.reshape(b, xo, 2, yo, 2, zo, 2, c).transpose(0, 1, 3, 5, 2, 4, 6, 7)
    return win.reshape(b, xo, yo, zo, 8, c), (xo, yo, zo)


def maxpool3d_last_forward(x):
    win, _ = _pool_windows_last(x)
    idx = win.argmax(axis=4)
    out = np.take_along_axis(win, idx[:, :, :, :, None, :], axis=4)[:, :, :, :, 0, :]
    return out, idx


def maxpool3d_last_backward(x_shape, idx, grad_out):
    b, xd, yd, zd, c = x_shape
    xo, yo, zo = idx.shape[1:4]
    scat = np.zeros((b, xo, yo, zo, 8, c), dtype=grad_out.dtype)
    np.put_along_axis(scat, idx[:, :, :, :, None, :], grad_out[:, :, :, :, None, :], axis=4)
    full = scat.reshape(b, xo, yo, zo, 2, 2, 2, c).transpose(0, 1, 4, 2, 5, 3, 6, 7)
    full = full.reshape(b, 2 * xo, 2 * yo, 2 * zo, c)
    return np.ascontiguousarray(full[:, :xd, :yd, :zd, :])


def upsample_last_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)


def upsample_last_backward(grad_out):
    b, xd, yd, zd, c = grad_out.shape
    g = grad_out.reshape(b, xd // 2, 2, yd // 2, 2, zd // 2, 2, c)
    return g.sum(axis=(2, 4, 6))


def softmax_ce_last(logits, target):
    """Softmax + cross entropy over the trailing channel axis, averaged over
    every leading position. Returns (loss, grad_logits)."""
    if logits.shape != target.shape:
        raise ShapeMismatchError(logits.shape, target.shape, "softmax-CE target")
    sums = target.sum(axis=-1)
    if not (
        np.all((target == 0.0) | (target == 1.0)) and np.allclose(sums, 1.0, atol=1e-6)
    ):
        raise OneHotTargetError("target is not one-hot over the channel axis")
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    count = target.size // target.shape[-1]
    loss = float(-(target * logp).sum(dtype=np.float64) / count)
    grad = (np.exp(logp) - target) / count
    return loss, grad.astype(logits.dtype)


# ---------------------------------------------------------------------------
# public ops: (batch, channels, x, y, z) layout
# ---------------------------------------------------------------------------

def _to_last(x):
    return np.ascontiguousarray(x.transpose(0, 2, 3, 4, 1))


def _to_first(x):
    return np.ascontiguousarray(x.transpose(0, 4, 1, 2, 3))


def _w_to_last(w):
    return np.ascontiguousarray(w.transpose(2, 3, 4, 1, 0))


def conv3d_forward(x, weights, bias):
    """Same-padded 3D convolution. x: (B, Cin, X, Y, Z); weights:
    (Cout, Cin, k, k, k) with k in {1, 3}; bias: (Cout,)."""
    if x.ndim != 5:
        raise ShapeMismatchError("(batch, channels, x, y, z)", x.shape, "conv3d input")
    if x.shape[1] != weights.shape[1]:
        raise ShapeMismatchError(f"input channels {weights.shape[1]}", x.shape[1], "conv3d")
    return _to_first(conv3d_last_forward(_to_last(x), _w_to_last(weights), bias))


def conv3d_backward(x, weights, grad_out):
    """Gradients of conv3d_forward: (grad_input, grad_weights, grad_bias)."""
    gx, gwl, gb = conv3d_last_backward(_to_last(x), _w_to_last(weights), _to_last(grad_out))
    return _to_first(gx), np.ascontiguousarray(gwl.transpose(4, 3, 0, 1, 2)), gb


def maxpool3d_forward(x):
    """2x2x2 stride-2 max pooling in ceil mode (padding cells never win).
    Returns (output, argmax window-slot indices)."""
    out, idx = maxpool3d_last_forward(_to_last(x))
    return _to_first(out), np.ascontiguousarray(idx.transpose(0, 4, 1, 2, 3))


def maxpool3d_backward(x_shape, idx, grad_out):
    """Routes gradient to argmax positions only."""
    b, c, xd, yd, zd = x_shape
    gx = maxpool3d_last_backward(
        (b, xd, yd, zd, c),
        np.ascontiguousarray(idx.transpose(0, 2, 3, 4, 1)),
        _to_last(grad_out),
    )
    return _to_first(gx)


def upsample_forward(x):
    """Nearest-neighbor x2 on the three spatial axes."""
    return x.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)


def upsample_backward(grad_out):
    b, c, xd, yd, zd = grad_out.shape
    g = grad_out.reshape(b, c, xd // 2, 2, yd // 2, 2, zd // 2, 2)
    return g.sum(axis=(3, 5, 7))


def dense_forward(x, weights, bias):
    """Affine map. x: (B, n_in); weights: (n_in, n_out); bias: (n_out,)."""
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatchError(f"(B, {weights.shape[0]})", x.shape, "dense input")
    return x @ weights + bias


def dense_backward(x, weights, grad_out):
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0.0)


def softmax(logits, axis=1):
    m = logits.max(axis=axis, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_ce_loss(logits, target):
    """Per-voxel softmax over channel axis 1 + cross entropy, averaged over
    batch and voxels. Returns (loss, grad_logits)."""
    if logits.shape != target.shape:
        raise ShapeMismatchError(logits.shape, target.shape, "softmax-CE target")
    loss, grad = softmax_ce_last(np.moveaxis(logits, 1, -1), np.moveaxis(target, 1, -1))
    return loss, np.ascontiguousarray(np.moveaxis(grad, -1, 1))


# ---------------------------------------------------------------------------
# parameters and Adam
# ---------------------------------------------------------------------------

@dataclass
class Param:
    """One parameter tensor with its gradient and Adam state."""

    value: np.ndarray
    grad: np.ndarray = None
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def adam_step(param: Param, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Standard Adam update with bias correction; increments the step
    counter."""
    param.step += 1
    g = param.grad
    param.m = beta1 * param.m + (1.0 - beta1) * g
    param.v = beta2 * param.v + (1.0 - beta2) * g * g
    m_hat = param.m / (1.0 - beta1 ** param.step)
    v_hat = param.v / (1.0 - beta2 ** param.step)
    param.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.value.dtype)


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# layers (channels-last data path)
# ---------------------------------------------------------------------------

class Conv3d:
    """Stores weights as (k, k, k, Cin, Cout) so the offset GEMM operands
    stay contiguous."""

    def __init__(self, in_ch, out_ch, kernel=3, *, rng, dtype=DTYPE):
        fan = kernel ** 3
        self.kernel = kernel
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.w = Param(glorot_uniform((kernel, kernel, kernel, in_ch, out_ch),
                                      in_ch * fan, out_ch * fan, rng, dtype))
        self.b = Param(np.zeros(out_ch, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, cache=True):
        if self.kernel == 1:
            if cache:
                self._cache = x
            return conv3d_last_forward(x, self.w.value, self.b.value)
        xp = _pad_last(x, self.kernel // 2)
        if cache:
            self._cache = xp
        return conv3d_last_forward(xp, self.w.value, self.b.value, prepadded=True)

    def backward(self, grad_out):
        gx, gwl, gb = conv3d_last_backward(
            self._cache, self.w.value, grad_out, prepadded=self.kernel != 1
        )
        self.w.grad += gwl
        self.b.grad += gb
        return gx


class Dense:
    def __init__(self, n_in, n_out, *, rng, dtype=DTYPE):
        self.w = Param(glorot_uniform((n_in, n_out), n_in, n_out, rng, dtype))
        self.b = Param(np.zeros(n_out, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, cache=True):
        if cache:
            self._cache = x
        return dense_forward(x, self.w.value, self.b.value)

    def backward(self, grad_out):
        gx, gw, gb = dense_backward(self._cache, self.w.value, grad_out)
        self.w.grad += gw
        self.b.grad += gb
        return gx


class Relu:
    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, x, cache=True):
        out = relu_forward(x)
        if cache:
            self._cache = x
        return out

    def backward(self, grad_out):
        return relu_backward(self._cache, grad_out)


class MaxPool3d:
    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, x, cache=True):
        out, idx = maxpool3d_last_forward(x)
        if cache:
            self._cache = (x.shape, idx)
        return out

    def backward(self, grad_out):
        x_shape, idx = self._cache
        return maxpool3d_last_backward(x_shape, idx, grad_out)


class Upsample2x:
    def params(self):
        return []

    def forward(self, x, cache=True):
        return upsample_last_forward(x)

    def backward(self, grad_out):
        return upsample_last_backward(grad_out)


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def forward(self, x, cache=True):
        if cache:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Reshape:
    """(B, n) <-> (B, *target)."""

    def __init__(self, target):
        self.target = tuple(target)

    def params(self):
        return []

    def forward(self, x, cache=True):
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, grad_out):
        return grad_out.reshape(grad_out.shape[0], -1)


class CenterCrop:
    """Crop the three spatial axes (channels-last) to `size`, centered."""

    def __init__(self, size):
        self.size = size
        self._shape = None

    def params(self):
        return []

    def forward(self, x, cache=True):
        if cache:
            self._shape = x.shape
        s = self.size
        off = [(d - s) // 2 for d in x.shape[1:4]]
        return np.ascontiguousarray(
            x[:, off[0] : off[0] + s, off[1] : off[1] + s, off[2] : off[2] + s, :]
        )

    def backward(self, grad_out):
        full = np.zeros(self._shape, dtype=grad_out.dtype)
        s = self.size
        off = [(d - s) // 2 for d in self._shape[1:4]]
        full[:, off[0] : off[0] + s, off[1] : off[1] + s, off[2] : off[2] + s, :] = grad_out
        return full


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x, cache=True):
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn, arrays, step=1e-3):
    """Central finite differences against analytic gradients.

    `fn(arrays) -> (loss, grads)` must be pure; `arrays` are perturbed in
    place and restored. Returns the max relative error across all entries.
    """
    _, grads = fn(arrays)
    max_err = 0.0
    for a, g in zip(arrays, grads):
        flat = a.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp, _ = fn(arrays)
            flat[j] = orig - step
            lm, _ = fn(arrays)
            flat[j] = orig
            num = (lp - lm) / (2.0 * step)
            denom = max(abs(gflat[j]), abs(num), 1e-6)
            max_err = max(max_err, abs(gflat[j] - num) / denom)
    return max_err


# ---------------------------------------------------------------------------
# weight file: versioned binary, exact round trip
# ---------------------------------------------------------------------------

_MAGIC = b"VXNN"
_VERSION = 1


def save_weights(path, named_arrays) -> None:
    """`named_arrays`: iterable of (name, float32 ndarray). Little-endian
    per-layer data after a JSON manifest."""
    entries = [(name, np.ascontiguousarray(arr, dtype="<f4")) for name, arr in named_arrays]
    manifest = {
        "layers": [{"name": n, "shape": list(a.shape)} for n, a in entries],
        "dtype": "<f4",
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in entries:
            fh.write(a.tobytes())


def load_weights(path):
    """Returns list of (name, ndarray) in manifest order."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r} in weight file {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"unsupported weight file version {version}")
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        out = []
        for entry in manifest["layers"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape)
            out.append((entry["name"], data.astype(np.float32)))
    return out
