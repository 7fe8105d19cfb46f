"""Neural-network operations and parameter management on top of autodiff.

Functional ops (conv2d, gelu, mha, ...) operate on Tensors and are fully
differentiable. Layer classes are thin wrappers that register their weights
in a ParamStore under hierarchical names; the store is the unit of
checkpointing and optimization.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .autodiff import Tensor, bmm, concat, relu, softmax
from .rng import Rng

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x) with Phi the standard normal CDF (erf form)."""
    phi = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * phi
    # d/dx [x Phi(x)] = Phi(x) + x phi(x)
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (phi + x.data * pdf),))


def _im2col(x: np.ndarray, k: int, padding: int, stride: int) -> np.ndarray:
    """(C,H,W) -> (H_out*W_out, C*k*k) patch matrix."""
    c, h, w = x.shape
    if padding:
        xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, padding:padding + h, padding:padding + w] = x
    else:
        xp = x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (C,H',W',k,k)
    if stride > 1:
        win = win[:, ::stride, ::stride]
    _, ho, wo, _, _ = win.shape
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * k * k)
    return np.ascontiguousarray(cols)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, padding: int,
           stride: int = 1) -> Tensor:
    """Cross-correlation of (C_in,H,W) with (C_out,C_in,k,k) weights.

    The exported kit fixes stride at 1 (padding = (k-1)/2 keeps H, W); the
    pipeline's downsampling junctions use stride=2 internally, which equals a
    stride-1 convolution followed by 2x subsampling.
    """
    c_out, c_in, k, _ = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"channel mismatch: input has {x.shape[0]}, weight expects {c_in}")
    _, h, w = x.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    cols = _im2col(x.data, k, padding, stride)
    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = cols @ wmat.T  # (ho*wo, c_out)
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.T.reshape(c_out, ho, wo))

    def bw(g):
        g2 = g.reshape(c_out, ho * wo)
        gw = (g2 @ cols).reshape(weight.shape)
        gcols = g2.T @ wmat  # (ho*wo, c_in*k*k)
        gx = np.zeros((c_in, h + 2 * padding, w + 2 * padding))
        gc = gcols.reshape(ho, wo, c_in, k, k).transpose(2, 0, 1, 3, 4)
        for di in range(k):
            for dj in range(k):
                gx[:, di:di + ho * stride:stride, dj:dj + wo * stride:stride] += gc[:, :, :, di, dj]
        gx = gx[:, padding:padding + h, padding:padding + w]
        gb = g2.sum(axis=1) if bias is not None else None
        return (gx, gw, gb)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    if bias is None:
        return Tensor._from_op(out, parents, lambda g: bw(g)[:2])
    return Tensor._from_op(out, parents, bw)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """(C,H,W) -> (C,2H,2W), each pixel replicated into a 2x2 block."""
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)
    c, h, w = x.shape

    def bw(g):
        return (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),)

    return Tensor._from_op(out, (x,), bw)


def pad2d(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Zero-pad the last two axes on the bottom/right."""
    widths = [(0, 0)] * (x.data.ndim - 2) + [(0, pad_h), (0, pad_w)]
    out = np.pad(x.data, widths)
    sl = tuple([slice(None)] * (x.data.ndim - 2)
               + [slice(0, x.shape[-2]), slice(0, x.shape[-1])])
    return Tensor._from_op(out, (x,), lambda g: (np.ascontiguousarray(g[sl]),))


def crop2d(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w window of the last two axes."""
    sl = tuple([slice(None)] * (x.data.ndim - 2) + [slice(0, h), slice(0, w)])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        return (gx,)

    return Tensor._from_op(np.ascontiguousarray(x.data[sl]), (x,), bw)


def complex_abs(z: Tensor) -> Tensor:
    """Magnitude of a (..., 2) re/im-packed tensor; gradient clamped near 0."""
    re = z.data[..., 0]
    im = z.data[..., 1]
    r = np.sqrt(re * re + im * im)

    def bw(g):
        safe = np.maximum(r, 1e-12)
        gz = np.empty_like(z.data)
        gz[..., 0] = g * re / safe
        gz[..., 1] = g * im / safe
        return (gz,)

    return Tensor._from_op(r, (z,), bw)


def complex_mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise complex product of (..., 2) re/im-packed tensors."""
    ar, ai = a.data[..., 0], a.data[..., 1]
    br, bi = b.data[..., 0], b.data[..., 1]
    out = np.empty(np.broadcast_shapes(a.data.shape, b.data.shape))
    out[..., 0] = ar * br - ai * bi
    out[..., 1] = ar * bi + ai * br

    def bw(g):
        gr, gi = g[..., 0], g[..., 1]
        ga = np.empty_like(a.data)
        ga[..., 0] = gr * br + gi * bi
        ga[..., 1] = -gr * bi + gi * br
        gb = np.empty_like(b.data)
        gb[..., 0] = gr * ar + gi * ai
        gb[..., 1] = -gr * ai + gi * ar
        return (ga, gb)

    return Tensor._from_op(out, (a, b), bw)


# -- attention ----------------------------------------------------------------


def mha(q: Tensor, kv: Tensor, params: "MultiHeadAttention", heads: int) -> Tensor:
    """Multi-head attention: softmax(QK^T / sqrt(d_head)) V, concat, out-proj.

    ``kv`` supplies both keys and values. Returns (Nq, D).
    """
    nq, d = q.shape
    nk = kv.shape[0]
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads
    qp = (q @ params.wq + params.bq).reshape(nq, heads, dh).transpose(1, 0, 2)
    kp = (kv @ params.wk + params.bk).reshape(nk, heads, dh).transpose(1, 0, 2)
    vp = (kv @ params.wv + params.bv).reshape(nk, heads, dh).transpose(1, 0, 2)
    scores = bmm(qp, kp.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = bmm(attn, vp)  # (heads, nq, dh)
    merged = ctx.transpose(1, 0, 2).reshape(nq, d)
    return merged @ params.wo + params.bo


def sine_position_encoding(positions: np.ndarray, dim: int,
                           temperature: float = 20.0) -> np.ndarray:
    """2D sine/cosine embedding of normalized (cx, cy) positions -> (N, dim)."""
    if dim % 4 != 0:
        raise ValueError("position encoding dim must be divisible by 4")
    nfreq = dim // 4
    freqs = temperature ** (np.arange(nfreq) / max(nfreq, 1))
    out = np.empty((positions.shape[0], dim))
    for axis in range(2):
        ang = positions[:, axis:axis + 1] * freqs[None, :] * 2.0 * np.pi
        base = axis * 2 * nfreq
        out[:, base:base + nfreq] = np.sin(ang)
        out[:, base + nfreq:base + 2 * nfreq] = np.cos(ang)
    return out


def grid_positions(h: int, w: int) -> np.ndarray:
    """Normalized cell-center (cx, cy) coordinates of an h x w grid, row-major."""
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cx = (xs.reshape(-1) + 0.5) / w
    cy = (ys.reshape(-1) + 0.5) / h
    return np.stack([cx, cy], axis=1)


# -- parameter store and layers ------------------------------------------------


class ParamStore:
    """Ordered name -> Tensor registry; the checkpoint and optimizer unit."""

    def __init__(self, rng: Rng):
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, shape: tuple[int, ...], fan_in: int | None = None,
              init: np.ndarray | None = None) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if init is not None:
            data = np.asarray(init, dtype=np.float64).reshape(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in) if fan_in else 1.0
            data = self.rng.uniform(-bound, bound, shape)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def checksum(self) -> float:
        return float(sum(np.abs(v.data).sum() for v in self.params.values()))


class Linear:
    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int):
        self.w = store.param(f"{name}.w", (d_in, d_out), fan_in=d_in)
        self.b = store.param(f"{name}.b", (d_out,), fan_in=d_in)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Conv2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 k: int, stride: int = 1):
        if k not in (1, 3):
            raise ValueError("kernel size must be 1 or 3")
        self.k = k
        self.stride = stride
        self.padding = (k - 1) // 2
        self.w = store.param(f"{name}.w", (c_out, c_in, k, k), fan_in=c_in * k * k)
        self.b = store.param(f"{name}.b", (c_out,), fan_in=c_in * k * k)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, self.padding, self.stride)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-6):
        self.g = store.param(f"{name}.g", (dim,), init=np.ones(dim))
        self.b = store.param(f"{name}.b", (dim,), init=np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        from .autodiff import sqrt as _sqrt
        return xc / _sqrt(var + self.eps) * self.g + self.b


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        self.heads = heads
        self.wq = store.param(f"{name}.wq", (dim, dim), fan_in=dim)
        self.bq = store.param(f"{name}.bq", (dim,), init=np.zeros(dim))
        self.wk = store.param(f"{name}.wk", (dim, dim), fan_in=dim)
        self.bk = store.param(f"{name}.bk", (dim,), init=np.zeros(dim))
        self.wv = store.param(f"{name}.wv", (dim, dim), fan_in=dim)
        self.bv = store.param(f"{name}.bv", (dim,), init=np.zeros(dim))
        self.wo = store.param(f"{name}.wo", (dim, dim), fan_in=dim)
        self.bo = store.param(f"{name}.bo", (dim,), init=np.zeros(dim))

    def __call__(self, q: Tensor, kv: Tensor) -> Tensor:
        return mha(q, kv, self, self.heads)


class FeedForward:
    def __init__(self, store: ParamStore, name: str, dim: int, hidden: int):
        self.fc1 = Linear(store, f"{name}.fc1", dim, hidden)
        self.fc2 = Linear(store, f"{name}.fc2", hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))
