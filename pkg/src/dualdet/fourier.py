"""Radix-2 two-dimensional FFT.

Convention: the forward transform is unnormalized, the inverse carries the
1/(H*W) factor, so ``ifft2(fft2(x)) == x``. Grids must have power-of-two
dimensions; ``pad_to_pow2`` zero-pads arbitrary maps (crop afterwards to
undo). Complex data is carried as separate re/im float64 arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import Tensor


class DimensionError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reverse_perm(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


@lru_cache(maxsize=64)
def _twiddles(half: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    ang = sign * np.pi * np.arange(half) / half
    return np.cos(ang), np.sin(ang)


def _fft_last_axis(re: np.ndarray, im: np.ndarray, inverse: bool) -> tuple[np.ndarray, np.ndarray]:
    """Iterative Cooley-Tukey along the last axis; leading axes are batch."""
    n = re.shape[-1]
    if not _is_pow2(n):
        raise DimensionError(f"FFT length {n} is not a power of two")
    perm = _bit_reverse_perm(n)
    re = np.ascontiguousarray(re[..., perm])
    im = np.ascontiguousarray(im[..., perm])
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        wr, wi = _twiddles(half, sign)
        shape = re.shape[:-1] + (n // size, size)
        rv = re.reshape(shape)
        iv = im.reshape(shape)
        er, ei = rv[..., :half], iv[..., :half]
        orr, oi = rv[..., half:], iv[..., half:]
        tr = orr * wr - oi * wi
        ti = orr * wi + oi * wr
        rv[..., half:] = er - tr
        iv[..., half:] = ei - ti
        er += tr
        ei += ti
        size *= 2
    return re, im


def _fft2_raw(re: np.ndarray, im: np.ndarray, inverse: bool) -> tuple[np.ndarray, np.ndarray]:
    """2D transform over the last two axes (rows, then columns)."""
    re, im = _fft_last_axis(re, im, inverse)
    re = np.ascontiguousarray(np.swapaxes(re, -1, -2))
    im = np.ascontiguousarray(np.swapaxes(im, -1, -2))
    re, im = _fft_last_axis(re, im, inverse)
    re = np.ascontiguousarray(np.swapaxes(re, -1, -2))
    im = np.ascontiguousarray(np.swapaxes(im, -1, -2))
    if inverse:
        scale = 1.0 / (re.shape[-1] * re.shape[-2])
        re = re * scale
        im = im * scale
    return re, im


@dataclass
class ComplexGrid:
    """Height x width complex field, stored as separate re/im float64 arrays."""
    height: int
    width: int
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64)
        self.im = np.asarray(self.im, dtype=np.float64)
        if self.re.shape != (self.height, self.width) or self.im.shape != self.re.shape:
            raise DimensionError("re/im shape must match (height, width)")

    @staticmethod
    def from_real(x: np.ndarray) -> "ComplexGrid":
        x = np.asarray(x, dtype=np.float64)
        return ComplexGrid(x.shape[0], x.shape[1], x.copy(), np.zeros_like(x))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.re * self.re + self.im * self.im)


def fft2(x: np.ndarray | ComplexGrid) -> ComplexGrid:
    """Unnormalized forward 2D DFT of a power-of-two grid."""
    if isinstance(x, ComplexGrid):
        re, im = x.re, x.im
    else:
        x = np.asarray(x, dtype=np.float64)
        re, im = x, np.zeros_like(x)
    h, w = re.shape
    if not (_is_pow2(h) and _is_pow2(w)):
        raise DimensionError(f"grid {h}x{w} is not power-of-two; pad_to_pow2 first")
    rr, ri = _fft2_raw(re, im, inverse=False)
    return ComplexGrid(h, w, rr, ri)


def ifft2(x: ComplexGrid) -> ComplexGrid:
    """Inverse 2D DFT carrying the 1/(H*W) normalization."""
    h, w = x.re.shape
    if not (_is_pow2(h) and _is_pow2(w)):
        raise DimensionError(f"grid {h}x{w} is not power-of-two; pad_to_pow2 first")
    rr, ri = _fft2_raw(x.re, x.im, inverse=True)
    return ComplexGrid(h, w, rr, ri)


def next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length() if n > 1 else 1


def pad_to_pow2(x: np.ndarray) -> np.ndarray:
    """Zero-pad the last two axes up to the next power of two."""
    h, w = x.shape[-2], x.shape[-1]
    hp, wp = next_pow2(h), next_pow2(w)
    if (hp, wp) == (h, w):
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(0, hp - h), (0, wp - w)]
    return np.pad(x, widths)


# -- differentiable wrappers ----------------------------------------------------
#
# Complex tensors in the autodiff graph are packed as (..., H, W, 2) with the
# last axis holding (re, im). The DFT is a real-linear map, so the adjoint
# of the forward transform is the conjugated transform of the conjugated
# cotangent: grad = conj(F(conj(g))).


def _packed_fft(data: np.ndarray, inverse: bool) -> np.ndarray:
    re, im = _fft2_raw(data[..., 0], data[..., 1], inverse)
    return np.stack([re, im], axis=-1)


def fft2_t(z: Tensor) -> Tensor:
    """Forward 2D FFT of a packed (..., H, W, 2) tensor."""
    out = _packed_fft(z.data, inverse=False)

    def bw(g):
        conj = g.copy()
        conj[..., 1] = -conj[..., 1]
        back = _packed_fft(conj, inverse=False)
        back[..., 1] = -back[..., 1]
        return (back,)

    return Tensor._from_op(out, (z,), bw)


def ifft2_t(z: Tensor) -> Tensor:
    """Inverse 2D FFT (with 1/(H*W)) of a packed (..., H, W, 2) tensor."""
    out = _packed_fft(z.data, inverse=True)

    def bw(g):
        conj = g.copy()
        conj[..., 1] = -conj[..., 1]
        back = _packed_fft(conj, inverse=True)
        back[..., 1] = -back[..., 1]
        return (back,)

    return Tensor._from_op(out, (z,), bw)
