"""Dense tensors and the exact linear operators shared by the SAN code.

A tensor is a float64 ``numpy.ndarray`` of rank 1 (signal) or 2 (image).
The operators below also accept leading batch axes: the trailing
``w.ndim`` axes are spatial, everything in front is treated as a batch.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_tensor",
    "same_pads",
    "xcorr_same",
    "adjoint_xcorr_same",
    "xcorr_kernel_grad",
    "mae",
    "nnz",
]


def as_tensor(values, rank: int | None = None) -> np.ndarray:
    """Return ``values`` as a float64 rank-1 or rank-2 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise ValueError(f"tensor rank must be 1 or 2, got {arr.ndim}")
    if rank is not None and arr.ndim != rank:
        raise ValueError(f"expected rank {rank}, got {arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"every extent must be >= 1, got {arr.shape}")
    return arr


def same_pads(m: int) -> tuple[int, int]:
    # Even kernels put the extra sample of padding on the right.
    left = (m - 1) // 2
    return left, m - 1 - left


def _check(x: np.ndarray, w: np.ndarray) -> int:
    r = w.ndim
    if r not in (1, 2):
        raise ValueError(f"kernel rank must be 1 or 2, got {r}")
    if x.ndim < r:
        raise ValueError(f"rank mismatch: input rank {x.ndim}, kernel rank {r}")
    for n, m in zip(x.shape[-r:], w.shape):
        if m > n:
            raise ValueError(f"kernel extent {w.shape} larger than input extent {x.shape[-r:]}")
    return r


def _pad(x: np.ndarray, pads: list[tuple[int, int]]) -> np.ndarray:
    lead = [(0, 0)] * (x.ndim - len(pads))
    return np.pad(x, lead + pads)


def _shifted(xp: np.ndarray, offset: tuple[int, ...], extents: tuple[int, ...]) -> np.ndarray:
    sl = tuple(slice(o, o + n) for o, n in zip(offset, extents))
    return xp[(Ellipsis,) + sl]


def xcorr_same(x, w) -> np.ndarray:
    """Zero-padded cross-correlation whose output has the input's extents.

    ``out[t] = sum_j x[t + j - left] * w[j]`` per axis, with ``left =
    (m - 1) // 2`` and samples outside ``x`` read as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = _check(x, w)
    extents = x.shape[-r:]
    xp = _pad(x, [same_pads(m) for m in w.shape])
    out = np.zeros(x.shape)
    # One pass per kernel tap keeps the summation order independent of batch size.
    for j in np.ndindex(w.shape):
        out += w[j] * _shifted(xp, j, extents)
    return out


def adjoint_xcorr_same(a, w) -> np.ndarray:
    """Transpose of ``x -> xcorr_same(x, w)`` applied to ``a``.

    A unit spike at ``t`` returns a copy of ``w`` (not reversed) whose
    centre tap ``left`` sits at ``t``.
    """
    a = np.asarray(a, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = _check(a, w)
    extents = a.shape[-r:]
    # Swapping the pad split and flipping the kernel gives the transpose.
    ap = _pad(a, [same_pads(m)[::-1] for m in w.shape])
    wf = w[(slice(None, None, -1),) * r]
    out = np.zeros(a.shape)
    for j in np.ndindex(w.shape):
        out += wf[j] * _shifted(ap, j, extents)
    return out


def xcorr_kernel_grad(inp, upstream, kernel_extents) -> np.ndarray:
    """Gradient of ``<upstream, xcorr_same(inp, w)>`` with respect to ``w``.

    Leading batch axes are summed over.
    """
    inp = np.asarray(inp, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    kernel_extents = tuple(int(m) for m in np.atleast_1d(kernel_extents))
    if inp.shape != upstream.shape:
        raise ValueError(f"shape mismatch: input {inp.shape}, upstream {upstream.shape}")
    r = _check(inp, np.empty(kernel_extents))
    extents = inp.shape[-r:]
    xp = _pad(inp, [same_pads(m) for m in kernel_extents])
    grad = np.empty(kernel_extents)
    for j in np.ndindex(kernel_extents):
        grad[j] = np.sum(upstream * _shifted(xp, j, extents))
    return grad


def mae(a, b) -> float:
    """Mean absolute difference over every entry."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def nnz(a) -> int:
    """Number of entries that are exactly nonzero."""
    return int(np.count_nonzero(np.asarray(a)))
