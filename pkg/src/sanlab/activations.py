"""Sparse activation functions mapping a similarity map ``s`` to ``alpha``.

Each selection is exposed twice: as a boolean *mask* of kept indices
(used by the backward pass, where the kept set is held constant) and as
the public activation returning ``alpha = where(mask, s, 0)``.

Mask helpers take a ``rank`` argument; axes in front of the trailing
``rank`` axes are a batch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class ActivationKind(str, enum.Enum):
    IDENTITY = "Identity"
    RELU = "Relu"
    TOPK = "TopKAbsolutes"
    POOL = "ExtremaPoolIndices"
    EXTREMA = "Extrema"

    @classmethod
    def parse(cls, name: str) -> "ActivationKind":
        """Accept the canonical names plus a few short aliases."""
        if isinstance(name, cls):
            return name
        key = name.strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        aliases = {
            "id": cls.IDENTITY,
            "topk": cls.TOPK,
            "topkabs": cls.TOPK,
            "pool": cls.POOL,
            "extremapool": cls.POOL,
            "extremapoolidx": cls.POOL,
            "peaks": cls.EXTREMA,
            "peak": cls.EXTREMA,
        }
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown activation kind {name!r}")


@dataclass(frozen=True)
class TopK:
    k: int


@dataclass(frozen=True)
class PoolSize:
    m: int


@dataclass(frozen=True)
class MinDistance:
    med: int
    border: int = 0


SparsityParam = Union[None, TopK, PoolSize, MinDistance]


def derive_sparsity_param(kind, m: int, extents, border: int = 0) -> SparsityParam:
    """Sparsity parameter for ``kind`` given kernel size ``m``.

    Top-k uses ``k = prod(n_axis // m)`` so that it keeps about as many
    activations as Extrema-Pool on the same grid.
    """
    kind = ActivationKind.parse(kind)
    extents = tuple(int(n) for n in np.atleast_1d(extents))
    if m < 1:
        raise ValueError(f"kernel size must be >= 1, got {m}")
    if kind in (ActivationKind.IDENTITY, ActivationKind.RELU):
        return None
    if kind is ActivationKind.TOPK:
        k = math.prod(n // m for n in extents)
        if k < 1:
            raise ValueError(f"kernel size {m} exceeds every extent {extents}: k would be 0")
        return TopK(k)
    if any(m > n for n in extents):
        raise ValueError(f"kernel size {m} exceeds extents {extents}")
    if kind is ActivationKind.POOL:
        return PoolSize(m)
    if border < 0:
        raise ValueError("border tolerance must be >= 0")
    return MinDistance(m, border)


# -- masks ---------------------------------------------------------------


def topk_mask(s: np.ndarray, k: int, rank: int) -> np.ndarray:
    spatial = s.shape[s.ndim - rank:]
    n = math.prod(spatial)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    flat = np.abs(s).reshape(s.shape[: s.ndim - rank] + (n,))
    # Stable sort on -|s| breaks ties towards the lowest flat index.
    order = np.argsort(-flat, axis=-1, kind="stable")[..., :k]
    mask = np.zeros(flat.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask.reshape(s.shape)


def pool_mask(s: np.ndarray, m: int, rank: int) -> np.ndarray:
    spatial = s.shape[s.ndim - rank:]
    lead = s.shape[: s.ndim - rank]
    if m < 1 or any(m > n for n in spatial):
        raise ValueError(f"pool size {m} out of range for extents {spatial}")
    mask = np.zeros(s.shape, dtype=bool)
    a = np.abs(s)
    if rank == 1:
        nb = spatial[0] // m
        win = a[..., : nb * m].reshape(lead + (nb, m))
        arg = np.argmax(win, axis=-1)
        hit = np.zeros(win.shape, dtype=bool)
        np.put_along_axis(hit, arg[..., None], True, axis=-1)
        mask[..., : nb * m] = hit.reshape(lead + (nb * m,))
        return mask
    nh, nw = spatial[0] // m, spatial[1] // m
    win = a[..., : nh * m, : nw * m].reshape(lead + (nh, m, nw, m))
    win = np.moveaxis(win, -3, -2).reshape(lead + (nh, nw, m * m))
    # argmax over the row-major window picks the lowest flat index on ties.
    arg = np.argmax(win, axis=-1)
    hit = np.zeros(win.shape, dtype=bool)
    np.put_along_axis(hit, arg[..., None], True, axis=-1)
    hit = np.moveaxis(hit.reshape(lead + (nh, nw, m, m)), -2, -3)
    mask[..., : nh * m, : nw * m] = hit.reshape(lead + (nh * m, nw * m))
    return mask


def _candidates_1d(s: np.ndarray, border: int) -> np.ndarray:
    n = s.shape[0]
    cand = np.zeros(n, dtype=bool)
    if n >= 2:
        d = np.diff(s)
        # Derivative padded by replicating its end values: edges never qualify.
        left = np.concatenate(([d[0]], d))
        right = np.concatenate((d, [d[-1]]))
        peaks = (left >= 0) & (right < 0)
        valleys = (left < 0) & (right >= 0)
        cand = peaks | valleys
    for t in range(min(border, n)):
        cand[t] |= _strict_extremum(s[: t + border + 1], t)
    for t in range(max(n - border, 0), n):
        lo = max(t - border, 0)
        cand[t] |= _strict_extremum(s[lo:], t - lo)
    return cand


def _strict_extremum(window: np.ndarray, i: int) -> bool:
    if window.size < 2:
        return False
    others = np.delete(window, i)
    return bool(window[i] > others.max() or window[i] < others.min())


def _candidates_2d(s: np.ndarray) -> np.ndarray:
    h, w = s.shape
    lo = np.pad(s, 1, constant_values=-np.inf)
    hi = np.pad(s, 1, constant_values=np.inf)
    nmax = np.full(s.shape, -np.inf)
    nmin = np.full(s.shape, np.inf)
    for di in range(3):
        for dj in range(3):
            if di == 1 and dj == 1:
                continue
            nmax = np.maximum(nmax, lo[di : di + h, dj : dj + w])
            nmin = np.minimum(nmin, hi[di : di + h, dj : dj + w])
    return (s > nmax) | (s < nmin)


def _greedy_suppress(s: np.ndarray, cand: np.ndarray, med: int) -> np.ndarray:
    idx = np.flatnonzero(cand)
    order = idx[np.argsort(-np.abs(s.ravel()[idx]), kind="stable")]
    keep = np.zeros(s.shape, dtype=bool)
    blocked = np.zeros(s.shape, dtype=bool)
    if s.ndim == 1:
        for t in order:
            if not blocked[t]:
                keep[t] = True
                blocked[max(t - med, 0) : t + med + 1] = True
        return keep
    width = s.shape[1]
    for flat in order:
        i, j = divmod(int(flat), width)
        if not blocked[i, j]:
            keep[i, j] = True
            blocked[max(i - med, 0) : i + med + 1, max(j - med, 0) : j + med + 1] = True
    return keep


def extrema_mask(s: np.ndarray, med: int, border: int, rank: int) -> np.ndarray:
    if med < 1:
        raise ValueError(f"minimum distance must be >= 1, got {med}")
    spatial = s.shape[s.ndim - rank:]
    flat = s.reshape((-1,) + spatial)
    out = np.zeros(flat.shape, dtype=bool)
    for b, sb in enumerate(flat):
        cand = _candidates_1d(sb, border) if rank == 1 else _candidates_2d(sb)
        out[b] = _greedy_suppress(sb, cand, med)
    return out.reshape(s.shape)


def selection_mask(kind, s: np.ndarray, param: SparsityParam, rank: int) -> np.ndarray:
    """Boolean mask of the indices ``kind`` keeps in ``s``."""
    kind = ActivationKind.parse(kind)
    if kind is ActivationKind.IDENTITY:
        return np.ones(s.shape, dtype=bool)
    if kind is ActivationKind.RELU:
        return s > 0
    if kind is ActivationKind.TOPK:
        return topk_mask(s, param.k, rank)
    if kind is ActivationKind.POOL:
        return pool_mask(s, param.m, rank)
    return extrema_mask(s, param.med, param.border, rank)


def activate(kind, s, param: SparsityParam, rank: int | None = None) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    rank = s.ndim if rank is None else rank
    return np.where(selection_mask(kind, s, param, rank), s, 0.0)


# -- public single-tensor forms -------------------------------------------


def identity(s) -> np.ndarray:
    return np.array(s, dtype=np.float64)


def relu(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.where(s > 0, s, 0.0)


def topk_absolutes(s, k: int) -> np.ndarray:
    """Keep the ``k`` entries of largest magnitude, zero the rest."""
    s = np.asarray(s, dtype=np.float64)
    return np.where(topk_mask(s, k, s.ndim), s, 0.0)


def extrema_pool_indices(s, m: int) -> np.ndarray:
    """Keep the largest-magnitude entry of each complete ``m``-wide window.

    A trailing remainder narrower than ``m`` is dropped.
    """
    s = np.asarray(s, dtype=np.float64)
    return np.where(pool_mask(s, m, s.ndim), s, 0.0)


def extrema(s, med: int, border: int = 0) -> np.ndarray:
    """Local extrema of ``s`` thinned to a minimum spacing of ``med``.

    Candidates are visited by decreasing ``|s|`` and accepted only when
    no accepted extremum lies within distance ``med`` (Chebyshev in 2D).
    ``border`` admits one-sided extrema within that many samples of the
    edges of a 1D signal.
    """
    s = np.asarray(s, dtype=np.float64)
    return np.where(extrema_mask(s, med, border, s.ndim), s, 0.0)
