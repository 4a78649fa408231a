"""Sparsely activated networks: one-level convolutional autoencoders.

Per kernel ``w_i``::

    s_i   = xcorr_same(x, w_i)
    a_i   = activation(s_i, d_i)
    r_i   = adjoint_xcorr_same(a_i, w_i)
    xhat  = sum_i r_i

trained on the mean absolute reconstruction error with Adam.  Gradients
are computed by hand; hard selections pass gradient only through the
indices they kept (the kept set is treated as constant).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import activations as act
from .activations import ActivationKind, SparsityParam
from .numerics import adjoint_xcorr_same, as_tensor, mae, xcorr_kernel_grad, xcorr_same
from .phi import PhiAggregate, PhiReport, phi_bar, phi_reports

log = logging.getLogger(__name__)


@dataclass
class SanModel:
    kernels: list[np.ndarray]
    activation: ActivationKind
    sparsity: list[SparsityParam]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.kernels:
            raise ValueError("a SAN needs at least one kernel")
        self.kernels = [np.asarray(w, dtype=np.float64) for w in self.kernels]
        self.activation = ActivationKind.parse(self.activation)
        ranks = {w.ndim for w in self.kernels}
        if len(ranks) != 1 or ranks - {1, 2}:
            raise ValueError(f"kernels must share rank 1 or 2, got ranks {sorted(ranks)}")
        if len(self.sparsity) != len(self.kernels):
            raise ValueError("need one sparsity parameter per kernel")

    @property
    def rank(self) -> int:
        return self.kernels[0].ndim

    @property
    def q(self) -> int:
        return len(self.kernels)

    @property
    def sizes(self) -> list[int]:
        return [w.shape[0] for w in self.kernels]

    def copy(self) -> "SanModel":
        return replace(self, kernels=[w.copy() for w in self.kernels], meta=dict(self.meta))


def init_kernels(q: int, sizes, mu: float = 0.0, sigma: float = 0.1, seed=0, rank: int = 1) -> list[np.ndarray]:
    """Draw ``q`` kernels with i.i.d. N(mu, sigma) entries.

    ``sizes`` is one kernel size for all kernels or a sequence of ``q``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if np.ndim(sizes) == 0:
        sizes = [int(sizes)] * q
    if len(sizes) != q:
        raise ValueError(f"expected {q} kernel sizes, got {len(sizes)}")
    rng = np.random.default_rng(seed)
    return [rng.normal(mu, sigma, size=(m,) * rank) for m in sizes]


def build_model(activation, sizes, extents, *, q: int = 1, border: int = 0, kernels=None,
                mu: float = 0.0, sigma: float = 0.1, seed=0) -> SanModel:
    """Model with sparsity parameters derived for inputs of shape ``extents``."""
    extents = tuple(int(n) for n in np.atleast_1d(extents))
    rank = len(extents)
    if np.ndim(sizes) == 0:
        sizes = [int(sizes)] * q
    if kernels is None:
        kernels = init_kernels(len(sizes), sizes, mu, sigma, seed, rank)
    sparsity = [act.derive_sparsity_param(activation, m, extents, border) for m in sizes]
    return SanModel(list(kernels), ActivationKind.parse(activation), sparsity)


@dataclass
class ForwardTrace:
    s: list[np.ndarray]
    alpha: list[np.ndarray]
    r: list[np.ndarray]
    xhat: np.ndarray
    masks: list[np.ndarray]


def _check_input(model: SanModel, x: np.ndarray) -> None:
    if x.ndim not in (model.rank, model.rank + 1):
        raise ValueError(f"input rank {x.ndim} does not match model rank {model.rank}")
    for w in model.kernels:
        if any(m > n for m, n in zip(w.shape, x.shape[-model.rank:])):
            raise ValueError(f"kernel {w.shape} does not fit input {x.shape[-model.rank:]}")


def forward(model: SanModel, x) -> ForwardTrace:
    """Run the encode/select/decode chain. ``x`` may carry one batch axis."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(model, x)
    s_list, a_list, r_list, masks = [], [], [], []
    xhat = np.zeros(x.shape)
    for w, d in zip(model.kernels, model.sparsity):
        s = xcorr_same(x, w)
        mask = act.selection_mask(model.activation, s, d, model.rank)
        a = np.where(mask, s, 0.0)
        r = adjoint_xcorr_same(a, w)
        xhat += r
        s_list.append(s)
        a_list.append(a)
        r_list.append(r)
        masks.append(mask)
    return ForwardTrace(s_list, a_list, r_list, xhat, masks)


def loss(trace: ForwardTrace, x) -> float:
    return mae(trace.xhat, x)


def backward(model: SanModel, x, trace: ForwardTrace) -> list[np.ndarray]:
    """Kernel gradients of the MAE loss (batch mean when ``x`` is batched)."""
    x = np.asarray(x, dtype=np.float64)
    if trace.xhat.shape != x.shape or len(trace.alpha) != model.q:
        raise ValueError("trace does not belong to this model and input")
    n = math.prod(x.shape[-model.rank:])
    batch = x.size // n
    # np.sign(0) == 0, so exact reconstructions contribute no gradient.
    g = np.sign(trace.xhat - x) / (n * batch)
    grads = []
    for w, a, mask in zip(model.kernels, trace.alpha, trace.masks):
        # r = C_w^T a, and <g, C_w^T a> = <C_w g, a>.
        decode_term = xcorr_kernel_grad(g, a, w.shape)
        g_s = np.where(mask, xcorr_same(g, w), 0.0)
        encode_term = xcorr_kernel_grad(x, g_s, w.shape)
        grads.append(decode_term + encode_term)
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, grads: Sequence[np.ndarray], params: Sequence[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays."""
    if len(grads) != len(params) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and moment counts differ")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    out = []
    for i, (g, p) in enumerate(zip(grads, params)):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        mhat = state.m[i] / bc1
        vhat = state.v[i] / bc2
        out.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
    return out


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 2
    lr: float = 0.01
    mu: float = 0.0
    sigma: float = 0.1
    seed: int = 0
    border: int = 0
    eval_chunk: int = 1024

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass
class TrainResult:
    model: SanModel
    best_epoch: int
    best_score: PhiAggregate
    history: list[dict]
    snapshots: list[SanModel]


def _stack(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        X = np.asarray(data, dtype=np.float64)
    else:
        data = list(data)
        if not data:
            raise ValueError("empty dataset")
        shapes = {np.shape(d) for d in data}
        if len(shapes) != 1:
            raise ValueError(f"examples have heterogeneous extents: {sorted(shapes)}")
        X = np.stack([np.asarray(d, dtype=np.float64) for d in data])
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    return X


def evaluate(model: SanModel, X, chunk: int = 1024) -> tuple[list[PhiReport], PhiAggregate, float]:
    """Per-example phi reports, their aggregate and the mean MAE over ``X``."""
    X = _stack(X)
    reports: list[PhiReport] = []
    losses = []
    for lo in range(0, X.shape[0], chunk):
        xb = X[lo : lo + chunk]
        tr = forward(model, xb)
        reports.extend(phi_reports(model, xb, tr))
        losses.append(np.mean(np.abs(tr.xhat - xb).reshape(xb.shape[0], -1), axis=1))
    return reports, phi_bar(reports), float(np.mean(np.concatenate(losses)))


def train(model: SanModel, train_set, val_set, cfg: TrainConfig, keep_snapshots: bool = False) -> TrainResult:
    """Minibatch Adam on the MAE; keep the epoch with the lowest validation phi_bar."""
    X = _stack(train_set)
    V = _stack(val_set)
    model = model.copy()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    state = AdamState.zeros_like(model.kernels, lr=cfg.lr)
    history: list[dict] = []
    snapshots: list[SanModel] = []
    best: tuple[float, int, SanModel, PhiAggregate] | None = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(X.shape[0])
        batch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            xb = X[order[lo : lo + cfg.batch_size]]
            tr = forward(model, xb)
            batch_losses.append(float(np.mean(np.abs(tr.xhat - xb))))
            grads = backward(model, xb, tr)
            model.kernels = adam_step(state, grads, model.kernels)
        reports, score, val_loss = evaluate(model, V, cfg.eval_chunk)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)),
                "val_loss": val_loss,
                "val_phi_bar": score.phi_bar,
                "val_cr_inv": score.cr_inv,
                "val_l_tilde": score.l_tilde,
                "val_A": float(np.mean([r.A for r in reports])),
            }
        )
        log.debug("epoch %d: train %.4f val phi_bar %.4f", epoch, history[-1]["train_loss"], score.phi_bar)
        snap = model.copy()
        if keep_snapshots:
            snapshots.append(snap)
        if best is None or score.phi_bar < best[0]:
            best = (score.phi_bar, epoch, snap, score)
    _, best_epoch, best_model, best_score = best
    best_model.meta.update(epoch=best_epoch, val_phi_bar=best_score.phi_bar)
    return TrainResult(best_model, best_epoch, best_score, history, snapshots)


# -- compressed form -------------------------------------------------------


@dataclass
class SparseMap:
    """Nonzero entries of one activation map as (flat index, value) pairs."""

    extents: tuple[int, ...]
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.extents = tuple(int(n) for n in self.extents)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be equal-length vectors")
        size = math.prod(self.extents)
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if self.indices[0] < 0 or self.indices[-1] >= size:
                raise ValueError(f"index out of range for extents {self.extents}")
        if np.any(self.values == 0):
            raise ValueError("sparse map values must be nonzero")

    @classmethod
    def from_dense(cls, a) -> "SparseMap":
        a = np.asarray(a, dtype=np.float64)
        idx = np.flatnonzero(a)
        return cls(a.shape, idx, a.ravel()[idx])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(math.prod(self.extents))
        out[self.indices] = self.values
        return out.reshape(self.extents)

    def __len__(self) -> int:
        return int(self.indices.size)


def encode(model: SanModel, x) -> list[SparseMap]:
    x = as_tensor(x, model.rank)
    return [SparseMap.from_dense(a) for a in forward(model, x).alpha]


def decode(model: SanModel, maps: Sequence[SparseMap]) -> np.ndarray:
    if len(maps) != model.q:
        raise ValueError(f"expected {model.q} maps, got {len(maps)}")
    extents = maps[0].extents
    if any(mp.extents != extents for mp in maps):
        raise ValueError("maps have different extents")
    xhat = np.zeros(extents)
    for w, mp in zip(model.kernels, maps):
        xhat += adjoint_xcorr_same(mp.to_dense(), w)
    return xhat
