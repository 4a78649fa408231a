"""Single-layer softmax classifier trained on frozen SAN reconstructions.

It measures how much class information survives the sparse encoding:
the SAN kernels are never touched, only the linear readout is trained,
with minibatch Adam on the negative log-likelihood.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .san import AdamState, SanModel, adam_step, forward

log = logging.getLogger(__name__)


@dataclass
class LinearProbe:
    weight: np.ndarray  # (classes, features)
    bias: np.ndarray  # (classes,)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"inconsistent probe shapes {self.weight.shape} / {self.bias.shape}")

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def n_features(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def init(cls, n_classes: int, n_features: int, seed=0, std: float = 0.01) -> "LinearProbe":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, std, size=(n_classes, n_features)), np.zeros(n_classes))

    def copy(self) -> "LinearProbe":
        return LinearProbe(self.weight.copy(), self.bias.copy(), dict(self.meta))


def _flatten(probe: LinearProbe, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size % probe.n_features:
        raise ValueError(f"input of {x.size} values does not match {probe.n_features} features")
    if x.size == probe.n_features:
        return x.reshape(1, -1)
    return x.reshape(x.shape[0], -1)


def log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=-1, keepdims=True)
    return z - (zmax + np.log(np.sum(np.exp(z - zmax), axis=-1, keepdims=True)))


def probe_forward(probe: LinearProbe, x) -> np.ndarray:
    """Per-class log-probabilities; one row per example when ``x`` is batched."""
    x = np.asarray(x, dtype=np.float64)
    single = x.size == probe.n_features
    out = log_softmax(_flatten(probe, x) @ probe.weight.T + probe.bias)
    return out[0] if single else out


def nll_and_grads(probe: LinearProbe, x, y) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL over the batch and its gradients for weight and bias."""
    X = _flatten(probe, x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    logp = log_softmax(X @ probe.weight.T + probe.bias)
    rows = np.arange(len(y))
    loss = -float(np.mean(logp[rows, y]))
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= len(y)
    return loss, delta.T @ X, delta.sum(axis=0)


def accuracy(probe: LinearProbe, x, y) -> float:
    X = _flatten(probe, x)
    if X.shape[0] == 0:
        return float("nan")
    pred = np.argmax(X @ probe.weight.T + probe.bias, axis=1)
    return float(np.mean(pred == np.asarray(y).reshape(-1)))


def reconstruct_all(model: SanModel, X, chunk: int = 1024) -> np.ndarray:
    """``xhat`` for every example (identical to ``decode(encode(x))``)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty_like(X)
    for lo in range(0, X.shape[0], chunk):
        out[lo : lo + chunk] = forward(model, X[lo : lo + chunk]).xhat
    return out


@dataclass
class ProbeResult:
    probe: LinearProbe
    best_epoch: int
    val_accuracy: list[float]
    test_accuracy: float
    train_loss: list[float]


def train_probe(model: SanModel, corpus, epochs: int = 5, batch_size: int = 64, lr: float = 0.01,
                seed=0, n_classes: int | None = None) -> ProbeResult:
    """Fit a probe on reconstructions of the train split; pick the epoch
    with the best validation accuracy and report its test accuracy."""
    Xtr = corpus.split("train")
    if Xtr.shape[0] == 0:
        raise ValueError("empty training split")
    if Xtr.ndim - 1 != model.rank:
        raise ValueError(f"model rank {model.rank} does not match corpus examples of rank {Xtr.ndim - 1}")
    ytr = corpus.split_labels("train")
    Rtr = reconstruct_all(model, Xtr).reshape(len(Xtr), -1)
    Xva, yva = corpus.split("validation"), corpus.split_labels("validation")
    Rva = reconstruct_all(model, Xva).reshape(len(Xva), -1) if len(Xva) else np.empty((0, Rtr.shape[1]))
    Xte, yte = corpus.split("test"), corpus.split_labels("test")
    Rte = reconstruct_all(model, Xte).reshape(len(Xte), -1) if len(Xte) else np.empty((0, Rtr.shape[1]))

    if n_classes is None:
        n_classes = int(max(ytr.max(), *(yva.tolist() or [0]), *(yte.tolist() or [0]))) + 1
    init_seed, shuffle_seed = np.random.SeedSequence(seed).spawn(2)
    probe = LinearProbe.init(n_classes, Rtr.shape[1], seed=init_seed)
    state = AdamState.zeros_like([probe.weight, probe.bias], lr=lr)
    rng = np.random.default_rng(shuffle_seed)

    best = (-1.0, 0, probe.copy())
    val_acc, losses = [], []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(Rtr))
        batch_losses = []
        for lo in range(0, len(order), batch_size):
            sel = order[lo : lo + batch_size]
            l, gw, gb = nll_and_grads(probe, Rtr[sel], ytr[sel])
            probe.weight, probe.bias = adam_step(state, [gw, gb], [probe.weight, probe.bias])
            batch_losses.append(l)
        losses.append(float(np.mean(batch_losses)))
        acc = accuracy(probe, Rva, yva) if len(Rva) else accuracy(probe, Rtr, ytr)
        val_acc.append(acc)
        log.debug("probe epoch %d: loss %.4f val acc %.4f", epoch, losses[-1], acc)
        if acc > best[0]:
            best = (acc, epoch, probe.copy())
    _, best_epoch, best_probe = best
    test_acc = accuracy(best_probe, Rte, yte) if len(Rte) else float("nan")
    best_probe.meta.update(epoch=best_epoch, test_accuracy=test_acc)
    return ProbeResult(best_probe, best_epoch, val_acc, test_acc, losses)
