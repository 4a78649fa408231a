"""The phi metric: joint score of compression ratio and reconstruction error.

For one input ``x`` with ``n`` entries reconstructed by a model with ``W``
weights and ``A`` nonzero activations::

    cr_inv  = (W + (rank + 1) * A) / n
    l_tilde = mae(xhat, x) / mae(0, x)
    phi     = hypot(cr_inv, l_tilde)

Lower is better. ``phi_bar`` is the arithmetic mean of per-example phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .numerics import mae, nnz


@dataclass(frozen=True)
class PhiReport:
    W: int
    A: int
    cr_inv: float
    l_tilde: float
    phi: float


@dataclass(frozen=True)
class PhiAggregate:
    phi_bar: float
    cr_inv: float
    l_tilde: float
    count: int


def weights_count(model) -> int:
    """Total number of scalar kernel entries, ``sum_i m_i ** rank``."""
    return int(sum(np.asarray(w).size for w in model.kernels))


def normalized_loss(xhat, x) -> float:
    num = mae(xhat, x)
    den = float(np.mean(np.abs(np.asarray(x, dtype=np.float64))))
    if den == 0.0:
        # All-zero input: free if reproduced exactly, otherwise unbounded.
        return 0.0 if num == 0.0 else math.inf
    return num / den


def make_report(W: int, A: int, n: int, rank: int, l_tilde: float) -> PhiReport:
    cr_inv = (W + (rank + 1) * A) / n
    return PhiReport(W=W, A=A, cr_inv=cr_inv, l_tilde=l_tilde, phi=math.hypot(cr_inv, l_tilde))


def phi_report(model, x, trace) -> PhiReport:
    x = np.asarray(x, dtype=np.float64)
    A = sum(nnz(a) for a in trace.alpha)
    return make_report(weights_count(model), A, x.size, model.rank, normalized_loss(trace.xhat, x))


def phi_reports(model, X, trace) -> list[PhiReport]:
    """Per-example reports for a batched trace (leading axis = example)."""
    X = np.asarray(X, dtype=np.float64)
    W = weights_count(model)
    rank = model.rank
    n = math.prod(X.shape[1:])
    axes = tuple(range(1, X.ndim))
    A = sum(np.count_nonzero(a, axis=axes) for a in trace.alpha)
    num = np.mean(np.abs(trace.xhat - X), axis=axes)
    den = np.mean(np.abs(X), axis=axes)
    out = []
    for a, nu, de in zip(np.atleast_1d(A), num, den):
        lt = (0.0 if nu == 0.0 else math.inf) if de == 0.0 else float(nu / de)
        out.append(make_report(W, int(a), n, rank, lt))
    return out


def phi_bar(reports: Sequence[PhiReport]) -> PhiAggregate:
    if not reports:
        raise ValueError("phi_bar of an empty set of reports")
    l = len(reports)
    return PhiAggregate(
        phi_bar=math.fsum(r.phi for r in reports) / l,
        cr_inv=math.fsum(r.cr_inv for r in reports) / l,
        l_tilde=math.fsum(r.l_tilde for r in reports) / l,
        count=l,
    )


@dataclass
class Candidate:
    """One trained snapshot competing in model selection."""

    m: int
    epoch: int
    model: Any
    score: PhiAggregate
    params: dict = field(default_factory=dict)


def select_model(candidates: Sequence[Candidate]) -> Candidate:
    """Lowest validation phi_bar; ties go to smaller ``m``, then earlier epoch."""
    if not candidates:
        raise ValueError("no candidates to select from")
    return min(candidates, key=lambda c: (c.score.phi_bar, c.m, c.epoch))
