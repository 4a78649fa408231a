"""On-disk formats: model files, probe files, sparse maps and report CSVs.

Model and probe files are JSON. Floats go through ``repr``, which is the
shortest string that round-trips a double exactly, so files reload
bit-identical. Sparse maps are line-oriented text with hex-float values.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .activations import ActivationKind, MinDistance, PoolSize, TopK
from .phi import PhiReport
from .probe import LinearProbe
from .san import SanModel, SparseMap

MODEL_FORMAT = "sanlab-model"
PROBE_FORMAT = "sanlab-probe"
SPARSE_MAP_HEADER = "# sanlab sparse map v1"
FORMAT_VERSION = 1

REPORT_COLUMNS = ["dataset", "activation", "m", "epoch", "split", "W", "A", "cr_inv", "l_tilde", "phi"]


def _sparsity_to_json(p) -> dict | None:
    if p is None:
        return None
    if isinstance(p, TopK):
        return {"type": "K", "k": p.k}
    if isinstance(p, PoolSize):
        return {"type": "PoolSize", "m": p.m}
    return {"type": "MinDistance", "med": p.med, "border": p.border}


def _sparsity_from_json(d):
    if d is None:
        return None
    kind = d.get("type")
    if kind == "K":
        return TopK(int(d["k"]))
    if kind == "PoolSize":
        return PoolSize(int(d["m"]))
    if kind == "MinDistance":
        return MinDistance(int(d["med"]), int(d.get("border", 0)))
    raise ValueError(f"unknown sparsity parameter type {kind!r}")


def _meta_clean(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        out[k] = v
    return out


def model_to_dict(model: SanModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "rank": model.rank,
        "q": model.q,
        "activation": model.activation.value,
        "kernels": [
            {"extents": list(w.shape), "sparsity": _sparsity_to_json(p), "values": w.ravel().tolist()}
            for w, p in zip(model.kernels, model.sparsity)
        ],
        "meta": _meta_clean(model.meta),
    }


def model_from_dict(d: dict) -> SanModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a sanlab model file")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')}")
    kernels, sparsity = [], []
    for k in d["kernels"]:
        ext = tuple(int(e) for e in k["extents"])
        vals = np.asarray(k["values"], dtype=np.float64)
        if vals.size != math.prod(ext):
            raise ValueError(f"kernel has {vals.size} values for extents {ext}")
        kernels.append(vals.reshape(ext))
        sparsity.append(_sparsity_from_json(k.get("sparsity")))
    if len(kernels) != d.get("q", len(kernels)) or any(w.ndim != d.get("rank", w.ndim) for w in kernels):
        raise ValueError("kernel count or rank disagrees with the header")
    return SanModel(kernels, ActivationKind(d["activation"]), sparsity, dict(d.get("meta", {})))


def save_model(model: SanModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> SanModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed model file: {exc}") from None
    try:
        return model_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed model file: missing {exc}") from None


def save_probe(probe: LinearProbe, path) -> None:
    d = {
        "format": PROBE_FORMAT,
        "version": FORMAT_VERSION,
        "classes": probe.n_classes,
        "features": probe.n_features,
        "weight": probe.weight.ravel().tolist(),
        "bias": probe.bias.tolist(),
        "meta": _meta_clean(probe.meta),
    }
    Path(path).write_text(json.dumps(d) + "\n")


def load_probe(path) -> LinearProbe:
    d = json.loads(Path(path).read_text())
    if d.get("format") != PROBE_FORMAT:
        raise ValueError(f"{path}: not a sanlab probe file")
    w = np.asarray(d["weight"], dtype=np.float64).reshape(d["classes"], d["features"])
    return LinearProbe(w, np.asarray(d["bias"], dtype=np.float64), dict(d.get("meta", {})))


def write_sparse_map(smap: SparseMap, path) -> None:
    lines = [SPARSE_MAP_HEADER, "extents " + " ".join(str(e) for e in smap.extents)]
    lines += [f"{int(i)} {float(v).hex()}" for i, v in zip(smap.indices, smap.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sparse_map(path) -> SparseMap:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != SPARSE_MAP_HEADER:
        raise ValueError(f"{path}: not a sanlab sparse map")
    head = lines[1].split() if len(lines) > 1 else []
    if not head or head[0] != "extents":
        raise ValueError(f"{path}: missing extents line")
    extents = tuple(int(e) for e in head[1:])
    idx, vals = [], []
    for lineno, ln in enumerate(lines[2:], start=3):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'index value'")
        try:
            idx.append(int(parts[0]))
            vals.append(float.fromhex(parts[1]))
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: bad index or value") from None
    return SparseMap(extents, idx, vals)


def format_float(v: float) -> str:
    return repr(float(v))


def report_row(dataset: str, activation, m: int, epoch: int, split: str, W, A, cr_inv, l_tilde, phi) -> dict:
    act = activation.value if isinstance(activation, ActivationKind) else str(activation)
    return {
        "dataset": dataset,
        "activation": act,
        "m": int(m),
        "epoch": int(epoch),
        "split": split,
        "W": W,
        "A": A,
        "cr_inv": format_float(cr_inv),
        "l_tilde": format_float(l_tilde),
        "phi": format_float(phi),
    }


def rows_from_reports(dataset, activation, m, epoch, split, reports: Iterable[PhiReport]) -> list[dict]:
    return [report_row(dataset, activation, m, epoch, split, r.W, r.A, r.cr_inv, r.l_tilde, r.phi) for r in reports]


def write_report(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_array_csv(path, arr) -> None:
    """1D arrays as one value per line; 2D arrays as comma-separated rows."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        text = "\n".join(repr(float(v)) for v in arr)
    else:
        text = "\n".join(",".join(repr(float(v)) for v in row) for row in arr)
    Path(path).write_text(text + "\n")


def read_array_csv(path) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    data = [[float(t) for t in ln.split(",")] for ln in rows]
    if all(len(r) == 1 for r in data):
        return np.asarray([r[0] for r in data])
    return np.asarray(data)
