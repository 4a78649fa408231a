"""Signal and image corpora: loaders, preprocessing protocols, synthetic data."""

from __future__ import annotations

import csv
import gzip
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Corpus:
    """Examples of equal rank with a split tag (and optional label) each."""

    examples: list[np.ndarray]
    splits: list[str]
    labels: list[int] | None = None
    provenance: str = ""
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.examples) != len(self.splits):
            raise ValueError("need one split tag per example")
        if self.labels is not None and len(self.labels) != len(self.examples):
            raise ValueError("need one label per example")
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split names {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.examples)

    def indices(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [i for i, s in enumerate(self.splits) if s == split]

    def split(self, split: str) -> np.ndarray:
        """Examples of one split stacked along a new leading axis."""
        idx = self.indices(split)
        if not idx:
            return np.empty((0,))
        return np.stack([self.examples[i] for i in idx])

    def split_labels(self, split: str) -> np.ndarray:
        if self.labels is None:
            raise ValueError("corpus has no labels")
        return np.asarray([self.labels[i] for i in self.indices(split)], dtype=np.int64)


# Kept for readability at call sites; both corpora share one container.
SignalCorpus = Corpus
ImageCorpus = Corpus


# -- CSV signals -------------------------------------------------------------


def load_csv_signal(path) -> np.ndarray:
    """Read one real number per line, or a single comma-separated row."""
    text = Path(path).read_text()
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: cannot parse {tok!r} as a number") from None
    if not values:
        raise ValueError(f"{path}: no samples")
    return np.asarray(values, dtype=np.float64)


def zscore(x: np.ndarray) -> np.ndarray:
    # Population std (ddof=0).
    return (x - x.mean()) / x.std()


def physionet_protocol(signal, provenance: str = "") -> Corpus:
    """12 consecutive 1000-sample segments: 6 train, 2 validation, 4 test.

    Each segment is z-scored on its own. Constant segments are dropped
    with a warning.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 12000:
        raise ValueError(f"need a 1D signal of at least 12000 samples, got {signal.shape}")
    tags = ["train"] * 6 + ["validation"] * 2 + ["test"] * 4
    examples, splits = [], []
    for i, tag in enumerate(tags):
        seg = signal[i * 1000 : (i + 1) * 1000]
        if seg.std() == 0:
            log.warning("segment %d has zero variance; dropped", i)
            continue
        examples.append(zscore(seg))
        splits.append(tag)
    return Corpus(examples, splits, provenance=provenance)


# -- UCI epileptic seizure recognition ----------------------------------------

UCI_CLASSES = ["epilepsy", "tumor", "eyes"]
UCI_LABEL_MAP = {1: 0, 2: 1, 3: 1, 4: 2, 5: 2}


def split_sizes(total: int, fractions=(0.76, 0.12, 0.12)) -> tuple[int, int, int]:
    n_train = int(round(total * fractions[0]))
    n_val = int(round(total * fractions[1]))
    return n_train, n_val, total - n_train - n_val


def uci_protocol(rows, labels, seed: int = 0, provenance: str = "uci") -> Corpus:
    """Merge classes to epilepsy/tumor/eyes, split 76/12/12, scale to [0, 1].

    Scaling uses the global minimum and maximum of the whole corpus.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 178:
        raise ValueError(f"UCI rows must have 178 samples each, got shape {rows.shape}")
    try:
        merged = [UCI_LABEL_MAP[int(y)] for y in labels]
    except KeyError as exc:
        raise ValueError(f"unknown UCI label {exc.args[0]}") from None
    if len(merged) != rows.shape[0]:
        raise ValueError("row and label counts differ")
    lo, hi = rows.min(), rows.max()
    if hi == lo:
        raise ValueError("UCI rows are constant; cannot min-max scale")
    scaled = (rows - lo) / (hi - lo)
    n_train, n_val, _ = split_sizes(rows.shape[0])
    order = np.random.default_rng(seed).permutation(rows.shape[0])
    splits = [""] * rows.shape[0]
    for rank, i in enumerate(order):
        splits[i] = "train" if rank < n_train else "validation" if rank < n_train + n_val else "test"
    return Corpus(list(scaled), splits, merged, provenance, list(UCI_CLASSES))


def load_uci_csv(path):
    """Rows and labels from the public 'Epileptic Seizure Recognition' CSV.

    Expected columns: an id, X1..X178, y. A header row is skipped.
    """
    rows, labels = [], []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            if lineno == 1 and not _is_number(rec[-1]):
                continue
            vals = rec[1:] if len(rec) == 180 else rec
            if len(vals) != 179:
                raise ValueError(f"{path}: line {lineno}: expected 178 samples and a label")
            try:
                rows.append([float(v) for v in vals[:-1]])
                labels.append(int(float(vals[-1])))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
    return np.asarray(rows), labels


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


# -- IDX images ----------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    with (gzip.open(path) if path.suffix == ".gz" else open(path, "rb")) as fh:
        return fh.read()


def _check_magic(path, buf: bytes, expected: int, what: str) -> None:
    if len(buf) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected:
        raise ValueError(f"{path}: wrong magic 0x{magic:08x} for {what} file")


def read_idx_images(path) -> np.ndarray:
    buf = _read_bytes(path)
    _check_magic(path, buf, IDX_IMAGES_MAGIC, "an image")
    if len(buf) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    _, count, rows, cols = struct.unpack(">IIII", buf[:16])
    need = count * rows * cols
    if len(buf) - 16 < need:
        raise ValueError(f"{path}: truncated: expected {need} pixel bytes, found {len(buf) - 16}")
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_bytes(path)
    _check_magic(path, buf, IDX_LABELS_MAGIC, "a label")
    if len(buf) < 8:
        raise ValueError(f"{path}: truncated IDX header")
    _, count = struct.unpack(">II", buf[:8])
    if len(buf) - 8 < count:
        raise ValueError(f"{path}: truncated: expected {count} labels, found {len(buf) - 8}")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


def load_idx_images(images_path, labels_path, split: str = "train", provenance: str = "") -> Corpus:
    """Images scaled to [0, 1] with their labels, all tagged ``split``."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    pix = images.astype(np.float64) / 255.0
    return Corpus(list(pix), [split] * len(pix), [int(y) for y in labels], provenance or str(images_path))


def _find(directory: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).exists():
            return directory / name
    return None


def find_mnist(directory) -> dict[str, Path] | None:
    """Locate the four standard MNIST/FMNIST files in ``directory``."""
    directory = Path(directory)
    stems = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
    found = {k: _find(directory, v) for k, v in stems.items()}
    if any(p is None for p in found.values()):
        return None
    return found


def mnist_protocol(directory, n_validation: int = 10000, provenance: str = "") -> Corpus:
    """Training file split into train and its last ``n_validation`` images
    for validation; the t10k file is the test split. No preprocessing
    beyond scaling to [0, 1]."""
    files = find_mnist(directory)
    if files is None:
        raise FileNotFoundError(f"{directory}: MNIST-style IDX files not found")
    tr = load_idx_images(files["train_images"], files["train_labels"], "train")
    te = load_idx_images(files["test_images"], files["test_labels"], "test")
    n = len(tr)
    splits = ["train"] * (n - n_validation) + ["validation"] * n_validation
    return Corpus(tr.examples + te.examples, splits + te.splits, tr.labels + te.labels,
                  provenance or Path(directory).name)


# -- manifests -------------------------------------------------------------------


def read_manifest(path) -> Corpus:
    """CSV with columns ``path,split[,label]``; paths relative to the manifest."""
    path = Path(path)
    examples, splits, labels = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "split"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: manifest needs 'path' and 'split' columns")
        for rec in reader:
            examples.append(load_csv_signal(path.parent / rec["path"]))
            splits.append(rec["split"])
            lab = rec.get("label")
            labels.append(int(lab) if lab not in (None, "") else None)
    has_labels = all(l is not None for l in labels) and labels
    return Corpus(examples, splits, labels if has_labels else None, provenance=path.stem)


def write_manifest(path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "split", "label"])
        for rec in rows:
            w.writerow(list(rec) + [""] * (3 - len(rec)))


# -- synthetic spike trains -------------------------------------------------------


def smooth_bump(m: int) -> np.ndarray:
    """Hann-shaped bump of ``m`` strictly positive samples, peak 1."""
    return np.hanning(m + 2)[1:-1] / np.hanning(m + 2)[1:-1].max()


def spike_positions(rng, length: int, count: int, separation: int, width: int) -> np.ndarray:
    left = (width - 1) // 2
    slack = length - width - (count - 1) * separation
    if count and slack < 0:
        raise ValueError(
            f"cannot place {count} bumps of width {width} at separation {separation} in {length} samples"
        )
    if count == 0:
        return np.empty(0, dtype=np.int64)
    gaps = np.sort(rng.integers(0, slack + 1, size=count))
    return left + gaps + separation * np.arange(count)


def synth_spike_train(
    length: int = 400,
    n_examples: int = 24,
    kernel_size: int = 15,
    count: int = 8,
    separation: int = 40,
    noise: float = 0.05,
    seed: int = 0,
    amplitude=(1.0, 2.0),
    split_counts=None,
) -> tuple[Corpus, np.ndarray]:
    """Noisy sums of a smooth bump stamped at well-separated positions.

    Returns the corpus (split 2/3 train, 1/6 validation, 1/6 test unless
    ``split_counts`` is given) and the unit-norm generator bump.
    """
    if separation < kernel_size:
        raise ValueError("separation must be >= kernel size")
    rng = np.random.default_rng(seed)
    bump = smooth_bump(kernel_size)
    left = (kernel_size - 1) // 2
    examples = []
    for _ in range(n_examples):
        x = np.zeros(length)
        for p in spike_positions(rng, length, count, separation, kernel_size):
            x[p - left : p - left + kernel_size] += rng.uniform(*amplitude) * bump
        if noise > 0:
            x = x + rng.normal(0.0, noise, size=length)
        examples.append(x)
    if split_counts is None:
        n_val = n_test = n_examples // 6
        split_counts = (n_examples - n_val - n_test, n_val, n_test)
    if sum(split_counts) != n_examples:
        raise ValueError("split counts must add up to n_examples")
    splits = [tag for tag, c in zip(SPLITS, split_counts) for _ in range(c)]
    return Corpus(examples, splits, provenance=f"synth-{seed}"), bump / np.linalg.norm(bump)


def noise_floor(corpus_examples, noise: float) -> float:
    """Expected normalized loss of a model that reproduces every bump
    exactly and removes all noise: E|noise| over the mean |x|."""
    mean_abs = float(np.mean([np.mean(np.abs(x)) for x in corpus_examples]))
    return noise * math.sqrt(2.0 / math.pi) / mean_abs
