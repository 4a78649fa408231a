import math

import numpy as np
import pytest

from sanlab.datasets import Corpus
from sanlab.probe import LinearProbe, accuracy, log_softmax, nll_and_grads, probe_forward, train_probe
from sanlab.san import build_model, decode, encode, forward
from sanlab.probe import reconstruct_all


def test_zero_probe_is_uniform():
    probe = LinearProbe(np.zeros((4, 6)), np.zeros(4))
    out = probe_forward(probe, np.arange(6.0))
    np.testing.assert_allclose(out, math.log(1 / 4))


def test_log_probabilities_normalize():
    rng = np.random.default_rng(0)
    probe = LinearProbe.init(5, 12, seed=1, std=3.0)
    out = probe_forward(probe, rng.normal(size=(7, 3, 4)))
    assert out.shape == (7, 5)
    np.testing.assert_allclose(np.exp(out).sum(axis=1), 1.0, rtol=1e-12)
    assert np.all(np.isfinite(log_softmax(np.array([[1000.0, -1000.0]]))))


def test_nll_gradient_vs_finite_differences():
    rng = np.random.default_rng(2)
    probe = LinearProbe.init(3, 8, seed=3, std=0.5)
    X, y = rng.normal(size=(10, 8)), rng.integers(0, 3, size=10)
    _, gw, gb = nll_and_grads(probe, X, y)
    h = 1e-6
    for arr, g in ((probe.weight, gw), (probe.bias, gb)):
        fd = np.zeros_like(arr)
        for j in np.ndindex(arr.shape):
            old = arr[j]
            arr[j] = old + h
            lp = nll_and_grads(probe, X, y)[0]
            arr[j] = old - h
            lm = nll_and_grads(probe, X, y)[0]
            arr[j] = old
            fd[j] = (lp - lm) / (2 * h)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_probe_shape_errors():
    with pytest.raises(ValueError):
        LinearProbe(np.zeros((3, 4)), np.zeros(2))
    with pytest.raises(ValueError):
        probe_forward(LinearProbe.init(2, 5), np.zeros(7))


def _separable_corpus(n=60, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    examples = [np.where(y, 1.0, -1.0) * np.ones(10) + rng.normal(0, 0.1, 10) for y in labels]
    splits = ["train"] * 40 + ["validation"] * 10 + ["test"] * 10
    return Corpus(examples, splits, [int(y) for y in labels])


def test_probe_separates_two_classes():
    corpus = _separable_corpus()
    model = build_model("Identity", 1, (10,), kernels=[np.ones(1)])
    res = train_probe(model, corpus, epochs=5, batch_size=8, lr=0.05, seed=0)
    assert res.test_accuracy == 1.0
    assert res.probe.n_classes == 2


def test_zero_lr_keeps_probe_and_san_frozen():
    corpus = _separable_corpus(seed=1)
    model = build_model("TopKAbsolutes", 3, (10,), seed=4)
    before = [w.copy() for w in model.kernels]
    res = train_probe(model, corpus, epochs=3, lr=0.0, seed=7)
    init = LinearProbe.init(2, 10, seed=np.random.SeedSequence(7).spawn(2)[0])
    assert np.array_equal(res.probe.weight, init.weight)
    assert len(set(res.train_loss)) == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, model.kernels))


def test_probe_is_deterministic():
    corpus = _separable_corpus(seed=2)
    model = build_model("Relu", 3, (10,), seed=4)
    a = train_probe(model, corpus, epochs=3, seed=3)
    b = train_probe(model, corpus, epochs=3, seed=3)
    assert np.array_equal(a.probe.weight, b.probe.weight) and a.val_accuracy == b.val_accuracy


def test_reconstruct_all_matches_codec():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 8, 8))
    model = build_model("ExtremaPoolIndices", 2, (8, 8), q=2, seed=6)
    R = reconstruct_all(model, X, chunk=2)
    for x, r in zip(X, R):
        assert np.array_equal(r, decode(model, encode(model, x)))
        assert np.array_equal(r, forward(model, x).xhat)


def test_accuracy_counts():
    probe = LinearProbe(np.array([[1.0], [-1.0]]), np.zeros(2))
    assert accuracy(probe, np.array([[2.0], [-3.0], [1.0]]), [0, 1, 1]) == pytest.approx(2 / 3)


def test_mnist_checks_on_fake_idx(tmp_path, monkeypatch):
    import mnist_checks
    from sanlab.datasets import write_idx_images, write_idx_labels

    rng = np.random.default_rng(9)
    labels = rng.integers(0, 2, size=80)
    imgs = np.zeros((80, 28, 28), np.uint8)
    for img, y in zip(imgs, labels):
        # class 0 lights the top half, class 1 the bottom half
        rows = slice(0, 14) if y == 0 else slice(14, 28)
        img[rows] = rng.integers(0, 256, size=(14, 28)) * (rng.random((14, 28)) < 0.3)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", imgs[:60])
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", labels[:60])
    write_idx_images(tmp_path / "t10k-images-idx3-ubyte", imgs[60:])
    write_idx_labels(tmp_path / "t10k-labels-idx1-ubyte", labels[60:])

    monkeypatch.setenv(mnist_checks.MNIST_ENV, str(tmp_path))
    assert mnist_checks.mnist_dir() == str(tmp_path)
    expected = np.mean([(2 + 3 * 2 * np.count_nonzero(x)) / 784 for x in imgs[60:]])
    assert mnist_checks.identity_cr_inv(tmp_path, n_validation=10) == pytest.approx(expected, rel=1e-12)
    raw, pool = mnist_checks.probe_accuracies(tmp_path, epochs=3, batch=8, n_validation=10)
    assert raw == 1.0 and 0.0 <= pool <= 1.0
    monkeypatch.setenv(mnist_checks.MNIST_ENV, str(tmp_path / "nowhere"))
    assert mnist_checks.mnist_dir() is None


def test_favourable_weights_pick_class():
    w = np.zeros((3, 4))
    w[2, 1] = 5.0
    probe = LinearProbe(w, np.zeros(3))
    assert int(np.argmax(probe_forward(probe, np.array([0.0, 1.0, 0.0, 0.0])))) == 2


def test_zero_lr_accuracy_equals_untrained():
    corpus = _separable_corpus(seed=4)
    model = build_model("Identity", 1, (10,), kernels=[np.ones(1)])
    res = train_probe(model, corpus, epochs=2, lr=0.0, seed=5)
    init = LinearProbe.init(2, 10, seed=np.random.SeedSequence(5).spawn(2)[0])
    X, y = corpus.split("test"), corpus.split_labels("test")
    assert res.test_accuracy == accuracy(init, X, y)
