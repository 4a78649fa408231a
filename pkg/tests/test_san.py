import numpy as np
import pytest

from gradcheck import fd_relative_error, gradient_suite
from sanlab.activations import ActivationKind
from sanlab.datasets import synth_spike_train
from sanlab.numerics import adjoint_xcorr_same
from sanlab.phi import normalized_loss
from sanlab.san import (
    AdamState,
    SanModel,
    SparseMap,
    TrainConfig,
    adam_step,
    backward,
    build_model,
    decode,
    encode,
    forward,
    init_kernels,
    loss,
    train,
)


def test_init_kernels_deterministic_and_shaped():
    a = init_kernels(2, [3, 5], seed=11)
    b = init_kernels(2, [3, 5], seed=11)
    assert [w.shape for w in a] == [(3,), (5,)]
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert init_kernels(1, 3, seed=0, rank=2)[0].shape == (3, 3)


def test_init_kernels_small_sigma_limit():
    w = init_kernels(1, 7, mu=0.25, sigma=1e-300, seed=3)[0]
    np.testing.assert_allclose(w, 0.25, atol=1e-250)


def test_init_kernels_statistics():
    mu, sigma, n = 0.3, 0.1, 100_000
    w = init_kernels(1, n, mu=mu, sigma=sigma, seed=5)[0]
    assert abs(w.mean() - mu) < 3 * sigma / np.sqrt(n)
    # std of the sample std is about sigma / sqrt(2n)
    assert abs(w.std() - sigma) < 3 * sigma / np.sqrt(2 * n)


def test_identity_unit_kernel_reconstructs_exactly():
    x = np.random.default_rng(0).normal(size=20)
    model = build_model("Identity", 1, x.shape, kernels=[np.ones(1)])
    tr = forward(model, x)
    assert np.array_equal(tr.xhat, x)
    assert loss(tr, x) == 0.0


def test_zero_input_gives_zero_trace():
    model = build_model("Extrema", 5, (30,), border=2, seed=1)
    tr = forward(model, np.zeros(30))
    for arr in tr.s + tr.alpha + tr.r + [tr.xhat]:
        assert not np.any(arr)


def test_stamped_spike_is_reencoded_at_truth():
    w = np.hanning(11)[1:-1]
    w = w / np.linalg.norm(w)
    spikes = np.zeros(60)
    spikes[20] = 2.0
    x = adjoint_xcorr_same(spikes, w)
    model = build_model("Extrema", len(w), x.shape, kernels=[w])
    tr = forward(model, x)
    assert normalized_loss(tr.xhat, x) < 0.05


def test_exact_reconstruction_has_zero_gradient():
    x = np.random.default_rng(1).normal(size=15)
    model = build_model("Identity", 1, x.shape, kernels=[np.ones(1)])
    g = backward(model, x, forward(model, x))
    assert np.array_equal(g[0], np.zeros(1))


@pytest.mark.parametrize("w0", [0.7, 1.3, -0.4])
def test_single_tap_identity_closed_form(w0):
    x = np.random.default_rng(2).normal(size=25)
    model = build_model("Identity", 1, x.shape, kernels=[np.array([w0])])
    g = backward(model, x, forward(model, x))[0][0]
    expected = 2 * w0 / x.size * np.sum(np.sign(w0**2 * x - x) * x)
    assert g == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kind", list(ActivationKind))
def test_gradients_vs_finite_differences(kind):
    errors, _ = gradient_suite(kind, n_instances=20, seed=100)
    assert errors.max() < 1e-4


def test_batched_backward_is_mean_of_examples():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(3, 40))
    model = build_model("ExtremaPoolIndices", 5, (40,), q=2, seed=4)
    gb = backward(model, X, forward(model, X))
    singles = [backward(model, x, forward(model, x)) for x in X]
    for i in range(2):
        np.testing.assert_allclose(gb[i], np.mean([s[i] for s in singles], axis=0), rtol=1e-12, atol=1e-15)


def test_fd_helper_detects_ties():
    # All-equal inputs make every top-k choice a tie under perturbation.
    model = build_model("Relu", 3, (10,), kernels=[np.array([1.0, -1.0, 0.0])])
    assert fd_relative_error(model, np.ones(10)) is None


def test_adam_zero_gradient_keeps_kernels():
    w = [np.array([0.5, -1.0])]
    state = AdamState.zeros_like(w)
    assert np.array_equal(adam_step(state, [np.zeros(2)], w)[0], w[0])


def test_adam_first_step():
    g = np.array([0.3, -2.0, 1e-3])
    w = np.array([1.0, 1.0, 1.0])
    state = AdamState.zeros_like([w], lr=0.01)
    new = adam_step(state, [g], [w])[0]
    np.testing.assert_allclose(new - w, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_second_identical_step():
    g = np.array([0.3, -2.0])
    w = np.array([1.0, 1.0])
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    state = AdamState.zeros_like([w], lr=lr)
    w1 = adam_step(state, [g], [w])[0]
    w2 = adam_step(state, [g], [w1])[0]
    m2 = (1 - b1) * g * (1 + b1)
    v2 = (1 - b2) * g * g * (1 + b2)
    step = -lr * (m2 / (1 - b1**2)) / (np.sqrt(v2 / (1 - b2**2)) + eps)
    np.testing.assert_allclose(w2 - w1, step, rtol=1e-12)


def _toy_corpus(seed=0):
    corpus, bump = synth_spike_train(length=200, n_examples=12, count=4, seed=seed)
    return corpus.split("train"), corpus.split("validation"), bump


def test_train_with_zero_lr_keeps_init_and_flat_loss():
    X, V, _ = _toy_corpus()
    model = build_model("Extrema", 15, X.shape[1:], border=2, seed=9)
    res = train(model, X, V, TrainConfig(epochs=3, lr=0.0, seed=9))
    assert all(np.array_equal(a, b) for a, b in zip(res.model.kernels, model.kernels))
    assert len({h["val_phi_bar"] for h in res.history}) == 1


def test_train_is_deterministic_and_size_invariant():
    X, V, _ = _toy_corpus(1)
    model = build_model("TopKAbsolutes", 9, X.shape[1:], q=2, seed=2)
    cfg = TrainConfig(epochs=4, batch_size=3, seed=2)
    a = train(model, X, V, cfg)
    b = train(model, X, V, cfg)
    assert a.history == b.history
    assert all(np.array_equal(u, v) for u, v in zip(a.model.kernels, b.model.kernels))
    assert [w.shape for w in a.model.kernels] == [w.shape for w in model.kernels]


def test_train_returns_best_validation_epoch():
    X, V, _ = _toy_corpus(2)
    model = build_model("ExtremaPoolIndices", 10, X.shape[1:], seed=3)
    res = train(model, X, V, TrainConfig(epochs=6, seed=3), keep_snapshots=True)
    scores = [h["val_phi_bar"] for h in res.history]
    assert res.best_epoch == int(np.argmin(scores)) + 1
    assert res.best_score.phi_bar == min(scores)
    assert all(np.array_equal(u, v) for u, v in zip(res.model.kernels, res.snapshots[res.best_epoch - 1].kernels))


def test_train_rejects_bad_data():
    model = build_model("Relu", 3, (10,), seed=0)
    with pytest.raises(ValueError):
        train(model, [], [np.zeros(10)], TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(model, [np.zeros(10), np.zeros(11)], [np.zeros(10)], TrainConfig(epochs=1))


def test_train_recovers_generator_bump():
    corpus, bump = synth_spike_train(seed=1)
    X, V = corpus.split("train"), corpus.split("validation")
    model = build_model("Extrema", 15, X.shape[1:], border=3, seed=1)
    res = train(model, X, V, TrainConfig(epochs=30, batch_size=2, seed=1))
    w = res.model.kernels[0]
    assert abs(w @ bump) / np.linalg.norm(w) > 0.9
    assert res.best_score.l_tilde < 0.2


@pytest.mark.parametrize("kind", list(ActivationKind))
@pytest.mark.parametrize("extents", [(37,), (9, 11)])
def test_decode_encode_equals_forward(kind, extents):
    rng = np.random.default_rng(len(extents))
    x = rng.normal(size=extents)
    model = build_model(kind, 3, extents, q=2, border=1, seed=7)
    maps = encode(model, x)
    assert np.array_equal(decode(model, maps), forward(model, x).xhat)


def test_empty_maps_decode_to_zero():
    model = build_model("Extrema", 3, (12,), seed=0)
    assert np.array_equal(decode(model, [SparseMap((12,), [], [])]), np.zeros(12))


def test_identity_map_holds_input_nonzeros():
    x = np.array([0.0, 1.5, 0.0, -2.0, 3.0])
    model = build_model("Identity", 1, x.shape, kernels=[np.ones(1)])
    (smap,) = encode(model, x)
    assert smap.indices.tolist() == [1, 3, 4]
    assert smap.values.tolist() == [1.5, -2.0, 3.0]


def test_sparse_map_validation():
    with pytest.raises(ValueError):
        SparseMap((5,), [1, 7], [1.0, 2.0])
    with pytest.raises(ValueError):
        SparseMap((5,), [2, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        SparseMap((5,), [1], [0.0])


def test_model_validation():
    with pytest.raises(ValueError):
        SanModel([], "Identity", [])
    with pytest.raises(ValueError):
        SanModel([np.ones(3), np.ones((3, 3))], "Identity", [None, None])
    model = build_model("Identity", 3, (10,))
    with pytest.raises(ValueError):
        forward(model, np.zeros((2, 2, 10)))
