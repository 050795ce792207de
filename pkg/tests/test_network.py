import math

import numpy as np
import pytest

from pneumanet import network
from pneumanet.network import (
    AdamState,
    CnnArchitecture,
    ConvBlock,
    EarlyStopping,
    adam_step,
    bce_loss,
    build_model,
    default_architecture,
    init_adam,
    label_for,
    predict,
    to_nchw,
    train,
)
from oracles import fd_gradient, fd_gradient_at, rel_error


def tiny_arch(size=16):
    return default_architecture(size)


class TestBuildModel:
    def test_same_seed_bit_identical(self):
        a = build_model(tiny_arch(), seed=42)
        b = build_model(tiny_arch(), seed=42)
        assert a.tensors.keys() == b.tensors.keys()
        for k in a.tensors:
            assert a.tensors[k].tobytes() == b.tensors[k].tobytes()

    def test_forward_output_shape_single_unit(self):
        model = build_model(default_architecture(148), seed=0)
        x = np.random.default_rng(0).random((2, 148, 148, 1)).astype(np.float32)
        p, _ = model.forward(to_nchw(x), mode="infer")
        assert p.shape == (2,)
        assert ((p > 0) & (p < 1)).all()

    def test_parameter_count_matches_shape_arithmetic(self):
        model = build_model(default_architecture(148), seed=0)
        # block 0: conv 32x1x3x3 + 32 bias + 32 gamma + 32 beta
        # block 1: conv 64x32x3x3 + 64 bias + 64 gamma + 64 beta
        # head: (64 * 37 * 37) weights + 1 bias
        expected = (32 * 1 * 3 * 3 + 32 + 32 + 32) \
            + (64 * 32 * 3 * 3 + 64 + 64 + 64) \
            + (64 * 37 * 37 * 1 + 1)
        assert model.parameter_count() == expected

    def test_decreasing_filters_rejected(self):
        arch = CnnArchitecture(input_shape=(16, 16, 1), blocks=(ConvBlock(64), ConvBlock(32)))
        with pytest.raises(ValueError):
            build_model(arch, seed=0)

    def test_input_too_small_rejected(self):
        arch = CnnArchitecture(input_shape=(2, 2, 1), blocks=(ConvBlock(8), ConvBlock(8)))
        with pytest.raises(ValueError):
            build_model(arch, seed=0)


class TestBceLoss:
    def test_half_probability_gives_ln2(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1]))
        assert abs(loss - math.log(2.0)) < 1e-12

    def test_perfect_prediction_loss_near_zero(self):
        loss, _ = bce_loss(np.array([1.0, 0.0]), np.array([1, 0]))
        assert loss <= -math.log(1.0 - 1e-7) + 1e-12

    def test_gradient_matches_finite_differences(self):
        y = np.array([1.0])

        def f(p):
            return bce_loss(p, y)[0]

        p = np.array([0.3])
        _, grad = bce_loss(p, y)
        fd = fd_gradient(f, p, h=1e-7)
        assert rel_error(grad, fd) <= 1e-6

    def test_labels_outside_01_rejected(self):
        with pytest.raises(ValueError):
            bce_loss(np.array([0.5]), np.array([2]))


class TestAdam:
    def test_zero_gradient_leaves_params_t_incremented(self):
        params = {"w": np.array([1.0, -2.0])}
        state = init_adam(params)
        adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])
        assert state.t == 1

    def test_first_step_bias_corrected_magnitude(self):
        params = {"w": np.array([0.0])}
        state = init_adam(params, alpha=0.001, beta1=0.9, beta2=0.999, eps=1e-8)
        adam_step(params, {"w": np.array([0.1])}, state)
        expected = -0.001 * 0.1 / (0.1 + 1e-8)
        assert abs(params["w"][0] - expected) < 1e-12

    def test_constant_gradient_update_approaches_alpha(self):
        alpha = 0.01
        params = {"w": np.array([0.0])}
        state = init_adam(params, alpha=alpha)
        g = {"w": np.array([0.37])}
        prev = params["w"][0]
        for _ in range(500):
            prev = params["w"][0]
            adam_step(params, g, state)
        step = prev - params["w"][0]
        assert abs(step - alpha) < 1e-4  # magnitude -> alpha, sign -sign(g)

    def test_shape_mismatch_rejected(self):
        params = {"w": np.zeros(3)}
        state = init_adam(params)
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.zeros(4)}, state)


class TestEarlyStopping:
    def test_simulated_monitor_walkthrough(self):
        stopper = EarlyStopping(patience=2)
        tensors = {"w": np.zeros(1)}
        sequence = [0.6, 0.7, 0.65, 0.66]
        stops = []
        for epoch, value in enumerate(sequence, start=1):
            tensors["w"][0] = epoch  # distinguish snapshots
            stops.append(stopper.update(value, tensors, epoch))
        assert stops == [False, False, False, True]
        assert stopper.best_epoch == 2
        assert stopper.best_params_snapshot["w"][0] == 2.0

    def test_best_never_regresses(self):
        stopper = EarlyStopping(patience=100)
        tensors = {"w": np.zeros(1)}
        best_seen = -1.0
        rng = np.random.default_rng(0)
        for epoch in range(1, 50):
            value = float(rng.random())
            stopper.update(value, tensors, epoch)
            best_seen = max(best_seen, value)
            assert stopper.best_value == best_seen


def separable_images(n_per_class, size=16, seed=0):
    """Linearly separable toy set: dark-ish class 0, bright-ish class 1."""
    rng = np.random.default_rng(seed)
    dark = rng.uniform(0.0, 0.35, size=(n_per_class, size, size, 1))
    bright = rng.uniform(0.65, 1.0, size=(n_per_class, size, size, 1))
    X = np.concatenate([dark, bright]).astype(np.float32)
    y = np.concatenate([np.zeros(n_per_class, dtype=int), np.ones(n_per_class, dtype=int)])
    return X, y


class TestTrain:
    def test_zero_epochs_empty_history_params_initial(self):
        X, y = separable_images(4)
        model = build_model(tiny_arch(), seed=1)
        before = model.copy_tensors()
        history = train(model, (X, y), (X[:2], y[:2]), epochs=0, batch_size=4, seed=0)
        assert history.rows == []
        for k in before:
            assert model.tensors[k].tobytes() == before[k].tobytes()

    def test_reproducible_given_seed(self):
        X, y = separable_images(6)
        runs = []
        for _ in range(2):
            model = build_model(tiny_arch(), seed=3)
            history = train(model, (X, y), (X[:4], y[:4]), epochs=2, batch_size=4, seed=9)
            runs.append((history.rows, model.copy_tensors()))
        assert runs[0][0] == runs[1][0]
        for k in runs[0][1]:
            assert runs[0][1][k].tobytes() == runs[1][1][k].tobytes()

    def test_empty_dataset_rejected(self):
        model = build_model(tiny_arch(), seed=0)
        empty = np.zeros((0, 16, 16, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            train(model, (empty, np.zeros(0, dtype=int)), (empty, np.zeros(0, dtype=int)),
                  epochs=1, batch_size=4)

    def test_memorizes_tiny_separable_set(self):
        X, y = separable_images(8, seed=5)
        Xv, yv = separable_images(2, seed=6)
        model = build_model(tiny_arch(), seed=0)
        history = train(model, (X, y), (Xv, yv), epochs=40, batch_size=8, seed=0)
        assert history.rows[-1].train_acc >= 0.95

    def test_early_stop_restores_best_epoch_params(self):
        X, y = separable_images(8, seed=1)
        Xv, yv = separable_images(3, seed=2)
        model = build_model(tiny_arch(), seed=0)
        stopper = EarlyStopping(patience=2)
        history = train(model, (X, y), (Xv, yv), epochs=30, batch_size=8,
                        early_stop=stopper, seed=4)
        accs = [r.val_acc for r in history.rows]
        assert history.best_epoch == int(np.argmax(accs)) + 1
        assert stopper.best_params_snapshot is not None
        for k in model.tensors:
            assert model.tensors[k].tobytes() == stopper.best_params_snapshot[k].tobytes()

    def test_history_csv_round_trip(self, tmp_path):
        X, y = separable_images(4)
        model = build_model(tiny_arch(), seed=0)
        history = train(model, (X, y), (X[:2], y[:2]), epochs=2, batch_size=4, seed=0)
        path = tmp_path / "history.csv"
        history.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
        assert len(lines) == 3


class TestPredict:
    def test_deterministic_bits(self):
        model = build_model(tiny_arch(), seed=0)
        img = np.random.default_rng(1).random((16, 16, 1)).astype(np.float32)
        assert predict(model, img) == predict(model, img)

    def test_tie_goes_to_positive_label(self):
        assert label_for(0.5) == "PNEUMONIA"
        assert label_for(0.4999) == "NORMAL"

    def test_zeroed_head_gives_sigmoid_of_bias(self):
        model = build_model(tiny_arch(), seed=0)
        model.tensors["head.weights"][...] = 0.0
        model.tensors["head.bias"][...] = 0.75
        img = np.random.default_rng(2).random((16, 16, 1)).astype(np.float32)
        expected = 1.0 / (1.0 + math.exp(-0.75))
        assert abs(predict(model, img) - expected) < 1e-6

    def test_wrong_shape_rejected(self):
        model = build_model(tiny_arch(), seed=0)
        with pytest.raises(ValueError):
            predict(model, np.zeros((8, 8, 1)))

    def test_batch_packing_invariance(self):
        model = build_model(tiny_arch(), seed=7)
        X = np.random.default_rng(3).random((5, 16, 16, 1)).astype(np.float32)
        batched = network.evaluate_probs(model, X)
        single = np.array([predict(model, X[i]) for i in range(5)])
        np.testing.assert_allclose(batched, single, atol=1e-6)


def test_end_to_end_gradients_match_finite_differences():
    """Loss gradient w.r.t. a sample of coordinates in every parameter group,
    through the full default block stack (double precision)."""
    arch = default_architecture(12)
    model = build_model(arch, seed=0, dtype=np.float64)
    rng = np.random.default_rng(1)
    X = rng.random((2, 12, 12, 1))
    y = np.array([1.0, 0.0])
    x_nchw = to_nchw(X)

    def loss_for_current():
        p, _ = model.forward(x_nchw, mode="train")
        return bce_loss(p, y)[0]

    p, caches = model.forward(x_nchw, mode="train")
    _, d_p = bce_loss(p, y)
    grads = model.backward(caches, d_p)

    worst = 0.0
    for name in model.trainable_names():
        tensor = model.tensors[name]
        k = min(10, tensor.size)
        idx = rng.choice(tensor.size, size=k, replace=False)
        flat = tensor.reshape(-1)
        fd = np.zeros(k)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + 1e-5
            up = loss_for_current()
            flat[i] = orig - 1e-5
            down = loss_for_current()
            flat[i] = orig
            fd[j] = (up - down) / 2e-5
        analytic = grads[name].reshape(-1)[idx]
        worst = max(worst, rel_error(analytic, fd))
    assert worst <= 1e-3, f"worst relative error {worst:.3g}"


def test_training_loss_non_increasing_trend():
    """Median training loss over a 20-epoch window does not increase
    (median across 3 seeds) on the memorization set."""
    X, y = separable_images(8, seed=11)
    Xv, yv = separable_images(2, seed=12)
    drops = []
    for seed in range(3):
        model = build_model(tiny_arch(), seed=seed)
        history = train(model, (X, y), (Xv, yv), epochs=20, batch_size=8, seed=seed)
        losses = [r.train_loss for r in history.rows]
        drops.append(losses[-1] - losses[0])
    assert float(np.median(drops)) <= 0.0
