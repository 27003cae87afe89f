"""Network shapes, manual backprop, training loop contracts, checkpoints."""

import numpy as np
import pytest

from listfold.data import (
    build_ranked_batch,
    fit_norm_params,
    generate_synthetic_panel,
    minmax_normalize,
    rolling_windows,
)
from listfold.losses import LossSpec, Transform, evaluate_loss
from listfold.metrics import spearman_ic
from listfold.neural import (
    AdamState,
    ScoringNet,
    SgdState,
    TrainConfig,
    TrainingDivergenceError,
    backward,
    forward,
    forward_cached,
    init_network,
    list_loss_and_grad,
    load_checkpoint,
    load_checkpoint_norm,
    save_checkpoint,
    score_week,
    train,
    train_step,
)

FOLD_EXP = LossSpec("listfold", Transform("exponential"))


def normalized_window(seed=0, weeks=90, stocks=12, factors=6, signal=1.0, noise=0.3,
                      train_len=60, test_len=30):
    panel = generate_synthetic_panel(seed, weeks, stocks, factors, signal, noise)
    plan = fit_norm_params(panel, rolling_windows(weeks, train_len, test_len)[0])
    return minmax_normalize(panel, plan), plan.localized()


class TestInit:
    def test_headline_dims(self):
        assert init_network(68, 0).layer_dims == [68, 136, 272, 34, 1]

    def test_tiny_dims(self):
        assert init_network(1, 0).layer_dims == [1, 2, 4, 1, 1]

    def test_same_seed_identical_bytes(self):
        a, b = init_network(7, 99), init_network(7, 99)
        for x, y in zip(a.parameters(), b.parameters()):
            assert x.tobytes() == y.tobytes()

    def test_different_seed_differs(self):
        a, b = init_network(7, 1), init_network(7, 2)
        assert any(not np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


class TestForward:
    def test_all_zero_parameters_score_zero(self):
        net = init_network(4, 0)
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        np.testing.assert_array_equal(forward(net, np.ones((5, 4))), np.zeros(5))

    def test_hand_built_affine_relu(self):
        # single layer y = relu(x @ w + b) with hand-set parameters
        net = ScoringNet([2, 1], [np.array([[2.0], [-1.0]])], [np.array([0.5])],
                         final_relu=True, seed=0)
        x = np.array([[1.0, 1.0], [0.0, 3.0], [2.0, 0.0]])
        np.testing.assert_allclose(forward(net, x), [1.5, 0.0, 4.5])

    def test_batch_scores_order_preserving(self):
        net = init_network(3, 5)
        x = np.random.default_rng(0).uniform(0, 1, (7, 3))
        full = forward(net, x)
        assert full.shape == (7,)
        # reversed view changes the BLAS summation order by one ulp
        np.testing.assert_allclose(forward(net, x[::-1]), full[::-1], atol=1e-12)

    def test_final_relu_clamps(self):
        net = init_network(3, 5, final_relu=True)
        x = np.random.default_rng(1).uniform(0, 1, (20, 3))
        assert np.all(forward(net, x) >= 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_network(3, 0), np.ones((2, 4)))


class TestBackward:
    def test_hand_derived_sgd_update_on_two_parameter_model(self):
        # y = w x + b (no relu), mse loss against r;
        # dL/dw = (2/n) sum (y - r) x, dL/db = (2/n) sum (y - r)
        w0, b0, lr = 1.5, -0.3, 0.05
        net = ScoringNet([1, 1], [np.array([[w0]])], [np.array([b0])],
                         final_relu=False, seed=0)
        x = np.array([[0.5], [-1.0], [2.0]])
        r = np.array([1.0, 0.0, -0.5])
        y = w0 * x[:, 0] + b0
        grad_w = np.mean(2 * (y - r) * x[:, 0])
        grad_b = np.mean(2 * (y - r))
        batch = build_batch_from_rows(x, r)
        train_step(net, [batch], LossSpec("mse"), SgdState(lr=lr))
        assert net.weights[0][0, 0] == pytest.approx(w0 - lr * grad_w, abs=1e-12)
        assert net.biases[0][0] == pytest.approx(b0 - lr * grad_b, abs=1e-12)

    def test_score_gradient_seam_matches_loss_module(self):
        # the gradient fed into backprop must be the loss module's analytic
        # gradient scattered back to row order
        rng = np.random.default_rng(2)
        feats = rng.uniform(0, 1, (6, 3))
        rets = rng.uniform(-0.05, 0.05, 6)
        batch = build_batch_from_rows(feats, rets)
        net = init_network(3, 7)
        scores = forward(net, feats)
        value, dscores = list_loss_and_grad(net, scores, batch, FOLD_EXP)
        direct = evaluate_loss(FOLD_EXP, scores[batch.truth_order])
        assert value == pytest.approx(direct.value)
        np.testing.assert_allclose(dscores[batch.truth_order], direct.gradient, atol=1e-15)

    def test_parameter_gradients_match_finite_differences(self):
        # tiny net, 4-stock list, inputs nudged off relu kinks
        rng = np.random.default_rng(3)
        net = init_network(3, 11)
        feats = rng.uniform(0.1, 1.0, (4, 3))
        rets = np.array([0.04, 0.02, -0.01, -0.03])
        batch = build_batch_from_rows(feats, rets)

        def total_loss(n):
            scores = forward(n, feats)
            return evaluate_loss(FOLD_EXP, scores[batch.truth_order]).value

        scores, cache = forward_cached(net, feats)
        _, dscores = list_loss_and_grad(net, scores, batch, FOLD_EXP)
        for z in cache[1]:
            assert np.min(np.abs(z)) > 1e-6  # no kink within the step
        grad_w, grad_b = backward(net, cache, dscores)
        step = 1e-6
        worst = 0.0
        for li in range(len(net.weights)):
            for arr, grad in ((net.weights[li], grad_w[li]), (net.biases[li], grad_b[li])):
                it = np.nditer(arr, flags=["multi_index"])
                while not it.finished:
                    idx = it.multi_index
                    keep = arr[idx]
                    arr[idx] = keep + step
                    up = total_loss(net)
                    arr[idx] = keep - step
                    dn = total_loss(net)
                    arr[idx] = keep
                    fd = (up - dn) / (2 * step)
                    err = abs(fd - grad[idx]) / max(1.0, abs(fd), abs(grad[idx]))
                    worst = max(worst, err)
                    it.iternext()
        assert worst < 1e-3

    def test_permutation_equivariance(self):
        net = init_network(4, 13)
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 1, (9, 4))
        perm = rng.permutation(9)
        np.testing.assert_allclose(forward(net, x[perm]), forward(net, x)[perm], atol=1e-15)


def build_batch_from_rows(features, returns):
    order = np.argsort(-np.asarray(returns), kind="stable")
    from listfold.data import RankedBatch, decile_labels

    return RankedBatch(
        features=np.asarray(features, dtype=float),
        truth_order=order,
        returns=np.asarray(returns, dtype=float),
        labels=decile_labels(returns, levels=2),
    )


class TestTrainStep:
    def test_zero_learning_rate_keeps_parameters(self):
        wp, local = normalized_window()
        batch = build_ranked_batch(wp, wp.dates[0], levels=6)
        net = init_network(wp.n_factors, 3)
        before = [p.copy() for p in net.parameters()]
        train_step(net, [batch], FOLD_EXP, SgdState(lr=0.0))
        for p, q in zip(net.parameters(), before):
            np.testing.assert_array_equal(p, q)

    def test_adam_moves_parameters(self):
        wp, local = normalized_window()
        batch = build_ranked_batch(wp, wp.dates[0], levels=6)
        net = init_network(wp.n_factors, 3)
        before = [p.copy() for p in net.parameters()]
        train_step(net, [batch], FOLD_EXP, AdamState(lr=1e-3))
        assert any(not np.array_equal(p, q) for p, q in zip(net.parameters(), before))


class TestTrain:
    def test_zero_batches_returns_init(self):
        wp, local = normalized_window()
        cfg = TrainConfig(loss=FOLD_EXP, total_batches=0, seed=5)
        got = train(wp, local, cfg)
        want = init_network(wp.n_factors, 5)
        for p, q in zip(got.parameters(), want.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_planted_signal_learned_out_of_window(self):
        wp, local = normalized_window(seed=21, signal=1.0, noise=0.25)
        cfg = TrainConfig(loss=FOLD_EXP, batch_size=8, total_batches=60, seed=1, levels=6)
        net = train(wp, local, cfg)
        ics = [
            spearman_ic(score_week(net, wp, wp.dates[t]), wp.week_returns(wp.dates[t]))
            for t in range(*local.test_range)
        ]
        assert float(np.mean(ics)) > 0.3

    def test_zero_signal_learns_nothing(self):
        wp, local = normalized_window(seed=22, signal=0.0, noise=1.0)
        cfg = TrainConfig(loss=FOLD_EXP, batch_size=8, total_batches=60, seed=1, levels=6)
        net = train(wp, local, cfg)
        ics = [
            spearman_ic(score_week(net, wp, wp.dates[t]), wp.week_returns(wp.dates[t]))
            for t in range(*local.test_range)
        ]
        assert abs(float(np.mean(ics))) < 0.1

    def test_deterministic_given_seed(self):
        wp, local = normalized_window()
        cfg = TrainConfig(loss=FOLD_EXP, batch_size=4, total_batches=15, seed=9, levels=6)
        a, b = train(wp, local, cfg), train(wp, local, cfg)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_never_touches_test_weeks(self):
        wp, local = normalized_window()
        accesses: list = []
        cfg = TrainConfig(loss=FOLD_EXP, batch_size=4, total_batches=10, seed=9, levels=6)
        train(wp, local, cfg, access_log=accesses)
        assert accesses
        assert set(accesses) <= set(range(*local.train_range))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_after_ten_bad_batches(self):
        wp, local = normalized_window()
        cfg = TrainConfig(loss=LossSpec("mse"), batch_size=4, total_batches=60,
                          learning_rate=1e25, optimizer="sgd", final_relu=False, seed=0,
                          levels=6)
        with pytest.raises(TrainingDivergenceError):
            train(wp, local, cfg)

    def test_early_stopping_knob_caps_batches(self):
        wp, local = normalized_window()
        base = TrainConfig(loss=FOLD_EXP, batch_size=4, total_batches=400, seed=9,
                           levels=6, patience=3, learning_rate=0.0)
        # lr 0 never improves, so training stops after the patience window
        net = train(wp, local, base)
        want = init_network(wp.n_factors, 9)
        for p, q in zip(net.parameters(), want.parameters()):
            np.testing.assert_array_equal(p, q)


class TestScoreWeek:
    def test_matches_forward_on_extracted_matrix(self):
        wp, _ = normalized_window()
        net = init_network(wp.n_factors, 2)
        date = wp.dates[5]
        np.testing.assert_array_equal(score_week(net, wp, date),
                                      forward(net, wp.week_features(date)))

    def test_unknown_week_rejected(self):
        wp, _ = normalized_window()
        from listfold.data import DataError

        with pytest.raises(DataError):
            score_week(init_network(wp.n_factors, 2), wp, "1970-01-01")


class TestCheckpoint:
    def test_roundtrip_reproduces_forward_bits(self, tmp_path):
        wp, local = normalized_window()
        cfg = TrainConfig(loss=FOLD_EXP, batch_size=4, total_batches=10, seed=4, levels=6)
        net = train(wp, local, cfg)
        path = tmp_path / "model.npz"
        save_checkpoint(net, path, "abc123", norm_params=(np.zeros(6), np.ones(6)))
        back = load_checkpoint(path)
        x = wp.week_features(wp.dates[0])
        assert forward(back, x).tobytes() == forward(net, x).tobytes()
        mins, maxs = load_checkpoint_norm(path)
        np.testing.assert_array_equal(mins, np.zeros(6))
        np.testing.assert_array_equal(maxs, np.ones(6))
