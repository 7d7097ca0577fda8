"""Feed-forward cardinality network: backprop, training, serialisation."""

import math

import numpy as np
import pytest

from setnet import (
    HeadWeights,
    MLPModel,
    NegBinParams,
    NumericError,
    TrainConfig,
    TrainingSample,
    card_grad,
    forward,
    gradient_check,
    head_backward,
    head_forward,
    init_model,
    loss_and_grads,
    nb_mode,
    predict_count,
    train,
)
from setnet.cardnet import model_from_json, model_to_json


def make_batch(n, d, seed, count_rate=4.0):
    rng = np.random.default_rng(seed)
    return [
        TrainingSample(
            features=tuple(rng.uniform(-1.0, 1.0, size=d)),
            count=int(rng.poisson(count_rate)),
        )
        for _ in range(n)
    ]


def single_layer_model(d=3, kind="negbin", head=None, zero=True, seed=0):
    model = init_model([d, 2 if kind == "negbin" else 1],
                       head=head or HeadWeights(), seed=seed, kind=kind)
    if zero:
        for w in model.weights:
            w[:] = 0.0
    return model


class TestForward:
    def test_zero_network_equals_head_midpoint(self):
        head = HeadWeights(alpha_max=160.0, beta_max=20.0, floor=0.0)
        model = single_layer_model(head=head)
        ab = forward(model, [0.4, -1.2, 3.3])
        ref = head_forward(0.0, 0.0, head)
        assert ab.alpha == ref.alpha
        assert ab.beta == ref.beta

    def test_hand_computed_fixture(self):
        head = HeadWeights(alpha_max=10.0, beta_max=4.0, floor=0.0)
        model = single_layer_model(d=2, head=head)
        model.weights[0][:] = [[1.0, 2.0], [-1.0, 0.5]]
        model.biases[0][:] = [0.1, -0.2]
        x = [0.3, 0.4]
        # z_alpha = 0.3 + 0.8 + 0.1 = 1.2; z_beta = -0.3 + 0.2 - 0.2 = -0.3
        sa = 1.0 / (1.0 + math.exp(-1.2))
        sb = 1.0 / (1.0 + math.exp(0.3))
        ab = forward(model, x)
        assert ab.alpha == pytest.approx(10.0 * sa, rel=1e-12)
        assert ab.beta == pytest.approx(4.0 * sb, rel=1e-12)

    def test_pure_function(self):
        model = init_model([4, 8, 2], seed=3)
        x = [0.1, 0.2, 0.3, 0.4]
        first = forward(model, x)
        for _ in range(3):
            again = forward(model, x)
            assert (again.alpha, again.beta) == (first.alpha, first.beta)

    def test_dimension_mismatch(self):
        model = init_model([4, 8, 2], seed=3)
        with pytest.raises(NumericError):
            forward(model, [1.0, 2.0])


class TestLossAndGrads:
    def test_single_sample_head_bias_chain(self):
        # With one linear layer the final-bias gradient is exactly the
        # head-backward image of the loss gradient.
        head = HeadWeights(alpha_max=12.0, beta_max=4.0)
        model = single_layer_model(d=3, head=head)
        model.biases[0][:] = [0.4, -0.3]
        sample = TrainingSample(features=(0.0, 0.0, 0.0), count=2)
        _, (gw, gb) = loss_and_grads(model, [sample])
        ab = head_forward(0.4, -0.3, head)
        expected = head_backward(0.4, -0.3, head, card_grad(2, ab))
        assert gb[0][0] == pytest.approx(expected[0], rel=1e-12)
        assert gb[0][1] == pytest.approx(expected[1], rel=1e-12)

    def test_duplicated_batch_invariance(self):
        model = init_model([4, 8, 2], seed=5)
        batch = make_batch(6, 4, seed=6)
        loss1, (gw1, gb1) = loss_and_grads(model, batch)
        loss2, (gw2, gb2) = loss_and_grads(model, batch + batch)
        assert loss1 == pytest.approx(loss2, rel=1e-12)
        for a, b in zip(gw1 + gb1, gw2 + gb2):
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_empty_batch(self):
        model = init_model([4, 8, 2], seed=5)
        with pytest.raises(NumericError):
            loss_and_grads(model, [])

    @pytest.mark.parametrize("kind", ["negbin", "regression"])
    def test_full_network_finite_differences(self, kind):
        model = init_model([4, 8, 2 if kind == "negbin" else 1],
                           head=HeadWeights(alpha_max=12.0, beta_max=4.0),
                           seed=7, kind=kind)
        batch = make_batch(8, 4, seed=8)
        assert gradient_check(model, batch, h=1e-5) < 1e-4


class TestGradientCheck:
    def test_truncation_sanity(self):
        model = init_model([4, 8, 2], head=HeadWeights(alpha_max=12.0, beta_max=4.0),
                           seed=9)
        batch = make_batch(8, 4, seed=10)
        fine = gradient_check(model, batch, h=1e-5)
        coarse = gradient_check(model, batch, h=1.0)
        assert fine < 1e-4
        assert coarse > fine

    def test_saturated_head_near_zero(self):
        model = single_layer_model(d=2, head=HeadWeights(alpha_max=12.0, beta_max=4.0))
        model.biases[0][:] = [50.0, 50.0]
        batch = [TrainingSample(features=(0.0, 0.0), count=3)]
        assert gradient_check(model, batch, h=1e-5) < 1e-6

    def test_rejects_bad_step(self):
        model = single_layer_model()
        with pytest.raises(NumericError):
            gradient_check(model, make_batch(2, 3, seed=0), h=0.0)


class TestTrain:
    def test_zero_learning_rate_is_identity(self):
        model = init_model([4, 8, 2], seed=11)
        data = make_batch(32, 4, seed=12)
        cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=8, seed=1)
        out = train(model, data, cfg)
        assert model_to_json(out) == model_to_json(model)

    def test_deterministic(self):
        data = make_batch(64, 4, seed=13)
        cfg = TrainConfig(learning_rate=0.05, epochs=4, batch_size=16, seed=2)
        runs = [
            model_to_json(train(init_model([4, 8, 2], seed=14), data, cfg))
            for _ in range(2)
        ]
        assert runs[0] == runs[1]

    def test_losses_finite_and_recorded(self):
        data = make_batch(64, 4, seed=15)
        cfg = TrainConfig(learning_rate=0.03, epochs=5, batch_size=16, seed=3)
        losses = []
        train(init_model([4, 8, 2], head=HeadWeights(alpha_max=12.0, beta_max=4.0),
                         seed=16),
              data, cfg, epoch_callback=lambda e, l: losses.append(l))
        assert len(losses) == 5
        assert all(math.isfinite(l) for l in losses)

    def test_full_batch_descent_non_increasing(self):
        # Zero features freeze every weight matrix (their gradients vanish),
        # leaving only the head biases free, where small full-batch steps
        # must descend monotonically.
        head = HeadWeights(alpha_max=12.0, beta_max=4.0)
        model = single_layer_model(d=3, head=head)
        rng = np.random.default_rng(17)
        data = [TrainingSample(features=(0.0, 0.0, 0.0), count=int(rng.poisson(3.0)))
                for _ in range(40)]
        losses = []
        cfg = TrainConfig(learning_rate=1e-3, momentum=0.0, weight_decay=0.0,
                          epochs=40, batch_size=len(data), seed=4)
        train(model, data, cfg, epoch_callback=lambda e, l: losses.append(l))
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-9)

    def test_head_outputs_stay_positive_during_training(self):
        data = make_batch(64, 4, seed=18, count_rate=2.0)
        cfg = TrainConfig(learning_rate=0.1, epochs=10, batch_size=16, seed=5)
        model = train(init_model([4, 8, 2], head=HeadWeights(alpha_max=12.0,
                                                             beta_max=4.0),
                                 seed=19),
                      data, cfg)
        for s in data:
            ab = forward(model, s.features)
            assert ab.alpha > 0.0
            assert ab.beta > 0.0


class TestPredictCount:
    def test_forced_head(self):
        # sigmoid(0) = 0.5 with scales (10, 2) pins (alpha, beta) = (5, 1);
        # NB(5, 1/2) has mode 4 (brute-forced in the numerics tests).
        head = HeadWeights(alpha_max=10.0, beta_max=2.0, floor=0.0)
        model = single_layer_model(d=3, head=head)
        assert predict_count(model, [9.9, -3.0, 0.2]) == 4

    def test_small_alpha_region(self):
        head = HeadWeights(alpha_max=1.6, beta_max=2.0, floor=0.0)
        model = single_layer_model(d=3, head=head)
        # alpha = 0.8 <= 1 pins the mode at zero regardless of beta.
        assert predict_count(model, [1.0, 1.0, 1.0]) == 0

    def test_consistency_with_forward(self):
        rng = np.random.default_rng(20)
        model = init_model([4, 8, 2], head=HeadWeights(alpha_max=12.0, beta_max=4.0),
                           seed=21)
        for _ in range(50):
            x = tuple(rng.uniform(-1, 1, size=4))
            ab = forward(model, x)
            assert predict_count(model, x) == nb_mode(
                NegBinParams(a=ab.alpha, b=1.0 / (1.0 + ab.beta))
            )

    def test_regression_decode(self):
        model = single_layer_model(d=2, kind="regression")
        model.biases[0][0] = 3.6
        assert predict_count(model, [0.0, 0.0]) == 4
        model.biases[0][0] = -2.0
        assert predict_count(model, [0.0, 0.0]) == 0


class TestSerialization:
    def test_round_trip_bit_exact(self):
        model = init_model([4, 8, 2], seed=22)
        text = model_to_json(model)
        clone = model_from_json(text)
        rng = np.random.default_rng(23)
        for _ in range(20):
            x = tuple(rng.uniform(-2, 2, size=4))
            a, b = forward(model, x), forward(clone, x)
            assert (a.alpha, a.beta) == (b.alpha, b.beta)
        assert model_to_json(clone) == text

    def test_schema_version_checked(self):
        model = init_model([3, 2], seed=24)
        doc = model_to_json(model).replace('"schema_version": 1', '"schema_version": 99')
        with pytest.raises(Exception):
            model_from_json(doc)

    def test_shape_validation(self):
        with pytest.raises(NumericError):
            MLPModel(weights=[np.zeros((2, 3)), np.zeros((2, 5))],
                     biases=[np.zeros(2), np.zeros(2)],
                     activation="tanh", head=HeadWeights())
        with pytest.raises(NumericError):
            MLPModel(weights=[np.zeros((3, 4))], biases=[np.zeros(3)],
                     activation="tanh", head=HeadWeights())
