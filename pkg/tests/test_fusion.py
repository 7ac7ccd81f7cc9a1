import json
import math

import numpy as np
import pytest

from kittic.errors import DivergedLoss, NonFiniteGradient, ShapeMismatch, WrongStrategy
from kittic.fusion import (
    TAGS,
    AttentionParams,
    FusionModel,
    GateMlpParams,
    Strategy,
    accuracy_by_tag,
    attention_weights,
    fuse_attention,
    fuse_sigmoid,
    fuse_sum,
    gate_statistics,
    generate_toy_dataset,
    grad_check,
    loss_and_grads,
    sigmoid,
    softmax_row,
    train,
)


def _pair(rng, n=3, M=4, d=5):
    return rng.normal(size=(n, M, d)), rng.normal(size=(n, M, d))


class TestPrimitives:
    def test_sigmoid(self):
        assert sigmoid(0.0) == 0.5
        v = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(v)) and v[0] == 0.0 and v[1] == 1.0

    def test_softmax(self):
        np.testing.assert_allclose(softmax_row(np.full(5, 3.7)), np.full(5, 0.2))
        s = softmax_row(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s, [1.0, 0.0], atol=1e-300)


class TestSum:
    def test_examples(self, rng):
        np.testing.assert_array_equal(fuse_sum(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])), [[4.0, 6.0]])
        F_P, F_I = _pair(rng)
        np.testing.assert_array_equal(fuse_sum(F_P, np.zeros_like(F_P)), F_P)
        np.testing.assert_array_equal(fuse_sum(F_P, F_I), fuse_sum(F_I, F_P))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            fuse_sum(np.zeros((2, 3)), np.zeros((3, 3)))


class TestSigmoidGate:
    def test_zero_mlp_half_weight(self, rng):
        F_P, F_I = _pair(rng)
        fused, w_P = fuse_sigmoid(F_P, F_I, GateMlpParams.zeros(5, 8))
        assert np.all(w_P == 0.5)
        np.testing.assert_allclose(fused, 0.5 * (F_P + F_I), atol=1e-15)

    def test_equal_inputs(self, rng):
        F, _ = _pair(rng)
        fused, _ = fuse_sigmoid(F, F, GateMlpParams.random(5, 8, rng))
        np.testing.assert_array_equal(fused, F)

    def test_convex_combination(self, rng):
        for _ in range(1000):
            F_P, F_I = _pair(rng, n=1, M=3, d=4)
            params = GateMlpParams.random(4, 6, rng)
            params.W2 *= 5  # push gates away from 0.5
            fused, w_P = fuse_sigmoid(F_P, F_I, params)
            assert np.all((w_P > 0) & (w_P < 1))
            w_I = 1.0 - w_P
            assert np.all(w_P + w_I == 1.0)
            lo, hi = np.minimum(F_P, F_I), np.maximum(F_P, F_I)
            assert np.all(fused >= lo - 1e-12) and np.all(fused <= hi + 1e-12)
            np.testing.assert_allclose(fused, w_P * F_P + w_I * F_I, atol=1e-12)

    def test_one_gate_per_cell(self, rng):
        F_P, F_I = _pair(rng)
        _, w_P = fuse_sigmoid(F_P, F_I, GateMlpParams.random(5, 8, rng))
        assert w_P.shape == (3, 4, 1)
        _, w_pc = fuse_sigmoid(F_P, F_I, GateMlpParams.random(5, 8, rng, per_channel=True))
        assert w_pc.shape == (3, 4, 5)


class TestAttention:
    def test_single_key(self, rng):
        F_P, F_I = _pair(rng, n=2, M=1)
        params = AttentionParams.random(5, rng)
        np.testing.assert_allclose(fuse_attention(F_P, F_I, params), F_P @ params.W_v, rtol=1e-13)

    def test_rows_sum_to_one(self, rng):
        for _ in range(100):
            F_P, F_I = _pair(rng, M=6)
            params = AttentionParams.random(5, rng)
            params.W_q *= 10
            A = attention_weights(F_P, F_I, params)
            assert np.max(np.abs(A.sum(axis=-1) - 1.0)) <= 1e-12

    def test_key_permutation_invariance(self, rng):
        for _ in range(50):
            F_P, F_I = _pair(rng, n=1, M=7)
            params = AttentionParams.random(5, rng)
            perm = rng.permutation(7)
            # recompute directly as the oracle
            Q, K, V = F_I[0] @ params.W_q, F_P[0, perm] @ params.W_k, F_P[0, perm] @ params.W_v
            S = Q @ K.T / np.sqrt(5)
            A = np.exp(S - S.max(axis=1, keepdims=True))
            A /= A.sum(axis=1, keepdims=True)
            np.testing.assert_allclose(fuse_attention(F_P[:, perm], F_I, params)[0], A @ V, atol=1e-12)
            np.testing.assert_allclose(
                fuse_attention(F_P[:, perm], F_I, params), fuse_attention(F_P, F_I, params), atol=1e-12
            )

    def test_scale(self):
        assert AttentionParams.random(16).scale == 0.25

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            fuse_attention(np.zeros((1, 3, 5)), np.zeros((1, 4, 5)), AttentionParams.random(5, rng))


class TestGradients:
    @pytest.fixture
    def batch(self):
        data = generate_toy_dataset(16, d=4, M=3, seed=5)
        return data.F_P, data.F_I, data.labels.astype(float)

    def test_sum_classifier(self, batch):
        model = FusionModel.init("sum", 4, seed=1)
        assert set(model.params) == {"w", "b"}
        assert grad_check(model, *batch) <= 1e-6

    @pytest.mark.parametrize("strategy", ["sigmoid", "attention"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_init(self, strategy, seed, batch):
        model = FusionModel.init(strategy, 4, hidden=6, seed=seed)
        assert grad_check(model, *batch, eps=1e-5) <= 1e-4

    def test_per_channel_gate(self, batch):
        model = FusionModel.init("sigmoid", 4, hidden=5, seed=3, per_channel=True)
        assert grad_check(model, *batch) <= 1e-4

    def test_eps_range(self, batch):
        with pytest.raises(ValueError):
            grad_check(FusionModel.init("sum", 4), *batch, eps=1e-3)

    def test_non_finite(self, batch):
        model = FusionModel.init("sum", 4)
        model.params["w"][0] = np.nan
        with pytest.raises(NonFiniteGradient), np.errstate(invalid="ignore"):
            grad_check(model, *batch)


class TestDataset:
    def test_empty(self):
        data = generate_toy_dataset(0)
        assert len(data) == 0

    def test_label_balance(self):
        data = generate_toy_dataset(10_000, seed=1)
        assert abs(data.labels.mean() - 0.5) <= 0.05

    def test_tag_mix(self):
        data = generate_toy_dataset(1000, seed=2)
        assert np.bincount(data.tags, minlength=3).tolist() == [400, 300, 300]
        assert data.tag_names()[0] in TAGS

    @pytest.mark.parametrize("noise", ["structured", "isotropic"])
    def test_branch_variance(self, noise):
        data = generate_toy_dataset(10_000, seed=3, noise=noise)
        var = {tag: data.F_P[data.tags == i].var(axis=(0, 1)).mean() for i, tag in enumerate(TAGS)}
        assert var["lidar_corrupt"] == pytest.approx(1 + 4.0, rel=0.05)
        assert var["clean"] == pytest.approx(1 + 0.09, rel=0.05)
        assert var["camera_corrupt"] == pytest.approx(1 + 0.09, rel=0.05)

    def test_isotropic_corruptions_look_alike_to_the_gate(self):
        # the gate only sees F_P + F_I; with i.i.d. noise its distribution is the
        # same whichever branch is corrupted, so no gate can tell them apart
        data = generate_toy_dataset(20_000, seed=4, noise="isotropic")
        s = data.F_P + data.F_I
        cov = {i: np.cov(s[data.tags == i].reshape(-1, s.shape[-1]).T) for i in (1, 2)}
        assert np.max(np.abs(cov[1] - cov[2])) < 0.3

    def test_structured_corruptions_differ(self):
        data = generate_toy_dataset(20_000, seed=4)
        s = data.F_P + data.F_I
        cov = {i: np.cov(s[data.tags == i].reshape(-1, s.shape[-1]).T) for i in (1, 2)}
        assert np.max(np.abs(cov[1] - cov[2])) > 1.0

    def test_deterministic(self):
        a, b = generate_toy_dataset(50, seed=9), generate_toy_dataset(50, seed=9)
        assert a.F_P.tobytes() == b.F_P.tobytes() and a.labels.tobytes() == b.labels.tobytes()


class TestTraining:
    @pytest.fixture(scope="class")
    @classmethod
    def clean(cls):
        data = generate_toy_dataset(10_000, seed=11)
        return data.subset(np.flatnonzero(data.tags == 0))

    @pytest.mark.parametrize("strategy", [Strategy.Sum, Strategy.SigmoidGate])
    def test_clean_accuracy(self, strategy, clean):
        result = train(clean, strategy, epochs=200, seed=0)
        assert result.accuracy["clean"] >= 0.9

    def test_clean_accuracy_attention_near_lidar_only_limit(self, clean):
        # values come from F_P alone, so the best possible accuracy is that of
        # a classifier on F_P: the pooled projections of signal and noise have
        # std 1/sqrt(M) and sigma0/sqrt(M), giving 1 - atan(sigma0)/pi
        limit = 1 - math.atan(0.3) / math.pi
        assert limit == pytest.approx(0.9072, abs=1e-4)
        acc = train(clean, Strategy.CrossAttention, epochs=200, seed=0).accuracy["clean"]
        assert limit - 0.03 <= acc <= limit + 0.03

    def test_zero_lr_leaves_parameters(self, clean):
        result = train(clean, "sigmoid", epochs=5, lr=0.0, seed=3)
        init = FusionModel.init("sigmoid", clean.F_P.shape[-1], seed=3)
        for k, v in init.params.items():
            np.testing.assert_array_equal(result.model.params[k], v)

    def test_bitwise_deterministic(self, clean):
        a = train(clean, "attention", epochs=20, seed=4)
        b = train(clean, "attention", epochs=20, seed=4)
        assert a.model.to_json() == b.model.to_json()
        assert a.losses == b.losses

    def test_diverged(self, clean):
        # features near the float64 limit overflow in F_P + F_I
        huge = clean.subset(np.arange(20))
        huge.F_P[:] = 1e308
        huge.F_I[:] = 1e308
        with pytest.raises(DivergedLoss), np.errstate(over="ignore", invalid="ignore"):
            train(huge, "sum", epochs=5, seed=0)

    def test_loss_decreases(self, clean):
        r = train(clean, "sigmoid", epochs=50, seed=0)
        assert r.losses[-1] < r.losses[0]

    def test_empty(self):
        with pytest.raises(ValueError):
            train(generate_toy_dataset(0), "sum")


class TestGateStatistics:
    def test_zero_init(self):
        data = generate_toy_dataset(300, seed=1)
        model = FusionModel.init("sigmoid", 8, zero_gate=True)
        stats = gate_statistics(model, data)
        assert all(v == 0.5 for v in stats.mean_w_P.values())
        assert all(v == 0.0 for v in stats.delta.values())
        assert stats.trend()["lidar_corrupt"] == ("flat", "flat")

    def test_wrong_strategy(self):
        with pytest.raises(WrongStrategy):
            gate_statistics(FusionModel.init("sum", 8), generate_toy_dataset(10))

    def test_trained_trend_one_seed(self):
        data = generate_toy_dataset(4000, seed=0)
        model = train(data, "sigmoid", seed=0).model
        stats = gate_statistics(model, data)
        assert stats.mean_w_P["lidar_corrupt"] < stats.mean_w_P["clean"] < stats.mean_w_P["camera_corrupt"]
        assert stats.trend()["lidar_corrupt"] == ("down", "up")
        assert stats.trend()["camera_corrupt"] == ("up", "down")
        for tag in TAGS:
            assert stats.mean_w_P[tag] + stats.mean_w_I[tag] == pytest.approx(1.0, abs=1e-15)


class TestSerialization:
    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_json_round_trip(self, strategy, rng):
        model = FusionModel.init(strategy, 6, hidden=4, seed=2)
        again = FusionModel.from_dict(json.loads(model.to_json()))
        F_P, F_I = _pair(rng, d=6)
        np.testing.assert_array_equal(again.logits(F_P, F_I), model.logits(F_P, F_I))
        assert json.loads(model.to_json())["seed"] == {"init": 2}

    def test_accuracy_keys(self):
        data = generate_toy_dataset(100, seed=1)
        acc = accuracy_by_tag(FusionModel.init("sum", 8), data)
        assert set(acc) == {"mixed", *TAGS}

    def test_loss_and_grads_keys(self, rng):
        model = FusionModel.init("attention", 5)
        F_P, F_I = _pair(rng)
        loss, grads = loss_and_grads(model, F_P, F_I, np.array([0.0, 1.0, 1.0]))
        assert set(grads) == set(model.params) and np.isfinite(loss)
