"""Reference implementation of weighted LiDAR-camera feature fusion.

Three strategies operate on per-cell features ``F_P`` (LiDAR) and ``F_I``
(camera), both M x d:

* sum:        F_f = F_P + F_I
* sigmoid:    w_P = sigmoid(MLP(F_P + F_I)),  F_f = w_P F_P + (1 - w_P) F_I
* attention:  F_f = softmax(F_I W_q (F_P W_k)^T / sqrt(d)) F_P W_v

A model is fuse -> mean-pool over cells -> linear logit, trained by
full-batch gradient descent on binary cross-entropy.  Everything is float64
with hand-written gradients, checked against central differences.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergedLoss, NonFiniteGradient, ShapeMismatch, WrongStrategy

TAGS = ("clean", "lidar_corrupt", "camera_corrupt")
TAG_MIX = (0.4, 0.3, 0.3)


class Strategy(str, enum.Enum):
    Sum = "sum"
    SigmoidGate = "sigmoid"
    CrossAttention = "attention"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        for s in cls:
            if str(value).lower() in (s.value, s.name.lower()):
                return s
        raise WrongStrategy(f"unknown fusion strategy {value!r}")


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_row(v, axis: int = -1):
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class GateMlpParams:
    W1: np.ndarray  # d x h
    b1: np.ndarray  # h
    W2: np.ndarray  # h x 1 (or h x d for per-channel gates)
    b2: np.ndarray  # 1 (or d)

    @classmethod
    def zeros(cls, d: int, hidden: int = 16, per_channel: bool = False):
        k = d if per_channel else 1
        return cls(np.zeros((d, hidden)), np.zeros(hidden), np.zeros((hidden, k)), np.zeros(k))

    @classmethod
    def random(cls, d: int, hidden: int = 16, rng=None, per_channel: bool = False):
        rng = np.random.default_rng(rng)
        k = d if per_channel else 1
        return cls(
            rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden)),
            rng.normal(0.0, 0.1, hidden),
            rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, k)),
            np.zeros(k),
        )


@dataclass
class AttentionParams:
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.W_q.shape[0])

    @classmethod
    def random(cls, d: int, rng=None):
        rng = np.random.default_rng(rng)
        s = 1.0 / np.sqrt(d)
        return cls(*(rng.normal(0.0, s, (d, d)) for _ in range(3)))


def mlp_forward(x, params: GateMlpParams):
    """Gate logits: relu(x W1 + b1) W2 + b2, applied over the last axis."""
    return relu(x @ params.W1 + params.b1) @ params.W2 + params.b2


def _check_shapes(F_P, F_I):
    F_P = np.asarray(F_P, dtype=np.float64)
    F_I = np.asarray(F_I, dtype=np.float64)
    if F_P.shape != F_I.shape:
        raise ShapeMismatch(f"F_P {F_P.shape} and F_I {F_I.shape} differ")
    return F_P, F_I


def fuse_sum(F_P, F_I):
    F_P, F_I = _check_shapes(F_P, F_I)
    return F_P + F_I


def fuse_sigmoid(F_P, F_I, params: GateMlpParams):
    """Returns (fused features, w_P); w_I is ``1 - w_P``."""
    F_P, F_I = _check_shapes(F_P, F_I)
    w_P = sigmoid(mlp_forward(F_P + F_I, params))
    # F_I + w_P (F_P - F_I) == w_P F_P + w_I F_I, and is exact when F_P == F_I
    return F_I + w_P * (F_P - F_I), w_P


def attention_weights(F_P, F_I, params: AttentionParams):
    F_P, F_I = _check_shapes(F_P, F_I)
    Q = F_I @ params.W_q
    K = F_P @ params.W_k
    return softmax_row(Q @ np.swapaxes(K, -1, -2) * params.scale)


def fuse_attention(F_P, F_I, params: AttentionParams):
    """Single-head cross-attention; query from camera, key/value from LiDAR."""
    F_P, F_I = _check_shapes(F_P, F_I)
    if F_P.shape[-1] != params.W_q.shape[0]:
        raise ShapeMismatch(f"feature width {F_P.shape[-1]} != attention width {params.W_q.shape[0]}")
    return attention_weights(F_P, F_I, params) @ (F_P @ params.W_v)


# ---------------------------------------------------------------------------
# Toy dataset
# ---------------------------------------------------------------------------


@dataclass
class ToyFusionDataset:
    F_P: np.ndarray  # n x M x d
    F_I: np.ndarray
    labels: np.ndarray  # n, in {0, 1}
    tags: np.ndarray  # n, index into TAGS
    seed: int
    direction: np.ndarray  # unit vector defining the label

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "ToyFusionDataset":
        return ToyFusionDataset(
            self.F_P[idx], self.F_I[idx], self.labels[idx], self.tags[idx], self.seed, self.direction
        )

    def tag_names(self) -> np.ndarray:
        return np.array(TAGS)[self.tags]


def _signature(d: int, rng) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=d)


def generate_toy_dataset(
    n: int,
    d: int = 8,
    M: int = 4,
    seed: int = 0,
    base_sigma: float = 0.3,
    corrupt_sigma: float = 2.0,
    noise: str = "structured",
    structure_share: float = 0.8,
) -> ToyFusionDataset:
    """Two noisy views of a shared latent, labelled by a seeded hyperplane.

    ``noise="isotropic"`` inflates the corrupted branch with i.i.d. noise.
    ``noise="structured"`` keeps the per-channel std at ``corrupt_sigma`` but
    puts ``structure_share`` of the corruption variance along a fixed
    +-1 signature vector per modality, so the two corruptions differ in
    direction as real LiDAR and camera degradations do.
    """
    if d < 1 or M < 1 or n < 0:
        raise ValueError("n >= 0 and d, M >= 1 required")
    if noise not in ("structured", "isotropic"):
        raise ValueError(f"unknown noise model {noise!r}")
    rng = np.random.default_rng(seed)
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    sig_P, sig_I = _signature(d, rng), _signature(d, rng)

    counts = [int(round(p * n)) for p in TAG_MIX[1:]]
    counts.insert(0, n - sum(counts))
    tags = rng.permutation(np.repeat(np.arange(3), counts))

    t = rng.normal(size=(n, M, d))
    labels = (t.mean(axis=1) @ u > 0).astype(np.int64)

    def branch_noise(corrupt_mask, signature):
        eps = base_sigma * rng.normal(size=(n, M, d))
        if noise == "isotropic":
            heavy = corrupt_sigma * rng.normal(size=(n, M, d))
        else:
            iso = np.sqrt(1.0 - structure_share) * rng.normal(size=(n, M, d))
            coherent = np.sqrt(structure_share) * rng.normal(size=(n, M, 1)) * signature
            heavy = corrupt_sigma * (iso + coherent)
        return np.where(corrupt_mask[:, None, None], heavy, eps)

    F_P = t + branch_noise(tags == 1, sig_P)
    F_I = t + branch_noise(tags == 2, sig_I)
    return ToyFusionDataset(F_P, F_I, labels, tags, seed, u)


# ---------------------------------------------------------------------------
# Model, loss and gradients
# ---------------------------------------------------------------------------


@dataclass
class FusionModel:
    strategy: Strategy
    params: dict  # name -> float64 array
    hidden: int = 16
    per_channel: bool = False
    seed: Optional[int] = None

    @classmethod
    def init(cls, strategy, d: int, hidden: int = 16, seed: int = 0, per_channel: bool = False, zero_gate: bool = False):
        strategy = Strategy.parse(strategy)
        rng = np.random.default_rng(seed)
        params = {"w": rng.normal(0.0, 0.1, d), "b": np.zeros(1)}
        if strategy is Strategy.SigmoidGate:
            g = (
                GateMlpParams.zeros(d, hidden, per_channel)
                if zero_gate
                else GateMlpParams.random(d, hidden, rng, per_channel)
            )
            params.update(W1=g.W1, b1=g.b1, W2=g.W2, b2=g.b2)
        elif strategy is Strategy.CrossAttention:
            a = AttentionParams.random(d, rng)
            params.update(W_q=a.W_q, W_k=a.W_k, W_v=a.W_v)
        return cls(strategy, params, hidden, per_channel, seed)

    @property
    def gate(self) -> GateMlpParams:
        p = self.params
        return GateMlpParams(p["W1"], p["b1"], p["W2"], p["b2"])

    @property
    def attention(self) -> AttentionParams:
        p = self.params
        return AttentionParams(p["W_q"], p["W_k"], p["W_v"])

    def copy(self) -> "FusionModel":
        return FusionModel(
            self.strategy, {k: v.copy() for k, v in self.params.items()}, self.hidden, self.per_channel, self.seed
        )

    def fuse(self, F_P, F_I):
        if self.strategy is Strategy.Sum:
            return fuse_sum(F_P, F_I)
        if self.strategy is Strategy.SigmoidGate:
            return fuse_sigmoid(F_P, F_I, self.gate)[0]
        return fuse_attention(F_P, F_I, self.attention)

    def logits(self, F_P, F_I):
        pooled = self.fuse(F_P, F_I).mean(axis=-2)
        return pooled @ self.params["w"] + self.params["b"][0]

    def predict(self, F_P, F_I):
        return (self.logits(F_P, F_I) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "hidden": self.hidden,
            "per_channel": self.per_channel,
            "shapes": {k: list(v.shape) for k, v in self.params.items()},
            "params": {k: v.ravel().tolist() for k, v in self.params.items()},
            "seed": {"init": self.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionModel":
        params = {
            k: np.asarray(v, dtype=np.float64).reshape(d["shapes"][k]) for k, v in d["params"].items()
        }
        return cls(Strategy.parse(d["strategy"]), params, d.get("hidden", 16), d.get("per_channel", False), d["seed"].get("init"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _bce(z, y):
    # mean log(1 + exp(z)) - y z, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss_and_grads(model: FusionModel, F_P, F_I, y):
    """Mean binary cross-entropy and its gradient w.r.t. every parameter."""
    F_P, F_I = _check_shapes(F_P, F_I)
    p = model.params
    n, M, d = F_P.shape
    grads = {}

    if model.strategy is Strategy.Sum:
        fused = F_P + F_I
    elif model.strategy is Strategy.SigmoidGate:
        s = F_P + F_I
        a1 = s @ p["W1"] + p["b1"]
        h1 = relu(a1)
        w_P = sigmoid(h1 @ p["W2"] + p["b2"])
        diff = F_P - F_I
        fused = F_I + w_P * diff
    else:
        scale = 1.0 / np.sqrt(d)
        Q = F_I @ p["W_q"]
        K = F_P @ p["W_k"]
        V = F_P @ p["W_v"]
        A = softmax_row(Q @ np.swapaxes(K, 1, 2) * scale)
        fused = A @ V

    pooled = fused.mean(axis=1)
    z = pooled @ p["w"] + p["b"][0]
    loss = _bce(z, y)

    dz = (sigmoid(z) - y) / n
    grads["w"] = pooled.T @ dz
    grads["b"] = np.array([dz.sum()])
    d_fused = np.broadcast_to((dz[:, None] * p["w"][None, :])[:, None, :] / M, fused.shape)

    if model.strategy is Strategy.SigmoidGate:
        d_wP = d_fused * diff
        if w_P.shape[-1] == 1:
            d_wP = d_wP.sum(axis=-1, keepdims=True)
        d_g = d_wP * w_P * (1.0 - w_P)
        grads["W2"] = np.einsum("nmh,nmk->hk", h1, d_g)
        grads["b2"] = d_g.sum(axis=(0, 1))
        d_a1 = (d_g @ p["W2"].T) * (a1 > 0)
        grads["W1"] = np.einsum("nmd,nmh->dh", s, d_a1)
        grads["b1"] = d_a1.sum(axis=(0, 1))
    elif model.strategy is Strategy.CrossAttention:
        dV = np.swapaxes(A, 1, 2) @ d_fused
        dA = d_fused @ np.swapaxes(V, 1, 2)
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) * scale
        dQ = dS @ K
        dK = np.swapaxes(dS, 1, 2) @ Q
        grads["W_q"] = np.einsum("nmd,nme->de", F_I, dQ)
        grads["W_k"] = np.einsum("nmd,nme->de", F_P, dK)
        grads["W_v"] = np.einsum("nmd,nme->de", F_P, dV)
    return loss, grads


def loss_only(model: FusionModel, F_P, F_I, y) -> float:
    return _bce(model.logits(F_P, F_I), y)


def grad_check(model: FusionModel, F_P, F_I, y, eps: float = 1e-5, params=None) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-6, 1e-4]")
    _, grads = loss_and_grads(model, F_P, F_I, y)
    worst = 0.0
    probe = model.copy()
    for name in params or grads:
        g_a = grads[name]
        if not np.isfinite(g_a).all():
            raise NonFiniteGradient(f"analytic gradient of {name} is not finite")
        theta = probe.params[name]
        for i in np.ndindex(theta.shape):
            orig = theta[i]
            theta[i] = orig + eps
            up = loss_only(probe, F_P, F_I, y)
            theta[i] = orig - eps
            down = loss_only(probe, F_P, F_I, y)
            theta[i] = orig
            g_n = (up - down) / (2.0 * eps)
            if not np.isfinite(g_n):
                raise NonFiniteGradient(f"numeric gradient of {name}{i} is not finite")
            err = abs(g_a[i] - g_n) / max(1e-8, abs(g_a[i]) + abs(g_n))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Training and analysis
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: FusionModel
    accuracy: dict  # tag -> held-out accuracy, plus "mixed"
    losses: list = field(default_factory=list)
    train_idx: np.ndarray = None
    test_idx: np.ndarray = None


def split_indices(n: int, seed: int, holdout: float = 0.25):
    perm = np.random.default_rng([seed, 7]).permutation(n)
    n_test = int(round(holdout * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def accuracy_by_tag(model: FusionModel, data: ToyFusionDataset) -> dict:
    pred = model.predict(data.F_P, data.F_I)
    correct = pred == data.labels
    acc = {"mixed": float(correct.mean()) if len(correct) else float("nan")}
    for i, tag in enumerate(TAGS):
        sel = data.tags == i
        acc[tag] = float(correct[sel].mean()) if sel.any() else float("nan")
    return acc


def train(
    data: ToyFusionDataset,
    strategy,
    epochs: int = 400,
    lr: float = 1.0,
    seed: int = 0,
    hidden: int = 16,
    holdout: float = 0.25,
    per_channel: bool = False,
) -> TrainResult:
    """Full-batch gradient descent; accuracy is measured on a held-out split."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    d = data.F_P.shape[-1]
    model = FusionModel.init(strategy, d, hidden=hidden, seed=seed, per_channel=per_channel)
    train_idx, test_idx = split_indices(len(data), seed, holdout)
    tr = data.subset(train_idx)
    y = tr.labels.astype(np.float64)
    losses = []
    for _ in range(epochs):
        loss, grads = loss_and_grads(model, tr.F_P, tr.F_I, y)
        if not np.isfinite(loss):
            raise DivergedLoss(f"loss became {loss} after {len(losses)} epochs")
        losses.append(loss)
        if lr:
            for k, g in grads.items():
                model.params[k] -= lr * g
    test = data.subset(test_idx) if len(test_idx) else tr
    return TrainResult(model, accuracy_by_tag(model, test), losses, train_idx, test_idx)


@dataclass
class GateStatistics:
    mean_w_P: dict  # tag -> mean LiDAR gate weight
    delta: dict  # tag -> mean_w_P[tag] - mean_w_P["clean"]

    @property
    def mean_w_I(self) -> dict:
        return {k: 1.0 - v for k, v in self.mean_w_P.items()}

    def trend(self) -> dict:
        """Arrow per tag for (w_P, w_I) relative to clean."""
        out = {}
        for tag, dv in self.delta.items():
            if tag == "clean":
                continue
            out[tag] = ("up", "down") if dv > 0 else ("down", "up") if dv < 0 else ("flat", "flat")
        return out


def gate_statistics(model: FusionModel, data: ToyFusionDataset) -> GateStatistics:
    if model.strategy is not Strategy.SigmoidGate:
        raise WrongStrategy(f"gate statistics need a sigmoid-gate model, got {model.strategy.value}")
    _, w_P = fuse_sigmoid(data.F_P, data.F_I, model.gate)
    means = {}
    for i, tag in enumerate(TAGS):
        sel = data.tags == i
        if sel.any():
            means[tag] = float(w_P[sel].mean())
    clean = means.get("clean", float("nan"))
    return GateStatistics(means, {k: v - clean for k, v in means.items()})
