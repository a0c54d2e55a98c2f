"""Disturbance suppression learning.

The disturbance metric is the summed squared L2 distance between a
network's stage features on a clean image and on its noisy counterpart.
The training loss combines task supervision on both images with a
disturbance penalty:

    L = CE(clean) + alpha * CE(noisy) + beta * D(clean, noisy)

Gradients of the disturbance term flow into both branches; no side is
detached. The toy network here is a desk-scale stand-in for a detection
backbone: two smooth-oriented conv blocks, each followed by adaptive
weighted downsampling, then global average pooling and a classifier. The
monitored feature stages are the two downsampling outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from llraw.awd import AwdParams, awd_backward, awd_forward
from llraw.errors import DataError, DimensionError, ParameterError
from llraw.scb import ScbParams, scb_backward, scb_forward_train
from llraw.tensor import (
    as_tensor,
    fully_connected,
    global_avg_pool,
    global_avg_pool_backward,
    softmax,
)

NUM_STAGES = 2


@dataclass
class DslConfig:
    alpha: float = 1.0
    beta: float = 0.01
    stage_ids: tuple = (0, 1)
    epochs: int = 3
    batch_size: int = 8
    learning_rate: float = 0.05
    seed: int = 0
    num_classes: int = 4

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError("alpha and beta must be >= 0")
        self.stage_ids = tuple(int(i) for i in self.stage_ids)
        if not self.stage_ids:
            raise ParameterError("stage_ids must be non-empty")
        if any(i not in range(NUM_STAGES) for i in self.stage_ids):
            raise ParameterError(
                f"stage_ids must be within 0..{NUM_STAGES - 1}, got {self.stage_ids}"
            )
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "stage_ids": list(self.stage_ids),
            "epochs": self.epochs, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "seed": self.seed,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DslConfig":
        known = {"alpha", "beta", "stage_ids", "epochs", "batch_size",
                 "learning_rate", "seed", "num_classes"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown DslConfig key {sorted(unknown)[0]!r}")
        return cls(**d)


@dataclass
class PairBatch:
    """Pixel-aligned clean/noisy image pairs with class labels."""

    clean: np.ndarray   # (B, 3, H, W)
    noisy: np.ndarray   # (B, 3, H, W)
    labels: np.ndarray  # (B,), int

    def __post_init__(self):
        self.clean = np.ascontiguousarray(self.clean, dtype=np.float64)
        self.noisy = np.ascontiguousarray(self.noisy, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.clean.ndim != 4:
            raise DimensionError(f"clean must be (B, C, H, W), got {self.clean.shape}")
        if self.clean.shape != self.noisy.shape:
            raise DataError(
                f"clean/noisy pairs misaligned: {self.clean.shape} vs {self.noisy.shape}"
            )
        if self.labels.shape != (self.clean.shape[0],):
            raise DataError(
                f"labels must be ({self.clean.shape[0]},), got {self.labels.shape}"
            )

    def __len__(self) -> int:
        return self.clean.shape[0]

    def subset(self, idx) -> "PairBatch":
        return PairBatch(self.clean[idx], self.noisy[idx], self.labels[idx])


def disturbance(features_clean, features_noisy) -> float:
    """Sum over stages of the squared L2 distance between feature tensors."""
    if len(features_clean) != len(features_noisy):
        raise DimensionError(
            f"disturbance: {len(features_clean)} clean stages vs "
            f"{len(features_noisy)} noisy stages"
        )
    total = 0.0
    for i, (a, b) in enumerate(zip(features_clean, features_noisy)):
        a = as_tensor(a, f"stage {i} clean")
        b = as_tensor(b, f"stage {i} noisy")
        if a.shape != b.shape:
            raise DimensionError(
                f"disturbance: stage {i} shapes differ, {a.shape} vs {b.shape}"
            )
        d = a - b
        total += float(np.dot(d.reshape(-1), d.reshape(-1)))
    return total


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """(loss, dlogits) for a single sample."""
    if not 0 <= label < logits.shape[0]:
        raise DataError(f"label {label} out of range for {logits.shape[0]} classes")
    p = softmax(logits, axis=0)
    loss = -float(np.log(max(p[label], 1e-300)))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, dlogits


@dataclass
class ToyNet:
    """SCB -> AWD -> SCB -> AWD -> GAP -> FC classifier."""

    scb1: ScbParams
    awd1: AwdParams
    scb2: ScbParams
    awd2: AwdParams
    fc_w: np.ndarray
    fc_b: np.ndarray

    @classmethod
    def init(cls, num_classes: int = 4, seed: int = 0, in_channels: int = 3,
             widths: tuple = (8, 16)) -> "ToyNet":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(77,)))
        w1, w2 = widths
        scb1 = ScbParams.init(in_channels, w1, rng=rng)
        awd1 = AwdParams.init(w1, kernel_size=3, stride=2, reduction=4, rng=rng)
        scb2 = ScbParams.init(w1, w2, rng=rng)
        awd2 = AwdParams.init(w2, kernel_size=3, stride=2, reduction=4, rng=rng)
        fc_w = rng.normal(0.0, 1.0 / np.sqrt(w2), size=(num_classes, w2))
        fc_b = np.zeros(num_classes)
        return cls(scb1, awd1, scb2, awd2, fc_w, fc_b)

    # parameter registry: fixed order makes SGD and gradient checks stable
    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("scb1.w3", self.scb1.w3), ("scb1.w1", self.scb1.w1),
            ("scb1.logits", self.scb1.sconv_logits),
            ("awd1.local", self.awd1.local_logit_weights),
            ("awd1.fc1", self.awd1.temp_fc1), ("awd1.fc2", self.awd1.temp_fc2),
            ("scb2.w3", self.scb2.w3), ("scb2.w1", self.scb2.w1),
            ("scb2.logits", self.scb2.sconv_logits),
            ("awd2.local", self.awd2.local_logit_weights),
            ("awd2.fc1", self.awd2.temp_fc1), ("awd2.fc2", self.awd2.temp_fc2),
            ("fc.w", self.fc_w), ("fc.b", self.fc_b),
        ]

    def set_param(self, name: str, value: np.ndarray) -> None:
        target = {
            "scb1.w3": (self.scb1, "w3"), "scb1.w1": (self.scb1, "w1"),
            "scb1.logits": (self.scb1, "sconv_logits"),
            "awd1.local": (self.awd1, "local_logit_weights"),
            "awd1.fc1": (self.awd1, "temp_fc1"), "awd1.fc2": (self.awd1, "temp_fc2"),
            "scb2.w3": (self.scb2, "w3"), "scb2.w1": (self.scb2, "w1"),
            "scb2.logits": (self.scb2, "sconv_logits"),
            "awd2.local": (self.awd2, "local_logit_weights"),
            "awd2.fc1": (self.awd2, "temp_fc1"), "awd2.fc2": (self.awd2, "temp_fc2"),
            "fc.w": (self, "fc_w"), "fc.b": (self, "fc_b"),
        }[name]
        setattr(target[0], target[1], np.ascontiguousarray(value, dtype=np.float64))

    def forward(self, x):
        """Returns (logits, stage features, cache)."""
        y1, c1 = scb_forward_train(x, self.scb1)
        d1, _, a1 = awd_forward(y1, self.awd1)
        y2, c2 = scb_forward_train(d1, self.scb2)
        d2, _, a2 = awd_forward(y2, self.awd2)
        pooled = global_avg_pool(d2)
        logits = fully_connected(pooled, self.fc_w, self.fc_b)
        cache = {"c1": c1, "a1": a1, "c2": c2, "a2": a2,
                 "pooled": pooled, "d2_shape": d2.shape}
        return logits, [d1, d2], cache

    def backward(self, cache, dlogits, dstages=None) -> dict:
        """Accumulates gradients for every parameter; dstages maps stage id
        to the gradient flowing directly into that stage's features."""
        dstages = dstages or {}
        grads = {}
        grads["fc.w"] = np.outer(dlogits, cache["pooled"])
        grads["fc.b"] = np.asarray(dlogits, dtype=np.float64).copy()
        dpooled = self.fc_w.T @ dlogits
        dd2 = global_avg_pool_backward(cache["d2_shape"], dpooled)
        if 1 in dstages:
            dd2 = dd2 + dstages[1]
        dy2, awd2_g = awd_backward(cache["a2"], dd2)
        dd1, dw3_2, dw1_2, dlog_2 = scb_backward(cache["c2"], dy2)
        if 0 in dstages:
            dd1 = dd1 + dstages[0]
        dy1, awd1_g = awd_backward(cache["a1"], dd1)
        dx, dw3_1, dw1_1, dlog_1 = scb_backward(cache["c1"], dy1)
        grads.update({
            "scb1.w3": dw3_1, "scb1.w1": dw1_1, "scb1.logits": dlog_1,
            "awd1.local": awd1_g.local_logit_weights,
            "awd1.fc1": awd1_g.temp_fc1, "awd1.fc2": awd1_g.temp_fc2,
            "scb2.w3": dw3_2, "scb2.w1": dw1_2, "scb2.logits": dlog_2,
            "awd2.local": awd2_g.local_logit_weights,
            "awd2.fc1": awd2_g.temp_fc1, "awd2.fc2": awd2_g.temp_fc2,
        })
        return grads

    def stage_features(self, x) -> list[np.ndarray]:
        _, stages, _ = self.forward(x)
        return stages


def _accumulate(total: dict, part: dict) -> None:
    for name, g in part.items():
        if name in total:
            total[name] += g
        else:
            total[name] = g.copy()


def dsl_loss(net: ToyNet, batch: PairBatch, cfg: DslConfig) -> tuple[float, dict]:
    """Mean composite loss over the batch and gradients for all parameters.

    The disturbance term backpropagates into the clean and the noisy
    branch alike.
    """
    if len(batch) == 0:
        raise DataError("dsl_loss: empty batch")
    b = len(batch)
    scale = 1.0 / b
    total_loss = 0.0
    grads: dict = {}
    for n in range(b):
        logits_c, stages_c, cache_c = net.forward(batch.clean[n])
        logits_n, stages_n, cache_n = net.forward(batch.noisy[n])
        label = int(batch.labels[n])
        ce_c, dlog_c = cross_entropy(logits_c, label)
        ce_n, dlog_n = cross_entropy(logits_n, label)
        d_sel = disturbance([stages_c[i] for i in cfg.stage_ids],
                            [stages_n[i] for i in cfg.stage_ids])
        total_loss += scale * (ce_c + cfg.alpha * ce_n + cfg.beta * d_sel)

        dstages_c = {}
        dstages_n = {}
        if cfg.beta != 0.0:
            for i in cfg.stage_ids:
                diff = stages_c[i] - stages_n[i]
                dstages_c[i] = 2.0 * cfg.beta * scale * diff
                dstages_n[i] = -2.0 * cfg.beta * scale * diff
        _accumulate(grads, net.backward(cache_c, scale * dlog_c, dstages_c))
        _accumulate(grads, net.backward(cache_n, cfg.alpha * scale * dlog_n, dstages_n))
    return total_loss, grads


def apply_sgd(net: ToyNet, grads: dict, lr: float) -> None:
    from llraw.tensor import sgd_step

    names = [name for name, _ in net.param_items()]
    params = [p for _, p in net.param_items()]
    updated = sgd_step(params, [grads[n] for n in names], lr)
    for name, value in zip(names, updated):
        net.set_param(name, value)


def evaluate(net: ToyNet, pairs: PairBatch, stage_ids=(0, 1)) -> dict:
    """Holdout metrics: accuracy on both branches plus mean disturbance."""
    if len(pairs) == 0:
        raise DataError("evaluate: empty pair set")
    correct_c = correct_n = 0
    total_d = 0.0
    for n in range(len(pairs)):
        logits_c, stages_c, _ = net.forward(pairs.clean[n])
        logits_n, stages_n, _ = net.forward(pairs.noisy[n])
        label = int(pairs.labels[n])
        correct_c += int(np.argmax(logits_c) == label)
        correct_n += int(np.argmax(logits_n) == label)
        total_d += disturbance([stages_c[i] for i in stage_ids],
                               [stages_n[i] for i in stage_ids])
    b = len(pairs)
    return {
        "clean_acc": correct_c / b,
        "noisy_acc": correct_n / b,
        "mean_disturbance": total_d / b,
    }


def eval_disturbance(net: ToyNet, pairs: PairBatch, stage_ids=(0, 1)) -> float:
    """Mean disturbance over a paired stream at the configured stages."""
    if len(pairs) == 0:
        raise DataError("eval_disturbance: empty pair stream")
    total = 0.0
    for n in range(len(pairs)):
        total += disturbance(
            [f for i, f in enumerate(net.stage_features(pairs.clean[n])) if i in stage_ids],
            [f for i, f in enumerate(net.stage_features(pairs.noisy[n])) if i in stage_ids],
        )
    return total / len(pairs)


def train_toy(train: PairBatch, cfg: DslConfig, holdout: PairBatch | None = None):
    """SGD training loop; returns (net, metric rows).

    Rows carry epoch, clean_acc, noisy_acc, mean_disturbance (on the
    holdout set, or the training set when no holdout is given) and the
    mean training loss of the epoch. Everything is seeded: init, data
    order, and the noise already baked into the pairs.
    """
    if len(train) == 0:
        raise DataError("train_toy: empty dataset")
    eval_pairs = holdout if holdout is not None and len(holdout) else train
    net = ToyNet.init(num_classes=cfg.num_classes, seed=cfg.seed)
    order_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                             spawn_key=(101,)))
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), cfg.batch_size):
            batch = train.subset(order[start : start + cfg.batch_size])
            loss, grads = dsl_loss(net, batch, cfg)
            apply_sgd(net, grads, cfg.learning_rate)
            losses.append(loss)
        metrics = evaluate(net, eval_pairs, cfg.stage_ids)
        rows.append({
            "epoch": epoch,
            "clean_acc": metrics["clean_acc"],
            "noisy_acc": metrics["noisy_acc"],
            "mean_disturbance": metrics["mean_disturbance"],
            "loss": float(np.mean(losses)),
        })
    return net, rows
