"""Training loops: supervised teacher training, data-free distillation and
augmented distillation, plus evaluation and the flat-loss stopping rule."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import Dataset, mix_augment
from .engine import Network, ShapeError, sgd_step
from .losses import DEFAULT_BETA, kd_loss_and_logit_grad

log = logging.getLogger("kdwb")


class TrainingError(RuntimeError):
    """A training-time invariant was violated (non-finite loss, ...)."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    max_epochs: int = 100
    beta: float = DEFAULT_BETA
    temperature: float = 1.0
    stop_tol: float = 1e-4
    stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        # lr = 0 is allowed: a null-training run measures the random-init baseline
        if not self.lr >= 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.stop_patience < 1:
            raise ValueError("batch_size, max_epochs and stop_patience must be >= 1")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_acc: float
    seconds: float


@dataclass
class RunMetrics:
    records: List[EpochRecord] = field(default_factory=list)
    model: Optional[Network] = None
    stopped_early: bool = False

    @property
    def losses(self):
        return [r.train_loss for r in self.records]

    @property
    def accuracies(self):
        return [r.test_acc for r in self.records]

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].test_acc

    @property
    def best_accuracy(self) -> float:
        return max(self.accuracies)

    def __len__(self):
        return len(self.records)


def should_stop(loss_history, tol: float, patience: int) -> bool:
    """True when the last ``patience`` epoch-to-epoch relative loss changes
    are all below ``tol``."""
    if len(loss_history) < patience + 1:
        return False
    tail = loss_history[-(patience + 1):]
    for prev, cur in zip(tail[:-1], tail[1:]):
        if abs(cur - prev) / max(prev, 1e-12) >= tol:
            return False
    return True


def evaluate(model: Network, test: Dataset, batch_size: int = 256):
    """(accuracy, error_count) of argmax predictions; ties go to the lowest class."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if test.labels is None or not test.is_labeled:
        raise ValueError(f"test set {test.name!r} is not fully labeled")
    probs = model.predict(test.images, batch_size=batch_size)
    correct = int(np.count_nonzero(probs.argmax(axis=1) == test.hard_labels))
    n = len(test)
    return correct / n, n - correct


def cache_soft_labels(teacher: Network, stimulus: Dataset, temperature: float = 1.0,
                      batch_size: int = 256) -> np.ndarray:
    """Teacher posteriors on every stimulus sample (inference mode, input order)."""
    if stimulus.shape != teacher.input_shape:
        raise ShapeError(f"stimulus shape {stimulus.shape} != teacher input {teacher.input_shape}")
    return teacher.predict(stimulus.images, temperature, batch_size).astype(np.float64)


def _fit(net: Network, images, soft_targets, hard_targets, beta, test, cfg: TrainConfig,
         tag: str) -> RunMetrics:
    """Mini-batch SGD on the batch-mean of H(soft, P_S) + beta*H(hard, P_S).

    ``soft_targets`` or ``hard_targets`` may be None (term dropped).
    """
    n = len(images)
    rng = np.random.default_rng(cfg.seed)
    metrics = RunMetrics(model=net)
    net.zero_grad()
    for t in net.parameters():
        t.velocity = None
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            ps = net.forward(images[idx], cfg.temperature, grad=True)
            if soft_targets is None:
                loss, g = kd_loss_and_logit_grad(hard_targets[idx], ps, temperature=cfg.temperature)
            elif hard_targets is None:
                loss, g = kd_loss_and_logit_grad(soft_targets[idx], ps, temperature=cfg.temperature)
            else:
                loss, g = kd_loss_and_logit_grad(soft_targets[idx], ps, hard_targets[idx], beta,
                                                 cfg.temperature)
            if not np.isfinite(loss):
                raise TrainingError(f"{tag}: non-finite loss at epoch {epoch}")
            net.backward(g, wrt="logits")
            sgd_step(net, cfg.lr, cfg.momentum)
            total += loss * len(idx)
        mean_loss = total / n
        acc, errors = evaluate(net, test)
        elapsed = time.perf_counter() - start
        metrics.records.append(EpochRecord(epoch, mean_loss, acc, elapsed))
        log.info("%s epoch %d loss %.6f test_acc %.4f errors %d (%.1fs)",
                 tag, epoch, mean_loss, acc, errors, elapsed)
        if should_stop(metrics.losses, cfg.stop_tol, cfg.stop_patience):
            metrics.stopped_early = epoch < cfg.max_epochs
            break
    return metrics


def _check_classes(a: Network, b: Network):
    if a.num_classes != b.num_classes:
        raise ValueError(f"class counts differ: {a.num_classes} vs {b.num_classes}")


def train_teacher(net: Network, train: Dataset, test: Dataset, cfg: TrainConfig):
    """Hard-label cross-entropy training. Returns (net, metrics)."""
    if not train.is_labeled:
        raise ValueError(f"training set {train.name!r} has unlabeled samples")
    if train.num_classes != net.num_classes:
        raise ValueError(f"dataset has {train.num_classes} classes, network {net.num_classes}")
    if train.shape != net.input_shape:
        raise ShapeError(f"training images {train.shape} != network input {net.input_shape}")
    metrics = _fit(net, train.images, None, train.labels, 0.0, test, cfg, "teacher")
    return net, metrics


def distill_data_free(teacher: Network, student: Network, stimulus: Dataset, test: Dataset,
                      cfg: TrainConfig):
    """Fit the student to cached teacher posteriors on unlabeled stimulus."""
    if len(stimulus) == 0:
        raise ValueError("empty stimulus")
    _check_classes(teacher, student)
    if stimulus.shape != student.input_shape:
        raise ShapeError(f"stimulus shape {stimulus.shape} != student input {student.input_shape}")
    soft = cache_soft_labels(teacher, stimulus, cfg.temperature)
    metrics = _fit(student, stimulus.images, soft, None, 0.0, test, cfg, "distill")
    return student, metrics


def distill_augmented(teacher: Network, student: Network, labeled: Dataset, stimulus: Dataset,
                      test: Dataset, cfg: TrainConfig):
    """Full objective on labeled data mixed with stimulus.

    Every sample contributes H(P_T, P_S); the supervised term uses the one-hot
    label for labeled samples and the uniform distribution for stimulus.
    """
    _check_classes(teacher, student)
    if labeled.labels is None:
        raise ValueError("labeled set has no labels")
    if len(labeled) and not labeled.is_labeled:
        raise ValueError("labeled set contains unlabeled samples")
    mixed = mix_augment(labeled, stimulus)
    if len(mixed) == 0:
        raise ValueError("no training samples")
    if mixed.shape != student.input_shape:
        raise ShapeError(f"training images {mixed.shape} != student input {student.input_shape}")
    soft = cache_soft_labels(teacher, mixed, cfg.temperature)
    metrics = _fit(student, mixed.images, soft, mixed.labels, cfg.beta, test, cfg, "augment")
    return student, metrics
