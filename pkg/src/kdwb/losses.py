"""Cross-entropy primitives and the combined distillation objective.

The objective for a student posterior ``P_S`` is::

    L = H(P_T, P_S) + beta * H(y_true, P_S)

with ``H(p, q) = -sum_i p_i log q_i``. Without labels only the first term is
used. Matrices are reduced by the arithmetic mean over rows.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-12
DEFAULT_BETA = 0.5


def _check_prob(name, p, atol=1e-6):
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError(f"{name} has entries outside [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, atol=atol):
        raise ValueError(f"{name} rows do not sum to 1")


def cross_entropy(target, pred) -> float:
    """``-sum(target * log(max(pred, 1e-12)))``, batch-averaged for matrices."""
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: target {t.shape} vs pred {p.shape}")
    per_row = -(t * np.log(np.maximum(p, EPS))).sum(axis=-1)
    return float(per_row.mean()) if per_row.ndim else float(per_row)


def kd_objective(p_teacher, p_student, y_true=None, beta: float = DEFAULT_BETA) -> float:
    """Distillation loss; the supervised term is dropped when ``y_true`` is None."""
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    loss = cross_entropy(p_teacher, p_student)
    if y_true is None:
        return loss
    y = np.asarray(y_true, dtype=np.float64)
    if y.shape != np.shape(p_student):
        raise ValueError(f"y_true shape {y.shape} != student shape {np.shape(p_student)}")
    _check_prob("y_true", y)
    return loss + beta * cross_entropy(y, p_student)


def uniform_target(k: int) -> np.ndarray:
    if k < 1:
        raise ValueError(f"number of classes must be positive, got {k}")
    return np.full(k, 1.0 / k)


def kd_loss_and_logit_grad(p_teacher, p_student, y_true=None, beta=0.0,
                           temperature: float = 1.0):
    """Batch-mean objective and its gradient w.r.t. the student logits.

    Per row, with ``P_S = softmax(z / T)`` and targets summing to one::

        dL/dz = ((1 + beta) * P_S - P_T - beta * y) / T

    divided by the batch size. The unclamped gradient is used; the clamp only
    guards the reported loss value against log(0).
    """
    pt = np.asarray(p_teacher)
    ps = np.asarray(p_student)
    n = ps.shape[0]
    if y_true is None or beta == 0:
        loss = cross_entropy(pt, ps)
        grad = ps - pt
    else:
        loss = cross_entropy(pt, ps) + beta * cross_entropy(y_true, ps)
        grad = (1 + beta) * ps - pt - beta * np.asarray(y_true, dtype=ps.dtype)
    return loss, grad / (n * temperature)
