"""Loss functions as plain numpy operations, each paired with its analytic
gradient.

* ``focal_loss`` - frame-wise error-timestamp objective
* ``timestamp_mse`` - squared error (used for the quality score head)
* ``token_ce`` - token-level cross entropy
* ``total_loss`` - the unweighted sum of the three
* ``dpo_loss`` / ``masked_dpo_loss`` - diffusion preference objective on
  already-noised residuals, full-utterance and restricted to erroneous frames
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

from .errors import (EmptyInput, EmptyMask, IndexOutOfRange, InvalidDistribution, LengthMismatch,
                     NegativeLoss, NonFiniteValue, NonPositiveBeta)

PROB_EPS = 1e-7
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def _focal_parts(probs, labels):
    p, y = _pair(probs, labels)
    if p.size == 0:
        raise EmptyInput("no frames")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    pt = np.where(y == 1, pc, 1.0 - pc)
    return p, y, pt


def focal_loss(probs, labels, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA) -> float:
    """Mean of ``-alpha * (1 - p_t)**gamma * log(p_t)`` over frames."""
    if gamma < 0 or not 0 < alpha <= 1:
        raise ValueError("need gamma >= 0 and alpha in (0, 1]")
    _, _, pt = _focal_parts(probs, labels)
    return float(np.mean(-alpha * (1.0 - pt) ** gamma * np.log(pt)))


def focal_loss_grad(probs, labels, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA) -> np.ndarray:
    p, y, pt = _focal_parts(probs, labels)
    d_pt = -alpha * (1.0 - pt) ** gamma / pt
    if gamma != 0:
        d_pt = d_pt + alpha * gamma * (1.0 - pt) ** (gamma - 1.0) * np.log(pt)
    # zero gradient where the probability was clamped
    live = (p >= PROB_EPS) & (p <= 1.0 - PROB_EPS)
    return np.where(y == 1, 1.0, -1.0) * d_pt * live / p.size


def binary_cross_entropy(probs, labels) -> float:
    return focal_loss(probs, labels, gamma=0.0, alpha=1.0)


def binary_cross_entropy_grad(probs, labels) -> np.ndarray:
    p, y, pt = _focal_parts(probs, labels)
    live = (p >= PROB_EPS) & (p <= 1.0 - PROB_EPS)
    return np.where(y == 1, -1.0 / pt, 1.0 / pt) * live / p.size


def timestamp_mse(pred, labels) -> float:
    p, y = _pair(pred, labels)
    if p.size == 0:
        raise EmptyInput("no frames")
    return float(np.mean((p - y) ** 2))


def timestamp_mse_grad(pred, labels) -> np.ndarray:
    p, y = _pair(pred, labels)
    if p.size == 0:
        raise EmptyInput("no frames")
    return 2.0 * (p - y) / p.size


def _ce_parts(pred_dists, target_ids):
    d = np.asarray(pred_dists, dtype=float)
    t = np.asarray(target_ids)
    if d.ndim != 2 or t.shape != (d.shape[0],):
        raise LengthMismatch("need one distribution per target id")
    if d.shape[0] == 0:
        raise EmptyInput("no positions")
    if np.any(d < 0) or np.any(np.abs(d.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidDistribution("each row must be a probability distribution")
    if np.any(t < 0) or np.any(t >= d.shape[1]):
        raise IndexOutOfRange("target id outside vocabulary")
    rows = np.arange(d.shape[0])
    return d, t.astype(int), rows


def token_ce(pred_dists, target_ids) -> float:
    """Mean over positions of ``-log p(target)``."""
    d, t, rows = _ce_parts(pred_dists, target_ids)
    return float(np.mean(-np.log(np.clip(d[rows, t], PROB_EPS, 1.0))))


def token_ce_grad(pred_dists, target_ids) -> np.ndarray:
    """Gradient with respect to the probability entries."""
    d, t, rows = _ce_parts(pred_dists, target_ids)
    g = np.zeros_like(d)
    p = d[rows, t]
    g[rows, t] = np.where(p > PROB_EPS, -1.0 / np.maximum(p, PROB_EPS), 0.0) / d.shape[0]
    return g


@dataclass(frozen=True)
class LossBreakdown:
    l_mse: float
    l_frame: float
    l_ce: float
    total: float


def total_loss(l_mse: float, l_frame: float, l_ce: float,
               weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> LossBreakdown:
    """Composite objective; with the default weights the terms are summed as is."""
    terms = (l_mse, l_frame, l_ce)
    if any(v < 0 for v in terms):
        raise NegativeLoss(f"loss terms must be nonnegative, got {terms}")
    a, b, c = (w * v for w, v in zip(weights, terms))
    return LossBreakdown(a, b, c, a + b + c)


# ---------------------------------------------------------------------------
# preference objective

@dataclass(frozen=True, eq=False)
class DpoInputs:
    eps_w: np.ndarray
    eps_l: np.ndarray
    pred_theta_w: np.ndarray
    pred_theta_l: np.ndarray
    pred_ref_w: np.ndarray
    pred_ref_l: np.ndarray
    beta: float
    timestep: int = 0
    horizon: int = 1000
    frame_mask_w: np.ndarray | None = None
    frame_mask_l: np.ndarray | None = None

    VECTORS = ("eps_w", "eps_l", "pred_theta_w", "pred_theta_l", "pred_ref_w", "pred_ref_l")

    def __post_init__(self):
        for name in self.VECTORS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        lengths = {getattr(self, name).size for name in self.VECTORS}
        if len(lengths) != 1:
            raise LengthMismatch(f"residual vectors have differing lengths {sorted(lengths)}")
        n = lengths.pop()
        for name in ("frame_mask_w", "frame_mask_l"):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=bool).ravel()
                if m.size != n:
                    raise LengthMismatch(f"{name} has length {m.size}, expected {n}")
                object.__setattr__(self, name, m)
        if not self.beta > 0:
            raise NonPositiveBeta(f"beta must be positive, got {self.beta}")
        if not 0 <= self.timestep < self.horizon:
            raise ValueError(f"timestep {self.timestep} outside [0, {self.horizon})")

    def replace(self, **changes) -> "DpoInputs":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return DpoInputs(**kw)

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).tolist() for name in self.VECTORS}
        out.update(beta=self.beta, timestep=self.timestep, horizon=self.horizon)
        for name in ("frame_mask_w", "frame_mask_l"):
            m = getattr(self, name)
            out[name] = None if m is None else m.tolist()
        return out


def _branch_weights(inputs: DpoInputs, masked: bool):
    n = inputs.eps_w.size
    if not masked:
        return np.ones(n), np.ones(n)
    out = []
    for m in (inputs.frame_mask_w, inputs.frame_mask_l):
        if m is None or not m.any():
            raise EmptyMask("masked objective needs at least one selected frame per branch")
        out.append(m / m.sum())
    return tuple(out)


def _inner(inputs: DpoInputs, ww, wl) -> float:
    def sq(eps, pred, w):
        return float(np.sum(w * (eps - pred) ** 2))

    win = sq(inputs.eps_w, inputs.pred_theta_w, ww) - sq(inputs.eps_w, inputs.pred_ref_w, ww)
    lose = sq(inputs.eps_l, inputs.pred_theta_l, wl) - sq(inputs.eps_l, inputs.pred_ref_l, wl)
    return -0.5 * inputs.beta * (win - lose)


def _dpo(inputs: DpoInputs, masked: bool) -> float:
    ww, wl = _branch_weights(inputs, masked)
    return float(np.logaddexp(0.0, -_inner(inputs, ww, wl)))


def _dpo_grad(inputs: DpoInputs, masked: bool) -> dict[str, np.ndarray]:
    ww, wl = _branch_weights(inputs, masked)
    a = _inner(inputs, ww, wl)
    dl_da = -expit(-a)
    b = inputs.beta
    ew, el = inputs.eps_w, inputs.eps_l
    tw, tl = inputs.pred_theta_w, inputs.pred_theta_l
    rw, rl = inputs.pred_ref_w, inputs.pred_ref_l
    return {
        "pred_theta_w": dl_da * b * ww * (ew - tw),
        "pred_ref_w": -dl_da * b * ww * (ew - rw),
        "eps_w": -dl_da * b * ww * (rw - tw),
        "pred_theta_l": -dl_da * b * wl * (el - tl),
        "pred_ref_l": dl_da * b * wl * (el - rl),
        "eps_l": dl_da * b * wl * (rl - tl),
    }


def dpo_loss(inputs: DpoInputs) -> float:
    """``-log sigmoid(-beta/2 * ((winner policy - reference sq. error) - (same for loser)))``."""
    return _dpo(inputs, masked=False)


def dpo_loss_grad(inputs: DpoInputs) -> dict[str, np.ndarray]:
    return _dpo_grad(inputs, masked=False)


def masked_dpo_loss(inputs: DpoInputs) -> float:
    """Preference loss restricted to masked frames.

    Each branch's squared errors are averaged over that branch's selected
    frames, so segments of different sizes contribute on the same scale.
    """
    return _dpo(inputs, masked=True)


def masked_dpo_loss_grad(inputs: DpoInputs) -> dict[str, np.ndarray]:
    return _dpo_grad(inputs, masked=True)


def grad_check(loss_fn: Callable[[np.ndarray], float], grad_fn: Callable[[np.ndarray], np.ndarray],
               x, epsilon: float = 1e-6, floor: float = 1e-7) -> float:
    """Max elementwise relative gap between ``grad_fn(x)`` and central differences.

    The relative error of component ``k`` is ``|a_k - n_k| / max(|a_k|, |n_k|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    x = np.array(x, dtype=float)
    analytic = np.asarray(grad_fn(x.copy()), dtype=float).reshape(x.shape)
    numeric = np.empty_like(x)
    flat, out = x.reshape(-1), numeric.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + epsilon
        up = loss_fn(x.copy())
        flat[k] = orig - epsilon
        down = loss_fn(x.copy())
        flat[k] = orig
        out[k] = (up - down) / (2.0 * epsilon)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NonFiniteValue("gradient contains non-finite values")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0


def dpo_grad_check(inputs: DpoInputs, wrt: str, masked: bool = False, epsilon: float = 1e-6) -> float:
    """:func:`grad_check` of the (masked) preference loss against one residual vector."""
    loss = masked_dpo_loss if masked else dpo_loss
    grad = masked_dpo_loss_grad if masked else dpo_loss_grad

    def f(v):
        return loss(inputs.replace(**{wrt: v}))

    def g(v):
        return grad(inputs.replace(**{wrt: v}))[wrt]

    return grad_check(f, g, getattr(inputs, wrt), epsilon)


LOSS_GRADIENTS: Mapping[str, tuple[Callable, Callable]] = {
    "focal": (focal_loss, focal_loss_grad),
    "bce": (binary_cross_entropy, binary_cross_entropy_grad),
    "timestamp_mse": (timestamp_mse, timestamp_mse_grad),
    "token_ce": (token_ce, token_ce_grad),
}
