"""Plaintext generalized linear models matching the secure arithmetic.

The logistic loss is replaced by its second order expansion around zero so
its gradient is linear in the predictor and needs no secure nonlinearity.
The Poisson model keeps the exact exponential: each party can evaluate
exp on its own partial predictor locally, and the product of those factors
is the full exponential, so only multiplications cross party lines.  The
functions here are the single source of truth for that math; the secure
engine must agree with them up to fixed-point rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("logistic", "poisson")

# partial predictors are clipped before fixed-point encoding so a diverging
# run saturates instead of wrapping the ring; the Poisson clip is tighter
# because exp factors multiply across parties and must keep ring headroom
LOGISTIC_CLIP = 20.0
POISSON_CLIP = 4.0


def default_clip(family: str) -> float:
    return LOGISTIC_CLIP if family == "logistic" else POISSON_CLIP


@dataclass(frozen=True)
class GlmSpec:
    """Training configuration shared by the plaintext and secure trainers."""

    family: str
    learning_rate: float
    max_iterations: int = 30
    tolerance: float = 1e-4
    batch_size: int = 1024
    seed: int = 0
    predictor_clip: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @property
    def clip(self) -> float:
        if self.predictor_clip is not None:
            return self.predictor_clip
        return default_clip(self.family)


@dataclass
class TrainResult:
    weights: list[np.ndarray]
    losses: list[float]
    iterations: int
    stopped_early: bool


class BatchSchedule:
    """Deterministic sample-index stream shared by every party.

    All parties derive the same permutations from a common seed, so each
    one can slice its own feature block locally without negotiating batch
    membership over the wire.  A fresh permutation is drawn whenever fewer
    than a full batch of unseen indices remain.
    """

    def __init__(self, n_samples: int, batch_size: int, seed: int):
        if n_samples < 1:
            raise ValueError("need at least one sample")
        self.n_samples = n_samples
        self.batch_size = min(batch_size, n_samples)
        self._rng = np.random.default_rng(seed)
        self._order = self._rng.permutation(n_samples)
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n_samples:
            self._order = self._rng.permutation(self.n_samples)
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def partial_predictor(
    block: np.ndarray, weights: np.ndarray, clip: float
) -> np.ndarray:
    """One party's contribution to the linear predictor, clipped."""
    return np.clip(block @ weights, -clip, clip)


def logistic_predictor_gradient(wx: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the surrogate log loss with respect to the predictor.

    Labels are -1/+1; the surrogate is ln 2 - y*wx/2 + (wx)^2/8, so the
    derivative is linear in wx.
    """
    return wx / 4.0 - y / 2.0


def poisson_predictor_gradient(wx: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the Poisson negative log likelihood: exp(wx) - y."""
    return np.exp(wx) - y


def logistic_loss(wx: np.ndarray, y: np.ndarray) -> float:
    """Mean surrogate log loss for -1/+1 labels."""
    return float(np.mean(math.log(2.0) - y * wx / 2.0 + wx * wx / 8.0))


def log_factorial(y: np.ndarray) -> np.ndarray:
    """ln(y!) per element; y holds small non-negative counts."""
    return np.array([math.lgamma(v + 1.0) for v in np.asarray(y, dtype=float)])


def poisson_loss(wx: np.ndarray, y: np.ndarray) -> float:
    """Mean negative Poisson log likelihood."""
    return float(np.mean(np.exp(wx) - y * wx + log_factorial(y)))


def predictor_gradient(wx: np.ndarray, y: np.ndarray, family: str) -> np.ndarray:
    if family == "logistic":
        return logistic_predictor_gradient(wx, y)
    return poisson_predictor_gradient(wx, y)


def batch_loss(wx: np.ndarray, y: np.ndarray, family: str) -> float:
    if family == "logistic":
        return logistic_loss(wx, y)
    return poisson_loss(wx, y)


def feature_gradient(block: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Per-party weight gradient: average of the features weighted by d."""
    return block.T @ d / d.shape[0]


def weight_update(weights: np.ndarray, gradient: np.ndarray, learning_rate: float) -> np.ndarray:
    return weights - learning_rate * gradient


def predict_linear(blocks: list[np.ndarray], weights: list[np.ndarray]) -> np.ndarray:
    """Unclipped linear predictor over full feature blocks, for evaluation."""
    out = np.zeros(blocks[0].shape[0])
    for block, w in zip(blocks, weights):
        out += block @ w
    return out


def predict_mean(blocks: list[np.ndarray], weights: list[np.ndarray], family: str) -> np.ndarray:
    """Response-scale prediction: probability for logistic, rate for Poisson."""
    wx = predict_linear(blocks, weights)
    if family == "logistic":
        return 1.0 / (1.0 + np.exp(-wx))
    return np.exp(np.clip(wx, -LOGISTIC_CLIP, LOGISTIC_CLIP))


def reference_train(
    blocks: list[np.ndarray],
    labels: np.ndarray,
    spec: GlmSpec,
) -> TrainResult:
    """Train in the clear with the exact batch schedule the secure engine uses.

    Loss is evaluated on the current batch's predictor, which is formed
    before the weight step, matching the secure loop where predictor shares
    are distributed once per iteration and reused for both the gradient and
    the stop check.
    """
    m = labels.shape[0]
    if any(block.shape[0] != m for block in blocks):
        raise ValueError("feature blocks and labels disagree on sample count")
    weights = [np.zeros(block.shape[1]) for block in blocks]
    schedule = BatchSchedule(m, spec.batch_size, spec.seed)
    losses: list[float] = []
    stopped = False
    for _ in range(spec.max_iterations):
        idx = schedule.next_batch()
        yb = labels[idx]
        wx = np.zeros(idx.size)
        for block, w in zip(blocks, weights):
            wx += partial_predictor(block[idx], w, spec.clip)
        d = predictor_gradient(wx, yb, spec.family)
        loss = batch_loss(wx, yb, spec.family)
        for p, block in enumerate(blocks):
            weights[p] = weight_update(
                weights[p], feature_gradient(block[idx], d), spec.learning_rate
            )
        losses.append(loss)
        if len(losses) >= 2 and abs(losses[-1] - losses[-2]) <= spec.tolerance:
            stopped = True
            break
    return TrainResult(weights, losses, len(losses), stopped)
