"""Core math for preference-driven query adaptation.

A query embedding is scored against candidate embeddings by dot product.
Pairwise human preferences (winner over loser) are modeled with the
Bradley-Terry logistic, whose negative log-likelihood has a closed-form
gradient in the query vector; gradient steps pull the query toward winners
and away from losers without touching any encoder.

All functions here are pure: no global state, no hidden randomness, and
identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "FIRST",
    "SECOND",
    "Embedding",
    "PreferencePair",
    "AdaptConfig",
    "BTOutcome",
    "StepRecord",
    "AdaptTrace",
    "normalize",
    "similarity",
    "bt_probability",
    "pair_outcome",
    "batch_loss",
    "batch_gradient",
    "adapt_step",
    "adapt",
    "positive_adapt",
    "predict_preferred",
    "rank_candidates",
    "finite_diff_grad",
]

FIRST = "first"
SECOND = "second"

# Probabilities are clamped into the open interval (0, 1) so that a saturated
# logistic never returns an exact 0.0 or 1.0 that would break downstream logs.
_P_MIN = float(np.finfo(np.float64).tiny)
_P_MAX = float(np.nextafter(1.0, 0.0))

_UNIT_NORM_TOL = 1e-6


def _as_vector(values, label: str = "vector") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"{label} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise DomainError(f"{label} must have at least one component")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise DomainError(f"{label} has non-finite component at index {bad}")
    return arr


@dataclass(frozen=True)
class Embedding:
    """A d-dimensional real vector, optionally flagged as unit ℓ2 norm.

    ``values`` is stored as a read-only float64 copy; all components must be
    finite. When ``unit_norm`` is set, the norm must be within 1e-6 of 1.
    """

    values: np.ndarray
    unit_norm: bool = False

    def __post_init__(self):
        arr = _as_vector(self.values, "embedding")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.unit_norm:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > _UNIT_NORM_TOL:
                raise DomainError(
                    f"embedding flagged unit-norm has norm {norm!r}"
                )

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class PreferencePair:
    """An observed comparison: ``winner`` was preferred over ``loser``.

    Both sides must share one dimension. Equal *values* are legal (two items
    can embed identically); identity of the underlying items is enforced
    where ids exist, at ingestion.
    """

    winner: Embedding
    loser: Embedding

    def __post_init__(self):
        if self.winner.dim != self.loser.dim:
            raise DomainError(
                f"winner and loser dimensions differ: {self.winner.dim} vs {self.loser.dim}"
            )

    @property
    def dim(self) -> int:
        return self.winner.dim


@dataclass(frozen=True)
class AdaptConfig:
    """Hyperparameters for the adaptation update.

    epsilon
        Gradient-step learning rate. Zero is allowed and makes every update
        the identity, which is occasionally useful as a control.
    steps
        Number of full-batch gradient steps applied per call.
    temperature
        Positive multiplier on similarities before the logistic. 1.0 keeps
        raw dot products; larger values sharpen probabilities without ever
        changing which side is predicted.
    renormalize
        Project the query back to unit norm after each step. The gradient is
        always taken on the unconstrained loss; this is a post-step
        projection only.
    """

    epsilon: float = 0.1
    steps: int = 1
    temperature: float = 1.0
    renormalize: bool = True

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise DomainError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if not math.isfinite(self.temperature) or self.temperature <= 0:
            raise DomainError(f"temperature must be finite and > 0, got {self.temperature!r}")
        if self.steps < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps!r}")


@dataclass(frozen=True)
class BTOutcome:
    """Probability, loss, and query gradient for one preference pair."""

    win_probability: float
    loss: float
    gradient: np.ndarray


@dataclass(frozen=True)
class StepRecord:
    """Observability record for one gradient step."""

    loss_before: float
    gradient_norm: float
    post_step_norm: float


@dataclass(frozen=True)
class AdaptTrace:
    """Per-step records of a multi-step adaptation plus the final query."""

    steps: tuple[StepRecord, ...]
    final: Embedding


def _sigmoid(z: float) -> float:
    # Stable in both tails; exp() never sees a positive overflow argument.
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softplus(z: float) -> float:
    # log(1 + e^z) without overflow: softplus(z) = max(z, 0) + log1p(e^-|z|)
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def normalize(values, label: str = "vector") -> Embedding:
    """Scale ``values`` to unit ℓ2 norm.

    Raises DomainError on zero-norm or non-finite input; ``label`` names the
    offending vector in the message.
    """
    arr = _as_vector(values, label)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DomainError(f"{label} has zero norm and cannot be normalized")
    return Embedding(arr / norm, unit_norm=True)


def similarity(x: Embedding, y: Embedding) -> float:
    """Dot-product similarity between two embeddings of equal dimension."""
    if x.dim != y.dim:
        raise DomainError(f"dimension mismatch: {x.dim} vs {y.dim}")
    return float(np.dot(x.values, y.values))


def bt_probability(score_first: float, score_second: float, temperature: float = 1.0) -> float:
    """Bradley-Terry probability that the first item beats the second.

    Computed in the overflow-safe form sigmoid(temperature * (s1 - s2)) and
    clamped strictly inside (0, 1) so the result is always log-safe.
    """
    if not (math.isfinite(score_first) and math.isfinite(score_second)):
        raise DomainError("scores must be finite")
    if not math.isfinite(temperature) or temperature <= 0:
        raise DomainError(f"temperature must be finite and > 0, got {temperature!r}")
    p = _sigmoid(temperature * (score_first - score_second))
    return min(max(p, _P_MIN), _P_MAX)


def _pair_eval(
    x: np.ndarray, winner: np.ndarray, loser: np.ndarray, temperature: float
) -> tuple[float, float, np.ndarray]:
    """(win probability, loss, gradient) of one pair at query ``x``."""
    z = temperature * float(np.dot(x, winner) - np.dot(x, loser))
    p = min(max(_sigmoid(z), _P_MIN), _P_MAX)
    loss = _softplus(-z)
    grad = (p - 1.0) * temperature * (winner - loser)
    return p, loss, grad


def pair_outcome(x: Embedding, pair: PreferencePair, config: AdaptConfig) -> BTOutcome:
    """Probability, negative log-likelihood, and query gradient for one pair.

    The gradient is that of the unconstrained loss; renormalization never
    enters the differentiation.
    """
    if x.dim != pair.dim:
        raise DomainError(f"dimension mismatch: {x.dim} vs {pair.dim}")
    p, loss, grad = _pair_eval(
        x.values, pair.winner.values, pair.loser.values, config.temperature
    )
    grad.setflags(write=False)
    return BTOutcome(win_probability=p, loss=loss, gradient=grad)


def _batch_eval(
    x: np.ndarray, pairs: Sequence[PreferencePair], config: AdaptConfig, dim: int
) -> tuple[float, np.ndarray]:
    """Mean loss and mean gradient over a nonempty batch of pairs."""
    if len(pairs) == 0:
        raise DomainError("pair list must be nonempty")
    total_loss = 0.0
    total_grad = np.zeros(dim)
    for pair in pairs:
        if pair.dim != dim:
            raise DomainError(f"dimension mismatch: {dim} vs {pair.dim}")
        _, loss, grad = _pair_eval(
            x, pair.winner.values, pair.loser.values, config.temperature
        )
        total_loss += loss
        total_grad += grad
    n = len(pairs)
    return total_loss / n, total_grad / n


def batch_loss(x: Embedding, pairs: Sequence[PreferencePair], config: AdaptConfig) -> float:
    """Arithmetic mean of per-pair losses."""
    loss, _ = _batch_eval(x.values, pairs, config, x.dim)
    return loss


def batch_gradient(x: Embedding, pairs: Sequence[PreferencePair], config: AdaptConfig) -> np.ndarray:
    """Mean of per-pair gradients (equals the gradient of the mean loss)."""
    _, grad = _batch_eval(x.values, pairs, config, x.dim)
    return grad


def _apply_step(x: Embedding, grad: np.ndarray, config: AdaptConfig) -> Embedding:
    step = config.epsilon * grad
    if not step.any():
        # Identity update: keep the input bit-for-bit, skipping the
        # renormalization projection, which would otherwise perturb a
        # generic unit vector by an ulp.
        return x
    moved = x.values - step
    if config.renormalize:
        norm = float(np.linalg.norm(moved))
        if norm == 0.0:
            raise DomainError("degenerate step: update produced a zero vector")
        return Embedding(moved / norm, unit_norm=True)
    return Embedding(moved)


def adapt_step(x: Embedding, pairs: Sequence[PreferencePair], config: AdaptConfig) -> Embedding:
    """One full-batch gradient step on the preference loss.

    Moves the query by -epsilon times the batch gradient, then optionally
    projects back to unit norm. A zero update (epsilon 0 or zero gradient)
    returns the input unchanged.
    """
    _, grad = _batch_eval(x.values, pairs, config, x.dim)
    return _apply_step(x, grad, config)


def adapt(x: Embedding, pairs: Sequence[PreferencePair], config: AdaptConfig) -> tuple[Embedding, AdaptTrace]:
    """Apply ``config.steps`` full-batch gradient steps, recording each one.

    Deterministic: running T steps equals running the same steps in any
    split (e.g. 3 then 4 from the intermediate query) bit-for-bit.
    """
    current = x
    records = []
    for _ in range(config.steps):
        loss, grad = _batch_eval(current.values, pairs, config, current.dim)
        current = _apply_step(current, grad, config)
        records.append(
            StepRecord(
                loss_before=loss,
                gradient_norm=float(np.linalg.norm(grad)),
                post_step_norm=current.norm(),
            )
        )
    return current, AdaptTrace(steps=tuple(records), final=current)


def positive_adapt(x: Embedding, positives: Sequence[Embedding], config: AdaptConfig) -> Embedding:
    """Positive-only baseline: step toward the mean of preferred embeddings.

    Each of ``config.steps`` steps adds epsilon times the mean positive
    vector (one step is the plain similarity-maximization rule), with the
    same optional renormalization as the gradient path.
    """
    if len(positives) == 0:
        raise DomainError("positives list must be nonempty")
    for pos in positives:
        if pos.dim != x.dim:
            raise DomainError(f"dimension mismatch: {x.dim} vs {pos.dim}")
    mean = np.mean([pos.values for pos in positives], axis=0)
    current = x
    for _ in range(config.steps):
        # Reuse the gradient-step projection with gradient = -mean.
        current = _apply_step(current, -mean, config)
    return current


def predict_preferred(x: Embedding, first: Embedding, second: Embedding, temperature: float = 1.0) -> str:
    """Which of two candidates the query prefers: ``"first"`` or ``"second"``.

    Returns first iff s(x, first) > s(x, second); an exact tie goes to
    first, deterministically. The choice is invariant to ``temperature`` and
    to any strictly increasing transform of both similarities.
    """
    s1 = similarity(x, first)
    s2 = similarity(x, second)
    return FIRST if s1 >= s2 else SECOND


def rank_candidates(
    x: Embedding, candidates: Iterable[tuple[str, Embedding]]
) -> list[tuple[str, float]]:
    """Candidates ordered by descending similarity to the query.

    Ties break by ascending id, so the output is deterministic and invariant
    to the input order. An empty candidate list yields an empty result.
    """
    scored = []
    for cid, emb in candidates:
        scored.append((cid, similarity(x, emb)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def finite_diff_grad(
    x: Embedding, pair: PreferencePair, config: AdaptConfig, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of the pair loss, one coordinate at a time.

    This is the verification oracle for the closed-form gradient: it only
    evaluates the unconstrained loss at perturbed queries and never touches
    the analytic formula.
    """
    if not math.isfinite(step) or step <= 0:
        raise DomainError(f"step must be finite and > 0, got {step!r}")
    if x.dim != pair.dim:
        raise DomainError(f"dimension mismatch: {x.dim} vs {pair.dim}")
    base = x.values
    winner = pair.winner.values
    loser = pair.loser.values
    tau = config.temperature
    grad = np.empty(x.dim)
    for i in range(x.dim):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        loss_plus = _softplus(-tau * float(np.dot(plus, winner) - np.dot(plus, loser)))
        loss_minus = _softplus(-tau * float(np.dot(minus, winner) - np.dot(minus, loser)))
        grad[i] = (loss_plus - loss_minus) / (2.0 * step)
    return grad
