"""Field-level confidence estimation over token traces.

Raw scores are per-token geometric-mean probabilities (the length-normalized
sequence probability of the tokens attributed to a field). A small logistic
calibration head maps entropy features to a calibrated probability of the
field being correct, and a threshold policy (fixed or quantile-tracking)
turns per-field scores into an accept/clarify decision.
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CalibrationError
from .goals import (
    DEFAULT_ESSENTIALS,
    EssentialSlotPolicy,
    GoalSpec,
    Intent,
    INTENT_FIELD,
    Provenance,
    Slot,
)
from .interpreter import TokenTrace

FEATURE_NAMES = (
    "mean_logprob",
    "min_logprob",
    "mean_entropy",
    "max_entropy",
    "token_count",
    "degraded",
)

DEFAULT_PRIOR = 0.9  # confidence assigned to provenance=default slots


def token_entropy(logprobs: Sequence[float]) -> float:
    """Shannon entropy (nats) of a renormalized top-k alternative distribution.

    Remote APIs expose truncated distributions, so the probabilities are
    renormalized over the alternatives actually present; a single alternative
    is therefore always entropy zero.
    """
    if len(logprobs) == 0:
        raise ValueError("token_entropy needs at least one alternative")
    for lp in logprobs:
        if lp > 1e-9:
            raise ValueError(f"log-probabilities must be <= 0, got {lp}")
    probs = np.exp(np.asarray(logprobs, dtype=np.float64))
    total = probs.sum()
    if total <= 0.0:
        return 0.0
    probs = probs / total
    nonzero = probs[probs > 0.0]
    return float(max(0.0, -(nonzero * np.log(nonzero)).sum()))


@dataclass(frozen=True)
class FieldFeatures:
    """Entropy heuristics for the tokens attributed to one field."""

    mean_logprob: float
    min_logprob: float
    mean_entropy: float
    max_entropy: float
    token_count: int
    degraded: bool = False

    def vector(self) -> np.ndarray:
        return np.array(
            [
                self.mean_logprob,
                self.min_logprob,
                self.mean_entropy,
                self.max_entropy,
                float(self.token_count),
                1.0 if self.degraded else 0.0,
            ],
            dtype=np.float64,
        )


def features_for_slot(trace: TokenTrace, slot_name: str) -> FieldFeatures | None:
    """Features over the tokens attributed to a slot; None when unattributed."""
    tokens = trace.slot_tokens(slot_name)
    if not tokens:
        return None
    logprobs = [t.logprob for t in tokens]
    entropies = [token_entropy([lp for _, lp in t.alternatives]) for t in tokens]
    return FieldFeatures(
        mean_logprob=float(np.mean(logprobs)),
        min_logprob=float(min(logprobs)),
        mean_entropy=float(np.mean(entropies)),
        max_entropy=float(max(entropies)),
        token_count=len(tokens),
        degraded=trace.degraded,
    )


def field_confidence(
    trace: TokenTrace, slot: Slot, default_prior: float = DEFAULT_PRIOR
) -> float:
    """Raw (uncalibrated) confidence for a slot.

    Model-provenance slots score exp(mean attributed log-probability), the
    per-token geometric mean probability. Clarified slots are certain by
    construction; default-provenance slots carry the configured prior.
    """
    if slot.provenance is Provenance.CLARIFIED:
        return 1.0
    if slot.provenance is Provenance.DEFAULT:
        return default_prior
    feats = features_for_slot(trace, slot.name)
    if feats is None:
        raise CalibrationError(
            f"model-provenance slot {slot.name!r} has no attributed tokens"
        )
    return float(math.exp(feats.mean_logprob))


# -- calibration head --------------------------------------------------------


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


@dataclass
class CalibrationHead:
    """Logistic map from entropy features to P(field parsed correctly)."""

    weights: np.ndarray
    bias: float = 0.0
    trained_on: int = 0
    version: int = 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(FEATURE_NAMES),):
            raise CalibrationError(
                f"expected {len(FEATURE_NAMES)} weights, got shape {self.weights.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise CalibrationError("head weights must be finite")

    @classmethod
    def zero(cls) -> "CalibrationHead":
        return cls(weights=np.zeros(len(FEATURE_NAMES)), bias=0.0)

    @classmethod
    def bootstrap(cls) -> "CalibrationHead":
        """Heuristic prior head used before any clarified corpus exists.

        Weighs the mean attributed log-probability so that sharply peaked
        tokens (p around 0.95) land near 0.9 and flat ones (p around 0.25)
        land near 0.01, approximating the raw geometric-mean score.
        """
        weights = np.zeros(len(FEATURE_NAMES))
        weights[FEATURE_NAMES.index("mean_logprob")] = 5.0
        return cls(weights=weights, bias=2.5)

    def score(self, features: FieldFeatures) -> float:
        phi = features.vector()
        if not np.all(np.isfinite(phi)):
            raise CalibrationError(f"non-finite features: {features}")
        z = float(self.weights @ phi + self.bias)
        # keep the output strictly inside (0, 1) even where sigma saturates
        return float(min(1.0 - 1e-12, max(1e-12, _sigmoid(z))))

    def save(self, path: str | Path) -> None:
        lines = [f"v = {self.version}", f"trained_on = {self.trained_on}", f"bias = {self.bias!r}"]
        lines.extend(
            f"w.{name} = {float(w)!r}" for name, w in zip(FEATURE_NAMES, self.weights)
        )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationHead":
        values: dict[str, str] = {}
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CalibrationError(f"bad head file line: {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        try:
            weights = [float(values[f"w.{name}"]) for name in FEATURE_NAMES]
            return cls(
                weights=np.array(weights),
                bias=float(values["bias"]),
                trained_on=int(values.get("trained_on", "0")),
                version=int(values.get("v", "1")),
            )
        except KeyError as exc:
            raise CalibrationError(f"head file missing key {exc}") from None


def calibrate(head: CalibrationHead, features: FieldFeatures) -> float:
    """Calibrated score in (0, 1); the all-zero head is maximally unsure (0.5)."""
    return head.score(features)


def logistic_loss(
    weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray
) -> float:
    """Mean cross-entropy of the logistic model on (X, y)."""
    z = X @ np.asarray(weights, dtype=np.float64) + bias
    # log(1 + exp(-|z|)) form keeps the loss finite for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss_and_gradient(
    weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Loss plus analytic gradients with respect to weights and bias."""
    z = X @ np.asarray(weights, dtype=np.float64) + bias
    p = _sigmoid(z)
    residual = p - y
    grad_w = X.T @ residual / len(y)
    grad_b = float(np.mean(residual))
    return logistic_loss(weights, bias, X, y), grad_w, grad_b


@dataclass(frozen=True)
class TrainingResult:
    head: CalibrationHead
    final_loss: float
    epochs: int


def train_head(
    examples: Sequence[tuple[FieldFeatures, bool]],
    epochs: int = 800,
    rate: float = 0.5,
) -> TrainingResult:
    """Fit the calibration head by full-batch gradient descent.

    Deterministic for fixed inputs: no shuffling, float64 throughout.
    Requires at least 10 examples and both labels present.
    """
    if len(examples) < 10:
        raise CalibrationError(f"need >= 10 examples, got {len(examples)}")
    labels = {bool(correct) for _, correct in examples}
    if len(labels) < 2:
        raise CalibrationError("degenerate labels: need both correct and incorrect examples")

    X = np.stack([feats.vector() for feats, _ in examples])
    y = np.array([1.0 if correct else 0.0 for _, correct in examples])
    if not np.all(np.isfinite(X)):
        raise CalibrationError("non-finite features in training set")

    weights = np.zeros(len(FEATURE_NAMES))
    bias = 0.0
    loss = logistic_loss(weights, bias, X, y)
    for _ in range(epochs):
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, X, y)
        weights = weights - rate * grad_w
        bias = bias - rate * grad_b
    loss = logistic_loss(weights, bias, X, y)
    head = CalibrationHead(weights=weights, bias=bias, trained_on=len(examples))
    return TrainingResult(head=head, final_loss=loss, epochs=epochs)


def expected_calibration_error(
    scores: Sequence[float], correct: Sequence[bool], bins: int = 10
) -> float:
    """ECE over equal-mass bins: mean |bin confidence - bin accuracy|, weighted."""
    if len(scores) != len(correct) or not scores:
        raise ValueError("scores and labels must be non-empty and aligned")
    order = np.argsort(np.asarray(scores, dtype=np.float64), kind="stable")
    s = np.asarray(scores, dtype=np.float64)[order]
    c = np.asarray([1.0 if x else 0.0 for x in correct])[order]
    splits = np.array_split(np.arange(len(s)), bins)
    ece = 0.0
    for idx in splits:
        if len(idx) == 0:
            continue
        ece += (len(idx) / len(s)) * abs(float(s[idx].mean()) - float(c[idx].mean()))
    return ece


# -- threshold policy and decisions -------------------------------------------


@dataclass(frozen=True)
class SlotScore:
    raw: float
    calibrated: float


@dataclass(frozen=True)
class ConfidenceReport:
    """Per-essential-slot scores plus the accept/clarify decision.

    ``decision`` is "Accept" exactly when every essential slot's calibrated
    score clears the threshold; otherwise "Clarify" with the failing fields
    listed worst-first. An unknown intent is reported as the pseudo-field
    "intent" at score zero: the request kind itself needs confirmation.
    """

    slot_scores: Mapping[str, SlotScore]
    global_score: float
    threshold: float
    decision: str  # "Accept" | "Clarify"
    clarify: tuple[str, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.decision == "Accept"

    def to_wire(self) -> dict:
        return {
            "v": 1,
            "slots": {
                name: {"raw": s.raw, "calibrated": s.calibrated}
                for name, s in self.slot_scores.items()
            },
            "global": self.global_score,
            "threshold": self.threshold,
            "decision": self.decision,
            "clarify": list(self.clarify),
        }


class ThresholdPolicy:
    """Acceptance threshold: fixed, or a running quantile tracking precision.

    In adaptive mode the policy keeps a per-slot window of calibrated scores
    from examples later labeled correct and resolves the threshold as the
    (1 - target_precision) quantile of the pooled windows, clamped to
    [0.5, 0.99]. Until a quarter of the window has been labeled it falls back
    to the fixed value.
    """

    CLAMP = (0.5, 0.99)

    def __init__(
        self,
        mode: str = "fixed",
        fixed: float = 0.85,
        precision: float = 0.9,
        window: int = 200,
    ):
        if mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown threshold mode {mode!r}")
        if not 0.0 <= fixed <= 1.0:
            raise ValueError(f"fixed threshold {fixed} outside [0, 1]")
        if not 0.0 < precision < 1.0:
            raise ValueError(f"target precision {precision} outside (0, 1)")
        self.mode = mode
        self.fixed = fixed
        self.precision = precision
        self.window = window
        self._windows: dict[str, deque[float]] = {}
        self._labels_seen = 0
        self._lock = threading.Lock()

    def observe(self, slot_name: str, calibrated_score: float, correct: bool) -> None:
        """Feed ground truth for one scored slot; only correct parses enter
        the quantile windows (the threshold tracks where correct mass lives)."""
        with self._lock:
            self._labels_seen += 1
            if correct:
                window = self._windows.setdefault(slot_name, deque(maxlen=self.window))
                window.append(float(calibrated_score))

    def resolve(self) -> float:
        if self.mode == "fixed":
            return self.fixed
        with self._lock:
            if self._labels_seen < self.window // 4:
                return self.fixed
            pooled = sorted(s for w in self._windows.values() for s in w)
        if not pooled:
            return self.fixed
        idx = int((1.0 - self.precision) * (len(pooled) - 1))
        lo, hi = self.CLAMP
        return min(hi, max(lo, pooled[idx]))


def decide(
    goal: GoalSpec,
    trace: TokenTrace | None,
    head: CalibrationHead,
    policy: ThresholdPolicy,
    essentials: EssentialSlotPolicy = DEFAULT_ESSENTIALS,
    default_prior: float = DEFAULT_PRIOR,
) -> ConfidenceReport:
    """Score the goal's essential slots and resolve accept-vs-clarify.

    Essential slots missing from the goal entirely score 0.0 so the
    clarification loop can ask for them; an unknown intent short-circuits to
    clarifying the request kind itself.
    """
    threshold = policy.resolve()

    if goal.intent is Intent.UNKNOWN:
        scores = {INTENT_FIELD: SlotScore(raw=0.0, calibrated=0.0)}
        return ConfidenceReport(
            slot_scores=scores,
            global_score=0.0,
            threshold=threshold,
            decision="Clarify",
            clarify=(INTENT_FIELD,),
        )

    scores: dict[str, SlotScore] = {}
    for name in essentials.essentials(goal.intent):
        slot = goal.slots.get(name)
        if slot is None:
            scores[name] = SlotScore(raw=0.0, calibrated=0.0)
            continue
        if slot.provenance is Provenance.CLARIFIED:
            scores[name] = SlotScore(raw=1.0, calibrated=1.0)
            continue
        if slot.provenance is Provenance.DEFAULT:
            scores[name] = SlotScore(raw=default_prior, calibrated=default_prior)
            continue
        if trace is None:
            raise CalibrationError("model-provenance slots need a token trace")
        raw = field_confidence(trace, slot, default_prior)
        feats = features_for_slot(trace, name)
        assert feats is not None  # field_confidence above already checked
        scores[name] = SlotScore(raw=raw, calibrated=calibrate(head, feats))

    global_score = 1.0
    for s in scores.values():
        global_score *= s.calibrated

    below = sorted(
        (name for name, s in scores.items() if s.calibrated < threshold),
        key=lambda n: (scores[n].calibrated, n),
    )
    if below:
        return ConfidenceReport(
            slot_scores=scores,
            global_score=global_score,
            threshold=threshold,
            decision="Clarify",
            clarify=tuple(below),
        )
    return ConfidenceReport(
        slot_scores=scores,
        global_score=global_score,
        threshold=threshold,
        decision="Accept",
    )
