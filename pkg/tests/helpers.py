"""Shared test utilities: seeded scripted corpora with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass

from cargoloop.confidence import FieldFeatures, features_for_slot
from cargoloop.domaindb import LogisticsDatabase
from cargoloop.goals import Objective
from cargoloop.interpreter import NoiseProfile, ScriptedBackend

_TEMPLATES = (
    ("Fly cargo from {o} to {d} as cheaply as possible", Objective.MIN_FUEL_COST),
    ("Transport cargo from {o} to {d} as fast as possible", Objective.MIN_TIME),
    ("Ship cargo from {o} to {d} minimizing risk", Objective.MIN_RISK),
    ("Deliver cargo from {o} to {d} at the lowest cost", Objective.MIN_FUEL_COST),
    ("Move cargo from {o} to {d} quickly", Objective.MIN_TIME),
)

ESSENTIAL_MODEL_SLOTS = ("origin", "destination", "objective")


@dataclass(frozen=True)
class LabeledParse:
    prompt: str
    truth: dict
    features: dict  # slot -> FieldFeatures
    values: dict  # slot -> parsed value
    correct: dict  # slot -> bool


def labeled_parses(
    db: LogisticsDatabase,
    count: int,
    profile: NoiseProfile,
    seed_base: int = 0,
) -> list[LabeledParse]:
    """Run the scripted backend over templated prompts with known truth."""
    codes = sorted(db.codes)
    pairs = [(a, b) for a in codes for b in codes if a != b]
    parses = []
    for i in range(count):
        template, objective = _TEMPLATES[i % len(_TEMPLATES)]
        origin, dest = pairs[i % len(pairs)]
        prompt = template.format(o=origin, d=dest)
        truth = {"origin": origin, "destination": dest, "objective": objective}
        backend = ScriptedBackend(profile, seed=seed_base + i)
        result = backend.interpret(prompt, db)
        features = {}
        values = {}
        correct = {}
        for slot in ESSENTIAL_MODEL_SLOTS:
            feats = features_for_slot(result.trace, slot)
            assert feats is not None
            features[slot] = feats
            values[slot] = result.goal.slot_value(slot)
            correct[slot] = values[slot] == truth[slot]
        parses.append(
            LabeledParse(
                prompt=prompt, truth=truth, features=features, values=values, correct=correct
            )
        )
    return parses


def calibration_corpus(
    db: LogisticsDatabase,
    examples: int,
    error_rate: float = 0.3,
    seed_base: int = 0,
    confident_spread: float = 0.25,
    flat_spread: float = 0.2,
) -> list[tuple[FieldFeatures, bool]]:
    """(features, correct) pairs from a noisy scripted corpus."""
    profile = NoiseProfile(
        default_error=error_rate,
        confident_spread=confident_spread,
        flat_spread=flat_spread,
    )
    parses = labeled_parses(db, (examples + 2) // 3, profile, seed_base)
    corpus = []
    for parse in parses:
        for slot in ESSENTIAL_MODEL_SLOTS:
            corpus.append((parse.features[slot], parse.correct[slot]))
    return corpus[:examples]
