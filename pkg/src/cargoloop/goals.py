"""Typed goal specifications: the structured output space of the interpreter.

A goal is an intent kind plus a map of typed slots, each carrying a
confidence score and a provenance marker. The canonical encoding is
key-sorted UTF-8 JSON, used on the wire, in cache keys, and in dataset
exports; two equal goals always encode to identical bytes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .canonical import canonical_json, sha256_hex
from .errors import GoalDecodeError

ENCODING_VERSION = 1

_CODE_RE = re.compile(r"^[A-Z]{3}$")


class Intent(str, Enum):
    INFO_QUERY = "info_query"
    PLAN_REQUEST = "plan_request"
    UNKNOWN = "unknown"


class Objective(str, Enum):
    MIN_FUEL_COST = "min_fuel_cost"
    MIN_TIME = "min_time"
    MIN_RISK = "min_risk"


class Provenance(str, Enum):
    MODEL = "model"
    CLARIFIED = "clarified"
    DEFAULT = "default"


#: The closed slot vocabulary, in declaration order (used for stable
#: reporting order, e.g. compliance feedback lines).
SLOT_NAMES = (
    "subjects",
    "origin",
    "destination",
    "objective",
    "deadline",
    "consider_weather",
    "max_fuel",
    "max_risk",
)

#: Pseudo-field used when the request kind itself needs clarification.
#: Not a member of SLOT_NAMES: it never appears in a goal's slot map.
INTENT_FIELD = "intent"


@dataclass(frozen=True)
class Slot:
    name: str
    value: Any
    confidence: float = 0.0
    provenance: Provenance = Provenance.MODEL


@dataclass(frozen=True)
class GoalSpec:
    intent: Intent
    slots: Mapping[str, Slot] = field(default_factory=dict)
    raw_prompt: str = ""

    def slot_value(self, name: str, default: Any = None) -> Any:
        slot = self.slots.get(name)
        return default if slot is None else slot.value

    def with_slot(self, slot: Slot) -> "GoalSpec":
        slots = dict(self.slots)
        slots[slot.name] = slot
        return replace(self, slots=slots)

    def without_slot(self, name: str) -> "GoalSpec":
        slots = {k: v for k, v in self.slots.items() if k != name}
        return replace(self, slots=slots)


@dataclass(frozen=True)
class ValidationIssue:
    slot: str
    problem: str  # "missing" | "ill_typed" | "bad_confidence"
    detail: str


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def missing(self) -> tuple[str, ...]:
        return tuple(i.slot for i in self.issues if i.problem == "missing")


@dataclass(frozen=True)
class EssentialSlotPolicy:
    """Which slot confidences must clear the threshold, per intent."""

    by_intent: Mapping[Intent, tuple[str, ...]]

    def essentials(self, intent: Intent) -> tuple[str, ...]:
        return self.by_intent.get(intent, ())


DEFAULT_ESSENTIALS = EssentialSlotPolicy(
    {
        # consider_weather is essential but defaults cleanly: when unmentioned
        # it is filled with provenance=default and a configured prior, so it
        # only triggers clarification when the prompt made it ambiguous or the
        # threshold is pushed above the prior.
        Intent.PLAN_REQUEST: ("origin", "destination", "objective", "consider_weather"),
        Intent.INFO_QUERY: ("subjects",),
        Intent.UNKNOWN: (),
    }
)

_REQUIRED = {
    Intent.INFO_QUERY: ("subjects",),
    Intent.PLAN_REQUEST: ("origin", "destination", "objective"),
    Intent.UNKNOWN: (),
}


def _issue(slot: str, problem: str, detail: str) -> ValidationIssue:
    return ValidationIssue(slot=slot, problem=problem, detail=detail)


def _check_code(value: Any) -> str | None:
    if not isinstance(value, str) or not _CODE_RE.match(value):
        return f"expected a 3-letter uppercase location code, got {value!r}"
    return None


def _check_value(name: str, value: Any) -> str | None:
    """Type check for one slot value; returns a problem description or None."""
    if name == "subjects":
        if not isinstance(value, (list, tuple)) or len(value) == 0:
            return f"expected a non-empty list of location codes, got {value!r}"
        for item in value:
            problem = _check_code(item)
            if problem:
                return problem
        return None
    if name in ("origin", "destination"):
        return _check_code(value)
    if name == "objective":
        if isinstance(value, Objective):
            return None
        if isinstance(value, str) and value in {o.value for o in Objective}:
            return None
        return f"expected one of {[o.value for o in Objective]}, got {value!r}"
    if name == "deadline":
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected whole minutes, got {value!r}"
        if value < 0:
            return f"deadline must be >= 0, got {value}"
        return None
    if name == "consider_weather":
        if not isinstance(value, bool):
            return f"expected a boolean, got {value!r}"
        return None
    if name in ("max_fuel", "max_risk"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"expected a nonnegative number, got {value!r}"
        if not math.isfinite(float(value)) or float(value) < 0:
            return f"must be finite and >= 0, got {value!r}"
        return None
    return f"unknown slot {name!r}"


def validate(goal: GoalSpec) -> ValidationResult:
    """Structural validation. Pure and total: failures are data, not faults."""
    issues: list[ValidationIssue] = []

    for name, slot in goal.slots.items():
        if name not in SLOT_NAMES:
            issues.append(_issue(name, "ill_typed", f"unknown slot name {name!r}"))
            continue
        if name != slot.name:
            issues.append(_issue(name, "ill_typed", f"slot keyed {name!r} but named {slot.name!r}"))
        problem = _check_value(name, slot.value)
        if problem:
            issues.append(_issue(name, "ill_typed", problem))
        conf = slot.confidence
        if not isinstance(conf, (int, float)) or not 0.0 <= float(conf) <= 1.0:
            issues.append(_issue(name, "bad_confidence", f"confidence {conf!r} outside [0, 1]"))
        elif slot.provenance is Provenance.CLARIFIED and float(conf) != 1.0:
            issues.append(
                _issue(name, "bad_confidence", f"clarified slot has confidence {conf!r}, expected 1.0")
            )

    for required in _REQUIRED[goal.intent]:
        if required not in goal.slots:
            issues.append(_issue(required, "missing", f"intent {goal.intent.value} requires {required!r}"))

    return ValidationResult(ok=not issues, issues=tuple(issues))


# -- canonical codec -------------------------------------------------------


def _value_to_jsonable(name: str, value: Any) -> Any:
    if name == "objective":
        return value.value if isinstance(value, Objective) else value
    if name == "subjects":
        return list(value)
    return value


def _value_from_jsonable(name: str, value: Any, path: str) -> Any:
    if name == "objective":
        try:
            return Objective(value)
        except ValueError:
            raise GoalDecodeError(f"bad objective {value!r}", path=path) from None
    if name == "subjects":
        if not isinstance(value, list):
            raise GoalDecodeError(f"subjects must be a list, got {value!r}", path=path)
        return list(value)
    if name == "deadline" and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def canonical_encode(goal: GoalSpec) -> str:
    """Canonical UTF-8 JSON encoding; byte-identical for equal goals.

    The goal must validate; encoding an invalid goal raises ValueError so
    malformed structures never reach the wire or the cache key.
    """
    result = validate(goal)
    if not result.ok:
        raise ValueError(f"cannot encode invalid goal: {result.issues[0].detail}")
    payload = {
        "v": ENCODING_VERSION,
        "intent": goal.intent.value,
        "prompt": goal.raw_prompt,
        "slots": {
            name: {
                "value": _value_to_jsonable(name, slot.value),
                "confidence": float(slot.confidence),
                "provenance": slot.provenance.value,
            }
            for name, slot in goal.slots.items()
        },
    }
    return canonical_json(payload)


def canonical_decode(text: str) -> GoalSpec:
    """Inverse of canonical_encode; reports the position of the first bad token."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GoalDecodeError(exc.msg, offset=exc.pos) from None

    if not isinstance(payload, dict):
        raise GoalDecodeError(f"expected an object, got {type(payload).__name__}", path="$")
    version = payload.get("v")
    if version != ENCODING_VERSION:
        raise GoalDecodeError(f"unsupported encoding version {version!r}", path="$.v")
    try:
        intent = Intent(payload.get("intent"))
    except ValueError:
        raise GoalDecodeError(f"bad intent {payload.get('intent')!r}", path="$.intent") from None
    prompt = payload.get("prompt", "")
    if not isinstance(prompt, str):
        raise GoalDecodeError("prompt must be a string", path="$.prompt")

    raw_slots = payload.get("slots", {})
    if not isinstance(raw_slots, dict):
        raise GoalDecodeError("slots must be an object", path="$.slots")
    slots: dict[str, Slot] = {}
    for name, body in raw_slots.items():
        path = f"$.slots.{name}"
        if name not in SLOT_NAMES:
            raise GoalDecodeError(f"unknown slot {name!r}", path=path)
        if not isinstance(body, dict) or "value" not in body:
            raise GoalDecodeError("slot body must be an object with a value", path=path)
        try:
            provenance = Provenance(body.get("provenance", "model"))
        except ValueError:
            raise GoalDecodeError(
                f"bad provenance {body.get('provenance')!r}", path=path
            ) from None
        confidence = body.get("confidence", 0.0)
        if not isinstance(confidence, (int, float)):
            raise GoalDecodeError(f"bad confidence {confidence!r}", path=path)
        slots[name] = Slot(
            name=name,
            value=_value_from_jsonable(name, body["value"], path),
            confidence=float(confidence),
            provenance=provenance,
        )

    goal = GoalSpec(intent=intent, slots=slots, raw_prompt=prompt)
    result = validate(goal)
    if not result.ok:
        issue = result.issues[0]
        raise GoalDecodeError(issue.detail, path=f"$.slots.{issue.slot}")
    return goal


def goal_key(goal: GoalSpec, db_version: str) -> str:
    """Deterministic 64-hex cache key for (goal, database version).

    Confidence and provenance are excluded: re-scoring a goal never moves it
    to a different cache entry. Everything else in the canonical encoding
    (intent, prompt, slot values) participates.
    """
    result = validate(goal)
    if not result.ok:
        raise ValueError(f"cannot key invalid goal: {result.issues[0].detail}")
    payload = {
        "v": ENCODING_VERSION,
        "intent": goal.intent.value,
        "prompt": goal.raw_prompt,
        "slots": {
            name: _value_to_jsonable(name, slot.value) for name, slot in goal.slots.items()
        },
    }
    return sha256_hex(canonical_json(payload) + "|" + db_version)
