"""Refinement data paths: accumulate finished sessions, filter by confidence
and verification outcome, and export fine-tuning datasets.

Four export kinds mirror the downstream training modes: supervised pairs
from human-clarified sessions, contrastive high-vs-low confidence triples,
self-training pseudo-labels gated by a confidence floor plus a compliant
plan, and scalar-reward records. Exports are deterministic functions of a
store snapshot and the filter parameters; each ships with a manifest whose
hash covers the exported bytes exactly.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .canonical import canonical_json, sha256_hex
from .dialogue import DialogueSession, SessionState
from .errors import EmptyExportError
from .goals import GoalSpec, canonical_encode, validate

LABEL_SOURCES = ("human_clarified", "pseudo", "unlabeled")

REWARD_CLEAN_PASS = 1.0
REWARD_CLARIFIED_PASS = 0.5
REWARD_FAILED = 0.0


@dataclass(frozen=True)
class InteractionRecord:
    """One finished session, flattened for dataset curation."""

    record_id: int
    prompt: str
    final_goal_encoded: str  # canonical encoding of y*
    label_source: str  # human_clarified | pseudo | unlabeled
    clarification_turns: tuple[tuple[str, str], ...]  # (slot, answer as text)
    verification_passed: bool | None  # None when no plan was attempted
    session_state: str
    global_confidence: float
    threshold: float
    slot_correct: dict | None = None  # slot -> bool, when ground truth is known
    human_confirmed: bool = False
    created_at: float = 0.0

    def __post_init__(self):
        if self.label_source not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {self.label_source!r}")
        if self.label_source == "human_clarified" and not (
            self.clarification_turns or self.human_confirmed
        ):
            raise ValueError(
                "human_clarified records need a clarification turn or explicit confirmation"
            )

    @property
    def verified_correct(self) -> bool:
        """Best available correctness signal: exact ground truth when known,
        otherwise the verifier's verdict."""
        if self.slot_correct is not None:
            return bool(self.verification_passed) and all(self.slot_correct.values())
        return bool(self.verification_passed)

    def template_class(self) -> str:
        """Prompt with location codes and numbers masked, for pairing."""
        masked = re.sub(r"\b[A-Z]{3}\b", "<loc>", self.prompt)
        masked = re.sub(r"\d+(?:\.\d+)?", "<n>", masked)
        return masked.lower().strip()

    def to_jsonable(self) -> dict:
        return {
            "record_id": self.record_id,
            "prompt": self.prompt,
            "final_goal": self.final_goal_encoded,
            "label_source": self.label_source,
            "clarification_turns": [list(t) for t in self.clarification_turns],
            "verification_passed": self.verification_passed,
            "session_state": self.session_state,
            "global_confidence": self.global_confidence,
            "threshold": self.threshold,
            "slot_correct": self.slot_correct,
            "human_confirmed": self.human_confirmed,
            "created_at": self.created_at,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "InteractionRecord":
        return cls(
            record_id=int(payload["record_id"]),
            prompt=payload["prompt"],
            final_goal_encoded=payload["final_goal"],
            label_source=payload["label_source"],
            clarification_turns=tuple(
                (slot, answer) for slot, answer in payload.get("clarification_turns", [])
            ),
            verification_passed=payload.get("verification_passed"),
            session_state=payload.get("session_state", ""),
            global_confidence=float(payload.get("global_confidence", 0.0)),
            threshold=float(payload.get("threshold", 0.0)),
            slot_correct=payload.get("slot_correct"),
            human_confirmed=bool(payload.get("human_confirmed", False)),
            created_at=float(payload.get("created_at", 0.0)),
        )


def record_from_session(
    session: DialogueSession,
    record_id: int,
    truth: dict | None = None,
    human_confirmed: bool = False,
    created_at: float = 0.0,
) -> InteractionRecord:
    """Flatten a finished dialogue session into a store record.

    ``truth`` (slot name -> expected value) marks per-slot correctness when
    the caller knows it, e.g. in scripted evaluation runs. A session counts
    as human_clarified when it had clarification turns or an explicit
    confirmation; everything else is unlabeled until an export promotes it.
    """
    if session.state not in (SessionState.DELIVERED, SessionState.FAILED):
        raise ValueError(f"session {session.id} is not finished ({session.state.value})")
    clarifications = tuple(
        (turn.payload["slot"], str(turn.payload["value"]))
        for turn in session.turns
        if turn.role == "user" and turn.payload.get("type") == "answer"
    )
    goal = session.goal
    encoded = canonical_encode(goal) if goal is not None and validate_ok(goal) else ""
    slot_correct = None
    if truth is not None and goal is not None:
        slot_correct = {}
        for name, expected in truth.items():
            got = goal.slot_value(name)
            got = got.value if hasattr(got, "value") else got
            expected_value = expected.value if hasattr(expected, "value") else expected
            slot_correct[name] = got == expected_value
    label = "human_clarified" if (clarifications or human_confirmed) else "unlabeled"
    report = session.report
    return InteractionRecord(
        record_id=record_id,
        prompt=session.prompt,
        final_goal_encoded=encoded,
        label_source=label,
        clarification_turns=clarifications,
        verification_passed=(
            session.compliance.overall if session.compliance is not None else None
        ),
        session_state=session.state.value,
        global_confidence=report.global_score if report is not None else 0.0,
        threshold=report.threshold if report is not None else 0.0,
        slot_correct=slot_correct,
        human_confirmed=human_confirmed,
        created_at=created_at,
    )


def validate_ok(goal: GoalSpec) -> bool:
    return validate(goal).ok


class RecordStore:
    """Append-only store with snapshot isolation for exporters."""

    def __init__(self):
        self._records: list[InteractionRecord] = []
        self._lock = threading.Lock()

    def append(self, record: InteractionRecord) -> None:
        with self._lock:
            self._records.append(record)

    def extend(self, records: Iterable[InteractionRecord]) -> None:
        with self._lock:
            self._records.extend(records)

    def snapshot(self) -> tuple[InteractionRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def next_id(self) -> int:
        with self._lock:
            return len(self._records)

    def save(self, path: str | Path) -> None:
        snapshot = self.snapshot()
        lines = [canonical_json(r.to_jsonable()) for r in snapshot]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RecordStore":
        store = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                store.append(InteractionRecord.from_jsonable(json.loads(line)))
        return store


@dataclass(frozen=True)
class DatasetFilter:
    min_confidence: float | None = None
    max_confidence: float | None = None
    since: float | None = None
    until: float | None = None

    def admits(self, record: InteractionRecord) -> bool:
        if self.min_confidence is not None and record.global_confidence < self.min_confidence:
            return False
        if self.max_confidence is not None and record.global_confidence > self.max_confidence:
            return False
        if self.since is not None and record.created_at < self.since:
            return False
        if self.until is not None and record.created_at > self.until:
            return False
        return True

    def to_jsonable(self) -> dict:
        return {
            "min_confidence": self.min_confidence,
            "max_confidence": self.max_confidence,
            "since": self.since,
            "until": self.until,
        }


@dataclass(frozen=True)
class DatasetManifest:
    kind: str  # sft | contrastive | self_train | reward
    filter_params: dict
    record_count: int
    content_hash: str

    def to_jsonable(self) -> dict:
        return {
            "v": 1,
            "kind": self.kind,
            "filter": self.filter_params,
            "count": self.record_count,
            "hash": self.content_hash,
        }


@dataclass(frozen=True)
class ExportResult:
    lines: tuple[str, ...]
    manifest: DatasetManifest

    def dataset_bytes(self) -> bytes:
        return ("\n".join(self.lines) + ("\n" if self.lines else "")).encode("utf-8")

    def write(self, directory: str | Path, name: str) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        data_path = directory / f"{name}.jsonl"
        manifest_path = directory / f"{name}.manifest.json"
        data_path.write_bytes(self.dataset_bytes())
        manifest_path.write_text(
            canonical_json(self.manifest.to_jsonable()) + "\n", encoding="utf-8"
        )
        return data_path, manifest_path


def _finish(kind: str, lines: Sequence[str], filter_params: dict) -> ExportResult:
    body = ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
    manifest = DatasetManifest(
        kind=kind,
        filter_params=filter_params,
        record_count=len(lines),
        content_hash=sha256_hex(body),
    )
    return ExportResult(lines=tuple(lines), manifest=manifest)


def export_sft(
    store: RecordStore, dataset_filter: DatasetFilter | None = None
) -> ExportResult:
    """(prompt, final goal) pairs from human-clarified sessions.

    Deduplicated by prompt (the latest clarified goal wins), deterministic
    order by prompt hash. Raises EmptyExportError when nothing matches: an
    empty supervised set is a configuration mistake, not a dataset.
    """
    dataset_filter = dataset_filter or DatasetFilter()
    chosen: dict[str, InteractionRecord] = {}
    for record in store.snapshot():
        if record.label_source != "human_clarified" or not record.final_goal_encoded:
            continue
        if not dataset_filter.admits(record):
            continue
        key = sha256_hex(record.prompt)
        existing = chosen.get(key)
        if existing is None or (record.created_at, record.record_id) > (
            existing.created_at,
            existing.record_id,
        ):
            chosen[key] = record
    if not chosen:
        raise EmptyExportError("sft export matched zero human-clarified records")
    lines = [
        canonical_json(
            {
                "prompt": chosen[key].prompt,
                "goal": chosen[key].final_goal_encoded,
                "record_id": chosen[key].record_id,
            }
        )
        for key in sorted(chosen)
    ]
    return _finish("sft", lines, dataset_filter.to_jsonable())


def export_contrastive(store: RecordStore, gap: float) -> ExportResult:
    """High- vs low-confidence triples within a prompt template class.

    Positives must be verified correct; negatives must not be (correct and
    above their own threshold); the confidence gap must reach ``gap``.
    """
    by_class: dict[str, list[InteractionRecord]] = {}
    for record in store.snapshot():
        if record.final_goal_encoded:
            by_class.setdefault(record.template_class(), []).append(record)

    lines: list[str] = []
    for class_key in sorted(by_class):
        records = by_class[class_key]
        positives = [r for r in records if r.verified_correct]
        negatives = [
            r
            for r in records
            if not (r.verified_correct and r.global_confidence >= r.threshold)
        ]
        for pos in sorted(positives, key=lambda r: r.record_id):
            for neg in sorted(negatives, key=lambda r: r.record_id):
                if neg.record_id == pos.record_id:
                    continue
                if pos.global_confidence - neg.global_confidence < gap:
                    continue
                lines.append(
                    canonical_json(
                        {
                            "prompt": pos.prompt,
                            "positive": pos.final_goal_encoded,
                            "negative": neg.final_goal_encoded,
                            "confidence_gap": pos.global_confidence - neg.global_confidence,
                            "positive_id": pos.record_id,
                            "negative_id": neg.record_id,
                        }
                    )
                )
    return _finish("contrastive", lines, {"gap": gap})


def export_self_train(store: RecordStore, floor: float) -> ExportResult:
    """Pseudo-labels: unlabeled sessions above the confidence floor whose
    plan verified compliant. Records are marked pseudo and carry the
    confidence that admitted them."""
    if not 0.0 < floor < 1.0:
        raise ValueError(f"confidence floor must be in (0, 1), got {floor}")
    lines = []
    for record in sorted(store.snapshot(), key=lambda r: r.record_id):
        if record.label_source != "unlabeled" or not record.final_goal_encoded:
            continue
        if record.verification_passed is not True:
            continue
        if record.global_confidence < floor:
            continue
        lines.append(
            canonical_json(
                {
                    "prompt": record.prompt,
                    "goal": record.final_goal_encoded,
                    "label_source": "pseudo",
                    "admitted_confidence": record.global_confidence,
                    "record_id": record.record_id,
                }
            )
        )
    return _finish("self_train", lines, {"floor": floor})


def export_reward(store: RecordStore) -> ExportResult:
    """(prompt, goal, reward) for reinforcement-style fine-tuning.

    Rubric: 1.0 for a verified plan with no clarification, 0.5 for a verified
    plan after clarification, 0.0 for anything that failed.
    """
    lines = []
    for record in sorted(store.snapshot(), key=lambda r: r.record_id):
        if record.verification_passed is True:
            reward = (
                REWARD_CLEAN_PASS
                if not record.clarification_turns
                else REWARD_CLARIFIED_PASS
            )
        else:
            reward = REWARD_FAILED
        lines.append(
            canonical_json(
                {
                    "prompt": record.prompt,
                    "goal": record.final_goal_encoded,
                    "reward": reward,
                    "record_id": record.record_id,
                }
            )
        )
    return _finish("reward", lines, {})
