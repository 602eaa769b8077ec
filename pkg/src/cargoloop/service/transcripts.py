"""Append-only session transcripts and deterministic replay.

One line-delimited JSON file per session. User events carry enough to be
re-fed through a fresh engine; system events carry the exact turn payloads,
so replay can compare regenerated system messages byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..canonical import canonical_json
from ..dialogue import DialogueEngine, DialogueSession


class TranscriptWriter:
    """Durable appender: every record is flushed and fsynced before the
    response that reports it goes out."""

    def __init__(self, directory: str | Path, session_id: str):
        self.path = Path(directory) / f"{session_id}.jsonl"
        self._seq = 0

    def append(self, kind: str, body: dict) -> None:
        record = {"v": 1, "seq": self._seq, "kind": kind}
        record.update(body)
        self._seq += 1
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def sync_session(self, session: DialogueSession, written: int, turn_id: str | None) -> int:
        """Append all turns past ``written``; returns the new high-water mark."""
        for turn in session.turns[written:]:
            if turn.role == "user":
                if turn.payload.get("type") == "prompt":
                    self.append(
                        "user_prompt",
                        {"text": turn.payload["text"], "turn_id": turn_id, "ts": turn.ts},
                    )
                else:
                    self.append(
                        "user_answer",
                        {
                            "slot": turn.payload["slot"],
                            "value": turn.payload["value"],
                            "turn_id": turn_id,
                            "ts": turn.ts,
                        },
                    )
            else:
                self.append("system", {"payload": turn.payload, "ts": turn.ts})
        return len(session.turns)


def read_transcript(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


@dataclass(frozen=True)
class ReplayReport:
    matched: bool
    mismatches: tuple[str, ...] = ()
    final_state: str = ""

    def __bool__(self) -> bool:  # pragma: no cover - convenience
        return self.matched


def replay(path: str | Path, engine: DialogueEngine) -> ReplayReport:
    """Feed the transcript's user events through a fresh engine and compare
    every regenerated system payload against the recorded one."""
    records = read_transcript(path)
    session = engine.create_session("replay")
    recorded_system = [r["payload"] for r in records if r["kind"] == "system"]

    for record in records:
        if record["kind"] == "user_prompt":
            engine.submit_prompt(session, record["text"])
        elif record["kind"] == "user_answer":
            engine.submit_answer(session, record["slot"], record["value"])

    regenerated = session.system_payloads()
    mismatches = []
    if len(regenerated) != len(recorded_system):
        mismatches.append(
            f"system message count differs: recorded {len(recorded_system)}, "
            f"replayed {len(regenerated)}"
        )
    for i, (a, b) in enumerate(zip(recorded_system, regenerated)):
        if canonical_json(a) != canonical_json(b):
            mismatches.append(f"system message {i} differs")
    return ReplayReport(
        matched=not mismatches,
        mismatches=tuple(mismatches),
        final_state=session.state.value,
    )
