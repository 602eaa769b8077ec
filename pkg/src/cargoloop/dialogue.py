"""Clarification-loop state machine.

A session moves interpret -> score -> (clarify)* -> plan -> respond. Each
``advance`` call performs exactly one deterministic transition; the engine's
``submit_prompt`` / ``submit_answer`` helpers pump the internal stages
(interpretation, planning) until the session parks in a state that needs the
user again. Replaying a session's user events through a fresh engine with
the same configuration reproduces every system message byte for byte.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

from .confidence import (
    DEFAULT_PRIOR,
    CalibrationHead,
    ConfidenceReport,
    ThresholdPolicy,
    decide,
)
from .domaindb import FactSet, LogisticsDatabase, SolutionCache, lookup_facts
from .errors import AnswerSchemaError, ProtocolError
from .goals import (
    DEFAULT_ESSENTIALS,
    EssentialSlotPolicy,
    GoalSpec,
    Intent,
    INTENT_FIELD,
    Objective,
    Provenance,
    Slot,
    validate,
)
from .interpreter import InterpretResult, TokenTrace, interpret
from .pddl import emit_facts
from .planner import Infeasible, Plan, render_plan_text, solve_cached
from .verifier import ComplianceReport, verdict_to_feedback, verify


class SessionState(str, Enum):
    AWAITING_PROMPT = "AwaitingPrompt"
    INTERPRETING = "Interpreting"
    AWAITING_CLARIFICATION = "AwaitingClarification"
    PLANNING = "Planning"
    DELIVERED = "Delivered"
    FAILED = "Failed"


# -- events -------------------------------------------------------------------


@dataclass(frozen=True)
class UserPrompt:
    text: str
    turn_id: str | None = None


@dataclass(frozen=True)
class UserAnswer:
    slot: str
    value: Any
    turn_id: str | None = None


@dataclass(frozen=True)
class InternalResult:
    payload: Any  # InterpretResult | _PlanOutcome | _FactsOutcome


@dataclass(frozen=True)
class _PlanOutcome:
    plan: Plan | None
    infeasible: Infeasible | None
    compliance: ComplianceReport | None
    cache_hit: bool


@dataclass(frozen=True)
class _FactsOutcome:
    facts: FactSet
    text: str


# -- questions ----------------------------------------------------------------


@dataclass(frozen=True)
class AnswerSchema:
    kind: str  # "options" | "location" | "minutes" | "boolean"
    options: tuple[str, ...] = ()
    unit: str | None = None  # for "minutes": "minutes" or resource "units"
    multi: bool = False

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"kind": self.kind}
        if self.options:
            wire["options"] = list(self.options)
        if self.unit:
            wire["unit"] = self.unit
        if self.multi:
            wire["multi"] = True
        return wire


@dataclass(frozen=True)
class ClarificationQuestion:
    slot: str
    text: str
    schema: AnswerSchema

    def to_wire(self) -> dict:
        return {"slot": self.slot, "text": self.text, "schema": self.schema.to_wire()}


_OBJECTIVE_OPTIONS = tuple(o.value for o in Objective)


def generate_question(
    slot_name: str,
    goal: GoalSpec,
    trace: TokenTrace | None = None,
    db: LogisticsDatabase | None = None,
) -> ClarificationQuestion:
    """Deterministic question for one sub-threshold field.

    Location questions surface the top alternative codes from the trace so
    the user can pick among what the interpreter itself was weighing.
    """
    if slot_name == INTENT_FIELD:
        return ClarificationQuestion(
            slot=INTENT_FIELD,
            text=(
                "Did you want me to extract information from the database, "
                "or plan a cargo route?"
            ),
            schema=AnswerSchema(
                kind="options", options=(Intent.INFO_QUERY.value, Intent.PLAN_REQUEST.value)
            ),
        )
    if slot_name == "objective":
        return ClarificationQuestion(
            slot="objective",
            text="Do you mean to minimize cost, time, or risk?",
            schema=AnswerSchema(kind="options", options=_OBJECTIVE_OPTIONS),
        )
    if slot_name == "consider_weather":
        return ClarificationQuestion(
            slot="consider_weather",
            text="Should weather conditions be considered?",
            schema=AnswerSchema(kind="boolean"),
        )
    if slot_name in ("origin", "destination", "subjects"):
        options: tuple[str, ...] = ()
        if trace is not None:
            ranked: list[str] = []
            for token in trace.slot_tokens(slot_name):
                for surface, _ in token.alternatives:
                    code = surface.upper()
                    if code not in ranked and (db is None or db.has_location(code)):
                        ranked.append(code)
            options = tuple(ranked[:3])
        if slot_name == "subjects":
            return ClarificationQuestion(
                slot="subjects",
                text="Which locations do you want information about?",
                schema=AnswerSchema(kind="location", options=options, multi=True),
            )
        noun = "origin" if slot_name == "origin" else "destination"
        return ClarificationQuestion(
            slot=slot_name,
            text=f"Which {noun} did you mean?",
            schema=AnswerSchema(kind="location", options=options),
        )
    if slot_name == "deadline":
        return ClarificationQuestion(
            slot="deadline",
            text="What is the latest acceptable arrival time, in minutes from departure?",
            schema=AnswerSchema(kind="minutes", unit="minutes"),
        )
    if slot_name == "max_fuel":
        return ClarificationQuestion(
            slot="max_fuel",
            text="What is the maximum fuel budget, in units?",
            schema=AnswerSchema(kind="minutes", unit="units"),
        )
    if slot_name == "max_risk":
        return ClarificationQuestion(
            slot="max_risk",
            text="What is the maximum acceptable route risk, in units?",
            schema=AnswerSchema(kind="minutes", unit="units"),
        )
    raise ValueError(f"no question template for slot {slot_name!r}")


def coerce_answer(
    schema: AnswerSchema, value: Any, slot_name: str, db: LogisticsDatabase | None = None
) -> Any:
    """Parse and validate a user answer against the question's schema.

    Raises AnswerSchemaError (with suggestions where possible) on mismatch;
    the dialogue turns that into a re-ask rather than a failure.
    """
    if schema.kind == "options":
        text = str(value).strip().lower()
        if text not in schema.options:
            raise AnswerSchemaError(slot_name, f"{value!r} is not one of the options", schema.options)
        return text
    if schema.kind == "boolean":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "yes", "y", "1"):
            return True
        if text in ("false", "no", "n", "0"):
            return False
        raise AnswerSchemaError(slot_name, f"expected yes or no, got {value!r}")
    if schema.kind == "minutes":
        try:
            number = float(str(value).strip())
        except ValueError:
            raise AnswerSchemaError(slot_name, f"expected a number, got {value!r}") from None
        if number < 0:
            raise AnswerSchemaError(slot_name, f"must be >= 0, got {value!r}")
        return int(number) if slot_name == "deadline" else number

    # location schema
    def one_code(raw: str) -> str:
        code = raw.strip().upper()
        if db is not None and not db.has_location(code):
            raise AnswerSchemaError(
                slot_name, f"unknown location code {code!r}", db.suggest_codes(code)
            )
        if len(code) != 3 or not code.isalpha():
            raise AnswerSchemaError(slot_name, f"{raw!r} is not a 3-letter location code")
        return code

    if schema.multi:
        if isinstance(value, (list, tuple)):
            raw_items = [str(v) for v in value]
        else:
            raw_items = [part for part in str(value).replace(",", " ").split() if part]
        if not raw_items:
            raise AnswerSchemaError(slot_name, "expected at least one location code")
        return [one_code(item) for item in raw_items]
    return one_code(str(value))


def merge_answer(
    goal: GoalSpec,
    slot_name: str,
    answer: Any,
    db: LogisticsDatabase | None = None,
) -> GoalSpec:
    """Replace one slot with a clarified value; everything else is untouched.

    The answer must already satisfy the question schema (coerce_answer); the
    merged goal is re-validated as a guard.
    """
    if slot_name == "objective":
        value: Any = Objective(answer)
    else:
        value = answer
    merged = goal.with_slot(Slot(slot_name, value, 1.0, Provenance.CLARIFIED))
    result = validate(merged)
    for issue in result.issues:
        if issue.slot == slot_name:
            raise AnswerSchemaError(slot_name, issue.detail)
    return merged


# -- session ------------------------------------------------------------------


@dataclass
class Turn:
    seq: int
    role: str  # "user" | "system"
    payload: dict
    ts: float


@dataclass
class DialogueSession:
    id: str
    state: SessionState = SessionState.AWAITING_PROMPT
    turns: list[Turn] = field(default_factory=list)
    prompt: str = ""
    goal: GoalSpec | None = None
    trace: TokenTrace | None = None
    report: ConfidenceReport | None = None
    questions: tuple[ClarificationQuestion, ...] = ()
    pending: tuple[str, ...] = ()
    round_count: int = 0
    max_rounds: int = 3
    plan: Plan | None = None
    compliance: ComplianceReport | None = None
    facts: FactSet | None = None
    delivered_text: str | None = None
    failure_reason: str | None = None
    forced_intent: Intent | None = None
    backend_latency_ms: float = 0.0
    interpret_count: int = 0

    def system_payloads(self) -> list[dict]:
        return [t.payload for t in self.turns if t.role == "system"]


class DialogueEngine:
    """Drives sessions against a database, backend, and confidence stack.

    One session is strictly turn-based; distinct sessions may run
    concurrently since the engine holds no per-call mutable state beyond the
    shared solution cache and threshold accumulator, which have their own
    locking.
    """

    def __init__(
        self,
        db: LogisticsDatabase,
        backend,
        head: CalibrationHead | None = None,
        policy: ThresholdPolicy | None = None,
        cache: SolutionCache | None = None,
        max_rounds: int = 3,
        essentials: EssentialSlotPolicy = DEFAULT_ESSENTIALS,
        default_prior: float = DEFAULT_PRIOR,
        clock: Callable[[], float] = time.time,
    ):
        if max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        self.db = db
        self.backend = backend
        self.head = head or CalibrationHead.bootstrap()
        self.policy = policy or ThresholdPolicy()
        self.cache = cache or SolutionCache()
        self.max_rounds = max_rounds
        self.essentials = essentials
        self.default_prior = default_prior
        self.clock = clock
        self._ids = itertools.count(1)

    # .. public API ........................................................

    def create_session(self, session_id: str | None = None) -> DialogueSession:
        return DialogueSession(
            id=session_id or f"s{next(self._ids):06d}", max_rounds=self.max_rounds
        )

    def submit_prompt(self, session: DialogueSession, text: str, turn_id: str | None = None) -> DialogueSession:
        self.advance(session, UserPrompt(text=text, turn_id=turn_id))
        return self._pump(session)

    def submit_answer(
        self, session: DialogueSession, slot: str, value: Any, turn_id: str | None = None
    ) -> DialogueSession:
        self.advance(session, UserAnswer(slot=slot, value=value, turn_id=turn_id))
        return self._pump(session)

    def resume(self, session: DialogueSession) -> DialogueSession:
        """Re-pump a session parked mid-stage by a backend fault."""
        return self._pump(session)

    # .. single-step transition ............................................

    def advance(self, session: DialogueSession, event) -> DialogueSession:
        """Apply exactly one transition; raises ProtocolError on misuse."""
        state = session.state
        if isinstance(event, UserPrompt):
            if state is not SessionState.AWAITING_PROMPT:
                raise ProtocolError(state.value, "UserPrompt")
            text = (event.text or "").strip()
            if not text:
                raise ProtocolError(state.value, "UserPrompt(empty)")
            session.prompt = text
            self._add_turn(session, "user", {"type": "prompt", "text": text})
            session.state = SessionState.INTERPRETING
            return session

        if isinstance(event, UserAnswer):
            if state is not SessionState.AWAITING_CLARIFICATION:
                raise ProtocolError(state.value, "UserAnswer")
            return self._apply_answer(session, event)

        if isinstance(event, InternalResult):
            if state is SessionState.INTERPRETING and isinstance(
                event.payload, InterpretResult
            ):
                return self._apply_interpretation(session, event.payload)
            if state is SessionState.PLANNING and isinstance(
                event.payload, (_PlanOutcome, _FactsOutcome)
            ):
                return self._apply_outcome(session, event.payload)
            raise ProtocolError(state.value, type(event.payload).__name__)

        raise ProtocolError(state.value, type(event).__name__)

    # .. internal stages ...................................................

    def _pump(self, session: DialogueSession) -> DialogueSession:
        while session.state in (SessionState.INTERPRETING, SessionState.PLANNING):
            if session.state is SessionState.INTERPRETING:
                result = interpret(
                    session.prompt, self.db, self.backend, forced_intent=session.forced_intent
                )
                session.backend_latency_ms += result.latency_ms
                session.interpret_count += 1
                self.advance(session, InternalResult(result))
            else:
                self.advance(session, InternalResult(self._run_planning(session)))
        return session

    def _run_planning(self, session: DialogueSession):
        goal = session.goal
        assert goal is not None
        if goal.intent is Intent.INFO_QUERY:
            facts = lookup_facts(self.db, list(goal.slot_value("subjects", ())))
            return _FactsOutcome(facts=facts, text=emit_facts(facts))
        outcome, hit = solve_cached(goal, self.db, self.cache)
        if isinstance(outcome, Infeasible):
            return _PlanOutcome(plan=None, infeasible=outcome, compliance=None, cache_hit=hit)
        compliance = verify(outcome, goal, self.db)
        return _PlanOutcome(plan=outcome, infeasible=None, compliance=compliance, cache_hit=hit)

    def _apply_interpretation(self, session: DialogueSession, result: InterpretResult) -> DialogueSession:
        session.goal = result.goal
        session.trace = result.trace
        session.forced_intent = None
        return self._decide_and_route(session)

    def _decide_and_route(self, session: DialogueSession) -> DialogueSession:
        goal = session.goal
        assert goal is not None
        report = decide(
            goal,
            session.trace,
            self.head,
            self.policy,
            essentials=self.essentials,
            default_prior=self.default_prior,
        )
        session.report = report
        session.goal = _apply_scores(goal, report)

        if report.accepted:
            session.questions = ()
            session.pending = ()
            session.state = SessionState.PLANNING
            return session

        if session.round_count + 1 > session.max_rounds:
            return self._fail(
                session,
                "unresolved ambiguity: clarification budget exhausted "
                f"({session.max_rounds} rounds)",
            )
        session.round_count += 1
        questions = tuple(
            generate_question(name, goal, session.trace, self.db) for name in report.clarify
        )
        session.questions = questions
        session.pending = report.clarify
        session.state = SessionState.AWAITING_CLARIFICATION
        self._add_turn(
            session,
            "system",
            {
                "type": "clarification",
                "message": _clarification_message(questions),
                "questions": [q.to_wire() for q in questions],
                "report": report.to_wire(),
                "round": session.round_count,
            },
        )
        return session

    def _apply_answer(self, session: DialogueSession, event: UserAnswer) -> DialogueSession:
        if event.slot not in session.pending:
            raise ProtocolError(session.state.value, f"UserAnswer({event.slot})")
        question = next(q for q in session.questions if q.slot == event.slot)
        self._add_turn(
            session,
            "user",
            {"type": "answer", "slot": event.slot, "value": _jsonable(event.value)},
        )
        try:
            value = coerce_answer(question.schema, event.value, event.slot, self.db)
        except AnswerSchemaError as exc:
            # schema mismatch: re-ask without consuming a round
            self._add_turn(
                session,
                "system",
                {
                    "type": "clarification",
                    "message": f"{exc} {question.text}",
                    "questions": [question.to_wire()],
                    "report": session.report.to_wire() if session.report else None,
                    "round": session.round_count,
                },
            )
            return session

        if event.slot == INTENT_FIELD:
            session.forced_intent = Intent(value)
            session.pending = ()
            session.questions = ()
            session.state = SessionState.INTERPRETING
            return session

        goal = session.goal
        assert goal is not None
        try:
            session.goal = merge_answer(goal, event.slot, value, self.db)
        except AnswerSchemaError as exc:
            self._add_turn(
                session,
                "system",
                {
                    "type": "clarification",
                    "message": f"{exc} {question.text}",
                    "questions": [question.to_wire()],
                    "report": session.report.to_wire() if session.report else None,
                    "round": session.round_count,
                },
            )
            return session
        session.pending = tuple(s for s in session.pending if s != event.slot)
        if session.pending:
            return session  # wait for the rest of the batch
        return self._decide_and_route(session)

    def _apply_outcome(self, session: DialogueSession, outcome) -> DialogueSession:
        if isinstance(outcome, _FactsOutcome):
            session.facts = outcome.facts
            session.delivered_text = outcome.text
            session.state = SessionState.DELIVERED
            self._add_turn(
                session,
                "system",
                {
                    "type": "delivered",
                    "message": outcome.text,
                    "facts": _facts_wire(outcome.facts),
                },
            )
            return session

        if outcome.infeasible is not None:
            return self._fail(
                session,
                f"infeasible: {outcome.infeasible.reason} ({outcome.infeasible.detail})",
            )
        assert outcome.plan is not None and outcome.compliance is not None
        if not outcome.compliance.overall:
            session.compliance = outcome.compliance
            return self._fail(
                session,
                "plan failed verification:\n" + verdict_to_feedback(outcome.compliance),
            )
        session.plan = outcome.plan
        session.compliance = outcome.compliance
        session.delivered_text = render_plan_text(outcome.plan)
        session.state = SessionState.DELIVERED
        self._add_turn(
            session,
            "system",
            {
                "type": "delivered",
                "message": verdict_to_feedback(outcome.compliance)
                + "\n"
                + session.delivered_text,
                "plan": outcome.plan.to_wire(),
                "compliance": outcome.compliance.to_wire(),
                "cache_hit": outcome.cache_hit,
            },
        )
        return session

    def _fail(self, session: DialogueSession, reason: str) -> DialogueSession:
        session.failure_reason = reason
        session.state = SessionState.FAILED
        payload = {"type": "failed", "reason": reason}
        if session.compliance is not None and not session.compliance.overall:
            payload["compliance"] = session.compliance.to_wire()
        self._add_turn(session, "system", payload)
        return session

    def _add_turn(self, session: DialogueSession, role: str, payload: dict) -> None:
        session.turns.append(
            Turn(seq=len(session.turns), role=role, payload=payload, ts=self.clock())
        )


def _apply_scores(goal: GoalSpec, report: ConfidenceReport) -> GoalSpec:
    """Write the calibrated scores back onto the goal's slot confidences."""
    slots = dict(goal.slots)
    for name, score in report.slot_scores.items():
        slot = slots.get(name)
        if slot is not None and slot.provenance is not Provenance.CLARIFIED:
            slots[name] = replace(slot, confidence=score.calibrated)
    return replace(goal, slots=slots)


def _clarification_message(questions: tuple[ClarificationQuestion, ...]) -> str:
    parts = ["I'm not sure about your request."]
    parts.extend(q.text for q in questions)
    parts.append("Please confirm or clarify.")
    return " ".join(parts)


def _facts_wire(facts: FactSet) -> dict:
    return {
        "v": 1,
        "codes": list(facts.codes),
        "edges": [
            {
                "origin": e.origin,
                "destination": e.destination,
                "fuel_cost": e.fuel_cost,
                "route_risk": e.route_risk,
                "flight_time": e.flight_time,
                "flyable": e.flyable,
            }
            for e in facts.edges
        ],
        "windows": [
            {
                "location": w.location,
                "closed_from": w.closed_from,
                "closed_until": w.closed_until,
                "reason": w.reason,
            }
            for w in facts.windows
        ],
    }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)
