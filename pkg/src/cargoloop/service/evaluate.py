"""Evaluation harness: seeded prompt suites with ground truth, calibration
head training on a scripted corpus, threshold sweeps, and session-store
construction for the refinement exporters.

Everything here is deterministic under a fixed seed, including the reported
latencies: the scripted backend simulates its latency from the seed, so the
emitted tables are byte-stable across runs. Latency comparisons against
externally hosted models are informational only and never asserted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from ..confidence import (
    CalibrationHead,
    ThresholdPolicy,
    features_for_slot,
    train_head,
)
from ..dialogue import DialogueEngine, SessionState
from ..domaindb import LogisticsDatabase, SolutionCache
from ..goals import DEFAULT_ESSENTIALS, Intent, Objective
from ..interpreter import NoiseProfile, ScriptedBackend
from ..refinement import RecordStore, record_from_session

_PLAN_TEMPLATES = (
    ("Fly cargo from {o} to {d} as cheaply as possible", Objective.MIN_FUEL_COST),
    ("Transport cargo from {o} to {d} as fast as possible", Objective.MIN_TIME),
    ("Ship cargo from {o} to {d} minimizing risk", Objective.MIN_RISK),
    ("Deliver cargo from {o} to {d} at the lowest cost", Objective.MIN_FUEL_COST),
    ("Move cargo from {o} to {d} quickly", Objective.MIN_TIME),
    ("Send cargo from {o} to {d} as safely as possible", Objective.MIN_RISK),
)

_WEATHER_SUFFIX = ", and watch the weather"


@dataclass(frozen=True)
class PromptCase:
    text: str
    intent: Intent
    truth: dict  # essential slot name -> expected value


def _reachable_pairs(db: LogisticsDatabase) -> list[tuple[str, str]]:
    """Ordered pairs with at least one flyable route, so plan requests can
    actually deliver."""
    adjacency: dict[str, set[str]] = {}
    for edge in db.edges:
        if edge.flyable:
            adjacency.setdefault(edge.origin, set()).add(edge.destination)
    pairs = []
    for origin in db.codes:
        seen = {origin}
        stack = [origin]
        while stack:
            node = stack.pop()
            for nxt in sorted(adjacency.get(node, ())):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        for destination in sorted(seen - {origin}):
            pairs.append((origin, destination))
    return pairs


def build_prompt_suite(
    db: LogisticsDatabase,
    count: int,
    seed: int,
    weather_fraction: float = 0.25,
) -> list[PromptCase]:
    """Deterministic labeled plan-request prompts over the database's routes."""
    rng = random.Random(seed)
    pairs = _reachable_pairs(db)
    if not pairs:
        raise ValueError("database has no reachable route pairs")
    cases = []
    for i in range(count):
        template, objective = _PLAN_TEMPLATES[i % len(_PLAN_TEMPLATES)]
        origin, destination = pairs[rng.randrange(len(pairs))]
        text = template.format(o=origin, d=destination)
        weather = rng.random() < weather_fraction
        if weather:
            text += _WEATHER_SUFFIX
        truth = {
            "origin": origin,
            "destination": destination,
            "objective": objective,
            "consider_weather": weather,
        }
        cases.append(PromptCase(text=text, intent=Intent.PLAN_REQUEST, truth=truth))
    return cases


def _essential_model_slots(case: PromptCase) -> tuple[str, ...]:
    names = list(DEFAULT_ESSENTIALS.essentials(case.intent))
    if not case.truth.get("consider_weather", False) and "consider_weather" in names:
        # unmentioned weather is a default-provenance slot with no tokens
        names.remove("consider_weather")
    return tuple(names)


def build_calibration_examples(
    db: LogisticsDatabase,
    profile: NoiseProfile,
    seed: int,
    count: int = 600,
):
    """(features, correct) pairs for head training, one per essential slot."""
    suite = build_prompt_suite(db, (count + 2) // 3, seed)
    backend = ScriptedBackend(profile, seed=seed)
    examples = []
    for case in suite:
        result = backend.interpret(case.text, db)
        for name in _essential_model_slots(case):
            feats = features_for_slot(result.trace, name)
            if feats is None:
                continue
            got = result.goal.slot_value(name)
            got = got.value if hasattr(got, "value") else got
            expected = case.truth[name]
            expected = expected.value if hasattr(expected, "value") else expected
            examples.append((feats, got == expected))
    return examples[:count]


def train_eval_head(
    db: LogisticsDatabase,
    profile: NoiseProfile,
    seed: int,
    examples: int = 600,
    epochs: int = 1500,
    rate: float = 0.5,
) -> CalibrationHead:
    """Head trained on a disjoint seeded corpus; falls back to the bootstrap
    head when the corpus is degenerate (e.g. a zero-noise profile)."""
    corpus = build_calibration_examples(db, profile, seed, examples)
    labels = {correct for _, correct in corpus}
    if len(corpus) < 10 or len(labels) < 2:
        return CalibrationHead.bootstrap()
    return train_head(corpus, epochs=epochs, rate=rate).head


def _slot_accuracy(goal, case: PromptCase) -> float:
    names = DEFAULT_ESSENTIALS.essentials(case.intent)
    if not names:
        return 0.0
    hits = 0
    for name in names:
        got = goal.slot_value(name) if goal is not None else None
        got = got.value if hasattr(got, "value") else got
        expected = case.truth.get(name, False if name == "consider_weather" else None)
        expected = expected.value if hasattr(expected, "value") else expected
        hits += got == expected
    return hits / len(names)


def _oracle_answer(case: PromptCase, slot: str):
    if slot == "intent":
        return case.intent.value
    truth = case.truth.get(slot)
    if slot == "objective" and truth is not None:
        return truth.value if hasattr(truth, "value") else truth
    if slot == "consider_weather":
        return "yes" if case.truth.get("consider_weather", False) else "no"
    if truth is not None:
        return truth
    return {"deadline": "600", "max_fuel": "5000", "max_risk": "1000", "subjects": "DEL"}[slot]


@dataclass(frozen=True)
class EvalRow:
    tau: float
    coverage: float
    retained_accuracy: float | None
    delivered_fraction: float
    rounds_hist: dict
    mean_interp_ms: float
    mean_loop_ms: float

    def to_jsonable(self) -> dict:
        return {
            "tau": self.tau,
            "coverage": self.coverage,
            "retained_accuracy": self.retained_accuracy,
            "delivered_fraction": self.delivered_fraction,
            "rounds_hist": {str(k): v for k, v in sorted(self.rounds_hist.items())},
            "mean_interp_ms": self.mean_interp_ms,
            "mean_loop_ms": self.mean_loop_ms,
        }


@dataclass(frozen=True)
class EvalResult:
    rows: tuple[EvalRow, ...]
    meta: dict

    def to_jsonable(self) -> dict:
        return {"v": 1, "meta": self.meta, "rows": [r.to_jsonable() for r in self.rows]}

    def render_table(self) -> str:
        lines = [
            "# evaluation sweep",
            f"# backend={self.meta['backend']} seed={self.meta['seed']} "
            f"prompts={self.meta['prompts']} db={self.meta['db_version'][:12]}",
            "# latencies are simulated by the scripted backend and deterministic;",
            "# comparisons against externally hosted models are informational only.",
            f"{'tau':>5}  {'coverage':>8}  {'acc(ret)':>8}  {'delivered':>9}  "
            f"{'interp_ms':>9}  {'loop_ms':>8}  rounds",
        ]
        for row in self.rows:
            acc = f"{row.retained_accuracy:.3f}" if row.retained_accuracy is not None else "    -"
            rounds = " ".join(f"{k}:{v}" for k, v in sorted(row.rounds_hist.items()))
            lines.append(
                f"{row.tau:5.2f}  {row.coverage:8.3f}  {acc:>8}  "
                f"{row.delivered_fraction:9.3f}  {row.mean_interp_ms:9.1f}  "
                f"{row.mean_loop_ms:8.1f}  {rounds}"
            )
        return "\n".join(lines) + "\n"


def parse_sweep(spec: str) -> list[float]:
    """'0.5:0.95:0.05' -> [0.5, 0.55, ..., 0.95]; a bare number is a single point."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"sweep must be start:stop:step, got {spec!r}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError("sweep step must be positive")
    points = []
    value = start
    while value <= stop + 1e-9:
        points.append(round(value, 10))
        value += step
    return points


def run_eval(
    db: LogisticsDatabase,
    profile: NoiseProfile,
    seed: int,
    sweep: Sequence[float],
    prompts: int = 200,
    max_rounds: int = 3,
    head: CalibrationHead | None = None,
    default_prior: float = 0.9,
) -> EvalResult:
    """Full-loop sweep: for each threshold, run every prompt through the
    clarification loop with an oracle user answering from ground truth.

    Coverage counts prompts accepted with zero clarification rounds; retained
    accuracy is essential-slot exact match over those prompts.
    """
    suite = build_prompt_suite(db, prompts, seed)
    if not suite:
        raise ValueError("empty prompt suite")
    head = head or train_eval_head(db, profile, seed + 1000)
    backend = ScriptedBackend(profile, seed=seed)

    rows = []
    for tau in sweep:
        cache = SolutionCache()
        engine = DialogueEngine(
            db,
            backend,
            head=head,
            policy=ThresholdPolicy(fixed=tau),
            cache=cache,
            max_rounds=max_rounds,
            default_prior=default_prior,
            clock=lambda: 0.0,
        )
        accepted = 0
        retained_hits: list[float] = []
        delivered = 0
        rounds_hist: dict[int, int] = {}
        interp_ms: list[float] = []
        loop_ms: list[float] = []
        for case in suite:
            session = engine.create_session()
            engine.submit_prompt(session, case.text)
            guard = 0
            while session.state is SessionState.AWAITING_CLARIFICATION:
                slot = session.pending[0]
                engine.submit_answer(session, slot, _oracle_answer(case, slot))
                guard += 1
                if guard > 50:  # pragma: no cover - liveness guard
                    raise RuntimeError("clarification loop did not terminate")
            first_interp_latency = session.backend_latency_ms / max(1, session.interpret_count)
            interp_ms.append(first_interp_latency)
            loop_ms.append(session.backend_latency_ms)
            rounds_hist[session.round_count] = rounds_hist.get(session.round_count, 0) + 1
            if session.state is SessionState.DELIVERED:
                delivered += 1
            if session.round_count == 0 and session.state in (
                SessionState.DELIVERED,
                SessionState.FAILED,
            ):
                # accepted on the first decision: the parse was retained
                if session.report is not None and session.report.accepted:
                    accepted += 1
                    retained_hits.append(_slot_accuracy(session.goal, case))
        coverage = accepted / len(suite)
        accuracy = sum(retained_hits) / len(retained_hits) if retained_hits else None
        rows.append(
            EvalRow(
                tau=tau,
                coverage=coverage,
                retained_accuracy=accuracy,
                delivered_fraction=delivered / len(suite),
                rounds_hist=rounds_hist,
                mean_interp_ms=sum(interp_ms) / len(interp_ms),
                mean_loop_ms=sum(loop_ms) / len(loop_ms),
            )
        )
    meta = {
        "seed": seed,
        "prompts": prompts,
        "backend": backend.backend_id,
        "db_version": db.version,
        "max_rounds": max_rounds,
        "sweep": [float(t) for t in sweep],
    }
    return EvalResult(rows=tuple(rows), meta=meta)


def build_session_store(
    db: LogisticsDatabase,
    profile: NoiseProfile,
    seed: int,
    count: int,
    tau: float = 0.85,
    max_rounds: int = 3,
    head: CalibrationHead | None = None,
    default_prior: float = 0.9,
    answer_fraction: float = 1.0,
) -> RecordStore:
    """Run ``count`` prompts through the loop and collect finished sessions.

    The oracle user answers clarification questions for ``answer_fraction``
    of the sessions that ask; the rest fail on the round budget and land in
    the store as failed sessions. Sessions accepted without any clarification
    become unlabeled records; clarified ones are human_clarified.
    """
    suite = build_prompt_suite(db, count, seed)
    head = head or train_eval_head(db, profile, seed + 1000)
    backend = ScriptedBackend(profile, seed=seed)
    engine = DialogueEngine(
        db,
        backend,
        head=head,
        policy=ThresholdPolicy(fixed=tau),
        max_rounds=max_rounds,
        default_prior=default_prior,
        clock=lambda: 0.0,
    )
    rng = random.Random(seed + 17)
    store = RecordStore()
    for i, case in enumerate(suite):
        session = engine.create_session()
        engine.submit_prompt(session, case.text)
        answer = rng.random() < answer_fraction
        guard = 0
        while session.state is SessionState.AWAITING_CLARIFICATION:
            if not answer:
                break  # user walks away; the unfinished session is dropped below
            slot = session.pending[0]
            engine.submit_answer(session, slot, _oracle_answer(case, slot))
            guard += 1
            if guard > 50:  # pragma: no cover
                raise RuntimeError("clarification loop did not terminate")
        if session.state is SessionState.AWAITING_CLARIFICATION:
            continue  # abandoned session: not a finished record
        store.append(
            record_from_session(
                session,
                record_id=store.next_id(),
                truth=case.truth,
                created_at=float(i),
            )
        )
    return store
