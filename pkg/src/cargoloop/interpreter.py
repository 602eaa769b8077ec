"""Goal interpretation backends.

Two interchangeable backends turn free-form text into a goal plus a token
trace: a deterministic scripted matcher for offline runs and tests, and a
remote chat-completions client. The scripted backend's noise model couples
ground-truth correctness with trace flatness by construction: a wrongly
filled slot always carries a near-uniform alternative distribution. That
coupling is what makes closed-loop calibration experiments possible without
any external model.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import httpx

from .canonical import format_number
from .domaindb import LogisticsDatabase
from .errors import BackendError, GoalDecodeError
from .goals import GoalSpec, Intent, Objective, Provenance, Slot, canonical_decode

TOP_K = 4  # alternatives requested from remote backends / emitted for codes


@dataclass(frozen=True)
class TraceToken:
    text: str
    logprob: float  # chosen log-probability, <= 0
    alternatives: tuple[tuple[str, float], ...]  # (surface, logprob), desc
    slot: str | None = None  # slot this token contributes to, if any


@dataclass(frozen=True)
class TokenTrace:
    tokens: tuple[TraceToken, ...] = ()
    degraded: bool = False  # set when the backend returned no log-probabilities

    def slot_tokens(self, slot_name: str) -> tuple[TraceToken, ...]:
        return tuple(t for t in self.tokens if t.slot == slot_name)


@dataclass(frozen=True)
class InterpretResult:
    goal: GoalSpec
    trace: TokenTrace
    backend_id: str
    latency_ms: float
    diagnostic: str | None = None


@dataclass(frozen=True)
class NoiseProfile:
    """Seeded error model for the scripted backend.

    ``slot_error`` maps a slot name (or "intent") to its substitution rate;
    anything absent falls back to ``default_error``. With the spreads left at
    zero, wrong slots emit an exactly uniform distribution over
    ``flat_choices`` alternatives and correct slots emit ``confident_prob``
    exactly, which keeps the analytic test cases exact. Nonzero spreads widen
    both bands so that confidence varies continuously across a corpus, and
    ``confident_wrong_rate`` lets a substituted slot occasionally keep a
    peaked distribution (a hallucination): correctness then correlates with
    trace probabilities without being fully determined by them.
    """

    default_error: float = 0.0
    slot_error: Mapping[str, float] = field(default_factory=dict)
    intent_error: float = 0.0
    flat_choices: int = TOP_K
    confident_prob: float = 0.95
    confident_spread: float = 0.0
    flat_spread: float = 0.0
    confident_wrong_rate: float = 0.0
    confident_wrong_band: tuple[float, float] = (0.6, 0.8)

    def error_for(self, slot_name: str) -> float:
        return float(self.slot_error.get(slot_name, self.default_error))


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "scripted" | "remote"
    seed: int | None = None
    profile: NoiseProfile = NoiseProfile()
    endpoint: str | None = None
    model: str | None = None
    api_key: str | None = None
    timeout_s: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind == "scripted":
            if self.seed is None:
                raise ValueError("scripted backend requires a seed")
        elif self.kind == "remote":
            if not self.endpoint:
                raise ValueError("remote backend requires an endpoint")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")


def make_backend(config: BackendConfig, client: httpx.Client | None = None):
    if config.kind == "scripted":
        return ScriptedBackend(profile=config.profile, seed=config.seed or 0)
    return RemoteBackend(config, client=client)


def interpret(
    x: str,
    db: LogisticsDatabase,
    backend: "ScriptedBackend | RemoteBackend",
    forced_intent: Intent | None = None,
) -> InterpretResult:
    """Map user text to a goal plus trace via the given backend.

    The prompt must be non-empty after trimming. Malformed backend output
    degrades to an unknown-intent goal with a diagnostic; timeouts and
    unreachable remotes raise BackendError.
    """
    if not x or not x.strip():
        raise ValueError("prompt must be non-empty")
    return backend.interpret(x, db, forced_intent=forced_intent)


# -- scripted backend ---------------------------------------------------------

_PLAN_VERBS = re.compile(
    r"\b(fly|deliver|transport|ship|move|send|carry|dispatch|haul|airlift|reroute)\b", re.I
)
_INFO_CUES = re.compile(
    r"\b(info|information|about|tell|what|which|show|details|facts|status|describe|know)\b",
    re.I,
)
_WEATHER_CUES = re.compile(
    r"\b(weather|storm|storms|wind|winds|typhoon|sandstorm|fog|monsoon)\b", re.I
)

_DEADLINE_PATTERNS = tuple(
    re.compile(p, re.I)
    for p in (
        r"\bwithin\s+(\d+)\s*minutes?\b",
        r"\bby\s+minute\s+(\d+)\b",
        r"\bin\s+at\s+most\s+(\d+)\s*minutes?\b",
        r"\bdeadline\s+(?:of\s+)?(\d+)\s*minutes?\b",
    )
)
_FUEL_PATTERNS = tuple(
    re.compile(p, re.I)
    for p in (
        r"\bfuel\s+(?:under|below)\s+(\d+(?:\.\d+)?)\b",
        r"\bfuel\s+budget\s+(?:of\s+)?(\d+(?:\.\d+)?)\b",
        r"\bat\s+most\s+(\d+(?:\.\d+)?)\s+(?:units\s+of\s+)?fuel\b",
        r"\bkeeping\s+fuel\s+under\s+(\d+(?:\.\d+)?)\b",
    )
)
_RISK_PATTERNS = tuple(
    re.compile(p, re.I)
    for p in (
        r"\brisk\s+(?:under|below)\s+(\d+(?:\.\d+)?)\b",
        r"\brisk\s+budget\s+(?:of\s+)?(\d+(?:\.\d+)?)\b",
        r"\bat\s+most\s+(\d+(?:\.\d+)?)\s+risk\b",
        r"\bkeeping\s+risk\s+under\s+(\d+(?:\.\d+)?)\b",
    )
)

_OBJECTIVE_KEYS = (
    (
        Objective.MIN_FUEL_COST,
        re.compile(r"\b(cheap(?:est|ly)?|cost|costs|economical(?:ly)?|fuel)\b", re.I),
    ),
    (
        Objective.MIN_TIME,
        re.compile(r"\b(fast(?:est)?|quick(?:ly)?|soon(?:est)?|asap|urgent(?:ly)?|time)\b", re.I),
    ),
    (
        Objective.MIN_RISK,
        re.compile(r"\b(safe(?:st|ly)?|risk|risks|secure(?:ly)?)\b", re.I),
    ),
)


def _stream(seed: int, x: str, *tags: str) -> random.Random:
    """Independent deterministic RNG stream per (seed, prompt, tag)."""
    material = f"{seed}|{x}|{'|'.join(tags)}".encode("utf-8", errors="backslashreplace")
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _surface(value) -> str:
    if isinstance(value, Objective):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return format_number(float(value))
    return str(value)


class ScriptedBackend:
    """Deterministic keyword/alias interpreter with a seeded noise model.

    Identical (prompt, profile, seed) triples produce byte-identical results.
    Never raises on arbitrary input text.
    """

    def __init__(self, profile: NoiseProfile | None = None, seed: int = 0):
        self.profile = profile or NoiseProfile()
        self.seed = int(seed)
        self.backend_id = f"scripted:{self.seed}"

    # .. noisy value emission ..............................................

    def _emit_value(
        self,
        x: str,
        slot_name: str,
        true_value,
        candidates: Sequence,
        missing: bool = False,
        force_wrong: bool = False,
        tag: str = "",
    ) -> tuple[object, TraceToken]:
        """Pick the slot's final value and fabricate its trace token.

        ``missing=True`` means the text gave no signal for this slot: the
        backend guesses a candidate and emits a flat distribution regardless
        of the error rate. ``tag`` separates the RNG streams of slots that
        emit more than one token (subjects).
        """
        profile = self.profile
        pool = list(candidates)
        if true_value is not None and true_value not in pool:
            pool.insert(0, true_value)
        k = max(2, min(profile.flat_choices, len(pool)))

        wrong = (
            missing
            or force_wrong
            or _stream(self.seed, x, slot_name, tag, "err").random()
            < profile.error_for(slot_name)
        )
        rng_pick = _stream(self.seed, x, slot_name, tag, "pick")
        rng_q = _stream(self.seed, x, slot_name, tag, "q")

        if wrong:
            distractors = [c for c in pool if c != true_value]
            chosen = rng_pick.choice(distractors) if distractors else true_value
            hallucinate = (
                profile.confident_wrong_rate > 0.0
                and _stream(self.seed, x, slot_name, tag, "cw").random()
                < profile.confident_wrong_rate
            )
            if hallucinate:
                lo, hi = profile.confident_wrong_band
                q = lo + (hi - lo) * rng_q.random()
            else:
                base = 1.0 / k
                q = min(0.49, base + profile.flat_spread * rng_q.random())
        else:
            chosen = true_value
            q = profile.confident_prob - profile.confident_spread * rng_q.random()
            q = min(0.999, max(0.505, q))

        others = []
        if wrong and true_value is not None and true_value != chosen:
            others.append(true_value)  # ground truth stays among the top alternatives
        others.extend(c for c in pool if c != chosen and c not in others)
        others = others[: k - 1]
        rest_p = (1.0 - q) / len(others) if others else 0.0
        alternatives = [(_surface(chosen), math.log(q))]
        alternatives.extend((_surface(o), math.log(rest_p)) for o in others if rest_p > 0)
        alternatives.sort(key=lambda a: -a[1])
        token = TraceToken(
            text=_surface(chosen),
            logprob=math.log(q),
            alternatives=tuple(alternatives),
            slot=slot_name,
        )
        return chosen, token

    # .. text analysis .....................................................

    def _mentions(self, x: str, db: LogisticsDatabase) -> list[tuple[int, str]]:
        table = db.alias_table()
        if not table:
            return []
        by_alias: dict[str, str] = {}
        for alias, code in table:
            by_alias.setdefault(alias, code)
        pattern = "|".join(re.escape(alias) for alias, _ in table)
        rx = re.compile(rf"(?<![a-z0-9])({pattern})(?![a-z0-9])", re.I)
        out = []
        for m in rx.finditer(x):
            out.append((m.start(), by_alias[m.group(1).lower()]))
        return out

    def _route_endpoints(self, x: str, mentions: list[tuple[int, str]]):
        origin = destination = None
        claimed: set[int] = set()
        for idx, (start, code) in enumerate(mentions):
            words = x[:start].lower().split()
            lead = words[-1] if words else ""
            if lead == "from" and origin is None:
                origin = code
                claimed.add(idx)
            elif lead in ("to", "into", "toward", "towards") and destination is None:
                destination = code
                claimed.add(idx)
        rest = [code for i, (_, code) in enumerate(mentions) if i not in claimed]
        if origin is None and rest:
            origin = rest.pop(0)
        if destination is None and rest:
            destination = rest.pop(0)
        return origin, destination

    def _detect_intent(self, x: str) -> Intent:
        if _PLAN_VERBS.search(x):
            return Intent.PLAN_REQUEST
        if _INFO_CUES.search(x):
            return Intent.INFO_QUERY
        return Intent.UNKNOWN

    @staticmethod
    def _extract_budgets(x: str):
        """Budget/deadline phrases, plus the text with those spans masked so
        their keywords cannot leak into objective detection."""
        masked = x
        found = {}
        for name, patterns, caster in (
            ("deadline", _DEADLINE_PATTERNS, int),
            ("max_fuel", _FUEL_PATTERNS, float),
            ("max_risk", _RISK_PATTERNS, float),
        ):
            for rx in patterns:
                m = rx.search(masked)
                if m:
                    try:
                        found[name] = caster(m.group(1))
                    except ValueError:
                        continue
                    masked = masked[: m.start()] + " " * (m.end() - m.start()) + masked[m.end() :]
                    break
        return found, masked

    @staticmethod
    def _detect_objective(masked: str) -> Objective | None:
        best: tuple[int, Objective] | None = None
        for objective, rx in _OBJECTIVE_KEYS:
            m = rx.search(masked)
            if m and (best is None or m.start() < best[0]):
                best = (m.start(), objective)
        return best[1] if best else None

    # .. main entry ........................................................

    def interpret(
        self,
        x: str,
        db: LogisticsDatabase,
        forced_intent: Intent | None = None,
    ) -> InterpretResult:
        profile = self.profile
        latency = 2.0 + 6.0 * _stream(self.seed, x, "latency").random()
        codes = sorted(db.codes)

        intent = forced_intent or self._detect_intent(x)
        tokens: list[TraceToken] = []

        intent_flip = (
            forced_intent is None
            and intent is not Intent.UNKNOWN
            and _stream(self.seed, x, "intent", "err").random() < profile.intent_error
        )
        if intent is Intent.UNKNOWN or intent_flip:
            flat = math.log(1.0 / 3.0)
            alternatives = tuple((i.value, flat) for i in Intent)
            tokens.append(
                TraceToken(text=Intent.UNKNOWN.value, logprob=flat, alternatives=alternatives)
            )
            goal = GoalSpec(Intent.UNKNOWN, {}, raw_prompt=x)
            return InterpretResult(
                goal=goal,
                trace=TokenTrace(tokens=tuple(tokens)),
                backend_id=self.backend_id,
                latency_ms=latency,
            )

        q_intent = min(0.999, max(0.505, profile.confident_prob))
        other_p = (1.0 - q_intent) / 2.0
        tokens.append(
            TraceToken(
                text=intent.value,
                logprob=math.log(q_intent),
                alternatives=tuple(
                    sorted(
                        [(intent.value, math.log(q_intent))]
                        + [(i.value, math.log(other_p)) for i in Intent if i is not intent],
                        key=lambda a: -a[1],
                    )
                ),
            )
        )

        mentions = self._mentions(x, db)
        slots: dict[str, Slot] = {}

        def fill(slot_name: str, true_value, candidates, missing=False) -> None:
            value, token = self._emit_value(x, slot_name, true_value, candidates, missing)
            tokens.append(token)
            slots[slot_name] = Slot(slot_name, value, confidence=0.0, provenance=Provenance.MODEL)

        if intent is Intent.INFO_QUERY:
            subject_codes = list(dict.fromkeys(code for _, code in mentions))
            if not subject_codes:
                value, token = self._emit_value(x, "subjects", None, codes, missing=True)
                tokens.append(token)
                subjects = [value]
            else:
                wrong = (
                    _stream(self.seed, x, "subjects", "slot-err").random()
                    < profile.error_for("subjects")
                )
                subjects = []
                for pos, code in enumerate(subject_codes):
                    value, token = self._emit_value(
                        x,
                        "subjects",
                        code,
                        codes,
                        force_wrong=wrong and pos == 0,
                        tag=str(pos),
                    )
                    subjects.append(value)
                    tokens.append(token)
            slots["subjects"] = Slot("subjects", subjects, 0.0, Provenance.MODEL)
        else:  # plan request
            origin, destination = self._route_endpoints(x, mentions)
            fill("origin", origin, codes, missing=origin is None)
            fill("destination", destination, codes, missing=destination is None)

            budgets, masked = self._extract_budgets(x)
            objective = self._detect_objective(masked)
            fill("objective", objective, list(Objective), missing=objective is None)

            if "deadline" in budgets:
                v = budgets["deadline"]
                fill("deadline", v, sorted({v, v + 60, v * 2, max(0, v // 2)}))
            if "max_fuel" in budgets:
                v = budgets["max_fuel"]
                fill("max_fuel", v, sorted({v, v + 100, v * 2, round(v / 2, 2)}))
            if "max_risk" in budgets:
                v = budgets["max_risk"]
                fill("max_risk", v, sorted({v, v + 50, v * 2, round(v / 2, 2)}))

            if _WEATHER_CUES.search(x):
                fill("consider_weather", True, [True, False])
            else:
                slots["consider_weather"] = Slot(
                    "consider_weather", False, 0.0, Provenance.DEFAULT
                )

        goal = GoalSpec(intent, slots, raw_prompt=x)
        return InterpretResult(
            goal=goal,
            trace=TokenTrace(tokens=tuple(tokens)),
            backend_id=self.backend_id,
            latency_ms=latency,
        )


# -- remote backend -----------------------------------------------------------

_SCHEMA_PROMPT = """You convert logistics requests into a strict JSON goal object.
Respond with ONLY the JSON, no prose, matching exactly:
{{"v":1,"intent":"info_query"|"plan_request"|"unknown","prompt":"<the user text>","slots":{{...}}}}
Slot bodies are {{"value":...,"confidence":0.0,"provenance":"model"}}.
Slot names: subjects (list of codes), origin, destination, objective
("min_fuel_cost"|"min_time"|"min_risk"), deadline (minutes), consider_weather
(boolean), max_fuel, max_risk. Known location codes: {codes}.
Aliases: {aliases}. Use intent "unknown" when unsure."""


class RemoteBackend:
    """HTTP chat-completions client that requests token log-probabilities."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self.backend_id = f"remote:{config.model or 'default'}"
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._gate = threading.BoundedSemaphore(config.max_in_flight)

    def interpret(
        self,
        x: str,
        db: LogisticsDatabase,
        forced_intent: Intent | None = None,
    ) -> InterpretResult:
        aliases = "; ".join(
            f"{alias}={code}" for alias, code in db.alias_table() if alias != code.lower()
        )
        system = _SCHEMA_PROMPT.format(codes=", ".join(db.codes), aliases=aliases)
        user = x
        if forced_intent is not None:
            user += f"\n(The request kind is confirmed to be: {forced_intent.value})"
        body = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": 0,
            "logprobs": True,
            "top_logprobs": TOP_K,
        }
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"

        start = time.perf_counter()
        try:
            with self._gate:
                response = self._client.post(
                    self.config.endpoint, json=body, headers=headers
                )
        except httpx.TimeoutException as exc:
            raise BackendError(f"backend timeout: {exc}", retry_after_s=5.0) from exc
        except httpx.TransportError as exc:
            raise BackendError(f"backend unreachable: {exc}") from exc
        latency = (time.perf_counter() - start) * 1000.0

        if response.status_code >= 400:
            retry_after = None
            header = response.headers.get("retry-after")
            if header is not None:
                try:
                    retry_after = float(header)
                except ValueError:
                    retry_after = None
            if retry_after is None and response.status_code in (429, 503, 504):
                retry_after = 10.0
            raise BackendError(
                f"backend HTTP {response.status_code}", retry_after_s=retry_after
            )

        try:
            data = response.json()
            choice = data["choices"][0]
            content = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            return self._unknown(x, latency, f"malformed backend response: {exc}")

        logprob_items = None
        logprobs_block = choice.get("logprobs")
        if isinstance(logprobs_block, dict):
            logprob_items = logprobs_block.get("content")

        try:
            goal = canonical_decode(_strip_fences(content))
        except GoalDecodeError as exc:
            trace = _trace_from_logprobs(logprob_items, content, {})
            return InterpretResult(
                goal=GoalSpec(Intent.UNKNOWN, {}, raw_prompt=x),
                trace=trace,
                backend_id=self.backend_id,
                latency_ms=latency,
                diagnostic=f"schema decode failed: {exc}",
            )

        goal, dropped = _drop_fabricated_codes(goal, x, db)
        goal = replace(goal, raw_prompt=x)
        spans = _slot_value_spans(_strip_fences(content), goal)
        trace = _trace_from_logprobs(logprob_items, content, spans)
        if trace.degraded:
            trace = _degraded_trace(goal)
        diagnostic = (
            f"dropped fabricated location codes: {', '.join(sorted(dropped))}"
            if dropped
            else None
        )
        return InterpretResult(
            goal=goal,
            trace=trace,
            backend_id=self.backend_id,
            latency_ms=latency,
            diagnostic=diagnostic,
        )

    def _unknown(self, x: str, latency: float, diagnostic: str) -> InterpretResult:
        return InterpretResult(
            goal=GoalSpec(Intent.UNKNOWN, {}, raw_prompt=x),
            trace=TokenTrace(degraded=True),
            backend_id=self.backend_id,
            latency_ms=latency,
            diagnostic=diagnostic,
        )


def _strip_fences(content: str) -> str:
    text = content.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\n?", "", text)
        text = re.sub(r"\n?```$", "", text)
    return text.strip()


def _drop_fabricated_codes(goal: GoalSpec, x: str, db: LogisticsDatabase):
    """Remove location codes that appear in neither the database nor the text."""
    lowered = x.lower()
    dropped: set[str] = set()

    def known(code: str) -> bool:
        return db.has_location(code) or code.lower() in lowered

    slots = dict(goal.slots)
    for name in ("origin", "destination"):
        slot = slots.get(name)
        if slot is not None and isinstance(slot.value, str) and not known(slot.value):
            dropped.add(slot.value)
            del slots[name]
    subj = slots.get("subjects")
    if subj is not None and isinstance(subj.value, (list, tuple)):
        kept = [c for c in subj.value if isinstance(c, str) and known(c)]
        dropped.update(c for c in subj.value if c not in kept)
        if kept:
            slots["subjects"] = Slot("subjects", kept, subj.confidence, subj.provenance)
        else:
            del slots["subjects"]
    if not dropped:
        return goal, dropped
    return GoalSpec(goal.intent, slots, raw_prompt=goal.raw_prompt), dropped


def _slot_value_spans(content: str, goal: GoalSpec) -> dict[str, tuple[int, int]]:
    """Character spans of each slot's encoded value inside the response text."""
    spans: dict[str, tuple[int, int]] = {}
    for name, slot in goal.slots.items():
        key = f'"{name}"'
        at = content.find(key)
        if at < 0:
            continue
        value_at = content.find('"value"', at)
        if value_at < 0:
            continue
        colon = content.find(":", value_at)
        if colon < 0:
            continue
        end = colon + 1
        depth = 0
        while end < len(content):
            ch = content[end]
            if ch in "[{":
                depth += 1
            elif ch in "]}":
                if depth == 0:
                    break
                depth -= 1
            elif ch == "," and depth == 0:
                break
            end += 1
        spans[name] = (colon + 1, end)
    return spans


def _trace_from_logprobs(items, content: str, spans: dict[str, tuple[int, int]]) -> TokenTrace:
    if not items:
        return TokenTrace(degraded=True)
    tokens: list[TraceToken] = []
    offset = 0
    for item in items:
        try:
            text = item["token"]
            logprob = min(0.0, float(item["logprob"]))
        except (KeyError, TypeError, ValueError):
            return TokenTrace(degraded=True)
        alts = []
        for alt in item.get("top_logprobs") or []:
            try:
                alts.append((alt["token"], min(0.0, float(alt["logprob"]))))
            except (KeyError, TypeError, ValueError):
                continue
        if not any(a[0] == text for a in alts):
            alts.append((text, logprob))
        alts.sort(key=lambda a: -a[1])
        start, end = offset, offset + len(text)
        slot = None
        for name, (s, e) in spans.items():
            if start < e and end > s:  # overlap
                slot = name
                break
        tokens.append(TraceToken(text=text, logprob=logprob, alternatives=tuple(alts), slot=slot))
        offset = end
    return TokenTrace(tokens=tuple(tokens))


def _degraded_trace(goal: GoalSpec) -> TokenTrace:
    """Single-alternative tokens, one per model slot, when log-probs are absent."""
    tokens = []
    for name, slot in goal.slots.items():
        if slot.provenance is not Provenance.MODEL:
            continue
        surface = _surface(slot.value) if not isinstance(slot.value, list) else json.dumps(slot.value)
        tokens.append(
            TraceToken(text=surface, logprob=0.0, alternatives=((surface, 0.0),), slot=name)
        )
    return TokenTrace(tokens=tuple(tokens), degraded=True)
