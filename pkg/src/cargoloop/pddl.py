"""Reader and printer for the logistics planning-fact subset.

The grammar is deliberately closed: predicates ``can-fly`` and ``at``,
edge fluents ``fuel-cost`` / ``route-risk`` / ``flight-time``, and the
plan-total fluents ``total-fuel-cost`` / ``total-time`` / ``total-risk``.
Canonical text is lowercase, one item per line, single spaces, numbers
without trailing zeros. Parsing is whitespace-insensitive and
case-normalizing, so upstream text in conventional uppercase code style
round-trips into the canonical form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .canonical import format_number
from .domaindb import FactSet, LogisticsDatabase
from .errors import PddlParseError
from .goals import GoalSpec, Intent, Objective

PREDICATE_ARITY = {"can-fly": 2, "at": 2}
FLUENT_ARITY = {
    "fuel-cost": 2,
    "route-risk": 2,
    "flight-time": 2,
    "total-fuel-cost": 0,
    "total-time": 0,
    "total-risk": 0,
}
OBJECTIVE_FLUENT = {
    Objective.MIN_FUEL_COST: "total-fuel-cost",
    Objective.MIN_TIME: "total-time",
    Objective.MIN_RISK: "total-risk",
}

#: Per-edge fluent emission order, matching the conventional listing order of
#: the upstream fact style (risk before fuel before time).
_EDGE_FLUENTS = ("route-risk", "fuel-cost", "flight-time")


@dataclass(frozen=True)
class Predicate:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class NumericAssign:
    fluent: str
    args: tuple[str, ...]
    value: float


@dataclass(frozen=True)
class GoalCondition:
    """Conjunction of predicates inside a problem's :goal section."""

    predicates: tuple[Predicate, ...]


@dataclass(frozen=True)
class Metric:
    direction: str  # "minimize" | "maximize"
    fluent: str


Item = Predicate | NumericAssign | GoalCondition | Metric


@dataclass(frozen=True)
class PddlAst:
    items: tuple[Item, ...]
    problem: str | None = None  # set when the text is a (define (problem ...)) form


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "unknown_location" | "negative_fluent" | "duplicate_assign"
    message: str


# -- emission ---------------------------------------------------------------


def _emit_item(item: Item) -> str:
    if isinstance(item, Predicate):
        return "(" + " ".join((item.name, *item.args)) + ")"
    if isinstance(item, NumericAssign):
        head = "(" + " ".join((item.fluent, *item.args)) + ")" if item.args else f"({item.fluent})"
        return f"(= {head} {format_number(item.value)})"
    if isinstance(item, GoalCondition):
        inner = " ".join(_emit_item(p) for p in item.predicates)
        if len(item.predicates) == 1:
            return f"(:goal {inner})"
        return f"(:goal (and {inner}))"
    if isinstance(item, Metric):
        return f"(:metric {item.direction} ({item.fluent}))"
    raise TypeError(f"not an item: {item!r}")


def emit(ast: PddlAst) -> str:
    """Canonical text for an AST: deterministic and bit-exact.

    Bare fact listings emit one item per line. Problem forms wrap the init
    facts in a ``define`` with :goal and :metric sections.
    """
    if ast.problem is None:
        return "\n".join(_emit_item(i) for i in ast.items)
    init = [i for i in ast.items if isinstance(i, (Predicate, NumericAssign))]
    sections = [f"(define (problem {ast.problem})", "(:init"]
    sections.extend(_emit_item(i) for i in init)
    sections.append(")")
    sections.extend(_emit_item(i) for i in ast.items if isinstance(i, (GoalCondition, Metric)))
    sections.append(")")
    return "\n".join(sections)


def facts_to_ast(facts: FactSet) -> PddlAst:
    """Fact listing for an info query: can-fly block, then per-edge fluents.

    Weather windows have no representation in the closed grammar and are
    surfaced through the structured wire payload instead.
    """
    edges = sorted(facts.edges, key=lambda e: (e.origin, e.destination))
    items: list[Item] = [
        Predicate("can-fly", (e.origin.lower(), e.destination.lower()))
        for e in edges
        if e.flyable
    ]
    for e in edges:
        args = (e.origin.lower(), e.destination.lower())
        values = {
            "route-risk": e.route_risk,
            "fuel-cost": e.fuel_cost,
            "flight-time": e.flight_time,
        }
        for fluent in _EDGE_FLUENTS:
            items.append(NumericAssign(fluent, args, values[fluent]))
    return PddlAst(items=tuple(items))


def problem_to_ast(goal: GoalSpec, facts: FactSet) -> PddlAst:
    """Problem instance for an accepted plan request."""
    if goal.intent is not Intent.PLAN_REQUEST:
        raise ValueError(f"problem emission needs a plan request, got {goal.intent.value}")
    origin = str(goal.slot_value("origin")).lower()
    destination = str(goal.slot_value("destination")).lower()
    objective = goal.slot_value("objective")
    if not isinstance(objective, Objective):
        objective = Objective(objective)
    base = facts_to_ast(facts)
    items = list(base.items)
    items.append(GoalCondition((Predicate("at", ("cargo", destination)),)))
    items.append(Metric("minimize", OBJECTIVE_FLUENT[objective]))
    return PddlAst(items=tuple(items), problem=f"route-{origin}-{destination}")


def emit_facts(facts: FactSet) -> str:
    return emit(facts_to_ast(facts))


def emit_problem(goal: GoalSpec, facts: FactSet) -> str:
    return emit(problem_to_ast(goal, facts))


# -- parsing ----------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # "(" | ")" | "symbol" | "number"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> Iterator[_Token]:
    line = 1
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        if ch == ";":  # comment to end of line
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield _Token(ch, ch, line, col)
            col += 1
            i += 1
            continue
        start = i
        start_col = col
        while i < n and not text[i].isspace() and text[i] not in "();":
            i += 1
            col += 1
        word = text[start:i]
        kind = "number" if _is_number(word) else "symbol"
        yield _Token(kind, word, line, start_col)


def _is_number(word: str) -> bool:
    try:
        float(word)
    except ValueError:
        return False
    return True


class _Reader:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expected: tuple[str, ...]) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("(", "", 1, 0)
            raise PddlParseError(
                "unexpected end of input",
                line=last.line,
                column=last.column + len(last.text),
                expected=expected,
            )
        self.pos += 1
        return tok

    def expect(self, kind: str, expected: tuple[str, ...]) -> _Token:
        tok = self.next(expected)
        if tok.kind != kind:
            raise PddlParseError(
                f"unexpected token {tok.text!r}",
                line=tok.line,
                column=tok.column,
                expected=expected,
            )
        return tok

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _fail(tok: _Token, message: str, expected: tuple[str, ...] = ()) -> PddlParseError:
    return PddlParseError(message, line=tok.line, column=tok.column, expected=expected)


_ITEM_HEADS = tuple(sorted(PREDICATE_ARITY)) + ("=",)


def _parse_item(r: _Reader) -> Item:
    r.expect("(", ("(",))
    head = r.next(_ITEM_HEADS)
    if head.kind != "symbol":
        raise _fail(head, f"unexpected token {head.text!r}", _ITEM_HEADS)
    name = head.text.lower()

    if name == "=":
        r.expect("(", ("(",))
        fname_tok = r.next(tuple(sorted(FLUENT_ARITY)))
        fname = fname_tok.text.lower()
        if fname not in FLUENT_ARITY:
            raise _fail(fname_tok, f"unknown fluent {fname_tok.text!r}", tuple(sorted(FLUENT_ARITY)))
        args = []
        for _ in range(FLUENT_ARITY[fname]):
            arg = r.next(("argument",))
            if arg.kind != "symbol":
                raise _fail(arg, f"unexpected token {arg.text!r}", ("argument",))
            args.append(arg.text.lower())
        r.expect(")", (")",))
        value_tok = r.next(("number",))
        if value_tok.kind != "number":
            raise _fail(value_tok, f"expected a number, got {value_tok.text!r}", ("number",))
        r.expect(")", (")",))
        return NumericAssign(fname, tuple(args), float(value_tok.text))

    if name in PREDICATE_ARITY:
        args = []
        for _ in range(PREDICATE_ARITY[name]):
            arg = r.next(("argument",))
            if arg.kind != "symbol":
                raise _fail(arg, f"unexpected token {arg.text!r}", ("argument",))
            args.append(arg.text.lower())
        r.expect(")", (")",))
        return Predicate(name, tuple(args))

    raise _fail(head, f"unknown head symbol {head.text!r}", _ITEM_HEADS)


def _parse_goal_section(r: _Reader) -> GoalCondition:
    r.expect("(", ("(",))
    head = r.next(("and",) + tuple(sorted(PREDICATE_ARITY)))
    if head.kind != "symbol":
        raise _fail(head, f"unexpected token {head.text!r}", ("and", "predicate"))
    if head.text.lower() == "and":
        preds = []
        while True:
            tok = r.peek()
            if tok is None:
                raise _fail(head, "unterminated goal conjunction", (")",))
            if tok.kind == ")":
                r.next((")",))
                break
            item = _parse_item(r)
            if not isinstance(item, Predicate):
                raise _fail(tok, "goal conjunction may only contain predicates")
            preds.append(item)
        r.expect(")", (")",))
        return GoalCondition(tuple(preds))
    # single predicate: rewind to parse it as an item
    r.pos -= 2
    item = _parse_item(r)
    if not isinstance(item, Predicate):
        raise _fail(head, "goal must be a predicate")
    r.expect(")", (")",))
    return GoalCondition((item,))


def parse(text: str) -> PddlAst:
    """Parse canonical or hand-written fact text.

    ``parse(emit(ast)) == ast`` for every valid AST; errors carry the line,
    column, and the token set that would have been accepted.
    """
    r = _Reader(text)
    items: list[Item] = []
    problem: str | None = None

    first = r.peek()
    if first is None:
        return PddlAst(items=())

    # Problem form: (define (problem NAME) (:init ...) (:goal ...) (:metric ...))
    if (
        first.kind == "("
        and r.pos + 1 < len(r.tokens)
        and r.tokens[r.pos + 1].kind == "symbol"
        and r.tokens[r.pos + 1].text.lower() == "define"
    ):
        r.next(("(",))
        r.next(("define",))
        r.expect("(", ("(",))
        kw = r.next(("problem",))
        if kw.kind != "symbol" or kw.text.lower() != "problem":
            raise _fail(kw, f"unexpected token {kw.text!r}", ("problem",))
        name_tok = r.next(("name",))
        if name_tok.kind != "symbol":
            raise _fail(name_tok, "expected a problem name", ("name",))
        problem = name_tok.text.lower()
        r.expect(")", (")",))

        while True:
            tok = r.peek()
            if tok is None:
                raise _fail(name_tok, "unterminated problem form", (")",))
            if tok.kind == ")":
                r.next((")",))
                break
            r.expect("(", ("(",))
            section = r.next((":init", ":goal", ":metric"))
            sec = section.text.lower()
            if sec == ":init":
                while True:
                    inner = r.peek()
                    if inner is None:
                        raise _fail(section, "unterminated :init section", (")",))
                    if inner.kind == ")":
                        r.next((")",))
                        break
                    items.append(_parse_item(r))
            elif sec == ":goal":
                items.append(_parse_goal_section(r))
            elif sec == ":metric":
                direction = r.next(("minimize", "maximize"))
                if direction.kind != "symbol" or direction.text.lower() not in (
                    "minimize",
                    "maximize",
                ):
                    raise _fail(direction, f"unexpected token {direction.text!r}", ("minimize", "maximize"))
                r.expect("(", ("(",))
                fluent = r.next(tuple(sorted(FLUENT_ARITY)))
                fl = fluent.text.lower()
                if fl not in FLUENT_ARITY:
                    raise _fail(fluent, f"unknown fluent {fluent.text!r}", tuple(sorted(FLUENT_ARITY)))
                r.expect(")", (")",))
                r.expect(")", (")",))
                items.append(Metric(direction.text.lower(), fl))
            else:
                raise _fail(section, f"unknown section {section.text!r}", (":init", ":goal", ":metric"))
        if not r.done():
            trailing = r.peek()
            assert trailing is not None
            raise _fail(trailing, f"trailing content {trailing.text!r}")
        return PddlAst(items=tuple(items), problem=problem)

    while not r.done():
        items.append(_parse_item(r))
    return PddlAst(items=tuple(items))


# -- lint -------------------------------------------------------------------


def lint(ast: PddlAst, db: LogisticsDatabase) -> list[Diagnostic]:
    """Static checks against a database: unknown locations, negative fluent
    values, duplicate assignments. An empty list means clean."""
    diagnostics: list[Diagnostic] = []
    seen_assigns: set[tuple[str, tuple[str, ...]]] = set()

    def check_location(symbol: str) -> None:
        if not db.has_location(symbol.upper()):
            diagnostics.append(
                Diagnostic("unknown_location", f"unknown location {symbol!r}")
            )

    def walk_predicate(pred: Predicate) -> None:
        if pred.name == "can-fly":
            for arg in pred.args:
                check_location(arg)
        elif pred.name == "at":
            # first arg is an object name (e.g. cargo), second a location
            check_location(pred.args[1])

    for item in ast.items:
        if isinstance(item, Predicate):
            walk_predicate(item)
        elif isinstance(item, NumericAssign):
            for arg in item.args:
                check_location(arg)
            if item.value < 0:
                diagnostics.append(
                    Diagnostic(
                        "negative_fluent",
                        f"negative fluent (= ({' '.join((item.fluent, *item.args))}) {format_number(item.value)})",
                    )
                )
            key = (item.fluent, item.args)
            if key in seen_assigns:
                diagnostics.append(
                    Diagnostic(
                        "duplicate_assign",
                        f"duplicate assignment for ({' '.join((item.fluent, *item.args))})",
                    )
                )
            seen_assigns.add(key)
        elif isinstance(item, GoalCondition):
            for pred in item.predicates:
                walk_predicate(pred)
    return diagnostics
