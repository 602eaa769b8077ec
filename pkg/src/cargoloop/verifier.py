"""Independent compliance checking of plans.

The verifier shares no accumulation code with the planner: every observed
value is recomputed here from the plan's legs and the database, so a
corrupted or externally supplied plan is judged on what its legs actually
cost, never on what its totals claim. The check order is stable: structural
checks first, then the goal's active constraints in slot declaration order,
then stated-total consistency.
"""

from __future__ import annotations

from dataclasses import dataclass

from .canonical import format_number
from .domaindb import LogisticsDatabase
from .goals import GoalSpec
from .planner import Plan

_TOTAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Check:
    kind: str
    bound: float | str
    observed: float | str
    passed: bool

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "bound": self.bound,
            "observed": self.observed,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ComplianceReport:
    plan_key: str  # origin->destination summary, or "(empty)"
    checks: tuple[Check, ...]
    overall: bool

    def failed(self) -> tuple[Check, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def to_wire(self) -> dict:
        return {
            "v": 1,
            "plan": self.plan_key,
            "overall": self.overall,
            "checks": [c.to_wire() for c in self.checks],
        }


def _recompute(plan: Plan, db: LogisticsDatabase):
    """Walk the legs against the database; totals here are the ground truth."""
    fuel = 0.0
    risk = 0.0
    clock = 0.0
    problems: list[str] = []
    for i, leg in enumerate(plan.legs):
        edge = db.edge(leg.origin, leg.destination)
        if edge is None:
            problems.append(f"leg {i}: no edge {leg.origin}->{leg.destination}")
            continue
        if not edge.flyable:
            problems.append(f"leg {i}: edge {leg.origin}->{leg.destination} is not flyable")
        if i > 0 and plan.legs[i - 1].destination != leg.origin:
            problems.append(
                f"leg {i}: departs {leg.origin} but previous leg arrived "
                f"{plan.legs[i - 1].destination}"
            )
        if leg.depart != clock:
            problems.append(
                f"leg {i}: departs at {format_number(leg.depart)}, schedule says "
                f"{format_number(clock)}"
            )
        expected_arrive = leg.depart + edge.flight_time
        if leg.arrive != expected_arrive:
            problems.append(
                f"leg {i}: arrives at {format_number(leg.arrive)}, edge flight time gives "
                f"{format_number(expected_arrive)}"
            )
        fuel += edge.fuel_cost
        risk += edge.route_risk
        clock += edge.flight_time
    return fuel, risk, clock, problems


def _weather_violations(plan: Plan, db: LogisticsDatabase) -> list[str]:
    """Departure/arrival events that fall inside a closed window."""
    events: list[tuple[str, float, str]] = []
    for leg in plan.legs:
        events.append((leg.origin, leg.depart, "departure"))
        events.append((leg.destination, leg.arrive, "arrival"))
    violations = []
    for code, minute, what in events:
        for window in db.windows_at(code):
            if window.covers(minute):
                violations.append(
                    f"{what} at {code} minute {format_number(minute)} inside closed window "
                    f"[{format_number(window.closed_from)}, {format_number(window.closed_until)}) "
                    f"({window.reason})"
                )
    return violations


def verify(plan: Plan, goal: GoalSpec, db: LogisticsDatabase) -> ComplianceReport:
    """Recompute the plan from its legs and check every active constraint.

    Every active constraint in the goal yields exactly one check; observed
    values come from the database edges, never from the plan's own totals.
    """
    fuel, risk, minutes, structural_problems = _recompute(plan, db)

    checks: list[Check] = []

    origin = goal.slot_value("origin")
    destination = goal.slot_value("destination")
    if plan.legs:
        route_ok = plan.legs[0].origin == origin and plan.legs[-1].destination == destination
    else:
        route_ok = origin == destination
    if not route_ok:
        structural_problems.append(
            f"route serves {plan.legs[0].origin if plan.legs else origin}->"
            f"{plan.legs[-1].destination if plan.legs else origin}, "
            f"goal asks {origin}->{destination}"
        )
    checks.append(
        Check(
            kind="structure",
            bound="chained flyable legs serving the goal route",
            observed="ok" if not structural_problems else "; ".join(structural_problems),
            passed=not structural_problems,
        )
    )

    deadline = goal.slot_value("deadline")
    if deadline is not None:
        arrival = minutes if plan.legs else 0.0
        checks.append(
            Check(kind="deadline", bound=float(deadline), observed=arrival, passed=arrival <= float(deadline))
        )

    if goal.slot_value("consider_weather", False):
        violations = _weather_violations(plan, db)
        checks.append(
            Check(
                kind="weather",
                bound=0.0,
                observed=float(len(violations)) if not violations else "; ".join(violations),
                passed=not violations,
            )
        )

    max_fuel = goal.slot_value("max_fuel")
    if max_fuel is not None:
        checks.append(
            Check(kind="max_fuel", bound=float(max_fuel), observed=fuel, passed=fuel <= float(max_fuel))
        )

    max_risk = goal.slot_value("max_risk")
    if max_risk is not None:
        checks.append(
            Check(kind="max_risk", bound=float(max_risk), observed=risk, passed=risk <= float(max_risk))
        )

    for kind, stated, recomputed in (
        ("fuel_total", plan.total_fuel, fuel),
        ("risk_total", plan.total_risk, risk),
        ("time_total", plan.total_minutes, minutes),
    ):
        consistent = abs(stated - recomputed) <= _TOTAL_TOLERANCE
        checks.append(
            Check(kind=kind, bound=float(stated), observed=float(recomputed), passed=consistent)
        )

    overall = all(c.passed for c in checks)
    plan_key = f"{plan.legs[0].origin}->{plan.legs[-1].destination}" if plan.legs else "(empty)"
    return ComplianceReport(plan_key=plan_key, checks=tuple(checks), overall=overall)


def verdict_to_feedback(report: ComplianceReport) -> str:
    """Human-readable summary: 'compliant', or one line per failed check."""
    if report.overall:
        return "compliant"
    lines = []
    for check in report.failed():
        bound = format_number(check.bound) if isinstance(check.bound, float) else check.bound
        observed = (
            format_number(check.observed)
            if isinstance(check.observed, float)
            else check.observed
        )
        lines.append(f"{check.kind}: bound {bound}, observed {observed}")
    return "\n".join(lines)
