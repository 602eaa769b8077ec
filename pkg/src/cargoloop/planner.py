"""Route solver: resource-constrained shortest path over the route graph.

Label-setting search over simple paths carrying (fuel, risk, time) triples,
with component-wise dominance pruning. The first leg departs at minute 0 and
connections are immediate, so a path's schedule is fully determined by its
edges; weather windows close a location to departures and arrivals inside
the window, with no waiting on the ground.

When weather filtering is active, plain component-wise time dominance is
unsound: a slower label can thread a closure that a faster one hits further
down the path, and with different visited sets the faster label may not be
able to reuse the slower one's continuation. Dominance therefore tightens to
equal times and a subset of visited nodes whenever windows are in play,
which prunes less but can never discard all optimal labels.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .canonical import format_number
from .domaindb import LogisticsDatabase, SolutionCache
from .goals import GoalSpec, Intent, Objective, goal_key

_RESOURCES = ("fuel", "risk", "time")
_OBJECTIVE_INDEX = {
    Objective.MIN_FUEL_COST: 0,
    Objective.MIN_RISK: 1,
    Objective.MIN_TIME: 2,
}


@dataclass(frozen=True)
class Leg:
    origin: str
    destination: str
    depart: float  # minutes since scenario start
    arrive: float


@dataclass(frozen=True)
class Plan:
    legs: tuple[Leg, ...]
    total_fuel: float
    total_risk: float
    total_minutes: float
    objective: Objective
    objective_value: float
    db_version: str

    def to_wire(self) -> dict:
        return {
            "v": 1,
            "legs": [
                {
                    "origin": l.origin,
                    "destination": l.destination,
                    "depart": l.depart,
                    "arrive": l.arrive,
                }
                for l in self.legs
            ],
            "totals": {
                "fuel": self.total_fuel,
                "risk": self.total_risk,
                "minutes": self.total_minutes,
            },
            "objective": self.objective.value,
            "objective_value": self.objective_value,
            "db_version": self.db_version,
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "Plan":
        totals = payload.get("totals", {})
        return cls(
            legs=tuple(
                Leg(
                    origin=l["origin"],
                    destination=l["destination"],
                    depart=float(l["depart"]),
                    arrive=float(l["arrive"]),
                )
                for l in payload.get("legs", ())
            ),
            total_fuel=float(totals.get("fuel", 0.0)),
            total_risk=float(totals.get("risk", 0.0)),
            total_minutes=float(totals.get("minutes", 0.0)),
            objective=Objective(payload["objective"]),
            objective_value=float(payload.get("objective_value", 0.0)),
            db_version=payload.get("db_version", ""),
        )


@dataclass(frozen=True)
class Infeasible:
    reason: str  # "no route" | "weather" | "deadline" | "max_fuel" | "max_risk" | "budgets"
    detail: str

    def to_wire(self) -> dict:
        return {"v": 1, "infeasible": self.reason, "detail": self.detail}


def render_plan_text(plan: Plan) -> str:
    """Deterministic fact-style rendering of a solved plan."""
    lines = [
        f"; route {plan.legs[0].origin.lower()} -> {plan.legs[-1].destination.lower()}"
        if plan.legs
        else "; route (already at destination)"
    ]
    for leg in plan.legs:
        lines.append(
            f"(leg {leg.origin.lower()} {leg.destination.lower()} "
            f"{format_number(leg.depart)} {format_number(leg.arrive)})"
        )
    lines.append(f"(= (total-fuel-cost) {format_number(plan.total_fuel)})")
    lines.append(f"(= (total-risk) {format_number(plan.total_risk)})")
    lines.append(f"(= (total-time) {format_number(plan.total_minutes)})")
    return "\n".join(lines)


@dataclass(frozen=True)
class SearchLabel:
    """Partial path state: accumulated resources plus the visited set."""

    node: str
    fuel: float
    risk: float
    time: float
    legs: int
    path: tuple[str, ...]  # visited nodes in order, origin first

    def resources(self) -> tuple[float, float, float]:
        return (self.fuel, self.risk, self.time)


@dataclass(frozen=True)
class _Constraints:
    deadline: float | None
    max_fuel: float | None
    max_risk: float | None
    weather: bool

    def any_budget(self) -> bool:
        return self.deadline is not None or self.max_fuel is not None or self.max_risk is not None


def _goal_constraints(goal: GoalSpec) -> _Constraints:
    deadline = goal.slot_value("deadline")
    return _Constraints(
        deadline=float(deadline) if deadline is not None else None,
        max_fuel=_opt_float(goal.slot_value("max_fuel")),
        max_risk=_opt_float(goal.slot_value("max_risk")),
        weather=bool(goal.slot_value("consider_weather", False)),
    )


def _opt_float(value) -> float | None:
    return None if value is None else float(value)


def _closed(db: LogisticsDatabase, code: str, minute: float) -> bool:
    return any(w.covers(minute) for w in db.windows_at(code))


def _tie_key(label: SearchLabel) -> tuple:
    return (label.legs, label.path)


def _covers(a: SearchLabel, b: SearchLabel, windows_active: bool) -> bool:
    """True when keeping ``a`` makes ``b`` unnecessary.

    Component-wise resource dominance; with windows active the times must be
    equal and ``a`` must have visited a subset of ``b``'s nodes, otherwise
    ``b`` could still thread a closure or reuse a node that ``a`` cannot.
    Exact resource ties resolve by the deterministic tie key so exactly one
    of two tied labels survives.
    """
    if windows_active:
        if a.time != b.time or not set(a.path) <= set(b.path):
            return False
    elif a.time > b.time:
        return False
    if a.fuel > b.fuel or a.risk > b.risk:
        return False
    if a.resources() == b.resources() and (not windows_active or set(a.path) == set(b.path)):
        return _tie_key(a) < _tie_key(b)
    return True


def _search(
    db: LogisticsDatabase,
    origin: str,
    destination: str,
    objective_index: int,
    constraints: _Constraints,
    apply_budgets: bool,
    prune: bool = True,
) -> list[SearchLabel]:
    """All non-dominated labels at the destination.

    ``apply_budgets=False`` searches the unconstrained (weather aside)
    frontier, used to name the binding constraint on infeasibility.
    """
    windows_active = constraints.weather and len(db.windows) > 0

    def budget_ok(fuel: float, risk: float, time: float) -> bool:
        if not apply_budgets:
            return True
        if constraints.max_fuel is not None and fuel > constraints.max_fuel:
            return False
        if constraints.max_risk is not None and risk > constraints.max_risk:
            return False
        if constraints.deadline is not None and time > constraints.deadline:
            return False
        return True

    start = SearchLabel(node=origin, fuel=0.0, risk=0.0, time=0.0, legs=0, path=(origin,))
    counter = 0
    heap: list[tuple] = [((0.0, 0.0, 0.0, 0.0, 0, start.path), counter, start)]
    frontier: dict[str, list[SearchLabel]] = {}
    results: list[SearchLabel] = []

    def admit(node: str, label: SearchLabel) -> bool:
        """Insert into the node frontier unless covered; evict what it covers."""
        bucket = frontier.setdefault(node, [])
        if prune:
            for kept in bucket:
                if _covers(kept, label, windows_active):
                    return False
            bucket[:] = [kept for kept in bucket if not _covers(label, kept, windows_active)]
        bucket.append(label)
        return True

    while heap:
        _, _, label = heapq.heappop(heap)
        if label.node == destination:
            results.append(label)
            continue
        if prune and label.legs > 0 and label not in frontier.get(label.node, ()):
            continue  # evicted by a covering label after being queued
        for edge in db.edges_from(label.node):
            if not edge.flyable:
                continue
            if edge.destination in label.path:
                continue  # simple paths only
            depart = label.time
            arrive = depart + edge.flight_time
            if windows_active:
                if _closed(db, edge.origin, depart):
                    continue
                if _closed(db, edge.destination, arrive):
                    continue
            fuel = label.fuel + edge.fuel_cost
            risk = label.risk + edge.route_risk
            if not budget_ok(fuel, risk, arrive):
                continue
            nxt = SearchLabel(
                node=edge.destination,
                fuel=fuel,
                risk=risk,
                time=arrive,
                legs=label.legs + 1,
                path=label.path + (edge.destination,),
            )
            if admit(edge.destination, nxt):
                counter += 1
                resources = (nxt.fuel, nxt.risk, nxt.time)
                key = (
                    resources[objective_index],
                    *resources,
                    nxt.legs,
                    nxt.path,
                )
                heapq.heappush(heap, (key, counter, nxt))
    return results


def _best_label(labels: list[SearchLabel], objective_index: int) -> SearchLabel | None:
    if not labels:
        return None
    return min(
        labels,
        key=lambda l: (l.resources()[objective_index], l.legs, l.path),
    )


def _label_to_plan(
    label: SearchLabel, db: LogisticsDatabase, objective: Objective
) -> Plan:
    legs = []
    clock = 0.0
    for origin, destination in zip(label.path, label.path[1:]):
        edge = db.edge(origin, destination)
        assert edge is not None
        legs.append(Leg(origin=origin, destination=destination, depart=clock, arrive=clock + edge.flight_time))
        clock += edge.flight_time
    return Plan(
        legs=tuple(legs),
        total_fuel=label.fuel,
        total_risk=label.risk,
        total_minutes=label.time,
        objective=objective,
        objective_value=label.resources()[_OBJECTIVE_INDEX[objective]],
        db_version=db.version,
    )


def solve(goal: GoalSpec, db: LogisticsDatabase, prune: bool = True) -> Plan | Infeasible:
    """Minimize the goal's objective subject to its budgets and weather.

    The goal must be an accepted plan request (the dialogue machine enforces
    acceptance; this function checks intent and slot presence). Ties on the
    objective break by fewer legs, then lexicographic node codes, so identical
    inputs always return identical plans. ``prune=False`` disables dominance
    pruning; it exists for the pruned-equals-unpruned cross-check.
    """
    if goal.intent is not Intent.PLAN_REQUEST:
        raise ValueError(f"solve needs a plan request, got {goal.intent.value}")
    origin = goal.slot_value("origin")
    destination = goal.slot_value("destination")
    objective = goal.slot_value("objective")
    if not isinstance(objective, Objective):
        objective = Objective(objective)
    for code in (origin, destination):
        db.location(code)  # raises UnknownLocationError with suggestions

    constraints = _goal_constraints(goal)
    if origin == destination:
        return Plan(
            legs=(),
            total_fuel=0.0,
            total_risk=0.0,
            total_minutes=0.0,
            objective=objective,
            objective_value=0.0,
            db_version=db.version,
        )

    objective_index = _OBJECTIVE_INDEX[objective]
    labels = _search(db, origin, destination, objective_index, constraints, True, prune)
    best = _best_label(labels, objective_index)
    if best is not None:
        return _label_to_plan(best, db, objective)

    # Infeasible: search again without budgets to name the binding constraint.
    unbudgeted = _search(db, origin, destination, objective_index, constraints, False, prune)
    if not unbudgeted:
        if constraints.weather and len(db.windows) > 0:
            relaxed = _Constraints(None, None, None, weather=False)
            if _search(db, origin, destination, objective_index, relaxed, False, prune):
                return Infeasible(
                    "weather", f"weather windows close every route {origin}->{destination}"
                )
        return Infeasible("no route", f"no flyable route {origin}->{destination}")

    binding: list[tuple[str, float, float]] = []
    if constraints.deadline is not None:
        best_time = min(l.time for l in unbudgeted)
        if best_time > constraints.deadline:
            binding.append(("deadline", constraints.deadline, best_time))
    if constraints.max_fuel is not None:
        best_fuel = min(l.fuel for l in unbudgeted)
        if best_fuel > constraints.max_fuel:
            binding.append(("max_fuel", constraints.max_fuel, best_fuel))
    if constraints.max_risk is not None:
        best_risk = min(l.risk for l in unbudgeted)
        if best_risk > constraints.max_risk:
            binding.append(("max_risk", constraints.max_risk, best_risk))
    if binding:
        name, bound, best_value = binding[0]
        return Infeasible(
            name,
            f"{name} {format_number(bound)} cannot be met: best achievable is "
            f"{format_number(best_value)}",
        )
    return Infeasible(
        "budgets",
        "no single budget is binding but their combination excludes every route",
    )


def solve_cached(
    goal: GoalSpec,
    db: LogisticsDatabase,
    cache: SolutionCache,
) -> tuple[Plan | Infeasible, bool]:
    """Cache-aware solve keyed by (goal, database version).

    Infeasible outcomes are never cached; a hit returns the stored plan
    unchanged.
    """
    key = goal_key(goal, db.version)
    hit = cache.get(key, db.version)
    if hit is not None:
        return hit, True
    outcome = solve(goal, db)
    if isinstance(outcome, Plan):
        cache.put(key, outcome)
    return outcome, False
