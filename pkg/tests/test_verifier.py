from __future__ import annotations

import dataclasses
import itertools
import random

from cargoloop.goals import Objective
from cargoloop.planner import Leg, Plan, solve
from cargoloop.verifier import verdict_to_feedback, verify

from test_planner import BUDGET_GRID, make_goal, random_db


class TestVerify:
    def test_solved_plans_pass(self, hexnet_db):
        for objective in Objective:
            goal = make_goal("AAA", "FFF", objective, deadline=300, max_fuel=1200, max_risk=400)
            plan = solve(goal, hexnet_db)
            report = verify(plan, goal, hexnet_db)
            assert report.overall, report.to_wire()
            active = {c.kind for c in report.checks}
            assert {"deadline", "max_fuel", "max_risk"} <= active

    def test_empty_plan_passes(self, fig3_db):
        goal = make_goal("DEL", "DEL", Objective.MIN_TIME, deadline=0)
        plan = solve(goal, fig3_db)
        report = verify(plan, goal, fig3_db)
        assert report.overall
        deadline_check = next(c for c in report.checks if c.kind == "deadline")
        assert deadline_check.observed == 0.0

    def test_zero_deadline_forces_violation(self, fig3_db):
        goal = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST)
        plan = solve(goal, fig3_db)
        tight = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST, deadline=0)
        report = verify(plan, tight, fig3_db)
        assert not report.overall
        check = next(c for c in report.checks if c.kind == "deadline")
        assert not check.passed
        assert check.observed > 0

    def test_tampered_fuel_total_detected(self, fig3_db):
        goal = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST)
        plan = solve(goal, fig3_db)
        tampered = dataclasses.replace(plan, total_fuel=400.0)
        report = verify(tampered, goal, fig3_db)
        assert not report.overall
        check = next(c for c in report.checks if c.kind == "fuel_total")
        assert not check.passed
        assert check.observed == 500.0  # recomputed from edges, not copied
        assert check.bound == 400.0

    def test_corrupting_totals_never_changes_constraint_checks(self, hexnet_db):
        goal = make_goal("AAA", "FFF", Objective.MIN_FUEL_COST, deadline=300, max_fuel=1200)
        plan = solve(goal, hexnet_db)
        baseline = verify(plan, goal, hexnet_db)
        corrupted = dataclasses.replace(
            plan, total_fuel=1.0, total_risk=2.0, total_minutes=3.0
        )
        report = verify(corrupted, goal, hexnet_db)
        for kind in ("structure", "deadline", "max_fuel"):
            base = next(c for c in baseline.checks if c.kind == kind)
            got = next(c for c in report.checks if c.kind == kind)
            assert base.passed == got.passed
            assert base.observed == got.observed

    def test_unknown_edge_is_structural_failure_not_crash(self, fig3_db):
        goal = make_goal("DEL", "LAX", Objective.MIN_FUEL_COST)
        bogus = Plan(
            legs=(Leg("DEL", "LAX", 0.0, 100.0),),
            total_fuel=1.0,
            total_risk=1.0,
            total_minutes=100.0,
            objective=Objective.MIN_FUEL_COST,
            objective_value=1.0,
            db_version=fig3_db.version,
        )
        report = verify(bogus, goal, fig3_db)
        structure = next(c for c in report.checks if c.kind == "structure")
        assert not structure.passed
        assert "no edge DEL->LAX" in str(structure.observed)

    def test_unchained_legs_flagged(self, fig3_db):
        goal = make_goal("DEL", "LAX", Objective.MIN_FUEL_COST)
        plan = Plan(
            legs=(
                Leg("DEL", "DXB", 0.0, 205.0),
                Leg("PVG", "DEL", 205.0, 555.0),
            ),
            total_fuel=1320.0,
            total_risk=240.0,
            total_minutes=555.0,
            objective=Objective.MIN_FUEL_COST,
            objective_value=1320.0,
            db_version=fig3_db.version,
        )
        report = verify(plan, goal, fig3_db)
        structure = next(c for c in report.checks if c.kind == "structure")
        assert not structure.passed

    def test_weather_check_counts_events_inside_windows(self, fig3_db):
        goal = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST, weather=True)
        plan = solve(goal, fig3_db)  # arrives DXB at 205, inside [120, 360)
        assert not isinstance(plan, Plan) or True
        from cargoloop.planner import Infeasible

        # the solver itself avoids the window: it must report infeasible here
        assert isinstance(plan, Infeasible)

        # a handcrafted plan that flies anyway gets flagged by the verifier
        forced = Plan(
            legs=(Leg("DEL", "DXB", 0.0, 205.0),),
            total_fuel=500.0,
            total_risk=100.0,
            total_minutes=205.0,
            objective=Objective.MIN_FUEL_COST,
            objective_value=500.0,
            db_version=fig3_db.version,
        )
        report = verify(forced, goal, fig3_db)
        weather = next(c for c in report.checks if c.kind == "weather")
        assert not weather.passed
        assert "sandstorm" in str(weather.observed)


class TestPlannerVerifierConsistency:
    def test_every_feasible_fixture_goal_verifies_clean(self, hexnet_db, fig3_db):
        for db in (hexnet_db, fig3_db):
            codes = list(db.codes)
            for origin, destination in itertools.permutations(codes, 2):
                for objective in Objective:
                    goal = make_goal(origin, destination, objective)
                    plan = solve(goal, db)
                    if isinstance(plan, Plan):
                        assert verify(plan, goal, db).overall

    def test_budget_grid_consistency(self, hexnet_db):
        for deadline, max_fuel, max_risk, weather in itertools.product(
            BUDGET_GRID["deadline"], BUDGET_GRID["max_fuel"], BUDGET_GRID["max_risk"], (False, True)
        ):
            goal = make_goal(
                "AAA", "FFF", Objective.MIN_FUEL_COST,
                deadline=deadline, max_fuel=max_fuel, max_risk=max_risk, weather=weather,
            )
            plan = solve(goal, hexnet_db)
            if isinstance(plan, Plan):
                assert verify(plan, goal, hexnet_db).overall

    def test_random_graphs_consistency(self):
        rng = random.Random(1312)
        for trial in range(25):
            db = random_db(rng, nodes=rng.randint(4, 7), windows=True)
            codes = list(db.codes)
            origin, destination = rng.sample(codes, 2)
            goal = make_goal(
                origin, destination, rng.choice(list(Objective)),
                deadline=rng.choice([None, rng.randint(50, 500)]),
                weather=rng.random() < 0.5,
            )
            plan = solve(goal, db)
            if isinstance(plan, Plan):
                assert verify(plan, goal, db).overall, f"trial {trial}"


class TestFeedback:
    def test_compliant(self, fig3_db):
        goal = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST)
        plan = solve(goal, fig3_db)
        assert verdict_to_feedback(verify(plan, goal, fig3_db)) == "compliant"

    def test_single_failure_single_line(self, fig3_db):
        goal = make_goal("DEL", "DXB", Objective.MIN_FUEL_COST, deadline=0)
        plan = solve(make_goal("DEL", "DXB", Objective.MIN_FUEL_COST), fig3_db)
        feedback = verdict_to_feedback(verify(plan, goal, fig3_db))
        lines = feedback.splitlines()
        assert len(lines) == 1
        assert lines[0] == "deadline: bound 0, observed 205"

    def test_three_failures_in_slot_order(self, hexnet_db):
        # violate deadline, max_fuel and max_risk at once
        goal = make_goal("AAA", "FFF", Objective.MIN_TIME, deadline=10, max_fuel=50, max_risk=1)
        plan = solve(make_goal("AAA", "FFF", Objective.MIN_TIME), hexnet_db)
        feedback = verdict_to_feedback(verify(plan, goal, hexnet_db))
        kinds = [line.split(":")[0] for line in feedback.splitlines()]
        assert kinds == ["deadline", "max_fuel", "max_risk"]
