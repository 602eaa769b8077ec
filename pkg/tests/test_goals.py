from __future__ import annotations

import hashlib
import json

import pytest

from cargoloop.canonical import canonical_json
from cargoloop.errors import GoalDecodeError
from cargoloop.goals import (
    GoalSpec,
    Intent,
    Objective,
    Provenance,
    Slot,
    canonical_decode,
    canonical_encode,
    goal_key,
    validate,
)


def plan_goal(**overrides) -> GoalSpec:
    slots = {
        "origin": Slot("origin", "DEL", 0.97),
        "destination": Slot("destination", "DXB", 0.93),
        "objective": Slot("objective", Objective.MIN_FUEL_COST, 0.9),
    }
    slots.update(overrides)
    return GoalSpec(Intent.PLAN_REQUEST, slots, raw_prompt="fly cargo from DEL to DXB cheaply")


class TestValidate:
    def test_plan_request_ok(self):
        assert validate(plan_goal()).ok

    def test_plan_request_missing_objective(self):
        goal = plan_goal()
        goal = goal.without_slot("objective")
        result = validate(goal)
        assert not result.ok
        assert result.missing == ("objective",)

    def test_info_query_ok(self):
        goal = GoalSpec(
            Intent.INFO_QUERY,
            {"subjects": Slot("subjects", ["DXB", "LAX"], 0.95)},
            raw_prompt="Info about the Dubai airport and LAX",
        )
        assert validate(goal).ok

    def test_unknown_permits_any_subset(self):
        assert validate(GoalSpec(Intent.UNKNOWN, {}, raw_prompt="?")).ok
        partial = GoalSpec(Intent.UNKNOWN, {"origin": Slot("origin", "DEL", 0.4)})
        assert validate(partial).ok

    def test_ill_typed_values_reported(self):
        bad = plan_goal(destination=Slot("destination", "dxb", 0.9))
        assert any(i.problem == "ill_typed" for i in validate(bad).issues)
        bad = plan_goal(objective=Slot("objective", "min_money", 0.9))
        assert not validate(bad).ok

    def test_confidence_bounds_and_clarified_rule(self):
        bad = plan_goal(origin=Slot("origin", "DEL", 1.5))
        assert any(i.problem == "bad_confidence" for i in validate(bad).issues)
        bad = plan_goal(origin=Slot("origin", "DEL", 0.7, Provenance.CLARIFIED))
        assert any(i.problem == "bad_confidence" for i in validate(bad).issues)
        ok = plan_goal(origin=Slot("origin", "DEL", 1.0, Provenance.CLARIFIED))
        assert validate(ok).ok

    def test_deadline_and_budget_typing(self):
        ok = plan_goal(deadline=Slot("deadline", 240, 0.8), max_fuel=Slot("max_fuel", 900.0, 0.8))
        assert validate(ok).ok
        assert not validate(plan_goal(deadline=Slot("deadline", -1, 0.8))).ok
        assert not validate(plan_goal(deadline=Slot("deadline", True, 0.8))).ok
        assert not validate(plan_goal(max_risk=Slot("max_risk", float("nan"), 0.8))).ok


class TestCodec:
    def test_round_trip(self):
        goal = plan_goal(
            deadline=Slot("deadline", 240, 0.8),
            consider_weather=Slot("consider_weather", False, 0.9, Provenance.DEFAULT),
        )
        assert canonical_decode(canonical_encode(goal)) == goal

    def test_round_trip_info_query(self):
        goal = GoalSpec(
            Intent.INFO_QUERY,
            {"subjects": Slot("subjects", ["DXB", "LAX"], 0.95)},
            raw_prompt="Info about the Dubai airport and LAX",
        )
        assert canonical_decode(canonical_encode(goal)) == goal

    def test_insertion_order_does_not_change_bytes(self):
        a = GoalSpec(
            Intent.PLAN_REQUEST,
            {
                "origin": Slot("origin", "DEL", 0.9),
                "destination": Slot("destination", "DXB", 0.9),
                "objective": Slot("objective", Objective.MIN_TIME, 0.9),
            },
            raw_prompt="p",
        )
        b = GoalSpec(
            Intent.PLAN_REQUEST,
            {
                "objective": Slot("objective", Objective.MIN_TIME, 0.9),
                "destination": Slot("destination", "DXB", 0.9),
                "origin": Slot("origin", "DEL", 0.9),
            },
            raw_prompt="p",
        )
        assert a == b
        assert canonical_encode(a) == canonical_encode(b)

    def test_decode_malformed_reports_offset(self):
        with pytest.raises(GoalDecodeError) as exc_info:
            canonical_decode("{")
        assert exc_info.value.offset == 1

    def test_decode_rejects_unknown_slot(self):
        payload = json.loads(canonical_encode(plan_goal()))
        payload["slots"]["warp_factor"] = {"value": 9, "confidence": 1.0, "provenance": "model"}
        with pytest.raises(GoalDecodeError, match="warp_factor"):
            canonical_decode(json.dumps(payload))

    def test_encode_requires_valid_goal(self):
        with pytest.raises(ValueError):
            canonical_encode(GoalSpec(Intent.PLAN_REQUEST, {}, raw_prompt="x"))


class TestGoalKey:
    def test_confidence_and_provenance_excluded(self):
        a = plan_goal()
        b = plan_goal(
            origin=Slot("origin", "DEL", 1.0, Provenance.CLARIFIED),
            destination=Slot("destination", "DXB", 0.1),
        )
        assert goal_key(a, "v1") == goal_key(b, "v1")

    def test_db_version_salts_key(self):
        goal = plan_goal()
        assert goal_key(goal, "v1") != goal_key(goal, "v2")

    def test_value_changes_key(self):
        assert goal_key(plan_goal(), "v1") != goal_key(
            plan_goal(destination=Slot("destination", "LAX", 0.93)), "v1"
        )

    def test_key_recomputed_independently(self):
        goal = plan_goal()
        key = goal_key(goal, "deadbeef")
        # Independent recomputation of the documented construction.
        payload = {
            "v": 1,
            "intent": "plan_request",
            "prompt": "fly cargo from DEL to DXB cheaply",
            "slots": {
                "origin": "DEL",
                "destination": "DXB",
                "objective": "min_fuel_cost",
            },
        }
        expected = hashlib.sha256(
            (canonical_json(payload) + "|deadbeef").encode("utf-8")
        ).hexdigest()
        assert key == expected
        assert len(key) == 64 and all(c in "0123456789abcdef" for c in key)
