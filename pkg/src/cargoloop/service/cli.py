"""Command-line interface.

Subcommands: repl (interactive clarification loop), plan (one-shot solve),
verify-plan (compliance-check a plan file), export-dataset (refinement
exports), eval (threshold sweep harness), serve (HTTP API). Exit codes:
0 success, 1 domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from ..confidence import CalibrationHead, ThresholdPolicy
from ..dialogue import DialogueEngine, SessionState
from ..domaindb import load_database
from ..errors import CargoLoopError
from ..goals import (
    GoalSpec,
    Intent,
    Objective,
    Provenance,
    Slot,
    canonical_decode,
)
from ..interpreter import NoiseProfile, ScriptedBackend
from ..planner import Infeasible, Plan, render_plan_text, solve
from ..refinement import (
    DatasetFilter,
    RecordStore,
    export_contrastive,
    export_reward,
    export_self_train,
    export_sft,
)
from ..verifier import verdict_to_feedback, verify
from .config import load_config
from .evaluate import parse_sweep, run_eval

_OBJECTIVE_ALIASES = {
    "fuel": Objective.MIN_FUEL_COST,
    "cost": Objective.MIN_FUEL_COST,
    "min_fuel_cost": Objective.MIN_FUEL_COST,
    "time": Objective.MIN_TIME,
    "min_time": Objective.MIN_TIME,
    "risk": Objective.MIN_RISK,
    "min_risk": Objective.MIN_RISK,
}


def _default_db_path() -> Path:
    return Path(str(resources.files("cargoloop").joinpath("data/demo.db")))


def _add_db_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--db", type=Path, default=None, help="database file (default: bundled demo)"
    )


def _load_db(args):
    return load_database(args.db if args.db is not None else _default_db_path())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cargoloop")
    sub = parser.add_subparsers(dest="command", required=True)

    repl = sub.add_parser("repl", help="interactive clarification loop")
    _add_db_arg(repl)
    repl.add_argument("--seed", type=int, default=42)
    repl.add_argument("--threshold", type=float, default=0.85)
    repl.add_argument("--error-rate", type=float, default=0.0)
    repl.add_argument("--max-rounds", type=int, default=3)

    plan = sub.add_parser("plan", help="solve one routing request directly")
    _add_db_arg(plan)
    plan.add_argument("--from", dest="origin", required=True, metavar="CODE")
    plan.add_argument("--to", dest="destination", required=True, metavar="CODE")
    plan.add_argument(
        "--objective", required=True, choices=sorted(_OBJECTIVE_ALIASES), metavar="OBJECTIVE"
    )
    plan.add_argument("--deadline", type=int, default=None, help="minutes")
    plan.add_argument("--max-fuel", type=float, default=None)
    plan.add_argument("--max-risk", type=float, default=None)
    plan.add_argument("--weather", action="store_true", help="honor weather windows")

    verify_plan = sub.add_parser("verify-plan", help="compliance-check a plan file")
    _add_db_arg(verify_plan)
    verify_plan.add_argument("plan_file", type=Path)

    export = sub.add_parser("export-dataset", help="export a refinement dataset")
    export.add_argument("--store", type=Path, required=True, help="record store (jsonl)")
    export.add_argument(
        "--kind", required=True, choices=("sft", "contrastive", "self-train", "reward")
    )
    export.add_argument("--out", type=Path, required=True, help="output directory")
    export.add_argument("--gap", type=float, default=0.4, help="contrastive confidence gap")
    export.add_argument("--floor", type=float, default=0.9, help="self-train confidence floor")
    export.add_argument("--min-confidence", type=float, default=None)
    export.add_argument("--max-confidence", type=float, default=None)

    evaluate = sub.add_parser("eval", help="threshold sweep over a labeled suite")
    _add_db_arg(evaluate)
    evaluate.add_argument("--sweep", default="0.5:0.95:0.05", help="start:stop:step")
    evaluate.add_argument("--backend", choices=("scripted",), default="scripted")
    evaluate.add_argument("--seed", type=int, default=42)
    evaluate.add_argument("--prompts", type=int, default=200)
    evaluate.add_argument("--error-rate", type=float, default=0.3)
    evaluate.add_argument("--confident-spread", type=float, default=0.15)
    evaluate.add_argument("--flat-spread", type=float, default=0.1)
    evaluate.add_argument("--max-rounds", type=int, default=3)
    evaluate.add_argument("--out", type=Path, default=None, help="also write JSON here")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", type=Path, required=True)

    return parser


def cmd_repl(args) -> int:
    db = _load_db(args)
    backend = ScriptedBackend(NoiseProfile(default_error=args.error_rate), seed=args.seed)
    engine = DialogueEngine(
        db,
        backend,
        head=CalibrationHead.bootstrap(),
        policy=ThresholdPolicy(fixed=args.threshold),
        max_rounds=args.max_rounds,
    )
    print(f"cargoloop repl | db {db.version[:12]} | threshold {args.threshold}")
    print("describe a request (e.g. 'fly cargo from DEL to DXB cheaply'); ctrl-d exits")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            print()
            return 0
        if not text:
            continue
        session = engine.create_session()
        try:
            engine.submit_prompt(session, text)
        except CargoLoopError as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        while session.state is SessionState.AWAITING_CLARIFICATION:
            _print_report(session)
            question = session.questions[0]
            for q in session.questions:
                suffix = f" options: {', '.join(q.schema.options)}" if q.schema.options else ""
                print(f"sys> {q.text}{suffix}")
            try:
                answer = input(f"you ({question.slot})> ").strip()
            except EOFError:
                print()
                return 0
            engine.submit_answer(session, question.slot, answer)
        if session.state is SessionState.DELIVERED:
            _print_report(session)
            print("sys> " + (session.system_payloads()[-1].get("message") or ""))
        else:
            print(f"sys> failed: {session.failure_reason}")


def _print_report(session) -> None:
    report = session.report
    if report is None:
        return
    for name, score in sorted(report.slot_scores.items()):
        bar = "#" * int(round(score.calibrated * 10))
        print(f"     {name:<16} [{bar:<10}] {score.calibrated:.2f}")
    print(f"     threshold {report.threshold:.2f} -> {report.decision}")


def cmd_plan(args) -> int:
    db = _load_db(args)
    slots = {
        "origin": Slot("origin", args.origin.upper(), 1.0, Provenance.CLARIFIED),
        "destination": Slot("destination", args.destination.upper(), 1.0, Provenance.CLARIFIED),
        "objective": Slot(
            "objective", _OBJECTIVE_ALIASES[args.objective], 1.0, Provenance.CLARIFIED
        ),
        "consider_weather": Slot(
            "consider_weather", bool(args.weather), 1.0, Provenance.CLARIFIED
        ),
    }
    if args.deadline is not None:
        slots["deadline"] = Slot("deadline", args.deadline, 1.0, Provenance.CLARIFIED)
    if args.max_fuel is not None:
        slots["max_fuel"] = Slot("max_fuel", args.max_fuel, 1.0, Provenance.CLARIFIED)
    if args.max_risk is not None:
        slots["max_risk"] = Slot("max_risk", args.max_risk, 1.0, Provenance.CLARIFIED)
    goal = GoalSpec(Intent.PLAN_REQUEST, slots, raw_prompt="(cli)")
    outcome = solve(goal, db)
    if isinstance(outcome, Infeasible):
        print(f"infeasible: {outcome.reason}: {outcome.detail}", file=sys.stderr)
        return 1
    report = verify(outcome, goal, db)
    print(render_plan_text(outcome))
    print(verdict_to_feedback(report))
    return 0 if report.overall else 1


def cmd_verify_plan(args) -> int:
    db = _load_db(args)
    try:
        payload = json.loads(args.plan_file.read_text(encoding="utf-8"))
        goal = canonical_decode(json.dumps(payload["goal"]))
        plan = Plan.from_wire(payload["plan"])
    except (KeyError, ValueError, CargoLoopError) as exc:
        print(f"cannot read plan file: {exc}", file=sys.stderr)
        return 1
    report = verify(plan, goal, db)
    print(verdict_to_feedback(report))
    return 0 if report.overall else 1


def cmd_export_dataset(args) -> int:
    store = RecordStore.load(args.store)
    kind = args.kind
    if kind == "sft":
        result = export_sft(
            store,
            DatasetFilter(
                min_confidence=args.min_confidence, max_confidence=args.max_confidence
            ),
        )
    elif kind == "contrastive":
        result = export_contrastive(store, gap=args.gap)
    elif kind == "self-train":
        result = export_self_train(store, floor=args.floor)
    else:
        result = export_reward(store)
    data_path, manifest_path = result.write(args.out, kind.replace("-", "_"))
    print(f"wrote {result.manifest.record_count} records to {data_path}")
    print(f"manifest {manifest_path} hash {result.manifest.content_hash[:16]}")
    return 0


def cmd_eval(args) -> int:
    db = _load_db(args)
    profile = NoiseProfile(
        default_error=args.error_rate,
        confident_spread=args.confident_spread,
        flat_spread=args.flat_spread,
    )
    result = run_eval(
        db,
        profile,
        seed=args.seed,
        sweep=parse_sweep(args.sweep),
        prompts=args.prompts,
        max_rounds=args.max_rounds,
    )
    sys.stdout.write(result.render_table())
    if args.out is not None:
        args.out.write_text(json.dumps(result.to_jsonable(), indent=2) + "\n")
        print(f"# json written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = load_config(args.config)
    app = create_app(config)
    host, _, port = config.listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or "8080"))
    return 0


_COMMANDS = {
    "repl": cmd_repl,
    "plan": cmd_plan,
    "verify-plan": cmd_verify_plan,
    "export-dataset": cmd_export_dataset,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CargoLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
