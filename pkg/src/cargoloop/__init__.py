"""cargoloop: confidence-gated natural-language cargo routing.

Free-form requests are interpreted into typed goal specifications with
per-field confidence; fields below the acceptance threshold trigger targeted
clarification questions; accepted goals are solved against a logistics
database and independently verified; finished sessions feed confidence-
filtered fine-tuning exports.
"""

from .confidence import (
    CalibrationHead,
    ConfidenceReport,
    FieldFeatures,
    ThresholdPolicy,
    calibrate,
    decide,
    expected_calibration_error,
    field_confidence,
    token_entropy,
    train_head,
)
from .dialogue import (
    ClarificationQuestion,
    DialogueEngine,
    DialogueSession,
    SessionState,
    generate_question,
    merge_answer,
)
from .domaindb import (
    FactSet,
    Location,
    LogisticsDatabase,
    RouteEdge,
    SolutionCache,
    WeatherWindow,
    load_database,
    lookup_facts,
    parse_database,
)
from .goals import (
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
from .interpreter import (
    BackendConfig,
    InterpretResult,
    NoiseProfile,
    RemoteBackend,
    ScriptedBackend,
    TokenTrace,
    TraceToken,
    interpret,
    make_backend,
)
from .pddl import PddlAst, emit, emit_facts, emit_problem, lint, parse
from .planner import Infeasible, Plan, render_plan_text, solve, solve_cached
from .refinement import (
    DatasetFilter,
    DatasetManifest,
    InteractionRecord,
    RecordStore,
    export_contrastive,
    export_reward,
    export_self_train,
    export_sft,
    record_from_session,
)
from .verifier import ComplianceReport, verdict_to_feedback, verify

__version__ = "0.1.0"
