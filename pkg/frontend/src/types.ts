// Wire types for the cargoloop HTTP API (all payloads carry v: 1).

export const WIRE_VERSION = 1;

export type SessionStateName =
  | "AwaitingPrompt"
  | "Interpreting"
  | "AwaitingClarification"
  | "Planning"
  | "Delivered"
  | "Failed";

export interface AnswerSchemaWire {
  kind: "options" | "location" | "minutes" | "boolean";
  options?: string[];
  unit?: string;
  multi?: boolean;
}

export interface QuestionWire {
  slot: string;
  text: string;
  schema: AnswerSchemaWire;
}

export interface SlotScoreWire {
  raw: number;
  calibrated: number;
}

export interface ReportWire {
  v: number;
  slots: Record<string, SlotScoreWire>;
  global: number;
  threshold: number;
  decision: "Accept" | "Clarify";
  clarify: string[];
}

export interface LegWire {
  origin: string;
  destination: string;
  depart: number;
  arrive: number;
}

export interface PlanWire {
  v: number;
  legs: LegWire[];
  totals: { fuel: number; risk: number; minutes: number };
  objective: string;
  objective_value: number;
  db_version: string;
}

export interface CheckWire {
  kind: string;
  bound: number | string;
  observed: number | string;
  passed: boolean;
}

export interface ComplianceWire {
  v: number;
  plan: string;
  overall: boolean;
  checks: CheckWire[];
}

export interface TurnWire {
  seq: number;
  role: "user" | "system";
  payload: Record<string, unknown>;
  ts: number;
}

export interface SessionWire {
  v: number;
  session_id: string;
  state: SessionStateName;
  round_count: number;
  max_rounds: number;
  turns: TurnWire[];
  report: ReportWire | null;
  questions: QuestionWire[];
  pending: string[];
  plan: PlanWire | null;
  compliance: ComplianceWire | null;
  failure_reason: string | null;
  delivered_text: string | null;
  goal: string | null;
}

export interface TurnResponseWire {
  v: number;
  session_id: string;
  state: SessionStateName;
  round_count: number;
  message?: string;
  questions?: QuestionWire[];
  report?: ReportWire | null;
  plan?: PlanWire | null;
  compliance?: ComplianceWire | null;
  facts?: Record<string, unknown> | null;
  reason?: string;
}
