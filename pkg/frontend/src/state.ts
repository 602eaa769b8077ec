// Pure derivation of the rendered view from a session payload.
// The UI holds no state of its own: everything below is a function of what
// the service returned, so reloading mid-session reconstructs the same view.

import {
  QuestionWire,
  SessionWire,
  SessionStateName,
  WIRE_VERSION,
} from "./types.js";

export class SchemaMismatchError extends Error {
  constructor(message: string, public readonly raw: unknown) {
    super(message);
    this.name = "SchemaMismatchError";
  }
}

export interface Bubble {
  role: "user" | "system";
  text: string;
}

export interface SlotBar {
  slot: string;
  raw: number;
  calibrated: number;
  belowThreshold: boolean;
}

export interface PlanRow {
  origin: string;
  destination: string;
  depart: number;
  arrive: number;
}

export interface ChecklistItem {
  kind: string;
  passed: boolean;
  bound: string;
  observed: string;
}

export interface SessionView {
  sessionId: string;
  state: SessionStateName;
  roundCount: number;
  maxRounds: number;
  bubbles: Bubble[];
  slotBars: SlotBar[];
  threshold: number | null;
  globalScore: number | null;
  questions: QuestionWire[];
  planRows: PlanRow[];
  totals: { fuel: number; risk: number; minutes: number } | null;
  objective: string | null;
  checklist: ChecklistItem[];
  deliveredText: string | null;
  failureReason: string | null;
}

const STATES: SessionStateName[] = [
  "AwaitingPrompt",
  "Interpreting",
  "AwaitingClarification",
  "Planning",
  "Delivered",
  "Failed",
];

function asBubble(turn: { role: string; payload: Record<string, unknown> }): Bubble | null {
  const payload = turn.payload;
  if (turn.role === "user") {
    if (payload["type"] === "prompt") {
      return { role: "user", text: String(payload["text"] ?? "") };
    }
    if (payload["type"] === "answer") {
      return {
        role: "user",
        text: `${String(payload["slot"])}: ${String(payload["value"])}`,
      };
    }
    return null;
  }
  const kind = payload["type"];
  if (kind === "clarification" || kind === "delivered") {
    return { role: "system", text: String(payload["message"] ?? "") };
  }
  if (kind === "failed") {
    return { role: "system", text: `Failed: ${String(payload["reason"] ?? "")}` };
  }
  return null;
}

export function deriveView(payload: unknown): SessionView {
  if (typeof payload !== "object" || payload === null) {
    throw new SchemaMismatchError("session payload is not an object", payload);
  }
  const body = payload as Partial<SessionWire>;
  if (body.v !== WIRE_VERSION) {
    throw new SchemaMismatchError(`unsupported wire version ${String(body.v)}`, payload);
  }
  if (!body.state || !STATES.includes(body.state)) {
    throw new SchemaMismatchError(`unknown session state ${String(body.state)}`, payload);
  }
  if (typeof body.session_id !== "string") {
    throw new SchemaMismatchError("missing session_id", payload);
  }

  const bubbles: Bubble[] = [];
  for (const turn of body.turns ?? []) {
    const bubble = asBubble(turn);
    if (bubble) bubbles.push(bubble);
  }

  const report = body.report ?? null;
  const threshold = report ? report.threshold : null;
  const slotBars: SlotBar[] = [];
  if (report) {
    for (const [slot, score] of Object.entries(report.slots)) {
      slotBars.push({
        slot,
        raw: score.raw,
        calibrated: score.calibrated,
        belowThreshold: score.calibrated < report.threshold,
      });
    }
    slotBars.sort((a, b) => a.slot.localeCompare(b.slot));
  }

  const plan = body.plan ?? null;
  const compliance = body.compliance ?? null;
  return {
    sessionId: body.session_id,
    state: body.state,
    roundCount: body.round_count ?? 0,
    maxRounds: body.max_rounds ?? 0,
    bubbles,
    slotBars,
    threshold,
    globalScore: report ? report.global : null,
    questions: body.state === "AwaitingClarification" ? body.questions ?? [] : [],
    planRows: plan
      ? plan.legs.map((leg) => ({
          origin: leg.origin,
          destination: leg.destination,
          depart: leg.depart,
          arrive: leg.arrive,
        }))
      : [],
    totals: plan ? plan.totals : null,
    objective: plan ? plan.objective : null,
    checklist: compliance
      ? compliance.checks.map((check) => ({
          kind: check.kind,
          passed: check.passed,
          bound: String(check.bound),
          observed: String(check.observed),
        }))
      : [],
    deliveredText: body.delivered_text ?? null,
    failureReason: body.failure_reason ?? null,
  };
}
