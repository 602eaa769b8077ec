// Wire payloads mirroring the service's session_view output.

import { SessionWire } from "../src/types.js";

export function clarifySession(): SessionWire {
  return {
    v: 1,
    session_id: "abc123",
    state: "AwaitingClarification",
    round_count: 1,
    max_rounds: 3,
    turns: [
      {
        seq: 0,
        role: "user",
        payload: { type: "prompt", text: "Fly cargo from DEL to DXB as cheaply as possible" },
        ts: 0,
      },
      {
        seq: 1,
        role: "system",
        payload: {
          type: "clarification",
          message:
            "I'm not sure about your request. Which destination did you mean? Please confirm or clarify.",
          questions: [
            {
              slot: "destination",
              text: "Which destination did you mean?",
              schema: { kind: "location", options: ["DXB", "LAX", "PVG"] },
            },
          ],
          round: 1,
        },
        ts: 0,
      },
    ],
    report: {
      v: 1,
      slots: {
        origin: { raw: 0.95, calibrated: 0.9 },
        destination: { raw: 0.25, calibrated: 0.012 },
        objective: { raw: 0.95, calibrated: 0.9 },
        consider_weather: { raw: 0.9, calibrated: 0.9 },
      },
      global: 0.0087,
      threshold: 0.85,
      decision: "Clarify",
      clarify: ["destination"],
    },
    questions: [
      {
        slot: "destination",
        text: "Which destination did you mean?",
        schema: { kind: "location", options: ["DXB", "LAX", "PVG"] },
      },
    ],
    pending: ["destination"],
    plan: null,
    compliance: null,
    failure_reason: null,
    delivered_text: null,
    goal: null,
  };
}

export function deliveredSession(): SessionWire {
  return {
    v: 1,
    session_id: "abc123",
    state: "Delivered",
    round_count: 1,
    max_rounds: 3,
    turns: [
      {
        seq: 0,
        role: "user",
        payload: { type: "prompt", text: "Fly cargo from DEL to DXB as cheaply as possible" },
        ts: 0,
      },
      {
        seq: 1,
        role: "user",
        payload: { type: "answer", slot: "destination", value: "DXB" },
        ts: 0,
      },
      {
        seq: 2,
        role: "system",
        payload: { type: "delivered", message: "compliant\n(leg del dxb 0 205)" },
        ts: 0,
      },
    ],
    report: {
      v: 1,
      slots: {
        origin: { raw: 0.95, calibrated: 0.9 },
        destination: { raw: 1.0, calibrated: 1.0 },
        objective: { raw: 0.95, calibrated: 0.9 },
        consider_weather: { raw: 0.9, calibrated: 0.9 },
      },
      global: 0.729,
      threshold: 0.85,
      decision: "Accept",
      clarify: [],
    },
    questions: [],
    pending: [],
    plan: {
      v: 1,
      legs: [{ origin: "DEL", destination: "DXB", depart: 0, arrive: 205 }],
      totals: { fuel: 500, risk: 100, minutes: 205 },
      objective: "min_fuel_cost",
      objective_value: 500,
      db_version: "deadbeef",
    },
    compliance: {
      v: 1,
      plan: "DEL->DXB",
      overall: true,
      checks: [
        {
          kind: "structure",
          bound: "chained flyable legs serving the goal route",
          observed: "ok",
          passed: true,
        },
        { kind: "fuel_total", bound: 500, observed: 500, passed: true },
      ],
    },
    failure_reason: null,
    delivered_text: "(leg del dxb 0 205)",
    goal: "{}",
  };
}

export function objectiveQuestionSession(): SessionWire {
  const base = clarifySession();
  const questions = [
    {
      slot: "objective",
      text: "Do you mean to minimize cost, time, or risk?",
      schema: {
        kind: "options" as const,
        options: ["min_fuel_cost", "min_time", "min_risk"],
      },
    },
    {
      slot: "consider_weather",
      text: "Should weather conditions be considered?",
      schema: { kind: "boolean" as const },
    },
  ];
  return { ...base, questions, pending: ["objective", "consider_weather"] };
}
