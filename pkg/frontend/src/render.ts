// DOM rendering. The view is server truth: every interaction posts a turn
// and the caller re-renders from a fresh session fetch, so nothing here is
// optimistic. Each question widget owns one turn id for its lifetime; a
// double click therefore posts the same logical turn and applies once.

import { newTurnId } from "./api.js";
import { SessionView } from "./state.js";
import { QuestionWire } from "./types.js";

export interface Handlers {
  onPrompt(text: string, turnId: string): Promise<void>;
  onAnswer(slot: string, value: unknown, turnId: string): Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderErrorBanner(root: HTMLElement, message: string, raw: unknown): void {
  const banner = el("div", "error-banner");
  banner.appendChild(el("strong", undefined, "Unexpected response from service"));
  banner.appendChild(el("div", "error-message", message));
  const pre = el("pre", "error-raw");
  try {
    pre.textContent = JSON.stringify(raw, null, 2);
  } catch {
    pre.textContent = String(raw);
  }
  banner.appendChild(pre);
  root.innerHTML = "";
  root.appendChild(banner);
}

function renderTranscript(view: SessionView): HTMLElement {
  const panel = el("section", "transcript");
  for (const bubble of view.bubbles) {
    panel.appendChild(el("div", `bubble bubble-${bubble.role}`, bubble.text));
  }
  return panel;
}

function renderConfidence(view: SessionView): HTMLElement {
  const panel = el("section", "confidence");
  panel.appendChild(el("h2", undefined, "Field confidence"));
  if (view.threshold === null) {
    panel.appendChild(el("p", "muted", "No confidence report yet."));
    return panel;
  }
  const threshold = view.threshold;
  panel.appendChild(
    el("p", "threshold-label", `acceptance threshold ${threshold.toFixed(2)}`),
  );
  for (const bar of view.slotBars) {
    const row = el("div", bar.belowThreshold ? "slot-row below-threshold" : "slot-row");
    row.dataset.slot = bar.slot;
    row.appendChild(el("span", "slot-name", bar.slot));
    const track = el("div", "bar-track");
    const fill = el("div", "bar-fill");
    fill.style.width = `${Math.round(bar.calibrated * 100)}%`;
    track.appendChild(fill);
    const marker = el("div", "bar-threshold");
    marker.style.left = `${Math.round(threshold * 100)}%`;
    track.appendChild(marker);
    row.appendChild(track);
    row.appendChild(el("span", "slot-score", bar.calibrated.toFixed(2)));
    if (bar.belowThreshold) {
      row.appendChild(el("span", "flag", "needs clarification"));
    }
    panel.appendChild(row);
  }
  if (view.globalScore !== null) {
    panel.appendChild(el("p", "global-score", `global ${view.globalScore.toFixed(3)}`));
  }
  return panel;
}

function submitOnce(
  button: HTMLButtonElement,
  container: HTMLElement,
  action: () => Promise<void>,
): void {
  button.addEventListener("click", () => {
    if (container.dataset.inflight === "1") return;
    container.dataset.inflight = "1";
    for (const control of container.querySelectorAll("button, input")) {
      (control as HTMLButtonElement | HTMLInputElement).disabled = true;
    }
    void action().catch(() => {
      // errors surface through the re-render the caller performs
    });
  });
}

function renderQuestion(question: QuestionWire, handlers: Handlers): HTMLElement {
  const box = el("div", "question");
  box.dataset.slot = question.slot;
  const turnId = newTurnId(); // one logical turn per rendered question
  box.appendChild(el("p", "question-text", question.text));
  const controls = el("div", "question-controls");
  const schema = question.schema;

  const submit = (value: unknown) => () =>
    handlers.onAnswer(question.slot, value, turnId);

  if (schema.kind === "options") {
    for (const option of schema.options ?? []) {
      const button = el("button", "option-button", option.replace(/_/g, " "));
      button.dataset.value = option;
      submitOnce(button, box, submit(option));
      controls.appendChild(button);
    }
  } else if (schema.kind === "boolean") {
    for (const [label, value] of [
      ["Yes", true],
      ["No", false],
    ] as const) {
      const button = el("button", "option-button", label);
      button.dataset.value = String(value);
      submitOnce(button, box, submit(value));
      controls.appendChild(button);
    }
  } else if (schema.kind === "location") {
    const input = el("input", "location-input");
    input.placeholder = schema.multi ? "codes, e.g. DEL DXB" : "3-letter code";
    controls.appendChild(input);
    for (const option of schema.options ?? []) {
      const pick = el("button", "option-button suggested", option);
      pick.dataset.value = option;
      submitOnce(pick, box, submit(option));
      controls.appendChild(pick);
    }
    const send = el("button", "send-button", "Send");
    submitOnce(send, box, () => handlers.onAnswer(question.slot, input.value, turnId));
    controls.appendChild(send);
  } else {
    const input = el("input", "number-input");
    input.type = "number";
    input.min = "0";
    if (schema.unit) input.placeholder = schema.unit;
    controls.appendChild(input);
    const send = el("button", "send-button", "Send");
    submitOnce(send, box, () => handlers.onAnswer(question.slot, input.value, turnId));
    controls.appendChild(send);
  }
  box.appendChild(controls);
  return box;
}

function renderQuestions(view: SessionView, handlers: Handlers): HTMLElement {
  const panel = el("section", "questions");
  panel.appendChild(el("h2", undefined, "Clarification needed"));
  for (const question of view.questions) {
    panel.appendChild(renderQuestion(question, handlers));
  }
  return panel;
}

function renderPlan(view: SessionView): HTMLElement {
  const panel = el("section", "plan");
  panel.appendChild(el("h2", undefined, "Plan"));
  const table = el("table", "plan-table");
  const head = el("tr");
  for (const column of ["leg", "from", "to", "depart", "arrive"]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  view.planRows.forEach((row, i) => {
    const tr = el("tr", "plan-row");
    tr.appendChild(el("td", undefined, String(i + 1)));
    tr.appendChild(el("td", undefined, row.origin));
    tr.appendChild(el("td", undefined, row.destination));
    tr.appendChild(el("td", undefined, String(row.depart)));
    tr.appendChild(el("td", undefined, String(row.arrive)));
    table.appendChild(tr);
  });
  panel.appendChild(table);
  if (view.totals) {
    panel.appendChild(
      el(
        "p",
        "plan-totals",
        `fuel ${view.totals.fuel} | risk ${view.totals.risk} | minutes ${view.totals.minutes}` +
          (view.objective ? ` | objective ${view.objective.replace(/_/g, " ")}` : ""),
      ),
    );
  }
  return panel;
}

function renderChecklist(view: SessionView): HTMLElement {
  const panel = el("section", "compliance");
  panel.appendChild(el("h2", undefined, "Compliance"));
  const list = el("ul", "checklist");
  for (const item of view.checklist) {
    const entry = el(
      "li",
      item.passed ? "check pass" : "check fail",
      `${item.passed ? "PASS" : "FAIL"} ${item.kind}: bound ${item.bound}, observed ${item.observed}`,
    );
    entry.dataset.kind = item.kind;
    list.appendChild(entry);
  }
  panel.appendChild(list);
  return panel;
}

function renderPromptBox(view: SessionView, handlers: Handlers): HTMLElement {
  const panel = el("section", "prompt-box");
  const input = el("input", "prompt-input");
  input.placeholder = "e.g. fly cargo from DEL to DXB as cheaply as possible";
  const send = el("button", "send-button", "Send request");
  const turnId = newTurnId();
  submitOnce(send, panel, () => handlers.onPrompt(input.value, turnId));
  panel.appendChild(input);
  panel.appendChild(send);
  return panel;
}

export function renderView(root: HTMLElement, view: SessionView, handlers: Handlers): void {
  root.innerHTML = "";
  const header = el("header");
  header.appendChild(el("h1", undefined, "cargoloop console"));
  header.appendChild(
    el(
      "p",
      "session-meta",
      `session ${view.sessionId} | ${view.state} | round ${view.roundCount}/${view.maxRounds}`,
    ),
  );
  root.appendChild(header);

  root.appendChild(renderTranscript(view));
  root.appendChild(renderConfidence(view));

  if (view.state === "AwaitingPrompt") {
    root.appendChild(renderPromptBox(view, handlers));
  }
  if (view.state === "AwaitingClarification" && view.questions.length > 0) {
    root.appendChild(renderQuestions(view, handlers));
  }
  if (view.planRows.length > 0 || view.totals) {
    root.appendChild(renderPlan(view));
  }
  if (view.checklist.length > 0) {
    root.appendChild(renderChecklist(view));
  }
  if (view.state === "Delivered" && view.deliveredText && view.planRows.length === 0) {
    const facts = el("section", "facts");
    facts.appendChild(el("h2", undefined, "Facts"));
    facts.appendChild(el("pre", "facts-text", view.deliveredText));
    root.appendChild(facts);
  }
  if (view.state === "Failed" && view.failureReason) {
    root.appendChild(el("div", "failure-banner", view.failureReason));
  }
}
