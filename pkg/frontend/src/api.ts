// HTTP client with idempotent turn posting.
//
// Every user turn carries a client-generated turn id; retries after network
// failures reuse the same id, and the service deduplicates, so a double
// submit or a flaky connection applies the turn exactly once.

import { SessionWire, TurnResponseWire, WIRE_VERSION } from "./types.js";

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

let counter = 0;

export function newTurnId(): string {
  counter += 1;
  const entropy =
    typeof crypto !== "undefined" && "randomUUID" in crypto
      ? crypto.randomUUID().slice(0, 8)
      : Math.random().toString(36).slice(2, 10);
  return `t-${Date.now()}-${counter}-${entropy}`;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly retries: number = 2,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= this.retries; attempt += 1) {
      try {
        const response = await this.fetchFn(this.base + path, init);
        if (response.status === 409) {
          throw new ConflictError(await response.text());
        }
        if (!response.ok) {
          throw new ApiError(response.status, await response.text());
        }
        return await response.json();
      } catch (error) {
        if (error instanceof ConflictError || error instanceof ApiError) {
          throw error; // server spoke; do not retry blindly
        }
        lastError = error; // network failure: retry with the SAME body
      }
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }

  async createSession(): Promise<string> {
    const body = (await this.request("/v1/sessions", { method: "POST" })) as {
      session_id: string;
    };
    return body.session_id;
  }

  async getSession(sessionId: string): Promise<SessionWire> {
    return (await this.request(`/v1/sessions/${sessionId}`)) as SessionWire;
  }

  async postMessage(
    sessionId: string,
    text: string,
    turnId: string,
  ): Promise<TurnResponseWire> {
    return (await this.request(`/v1/sessions/${sessionId}/message`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ v: WIRE_VERSION, turn_id: turnId, text }),
    })) as TurnResponseWire;
  }

  async postAnswer(
    sessionId: string,
    slot: string,
    value: unknown,
    turnId: string,
  ): Promise<TurnResponseWire> {
    return (await this.request(`/v1/sessions/${sessionId}/clarify`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ v: WIRE_VERSION, turn_id: turnId, slot, value }),
    })) as TurnResponseWire;
  }
}
