// Boot and wiring: restore or create a session, render from server truth,
// and re-fetch the full session after every turn. The session id rides in
// the URL hash so a reload reconstructs the identical view via get_session.

import { ApiClient, ConflictError } from "./api.js";
import { renderErrorBanner, renderView } from "./render.js";
import { deriveView, SchemaMismatchError } from "./state.js";

const root = document.getElementById("app") as HTMLElement;
const client = new ApiClient("");

function sessionFromHash(): string | null {
  const match = window.location.hash.match(/#s=([A-Za-z0-9_-]+)/);
  return match ? match[1] : null;
}

async function refresh(sessionId: string): Promise<void> {
  const payload = await client.getSession(sessionId);
  try {
    const view = deriveView(payload);
    renderView(root, view, {
      onPrompt: async (text, turnId) => {
        if (!text.trim()) {
          await refresh(sessionId);
          return;
        }
        await postSafely(() => client.postMessage(sessionId, text, turnId), sessionId);
      },
      onAnswer: async (slot, value, turnId) => {
        await postSafely(() => client.postAnswer(sessionId, slot, value, turnId), sessionId);
      },
    });
  } catch (error) {
    if (error instanceof SchemaMismatchError) {
      renderErrorBanner(root, error.message, error.raw);
      return;
    }
    throw error;
  }
}

async function postSafely(post: () => Promise<unknown>, sessionId: string): Promise<void> {
  try {
    await post();
  } catch (error) {
    if (!(error instanceof ConflictError)) {
      console.error(error);
    }
    // 409 means our view was stale; either way, reconcile with server truth
  }
  await refresh(sessionId);
}

async function boot(): Promise<void> {
  let sessionId = sessionFromHash();
  if (!sessionId) {
    sessionId = await client.createSession();
    window.location.hash = `s=${sessionId}`;
  }
  try {
    await refresh(sessionId);
  } catch {
    // stale hash (service restarted): start a fresh session
    sessionId = await client.createSession();
    window.location.hash = `s=${sessionId}`;
    await refresh(sessionId);
  }
}

void boot();
