// Entry point: wire the store to the DOM. The service base URL comes from
// the ?api= query parameter (default: same origin without a path, falling
// back to the local dev port).

import { ApiClient } from "./api.js";
import { render, Refs } from "./render.js";
import { ChatStore, ValidationError } from "./store.js";

function baseUrl(): string {
  const param = new URLSearchParams(window.location.search).get("api");
  if (param) return param.replace(/\/$/, "");
  if (window.location.origin !== "null" && !window.location.protocol.startsWith("file")) {
    return window.location.origin;
  }
  return "http://127.0.0.1:8000";
}

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const store = new ChatStore(new ApiClient(baseUrl()));

const refs: Refs = {
  transcript: grab("transcript"),
  candidates: grab("candidates"),
  banner: grab("banner"),
  drawCounter: grab("draw-counter"),
  status: grab("status"),
  sendButton: grab<HTMLButtonElement>("send"),
  resampleButton: grab<HTMLButtonElement>("resample"),
  input: grab<HTMLInputElement>("input"),
};

const temperatureInput = grab<HTMLInputElement>("temperature");
const candidatesInput = grab<HTMLInputElement>("num-candidates");
const latentModeSelect = grab<HTMLSelectElement>("latent-mode");
const controlError = grab("control-error");

store.subscribe((state) => render(state, refs, document));

function applyControls(): void {
  controlError.textContent = "";
  try {
    store.setControls({
      temperature: Number(temperatureInput.value),
      numCandidates: Number(candidatesInput.value),
      latentMode: latentModeSelect.value as "sample" | "mean",
    });
  } catch (err) {
    if (err instanceof ValidationError) {
      controlError.textContent = err.message; // rejected client-side
    } else {
      throw err;
    }
  }
}

temperatureInput.addEventListener("change", applyControls);
candidatesInput.addEventListener("change", applyControls);
latentModeSelect.addEventListener("change", applyControls);
refs.input.addEventListener("input", () => render(store.getState(), refs, document));

async function send(): Promise<void> {
  const text = refs.input.value;
  if (text.trim() === "") return; // send stays disabled for empty text
  try {
    const sent = await store.sendMessage(text);
    if (sent) refs.input.value = "";
  } catch (err) {
    if (err instanceof ValidationError) {
      controlError.textContent = err.message;
    } else {
      throw err;
    }
  }
}

refs.sendButton.addEventListener("click", () => void send());
refs.input.addEventListener("keydown", (event) => {
  if (event.key === "Enter") void send();
});
refs.resampleButton.addEventListener("click", () => void store.resampleLast());
grab<HTMLButtonElement>("new-session").addEventListener("click", () => void store.startSession());

(async () => {
  const healthy = await store.checkHealth();
  if (healthy) await store.startSession();
})();
