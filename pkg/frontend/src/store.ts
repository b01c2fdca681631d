// Client state machine. Fully server-driven: after every settled mutating
// call the transcript is reconciled from GET /sessions/{id}, and at most one
// request is in flight at a time (single-flight).

import { ApiClient, ApiError } from "./api.js";
import type { Controls, UiState } from "./types.js";

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

const INITIAL_CONTROLS: Controls = { temperature: 1.0, numCandidates: 1, latentMode: "sample" };

function initialState(): UiState {
  return {
    sessionId: null,
    transcript: [],
    pending: false,
    controls: { ...INITIAL_CONTROLS },
    candidates: [],
    chosenIndex: 0,
    latentSources: {},
    errorBanner: null,
    needsNewSession: false,
    drawCount: 0,
    observedDiversity: 0,
    healthy: false,
  };
}

export class ChatStore {
  private state: UiState = initialState();
  private listeners: Array<(state: UiState) => void> = [];
  private drawTexts = new Set<string>();

  constructor(private readonly client: ApiClient) {}

  getState(): UiState {
    return this.state;
  }

  subscribe(listener: (state: UiState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  async checkHealth(): Promise<boolean> {
    try {
      const health = await this.client.health();
      this.update({ healthy: health.status === "ok", errorBanner: null });
    } catch (err) {
      this.update({ healthy: false, errorBanner: describe(err) });
    }
    return this.state.healthy;
  }

  /** POST /sessions; clears any previous transcript. */
  async startSession(): Promise<boolean> {
    if (this.state.pending) return false;
    this.update({ pending: true, errorBanner: null });
    try {
      const { id } = await this.client.createSession();
      this.drawTexts.clear();
      this.update({
        ...initialState(),
        healthy: this.state.healthy,
        controls: this.state.controls, // controls persist across sessions
        sessionId: id,
        pending: false,
      });
      return true;
    } catch (err) {
      this.update({ pending: false, errorBanner: describe(err) });
      return false;
    }
  }

  /** Controls apply to subsequent requests only; invalid values are rejected here. */
  setControls(partial: Partial<Controls>): void {
    const next = { ...this.state.controls, ...partial };
    if (!(next.temperature > 0)) {
      throw new ValidationError("temperature must be > 0");
    }
    if (!Number.isInteger(next.numCandidates) || next.numCandidates < 1 || next.numCandidates > 10) {
      throw new ValidationError("num_candidates must be an integer in [1, 10]");
    }
    if (next.latentMode !== "sample" && next.latentMode !== "mean") {
      throw new ValidationError("latent_mode must be 'sample' or 'mean'");
    }
    this.update({ controls: next });
  }

  /** Optimistic user bubble, then the model turn; transcript reconciles with the server. */
  async sendMessage(text: string): Promise<boolean> {
    if (this.state.pending) return false; // single-flight
    if (this.state.sessionId === null) {
      this.update({ errorBanner: "no session; start one first" });
      return false;
    }
    if (text.trim().length === 0) {
      throw new ValidationError("message text must be nonempty");
    }
    const sessionId = this.state.sessionId;
    const optimistic = [...this.state.transcript, { speaker: "user" as const, text }];
    this.update({ pending: true, errorBanner: null, transcript: optimistic });
    try {
      const result = await this.client.sendMessage(sessionId, {
        text,
        temperature: this.state.controls.temperature,
        num_candidates: this.state.controls.numCandidates,
        latent_mode: this.state.controls.latentMode,
      });
      const chosen = result.candidates[result.chosen_index];
      this.drawTexts = new Set([chosen.text]);
      this.update({
        candidates: result.candidates,
        chosenIndex: result.chosen_index,
        latentSources: result.latent_sources,
        drawCount: 1,
        observedDiversity: 1,
      });
      await this.reconcile();
      this.update({ pending: false });
      return true;
    } catch (err) {
      const rollback = this.state.transcript.slice(0, optimistic.length - 1);
      if (err instanceof ApiError && err.status === 404) {
        this.update({ pending: false, transcript: rollback, needsNewSession: true,
                      errorBanner: "session expired; start a new one" });
      } else {
        this.update({ pending: false, transcript: rollback, errorBanner: describe(err) });
      }
      return false;
    }
  }

  /** Regenerate the last model turn with fresh latent draws. */
  async resampleLast(): Promise<boolean> {
    if (this.state.pending) return false; // single-flight
    if (this.state.sessionId === null) return false;
    const last = this.state.transcript[this.state.transcript.length - 1];
    if (!last || last.speaker !== "model") {
      this.update({ errorBanner: "nothing to resample yet" });
      return false;
    }
    this.update({ pending: true, errorBanner: null });
    try {
      const result = await this.client.resample(this.state.sessionId, {
        temperature: this.state.controls.temperature,
        num_candidates: this.state.controls.numCandidates,
        latent_mode: this.state.controls.latentMode,
      });
      const chosen = result.candidates[result.chosen_index];
      this.drawTexts.add(chosen.text);
      this.update({
        candidates: result.candidates,
        chosenIndex: result.chosen_index,
        latentSources: result.latent_sources,
        drawCount: this.state.drawCount + 1,
        observedDiversity: this.drawTexts.size,
      });
      await this.reconcile();
      this.update({ pending: false });
      return true;
    } catch (err) {
      const conflict = err instanceof ApiError && err.status === 409;
      this.update({ pending: false, errorBanner: conflict ? null : describe(err) });
      return false;
    }
  }

  /** Transcript mirrors the server history after every successful call. */
  async reconcile(): Promise<void> {
    if (this.state.sessionId === null) return;
    const session = await this.client.getSession(this.state.sessionId);
    this.update({ transcript: session.history });
  }

  /** True when the resample button should be enabled. */
  canResample(): boolean {
    const last = this.state.transcript[this.state.transcript.length - 1];
    return !this.state.pending && !!last && last.speaker === "model";
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return String(err);
}
