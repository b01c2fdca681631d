// DOM rendering. Everything model-produced goes through textContent, never
// innerHTML, so output is never interpreted as markup. Per-token
// log-probabilities appear as bar heights (height proportional to the
// token's probability).

import type { Candidate, UiState } from "./types.js";

export interface Refs {
  transcript: HTMLElement;
  candidates: HTMLElement;
  banner: HTMLElement;
  drawCounter: HTMLElement;
  status: HTMLElement;
  sendButton: HTMLButtonElement;
  resampleButton: HTMLButtonElement;
  input: HTMLInputElement;
}

/** Badge label: "z_c:posterior", "z_p:prior", ... (mode kept as a tooltip). */
export function badgeLabels(sources: Record<string, string>): Array<{ label: string; detail: string }> {
  return Object.entries(sources).map(([name, source]) => ({
    label: `${name}:${source.split("_")[0]}`,
    detail: source,
  }));
}

/** Bar height in [2, 100] percent from a log-probability. */
export function barHeight(logprob: number): number {
  const p = Math.exp(logprob);
  return Math.max(2, Math.round(p * 100));
}

function renderCandidate(doc: Document, candidate: Candidate, index: number, chosen: number): HTMLElement {
  const row = doc.createElement("div");
  row.className = index === chosen ? "candidate chosen" : "candidate";

  const text = doc.createElement("span");
  text.className = "candidate-text";
  text.textContent = candidate.text === "" ? "(empty)" : candidate.text;
  row.appendChild(text);

  const bars = doc.createElement("span");
  bars.className = "bars";
  candidate.tokens.forEach((token, i) => {
    const bar = doc.createElement("span");
    bar.className = "bar";
    bar.style.height = `${barHeight(candidate.token_logprobs[i])}%`;
    bar.title = `${token}  logp ${candidate.token_logprobs[i].toFixed(3)}`;
    bars.appendChild(bar);
  });
  row.appendChild(bars);
  return row;
}

export function render(state: UiState, refs: Refs, doc: Document): void {
  refs.transcript.replaceChildren();
  for (const turn of state.transcript) {
    const bubble = doc.createElement("div");
    bubble.className = `bubble ${turn.speaker}`;
    bubble.textContent = turn.text;
    refs.transcript.appendChild(bubble);
  }

  refs.candidates.replaceChildren();
  if (state.candidates.length > 0) {
    const badges = doc.createElement("div");
    badges.className = "badges";
    for (const { label, detail } of badgeLabels(state.latentSources)) {
      const badge = doc.createElement("span");
      badge.className = "badge";
      badge.textContent = label;
      badge.title = detail;
      badges.appendChild(badge);
    }
    refs.candidates.appendChild(badges);
    state.candidates.forEach((candidate, i) => {
      refs.candidates.appendChild(renderCandidate(doc, candidate, i, state.chosenIndex));
    });
  }

  refs.banner.textContent = state.errorBanner ?? "";
  refs.banner.style.display = state.errorBanner ? "block" : "none";

  const deterministic = state.controls.latentMode === "mean" ? " (deterministic)" : "";
  refs.drawCounter.textContent =
    state.drawCount > 0
      ? `draw #${state.drawCount}, ${state.observedDiversity} distinct${deterministic}`
      : "";

  refs.status.textContent = state.healthy ? "service: ok" : "service: unreachable";
  refs.input.disabled = state.pending || !state.healthy || state.sessionId === null;
  refs.sendButton.disabled =
    state.pending || !state.healthy || state.sessionId === null || refs.input.value.trim() === "";
  refs.resampleButton.disabled = !(
    !state.pending &&
    state.transcript.length > 0 &&
    state.transcript[state.transcript.length - 1].speaker === "model"
  );
}
