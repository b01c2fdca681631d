// Rendering: plain-text safety, badges, bar heights.

import { Window } from "happy-dom";
import { describe, expect, it } from "vitest";
import { Refs, badgeLabels, barHeight, render } from "../src/render.js";
import type { UiState } from "../src/types.js";

function makeDom(): { doc: Document; refs: Refs } {
  const window = new Window();
  const doc = window.document as unknown as Document;
  doc.body.innerHTML = `
    <div id="transcript"></div><div id="candidates"></div><div id="banner"></div>
    <span id="draw-counter"></span><span id="status"></span>
    <button id="send"></button><button id="resample"></button><input id="input">`;
  const grab = (id: string) => doc.getElementById(id) as HTMLElement;
  return {
    doc,
    refs: {
      transcript: grab("transcript"),
      candidates: grab("candidates"),
      banner: grab("banner"),
      drawCounter: grab("draw-counter"),
      status: grab("status"),
      sendButton: grab("send") as HTMLButtonElement,
      resampleButton: grab("resample") as HTMLButtonElement,
      input: grab("input") as HTMLInputElement,
    },
  };
}

function state(partial: Partial<UiState>): UiState {
  return {
    sessionId: "s0",
    transcript: [],
    pending: false,
    controls: { temperature: 1.0, numCandidates: 1, latentMode: "sample" },
    candidates: [],
    chosenIndex: 0,
    latentSources: {},
    errorBanner: null,
    needsNewSession: false,
    drawCount: 0,
    observedDiversity: 0,
    healthy: true,
    ...partial,
  };
}

describe("plain-text safety", () => {
  it("never interprets model output as markup", () => {
    const { doc, refs } = makeDom();
    const hostile = '<img src=x onerror="alert(1)"><b>bold</b>';
    render(state({ transcript: [{ speaker: "model", text: hostile }] }), refs, doc);
    expect(refs.transcript.querySelector("img")).toBeNull();
    expect(refs.transcript.querySelector("b")).toBeNull();
    expect(refs.transcript.textContent).toContain(hostile);
  });

  it("candidate texts are also inert", () => {
    const { doc, refs } = makeDom();
    render(
      state({
        candidates: [{ text: "<script>boom()</script>", tokens: ["x"], token_logprobs: [-1] }],
        latentSources: { z_c: "posterior_sample" },
      }),
      refs,
      doc,
    );
    expect(refs.candidates.querySelector("script")).toBeNull();
    expect(refs.candidates.textContent).toContain("<script>boom()</script>");
  });
});

describe("badges and bars", () => {
  it("derives posterior/prior badges from latent sources", () => {
    const labels = badgeLabels({
      z_c: "posterior_sample",
      z_p: "prior_sample",
      z_r: "prior_mean",
    });
    expect(labels.map((l) => l.label)).toEqual(["z_c:posterior", "z_p:prior", "z_r:prior"]);
  });

  it("bar height is proportional to token probability", () => {
    expect(barHeight(0)).toBe(100); // p = 1
    expect(barHeight(Math.log(0.5))).toBe(50);
    expect(barHeight(-50)).toBe(2); // floor keeps bars visible
  });

  it("renders one row per candidate and marks the chosen one", () => {
    const { doc, refs } = makeDom();
    const candidate = (text: string) => ({ text, tokens: [text], token_logprobs: [-0.5] });
    render(
      state({
        candidates: [candidate("a"), candidate("b"), candidate("c")],
        chosenIndex: 1,
        latentSources: { z_c: "posterior_sample" },
      }),
      refs,
      doc,
    );
    const rows = refs.candidates.querySelectorAll(".candidate");
    expect(rows).toHaveLength(3);
    expect(rows[1].className).toContain("chosen");
  });
});

describe("control states", () => {
  it("disables send while pending and resample without a model turn", () => {
    const { doc, refs } = makeDom();
    refs.input.value = "hello";
    render(state({ pending: true, transcript: [{ speaker: "user", text: "hi" }] }), refs, doc);
    expect(refs.sendButton.disabled).toBe(true);
    expect(refs.resampleButton.disabled).toBe(true);
    render(state({ transcript: [{ speaker: "user", text: "hi" }, { speaker: "model", text: "yo" }] }), refs, doc);
    expect(refs.sendButton.disabled).toBe(false);
    expect(refs.resampleButton.disabled).toBe(false);
  });

  it("shows the draw counter with a deterministic hint in mean mode", () => {
    const { doc, refs } = makeDom();
    render(
      state({
        drawCount: 3,
        observedDiversity: 2,
        controls: { temperature: 1.0, numCandidates: 1, latentMode: "mean" },
      }),
      refs,
      doc,
    );
    expect(refs.drawCounter.textContent).toBe("draw #3, 2 distinct (deterministic)");
  });
});
