// Live integration against a real service process on a toy checkpoint:
// trains a pocket model, starts the server, and drives the store through a
// 3-turn conversation with resampling and reconciliation.

import { ChildProcess, execSync, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { ChatStore, ValidationError } from "../src/store.js";

const PORT = 18490 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let workdir: string;

function corpusJsonl(): string {
  const words = ["hello", "there", "how", "are", "you", "fine", "thanks", "ok", "sure", "bye"];
  let seed = 12345;
  const rand = () => {
    seed = (seed * 1103515245 + 12345) % 2 ** 31;
    return seed / 2 ** 31;
  };
  const sentence = () =>
    Array.from({ length: 2 + Math.floor(rand() * 3) }, () => words[Math.floor(rand() * words.length)]).join(" ");
  const lines: string[] = [];
  for (let i = 0; i < 40; i++) {
    const utts = Array.from({ length: 4 + Math.floor(rand() * 3) }, sentence);
    lines.push(JSON.stringify({ dialog: utts }));
  }
  return lines.join("\n") + "\n";
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "csrr-ui-"));
  writeFileSync(join(workdir, "corpus.jsonl"), corpusJsonl());
  writeFileSync(
    join(workdir, "train.cfg"),
    [
      "learning_rate = 2e-3",
      "batch_size = 8",
      "kl_anneal_steps = 50",
      "max_steps = 80",
      "seed = 0",
      "checkpoint_every = 40",
      "hidden_dim = 16",
      "embed_dim = 12",
      "latent_dim = 6",
    ].join("\n") + "\n",
  );
  const run = (cmd: string) => execSync(cmd, { cwd: workdir, stdio: "pipe" });
  run(
    "python3 -m csrr.cli prepare --input corpus.jsonl --output-dir data " +
      "--seed 0 --vocab-size 60 --pad-length 10 --max-conv-length 8",
  );
  run("python3 -m csrr.cli train --data-dir data --config train.cfg --mode csrr");

  server = spawn(
    "python3",
    ["-m", "csrr.cli", "serve", "--checkpoint", "data/run_csrr/best.ckpt",
     "--host", "127.0.0.1", "--port", String(PORT)],
    { cwd: workdir, stdio: "ignore" },
  );
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not become healthy");
}, 180_000);

afterAll(() => {
  server?.kill();
});

describe("chat UI against the live service", () => {
  it("runs a 3-turn conversation with reconciliation, resample, and badges", async () => {
    const store = new ChatStore(new ApiClient(BASE));
    expect(await store.checkHealth()).toBe(true);
    expect(await store.startSession()).toBe(true);
    const sessionId = store.getState().sessionId!;
    expect(sessionId).toBeTruthy();

    store.setControls({ numCandidates: 3, latentMode: "sample", temperature: 1.0 });
    const client = new ApiClient(BASE);
    for (const [i, text] of ["hello there", "how are you", "fine thanks"].entries()) {
      expect(await store.sendMessage(text)).toBe(true);
      const state = store.getState();
      expect(state.transcript.length).toBe(2 * (i + 1));
      expect(state.transcript[2 * i]).toEqual({ speaker: "user", text });
      expect(state.transcript[2 * i + 1].speaker).toBe("model");
      // transcript reconciles with GET /sessions/{id}
      const server_side = await client.getSession(sessionId);
      expect(state.transcript).toEqual(server_side.history);
      expect(state.candidates.length).toBe(3);
    }

    // latent-source badges read (posterior, prior, prior)
    const sources = store.getState().latentSources;
    expect(sources.z_c.startsWith("posterior")).toBe(true);
    expect(sources.z_p.startsWith("prior")).toBe(true);
    expect(sources.z_r.startsWith("prior")).toBe(true);

    // resample replaces the last turn; history length is unchanged
    const before = store.getState().transcript;
    expect(store.canResample()).toBe(true);
    expect(await store.resampleLast()).toBe(true);
    const after = store.getState().transcript;
    expect(after.length).toBe(before.length);
    expect(after.slice(0, -1)).toEqual(before.slice(0, -1));
    expect(after[after.length - 1].speaker).toBe("model");
    expect(store.getState().drawCount).toBe(2);
    const reconciled = await client.getSession(sessionId);
    expect(after).toEqual(reconciled.history);

    // controls validation blocks temperature <= 0 client-side
    expect(() => store.setControls({ temperature: 0 })).toThrow(ValidationError);
    expect(() => store.setControls({ temperature: -1 })).toThrow(ValidationError);
  }, 120_000);

  it("mean-latent resampling is deterministic and flagged as such", async () => {
    const store = new ChatStore(new ApiClient(BASE));
    await store.checkHealth();
    await store.startSession();
    store.setControls({ latentMode: "mean" });
    await store.sendMessage("hello hello");
    const first = store.getState().transcript.at(-1)!.text;
    await store.resampleLast();
    const second = store.getState().transcript.at(-1)!.text;
    expect(second).toBe(first);
    expect(store.getState().observedDiversity).toBe(1);
  }, 120_000);

  it("server rejects invalid options that slip past the client", async () => {
    const client = new ApiClient(BASE);
    const { id } = await client.createSession();
    await expect(client.sendMessage(id, { text: "" })).rejects.toMatchObject({ status: 422 });
    await expect(client.sendMessage(id, { text: "x", temperature: -1 })).rejects.toMatchObject({
      status: 422,
      code: "validation_error",
    });
    await expect(client.getSession("does-not-exist")).rejects.toMatchObject({ status: 404 });
  }, 120_000);
});
