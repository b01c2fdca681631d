// Wire types of the chat service JSON API.

export type Speaker = "user" | "model";
export type LatentMode = "sample" | "mean";

export interface Turn {
  speaker: Speaker;
  text: string;
}

export interface Candidate {
  text: string;
  tokens: string[];
  token_logprobs: number[];
}

export interface GenerateResponse {
  candidates: Candidate[];
  chosen_index: number;
  latent_sources: Record<string, string>;
}

export interface SessionHistory {
  id: string;
  history: Turn[];
}

export interface Health {
  status: string;
  checkpoint_hash: string;
}

export interface GenerateRequest {
  text?: string;
  temperature?: number;
  num_candidates?: number;
  latent_mode?: LatentMode;
  seed?: number;
}

export interface Controls {
  temperature: number;
  numCandidates: number;
  latentMode: LatentMode;
}

export interface UiState {
  sessionId: string | null;
  transcript: Turn[];
  pending: boolean;
  controls: Controls;
  candidates: Candidate[];
  chosenIndex: number;
  latentSources: Record<string, string>;
  errorBanner: string | null;
  needsNewSession: boolean;
  // resample bookkeeping for the current last model turn
  drawCount: number;
  observedDiversity: number;
  healthy: boolean;
}
