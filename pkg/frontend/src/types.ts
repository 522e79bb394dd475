// Wire types mirror the inference service schema exactly; the UI never
// computes scores itself.

export interface GenerateRequest {
  context: string;
  rho: number;
  lambda: number;
  direction_sentence?: string;
  n_candidates: number;
  seed?: number;
}

export interface Candidate {
  text: string;
  relevance: number;
  style_prob: number;
  score: number;
}

export interface GenerateResponse {
  candidates: Candidate[];
  model_id: string;
  timing_ms: number;
}

export interface ModelInfo {
  model_id: string;
  l: number;
  vocab_size: number;
  variant: string;
}

export interface ControlState {
  rho: number; // slider in [0, 1.5], step 0.05
  lambda: number; // slider in [0, 1], step 0.05
  directionSentence: string; // empty = random direction
  showCandidates: boolean;
  seed?: number; // optional fixed seed for reproducible turns
}

export interface ModelRevision {
  controls: ControlState;
  response: GenerateResponse;
}

export interface UserTurn {
  speaker: "user";
  text: string;
}

export interface ModelTurn {
  speaker: "model";
  context: string; // the exact context string sent to the service
  revisions: ModelRevision[]; // regeneration appends; earlier ones are kept
}

export type ChatTurn = UserTurn | ModelTurn;

export const RHO_MIN = 0;
export const RHO_MAX = 1.5;
export const RHO_STEP = 0.05;
export const LAMBDA_MIN = 0;
export const LAMBDA_MAX = 1;
export const LAMBDA_STEP = 0.05;

export function defaultControls(): ControlState {
  return { rho: 0.5, lambda: 0.5, directionSentence: "", showCandidates: false };
}

export function clampControls(controls: ControlState): ControlState {
  return {
    ...controls,
    rho: Math.min(RHO_MAX, Math.max(RHO_MIN, controls.rho)),
    lambda: Math.min(LAMBDA_MAX, Math.max(LAMBDA_MIN, controls.lambda)),
  };
}

export function modelTurnText(turn: ModelTurn): string {
  const revision = turn.revisions[turn.revisions.length - 1];
  return revision.response.candidates[0]?.text ?? "";
}
